//! Gauss-map expansion, convergents and the classical approximation bounds.

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::real::{ln_bigint, CertifiedReal, RealSource};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DigitSource {
    ExpandedFromReal,
    Prescribed,
}

/// Continued-fraction digits `a0; a1, a2, ...` with `a_k >= 1` for `k >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialQuotients {
    a0: BigInt,
    digits: Vec<BigUint>,
    source: DigitSource,
}

impl PartialQuotients {
    pub fn prescribed(a0: BigInt, digits: Vec<BigUint>) -> Result<Self> {
        if let Some(k) = digits.iter().position(|d| d.is_zero()) {
            return Err(Error::InvalidInput(format!("digit a_{} is zero", k + 1)));
        }
        Ok(PartialQuotients {
            a0,
            digits,
            source: DigitSource::Prescribed,
        })
    }

    pub fn from_u64(a0: i64, digits: &[u64]) -> Result<Self> {
        Self::prescribed(
            a0.into(),
            digits.iter().map(|&d| BigUint::from(d)).collect(),
        )
    }

    pub fn a0(&self) -> &BigInt {
        &self.a0
    }

    /// `a1, a2, ...`; index `k - 1` holds `a_k`.
    pub fn digits(&self) -> &[BigUint] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn source(&self) -> DigitSource {
        self.source
    }

    pub fn truncated(&self, n: usize) -> PartialQuotients {
        PartialQuotients {
            a0: self.a0.clone(),
            digits: self.digits[..n.min(self.digits.len())].to_vec(),
            source: self.source,
        }
    }

    /// An irrational with these leading digits: the digits are followed by
    /// an all-ones tail.
    pub fn value_with_golden_tail(&self, bits: u32) -> CertifiedReal {
        CertifiedReal::new(
            RealSource::DigitsGoldenTail {
                a0: self.a0.clone(),
                digits: self.digits.clone(),
            },
            bits,
        )
        .expect("golden tail enclosure")
    }

    /// Certified enclosure of every real whose expansion starts with these
    /// digits and whose next digit is at least `next_digit_min`: the value
    /// lies between `P_N/Q_N` and `(m P_N + P_{N-1})/(m Q_N + Q_{N-1})`.
    pub fn enclosure(&self, next_digit_min: &BigUint) -> CertifiedReal {
        let (p_prev, q_prev, p, q) = crate::real::last_two_convergents(&self.a0, &self.digits);
        let m = BigInt::from_biguint(Sign::Plus, next_digit_min.max(&BigUint::one()).clone());
        let end = BigRational::new(p.clone(), q.clone());
        let other = BigRational::new(&m * &p + p_prev, &m * &q + q_prev);
        let (lo, hi) = if end <= other {
            (end, other)
        } else {
            (other, end)
        };
        CertifiedReal::derived(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Convergent {
    pub n: usize,
    pub p: BigInt,
    pub q: BigInt,
}

/// Convergents `P_n / Q_n` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergentTable {
    entries: Vec<Convergent>,
}

impl ConvergentTable {
    pub fn entries(&self) -> &[Convergent] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest index `n` in the table.
    pub fn n_max(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn get(&self, n: usize) -> Option<&Convergent> {
        self.entries.get(n)
    }

    pub fn ratio(&self, n: usize) -> BigRational {
        let c = &self.entries[n];
        BigRational::new(c.p.clone(), c.q.clone())
    }

    /// `ln Q_n` to double precision, with its relative error bound.
    pub fn ln_q(&self, n: usize) -> (f64, f64) {
        let q = &self.entries[n].q;
        (ln_bigint(q), 4.0 * f64::EPSILON)
    }
}

/// One application of the Gauss map on an enclosure inside `(0, 1]`.
pub fn gauss_step(x: &CertifiedReal) -> Result<(BigUint, CertifiedReal)> {
    let (lo, hi) = (x.lo(), x.hi());
    if lo.is_zero() && hi.is_zero() {
        return Err(Error::RationalInput { terms: 0 });
    }
    if !lo.is_positive() || hi > &BigRational::one() {
        return Err(Error::AmbiguousDigit {
            precision_bits: x.precision_bits(),
        });
    }
    let r_lo = hi.recip();
    let r_hi = lo.recip();
    let digit = r_lo.floor();
    if r_hi.floor() != digit || (lo != hi && r_hi.is_integer()) {
        return Err(Error::AmbiguousDigit {
            precision_bits: x.precision_bits(),
        });
    }
    let next_lo = &r_lo - &digit;
    let next_hi = &r_hi - &digit;
    let digit = digit.to_integer().to_biguint().expect("positive digit");
    let next = if x.is_exact() {
        CertifiedReal::from_rational(next_lo)
    } else {
        CertifiedReal::derived(next_lo, next_hi)
    };
    Ok((digit, next))
}

#[derive(Debug, Clone, Copy)]
pub struct ExpandOptions {
    pub start_bits: u32,
    pub max_bits: u32,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        ExpandOptions {
            start_bits: 128,
            max_bits: 1 << 20,
        }
    }
}

/// Continued-fraction digits of `alpha`, refining its enclosure whenever a
/// digit cannot be decided.
pub fn expand(alpha: &CertifiedReal, n_terms: usize) -> Result<PartialQuotients> {
    expand_with(alpha, n_terms, ExpandOptions::default())
}

pub fn expand_with(
    alpha: &CertifiedReal,
    n_terms: usize,
    opts: ExpandOptions,
) -> Result<PartialQuotients> {
    if !alpha.can_refine() {
        return expand_once(alpha, n_terms).map_err(|e| match e {
            Error::AmbiguousDigit { precision_bits } => {
                Error::PrecisionExhausted { precision_bits }
            }
            other => other,
        });
    }
    let mut bits = opts
        .start_bits
        .max(alpha.precision_bits().min(opts.max_bits));
    loop {
        let x = alpha.refine(bits)?;
        match expand_once(&x, n_terms) {
            Err(Error::AmbiguousDigit { .. }) => {
                if bits >= opts.max_bits {
                    return Err(Error::PrecisionExhausted {
                        precision_bits: bits,
                    });
                }
                bits = bits.saturating_mul(2).min(opts.max_bits);
            }
            other => return other,
        }
    }
}

fn expand_once(x: &CertifiedReal, n_terms: usize) -> Result<PartialQuotients> {
    let a0 = x.lo().floor();
    if x.hi().floor() != a0 {
        return Err(Error::AmbiguousDigit {
            precision_bits: x.precision_bits(),
        });
    }
    let mut rest = if x.is_exact() {
        CertifiedReal::from_rational(x.lo() - &a0)
    } else {
        CertifiedReal::derived(x.lo() - &a0, x.hi() - &a0)
    };
    let mut digits = Vec::with_capacity(n_terms);
    while digits.len() < n_terms {
        match gauss_step(&rest) {
            Ok((d, next)) => {
                digits.push(d);
                rest = next;
            }
            Err(Error::RationalInput { .. }) => {
                return Err(Error::RationalInput {
                    terms: digits.len(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PartialQuotients {
        a0: a0.to_integer(),
        digits,
        source: DigitSource::ExpandedFromReal,
    })
}

/// Convergents by the three-term recurrence seeded with
/// `(P_{-1}, Q_{-1}) = (1, 0)` and `(P_0, Q_0) = (a0, 1)`.
pub fn convergents(pq: &PartialQuotients, n_max: usize) -> Result<ConvergentTable> {
    if pq.len() < n_max {
        return Err(Error::InsufficientTable {
            required: n_max,
            available: pq.len(),
        });
    }
    let mut entries = Vec::with_capacity(n_max + 1);
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    let (mut p, mut q) = (pq.a0.clone(), BigInt::one());
    entries.push(Convergent {
        n: 0,
        p: p.clone(),
        q: q.clone(),
    });
    for (k, a) in pq.digits[..n_max].iter().enumerate() {
        let a = BigInt::from_biguint(Sign::Plus, a.clone());
        let p_next = &a * &p + &p_prev;
        let q_next = &a * &q + &q_prev;
        p_prev = std::mem::replace(&mut p, p_next);
        q_prev = std::mem::replace(&mut q, q_next);
        entries.push(Convergent {
            n: k + 1,
            p: p.clone(),
            q: q.clone(),
        });
    }
    Ok(ConvergentTable { entries })
}

/// `[a0; a1, ..., an]` evaluated as an exact rational from the innermost
/// digit outward.
pub fn evaluate_truncated(pq: &PartialQuotients, n: usize) -> BigRational {
    let mut value: Option<BigRational> = None;
    for a in pq.digits[..n].iter().rev() {
        let a = BigRational::from_integer(BigInt::from_biguint(Sign::Plus, a.clone()));
        value = Some(match value {
            None => a,
            Some(v) => a + v.recip(),
        });
    }
    let a0 = BigRational::from_integer(pq.a0.clone());
    match value {
        None => a0,
        Some(v) => a0 + v.recip(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundCheck {
    pub n: usize,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

/// Checks `1/(2 Q_n Q_{n+1}) < |alpha - P_n/Q_n| < 1/(Q_n Q_{n+1})` for
/// every `n >= 1` with `n + 1` in the table.
pub fn check_approximation_bounds(
    alpha: &CertifiedReal,
    table: &ConvergentTable,
) -> Result<Vec<BoundCheck>> {
    let mut out = Vec::new();
    for n in 1..table.n_max() {
        let c = &table.entries[n];
        let q_next = &table.entries[n + 1].q;
        let target = BigRational::new(c.p.clone(), c.q.clone());
        let (d_lo, d_hi) = abs_distance(alpha, &target);
        let qq = BigRational::from_integer(&c.q * q_next);
        let upper = qq.recip();
        let lower = upper.clone() / BigRational::from_integer(2.into());
        let lower_ok = decide_less(&lower, &d_lo, &d_hi).ok_or(Error::Undecidable(n))?;
        let upper_ok = decide_greater(&upper, &d_lo, &d_hi).ok_or(Error::Undecidable(n))?;
        out.push(BoundCheck {
            n,
            lower_ok,
            upper_ok,
        });
    }
    Ok(out)
}

/// As [`check_approximation_bounds`], refining `alpha` while undecidable.
pub fn check_approximation_bounds_adaptive(
    alpha: &CertifiedReal,
    table: &ConvergentTable,
    max_bits: u32,
) -> Result<Vec<BoundCheck>> {
    let mut x = alpha.clone();
    loop {
        match check_approximation_bounds(&x, table) {
            Err(Error::Undecidable(n)) => {
                let bits = x.precision_bits().saturating_mul(2).max(128);
                if !x.can_refine() || bits > max_bits {
                    return Err(Error::Undecidable(n));
                }
                x = x.refine(bits)?;
            }
            other => return other,
        }
    }
}

fn abs_distance(alpha: &CertifiedReal, target: &BigRational) -> (BigRational, BigRational) {
    let a = alpha.lo() - target;
    let b = alpha.hi() - target;
    if !a.is_negative() {
        (a, b)
    } else if !b.is_positive() {
        (-b, -a)
    } else {
        (BigRational::zero(), std::cmp::max(-a, b))
    }
}

// Some(true) if bound < d for every d in [lo, hi], Some(false) if never.
fn decide_less(bound: &BigRational, lo: &BigRational, hi: &BigRational) -> Option<bool> {
    if bound < lo {
        Some(true)
    } else if bound >= hi {
        Some(false)
    } else {
        None
    }
}

fn decide_greater(bound: &BigRational, lo: &BigRational, hi: &BigRational) -> Option<bool> {
    if bound > hi {
        Some(true)
    } else if bound <= lo {
        Some(false)
    } else {
        None
    }
}

/// Certified check of `Q_n >= (1/2) ((sqrt 5 + 1)/2)^(n-1)` for `n >= 1`.
/// Returns `(n, holds)` per entry; an undecidable comparison is an error.
pub fn check_growth_bound(table: &ConvergentTable) -> Result<Vec<(usize, bool)>> {
    let n_max = table.n_max();
    let bits = 64 + 2 * n_max as u32;
    let g = CertifiedReal::golden_conjugate(bits);
    let one = BigRational::one();
    let phi_lo = g.lo() + &one;
    let phi_hi = g.hi() + &one;
    let half = BigRational::new(1.into(), 2.into());
    let mut pow_lo = one.clone();
    let mut pow_hi = one;
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        if n > 1 {
            pow_lo *= &phi_lo;
            pow_hi *= &phi_hi;
        }
        let q = BigRational::from_integer(table.entries[n].q.clone());
        if q >= &half * &pow_hi {
            out.push((n, true));
        } else if q < &half * &pow_lo {
            out.push((n, false));
        } else {
            return Err(Error::Undecidable(n));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct PartialQuotientsJson {
    a0: Box<RawValue>,
    digits: Vec<Box<RawValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergents: Option<Vec<(usize, String, String)>>,
}

fn raw_integer(s: String) -> Box<RawValue> {
    RawValue::from_string(s).expect("decimal integer is valid JSON")
}

/// `{"a0": int, "digits": [int], "convergents": [[n, "P", "Q"]]}`
pub fn to_json(pq: &PartialQuotients, table: Option<&ConvergentTable>) -> String {
    let doc = PartialQuotientsJson {
        a0: raw_integer(pq.a0.to_string()),
        digits: pq
            .digits
            .iter()
            .map(|d| raw_integer(d.to_string()))
            .collect(),
        convergents: table.map(|t| {
            t.entries
                .iter()
                .map(|c| (c.n, c.p.to_string(), c.q.to_string()))
                .collect()
        }),
    };
    serde_json::to_string(&doc).expect("serializable")
}

/// Small helper for callers holding digits that fit in machine words.
pub fn digits_u64(pq: &PartialQuotients) -> Option<Vec<u64>> {
    pq.digits.iter().map(|d| d.to_u64()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn gauss_step_unit_fraction() {
        let (d, next) = gauss_step(&CertifiedReal::from_rational(rat(1, 2))).unwrap();
        assert_eq!(d, BigUint::from(2u32));
        assert!(next.lo().is_zero() && next.is_exact());
    }

    #[test]
    fn gauss_step_golden_fixed_point() {
        let g = CertifiedReal::golden_conjugate(128);
        let (d, next) = gauss_step(&g).unwrap();
        assert_eq!(d, BigUint::from(1u32));
        assert!((next.midpoint_f64() - 0.618_033_988_749_894_8).abs() < 1e-15);
    }

    #[test]
    fn gauss_step_pi_fraction() {
        // 1/(pi - 3) = 7.0625133059...
        let x = CertifiedReal::new(RealSource::Shifted(Box::new(RealSource::Pi), 3.into()), 256)
            .unwrap();
        let (d, _) = gauss_step(&x).unwrap();
        assert_eq!(d, BigUint::from(7u32));
    }

    #[test]
    fn gauss_step_straddling_boundary_is_ambiguous() {
        let x = CertifiedReal::from_interval(rat(49, 100), rat(51, 100)).unwrap();
        assert!(matches!(gauss_step(&x), Err(Error::AmbiguousDigit { .. })));
        let x = CertifiedReal::from_interval(rat(0, 1), rat(1, 100)).unwrap();
        assert!(matches!(gauss_step(&x), Err(Error::AmbiguousDigit { .. })));
    }

    #[test]
    fn expand_golden_and_pi() {
        let g = CertifiedReal::golden_conjugate(64);
        let pq = expand(&g, 10).unwrap();
        assert_eq!(pq.a0(), &BigInt::zero());
        assert_eq!(digits_u64(&pq).unwrap(), vec![1; 10]);

        let pq = expand(&CertifiedReal::pi(64), 5).unwrap();
        assert_eq!(pq.a0(), &BigInt::from(3));
        assert_eq!(digits_u64(&pq).unwrap(), vec![7, 15, 1, 292, 1]);
        assert_eq!(pq.source(), DigitSource::ExpandedFromReal);
    }

    #[test]
    fn expand_rational_input() {
        let r = CertifiedReal::from_rational(rat(22, 7));
        assert_eq!(expand(&r, 5), Err(Error::RationalInput { terms: 1 }));
        let pq = expand(&r, 1).unwrap();
        assert_eq!(digits_u64(&pq).unwrap(), vec![7]);
        assert!(matches!(
            expand(&CertifiedReal::from_rational(rat(2, 1)), 1),
            Err(Error::RationalInput { terms: 0 })
        ));
    }

    #[test]
    fn expand_refines_past_start_precision() {
        // 300 digits of golden conjugate need far more than 128 bits
        let g = CertifiedReal::golden_conjugate(16);
        let pq = expand(&g, 300).unwrap();
        assert!(pq.digits().iter().all(|d| d == &BigUint::one()));
    }

    #[test]
    fn expand_fixed_interval_exhausts() {
        let x = CertifiedReal::from_interval(rat(61, 100), rat(62, 100)).unwrap();
        assert!(matches!(
            expand(&x, 20),
            Err(Error::PrecisionExhausted { .. })
        ));
        let opts = ExpandOptions {
            start_bits: 8,
            max_bits: 16,
        };
        assert!(matches!(
            expand_with(&CertifiedReal::pi(8), 30, opts),
            Err(Error::PrecisionExhausted { .. })
        ));
    }

    #[test]
    fn convergents_fibonacci_and_pi() {
        let pq = PartialQuotients::from_u64(0, &[1, 1, 1, 1, 1]).unwrap();
        let t = convergents(&pq, 5).unwrap();
        let pairs: Vec<(i64, i64)> = t
            .entries()
            .iter()
            .map(|c| (c.p.to_i64().unwrap(), c.q.to_i64().unwrap()))
            .collect();
        assert_eq!(pairs, vec![(0, 1), (1, 1), (1, 2), (2, 3), (3, 5), (5, 8)]);

        let pq = PartialQuotients::from_u64(3, &[7, 15, 1]).unwrap();
        let t = convergents(&pq, 3).unwrap();
        let fr: Vec<BigRational> = (0..=3).map(|n| t.ratio(n)).collect();
        assert_eq!(
            fr,
            vec![rat(3, 1), rat(22, 7), rat(333, 106), rat(355, 113)]
        );
        for n in 0..=3 {
            assert_eq!(evaluate_truncated(&pq, n), t.ratio(n));
        }
    }

    #[test]
    fn single_digit_convergent() {
        let pq = PartialQuotients::from_u64(0, &[9]).unwrap();
        assert_eq!(convergents(&pq, 1).unwrap().ratio(1), rat(1, 9));
        assert!(matches!(
            convergents(&pq, 2),
            Err(Error::InsufficientTable { .. })
        ));
        assert!(PartialQuotients::from_u64(0, &[1, 0]).is_err());
    }

    #[test]
    fn approximation_bounds_examples() {
        let g = CertifiedReal::golden_conjugate(128);
        let t = convergents(&expand(&g, 6).unwrap(), 6).unwrap();
        let checks = check_approximation_bounds(&g, &t).unwrap();
        assert!(checks.iter().all(|c| c.lower_ok && c.upper_ok));
        assert_eq!(
            checks
                .iter()
                .find(|c| c.n == 3)
                .map(|c| (c.lower_ok, c.upper_ok)),
            Some((true, true))
        );

        let pi = CertifiedReal::pi(128);
        let t = convergents(&expand(&pi, 4).unwrap(), 4).unwrap();
        let checks = check_approximation_bounds(&pi, &t).unwrap();
        assert_eq!(
            checks[0],
            BoundCheck {
                n: 1,
                lower_ok: true,
                upper_ok: true
            }
        );
    }

    #[test]
    fn approximation_bounds_undecidable_then_refined() {
        let pi = CertifiedReal::pi(128);
        let t = convergents(&expand(&pi, 40).unwrap(), 40).unwrap();
        let coarse = CertifiedReal::pi(20);
        assert!(matches!(
            check_approximation_bounds(&coarse, &t),
            Err(Error::Undecidable(_))
        ));
        let checks = check_approximation_bounds_adaptive(&coarse, &t, 1 << 12).unwrap();
        assert!(checks.iter().all(|c| c.lower_ok && c.upper_ok));
    }

    #[test]
    fn growth_bound_on_fibonacci_is_tight_but_holds() {
        let pq = PartialQuotients::from_u64(0, &[1; 60]).unwrap();
        let t = convergents(&pq, 60).unwrap();
        assert!(check_growth_bound(&t).unwrap().iter().all(|&(_, ok)| ok));
    }

    #[test]
    fn enclosure_brackets_the_golden_tail_value() {
        let pq = PartialQuotients::from_u64(0, &[2, 8, 3]).unwrap();
        let enc = pq.enclosure(&BigUint::one());
        let v = pq.value_with_golden_tail(128);
        assert!(enc.lo() <= v.lo() && v.hi() <= enc.hi());
    }

    #[test]
    fn json_layout() {
        let pq = PartialQuotients::from_u64(3, &[7, 15]).unwrap();
        let t = convergents(&pq, 2).unwrap();
        assert_eq!(
            to_json(&pq, Some(&t)),
            r#"{"a0":3,"digits":[7,15],"convergents":[[0,"3","1"],[1,"22","7"],[2,"333","106"]]}"#
        );
    }
}
