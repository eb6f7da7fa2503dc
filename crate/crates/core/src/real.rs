//! Certified real numbers as exact rational enclosures.
//!
//! A [`CertifiedReal`] is a closed interval `[lo, hi]` with rational endpoints
//! together with the [`RealSource`] it was computed from, so the enclosure
//! can be recomputed at a higher precision on demand. Constants are produced
//! in binary fixed point with every truncation bounded, which keeps all
//! endpoint arithmetic exact: no rounding mode games are needed.

use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Extra bits carried internally beyond the requested precision.
const GUARD_BITS: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum RealSource {
    /// An exact rational; every precision yields a degenerate interval.
    Rational(BigRational),
    /// A fixed enclosure that cannot be refined beyond its own width.
    Interval {
        lo: BigRational,
        hi: BigRational,
    },
    Pi,
    E,
    /// `(sqrt(5) - 1) / 2`
    GoldenConjugate,
    /// `source - shift`
    Shifted(Box<RealSource>, BigInt),
    /// `[a0; a1, ..., aN, 1, 1, 1, ...]`: prescribed digits followed by a
    /// golden-ratio tail, so the value is irrational with a known expansion.
    DigitsGoldenTail {
        a0: BigInt,
        digits: Vec<BigUint>,
    },
}

#[derive(Debug, Clone)]
pub struct CertifiedReal {
    source: Arc<RealSource>,
    lo: BigRational,
    hi: BigRational,
    precision_bits: u32,
}

impl PartialEq for CertifiedReal {
    fn eq(&self, other: &Self) -> bool {
        self.lo == other.lo && self.hi == other.hi
    }
}

impl CertifiedReal {
    pub fn new(source: RealSource, precision_bits: u32) -> Result<Self> {
        let source = Arc::new(source);
        let (lo, hi) = enclose(&source, precision_bits)?;
        Ok(CertifiedReal {
            source,
            lo,
            hi,
            precision_bits,
        })
    }

    pub fn from_rational(value: BigRational) -> Self {
        CertifiedReal {
            source: Arc::new(RealSource::Rational(value.clone())),
            lo: value.clone(),
            hi: value,
            precision_bits: u32::MAX,
        }
    }

    /// A fixed interval; its precision is derived from its width.
    pub fn from_interval(lo: BigRational, hi: BigRational) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidInput(
                "interval endpoints out of order".into(),
            ));
        }
        let bits = precision_of(&lo, &hi);
        Ok(CertifiedReal {
            source: Arc::new(RealSource::Interval {
                lo: lo.clone(),
                hi: hi.clone(),
            }),
            lo,
            hi,
            precision_bits: bits,
        })
    }

    /// An interval produced by arithmetic on another real; it inherits no
    /// refinable source.
    pub(crate) fn derived(lo: BigRational, hi: BigRational) -> Self {
        let bits = precision_of(&lo, &hi);
        CertifiedReal {
            source: Arc::new(RealSource::Interval {
                lo: lo.clone(),
                hi: hi.clone(),
            }),
            lo,
            hi,
            precision_bits: bits,
        }
    }

    pub fn pi(bits: u32) -> Self {
        Self::new(RealSource::Pi, bits).expect("pi enclosure")
    }

    pub fn e(bits: u32) -> Self {
        Self::new(RealSource::E, bits).expect("e enclosure")
    }

    pub fn golden_conjugate(bits: u32) -> Self {
        Self::new(RealSource::GoldenConjugate, bits).expect("golden enclosure")
    }

    pub fn lo(&self) -> &BigRational {
        &self.lo
    }

    pub fn hi(&self) -> &BigRational {
        &self.hi
    }

    pub fn source(&self) -> &RealSource {
        &self.source
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn midpoint_f64(&self) -> f64 {
        rational_to_f64(&((&self.lo + &self.hi) / BigRational::from_integer(2.into())))
    }

    pub fn contains(&self, x: &BigRational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    /// Recomputes the enclosure at `bits` of precision.
    pub fn refine(&self, bits: u32) -> Result<Self> {
        if bits <= self.precision_bits {
            return Ok(self.clone());
        }
        match &*self.source {
            RealSource::Interval { .. } => Err(Error::PrecisionExhausted {
                precision_bits: self.precision_bits,
            }),
            _ => {
                let (lo, hi) = enclose(&self.source, bits)?;
                Ok(CertifiedReal {
                    source: self.source.clone(),
                    lo,
                    hi,
                    precision_bits: bits,
                })
            }
        }
    }

    pub fn can_refine(&self) -> bool {
        !matches!(&*self.source, RealSource::Interval { .. })
    }
}

/// Precision in bits implied by an interval: `width <= 2^-bits * max(1, |v|)`.
pub fn precision_of(lo: &BigRational, hi: &BigRational) -> u32 {
    let width = hi - lo;
    if width.is_zero() {
        return u32::MAX;
    }
    let scale = std::cmp::max(lo.abs(), hi.abs()).max(BigRational::one());
    let ratio = width / scale;
    // floor(-log2(ratio)) computed exactly
    let mut bits = (ratio.denom().bits() as i64) - (ratio.numer().bits() as i64) - 1;
    while bits > 0 && ratio > BigRational::new(BigInt::one(), BigInt::one() << bits as u32) {
        bits -= 1;
    }
    bits.max(0) as u32
}

fn dyadic(m: BigInt, bits: u32) -> BigRational {
    BigRational::new(m, BigInt::one() << bits)
}

fn enclose(source: &RealSource, bits: u32) -> Result<(BigRational, BigRational)> {
    let p = bits + GUARD_BITS;
    match source {
        RealSource::Rational(r) => Ok((r.clone(), r.clone())),
        RealSource::Interval { lo, hi } => Ok((lo.clone(), hi.clone())),
        RealSource::Pi => {
            // |pi| < 4, one integer bit of slack is enough
            let (lo, hi) = pi_fixed(p + 2);
            Ok((dyadic(lo, p + 2), dyadic(hi, p + 2)))
        }
        RealSource::E => {
            let (lo, hi) = exp_fixed(&BigInt::one(), 0, p + 2);
            Ok((dyadic(lo, p + 2), dyadic(hi, p + 2)))
        }
        RealSource::GoldenConjugate => {
            let (lo, hi) = golden_conjugate_fixed(p);
            Ok((dyadic(lo, p), dyadic(hi, p)))
        }
        RealSource::Shifted(inner, shift) => {
            let (lo, hi) = enclose(inner, bits)?;
            let s = BigRational::from_integer(shift.clone());
            Ok((lo - &s, hi - s))
        }
        RealSource::DigitsGoldenTail { a0, digits } => {
            // x = (P_N t + P_{N-1}) / (Q_N t + Q_{N-1}), t = 1 + golden conjugate
            let (p_prev, q_prev, p_last, q_last) = last_two_convergents(a0, digits);
            let extra = 2 * q_last.bits() as u32 + 4;
            let (glo, ghi) = golden_conjugate_fixed(p + extra);
            let one = BigRational::one();
            let t_lo = dyadic(glo, p + extra) + &one;
            let t_hi = dyadic(ghi, p + extra) + &one;
            let mobius = |t: &BigRational| {
                let num = BigRational::from_integer(p_last.clone()) * t
                    + BigRational::from_integer(p_prev.clone());
                let den = BigRational::from_integer(q_last.clone()) * t
                    + BigRational::from_integer(q_prev.clone());
                num / den
            };
            let a = mobius(&t_lo);
            let b = mobius(&t_hi);
            Ok(if a <= b { (a, b) } else { (b, a) })
        }
    }
}

/// `(P_{N-1}, Q_{N-1}, P_N, Q_N)` for the finite fraction `[a0; digits]`.
pub(crate) fn last_two_convergents(
    a0: &BigInt,
    digits: &[BigUint],
) -> (BigInt, BigInt, BigInt, BigInt) {
    let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
    let (mut p, mut q) = (a0.clone(), BigInt::one());
    for a in digits {
        let a = BigInt::from_biguint(Sign::Plus, a.clone());
        let p_next = &a * &p + &p_prev;
        let q_next = &a * &q + &q_prev;
        p_prev = std::mem::replace(&mut p, p_next);
        q_prev = std::mem::replace(&mut q, q_next);
    }
    (p_prev, q_prev, p, q)
}

/// Bracket `[lo, hi] / 2^p` around `(sqrt(5) - 1) / 2`.
fn golden_conjugate_fixed(p: u32) -> (BigInt, BigInt) {
    // s = floor(sqrt(5) * 2^p) so sqrt(5) in [s, s + 1] / 2^p
    let five = BigUint::from(5u32) << (2 * p as usize);
    let s = BigInt::from_biguint(Sign::Plus, five.sqrt());
    let one = BigInt::one() << p;
    let lo = (&s - &one) >> 1u32;
    let hi = (&s + 1 - &one + 1) >> 1u32;
    (lo, hi)
}

/// `atan(1/x) * 2^p` bracketed, via the alternating Taylor series.
fn atan_inv_fixed(x: u64, p: u32) -> (BigInt, BigInt) {
    let scale = BigInt::one() << p;
    let x2 = BigInt::from(x) * BigInt::from(x);
    let mut power = &scale / BigInt::from(x); // floor(2^p / x^(2k+1))
    let mut sum = BigInt::zero();
    let mut k: u64 = 0;
    let mut terms: u64 = 0;
    while !power.is_zero() {
        let term = &power / BigInt::from(2 * k + 1);
        if k.is_multiple_of(2) {
            sum += &term;
        } else {
            sum -= &term;
        }
        power /= &x2;
        k += 1;
        terms += 1;
    }
    // each floor loses < 1 unit twice per term; the dropped tail is < 1 unit
    let slack = BigInt::from(2 * terms + 2);
    (&sum - &slack, &sum + &slack)
}

/// Bracket `[lo, hi] / 2^p` around pi, by Machin's formula.
fn pi_fixed(p: u32) -> (BigInt, BigInt) {
    let q = p + 8;
    let (a_lo, a_hi) = atan_inv_fixed(5, q);
    let (b_lo, b_hi) = atan_inv_fixed(239, q);
    let lo = BigInt::from(16) * a_lo - BigInt::from(4) * b_hi;
    let hi = BigInt::from(16) * a_hi - BigInt::from(4) * b_lo;
    (lo >> 8u32, (hi >> 8u32) + 1)
}

/// Bracket `[lo, hi] / 2^p` around `exp(num / 2^frac_bits)` for `0 <= num / 2^frac_bits <= 1`.
fn exp_unit_fixed(num: &BigInt, frac_bits: u32, p: u32) -> (BigInt, BigInt) {
    let scale = BigInt::one() << p;
    // x as a p-bit fixed point number, bracketed
    let (x_lo, x_hi) = if frac_bits <= p {
        let x = num << (p - frac_bits);
        (x.clone(), x)
    } else {
        let sh = frac_bits - p;
        let lo = num >> sh;
        let hi = if (&lo << sh) == *num {
            lo.clone()
        } else {
            &lo + 1
        };
        (lo, hi)
    };
    let mut lo_sum = scale.clone();
    let mut hi_sum = scale.clone();
    let mut lo_term = scale.clone();
    let mut hi_term = scale.clone();
    let mut k: u64 = 1;
    loop {
        lo_term = (&lo_term * &x_lo) / (&scale * BigInt::from(k));
        let (q, r) = (&hi_term * &x_hi).div_rem(&(&scale * BigInt::from(k)));
        hi_term = if r.is_zero() { q } else { q + 1 };
        lo_sum += &lo_term;
        hi_sum += &hi_term;
        if hi_term <= BigInt::one() {
            break;
        }
        k += 1;
    }
    // remaining tail: sum_{j>k} x^j/j! <= 2 * x^k/k! for x <= 1, k >= 1
    hi_sum += BigInt::from(2) * hi_term + 1;
    (lo_sum, hi_sum)
}

/// Bracket `[lo, hi] / 2^p` around `exp(n + f)` where `f = num / 2^frac_bits`
/// lies in `[0, 1]` and `n >= 0`. Callers pick `p` large enough for the
/// magnitude of the result.
fn exp_fixed(num: &BigInt, frac_bits: u32, p: u32) -> (BigInt, BigInt) {
    let one = BigInt::one() << frac_bits;
    let n = num / &one;
    let f = num - &n * &one;
    let n = n.to_u64().expect("exponent fits in u64");
    let q = p + 8 + 64 - (n.max(1)).leading_zeros();
    let (f_lo, f_hi) = exp_unit_fixed(&f, frac_bits, q);
    if n == 0 {
        return (f_lo >> (q - p), (f_hi >> (q - p)) + 1);
    }
    let (e_lo, e_hi) = exp_unit_fixed(&BigInt::one(), 0, q);
    let (pe_lo, pe_hi) = pow_fixed(&e_lo, &e_hi, n, q);
    let lo = (pe_lo * f_lo) >> q;
    let hi = ((pe_hi * f_hi) >> q) + 1;
    (lo >> (q - p), (hi >> (q - p)) + 1)
}

/// Bracket of `([lo, hi] / 2^q)^n` in q-bit fixed point.
fn pow_fixed(lo: &BigInt, hi: &BigInt, n: u64, q: u32) -> (BigInt, BigInt) {
    let mut r_lo = BigInt::one() << q;
    let mut r_hi = r_lo.clone();
    let mut b_lo = lo.clone();
    let mut b_hi = hi.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            r_lo = (&r_lo * &b_lo) >> q;
            r_hi = ((&r_hi * &b_hi) >> q) + 1;
        }
        e >>= 1;
        if e > 0 {
            b_lo = (&b_lo * &b_lo) >> q;
            b_hi = ((&b_hi * &b_hi) >> q) + 1;
        }
    }
    (r_lo, r_hi)
}

/// Enclosure of `exp(x)` for a rational interval `[x_lo, x_hi]` with
/// `x_lo >= 0`, with relative width about `2^-bits`.
pub fn exp_enclosure(
    x_lo: &BigRational,
    x_hi: &BigRational,
    bits: u32,
) -> (BigRational, BigRational) {
    assert!(
        !x_lo.is_negative(),
        "exp_enclosure expects a nonnegative argument"
    );
    // magnitude of the result in bits, used to size the fixed point scale
    let mag =
        x_hi.ceil().to_integer().to_u64().unwrap_or(u64::MAX / 4) as f64 * std::f64::consts::LOG2_E;
    let p = bits + GUARD_BITS + mag.ceil() as u32;
    let frac = p + 8;
    let lo_num = (x_lo * BigRational::from_integer(BigInt::one() << frac))
        .floor()
        .to_integer();
    let hi_num = (x_hi * BigRational::from_integer(BigInt::one() << frac))
        .ceil()
        .to_integer();
    let (lo, _) = exp_fixed(&lo_num, frac, p);
    let (_, hi) = exp_fixed(&hi_num, frac, p);
    (dyadic(lo, p), dyadic(hi, p))
}

/// Closest `f64` to a rational.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Natural log of a positive big integer, to about double precision.
pub fn ln_biguint(n: &BigUint) -> f64 {
    assert!(!n.is_zero(), "ln of zero");
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().unwrap().ln();
    }
    let shift = bits - 64;
    let top = (n >> shift as usize).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

pub fn ln_bigint(n: &BigInt) -> f64 {
    ln_biguint(n.magnitude())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn pi_enclosure_contains_known_digits() {
        let pi = CertifiedReal::pi(200);
        // 3.14159265358979323846264338327950288 bracketed by 35-digit rationals
        let below = BigRational::new(
            "314159265358979323846264338327950288".parse().unwrap(),
            BigInt::from(10).pow(35),
        );
        let above = &below + BigRational::new(1.into(), BigInt::from(10).pow(35));
        assert!(pi.lo() > &below && pi.hi() < &above);
        assert!(pi.width() <= BigRational::new(1.into(), BigInt::one() << 199));
    }

    #[test]
    fn e_and_golden_enclosures() {
        let e = CertifiedReal::e(128);
        assert!(e.lo() > &r(2718281828, 1_000_000_000) && e.hi() < &r(2718281829, 1_000_000_000));
        let g = CertifiedReal::golden_conjugate(128);
        // g^2 + g = 1
        let check_lo = g.lo() * g.lo() + g.lo();
        let check_hi = g.hi() * g.hi() + g.hi();
        assert!(check_lo <= BigRational::one() && check_hi >= BigRational::one());
        assert!(precision_of(g.lo(), g.hi()) >= 128);
    }

    #[test]
    fn refinement_narrows() {
        let pi = CertifiedReal::pi(64);
        let finer = pi.refine(256).unwrap();
        assert!(finer.width() < pi.width());
        assert!(finer.lo() >= pi.lo() || finer.hi() <= pi.hi());
        let fixed = CertifiedReal::from_interval(r(1, 3), r(1, 2)).unwrap();
        assert!(matches!(
            fixed.refine(100),
            Err(Error::PrecisionExhausted { .. })
        ));
    }

    #[test]
    fn exp_enclosure_integer_arguments() {
        let (lo, hi) = exp_enclosure(&r(17, 1), &r(17, 1), 64);
        // e^17 = 24154952.7535753...
        assert!(lo > r(241549527535, 10000) && hi < r(241549527536, 10000));
        let (lo, hi) = exp_enclosure(&r(0, 1), &r(0, 1), 64);
        assert!(lo <= BigRational::one() && hi >= BigRational::one());
        let (lo, hi) = exp_enclosure(&r(1, 2), &r(1, 2), 64);
        // e^0.5 = 1.6487212707001282
        assert!(lo > r(16487212707, 10_000_000_000) && hi < r(16487212708, 10_000_000_000));
    }

    #[test]
    fn digits_with_golden_tail() {
        let x = CertifiedReal::new(
            RealSource::DigitsGoldenTail {
                a0: 0.into(),
                digits: vec![],
            },
            100,
        )
        .unwrap();
        // [0; 1, 1, 1, ...] is the golden conjugate
        let g = CertifiedReal::golden_conjugate(100);
        assert!(x.lo() <= g.hi() && g.lo() <= x.hi());
    }

    #[test]
    fn rational_conversion_and_logs() {
        assert_eq!(rational_to_f64(&r(1, 3)), 1.0 / 3.0);
        assert_eq!(rational_to_f64(&r(-22, 7)), -22.0 / 7.0);
        let big = BigUint::one() << 5000usize;
        assert!((ln_biguint(&big) - 5000.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(ln_biguint(&BigUint::from(1u32)), 0.0);
    }
}
