//! Irrationals with prescribed partial-quotient growth.
//!
//! A [`GrowthRule`] produces digits `a_{n+1}` from the denominators already
//! built. [`build`] materializes the digits and exact convergents while they
//! fit in a size budget and carries `ln Q_n` further by the log-space
//! recurrence
//!
//! `ln Q_{n+1} = ln a_{n+1} + ln Q_n + ln(1 + Q_{n-1} / (a_{n+1} Q_n))`
//!
//! using [`Tower`] values, so witnesses whose digits grow like `e^{Q_n}` or
//! `e^{e^{Q_n}}` can be followed for dozens of steps. The log-space table is
//! computed from `n = 0` onward even where exact values exist; the overlap is
//! what cross-validates the two representations.

use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::contfrac::{convergents, ConvergentTable, PartialQuotients};
use crate::error::{Error, Result};
use crate::real::{exp_enclosure, ln_biguint};
use crate::tower::Tower;

/// Digit rule for `a_{n+1}` given `Q_0, ..., Q_n`.
pub type CustomDigitFn = Arc<dyn Fn(&[BigInt]) -> BigUint + Send + Sync>;

#[derive(Clone)]
pub enum GrowthKind {
    /// `a_n = c`
    Constant(u64),
    /// `a_n = n^d`
    Polynomial(u32),
    /// `a_{n+1} = ceil(e^{Q_n})`
    ExpOfQ,
    /// `a_{n+1} = ceil(e^{e^{Q_n}})`
    ExpExpOfQ,
    /// Exact-only rule; no log-space continuation.
    Custom(CustomDigitFn),
}

impl fmt::Debug for GrowthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthKind::Constant(c) => write!(f, "Constant({c})"),
            GrowthKind::Polynomial(d) => write!(f, "Polynomial({d})"),
            GrowthKind::ExpOfQ => write!(f, "ExpOfQ"),
            GrowthKind::ExpExpOfQ => write!(f, "ExpExpOfQ"),
            GrowthKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrowthRule {
    pub kind: GrowthKind,
    /// Explicit `a_1, a_2, ...` used before the rule takes over.
    pub seed_digits: Vec<u64>,
}

impl GrowthRule {
    pub fn new(kind: GrowthKind, seed_digits: Vec<u64>) -> Result<Self> {
        if seed_digits.contains(&0) {
            return Err(Error::InvalidInput("seed digits must be positive".into()));
        }
        if let GrowthKind::Constant(0) = kind {
            return Err(Error::InvalidInput(
                "constant digit must be positive".into(),
            ));
        }
        Ok(GrowthRule { kind, seed_digits })
    }

    /// All digits equal to one: the golden-ratio conjugate.
    pub fn golden() -> Self {
        GrowthRule {
            kind: GrowthKind::Constant(1),
            seed_digits: vec![],
        }
    }

    /// Non-Brjuno witness `a_{n+1} = ceil(e^{Q_n})` seeded with `a_1 = 4`,
    /// so that `Q_2 = 221`.
    pub fn nonbrjuno_exp() -> Self {
        GrowthRule {
            kind: GrowthKind::ExpOfQ,
            seed_digits: vec![4],
        }
    }

    /// Non-Perez-Marco witness `a_{n+1} = ceil(e^{e^{Q_n}})` seeded with `a_1 = 2`.
    pub fn nonpm_expexp() -> Self {
        GrowthRule {
            kind: GrowthKind::ExpExpOfQ,
            seed_digits: vec![2],
        }
    }

    fn supports_log_space(&self) -> bool {
        !matches!(self.kind, GrowthKind::Custom(_))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Largest number of decimal digits allowed for an exact `a_n` or `Q_n`.
    pub max_exact_digits: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_exact_digits: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogEntry {
    pub n: usize,
    /// `ln Q_n`
    pub ln_q: Tower,
    /// `Q_n` as used by the recurrence: the exact value rounded to a float
    /// where known, `exp(ln_q)` otherwise.
    #[serde(skip)]
    pub q: Tower,
    /// Relative error bound on the top-level float of `ln_q`.
    pub rel_err: f64,
}

impl LogEntry {
    /// `ln Q_n` as a float, if in range.
    pub fn l(&self) -> Option<f64> {
        self.ln_q.fits_f64().then(|| self.ln_q.to_f64())
    }

    /// `ln ln Q_n` as a float, if in range and `Q_n > 1`.
    pub fn ll(&self) -> Option<f64> {
        let v = self.ln_q.ln();
        v.fits_f64().then(|| v.to_f64())
    }
}

/// `ln Q_n` for `n = 0..=n_max`, carried in iterated-log form.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpaceTable {
    entries: Vec<LogEntry>,
}

impl LogSpaceTable {
    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn n_max(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn get(&self, n: usize) -> Option<&LogEntry> {
        self.entries.get(n)
    }

    /// `[{"n":int,"lnQ":float,"lnlnQ":float,"rel_err":float}]`; values out
    /// of float range are `null` and the entry then also carries its
    /// iterated-log form under `"lnQ_tower"`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            n: usize,
            #[serde(rename = "lnQ")]
            ln_q: Option<f64>,
            #[serde(rename = "lnlnQ")]
            ln_ln_q: Option<f64>,
            rel_err: f64,
            #[serde(rename = "lnQ_tower", skip_serializing_if = "Option::is_none")]
            tower: Option<(u32, f64)>,
        }
        let rows: Vec<Row> = self
            .entries
            .iter()
            .map(|e| Row {
                n: e.n,
                ln_q: e.l(),
                ln_ln_q: e.ll().filter(|v| v.is_finite()),
                rel_err: e.rel_err,
                tower: if e.l().is_none() {
                    Some((e.ln_q.height(), e.ln_q.top()))
                } else {
                    None
                },
            })
            .collect();
        serde_json::to_string(&rows).expect("serializable")
    }
}

/// A constructed irrational: materialized digits, exact convergents for
/// that prefix and the log-space table up to the requested length.
#[derive(Debug, Clone)]
pub struct Witness {
    pub rule: GrowthRule,
    pub digits: PartialQuotients,
    pub exact: ConvergentTable,
    pub log: LogSpaceTable,
}

impl Witness {
    /// Number of digits known exactly.
    pub fn exact_len(&self) -> usize {
        self.digits.len()
    }
}

/// Log-space value with a relative error bound on its top-level float.
#[derive(Debug, Clone, Copy)]
struct Tracked {
    value: Tower,
    rel: f64,
}

const EPS: f64 = f64::EPSILON;

impl Tracked {
    fn exact_f64(v: f64) -> Self {
        Tracked {
            value: Tower::from_f64(v),
            rel: EPS,
        }
    }

    fn exp(self) -> Self {
        let out = self.value.exp();
        let rel = if out.height() == 0 {
            // d(e^x)/e^x = dx = |x| rel
            self.value.to_f64().abs() * self.rel + EPS
        } else {
            self.rel
        };
        Tracked { value: out, rel }
    }

    fn add(self, other: Tracked) -> Self {
        Tracked {
            value: self.value + other.value,
            rel: self.rel.max(other.rel) + EPS,
        }
    }
}

/// Builds a witness with `n_terms` digits.
pub fn build(rule: &GrowthRule, n_terms: usize) -> Result<Witness> {
    build_with(rule, n_terms, BuildOptions::default())
}

pub fn build_with(rule: &GrowthRule, n_terms: usize, opts: BuildOptions) -> Result<Witness> {
    if n_terms == 0 {
        return Err(Error::InvalidInput("n_terms must be at least 1".into()));
    }
    let max_bits = (opts.max_exact_digits as f64 * std::f64::consts::LOG2_10) as u64;

    // exact phase
    let mut digits: Vec<BigUint> = Vec::new();
    let mut qs: Vec<BigInt> = vec![BigInt::one()];
    let mut q_prev = BigInt::zero();
    while digits.len() < n_terms {
        let k = digits.len(); // computing a_{k+1}
        let next = match rule.seed_digits.get(k) {
            Some(&d) => Some(BigUint::from(d)),
            None => exact_digit(rule, &qs, k + 1, max_bits)?,
        };
        let Some(a) = next else { break };
        let q = qs.last().unwrap().clone();
        let q_next = BigInt::from_biguint(Sign::Plus, a.clone()) * &q + &q_prev;
        if q_next.bits() > max_bits {
            break;
        }
        digits.push(a);
        q_prev = q;
        qs.push(q_next);
    }
    let pq = PartialQuotients::prescribed(BigInt::zero(), digits.clone())?;
    let exact = convergents(&pq, pq.len())?;

    // log-space phase, from n = 0
    let last = if rule.supports_log_space() {
        n_terms
    } else {
        pq.len()
    };
    let mut entries = Vec::with_capacity(last + 1);
    let mut l_prev = Tracked {
        value: Tower::neg_infinity(),
        rel: 0.0,
    }; // ln Q_{-1} = ln 0
    let mut l = Tracked::exact_f64(0.0); // ln Q_0
    entries.push(LogEntry {
        n: 0,
        ln_q: l.value,
        q: Tower::ONE,
        rel_err: l.rel,
    });
    for n in 0..last {
        // Q_n exactly when materialized, so that ln a_{n+1} = Q_n below is
        // the same float a caller will divide by
        let q_n = match qs.get(n) {
            Some(q) => Tracked {
                value: Tower::from_f64(q.to_f64().unwrap_or(f64::INFINITY)),
                rel: EPS,
            },
            None => l.exp(),
        };
        let q_n = if q_n.value.fits_f64() { q_n } else { l.exp() };
        entries[n].q = q_n.value;
        let ln_a = match digits.get(n) {
            Some(a) => Tracked::exact_f64(ln_biguint(a)),
            None => log_digit(rule, n + 1, q_n)?,
        };
        // ln(1 + Q_{n-1} / (a Q_n))
        let ratio = (l_prev.value - (ln_a.value + l.value)).exp().to_f64();
        let corr = Tracked::exact_f64(ratio.ln_1p());
        let next = ln_a.add(l).add(corr);
        if next.value < l.value || next.value.top().is_nan() {
            return Err(Error::OverflowEvenInLogSpace(n + 1));
        }
        l_prev = l;
        l = next;
        entries.push(LogEntry {
            n: n + 1,
            ln_q: l.value,
            q: l.exp().value,
            rel_err: l.rel,
        });
    }
    if let Some(q) = qs.get(last) {
        if let Some(v) = q.to_f64().filter(|v| v.is_finite()) {
            entries[last].q = Tower::from_f64(v);
        }
    }

    Ok(Witness {
        rule: rule.clone(),
        digits: pq,
        exact,
        log: LogSpaceTable { entries },
    })
}

/// `a_n` from the rule, or `None` once it exceeds the exact budget.
fn exact_digit(
    rule: &GrowthRule,
    qs: &[BigInt],
    n: usize,
    max_bits: u64,
) -> Result<Option<BigUint>> {
    let q = qs.last().unwrap();
    Ok(match &rule.kind {
        GrowthKind::Constant(c) => Some(BigUint::from(*c)),
        GrowthKind::Polynomial(d) => Some(BigUint::from(n as u64).pow(*d).max(BigUint::one())),
        GrowthKind::Custom(f) => {
            let a = f(qs);
            if a.is_zero() {
                return Err(Error::InvalidInput(format!(
                    "custom rule produced a_{n} = 0"
                )));
            }
            Some(a)
        }
        GrowthKind::ExpOfQ => {
            let x = q.to_f64().unwrap_or(f64::INFINITY);
            if x * std::f64::consts::LOG2_E > max_bits as f64 {
                None
            } else {
                let r = BigRational::from_integer(q.clone());
                Some(ceil_exp(&r, &r, 64 + (x * std::f64::consts::LOG2_E) as u32))
            }
        }
        GrowthKind::ExpExpOfQ => {
            let x = q.to_f64().unwrap_or(f64::INFINITY);
            if x > 60.0 || x.exp() * std::f64::consts::LOG2_E > max_bits as f64 {
                None
            } else {
                let r = BigRational::from_integer(q.clone());
                let mut bits = 64 + (x.exp() * std::f64::consts::LOG2_E) as u32;
                loop {
                    let (lo, hi) = exp_enclosure(&r, &r, bits);
                    let (a_lo, a_hi) = exp_enclosure(&lo, &hi, bits);
                    if a_lo.ceil() == a_hi.ceil() {
                        break Some(a_lo.ceil().to_integer().to_biguint().unwrap());
                    }
                    bits *= 2;
                }
            }
        }
    })
}

/// `ceil(e^x)` for a rational `x` bracketed by `[lo, hi]`, refining until decided.
fn ceil_exp(lo: &BigRational, hi: &BigRational, start_bits: u32) -> BigUint {
    let mut bits = start_bits;
    loop {
        let (a, b) = exp_enclosure(lo, hi, bits);
        if a.ceil() == b.ceil() {
            return a.ceil().to_integer().to_biguint().unwrap();
        }
        bits *= 2;
    }
}

/// `ln a_n` from the rule, given `Q_{n-1}`.
fn log_digit(rule: &GrowthRule, n: usize, q: Tracked) -> Result<Tracked> {
    Ok(match &rule.kind {
        GrowthKind::Constant(c) => Tracked::exact_f64((*c as f64).ln()),
        GrowthKind::Polynomial(d) => Tracked::exact_f64(*d as f64 * (n as f64).ln()),
        // ln ceil(e^Q) = Q + O(e^-Q)
        GrowthKind::ExpOfQ => q,
        GrowthKind::ExpExpOfQ => q.exp(),
        GrowthKind::Custom(_) => {
            return Err(Error::InvalidInput(
                "custom rules have no log-space continuation".into(),
            ))
        }
    })
}

/// Upper bound on the Brjuno tail `sum_{n > from_n} ln Q_{n+1} / Q_n` for
/// rules with polynomially bounded digits. Terms inside the exact table are
/// taken as they are; beyond it `Q_{n+1} <= (a_{n+1} + 1) Q_n` and
/// `Q_n >= (1/2) phi^{n-1}` bound each term. `None` for exponential rules.
pub fn brjuno_tail_bound(rule: &GrowthRule, from_n: usize, exact: &ConvergentTable) -> Option<f64> {
    let digit_bound = |n: usize| -> f64 {
        match &rule.kind {
            GrowthKind::Constant(c) => *c as f64,
            GrowthKind::Polynomial(d) => (n as f64).powi(*d as i32).max(1.0),
            _ => unreachable!(),
        }
    };
    if !matches!(
        rule.kind,
        GrowthKind::Constant(_) | GrowthKind::Polynomial(_)
    ) {
        return None;
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut total = crate::summation::NeumaierSum::new();
    let mut n = from_n + 1;
    loop {
        let term = if n < exact.n_max() {
            exact.ln_q(n + 1).0 / exact.get(n).unwrap().q.to_f64().unwrap() * (1.0 + 8.0 * EPS)
        } else {
            // (c + ln x) / x peaks at x = e^{1-c} and decreases after it
            let c = (digit_bound(n + 1) + 1.0).ln();
            let g = 0.5 * phi.powi(n as i32 - 1);
            if g <= (1.0 - c).exp() {
                (c - 1.0).exp()
            } else {
                (c + g.ln()) / g * (1.0 + 8.0 * EPS)
            }
        };
        total.add(term);
        if term < 1e-18 * total.value() {
            return Some(total.value() * (1.0 + 1e-12));
        }
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q_u64(t: &ConvergentTable) -> Vec<u64> {
        t.entries()
            .iter()
            .skip(1)
            .map(|c| c.q.to_u64().unwrap())
            .collect()
    }

    #[test]
    fn constant_one_is_fibonacci() {
        let w = build(&GrowthRule::golden(), 6).unwrap();
        assert_eq!(q_u64(&w.exact), vec![1, 2, 3, 5, 8, 13]);
        for e in w.log.entries() {
            let exact = w.exact.ln_q(e.n).0;
            assert!((e.ln_q.to_f64() - exact).abs() <= (e.rel_err + 4.0 * EPS) * exact + 1e-15);
        }
    }

    #[test]
    fn exp_of_q_seed_two_exact_prefix() {
        let rule = GrowthRule::new(GrowthKind::ExpOfQ, vec![2]).unwrap();
        let w = build(&rule, 6).unwrap();
        let d: Vec<BigUint> = w.digits.digits().to_vec();
        assert_eq!(d[0], BigUint::from(2u32));
        assert_eq!(d[1], BigUint::from(8u32));
        assert_eq!(d[2], BigUint::from(24_154_953u32));
        // a_4 = ceil(e^410634203) has ~1.8e8 digits, far past the budget
        assert_eq!(w.exact_len(), 3);
        assert_eq!(q_u64(&w.exact), vec![2, 17, 24_154_953 * 17 + 2]);
        assert_eq!(w.log.n_max(), 6);
    }

    #[test]
    fn exp_of_q_log_ratio_tends_to_one() {
        let w = build(&GrowthRule::nonbrjuno_exp(), 40).unwrap();
        for n in 2..40 {
            let l_next = w.log.get(n + 1).unwrap().ln_q;
            let q_n = w.log.get(n).unwrap().ln_q.exp();
            let t = (l_next / q_n).to_f64();
            assert!((1.0..=1.5).contains(&t), "n={n} t={t}");
        }
        let l4 = w.log.get(4).unwrap().ln_q;
        let q3 = w.log.get(3).unwrap().ln_q.exp();
        assert!(((l4 / q3).to_f64() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_exp_witness() {
        let w = build(&GrowthRule::nonpm_expexp(), 30).unwrap();
        assert_eq!(w.digits.digits()[1], BigUint::from(1619u32));
        assert_eq!(w.exact.get(2).unwrap().q, BigInt::from(3239));
        for n in 2..30 {
            let ll_next = w.log.get(n + 1).unwrap().ln_q.ln();
            let q_n = w.log.get(n).unwrap().ln_q.exp();
            let t = (ll_next / q_n).to_f64();
            assert!((0.9..=1.5).contains(&t), "n={n} t={t}");
        }
    }

    #[test]
    fn log_table_strictly_increasing_and_matches_exact_overlap() {
        for rule in [
            GrowthRule::golden(),
            GrowthRule::new(GrowthKind::Constant(3), vec![1, 5]).unwrap(),
            GrowthRule::new(GrowthKind::Polynomial(2), vec![]).unwrap(),
            GrowthRule::nonbrjuno_exp(),
            GrowthRule::new(GrowthKind::ExpOfQ, vec![2]).unwrap(),
            GrowthRule::nonpm_expexp(),
        ] {
            let w = build(&rule, 25).unwrap();
            let e = w.log.entries();
            // Q_1 = a_1 may equal Q_0 = 1
            for pair in e[1..].windows(2) {
                assert!(pair[1].ln_q > pair[0].ln_q, "{:?}", rule.kind);
            }
            assert!(w.exact_len() >= 2);
            for (n, entry) in e.iter().enumerate().take(w.exact.n_max() + 1) {
                let exact = w.exact.ln_q(n).0;
                let got = entry.ln_q.to_f64();
                assert!(
                    (got - exact).abs() <= entry.rel_err * exact + 1e-15,
                    "{:?} n={n} {got} vs {exact}",
                    rule.kind
                );
            }
        }
    }

    #[test]
    fn golden_tail_bound_covers_the_remainder() {
        let rule = GrowthRule::golden();
        let w = build(&rule, 80).unwrap();
        let tail: f64 = (31..79)
            .map(|n| w.exact.ln_q(n + 1).0 / w.exact.get(n).unwrap().q.to_f64().unwrap())
            .sum();
        let bound = brjuno_tail_bound(&rule, 30, &w.exact).unwrap();
        assert!(bound >= tail);
        assert!(bound < 1e-3);
        assert!(brjuno_tail_bound(&GrowthRule::nonbrjuno_exp(), 3, &w.exact).is_none());
    }

    #[test]
    fn polynomial_rule_digits() {
        let rule = GrowthRule::new(GrowthKind::Polynomial(2), vec![]).unwrap();
        let w = build(&rule, 5).unwrap();
        let d: Vec<u64> = w
            .digits
            .digits()
            .iter()
            .map(|d| d.to_u64().unwrap())
            .collect();
        assert_eq!(d, vec![1, 4, 9, 16, 25]);
    }

    #[test]
    fn custom_rule_is_exact_only() {
        let rule = GrowthRule::new(
            GrowthKind::Custom(Arc::new(|qs: &[BigInt]| BigUint::from(qs.len() as u64))),
            vec![],
        )
        .unwrap();
        let w = build(&rule, 4).unwrap();
        let d: Vec<u64> = w
            .digits
            .digits()
            .iter()
            .map(|d| d.to_u64().unwrap())
            .collect();
        assert_eq!(d, vec![1, 2, 3, 4]);
        assert_eq!(w.log.n_max(), 4);
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(GrowthRule::new(GrowthKind::Constant(0), vec![]).is_err());
        assert!(GrowthRule::new(GrowthKind::ExpOfQ, vec![1, 0]).is_err());
        assert!(build(&GrowthRule::golden(), 0).is_err());
    }

    #[test]
    fn json_rows() {
        let w = build(&GrowthRule::nonbrjuno_exp(), 6).unwrap();
        let json = w.log.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[0]["n"], 0);
        assert!(rows[2]["lnQ"].as_f64().unwrap() > 5.39);
        // ln Q_5 ~ Q_4 ~ e^(1e98) is out of range
        assert!(rows[5]["lnQ"].is_null());
        assert!(rows[5]["lnQ_tower"].is_array());
    }
}
