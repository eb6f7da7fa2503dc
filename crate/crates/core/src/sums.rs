//! Brjuno and Perez-Marco series, the two transformed lemma series and the
//! index-set split used to bound them.
//!
//! Every term is assembled from ratios of comparable size so that tables
//! whose `Q_n` are iterated exponentials can be summed without overflow:
//!
//! * Brjuno: `b_n = L_{n+1} / Q_n` with `L_n = ln Q_n`
//! * Perez-Marco: `ln L_{n+1} / Q_n`
//! * lemma1: `b_n^2 r_n^{2+4e} L_n^{1+3e}` with `r_n = ln L_{n+1} / L_n`
//! * lemma2: `p_n^2 s_n^{2+4e} L_n^{1+3e}` with `p_n = ln L_{n+1} / Q_n`,
//!   `s_n = ln ln L_{n+1} / L_n`

use rayon::prelude::*;
use serde::Serialize;

use crate::constructions::{LogSpaceTable, Witness};
use crate::contfrac::ConvergentTable;
use crate::error::{Error, Result};
use crate::real::ln_bigint;
use crate::summation::NeumaierSum;
use crate::tower::{Tower, TowerSum};

/// Default tolerance for the Cauchy classification of partial sums.
pub const DEFAULT_TOL: f64 = 1e-6;

/// Default epsilon for the lemma series.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Read access to `Q_n` and `ln Q_n`, exact or log-space.
pub trait DenominatorTable: Sync {
    fn n_max(&self) -> usize;

    /// `ln Q_n`
    fn ln_q(&self, n: usize) -> Tower;

    /// `Q_n`
    fn q(&self, n: usize) -> Tower {
        self.ln_q(n).exp()
    }
}

impl DenominatorTable for ConvergentTable {
    fn n_max(&self) -> usize {
        ConvergentTable::n_max(self)
    }

    fn ln_q(&self, n: usize) -> Tower {
        Tower::from_f64(ln_bigint(&self.get(n).expect("index in table").q))
    }

    fn q(&self, n: usize) -> Tower {
        use num_traits::ToPrimitive;
        match self.get(n).expect("index in table").q.to_f64() {
            Some(v) if v.is_finite() => Tower::from_f64(v),
            _ => DenominatorTable::ln_q(self, n).exp(),
        }
    }
}

impl DenominatorTable for LogSpaceTable {
    fn n_max(&self) -> usize {
        LogSpaceTable::n_max(self)
    }

    fn ln_q(&self, n: usize) -> Tower {
        self.get(n).expect("index in table").ln_q
    }

    fn q(&self, n: usize) -> Tower {
        self.get(n).expect("index in table").q
    }
}

/// Exact values where materialized, log-space values beyond.
impl DenominatorTable for Witness {
    fn n_max(&self) -> usize {
        self.log.n_max().max(self.exact.n_max())
    }

    fn ln_q(&self, n: usize) -> Tower {
        if n <= self.exact.n_max() {
            DenominatorTable::ln_q(&self.exact, n)
        } else {
            self.log.get(n).expect("index in table").ln_q
        }
    }

    fn q(&self, n: usize) -> Tower {
        if n <= self.exact.n_max() {
            DenominatorTable::q(&self.exact, n)
        } else {
            self.log.get(n).expect("index in table").q
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    Brjuno,
    PerezMarco,
    Lemma1,
    Lemma2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Growth {
    CauchyConverging,
    LinearGrowth,
    Superlinear,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermFlag {
    Ok,
    /// Outside the domain of the iterated logarithm; counted as zero.
    Skipped,
    /// Positive but below the smallest float.
    Underflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub n: usize,
    pub value: Tower,
    pub flag: TermFlag,
    /// Membership in the split set, lemma series only.
    pub in_split: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Split {
    pub members: Vec<usize>,
    pub sum_in: Tower,
    pub sum_out: Tower,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesReport {
    pub kind: SeriesKind,
    pub epsilon: Option<f64>,
    pub terms: Vec<Term>,
    /// `(N, S_N)` for `N = 0..=n`.
    pub partial_sums: Vec<(usize, Tower)>,
    pub split: Option<Split>,
    pub diagnostics: Growth,
    pub all_skipped: bool,
}

impl SeriesReport {
    pub fn n(&self) -> usize {
        self.partial_sums.len() - 1
    }

    pub fn total(&self) -> Tower {
        self.partial_sums.last().unwrap().1
    }

    pub fn partial_sum(&self, n: usize) -> Tower {
        self.partial_sums[n].1
    }

    pub fn term(&self, n: usize) -> Option<&Term> {
        self.terms.iter().find(|t| t.n == n)
    }

    /// Reclassifies with a different Cauchy tolerance.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.diagnostics = classify(&self.partial_sums, tol);
        self
    }
}

/// Growth class from `S_{N/2}` and `S_N`.
pub fn classify(partial_sums: &[(usize, Tower)], tol: f64) -> Growth {
    let n = partial_sums.len() - 1;
    let full = partial_sums[n].1;
    let half = partial_sums[n / 2].1;
    let diff = full - half;
    if diff.fits_f64() && diff.to_f64() < tol {
        return Growth::CauchyConverging;
    }
    if !half.is_positive() {
        return Growth::Inconclusive;
    }
    let ratio = full / half;
    if ratio > Tower::from_f64(2.2) {
        Growth::Superlinear
    } else if ratio >= Tower::from_f64(1.8) {
        Growth::LinearGrowth
    } else {
        Growth::Inconclusive
    }
}

fn require(table: &dyn DenominatorTable, n: usize) -> Result<()> {
    if table.n_max() < n + 1 {
        return Err(Error::InsufficientTable {
            required: n + 1,
            available: table.n_max(),
        });
    }
    Ok(())
}

fn flag_for(value: Tower) -> TermFlag {
    if value.is_zero() {
        TermFlag::Underflow
    } else {
        TermFlag::Ok
    }
}

fn assemble(kind: SeriesKind, epsilon: Option<f64>, n: usize, terms: Vec<Term>) -> SeriesReport {
    let mut partial_sums = Vec::with_capacity(n + 1);
    let mut acc = TowerSum::new();
    partial_sums.push((0, Tower::ZERO));
    let mut it = terms.iter().peekable();
    for k in 1..=n {
        while let Some(t) = it.next_if(|t| t.n == k) {
            acc.add(t.value);
        }
        partial_sums.push((k, acc.value()));
    }
    let split = if matches!(kind, SeriesKind::Lemma1 | SeriesKind::Lemma2) {
        let mut sum_in = TowerSum::new();
        let mut sum_out = TowerSum::new();
        let mut members = Vec::new();
        for t in &terms {
            if t.in_split == Some(true) {
                members.push(t.n);
                sum_in.add(t.value);
            } else {
                sum_out.add(t.value);
            }
        }
        Some(Split {
            members,
            sum_in: sum_in.value(),
            sum_out: sum_out.value(),
        })
    } else {
        None
    };
    let all_skipped = !terms.is_empty() && terms.iter().all(|t| t.flag == TermFlag::Skipped);
    let diagnostics = classify(&partial_sums, DEFAULT_TOL);
    SeriesReport {
        kind,
        epsilon,
        terms,
        partial_sums,
        split,
        diagnostics,
        all_skipped,
    }
}

fn skipped(n: usize, in_split: Option<bool>) -> Term {
    Term {
        n,
        value: Tower::ZERO,
        flag: TermFlag::Skipped,
        in_split,
    }
}

/// `sum_{n=1}^{N} ln Q_{n+1} / Q_n`
pub fn brjuno_series(table: &dyn DenominatorTable, n: usize) -> Result<SeriesReport> {
    require(table, n)?;
    let terms = (1..=n)
        .into_par_iter()
        .map(|k| {
            let value = table.ln_q(k + 1) / table.q(k);
            Term {
                n: k,
                value,
                flag: flag_for(value),
                in_split: None,
            }
        })
        .collect();
    Ok(assemble(SeriesKind::Brjuno, None, n, terms))
}

/// `sum_{n=1}^{N} ln ln Q_{n+1} / Q_n`, skipping `Q_{n+1} <= e`.
pub fn pm_series(table: &dyn DenominatorTable, n: usize) -> Result<SeriesReport> {
    require(table, n)?;
    let terms = (1..=n)
        .into_par_iter()
        .map(|k| {
            let l_next = table.ln_q(k + 1);
            if l_next <= Tower::ONE {
                return skipped(k, None);
            }
            let value = l_next.ln() / table.q(k);
            Term {
                n: k,
                value,
                flag: flag_for(value),
                in_split: None,
            }
        })
        .collect();
    Ok(assemble(SeriesKind::PerezMarco, None, n, terms))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

/// `sum_{n=2}^{N} ln^2 Q_{n+1} (ln ln Q_{n+1})^{2+4e} / (Q_n^2 ln^{1+e} Q_n)`
/// with the split set `{n : (ln ln Q_{n+1})^{2+4e} < (ln Q_n)^{2+3e}}`.
pub fn lemma1_series(table: &dyn DenominatorTable, n: usize, epsilon: f64) -> Result<SeriesReport> {
    check_epsilon(epsilon)?;
    if n >= 2 {
        require(table, n)?;
    }
    let terms = (2..=n)
        .into_par_iter()
        .map(|k| {
            let l = table.ln_q(k);
            let l_next = table.ln_q(k + 1);
            let ll_next = l_next.ln();
            if !ll_next.is_positive() || !l.is_positive() {
                return Err(Error::Domain(format!("ln ln Q_{} is not positive", k + 1)));
            }
            let b = l_next / table.q(k);
            let r = ll_next / l;
            Ok(lemma_term(k, b, r, l, epsilon))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(SeriesKind::Lemma1, Some(epsilon), n, terms))
}

/// `sum_{n=2}^{N} ln^2 ln Q_{n+1} (ln ln ln Q_{n+1})^{2+4e} / (Q_n^2 ln^{1+e} Q_n)`,
/// skipping `Q_{n+1} <= e^e`, with the split set
/// `{n : (ln ln ln Q_{n+1})^{2+4e} < (ln Q_n)^{2+3e}}`.
pub fn lemma2_series(table: &dyn DenominatorTable, n: usize, epsilon: f64) -> Result<SeriesReport> {
    check_epsilon(epsilon)?;
    if n >= 2 {
        require(table, n)?;
    }
    let e = Tower::from_f64(std::f64::consts::E);
    let terms = (2..=n)
        .into_par_iter()
        .map(|k| {
            let l = table.ln_q(k);
            let l_next = table.ln_q(k + 1);
            if l_next <= e {
                return Ok(skipped(k, None));
            }
            if !l.is_positive() {
                return Err(Error::Domain(format!("ln Q_{k} is not positive")));
            }
            let ll_next = l_next.ln();
            let p = ll_next / table.q(k);
            let s = ll_next.ln() / l;
            Ok(lemma_term(k, p, s, l, epsilon))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(SeriesKind::Lemma2, Some(epsilon), n, terms))
}

/// `lead^2 * ratio^{2+4e} * l^{1+3e}`; split membership is
/// `ratio^{2+4e} * l^e < 1`.
fn lemma_term(n: usize, lead: Tower, ratio: Tower, l: Tower, epsilon: f64) -> Term {
    let rp = ratio.powf(2.0 + 4.0 * epsilon);
    let value = lead.powf(2.0) * rp * l.powf(1.0 + 3.0 * epsilon);
    let in_split = rp * l.powf(epsilon) < Tower::ONE;
    Term {
        n,
        value,
        flag: flag_for(value),
        in_split: Some(in_split),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchyBunyakovsky {
    pub n: usize,
    pub lhs: Tower,
    pub rhs: Tower,
    pub holds: bool,
}

/// Checks
/// `sum b_n <= (sum b_n^2 L_n^{1+2e})^{1/2} (sum L_n^{-(1+2e)})^{1/2}`
/// over the complement of the split set among `n <= N` of a lemma1 report.
pub fn cauchy_bunyakovsky_check(
    table: &dyn DenominatorTable,
    report: &SeriesReport,
    n: usize,
) -> Result<CauchyBunyakovsky> {
    let epsilon = report
        .epsilon
        .ok_or_else(|| Error::InvalidInput("report has no epsilon".into()))?;
    if report.split.is_none() {
        return Err(Error::InvalidInput("report has no split".into()));
    }
    let indices = report
        .terms
        .iter()
        .filter(|t| t.n <= n && t.in_split == Some(false))
        .map(|t| t.n);
    let mut cb = cauchy_bunyakovsky_over(table, indices, epsilon);
    cb.n = n;
    Ok(cb)
}

/// The same inequality over an arbitrary index set.
pub fn cauchy_bunyakovsky_over(
    table: &dyn DenominatorTable,
    indices: impl IntoIterator<Item = usize>,
    epsilon: f64,
) -> CauchyBunyakovsky {
    let mut lhs = TowerSum::new();
    let mut a = TowerSum::new();
    let mut c = TowerSum::new();
    let mut last = 0;
    for n in indices {
        let l = table.ln_q(n);
        let b = table.ln_q(n + 1) / table.q(n);
        let lp = l.powf(1.0 + 2.0 * epsilon);
        lhs.add(b);
        a.add(b.powf(2.0) * lp);
        c.add(lp.recip());
        last = last.max(n);
    }
    let lhs = lhs.value();
    let rhs = a.value().sqrt() * c.value().sqrt();
    let holds = lhs <= rhs * Tower::from_f64(1.0 + 1e-12);
    CauchyBunyakovsky {
        n: last,
        lhs,
        rhs,
        holds,
    }
}

/// `ln Q_n` above which `(ln Q_n)^beta < (1/2) ln Q_n`, `beta = (2+3e)/(2+4e)`.
pub fn bound_chain_threshold(epsilon: f64) -> f64 {
    let beta = (2.0 + 3.0 * epsilon) / (2.0 + 4.0 * epsilon);
    2f64.powf(1.0 / (1.0 - beta))
}

/// For each split member of a lemma1 report with `ln Q_n` past the
/// threshold, whether `ln Q_{n+1} < exp((ln Q_n)^beta)`, checked as
/// `ln ln Q_{n+1} < (ln Q_n)^beta`.
pub fn bound_chain(table: &dyn DenominatorTable, report: &SeriesReport) -> Vec<(usize, bool)> {
    let Some(epsilon) = report.epsilon else {
        return vec![];
    };
    let Some(split) = &report.split else {
        return vec![];
    };
    let beta = (2.0 + 3.0 * epsilon) / (2.0 + 4.0 * epsilon);
    let threshold = Tower::from_f64(bound_chain_threshold(epsilon));
    split
        .members
        .iter()
        .filter(|&&n| table.ln_q(n) >= threshold)
        .map(|&n| (n, table.ln_q(n + 1).ln() < table.ln_q(n).powf(beta)))
        .collect()
}

/// Partial sums of `sum_{n=2}^{N} 1 / ln^{1+2e} Q_n`, indexed from `N = 0`.
pub fn comparison_series(
    table: &dyn DenominatorTable,
    n: usize,
    epsilon: f64,
) -> Result<Vec<(usize, f64)>> {
    check_epsilon(epsilon)?;
    if table.n_max() < n {
        return Err(Error::InsufficientTable {
            required: n,
            available: table.n_max(),
        });
    }
    let mut acc = NeumaierSum::new();
    let mut out = vec![(0, 0.0)];
    for k in 1..=n {
        if k >= 2 {
            acc.add(table.ln_q(k).powf(-(1.0 + 2.0 * epsilon)).to_f64());
        }
        out.push((k, acc.value()));
    }
    Ok(out)
}
