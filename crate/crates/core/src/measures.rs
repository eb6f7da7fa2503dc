//! Finite atomic measures on rationals, the singular measure
//!
//! `mu = sum_{q >= 10} sum_{p=1}^{q-1} delta_{p/q} / (q^2 ln^{1+e} q)`
//!
//! truncated at `q <= q_max`, and their potentials and off-diagonal energies.
//!
//! Potentials are enclosed: every distance `|alpha - p/q|` is bracketed,
//! either with exact integer arithmetic in 2^-100 fixed point or, for atoms
//! too close to `alpha` to resolve that way, with exact rationals. The kernel
//! bounds at the bracket ends give a lower and an upper sum.

use std::io::{self, Write};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::contfrac::PartialQuotients;
use crate::error::{Error, Result};
use crate::kernels::{kernel_eval, kernel_eval_bounds, KernelSpec};
use crate::real::CertifiedReal;
use crate::summation::{pairwise_sum, par_sum, NeumaierSum, BLOCK};

/// Smallest denominator of the paper measure.
pub const Q_MIN: u64 = 10;

/// Default relative tolerance between the lower and upper potential sums.
pub const DEFAULT_POTENTIAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub num: u64,
    pub den: u64,
    pub weight: f64,
}

impl Atom {
    pub fn position(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn rational(&self) -> BigRational {
        BigRational::new(self.num.into(), self.den.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Explicit(Vec<Atom>),
    /// Generated on demand; `q_max = 10^4` alone has ~5e7 atoms.
    Paper {
        reduced_only: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    storage: Storage,
    epsilon: Option<f64>,
    q_max: Option<u64>,
}

/// `1 / (q^2 ln^{1+e} q)`
pub fn paper_weight(q: u64, epsilon: f64) -> f64 {
    let qf = q as f64;
    1.0 / (qf * qf * qf.ln().powf(1.0 + epsilon))
}

/// `sum_{q=10}^{q_max} 1 / (q ln^{1+e} q)`, the comparison sum for the mass.
pub fn mass_bound(q_max: u64, epsilon: f64) -> f64 {
    (Q_MIN..=q_max)
        .map(|q| {
            let qf = q as f64;
            1.0 / (qf * qf.ln().powf(1.0 + epsilon))
        })
        .collect::<NeumaierSum>()
        .value()
}

fn gcd(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

impl AtomicMeasure {
    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if a.den == 0 || a.num > a.den {
                return Err(Error::InvalidInput(format!(
                    "atom {}/{} outside [0, 1]",
                    a.num, a.den
                )));
            }
            if !(a.weight > 0.0 && a.weight.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "atom weight {} is not positive",
                    a.weight
                )));
            }
        }
        Ok(AtomicMeasure {
            storage: Storage::Explicit(atoms),
            epsilon: None,
            q_max: None,
        })
    }

    /// Atoms at every `p/q`, `10 <= q <= q_max`, `1 <= p < q`, not reduced.
    pub fn paper(q_max: u64, epsilon: f64) -> Result<Self> {
        Self::paper_with(q_max, epsilon, false)
    }

    /// As [`AtomicMeasure::paper`] but keeping only `gcd(p, q) = 1`.
    pub fn paper_reduced(q_max: u64, epsilon: f64) -> Result<Self> {
        Self::paper_with(q_max, epsilon, true)
    }

    fn paper_with(q_max: u64, epsilon: f64, reduced_only: bool) -> Result<Self> {
        if q_max < Q_MIN {
            return Err(Error::Domain(format!(
                "q_max must be at least {Q_MIN}, got {q_max}"
            )));
        }
        if q_max >= 1 << 26 {
            return Err(Error::Domain(format!("q_max {q_max} too large")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(AtomicMeasure {
            storage: Storage::Paper { reduced_only },
            epsilon: Some(epsilon),
            q_max: Some(q_max),
        })
    }

    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn q_max(&self) -> Option<u64> {
        self.q_max
    }

    pub fn is_paper_rule(&self) -> bool {
        matches!(self.storage, Storage::Paper { .. })
    }

    fn layer_count(&self, q: u64) -> u64 {
        match self.storage {
            Storage::Paper {
                reduced_only: false,
            } => q - 1,
            Storage::Paper { reduced_only: true } => {
                (1..q).filter(|&p| gcd(p, q) == 1).count() as u64
            }
            Storage::Explicit(_) => unreachable!(),
        }
    }

    pub fn len(&self) -> usize {
        match &self.storage {
            Storage::Explicit(a) => a.len(),
            Storage::Paper { .. } => (Q_MIN..=self.q_max.unwrap())
                .map(|q| self.layer_count(q) as usize)
                .sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn layer(&self, q: u64) -> impl Iterator<Item = Atom> + '_ {
        let reduced_only = matches!(self.storage, Storage::Paper { reduced_only: true });
        let w = paper_weight(q, self.epsilon.unwrap());
        (1..q)
            .filter(move |&p| !reduced_only || gcd(p, q) == 1)
            .map(move |p| Atom {
                num: p,
                den: q,
                weight: w,
            })
    }

    pub fn atoms(&self) -> Box<dyn Iterator<Item = Atom> + '_> {
        match &self.storage {
            Storage::Explicit(a) => Box::new(a.iter().copied()),
            Storage::Paper { .. } => {
                Box::new((Q_MIN..=self.q_max.unwrap()).flat_map(move |q| self.layer(q)))
            }
        }
    }

    /// Materialized copy with explicit atoms.
    pub fn to_explicit(&self) -> AtomicMeasure {
        AtomicMeasure {
            storage: Storage::Explicit(self.atoms().collect()),
            epsilon: self.epsilon,
            q_max: self.q_max,
        }
    }

    /// Sum of two measures, as a list of atoms.
    pub fn merged(&self, other: &AtomicMeasure) -> AtomicMeasure {
        let atoms = self.atoms().chain(other.atoms()).collect();
        AtomicMeasure {
            storage: Storage::Explicit(atoms),
            epsilon: None,
            q_max: None,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match &self.storage {
            Storage::Explicit(a) => a.iter().map(|a| a.weight).collect::<NeumaierSum>().value(),
            Storage::Paper { .. } => (Q_MIN..=self.q_max.unwrap())
                .map(|q| self.layer_count(q) as f64 * paper_weight(q, self.epsilon.unwrap()))
                .collect::<NeumaierSum>()
                .value(),
        }
    }

    /// `{"epsilon":float,"q_max":int,"atoms":[["p/q",weight]]}`, streamed.
    pub fn write_json<W: Write>(&self, mut out: W) -> io::Result<()> {
        let num =
            |v: Option<f64>| v.map_or("null".to_string(), |x| serde_json::to_string(&x).unwrap());
        write!(out, "{{\"epsilon\":{},\"q_max\":", num(self.epsilon))?;
        match self.q_max {
            Some(q) => write!(out, "{q}")?,
            None => write!(out, "null")?,
        }
        write!(out, ",\"atoms\":[")?;
        for (i, a) in self.atoms().enumerate() {
            if i > 0 {
                write!(out, ",")?;
            }
            write!(
                out,
                "[\"{}/{}\",{}]",
                a.num,
                a.den,
                serde_json::to_string(&a.weight).unwrap()
            )?;
        }
        write!(out, "]}}")
    }

    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        self.write_json(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }
}

/// Point at which a potential is evaluated.
#[derive(Debug, Clone)]
pub enum Target {
    Rational(BigRational),
    Real(CertifiedReal),
    Digits(PartialQuotients),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    ExactRational,
    CertifiedReal,
    PrescribedDigits,
}

impl Target {
    pub fn kind(&self) -> TargetKind {
        match self {
            Target::Rational(_) => TargetKind::ExactRational,
            Target::Real(_) => TargetKind::CertifiedReal,
            Target::Digits(_) => TargetKind::PrescribedDigits,
        }
    }

    fn enclosure(&self) -> (BigRational, BigRational) {
        match self {
            Target::Rational(r) => (r.clone(), r.clone()),
            Target::Real(x) => (x.lo().clone(), x.hi().clone()),
            Target::Digits(pq) => {
                let x = pq.enclosure(&num_bigint::BigUint::one());
                (x.lo().clone(), x.hi().clone())
            }
        }
    }

    fn refined(&self) -> Option<Target> {
        match self {
            Target::Real(x) if x.can_refine() && x.precision_bits() < 1 << 16 => {
                x.refine(x.precision_bits() * 2).ok().map(Target::Real)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialValue {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Bound on the contribution of layers `q > q_max`; `None` when no
    /// bound is available.
    pub truncation_tail_bound: Option<f64>,
    pub target_kind: TargetKind,
}

const FRAC_BITS: u32 = 100;

/// Distance oracle for a fixed target.
struct Locator {
    lo: BigRational,
    hi: BigRational,
    /// `alpha = a / b` exactly, small enough for u128 cross products.
    small: Option<(u64, u64)>,
    /// `[floor(lo 2^100), ceil(hi 2^100)]` when `0 <= alpha <= 1`.
    fixed: Option<(u128, u128)>,
}

enum Distance {
    Zero,
    Bracket(f64, f64),
    Ambiguous,
}

fn widen_down(x: f64, steps: u32) -> f64 {
    (0..steps).fold(x, |v, _| v.next_down()).max(0.0)
}

fn widen_up(x: f64, steps: u32) -> f64 {
    (0..steps).fold(x, |v, _| v.next_up())
}

fn to_fixed(r: &BigRational, ceil: bool) -> Option<u128> {
    let scaled = r.numer() << FRAC_BITS as usize;
    let (q, rem) = scaled.div_mod_floor(r.denom());
    let q = if ceil && !rem.is_zero() { q + 1 } else { q };
    q.to_u128()
}

/// Float bracket of a nonnegative rational.
fn rational_bracket(r: &BigRational) -> (f64, f64) {
    let v = r.to_f64().unwrap_or(0.0);
    (widen_down(v, 1), widen_up(v, 1))
}

impl Locator {
    fn new(lo: BigRational, hi: BigRational) -> Self {
        let small = if lo == hi && !lo.is_negative() {
            match (lo.numer().to_u64(), lo.denom().to_u64()) {
                (Some(a), Some(b)) if a < 1 << 62 && b < 1 << 62 => Some((a, b)),
                _ => None,
            }
        } else {
            None
        };
        let one = BigRational::one();
        let fixed = if !lo.is_negative() && hi <= one {
            to_fixed(&lo, false).zip(to_fixed(&hi, true))
        } else {
            None
        };
        Locator {
            lo,
            hi,
            small,
            fixed,
        }
    }

    fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    fn distance(&self, p: u64, q: u64) -> Distance {
        if let Some((a, b)) = self.small {
            let lhs = a as u128 * q as u128;
            let rhs = p as u128 * b as u128;
            let num = lhs.abs_diff(rhs);
            if num == 0 {
                return Distance::Zero;
            }
            let d = num as f64 / (b as f64 * q as f64);
            return Distance::Bracket(widen_down(d, 3), widen_up(d, 3));
        }
        if let Some((a_lo, a_hi)) = self.fixed {
            if q < 1 << 27 && p <= q {
                // q alpha 2^100 against p 2^100, both exact
                let x = (p as u128) << FRAC_BITS;
                let (qa_lo, qa_hi) = (a_lo * q as u128, a_hi * q as u128);
                let bracket = if qa_lo > x {
                    Some((qa_lo - x, qa_hi - x))
                } else if qa_hi < x {
                    Some((x - qa_hi, x - qa_lo))
                } else {
                    None
                };
                if let Some((n_lo, n_hi)) = bracket {
                    if n_hi - n_lo <= n_lo >> 45 {
                        let scale = (q as f64) * 2f64.powi(FRAC_BITS as i32);
                        let d_lo = widen_down(n_lo as f64 / scale, 3);
                        let d_hi = widen_up(n_hi as f64 / scale, 3);
                        if d_lo > 0.0 {
                            return Distance::Bracket(d_lo, d_hi);
                        }
                    }
                }
            }
        }
        self.exact_distance(p, q)
    }

    fn exact_distance(&self, p: u64, q: u64) -> Distance {
        let x = BigRational::new(BigInt::from(p), BigInt::from(q));
        if self.hi < x {
            let (a, _) = rational_bracket(&(&x - &self.hi));
            let (_, b) = rational_bracket(&(&x - &self.lo));
            if a > 0.0 {
                Distance::Bracket(a, b)
            } else {
                Distance::Ambiguous
            }
        } else if self.lo > x {
            let (a, _) = rational_bracket(&(&self.lo - &x));
            let (_, b) = rational_bracket(&(&self.hi - &x));
            if a > 0.0 {
                Distance::Bracket(a, b)
            } else {
                Distance::Ambiguous
            }
        } else if self.is_exact() {
            Distance::Zero
        } else {
            Distance::Ambiguous
        }
    }
}

/// Lower and upper enclosure of `k(d)` for `d` in `[d_lo, d_hi]`.
fn kernel_range(spec: &KernelSpec, d_lo: f64, d_hi: f64) -> (f64, f64) {
    let a = kernel_eval_bounds(spec, d_lo);
    let b = kernel_eval_bounds(spec, d_hi);
    (a.lo.min(b.lo), a.hi.max(b.hi))
}

/// Per-atom contribution bounds.
#[derive(Clone, Copy)]
enum Contribution {
    Finite(f64, f64),
    Infinite,
    Ambiguous,
}

fn contribution(loc: &Locator, spec: &KernelSpec, a: &Atom) -> Contribution {
    match loc.distance(a.num, a.den) {
        Distance::Zero => Contribution::Infinite,
        Distance::Ambiguous => Contribution::Ambiguous,
        Distance::Bracket(d_lo, d_hi) => {
            let (k_lo, k_hi) = kernel_range(spec, d_lo, d_hi);
            Contribution::Finite(a.weight * k_lo, a.weight * k_hi)
        }
    }
}

#[derive(Default, Clone, Copy)]
struct LayerSum {
    lo: f64,
    hi: f64,
    infinite: bool,
    ambiguous: bool,
}

fn sum_atoms(loc: &Locator, spec: &KernelSpec, atoms: impl Iterator<Item = Atom>) -> LayerSum {
    let mut lo = NeumaierSum::new();
    let mut hi = NeumaierSum::new();
    let mut out = LayerSum::default();
    for a in atoms {
        match contribution(loc, spec, &a) {
            Contribution::Finite(x, y) => {
                lo.add(x);
                hi.add(y);
            }
            Contribution::Infinite => out.infinite = true,
            Contribution::Ambiguous => out.ambiguous = true,
        }
    }
    out.lo = lo.value();
    out.hi = hi.value();
    out
}

fn tail_bound(target: &Target) -> Option<f64> {
    // a rational alpha = a/b is itself an atom of every layer q = kb, so
    // the untruncated potential is infinite
    match target {
        Target::Rational(_) => Some(f64::INFINITY),
        _ => None,
    }
}

fn finish(sum: LayerSum, target: &Target, tol: f64) -> std::result::Result<PotentialValue, bool> {
    let kind = target.kind();
    if sum.infinite {
        let inf = f64::INFINITY;
        return Ok(PotentialValue {
            value: inf,
            lower: inf,
            upper: inf,
            truncation_tail_bound: tail_bound(target),
            target_kind: kind,
        });
    }
    if sum.ambiguous || sum.hi - sum.lo > tol * sum.lo {
        return Err(true);
    }
    Ok(PotentialValue {
        value: 0.5 * (sum.lo + sum.hi),
        lower: sum.lo,
        upper: sum.hi,
        truncation_tail_bound: tail_bound(target),
        target_kind: kind,
    })
}

fn precision_exhausted(target: &Target) -> Error {
    let bits = match target {
        Target::Real(x) => x.precision_bits(),
        _ => 0,
    };
    Error::PrecisionExhausted {
        precision_bits: bits,
    }
}

/// `sum_atoms w k(|alpha - x|)` enclosed to relative width `tol`.
pub fn potential(
    measure: &AtomicMeasure,
    spec: &KernelSpec,
    target: &Target,
) -> Result<PotentialValue> {
    potential_with_tol(measure, spec, target, DEFAULT_POTENTIAL_TOL)
}

pub fn potential_with_tol(
    measure: &AtomicMeasure,
    spec: &KernelSpec,
    target: &Target,
    tol: f64,
) -> Result<PotentialValue> {
    if measure.is_paper_rule() {
        let q_max = measure.q_max.unwrap();
        return Ok(potential_sweep_with_tol(measure, spec, target, &[q_max], tol)?.remove(0));
    }
    let mut target = target.clone();
    let atoms: Vec<Atom> = measure.atoms().collect();
    loop {
        let (lo, hi) = target.enclosure();
        let loc = Locator::new(lo, hi);
        let blocks: Vec<LayerSum> = atoms
            .par_chunks(BLOCK)
            .map(|chunk| sum_atoms(&loc, spec, chunk.iter().copied()))
            .collect();
        match finish(combine(&blocks), &target, tol) {
            Ok(v) => return Ok(v),
            Err(_) => match target.refined() {
                Some(t) => target = t,
                None => return Err(precision_exhausted(&target)),
            },
        }
    }
}

fn combine(parts: &[LayerSum]) -> LayerSum {
    let lo: Vec<f64> = parts.iter().map(|p| p.lo).collect();
    let hi: Vec<f64> = parts.iter().map(|p| p.hi).collect();
    LayerSum {
        lo: pairwise_sum(&lo),
        hi: pairwise_sum(&hi),
        infinite: parts.iter().any(|p| p.infinite),
        ambiguous: parts.iter().any(|p| p.ambiguous),
    }
}

/// Potentials of the paper measure truncated at each of `q_maxes`, from
/// one pass over the layers.
pub fn potential_sweep(
    measure: &AtomicMeasure,
    spec: &KernelSpec,
    target: &Target,
    q_maxes: &[u64],
) -> Result<Vec<PotentialValue>> {
    potential_sweep_with_tol(measure, spec, target, q_maxes, DEFAULT_POTENTIAL_TOL)
}

pub fn potential_sweep_with_tol(
    measure: &AtomicMeasure,
    spec: &KernelSpec,
    target: &Target,
    q_maxes: &[u64],
    tol: f64,
) -> Result<Vec<PotentialValue>> {
    if !measure.is_paper_rule() {
        return Err(Error::InvalidInput(
            "q_max sweeps need a paper-rule measure".into(),
        ));
    }
    let epsilon = measure.epsilon.unwrap();
    let top = q_maxes.iter().copied().max().unwrap_or(Q_MIN);
    if q_maxes.iter().any(|&q| q < Q_MIN) {
        return Err(Error::Domain(format!("q_max must be at least {Q_MIN}")));
    }
    let layered = match measure.storage {
        Storage::Paper { reduced_only } => AtomicMeasure::paper_with(top, epsilon, reduced_only)?,
        Storage::Explicit(_) => unreachable!(),
    };
    let mut target = target.clone();
    'refine: loop {
        let (lo, hi) = target.enclosure();
        let loc = Locator::new(lo, hi);
        let layers: Vec<LayerSum> = (Q_MIN..=top)
            .into_par_iter()
            .map(|q| sum_atoms(&loc, spec, layered.layer(q)))
            .collect();
        let mut out = Vec::with_capacity(q_maxes.len());
        for &q_max in q_maxes {
            let upto = &layers[..=(q_max - Q_MIN) as usize];
            let mut s = LayerSum::default();
            let mut lo = NeumaierSum::new();
            let mut hi = NeumaierSum::new();
            for l in upto {
                lo.add(l.lo);
                hi.add(l.hi);
                s.infinite |= l.infinite;
                s.ambiguous |= l.ambiguous;
            }
            s.lo = lo.value();
            s.hi = hi.value();
            match finish(s, &target, tol) {
                Ok(v) => out.push(v),
                Err(_) => match target.refined() {
                    Some(t) => {
                        target = t;
                        continue 'refine;
                    }
                    None => return Err(precision_exhausted(&target)),
                },
            }
        }
        return Ok(out);
    }
}

/// Potential sweep as CSV: `q_max,potential,tail_bound`; an unavailable
/// tail bound is an empty field.
pub fn sweep_csv(q_maxes: &[u64], values: &[PotentialValue]) -> String {
    let mut s = String::from("q_max,potential,tail_bound\n");
    for (q, v) in q_maxes.iter().zip(values) {
        let tail = v.truncation_tail_bound.map_or(String::new(), fmt_f64);
        s.push_str(&format!("{q},{},{tail}\n", fmt_f64(v.value)));
    }
    s
}

/// Shortest round-trip decimal, `inf`/`-inf`/`NaN` otherwise.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).unwrap()
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energy {
    /// `sum_{i != j} w_i w_j k(|x_i - x_j|)`
    pub off_diagonal: f64,
    /// The diagonal `i = j` terms are infinite whenever there is an atom.
    pub diagonal_divergent: bool,
    pub atoms: usize,
}

/// `|x_i - x_j|` from exact cross products.
#[inline]
fn atom_distance(a: &Atom, b: &Atom) -> f64 {
    let num = (a.num as u128 * b.den as u128).abs_diff(b.num as u128 * a.den as u128);
    num as f64 / (a.den as u128 * b.den as u128) as f64
}

/// Off-diagonal energy, each unordered pair evaluated once and doubled.
pub fn energy(measure: &AtomicMeasure, spec: &KernelSpec) -> Energy {
    let atoms: Vec<Atom> = measure.atoms().collect();
    let n = atoms.len();
    // below 2^26 every cross product is an exact float
    let small = atoms.iter().all(|a| a.den < 1 << 26);
    let rows = |i: usize| {
        let a = &atoms[i];
        let mut acc = NeumaierSum::new();
        if small {
            let (an, ad) = (a.num as f64, a.den as f64);
            for b in &atoms[i + 1..] {
                let d = (an * b.den as f64 - b.num as f64 * ad).abs() / (ad * b.den as f64);
                acc.add(b.weight * kernel_eval(spec, d));
            }
        } else {
            for b in &atoms[i + 1..] {
                acc.add(b.weight * kernel_eval(spec, atom_distance(a, b)));
            }
        }
        a.weight * acc.value()
    };
    let half = par_sum(n, rows);
    Energy {
        off_diagonal: 2.0 * half,
        diagonal_divergent: n > 0,
        atoms: n,
    }
}

/// Reference energy from the full `i != j` double loop.
pub fn energy_naive(measure: &AtomicMeasure, spec: &KernelSpec) -> f64 {
    let atoms: Vec<Atom> = measure.atoms().collect();
    let mut acc = NeumaierSum::new();
    for (i, a) in atoms.iter().enumerate() {
        for (j, b) in atoms.iter().enumerate() {
            if i != j {
                acc.add(a.weight * b.weight * kernel_eval(spec, atom_distance(a, b)));
            }
        }
    }
    acc.value()
}

/// Potential at a float point, without certification.
pub fn potential_f64(measure: &AtomicMeasure, spec: &KernelSpec, x: f64) -> f64 {
    let atoms: Vec<Atom> = measure.atoms().collect();
    par_sum(atoms.len(), |i| {
        atoms[i].weight * kernel_eval(spec, (x - atoms[i].position()).abs())
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::constructions::{build, GrowthRule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn paper_measure_counts_and_weights() {
        let m = AtomicMeasure::paper(10, 0.1).unwrap();
        assert_eq!(m.len(), 9);
        let w = 1.0 / (100.0 * 10f64.ln().powf(1.1));
        assert!(m.atoms().all(|a| a.weight == w && a.den == 10));
        assert!(close(w, 0.003_995_422_789_262_441_519_1, 1e-15));
        assert_eq!(AtomicMeasure::paper(11, 0.1).unwrap().len(), 19);
        assert_eq!(
            AtomicMeasure::paper(100, 0.1).unwrap().len(),
            (10..=100).map(|q| q - 1).sum::<usize>()
        );
        assert_eq!(
            AtomicMeasure::paper(12, 0.1).unwrap().to_explicit().len(),
            9 + 10 + 11
        );
        assert!(AtomicMeasure::paper(9, 0.1).is_err());
        // reduced: phi(10) + phi(11) + phi(12) = 4 + 10 + 4
        assert_eq!(AtomicMeasure::paper_reduced(12, 0.1).unwrap().len(), 18);
    }

    #[test]
    fn mass_below_comparison_sum() {
        for q_max in [10, 100, 1000, 10_000] {
            let m = AtomicMeasure::paper(q_max, 0.1).unwrap();
            assert!(m.total_mass() * (1.0 + 1e-12) < mass_bound(q_max, 0.1));
        }
        let m = AtomicMeasure::paper(200, 0.1).unwrap();
        let direct: f64 = m.atoms().map(|a| a.weight).collect::<NeumaierSum>().value();
        assert!(close(m.total_mass(), direct, 1e-13));
    }

    #[test]
    fn single_atom_potential() {
        let spec = KernelSpec::k1(2.4).unwrap();
        let m = AtomicMeasure::from_atoms(vec![Atom {
            num: 1,
            den: 3,
            weight: 0.5,
        }])
        .unwrap();
        let v = potential(&m, &spec, &Target::Rational(r(1, 2))).unwrap();
        let expect = 0.5 * spec.eval(1.0 / 6.0);
        assert!(close(v.value, expect, 1e-14));
        assert!(v.lower <= expect && expect <= v.upper);
        assert_eq!(v.truncation_tail_bound, Some(f64::INFINITY));
    }

    #[test]
    fn on_atom_is_infinite() {
        let spec = KernelSpec::k1(2.4).unwrap();
        let m = AtomicMeasure::paper(20, 0.1).unwrap();
        let v = potential(&m, &spec, &Target::Rational(r(1, 2))).unwrap();
        assert_eq!(v.value, f64::INFINITY);
        // 1/2 sits at 5/10 only in the non-reduced measure; in the reduced
        // one it never appears
        let red = AtomicMeasure::paper_reduced(20, 0.1).unwrap();
        assert!(potential(&red, &spec, &Target::Rational(r(1, 2)))
            .unwrap()
            .value
            .is_finite());
    }

    #[test]
    fn golden_potential_matches_float_evaluation() {
        let spec = KernelSpec::k1(2.4).unwrap();
        let m = AtomicMeasure::paper(128, 0.1).unwrap();
        let g = Target::Real(CertifiedReal::golden_conjugate(128));
        let v = potential(&m, &spec, &g).unwrap();
        let x = (5f64.sqrt() - 1.0) / 2.0;
        assert!(close(v.value, potential_f64(&m, &spec, x), 1e-9));
        assert!(close(v.value, 4.012, 1e-3));
        assert_eq!(v.truncation_tail_bound, None);
        assert!(v.upper - v.lower <= 1e-9 * v.lower);
    }

    #[test]
    fn sweep_matches_single_evaluations() {
        let spec = KernelSpec::k2(3.0).unwrap();
        let m = AtomicMeasure::paper(300, 0.2).unwrap();
        let t = Target::Rational(r(1, 7919));
        let qs = [10, 50, 128, 300];
        let sweep = potential_sweep(&m, &spec, &t, &qs).unwrap();
        for (q, v) in qs.iter().zip(&sweep) {
            let single = potential(&AtomicMeasure::paper(*q, 0.2).unwrap(), &spec, &t).unwrap();
            assert_eq!(v.value.to_bits(), single.value.to_bits());
            let explicit = potential(
                &AtomicMeasure::paper(*q, 0.2).unwrap().to_explicit(),
                &spec,
                &t,
            )
            .unwrap();
            assert!(close(v.value, explicit.value, 1e-12));
        }
        for w in sweep.windows(2) {
            assert!(w[1].value >= w[0].value);
        }
    }

    #[test]
    fn exp_witness_needs_exact_fallback() {
        let spec = KernelSpec::k1(2.4).unwrap();
        let w = build(&GrowthRule::nonbrjuno_exp(), 4).unwrap();
        let m = AtomicMeasure::paper(256, 0.1).unwrap();
        let v = potential_sweep(&m, &spec, &Target::Digits(w.digits.clone()), &[128, 256]).unwrap();
        assert!(close(v[0].value, 4.34, 1e-2));
        assert!(close(v[1].value, 15.08, 1e-2));
    }

    #[test]
    fn linearity() {
        let spec = KernelSpec::k1(2.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mk = |rng: &mut ChaCha8Rng| {
            let atoms = (0..50)
                .map(|_| {
                    let den = rng.gen_range(2..1000u64);
                    Atom {
                        num: rng.gen_range(0..=den),
                        den,
                        weight: rng.gen_range(0.01..1.0),
                    }
                })
                .collect();
            AtomicMeasure::from_atoms(atoms).unwrap()
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        let t = Target::Real(CertifiedReal::golden_conjugate(128));
        let sum = potential(&a.merged(&b), &spec, &t).unwrap().value;
        let parts =
            potential(&a, &spec, &t).unwrap().value + potential(&b, &spec, &t).unwrap().value;
        assert!(close(sum, parts, 1e-12));
    }

    #[test]
    fn energy_small_cases() {
        let spec = KernelSpec::k1(2.4).unwrap();
        let two = AtomicMeasure::from_atoms(vec![
            Atom {
                num: 1,
                den: 10,
                weight: 0.5,
            },
            Atom {
                num: 3,
                den: 10,
                weight: 0.5,
            },
        ])
        .unwrap();
        let e = energy(&two, &spec);
        assert!(close(e.off_diagonal, spec.eval(0.2) / 2.0, 1e-15));
        let one = AtomicMeasure::from_atoms(vec![Atom {
            num: 1,
            den: 2,
            weight: 1.0,
        }])
        .unwrap();
        let e = energy(&one, &spec);
        assert_eq!(e.off_diagonal, 0.0);
        assert!(e.diagonal_divergent);
    }

    #[test]
    fn energy_matches_naive_on_equispaced_points() {
        let spec = KernelSpec::k1(2.4).unwrap();
        // 100 points i/198, i = 0..99, spanning [0, 1/2]
        let atoms = (0..100)
            .map(|i| Atom {
                num: i,
                den: 198,
                weight: 0.01,
            })
            .collect();
        let m = AtomicMeasure::from_atoms(atoms).unwrap();
        assert!(close(
            energy(&m, &spec).off_diagonal,
            energy_naive(&m, &spec),
            1e-12
        ));
    }

    #[test]
    fn measure_json() {
        let m = AtomicMeasure::paper(10, 0.1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["q_max"], 10);
        assert_eq!(v["epsilon"], 0.1);
        assert_eq!(v["atoms"].as_array().unwrap().len(), 9);
        assert_eq!(v["atoms"][4][0], "5/10");
    }
}
