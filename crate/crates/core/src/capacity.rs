//! Discrete capacity estimates and greedy Hausdorff covers.
//!
//! A compact set is represented by a [`NodeSet`] of exact rationals. Its
//! energy `W = min_w w^T K w` over the probability simplex is found with
//! pairwise conditional-gradient steps: mass moves from the support node of
//! largest potential to the node of smallest potential, with an exact line
//! search along that edge. The gap `2 (w^T K w - min_i (K w)_i)` bounds the
//! distance to the optimum.

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{gauge_eval, GaugeSpec, KernelSpec};
use crate::summation::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalMode {
    /// Self-interaction `k(clamp_delta / 2)`.
    Clamp,
    /// No self-interaction.
    Exclude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    nodes: Vec<BigRational>,
    clamp_delta: f64,
}

impl NodeSet {
    pub fn new(mut nodes: Vec<BigRational>, clamp_delta: f64) -> Result<Self> {
        nodes.sort();
        if nodes.is_empty() {
            return Err(Error::InvalidInput("node set is empty".into()));
        }
        if nodes.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("nodes must be distinct".into()));
        }
        let zero = BigRational::from_integer(0.into());
        let one = BigRational::from_integer(1.into());
        if nodes[0] < zero || *nodes.last().unwrap() > one {
            return Err(Error::InvalidInput("nodes must lie in [0, 1]".into()));
        }
        let half = BigRational::new(1.into(), 2.into());
        if nodes.last().unwrap() - &nodes[0] > half {
            return Err(Error::Domain("node set diameter exceeds 1/2".into()));
        }
        if !(clamp_delta > 0.0 && clamp_delta.is_finite()) {
            return Err(Error::Domain(format!(
                "clamp_delta must be positive, got {clamp_delta}"
            )));
        }
        let set = NodeSet { nodes, clamp_delta };
        if let Some(gap) = set.min_gap() {
            if clamp_delta > gap {
                return Err(Error::Domain(format!(
                    "clamp_delta {clamp_delta} exceeds the minimum gap {gap}"
                )));
            }
        }
        Ok(set)
    }

    /// `n` equispaced nodes `a + i (b - a) / (n - 1)`.
    pub fn grid(a: &BigRational, b: &BigRational, n: usize, clamp_delta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(
                "a grid needs at least two nodes".into(),
            ));
        }
        let step = (b - a) / BigRational::from_integer((n as i64 - 1).into());
        let nodes = (0..n)
            .map(|i| a + &step * BigRational::from_integer((i as i64).into()))
            .collect();
        Self::new(nodes, clamp_delta)
    }

    pub fn nodes(&self) -> &[BigRational] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn clamp_delta(&self) -> f64 {
        self.clamp_delta
    }

    pub fn min_gap(&self) -> Option<f64> {
        self.nodes
            .windows(2)
            .map(|w| (&w[1] - &w[0]).to_f64().unwrap())
            .reduce(f64::min)
    }

    pub fn is_subset_of(&self, other: &NodeSet) -> bool {
        self.nodes
            .iter()
            .all(|x| other.nodes.binary_search(x).is_ok())
    }

    pub fn union(&self, other: &NodeSet) -> Result<NodeSet> {
        if self.clamp_delta != other.clamp_delta {
            return Err(Error::IncompatibleClamp);
        }
        let mut nodes: Vec<BigRational> = self.nodes.iter().chain(&other.nodes).cloned().collect();
        nodes.sort();
        nodes.dedup();
        NodeSet::new(nodes, self.clamp_delta)
    }

    /// Kernel matrix with the diagonal handled by `mode`.
    pub fn kernel_matrix(&self, spec: &KernelSpec, mode: DiagonalMode) -> Vec<Vec<f64>> {
        let n = self.len();
        let diag = match mode {
            DiagonalMode::Clamp => spec.eval(self.clamp_delta / 2.0),
            DiagonalMode::Exclude => 0.0,
        };
        (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            diag
                        } else {
                            let d = (&self.nodes[i] - &self.nodes[j]).abs().to_f64().unwrap();
                            spec.eval(d.max(self.clamp_delta / 2.0))
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub diagonal: DiagonalMode,
    /// Keep the energy after every iteration.
    pub record_trace: bool,
}

impl Default for CapacityOptions {
    fn default() -> Self {
        CapacityOptions {
            tol: 1e-8,
            max_iter: 1_000_000,
            diagonal: DiagonalMode::Clamp,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityEstimate {
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub gap: f64,
    pub iters: usize,
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub converged: bool,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl CapacityEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

/// Minimizes the discrete energy; `NonConvergence` past the iteration cap.
pub fn discrete_capacity(
    nodes: &NodeSet,
    spec: &KernelSpec,
    opts: &CapacityOptions,
) -> Result<CapacityEstimate> {
    let est = discrete_capacity_best(nodes, spec, opts)?;
    if !est.converged {
        return Err(Error::NonConvergence {
            iterations: est.iters,
            gap: est.gap,
        });
    }
    Ok(est)
}

fn mat_vec(k: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    k.par_iter()
        .map(|row| {
            row.iter()
                .zip(w)
                .map(|(a, b)| a * b)
                .collect::<NeumaierSum>()
                .value()
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x * y)
        .collect::<NeumaierSum>()
        .value()
}

/// As [`discrete_capacity`], returning the last iterate even when the gap
/// is still above `tol`.
pub fn discrete_capacity_best(
    nodes: &NodeSet,
    spec: &KernelSpec,
    opts: &CapacityOptions,
) -> Result<CapacityEstimate> {
    let n = nodes.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "capacity needs at least two nodes".into(),
        ));
    }
    let k = nodes.kernel_matrix(spec, opts.diagonal);
    let mut w = vec![1.0 / n as f64; n];
    let mut u = mat_vec(&k, &w);
    let mut energy = dot(&w, &u);
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut gap;
    loop {
        let (fw, &u_min) = u
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        gap = (2.0 * (energy - u_min)).max(0.0);
        if gap <= opts.tol || iters >= opts.max_iter {
            break;
        }
        let (away, &u_max) = u
            .iter()
            .enumerate()
            .filter(|(i, _)| w[*i] > 0.0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("support is nonempty");
        if away == fw {
            break;
        }
        // f(w + g (e_fw - e_away)) = f + 2 g (u_fw - u_away) + g^2 c
        let c = k[fw][fw] + k[away][away] - 2.0 * k[fw][away];
        let slope = u_min - u_max;
        let g = if c > 0.0 {
            (-slope / c).min(w[away])
        } else {
            w[away]
        };
        if g <= 0.0 {
            break;
        }
        w[fw] += g;
        w[away] -= g;
        if w[away] < 1e-15 {
            w[fw] += w[away];
            w[away] = 0.0;
        }
        for (i, ui) in u.iter_mut().enumerate() {
            *ui += g * (k[i][fw] - k[i][away]);
        }
        iters += 1;
        if iters % 1024 == 0 {
            u = mat_vec(&k, &w);
        }
        energy = dot(&w, &u);
        if opts.record_trace {
            trace.push(energy);
        }
    }
    u = mat_vec(&k, &w);
    energy = dot(&w, &u);
    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    gap = (2.0 * (energy - u_min)).max(0.0);
    Ok(CapacityEstimate {
        w: energy,
        c: 1.0 / energy,
        gap,
        iters,
        converged: gap <= opts.tol,
        weights: w,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub first: usize,
    pub second: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub capacities: Vec<f64>,
    /// `C(K_i) <= C(K_j)` for every `K_i` contained in `K_j`.
    pub monotonicity: Vec<PropertyCheck>,
    /// `C(K_i u K_j) <= C(K_i) + C(K_j)` for every pair whose union is a
    /// valid node set.
    pub subadditivity: Vec<PropertyCheck>,
    /// Pairs whose union violates the node-set invariants.
    pub untestable_unions: Vec<(usize, usize)>,
    /// Inner and outer capacities coincide: a statement about continuous
    /// measures with no discrete counterpart.
    pub inner_outer: &'static str,
}

impl PropertyReport {
    pub fn violations(&self) -> usize {
        self.monotonicity
            .iter()
            .chain(&self.subadditivity)
            .filter(|c| !c.holds)
            .count()
    }
}

/// Monotonicity and subadditivity of the discrete estimates over a family.
pub fn check_capacity_properties(
    family: &[NodeSet],
    spec: &KernelSpec,
    opts: &CapacityOptions,
    tol: f64,
) -> Result<PropertyReport> {
    if family
        .windows(2)
        .any(|w| w[0].clamp_delta != w[1].clamp_delta)
    {
        return Err(Error::IncompatibleClamp);
    }
    let caps = family
        .iter()
        .map(|s| discrete_capacity(s, spec, opts).map(|e| e.c))
        .collect::<Result<Vec<_>>>()?;
    let within = |lhs: f64, rhs: f64| lhs <= rhs + tol * rhs.abs().max(1.0);
    let mut monotonicity = Vec::new();
    let mut subadditivity = Vec::new();
    let mut untestable_unions = Vec::new();
    for i in 0..family.len() {
        for j in 0..family.len() {
            if i != j && family[i].is_subset_of(&family[j]) {
                monotonicity.push(PropertyCheck {
                    first: i,
                    second: j,
                    lhs: caps[i],
                    rhs: caps[j],
                    holds: within(caps[i], caps[j]),
                });
            }
            if i < j {
                match family[i].union(&family[j]) {
                    Ok(u) => {
                        let cu = discrete_capacity(&u, spec, opts)?.c;
                        let rhs = caps[i] + caps[j];
                        subadditivity.push(PropertyCheck {
                            first: i,
                            second: j,
                            lhs: cu,
                            rhs,
                            holds: within(cu, rhs),
                        });
                    }
                    Err(Error::Domain(_)) => untestable_unions.push((i, j)),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(PropertyReport {
        capacities: caps,
        monotonicity,
        subadditivity,
        untestable_unions,
        inner_outer: "not-discretely-testable",
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverInterval {
    pub center: BigRational,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverEstimate {
    pub scale: f64,
    pub intervals: Vec<CoverInterval>,
    pub gauge_sum: f64,
}

impl CoverEstimate {
    pub fn count(&self) -> usize {
        self.intervals.len()
    }

    /// Every sample lies strictly inside some interval, checked exactly.
    pub fn covers(&self, samples: &[BigRational]) -> bool {
        samples.iter().all(|s| {
            self.intervals.iter().any(|iv| {
                let r = BigRational::from_float(iv.radius).expect("finite radius");
                (s - &iv.center).abs() < r
            })
        })
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            scale: f64,
            count: usize,
            gauge_sum: f64,
            intervals: Vec<(String, &'a f64)>,
        }
        let out = Out {
            scale: self.scale,
            count: self.count(),
            gauge_sum: self.gauge_sum,
            intervals: self
                .intervals
                .iter()
                .map(|iv| (iv.center.to_string(), &iv.radius))
                .collect(),
        };
        serde_json::to_string(&out).expect("serializable")
    }
}

/// Left-to-right cover by open intervals of radius `epsilon / 2`, each
/// centered at the leftmost sample not yet covered.
pub fn greedy_cover(
    samples: &[BigRational],
    epsilon: f64,
    gauge: &GaugeSpec,
) -> Result<CoverEstimate> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples to cover".into()));
    }
    if samples.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("samples must be sorted".into()));
    }
    if epsilon.is_nan() || epsilon <= 0.0 || epsilon > 2.0 * gauge.domain_max {
        return Err(Error::Domain(format!(
            "epsilon {epsilon} outside (0, {}]",
            2.0 * gauge.domain_max
        )));
    }
    let radius = epsilon / 2.0;
    let h = gauge_eval(gauge, radius)?;
    let r = BigRational::from_float(radius).expect("finite radius");
    let mut intervals = Vec::new();
    let mut i = 0;
    while i < samples.len() {
        let center = samples[i].clone();
        while i < samples.len() && &samples[i] - &center < r {
            i += 1;
        }
        intervals.push(CoverInterval { center, radius });
    }
    let gauge_sum = intervals.len() as f64 * h;
    Ok(CoverEstimate {
        scale: epsilon,
        intervals,
        gauge_sum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub scale: f64,
    pub count: usize,
    pub gauge_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub levels: Vec<RefinementLevel>,
    /// `gauge_sum(scale_k) >= gauge_sum(scale_{k+1}) - tol` for each step.
    pub monotone: Vec<bool>,
}

/// Greedy covers at `epsilon, epsilon/2, ..., epsilon/2^(levels-1)`.
pub fn refinement_report(
    samples: &[BigRational],
    epsilon: f64,
    gauge: &GaugeSpec,
    levels: usize,
    tol: f64,
) -> Result<RefinementReport> {
    let mut out = Vec::with_capacity(levels);
    let mut eps = epsilon;
    for _ in 0..levels {
        let c = greedy_cover(samples, eps, gauge)?;
        out.push(RefinementLevel {
            scale: eps,
            count: c.count(),
            gauge_sum: c.gauge_sum,
        });
        eps /= 2.0;
    }
    let monotone = out
        .windows(2)
        .map(|w| w[0].gauge_sum >= w[1].gauge_sum - tol)
        .collect();
    Ok(RefinementReport {
        levels: out,
        monotone,
    })
}
