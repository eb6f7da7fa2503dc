//! The two logarithmic-type capacity kernels and the two Hausdorff gauges.
//!
//! ```text
//! K1(d) = ln^2 d * (ln ln(e + 1/d))^s
//! K2(d) = (ln ln(e + 1/d))^2 * (ln ln ln(e^3 + 1/d))^s
//! H1(t) = ln^-2(1/t) * (ln ln(1/t))^-s             0 <= t <= e^-2
//! H2(t) = (ln ln(1/t))^-2 * (ln ln ln(1/t))^-s     0 <= t <= e^-10
//! ```
//!
//! `ln(c + 1/d)` is evaluated as `-ln d + ln(1 + c d)` for `d < 1`, so
//! subnormal distances do not overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const E: f64 = std::f64::consts::E;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    K1,
    K2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub sigma: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "kernel sigma must be positive, got {sigma}"
            )));
        }
        Ok(KernelSpec { family, sigma })
    }

    pub fn k1(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::K1, sigma)
    }

    pub fn k2(sigma: f64) -> Result<Self> {
        Self::new(KernelFamily::K2, sigma)
    }

    /// The capacity-zero theorems need `sigma > 2`; smaller values are
    /// allowed but flagged.
    pub fn theorem_grade(&self) -> bool {
        self.sigma > 2.0
    }

    pub fn eval(&self, d: f64) -> f64 {
        kernel_eval(self, d)
    }
}

/// `ln(c + 1/d)` for `d > 0`.
fn ln_shifted_recip(c: f64, d: f64) -> f64 {
    if d < 1.0 {
        -d.ln() + (c * d).ln_1p()
    } else {
        (c + 1.0 / d).ln()
    }
}

/// Kernel value at distance `d >= 0`; `+inf` at `d = 0`.
pub fn kernel_eval(spec: &KernelSpec, d: f64) -> f64 {
    debug_assert!(d >= 0.0, "negative distance {d}");
    if d == 0.0 {
        return f64::INFINITY;
    }
    match spec.family {
        KernelFamily::K1 => {
            let l = d.ln();
            let inner = ln_shifted_recip(E, d).ln();
            l * l * (spec.sigma * inner.abs().ln()).exp()
        }
        KernelFamily::K2 => {
            let a = ln_shifted_recip(E, d).ln();
            let b = ln_shifted_recip(E * E * E, d).ln().ln();
            a * a * b.powf(spec.sigma)
        }
    }
}

/// Closed interval `[lo, hi]` widened outward after every operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    fn point(x: f64) -> Self {
        Bounds { lo: x, hi: x }
    }

    // libm results are within one ulp; two steps outward covers that and
    // the rounding of the operation itself
    fn widen(lo: f64, hi: f64) -> Self {
        Bounds {
            lo: lo.next_down().next_down(),
            hi: hi.next_up().next_up(),
        }
    }

    fn ln(self) -> Self {
        Bounds::widen(self.lo.ln(), self.hi.ln())
    }

    fn ln_1p(self) -> Self {
        Bounds::widen(self.lo.ln_1p(), self.hi.ln_1p())
    }

    fn add(self, o: Bounds) -> Self {
        Bounds::widen(self.lo + o.lo, self.hi + o.hi)
    }

    fn neg(self) -> Self {
        Bounds {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    fn widen_more(self) -> Self {
        Bounds::widen(self.lo, self.hi)
    }

    /// Nonnegative intervals only.
    fn mul(self, o: Bounds) -> Self {
        Bounds::widen(self.lo * o.lo, self.hi * o.hi)
    }

    fn sq(self) -> Self {
        let (a, b) = (self.lo.abs(), self.hi.abs());
        if self.lo <= 0.0 && self.hi >= 0.0 {
            Bounds::widen(0.0, (a * a).max(b * b)).clamp_nonneg()
        } else {
            Bounds::widen((a * a).min(b * b), (a * a).max(b * b))
        }
    }

    /// Nonnegative base, positive exponent.
    fn powf(self, s: f64) -> Self {
        Bounds::widen(self.lo.max(0.0).powf(s), self.hi.powf(s)).clamp_nonneg()
    }

    fn clamp_nonneg(self) -> Self {
        Bounds {
            lo: self.lo.max(0.0),
            hi: self.hi,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn ln_shifted_recip_bounds(c: f64, d: f64) -> Bounds {
    if d < 1.0 {
        let cd = Bounds::widen(c * d, c * d);
        Bounds::point(d).ln().neg().add(cd.ln_1p())
    } else {
        let r = Bounds::widen(1.0 / d, 1.0 / d);
        Bounds::point(c).add(r).ln()
    }
}

/// Certified enclosure of the kernel value, `[inf, inf]` at `d = 0`.
pub fn kernel_eval_bounds(spec: &KernelSpec, d: f64) -> Bounds {
    if d == 0.0 {
        return Bounds::point(f64::INFINITY);
    }
    // e^1 and e^3 are not floats; bracket them too
    let e = Bounds::widen(E, E);
    let e3 = Bounds::widen(E * E * E, E * E * E).widen_more();
    match spec.family {
        KernelFamily::K1 => {
            let l = Bounds::point(d).ln().sq();
            let lo = ln_shifted_recip_bounds(e.lo, d).ln();
            let hi = ln_shifted_recip_bounds(e.hi, d).ln();
            let inner = Bounds {
                lo: lo.lo,
                hi: hi.hi,
            };
            l.mul(inner.powf(spec.sigma))
        }
        KernelFamily::K2 => {
            let lo = ln_shifted_recip_bounds(e.lo, d).ln();
            let hi = ln_shifted_recip_bounds(e.hi, d).ln();
            let a = Bounds {
                lo: lo.lo,
                hi: hi.hi,
            }
            .sq();
            let lo = ln_shifted_recip_bounds(e3.lo, d).ln().ln();
            let hi = ln_shifted_recip_bounds(e3.hi, d).ln().ln();
            let b = Bounds {
                lo: lo.lo,
                hi: hi.hi,
            }
            .powf(spec.sigma);
            a.mul(b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaugeFamily {
    H1,
    H2,
    /// `h(t) = t`, for sanity checks of covering code.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeSpec {
    pub family: GaugeFamily,
    pub sigma: f64,
    pub domain_max: f64,
}

impl GaugeSpec {
    pub fn new(family: GaugeFamily, sigma: f64) -> Result<Self> {
        let domain_max = match family {
            GaugeFamily::H1 => (-2f64).exp(),
            GaugeFamily::H2 => (-10f64).exp(),
            GaugeFamily::Identity => 1.0,
        };
        if family != GaugeFamily::Identity && !(sigma > 2.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!(
                "gauge sigma must exceed 2, got {sigma}"
            )));
        }
        Ok(GaugeSpec {
            family,
            sigma,
            domain_max,
        })
    }

    pub fn h1(sigma: f64) -> Result<Self> {
        Self::new(GaugeFamily::H1, sigma)
    }

    pub fn h2(sigma: f64) -> Result<Self> {
        Self::new(GaugeFamily::H2, sigma)
    }

    pub fn identity() -> Self {
        GaugeSpec {
            family: GaugeFamily::Identity,
            sigma: 0.0,
            domain_max: 1.0,
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        gauge_eval(self, t)
    }
}

/// Gauge value on `[0, domain_max]`, zero at `t = 0`.
pub fn gauge_eval(spec: &GaugeSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t <= spec.domain_max) {
        return Err(Error::Domain(format!(
            "gauge argument {t} outside [0, {}]",
            spec.domain_max
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let u = -t.ln();
    Ok(match spec.family {
        GaugeFamily::H1 => 1.0 / (u * u * u.ln().powf(spec.sigma)),
        GaugeFamily::H2 => {
            let v = u.ln();
            1.0 / (v * v * v.ln().powf(spec.sigma))
        }
        GaugeFamily::Identity => t,
    })
}
