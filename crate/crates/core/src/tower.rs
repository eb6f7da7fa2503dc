//! Iterated-exponential number representation.
//!
//! A [`Tower`] stores a value as `exp^height(top)` with a plain `f64` on top.
//! Height zero is an ordinary float (any sign); every height above zero
//! represents a positive number beyond `f64::MAX`, normalized so that
//! `top > ln(f64::MAX)`. This is enough to carry `ln Q_n`, `ln ln Q_n`, ...
//! for partial quotients that grow like iterated exponentials, where `Q_n`
//! itself leaves floating point range after a handful of steps.
//!
//! Arithmetic is carried out in log space when a plain float would overflow.
//! Relative accuracy is measured on the top-level float.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// `ln(f64::MAX)`, rounded down.
pub const LN_MAX: f64 = 709.782_712_893_384;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tower {
    height: u32,
    top: f64,
}

impl Tower {
    pub const ZERO: Tower = Tower {
        height: 0,
        top: 0.0,
    };
    pub const ONE: Tower = Tower {
        height: 0,
        top: 1.0,
    };

    pub fn from_f64(x: f64) -> Self {
        Tower { height: 0, top: x }
    }

    /// Builds `exp^height(top)`, normalizing the representation.
    pub fn new(height: u32, top: f64) -> Self {
        let mut t = Tower::from_f64(top);
        for _ in 0..height {
            t = t.exp();
        }
        t
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn top(&self) -> f64 {
        self.top
    }

    /// The value as a float, `+inf` beyond range.
    pub fn to_f64(&self) -> f64 {
        if self.height == 0 {
            self.top
        } else {
            f64::INFINITY
        }
    }

    pub fn fits_f64(&self) -> bool {
        self.height == 0 && self.top.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.height == 0 && self.top == 0.0
    }

    pub fn is_positive(&self) -> bool {
        self.height > 0 || self.top > 0.0
    }

    pub fn exp(self) -> Self {
        if self.height == 0 {
            if self.top <= LN_MAX || self.top.is_nan() {
                Tower::from_f64(self.top.exp())
            } else if self.top == f64::INFINITY {
                self
            } else {
                Tower {
                    height: 1,
                    top: self.top,
                }
            }
        } else {
            Tower {
                height: self.height + 1,
                top: self.top,
            }
        }
    }

    pub fn ln(self) -> Self {
        if self.height == 0 {
            Tower::from_f64(self.top.ln())
        } else {
            Tower {
                height: self.height - 1,
                top: self.top,
            }
        }
    }

    /// Applies `ln` repeatedly.
    pub fn ln_n(self, times: u32) -> Self {
        (0..times).fold(self, |t, _| t.ln())
    }

    pub fn neg_infinity() -> Self {
        Tower::from_f64(f64::NEG_INFINITY)
    }

    pub fn powf(self, exponent: f64) -> Tower {
        if exponent == 0.0 {
            return Tower::ONE;
        }
        if self.height == 0 {
            let p = self.top.powf(exponent);
            if p.is_finite() && (p != 0.0 || self.top == 0.0) {
                return Tower::from_f64(p);
            }
            if self.top <= 0.0 || !self.top.is_finite() {
                return Tower::from_f64(p);
            }
        }
        (self.ln() * Tower::from_f64(exponent)).exp()
    }

    pub fn sqrt(self) -> Tower {
        self.powf(0.5)
    }

    pub fn recip(self) -> Tower {
        Tower::ONE / self
    }

    fn abs(self) -> Tower {
        if self.height == 0 {
            Tower::from_f64(self.top.abs())
        } else {
            self
        }
    }
}

impl Add for Tower {
    type Output = Tower;

    fn add(self, other: Tower) -> Tower {
        if self.height == 0 && other.height == 0 {
            let s = self.top + other.top;
            if s.is_finite() || !self.top.is_finite() || !other.top.is_finite() {
                return Tower::from_f64(s);
            }
        }
        let (big, small) = if self >= other {
            (self, other)
        } else {
            (other, self)
        };
        if small.height == 0 && small.top <= 0.0 {
            // big is beyond float range, a float-sized subtraction is invisible
            // except for -inf
            if small.top == f64::NEG_INFINITY {
                return small;
            }
            return big;
        }
        let ratio = (small / big).to_f64();
        (big.ln() + Tower::from_f64(ratio.ln_1p())).exp()
    }
}

impl Sub for Tower {
    type Output = Tower;

    fn sub(self, other: Tower) -> Tower {
        if self.height == 0 && other.height == 0 {
            return Tower::from_f64(self.top - other.top);
        }
        match self.partial_cmp(&other) {
            Some(Ordering::Equal) => Tower::ZERO,
            Some(Ordering::Greater) => {
                if other.height == 0 && other.top <= 0.0 {
                    return self;
                }
                let ratio = (other / self).to_f64();
                if ratio >= 1.0 {
                    return Tower::ZERO;
                }
                (self.ln() + Tower::from_f64((-ratio).ln_1p())).exp()
            }
            _ => {
                let d = other - self;
                if d.height == 0 {
                    Tower::from_f64(-d.top)
                } else {
                    Tower::neg_infinity()
                }
            }
        }
    }
}

impl Mul for Tower {
    type Output = Tower;

    fn mul(self, other: Tower) -> Tower {
        if self.height == 0 && other.height == 0 {
            let p = self.top * other.top;
            if p.is_finite() || !self.top.is_finite() || !other.top.is_finite() {
                return Tower::from_f64(p);
            }
        }
        if self.is_zero() || other.is_zero() {
            return Tower::ZERO;
        }
        let negative =
            (self.height == 0 && self.top < 0.0) ^ (other.height == 0 && other.top < 0.0);
        let m = (self.abs().ln() + other.abs().ln()).exp();
        if negative {
            Tower::neg_infinity()
        } else {
            m
        }
    }
}

impl Div for Tower {
    type Output = Tower;

    fn div(self, other: Tower) -> Tower {
        if self.height == 0 && other.height == 0 {
            let q = self.top / other.top;
            if q.is_finite() && (q != 0.0 || self.top == 0.0) {
                return Tower::from_f64(q);
            }
            if !self.top.is_finite() || other.top == 0.0 || !other.top.is_finite() {
                return Tower::from_f64(q);
            }
        }
        if self.is_zero() {
            return Tower::ZERO;
        }
        if self.height == 0 && self.top < 0.0 {
            let d = Tower::from_f64(-self.top) / other;
            return if d.height == 0 {
                Tower::from_f64(-d.top)
            } else {
                Tower::neg_infinity()
            };
        }
        (self.ln() - other.ln()).exp()
    }
}

impl From<f64> for Tower {
    fn from(x: f64) -> Self {
        Tower::from_f64(x)
    }
}

impl PartialOrd for Tower {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.height, other.height) {
            (0, 0) => self.top.partial_cmp(&other.top),
            (a, b) if a == b => self.top.partial_cmp(&other.top),
            (a, b) => {
                // +inf at height 0 stands for an unbounded value and compares
                // above every tower
                if a == 0 && self.top == f64::INFINITY {
                    return Some(Ordering::Greater);
                }
                if b == 0 && other.top == f64::INFINITY {
                    return Some(Ordering::Less);
                }
                Some(a.cmp(&b))
            }
        }
    }
}

impl fmt::Display for Tower {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.height == 0 {
            write!(f, "{}", self.top)
        } else {
            write!(f, "exp^{}({})", self.height, self.top)
        }
    }
}

impl Serialize for Tower {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.height == 0 && self.top.is_finite() {
            serializer.serialize_f64(self.top)
        } else {
            let mut s = serializer.serialize_struct("Tower", 2)?;
            s.serialize_field("height", &self.height)?;
            s.serialize_field(
                "top",
                &(if self.top.is_finite() {
                    Some(self.top)
                } else {
                    None
                }),
            )?;
            s.end()
        }
    }
}

/// Running sum of nonnegative [`Tower`] terms; float-sized terms are summed
/// with compensation, larger ones in log space.
#[derive(Debug, Clone, Copy)]
pub struct TowerSum {
    small: crate::summation::NeumaierSum,
    big: Tower,
}

impl Default for TowerSum {
    fn default() -> Self {
        Self::new()
    }
}

impl TowerSum {
    const SMALL_LIMIT: f64 = 1e300;

    pub fn new() -> Self {
        TowerSum {
            small: crate::summation::NeumaierSum::new(),
            big: Tower::ZERO,
        }
    }

    pub fn add(&mut self, term: Tower) {
        if term.height == 0 && term.top.abs() < Self::SMALL_LIMIT {
            self.small.add(term.top);
        } else {
            self.big = self.big + term;
        }
    }

    pub fn value(&self) -> Tower {
        let s = self.small.value();
        if self.big.is_zero() {
            Tower::from_f64(s)
        } else {
            self.big + Tower::from_f64(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs())
    }

    #[test]
    fn float_range_arithmetic_is_plain() {
        let a = Tower::from_f64(3.0);
        let b = Tower::from_f64(4.0);
        assert_eq!((a + b).to_f64(), 7.0);
        assert_eq!((a * b).to_f64(), 12.0);
        assert_eq!((a / b).to_f64(), 0.75);
        assert_eq!(b.powf(0.5).to_f64(), 2.0);
        assert_eq!((a - b).to_f64(), -1.0);
    }

    #[test]
    fn overflowing_exp_lifts_height() {
        let t = Tower::from_f64(1000.0).exp();
        assert_eq!(t.height(), 1);
        assert_eq!(t.ln().to_f64(), 1000.0);
        let tt = t.exp();
        assert_eq!(tt.height(), 2);
        assert!(tt > t);
        assert!(t > Tower::from_f64(f64::MAX));
        assert!(Tower::from_f64(700.0).exp().fits_f64());
    }

    #[test]
    fn ratios_of_huge_values() {
        let a = Tower::from_f64(1000.0).exp();
        let b = Tower::from_f64(1001.0).exp();
        assert!(close((a / b).to_f64(), (-1.0f64).exp(), 1e-12));
        assert!(close((b / a).to_f64(), 1.0f64.exp(), 1e-12));
        assert_eq!((a / a).to_f64(), 1.0);
        // (e^1000)^2 = e^2000
        assert!(close((a * a).ln().to_f64(), 2000.0, 1e-15));
        assert!(close(a.powf(1.3).ln().to_f64(), 1300.0, 1e-15));
        assert!(close((a + a).ln().to_f64(), 1000.0 + 2f64.ln(), 1e-15));
        assert_eq!((Tower::ONE / a).to_f64(), 0.0);
    }

    #[test]
    fn subtraction_of_towers() {
        let a = Tower::from_f64(1000.0).exp();
        let b = Tower::from_f64(999.0).exp();
        let d = a - b;
        assert!(close(
            d.ln().to_f64(),
            1000.0 + (-(-1.0f64).exp()).ln_1p(),
            1e-14
        ));
        assert_eq!((b - a).to_f64(), f64::NEG_INFINITY);
        assert_eq!(a - a, Tower::ZERO);
    }

    #[test]
    fn tower_sum_mixes_scales() {
        let mut s = TowerSum::new();
        s.add(Tower::from_f64(1.0));
        s.add(Tower::from_f64(2.0));
        assert_eq!(s.value().to_f64(), 3.0);
        s.add(Tower::from_f64(800.0).exp());
        assert!(close(s.value().ln().to_f64(), 800.0, 1e-15));
    }

    #[test]
    fn ordering_by_height() {
        // exp(exp(exp(5))) sits at height 1, exp(exp(1e300)) at height 2
        let a = Tower::new(3, 5.0);
        let b = Tower::new(2, 1e300);
        assert_eq!(a.height(), 1);
        assert!(a < b);
        assert!(Tower::from_f64(-1.0) < Tower::ZERO);
    }
}
