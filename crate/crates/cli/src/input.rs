//! Parsing of reals, growth rules and numeric ranges from the command line.

use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;

use diocap::constructions::{GrowthKind, GrowthRule};
use diocap::real::{rational_to_f64, CertifiedReal, RealSource};

/// A real given on the command line.
#[derive(Debug, Clone)]
pub enum RealInput {
    Named(RealSource),
    Exact(BigRational),
}

impl RealInput {
    pub fn certified(&self, bits: u32) -> CertifiedReal {
        match self {
            RealInput::Named(src) => {
                CertifiedReal::new(src.clone(), bits).expect("named constants enclose")
            }
            RealInput::Exact(r) => CertifiedReal::from_rational(r.clone()),
        }
    }
}

pub fn named_constant(name: &str) -> Option<RealSource> {
    Some(match name {
        "golden" => RealSource::GoldenConjugate,
        "pi" => RealSource::Pi,
        "e" => RealSource::E,
        "pi-frac" => RealSource::Shifted(Box::new(RealSource::Pi), 3.into()),
        "e-frac" => RealSource::Shifted(Box::new(RealSource::E), 2.into()),
        _ => return None,
    })
}

pub fn parse_real(s: &str) -> Result<RealInput, String> {
    if let Some(src) = named_constant(s) {
        return Ok(RealInput::Named(src));
    }
    parse_rational(s).map(RealInput::Exact)
}

/// `p/q` or a decimal literal such as `-1.25e-3`, read exactly.
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let bad = || format!("cannot read '{s}' as a rational or decimal number");
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
        if q == BigInt::from(0) {
            return Err(format!("zero denominator in '{s}'"));
        }
        return Ok(BigRational::new(p, q));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (int, frac) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int.trim_start_matches(['-', '+']).is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let digits = if digits == "-" || digits == "+" {
        format!("{digits}0")
    } else {
        digits
    };
    let n = BigInt::from_str(&digits).map_err(|_| bad())?;
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10);
    Ok(if scale >= 0 {
        BigRational::from_integer(n * ten.pow(scale as u32))
    } else {
        BigRational::new(n, ten.pow((-scale) as u32))
    })
}

/// Named witnesses, plus `constant:C`, `poly:D`, `exp-of-q`, `exp-exp-of-q`.
pub fn parse_rule(s: &str, seed: Option<&[u64]>) -> Result<GrowthRule, String> {
    let preset = match s {
        "golden" => Some(GrowthRule::golden()),
        "nonbrjuno-exp" => Some(GrowthRule::nonbrjuno_exp()),
        "nonpm-expexp" => Some(GrowthRule::nonpm_expexp()),
        _ => None,
    };
    if let Some(mut rule) = preset {
        if let Some(seed) = seed {
            rule = GrowthRule::new(rule.kind, seed.to_vec()).map_err(|e| e.to_string())?;
        }
        return Ok(rule);
    }
    let kind = if let Some(c) = s.strip_prefix("constant:") {
        GrowthKind::Constant(c.parse().map_err(|_| format!("bad constant in '{s}'"))?)
    } else if let Some(d) = s.strip_prefix("poly:") {
        GrowthKind::Polynomial(d.parse().map_err(|_| format!("bad degree in '{s}'"))?)
    } else if s == "exp-of-q" {
        GrowthKind::ExpOfQ
    } else if s == "exp-exp-of-q" {
        GrowthKind::ExpExpOfQ
    } else {
        return Err(format!("unknown growth rule '{s}'"));
    };
    GrowthRule::new(kind, seed.map(<[u64]>::to_vec).unwrap_or_default()).map_err(|e| e.to_string())
}

/// `start:stop:xF` (geometric) or `start:stop:+S` (arithmetic), integers.
pub fn parse_int_sweep(s: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("cannot read sweep '{s}'; expected start:stop:xF or start:stop:+S");
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 1 {
        return Ok(vec![parts[0].parse().map_err(|_| bad())?]);
    }
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: u64 = parts[0].parse().map_err(|_| bad())?;
    let stop: u64 = parts[1].parse().map_err(|_| bad())?;
    let mut out = Vec::new();
    if let Some(f) = parts[2].strip_prefix('x') {
        let f: u64 = f.parse().map_err(|_| bad())?;
        if f < 2 || start == 0 {
            return Err(bad());
        }
        let mut q = start;
        while q <= stop {
            out.push(q);
            q = q.saturating_mul(f);
        }
    } else {
        let step: u64 = parts[2]
            .trim_start_matches('+')
            .parse()
            .map_err(|_| bad())?;
        if step == 0 {
            return Err(bad());
        }
        out.extend((start..=stop).step_by(step as usize));
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// `a:b:n`, `n` equispaced rationals from `a` to `b`.
pub fn parse_grid(s: &str) -> Result<(BigRational, BigRational, usize), String> {
    let bad = || format!("cannot read grid '{s}'; expected a:b:n");
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a = parse_rational(parts[0])?;
    let b = parse_rational(parts[1])?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n < 1 || a > b {
        return Err(bad());
    }
    Ok((a, b, n))
}

pub fn grid_points(a: &BigRational, b: &BigRational, n: usize) -> Vec<BigRational> {
    if n == 1 {
        return vec![a.clone()];
    }
    let step = (b - a) / BigRational::from_integer(BigInt::from(n - 1));
    (0..n)
        .map(|i| a + &step * BigRational::from_integer(BigInt::from(i)))
        .collect()
}

/// Float grid `a:b:n` or a comma-separated list.
pub fn parse_f64_points(s: &str) -> Result<Vec<f64>, String> {
    if let Ok((a, b, n)) = parse_grid(s) {
        return Ok(grid_points(&a, &b, n).iter().map(rational_to_f64).collect());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("cannot read '{t}' as a number"))
        })
        .collect()
}
