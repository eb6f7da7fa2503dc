//! Compensated and order-fixed floating point reductions.
//!
//! Parallel reductions split their index range into blocks of a fixed size
//! that does not depend on the thread count, sum each block with Neumaier
//! compensation, then combine the block sums with a pairwise tree. The
//! result is therefore bit-identical for any rayon pool size.

use rayon::prelude::*;

/// Block length used by the parallel reducers.
pub const BLOCK: usize = 256;

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        let v = self.sum + self.compensation;
        // inf - inf in the compensation path would otherwise leak a NaN
        if v.is_nan() && !self.sum.is_nan() {
            self.sum
        } else {
            v
        }
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<NeumaierSum>().value()
}

/// Pairwise (cascade) summation with a fixed split point.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        n if n <= 8 => compensated_sum(values.iter().copied()),
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Deterministic parallel sum of `f(i)` for `i in 0..n`.
pub fn par_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let blocks: Vec<f64> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(n);
            compensated_sum((start..end).map(&f))
        })
        .collect();
    pairwise_sum(&blocks)
}

/// Deterministic parallel sums of several values per index, e.g. lower and
/// upper bounds carried together.
pub fn par_sum2<F>(n: usize, f: F) -> (f64, f64)
where
    F: Fn(usize) -> (f64, f64) + Sync,
{
    let blocks: Vec<(f64, f64)> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(n);
            let mut a = NeumaierSum::new();
            let mut c = NeumaierSum::new();
            for i in start..end {
                let (x, y) = f(i);
                a.add(x);
                c.add(y);
            }
            (a.value(), c.value())
        })
        .collect();
    let (a, c): (Vec<f64>, Vec<f64>) = blocks.into_iter().unzip();
    (pairwise_sum(&a), pairwise_sum(&c))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_cancelled_bits() {
        let v = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn pairwise_matches_exact_small_integers() {
        let v: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 500500.0);
        assert_eq!(par_sum(1000, |i| (i + 1) as f64), 500500.0);
    }

    #[test]
    fn infinite_terms_do_not_produce_nan() {
        assert_eq!(compensated_sum([1.0, f64::INFINITY, 2.0]), f64::INFINITY);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn par_sum_is_independent_of_pool_size() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| par_sum(100_000, f));
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| par_sum(100_000, f));
        assert_eq!(one.to_bits(), four.to_bits());
    }
}
