//! Batch means, regression slopes and sample distances.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

/// Mean and standard error from equal-size batch means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub mean: f64,
    pub stderr: f64,
    pub batch_means: Vec<f64>,
    /// First-half and second-half batch means agree within 5 pooled stderr.
    pub stationary: bool,
}

/// Streams `total` observations into `batches` contiguous batches without
/// storing them. Observation `i` lands in batch `i * batches / total`.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    total: u64,
    batches: usize,
    seen: u64,
    sums: Vec<f64>,
    /// Neumaier compensation for `sums`; long runs add millions of terms.
    comps: Vec<f64>,
    counts: Vec<u64>,
}

impl BatchAccumulator {
    pub fn new(total: u64, batches: usize) -> Self {
        assert!(batches > 0);
        BatchAccumulator {
            total: total.max(1),
            batches,
            seen: 0,
            sums: alloc::vec![0.0; batches],
            comps: alloc::vec![0.0; batches],
            counts: alloc::vec![0; batches],
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let b = ((self.seen as u128 * self.batches as u128) / self.total as u128) as usize;
        let b = b.min(self.batches - 1);
        let (s, t) = (self.sums[b], self.sums[b] + x);
        self.comps[b] += if math::abs(s) >= math::abs(x) { (s - t) + x } else { (x - t) + s };
        self.sums[b] = t;
        self.counts[b] += 1;
        self.seen += 1;
    }

    pub fn finish(&self) -> BatchSummary {
        let totals: Vec<f64> = self.sums.iter().zip(&self.comps).map(|(s, c)| s + c).collect();
        let means: Vec<f64> = totals
            .iter()
            .zip(&self.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let mut summary = summarize(means);
        // exact grand mean, independent of uneven batch sizes
        summary.mean = totals.iter().sum::<f64>() / self.seen.max(1) as f64;
        summary
    }
}

/// Summary of precomputed batch estimates (treated as iid).
pub fn summarize(batch_means: Vec<f64>) -> BatchSummary {
    let b = batch_means.len();
    let mean = mean(&batch_means);
    let stderr = if b > 1 {
        math::sqrt(variance(&batch_means) / b as f64)
    } else {
        0.0
    };
    let stationary = halves_agree(&batch_means);
    BatchSummary {
        mean,
        stderr,
        batch_means,
        stationary,
    }
}

fn halves_agree(batch_means: &[f64]) -> bool {
    let b = batch_means.len();
    if b < 4 {
        return true;
    }
    let (first, second) = batch_means.split_at(b / 2);
    let se2 = variance(first) / first.len() as f64 + variance(second) / second.len() as f64;
    let gap = math::abs(mean(first) - mean(second));
    gap <= 5.0 * math::sqrt(se2) || gap == 0.0
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Ordinary least-squares slope of `y` on `t`.
pub fn ls_slope(t: &[f64], y: &[f64]) -> f64 {
    let tm = mean(t);
    let ym = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (ti, yi) in t.iter().zip(y) {
        sxy += (ti - tm) * (yi - ym);
        sxx += (ti - tm) * (ti - tm);
    }
    sxy / sxx
}

/// Empirical 1-Wasserstein distance between two samples: the L1 distance
/// between their empirical CDFs.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| math::abs(x - y)).sum::<f64>() / a.len() as f64;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut last = f64::min(a[0], b[0]);
    let mut area = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        area += math::abs(i as f64 / na - j as f64 / nb) * (next - last);
        last = next;
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
    }
    area
}

/// Kendall-type trend statistic in [-1, 1]: the normalized count of
/// increasing minus decreasing pairs. Negative means a decreasing series.
pub fn trend(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += match xs[j].partial_cmp(&xs[i]) {
                Some(core::cmp::Ordering::Greater) => 1,
                Some(core::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn batches_split_evenly() {
        let mut acc = BatchAccumulator::new(100, 4);
        for i in 0..100 {
            acc.push(i as f64);
        }
        let s = acc.finish();
        assert_eq!(s.batch_means, [12.0, 37.0, 62.0, 87.0]);
        assert_eq!(s.mean, 49.5);
        let mut acc = BatchAccumulator::new(1000, 10);
        for i in 0..1000 {
            acc.push(if i < 500 { 0.0 } else { 10.0 } + (i % 7) as f64);
        }
        assert!(!acc.finish().stationary);
        let mut acc = BatchAccumulator::new(1000, 10);
        for i in 0..1000 {
            acc.push((i % 7) as f64);
        }
        assert!(acc.finish().stationary);
    }

    #[test]
    fn slope_of_line() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 - 3.0 * t).collect();
        assert!((ls_slope(&t, &y) + 3.0).abs() < 1e-12);
    }

    #[test]
    fn w1_of_shift() {
        let a = [0.0, 1.0, 2.0];
        let b = [0.5, 1.5, 2.5];
        assert!((wasserstein1(&a, &b) - 0.5).abs() < 1e-15);
        // unequal sizes: point mass at 0 vs {0, 1} differs by 1/2 on [0, 1)
        assert!((wasserstein1(&[0.0], &[0.0, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn trend_sign() {
        assert_eq!(trend(&[5.0, 4.0, 3.0, 1.0]), -1.0);
        assert_eq!(trend(&[1.0, 2.0, 3.0]), 1.0);
    }

    proptest! {
        #[test]
        fn w1_symmetric_and_nonnegative(
            a in proptest::collection::vec(-10.0f64..10.0, 1..30),
            b in proptest::collection::vec(-10.0f64..10.0, 1..30),
        ) {
            let d1 = wasserstein1(&a, &b);
            let d2 = wasserstein1(&b, &a);
            prop_assert!(d1 >= 0.0);
            prop_assert!((d1 - d2).abs() < 1e-9);
            prop_assert!(wasserstein1(&a, &a) < 1e-12);
        }

        #[test]
        fn w1_shift_equals_offset(a in proptest::collection::vec(-10.0f64..10.0, 1..30), c in -5.0f64..5.0) {
            let b: Vec<f64> = a.iter().map(|x| x + c).collect();
            prop_assert!((wasserstein1(&a, &b) - c.abs()).abs() < 1e-9);
        }
    }
}
