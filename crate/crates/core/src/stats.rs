//! Small numeric helpers shared by the bootstrap and the sweep summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Percentile with linear interpolation between order statistics (the
/// "type 7" definition). `q` is a fraction in `[0, 1]`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    percentile_sorted(&sorted, q)
}

pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// RNG for job `index` of a run seeded with `seed`. Each job gets its own
/// ChaCha stream, so the draws for a job never depend on how many jobs ran
/// before it or on which thread ran it.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Evenly spaced points covering `[lo, hi]` inclusive. A degenerate interval
/// or `n == 1` yields the single point `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn percentile_interpolates() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 1.0), 4.0);
        assert!((percentile(&xs, 0.5) - 2.5).abs() < 1e-15);
        assert!((percentile(&xs, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn expit_is_stable_at_extremes() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(800.0) <= 1.0);
        assert!(expit(-800.0) >= 0.0);
        assert!((expit(2.0) + expit(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a: u64 = stream_rng(7, 3).random();
        let _: u64 = stream_rng(7, 2).random();
        let b: u64 = stream_rng(7, 3).random();
        assert_eq!(a, b);
        assert_ne!(a, stream_rng(7, 4).random::<u64>());
    }

    #[test]
    fn linspace_hits_endpoints() {
        let g = linspace(-0.5, 0.5, 11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], -0.5);
        assert_eq!(g[5], 0.0);
        assert_eq!(g[10], 0.5);
        assert_eq!(linspace(0.2, 0.2, 5), vec![0.2]);
    }
}
