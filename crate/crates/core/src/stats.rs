//! Small Monte Carlo reductions: mean with CLT standard error, shifted
//! log-mean-exp, and percentile bootstrap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sample mean and standard error of the mean (`NaN` for an empty slice).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `ln((1/n) Σ exp(k·xᵢ))`, evaluated after subtracting the largest exponent.
pub fn log_mean_exp(xs: &[f64], k: f64) -> f64 {
    log_mean_exp_shifted(xs, k, xs.iter().map(|x| k * x).fold(f64::NEG_INFINITY, f64::max))
}

/// Same as [`log_mean_exp`] with an explicit shift; the result does not depend
/// on `shift` up to rounding.
pub fn log_mean_exp_shifted(xs: &[f64], k: f64, shift: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let s: f64 = xs.iter().map(|x| (k * x - shift).exp()).sum();
    shift + (s / xs.len() as f64).ln()
}

/// Percentile bootstrap interval `(lo, hi)` at two-sided level `1 - alpha` for
/// the statistic `stat`, with a dedicated ChaCha8 stream.
pub fn bootstrap_ci<F>(xs: &[f64], resamples: usize, alpha: f64, seed: u64, stat: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    if xs.is_empty() || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = xs.len();
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..n)];
            }
            stat(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    (quantile_sorted(&stats, alpha / 2.0), quantile_sorted(&stats, 1.0 - alpha / 2.0))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn mean_se_basics() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_relative_eq!(se, (5.0f64 / 3.0 / 4.0).sqrt(), max_relative = 1e-15);
        assert_eq!(mean_se(&[7.0]), (7.0, 0.0));
        assert!(mean_se(&[]).0.is_nan());
    }

    #[test]
    fn log_mean_exp_handles_huge_exponents() {
        let v = log_mean_exp(&[1000.0, 1000.0], 1.0);
        assert_relative_eq!(v, 1000.0, max_relative = 1e-15);
        let v = log_mean_exp(&[0.0, 2000.0], 1.0);
        assert_relative_eq!(v, 2000.0 - 2f64.ln(), max_relative = 1e-15);
        assert_eq!(log_mean_exp(&[0.0; 5], 3.0), 0.0);
    }

    #[test]
    fn bootstrap_is_deterministic_and_brackets_mean() {
        let xs: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let a = bootstrap_ci(&xs, 400, 0.05, 3, mean);
        let b = bootstrap_ci(&xs, 400, 0.05, 3, mean);
        assert_eq!(a, b);
        let m = mean(&xs);
        assert!(a.0 < m && m < a.1);
    }

    proptest! {
        #[test]
        fn shift_invariance(xs in proptest::collection::vec(0.0f64..50.0, 1..40), k in 0.01f64..5.0, shift in -20.0f64..20.0) {
            let a = log_mean_exp(&xs, k);
            let max = xs.iter().map(|x| k * x).fold(f64::NEG_INFINITY, f64::max);
            let b = log_mean_exp_shifted(&xs, k, max + shift);
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
