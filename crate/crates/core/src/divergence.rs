//! Monte Carlo estimates of the Girsanov divergence budgets and checks against
//! the closed-form bounds and the Harnack / Donsker–Varadhan duality.
//!
//! The simulator attaches the steering drift to `X''`, so the Rényi estimate
//! below bounds `R_q(δ_{x'}P_T ‖ δ_x P_T)`; the closed-form bound is symmetric
//! in `(x, x')` and is compared as is.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupling::TrajectoryStats;
use crate::error::{Error, Result};
use crate::schedule::{renyi_kappa, ScheduleParams};
use crate::stats::{bootstrap_ci, log_mean_exp, mean_se};

/// Top fraction of paths used by the heavy-tail diagnostic.
pub const HEAVY_TAIL_TOP: f64 = 0.01;
/// Share of the exponential mean above which the top paths trigger the flag.
pub const HEAVY_TAIL_SHARE: f64 = 0.5;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
/// Two-sided bootstrap level.
pub const CI_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenyiEstimate {
    pub q: f64,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Share of `mean(exp(κ_q I))` carried by the top 1% of paths.
    pub top_share: f64,
    pub heavy_tail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub kl_mc: Estimate,
    pub kl_theorem: f64,
    pub renyi_mc: BTreeMap<String, RenyiEstimate>,
    pub renyi_theorem: BTreeMap<String, f64>,
    pub n_paths: usize,
    pub notes: Vec<String>,
}

fn check_horizon(stats: &TrajectoryStats, sp: &ScheduleParams) -> Result<()> {
    if (stats.horizon - sp.horizon).abs() > 1e-12 * sp.horizon {
        return Err(Error::invalid(
            "stats",
            format!("horizon {} does not match schedule T = {}", stats.horizon, sp.horizon),
        ));
    }
    Ok(())
}

/// `(1/2) E ∫₀ᵀ η_t² |Z_t| dt` from per-path budgets, with CLT error.
pub fn kl_girsanov_estimate(stats: &TrajectoryStats, sp: &ScheduleParams) -> Result<Estimate> {
    check_horizon(stats, sp)?;
    if stats.per_path_girsanov.is_empty() {
        return Err(Error::invalid("stats", "no completed paths"));
    }
    let (m, se) = mean_se(&stats.per_path_girsanov);
    Ok(Estimate {
        value: 0.5 * m,
        se: 0.5 * se,
    })
}

/// The same quantity as [`kl_girsanov_estimate`] computed from the recorded
/// grid: trapezoid of `η_t² · E|Z_t|`. Agrees exactly only for stride 1.
pub fn kl_from_grid(stats: &TrajectoryStats, sp: &ScheduleParams) -> Result<f64> {
    check_horizon(stats, sp)?;
    let g: Vec<f64> = stats
        .grid
        .iter()
        .zip(&stats.mean_abs_z)
        .map(|(&t, &z)| sp.eta_unchecked(t).powi(2) * z)
        .collect();
    let integral: f64 = stats
        .grid
        .windows(2)
        .zip(g.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(0.5 * integral)
}

/// `(1/(2(q-1))) ln mean(exp(κ_q Iᵢ))` with a percentile bootstrap interval.
pub fn renyi_girsanov_estimate(per_path_integrals: &[f64], q: f64, resamples: usize, seed: u64) -> Result<RenyiEstimate> {
    if !(q.is_finite() && q > 1.0) {
        return Err(Error::invalid("q", format!("must be finite and > 1, got {q}")));
    }
    if per_path_integrals.is_empty() {
        return Err(Error::invalid("per_path_integrals", "empty"));
    }
    if per_path_integrals.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::invalid("per_path_integrals", "entries must be finite and >= 0"));
    }
    let kappa = renyi_kappa(q);
    let scale = 1.0 / (2.0 * (q - 1.0));
    let est = |xs: &[f64]| scale * log_mean_exp(xs, kappa);
    let value = est(per_path_integrals);
    let (ci_lo, ci_hi) = if resamples > 0 {
        bootstrap_ci(per_path_integrals, resamples, CI_ALPHA, seed, est)
    } else {
        (value, value)
    };
    let top_share = top_share(per_path_integrals, kappa);
    Ok(RenyiEstimate {
        q,
        value,
        ci_lo,
        ci_hi,
        top_share,
        heavy_tail: top_share > HEAVY_TAIL_SHARE,
    })
}

fn top_share(xs: &[f64], kappa: f64) -> f64 {
    let max = xs.iter().map(|x| kappa * x).fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = xs.iter().map(|x| (kappa * x - max).exp()).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    let top = ((HEAVY_TAIL_TOP * xs.len() as f64).ceil() as usize).max(1);
    let total: f64 = w.iter().sum();
    w[..top].iter().sum::<f64>() / total
}

/// KL and Rényi Monte Carlo budgets next to their closed-form bounds.
pub fn divergence_report(
    stats: &TrajectoryStats,
    sp: &ScheduleParams,
    q_list: &[f64],
    resamples: usize,
    seed: u64,
) -> Result<DivergenceReport> {
    let kl_mc = kl_girsanov_estimate(stats, sp)?;
    let mut renyi_mc = BTreeMap::new();
    let mut renyi_theorem = BTreeMap::new();
    let mut notes = Vec::new();
    for (i, &q) in q_list.iter().enumerate() {
        let r = renyi_girsanov_estimate(&stats.per_path_girsanov, q, resamples, seed.wrapping_add(i as u64))?;
        if r.heavy_tail {
            notes.push(format!(
                "heavy_tail: q={q}, top 1% of paths carry {:.1}% of the exponential mean",
                100.0 * r.top_share
            ));
        }
        renyi_mc.insert(format!("{q}"), r);
        renyi_theorem.insert(format!("{q}"), sp.renyi_bound(q)?);
    }
    if stats.n_diverged > 0 {
        notes.push(format!("diverged_paths: {}", stats.n_diverged));
    }
    if stats.failed {
        notes.push("run_failed: diverged fraction above threshold".into());
    }
    Ok(DivergenceReport {
        kl_mc,
        kl_theorem: sp.kl_bound(),
        renyi_mc,
        renyi_theorem,
        n_paths: stats.per_path_girsanov.len(),
        notes,
    })
}

/// Donsker–Varadhan slack
/// `KL(p‖r) + ln Σ rᵢ e^{φᵢ} - Σ pᵢ φᵢ >= 0` for discrete `p`, `r`.
pub fn dv_duality_check(p: &[f64], r: &[f64], phi: &[f64]) -> Result<f64> {
    if p.len() != r.len() || p.len() != phi.len() || p.is_empty() {
        return Err(Error::SupportMismatch(format!(
            "lengths p={}, r={}, phi={}",
            p.len(),
            r.len(),
            phi.len()
        )));
    }
    for (name, v) in [("p", p), ("r", r)] {
        if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid(name, "entries must be finite and >= 0"));
        }
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(name, format!("must sum to 1, got {s}")));
        }
    }
    if phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("phi"));
    }
    if let Some(i) = (0..p.len()).find(|&i| p[i] > 0.0 && r[i] == 0.0) {
        return Err(Error::SupportMismatch(format!("p[{i}] > 0 but r[{i}] = 0")));
    }
    let kl: f64 = p
        .iter()
        .zip(r)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, ri)| pi * (pi / ri).ln())
        .sum();
    let max = phi
        .iter()
        .zip(r)
        .filter(|(_, ri)| **ri > 0.0)
        .map(|(f, _)| *f)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + r.iter()
            .zip(phi)
            .filter(|(ri, _)| **ri > 0.0)
            .map(|(ri, f)| ri * (f - max).exp())
            .sum::<f64>()
            .ln();
    let lin: f64 = p.iter().zip(phi).map(|(pi, f)| pi * f).sum();
    Ok(kl + lse - lin)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackSide {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub margin: f64,
    pub combined_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackReport {
    /// `P_T φ(x) <= C(x,x',T) + ln P_T(e^φ)(x')`.
    pub log_harnack: HarnackSide,
    /// `P_T φ(x) <= C_{q'} (P_T φ^{q'}(x'))^{1/q'}`; absent when φ is not
    /// strictly positive on the samples.
    pub power_harnack: Option<HarnackSide>,
    pub q_prime: f64,
    pub log_constant: f64,
    pub power_constant: f64,
    pub n_x: usize,
    pub n_x_prime: usize,
}

/// Number of combined standard errors allowed before a Harnack side fails.
pub const HARNACK_SIGMAS: f64 = 3.0;

/// Empirical log- and power-Harnack check from independent endpoint samples
/// of `δ_x P_T` and `δ_{x'} P_T`.
pub fn harnack_check<F>(samples_x: &[Vec<f64>], samples_xp: &[Vec<f64>], sp: &ScheduleParams, phi: F, q_prime: f64) -> Result<HarnackReport>
where
    F: Fn(&[f64]) -> f64,
{
    if samples_x.len() < 2 || samples_xp.len() < 2 {
        return Err(Error::invalid("samples", "need at least two samples per side"));
    }
    if !(q_prime.is_finite() && q_prime > 1.0) {
        return Err(Error::invalid("q_prime", format!("must be finite and > 1, got {q_prime}")));
    }
    let fx: Vec<f64> = samples_x.iter().map(|s| phi(s)).collect();
    let fxp: Vec<f64> = samples_xp.iter().map(|s| phi(s)).collect();
    if fx.iter().chain(&fxp).any(|v| !v.is_finite()) {
        return Err(Error::invalid("phi", "test function must be bounded on the samples"));
    }

    let (lhs, lhs_se) = mean_se(&fx);
    let log_constant = sp.kl_bound();
    let exp_vals: Vec<f64> = fxp.iter().map(|v| v.exp()).collect();
    let (em, ese) = mean_se(&exp_vals);
    let log_side = side(lhs, lhs_se, log_constant + em.ln(), ese / em);

    let q = q_prime / (q_prime - 1.0);
    let power_constant = ((q - 1.0) / q * sp.renyi_bound(q)?).exp();
    let power_harnack = if fx.iter().chain(&fxp).all(|v| *v > 0.0) {
        let pw: Vec<f64> = fxp.iter().map(|v| v.powf(q_prime)).collect();
        let (pm, pse) = mean_se(&pw);
        let norm = pm.powf(1.0 / q_prime);
        let rhs = power_constant * norm;
        let rhs_se = power_constant * norm / (q_prime * pm) * pse;
        Some(side(lhs, lhs_se, rhs, rhs_se))
    } else {
        None
    };

    Ok(HarnackReport {
        log_harnack: log_side,
        power_harnack,
        q_prime,
        log_constant,
        power_constant,
        n_x: samples_x.len(),
        n_x_prime: samples_xp.len(),
    })
}

fn side(lhs: f64, lhs_se: f64, rhs: f64, rhs_se: f64) -> HarnackSide {
    let combined_se = lhs_se.hypot(rhs_se);
    HarnackSide {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        margin: rhs - lhs,
        combined_se,
        pass: lhs <= rhs + HARNACK_SIGMAS * combined_se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Certificate;
    use crate::schedule::make_schedule;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sp() -> ScheduleParams {
        make_schedule(&Certificate::new(1.0, 1.0, 1.0).unwrap(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn dv_examples() {
        assert_eq!(dv_duality_check(&[0.5, 0.5], &[0.5, 0.5], &[0.0, 0.0]).unwrap(), 0.0);
        let p = [0.7f64, 0.3];
        let r = [0.5, 0.5];
        let phi: Vec<f64> = p.iter().zip(&r).map(|(a, b)| (a / b).ln()).collect();
        assert!(dv_duality_check(&p, &r, &phi).unwrap().abs() < 1e-12);
        // frozen from an mpmath evaluation
        let s = dv_duality_check(&p, &r, &[1.0, -1.0]).unwrap();
        assert_relative_eq!(s, 0.116_063_708_988_079_03, max_relative = 1e-12);
    }

    #[test]
    fn dv_rejects_mismatch() {
        assert!(matches!(
            dv_duality_check(&[1.0], &[0.5, 0.5], &[0.0, 0.0]),
            Err(Error::SupportMismatch(_))
        ));
        assert!(matches!(
            dv_duality_check(&[0.5, 0.5], &[1.0, 0.0], &[0.0, 0.0]),
            Err(Error::SupportMismatch(_))
        ));
        assert!(dv_duality_check(&[0.5, 0.6], &[0.5, 0.5], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn dv_equality_case_with_offset() {
        let p = [0.1f64, 0.2, 0.3, 0.4];
        let r = [0.25; 4];
        let phi: Vec<f64> = p.iter().zip(&r).map(|(a, b)| (a / b).ln() + 3.7).collect();
        assert!(dv_duality_check(&p, &r, &phi).unwrap().abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn dv_slack_nonnegative(raw in proptest::collection::vec((0.0f64..1.0, 0.01f64..1.0, -5.0f64..5.0), 1..16)) {
            let sp: f64 = raw.iter().map(|t| t.0).sum();
            prop_assume!(sp > 0.0);
            let sr: f64 = raw.iter().map(|t| t.1).sum();
            let p: Vec<f64> = raw.iter().map(|t| t.0 / sp).collect();
            let r: Vec<f64> = raw.iter().map(|t| t.1 / sr).collect();
            let phi: Vec<f64> = raw.iter().map(|t| t.2).collect();
            prop_assert!(dv_duality_check(&p, &r, &phi).unwrap() >= -1e-12);
        }

        #[test]
        fn renyi_estimate_monotone_in_q(xs in proptest::collection::vec(0.0f64..10.0, 1..50), q1 in 1.01f64..4.0, dq in 0.0f64..4.0) {
            let a = renyi_girsanov_estimate(&xs, q1, 0, 0).unwrap().value;
            let b = renyi_girsanov_estimate(&xs, q1 + dq, 0, 0).unwrap().value;
            prop_assert!(b >= a - 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn renyi_zero_integrals() {
        let r = renyi_girsanov_estimate(&[0.0; 100], 2.0, 50, 1).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!((r.ci_lo, r.ci_hi), (0.0, 0.0));
        assert!(renyi_girsanov_estimate(&[0.0], 1.0, 0, 0).is_err());
    }

    #[test]
    fn renyi_near_one_approaches_half_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() * 3.0).collect();
        let half_mean = 0.5 * xs.iter().sum::<f64>() / xs.len() as f64;
        let r = renyi_girsanov_estimate(&xs, 1.0 + 1e-6, 0, 0).unwrap();
        assert_relative_eq!(r.value, half_mean, max_relative = 1e-4);
    }

    #[test]
    fn heavy_tail_flag() {
        let mut xs = vec![0.0; 999];
        xs.push(50.0);
        assert!(renyi_girsanov_estimate(&xs, 2.0, 0, 0).unwrap().heavy_tail);
        assert!(!renyi_girsanov_estimate(&[1.0; 1000], 2.0, 0, 0).unwrap().heavy_tail);
    }

    #[test]
    fn harnack_constant_test_functions() {
        let s = sp();
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let rep = harnack_check(&xs, &xs, &s, |_| 0.8, 2.0).unwrap();
        assert_relative_eq!(rep.log_harnack.lhs, 0.8, max_relative = 1e-15);
        assert_relative_eq!(rep.log_harnack.margin, s.kl_bound(), max_relative = 1e-12);
        assert!(rep.log_harnack.pass);
        let rep = harnack_check(&xs, &xs, &s, |_| 1.0, 2.0).unwrap();
        let p = rep.power_harnack.unwrap();
        assert_eq!(p.lhs, 1.0);
        assert!(p.rhs >= 1.0 && p.pass);
        let tanh = harnack_check(&xs, &xs, &s, |x| x[0].tanh() - 0.5, 2.0).unwrap();
        assert!(tanh.power_harnack.is_none());
        assert!(harnack_check(&xs, &xs, &s, |x| 1.0 / (x[0] - x[0]), 2.0).is_err());
    }
}
