//! Quadrature cross-checks of the schedule's closed forms. The integrands are
//! written from their definitions, including a nested quadrature for the
//! inner constraint integral, and never call the closed forms they check.

use serde::{Deserialize, Serialize};

use crate::quadrature::integrate;
use crate::schedule::ScheduleParams;

pub const CONSTRAINT_TOL: f64 = 1e-10;
pub const J_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub k: u32,
    pub closed_form: f64,
    pub quadrature: f64,
    pub rel_error: f64,
    pub alpha_beta_bound: f64,
    pub below_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleVerification {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub constraint_value: f64,
    pub constraint_residual: f64,
    pub j_closed_form: f64,
    pub j_quadrature: f64,
    pub j_rel_error: f64,
    pub moments: Vec<MomentCheck>,
    pub pass: bool,
}

/// `η̄(t)` from its defining formula, independent of the production path.
fn eta_bar_def(sp: &ScheduleParams, t: f64) -> f64 {
    let nu = sp.nu;
    let big_t = sp.horizon;
    2.0 * nu / (sp.c0 * ((2.0 * nu * big_t).exp() - 1.0)) * (nu * t).exp()
}

/// `C₀ ∫₀ᵗ η̄(s) e^{νs} ds` by quadrature.
pub fn constraint_integral(sp: &ScheduleParams, t: f64) -> f64 {
    sp.c0 * integrate(|s| eta_bar_def(sp, s) * (sp.nu * s).exp(), 0.0, t, 1e-15, 1e-14).value
}

/// `∫₀ᵀ η̄(t)^{2k} e^{-νt} (1 - C₀∫₀ᵗ η̄ e^{νs} ds) dt` by nested quadrature.
pub fn moment_by_quadrature(sp: &ScheduleParams, k: u32) -> f64 {
    let integrand = |t: f64| {
        let eta = eta_bar_def(sp, t);
        eta.powi(2 * k as i32) * (-sp.nu * t).exp() * (1.0 - constraint_integral(sp, t))
    };
    integrate(integrand, 0.0, sp.horizon, 0.0, 1e-12).value
}

/// Runs the constraint identity, the `J(η̄)` cross-check, and the moment
/// checks `k = 1..=k_max`.
pub fn verify_schedule(sp: &ScheduleParams, k_max: u32) -> ScheduleVerification {
    let constraint_value = constraint_integral(sp, sp.horizon);
    let constraint_residual = (constraint_value - 1.0).abs();
    let j_closed_form = sp.j_value();
    let j_quadrature = moment_by_quadrature(sp, 1);
    let j_rel_error = rel_err(j_quadrature, j_closed_form);

    let moments: Vec<MomentCheck> = (1..=k_max)
        .map(|k| {
            let closed_form = sp.moment_integral(k).expect("k >= 1");
            let quadrature = moment_by_quadrature(sp, k);
            let alpha_beta_bound = sp.beta().powi(k as i32) * sp.alpha();
            MomentCheck {
                k,
                closed_form,
                quadrature,
                rel_error: rel_err(quadrature, closed_form),
                alpha_beta_bound,
                below_bound: closed_form <= alpha_beta_bound,
            }
        })
        .collect();

    let pass = constraint_residual <= CONSTRAINT_TOL
        && j_rel_error <= J_REL_TOL
        && moments.iter().all(|m| m.below_bound && m.rel_error <= J_REL_TOL);
    ScheduleVerification {
        horizon: sp.horizon,
        constraint_value,
        constraint_residual,
        j_closed_form,
        j_quadrature,
        j_rel_error,
        moments,
        pass,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
