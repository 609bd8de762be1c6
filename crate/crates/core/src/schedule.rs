//! Derived constants, the exponential drift schedule, and the closed-form
//! KL / Rényi bounds for a horizon `T` and initial separation `|x - x'|`.
//!
//! With `ν = (m/2)e^{-R²(m+M)/2}`, `C₀ = ν/m`, `C₁ = e^{R²(m+M)/4}` the drift
//! schedule is
//!
//! ```text
//! η̄(t) = 2ν e^{νt} / (C₀ (e^{2νT} - 1)),      η(t) = sqrt(|x - x'|) η̄(t)
//! ```
//!
//! which saturates `C₀ ∫₀ᵀ η̄(s) e^{νs} ds = 1`. Every exponential difference
//! goes through `expm1` or is rewritten in terms of `e^{-νT}` so the formulas
//! hold both for `νT ≪ 1` and for `νT` in the hundreds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::potential::Certificate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub nu: f64,
    pub c0: f64,
    pub c1: f64,
    pub dist: f64,
    pub m_xx: f64,
    pub certificate: Certificate,
}

/// All closed-form quantities for one schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kl_bound: f64,
    /// Keyed by the order `q` formatted with `{}`.
    pub renyi_bounds: BTreeMap<String, f64>,
    pub alpha: f64,
    pub beta: f64,
    pub c_of_t: f64,
    pub j_value: f64,
}

/// `ln(e^x - 1)` for `x > 0` without overflow.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp_m1()).ln()
    } else {
        x.exp_m1().ln()
    }
}

/// `(2e^a + 1)/(e^a + 1)³`, written in `e^{-a}` so it never overflows.
fn c_shape(a: f64) -> f64 {
    let e = (-a).exp();
    e * e * (2.0 + e) / (1.0 + e).powi(3)
}

/// Exponent `R²(m+M)`, shared by every constant.
fn spread(c: &Certificate) -> f64 {
    c.r * c.r * (c.m + c.big_m)
}

pub fn make_schedule(c: &Certificate, horizon: f64, dist: f64) -> Result<ScheduleParams> {
    c.validate()?;
    ensure_positive("T", horizon)?;
    ensure_nonnegative("dist", dist)?;
    let s = spread(c);
    let c0 = 0.5 * (-0.5 * s).exp();
    let m_xx = if dist > 0.0 { ((c.r + 1.0) / dist).sqrt().max(1.0) } else { 1.0 };
    Ok(ScheduleParams {
        horizon,
        nu: c.m * c0,
        c0,
        c1: (0.25 * s).exp(),
        dist,
        m_xx,
        certificate: *c,
    })
}

impl ScheduleParams {
    /// `νT`.
    fn a(&self) -> f64 {
        self.nu * self.horizon
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t.is_finite() && (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::invalid("t", format!("must lie in [0, {}], got {t}", self.horizon)))
        }
    }

    pub fn eta_bar(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.eta_bar_unchecked(t))
    }

    #[inline]
    pub(crate) fn eta_bar_unchecked(&self, t: f64) -> f64 {
        let a = self.a();
        // e^{νt}/(e^{2a} - 1) = e^{νt - 2a}/(1 - e^{-2a})
        2.0 * self.nu / self.c0 * (self.nu * t - 2.0 * a).exp() / -(-2.0 * a).exp_m1()
    }

    /// Full drift strength `η(t) = sqrt(dist)·η̄(t)`.
    pub fn eta(&self, t: f64) -> Result<f64> {
        Ok(self.dist.sqrt() * self.eta_bar(t)?)
    }

    #[inline]
    pub(crate) fn eta_unchecked(&self, t: f64) -> f64 {
        self.dist.sqrt() * self.eta_bar_unchecked(t)
    }

    /// Right side of the `E sqrt(f(|Z_t|))` decay estimate under this schedule:
    /// `sqrt(dist) e^{-νt} (1 - (e^{2νt} - 1)/(e^{2νT} - 1))`.
    pub fn envelope(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.envelope_unchecked(t))
    }

    pub(crate) fn envelope_unchecked(&self, t: f64) -> f64 {
        let a = self.a();
        let remaining = (2.0 * self.nu * (t - self.horizon)).exp_m1() / (-2.0 * a).exp_m1();
        (self.dist.sqrt() * (-self.nu * t).exp() * remaining).max(0.0)
    }

    /// `α(T) = e^{νT}/(ν(e^{2νT} - 1)) = 1/(2ν sinh νT)`.
    pub fn alpha(&self) -> f64 {
        1.0 / (2.0 * self.nu * self.a().sinh())
    }

    /// `β(T) = 4ν²e^{2νT}/(C₀²(e^{2νT} - 1)²) = ν²/(C₀² sinh² νT)`.
    pub fn beta(&self) -> f64 {
        let s = self.a().sinh();
        (self.nu / (self.c0 * s)).powi(2)
    }

    /// The `T`-dependent constant `C = (8/3) e^{(5/4)R²(m+M)} (2e^{νT}+1)/(e^{νT}+1)³`.
    pub fn c_of_t(&self) -> f64 {
        8.0 / 3.0 * (1.25 * spread(&self.certificate)).exp() * c_shape(self.a())
    }

    /// `J(η̄) = 4ν/(3C₀²(e^{νT} - 1)) · (2e^{νT}+1)/(e^{νT}+1)³`.
    pub fn j_value(&self) -> f64 {
        4.0 * self.nu / (3.0 * self.c0 * self.c0 * self.a().exp_m1()) * c_shape(self.a())
    }

    /// `C · M_{x,x'} · ν/(e^{νT} - 1) · |x - x'|²`; zero when `dist = 0`.
    pub fn kl_bound(&self) -> f64 {
        if self.dist == 0.0 {
            return 0.0;
        }
        let v = self.c_of_t() * self.m_xx * self.nu / self.a().exp_m1() * self.dist * self.dist;
        debug_assert!({
            let via_j = 0.5 * self.c1 * self.m_xx * self.dist * self.dist * self.j_value();
            (v - via_j).abs() <= 1e-10 * v.abs().max(f64::MIN_POSITIVE)
        });
        v
    }

    /// `∫₀ᵀ η̄(t)^{2k} e^{-νt} (1 - C₀∫₀ᵗ η̄(s)e^{νs} ds) dt` in closed form.
    pub fn moment_integral(&self, k: u32) -> Result<f64> {
        if k < 1 {
            return Err(Error::invalid("k", "must be >= 1"));
        }
        let a = self.a();
        let kf = k as f64;
        let p = 2.0 * kf + 1.0;
        // bracket = [ (e^{pa} - e^{2a})/(2k-1) - (e^{pa} - 1)/(2k+1) ]
        //         = [ 2(e^{pa} - 1) - p(e^{2a} - 1) ] / (4k² - 1)
        // ln of the numerator, computed without cancellation:
        let ln_num = if p * a < 1.0 {
            let mut sum = 0.0;
            let mut t1 = p * a; // (pa)^n / n!
            let mut t2 = 2.0 * a; // (2a)^n / n!
            for n in 2..400 {
                let nf = n as f64;
                t1 *= p * a / nf;
                t2 *= 2.0 * a / nf;
                let term = 2.0 * t1 - p * t2;
                sum += term;
                if term.abs() <= 1e-17 * sum.abs() {
                    break;
                }
            }
            sum.ln()
        } else {
            let scaled = 2.0 * -(-p * a).exp_m1() - p * (((1.0 - 2.0 * kf) * a).exp() - (-p * a).exp());
            p * a + scaled.ln()
        };
        let ln_beta0 = 4f64.ln() + 2.0 * self.nu.ln() - 2.0 * self.c0.ln() - 2.0 * ln_expm1(2.0 * a);
        let ln_val = kf * ln_beta0 - ln_expm1(2.0 * a) + ln_num - ((4.0 * kf * kf - 1.0) * self.nu).ln();
        Ok(ln_val.exp())
    }

    /// Closed-form Rényi bound of order `q > 1`:
    /// `1/(2(q-1)) · ln(1 + C₁α T⁻¹ M⁻¹ (exp(κ_q T M² dist² β) - 1))`,
    /// `κ_q = (q-1) + 2(q-1)²`.
    pub fn renyi_bound(&self, q: f64) -> Result<f64> {
        if !(q.is_finite() && q > 1.0) {
            return Err(Error::invalid(
                "q",
                format!("must be finite and > 1, got {q} (use kl_bound for q = 1)"),
            ));
        }
        if self.dist == 0.0 {
            return Ok(0.0);
        }
        let kappa = renyi_kappa(q);
        let amp = self.c1 * self.alpha() / (self.horizon * self.m_xx);
        let expo = kappa * self.horizon * self.m_xx * self.m_xx * self.dist * self.dist * self.beta();
        let log_term = if expo > 30.0 {
            // ln(A e^B (1 + (1 - A)e^{-B}/A))
            amp.ln() + expo + ((1.0 - amp) * (-expo).exp() / amp).ln_1p()
        } else {
            (amp * expo.exp_m1()).ln_1p()
        };
        Ok(log_term / (2.0 * (q - 1.0)))
    }

    pub fn bound_report(&self, q_list: &[f64]) -> Result<BoundReport> {
        let mut renyi_bounds = BTreeMap::new();
        for &q in q_list {
            renyi_bounds.insert(format!("{q}"), self.renyi_bound(q)?);
        }
        Ok(BoundReport {
            kl_bound: self.kl_bound(),
            renyi_bounds,
            alpha: self.alpha(),
            beta: self.beta(),
            c_of_t: self.c_of_t(),
            j_value: self.j_value(),
        })
    }
}

/// `κ_q = (q-1) + 2(q-1)²`.
pub fn renyi_kappa(q: f64) -> f64 {
    let e = q - 1.0;
    e + 2.0 * e * e
}
