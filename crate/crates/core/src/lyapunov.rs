//! Concave distance transform
//! `f(r) = ∫₀ʳ exp(-C_f · min(s, R_f)) ds`, linear beyond `R_f`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_nonnegative, ensure_positive, Result};
use crate::potential::Certificate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovF {
    pub c_f: f64,
    pub r_f: f64,
}

impl LyapunovF {
    pub fn new(c_f: f64, r_f: f64) -> Result<Self> {
        ensure_positive("C_f", c_f)?;
        ensure_positive("R_f", r_f)?;
        Ok(Self { c_f, r_f })
    }

    /// `R_f = R`, `C_f = R(M + m)/2`.
    pub fn from_certificate(c: &Certificate) -> Self {
        Self {
            c_f: 0.5 * c.r * (c.big_m + c.m),
            r_f: c.r,
        }
    }

    /// Slope beyond `R_f`, also the lower-bound constant in `e^{-C_f R_f} r <= f(r)`.
    pub fn plateau_slope(&self) -> f64 {
        (-self.c_f * self.r_f).exp()
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        ensure_nonnegative("r", r)?;
        Ok(self.eval_unchecked(r))
    }

    pub fn deriv(&self, r: f64) -> Result<f64> {
        ensure_nonnegative("r", r)?;
        Ok(self.deriv_unchecked(r))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        // -expm1(-x)/C_f keeps full precision as r -> 0
        if r <= self.r_f {
            -(-self.c_f * r).exp_m1() / self.c_f
        } else {
            -(-self.c_f * self.r_f).exp_m1() / self.c_f + self.plateau_slope() * (r - self.r_f)
        }
    }

    #[inline]
    pub(crate) fn deriv_unchecked(&self, r: f64) -> f64 {
        (-self.c_f * r.min(self.r_f)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn by_quadrature(lf: &LyapunovF, r: f64) -> f64 {
        let g = |s: f64| (-lf.c_f * s.min(lf.r_f)).exp();
        if r <= lf.r_f {
            integrate(g, 0.0, r, 1e-13, 1e-13).value
        } else {
            integrate(g, 0.0, lf.r_f, 1e-13, 1e-13).value + integrate(g, lf.r_f, r, 1e-13, 1e-13).value
        }
    }

    #[test]
    fn eval_examples() {
        let lf = LyapunovF::new(1.0, 1.0).unwrap();
        assert_eq!(lf.eval(0.0).unwrap(), 0.0);
        // frozen from an mpmath quadrature of the defining integral
        assert_relative_eq!(lf.eval(1.0).unwrap(), 0.632_120_558_828_557_7, max_relative = 1e-14);
        assert_relative_eq!(lf.eval(2.0).unwrap(), 1.0, max_relative = 1e-14);
        assert!(lf.eval(-1e-9).is_err());
    }

    #[test]
    fn deriv_examples() {
        let lf = LyapunovF::new(1.0, 1.0).unwrap();
        assert_eq!(lf.deriv(0.0).unwrap(), 1.0);
        let h = 1e-6;
        let fd = (lf.eval(0.5 + h).unwrap() - lf.eval(0.5 - h).unwrap()) / (2.0 * h);
        assert!((lf.deriv(0.5).unwrap() - fd).abs() < 1e-5);
        assert_relative_eq!(lf.deriv(0.5).unwrap(), 0.606_530_659_712_633_4, max_relative = 1e-12);
        let lf2 = LyapunovF::new(2.0, 1.0).unwrap();
        assert_relative_eq!(lf2.deriv(5.0).unwrap(), (-2f64).exp(), max_relative = 1e-15);
        assert!(lf.deriv(-1.0).is_err());
    }

    #[test]
    fn from_certificate_choice() {
        let c = Certificate::new(1.0, 3.0, 2.0).unwrap();
        let lf = LyapunovF::from_certificate(&c);
        assert_eq!(lf.r_f, 2.0);
        assert_eq!(lf.c_f, 4.0);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        for (cf, rf) in [(1.0, 1.0), (0.3, 2.0), (5.0, 0.5), (12.0, 1.5)] {
            let lf = LyapunovF::new(cf, rf).unwrap();
            for r in [0.0, 1e-6, 0.1, 0.49, 0.5, 1.0, 1.7, 3.0, 10.0, 100.0] {
                assert!((lf.eval(r).unwrap() - by_quadrature(&lf, r)).abs() < 1e-10, "cf={cf} rf={rf} r={r}");
            }
        }
    }

    #[test]
    fn small_r_has_no_cancellation() {
        let lf = LyapunovF::new(50.0, 1.0).unwrap();
        let r = 1e-14;
        assert_relative_eq!(lf.eval(r).unwrap(), r * (1.0 - 25.0 * r), max_relative = 1e-12);
    }

    #[test]
    fn two_sided_bound_on_log_grid() {
        for (cf, rf) in [(1.0, 1.0), (4.0, 2.0), (0.1, 0.1)] {
            let lf = LyapunovF::new(cf, rf).unwrap();
            let lo = lf.plateau_slope();
            for i in 0..=180 {
                let r = 10f64.powf(-6.0 + 9.0 * i as f64 / 180.0);
                let f = lf.eval(r).unwrap();
                assert!(lo * r <= f * (1.0 + 1e-14) && f <= r * (1.0 + 1e-14), "r={r}");
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_concave(cf in 0.01f64..20.0, rf in 0.01f64..5.0, a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let lf = LyapunovF::new(cf, rf).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(hi - lo > 1e-9);
            // increments below one ulp of f are invisible, so strictness goes through f'
            prop_assert!(lf.eval(lo).unwrap() <= lf.eval(hi).unwrap());
            prop_assert!(lf.deriv(hi).unwrap() > 0.0);
            prop_assert!(lf.deriv(lo).unwrap() >= lf.deriv(hi).unwrap());
        }

        #[test]
        fn linear_beyond_rf(cf in 0.01f64..10.0, rf in 0.01f64..5.0, extra in 0.0f64..20.0, delta in 0.0f64..10.0) {
            let lf = LyapunovF::new(cf, rf).unwrap();
            let r = rf + extra;
            let diff = lf.eval(r + delta).unwrap() - lf.eval(r).unwrap();
            prop_assert!((diff - lf.plateau_slope() * delta).abs() <= 1e-12 * (1.0 + r + delta));
        }
    }
}
