//! Potentials `U` given through their gradients, and an empirical checker for
//! the far-field convexity certificate `(m, M, R)`:
//!
//! ```text
//! -(x - y)·(∇U(x) - ∇U(y)) <= -m |x - y|²   if |x - y| > R
//! -(x - y)·(∇U(x) - ∇U(y)) <=  M |x - y|²   if |x - y| <= R
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};

/// Gradient callback: writes `∇U(x)` into the output slice.
pub type GradFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Quadratic { kappa: f64 },
    DoubleWell,
    Custom(GradFn),
}

/// A potential in `R^d`, identified by name, with a gradient evaluator.
#[derive(Clone)]
pub struct PotentialSpec {
    name: String,
    dim: usize,
    parameters: BTreeMap<String, f64>,
    kind: Kind,
}

impl fmt::Debug for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("parameters", &self.parameters)
            .finish()
    }
}

impl PotentialSpec {
    /// `U(x) = κ|x|²/2`.
    pub fn quadratic(dim: usize, kappa: f64) -> Result<Self> {
        check_dim(dim)?;
        ensure_positive("kappa", kappa)?;
        Ok(Self {
            name: "quadratic".into(),
            dim,
            parameters: BTreeMap::from([("kappa".to_string(), kappa)]),
            kind: Kind::Quadratic { kappa },
        })
    }

    /// `U(x) = |x|⁴ - |x|²`.
    pub fn double_well(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            name: "double_well".into(),
            dim,
            parameters: BTreeMap::new(),
            kind: Kind::DoubleWell,
        })
    }

    /// A user potential. The caller is responsible for supplying a valid
    /// certificate; see [`verify_certificate`].
    pub fn custom(name: impl Into<String>, dim: usize, parameters: BTreeMap<String, f64>, grad: GradFn) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            name: name.into(),
            dim,
            parameters,
            kind: Kind::Custom(grad),
        })
    }

    /// Looks up a built-in potential by name. Recognised parameters:
    /// `kappa` for `quadratic` (default 1).
    pub fn from_name(name: &str, dim: usize, parameters: &BTreeMap<String, f64>) -> Result<Self> {
        match name {
            "quadratic" => {
                let kappa = parameters.get("kappa").copied().unwrap_or(1.0);
                if let Some(k) = parameters.keys().find(|k| k.as_str() != "kappa") {
                    return Err(Error::Config(format!("unknown parameter `{k}` for quadratic")));
                }
                Self::quadratic(dim, kappa)
            }
            "double_well" => {
                if let Some(k) = parameters.keys().next() {
                    return Err(Error::Config(format!("unknown parameter `{k}` for double_well")));
                }
                Self::double_well(dim)
            }
            other => Err(Error::UnknownPotential(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parameters(&self) -> &BTreeMap<String, f64> {
        &self.parameters
    }

    /// Checked gradient evaluation.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x"));
        }
        let mut out = vec![0.0; self.dim];
        self.grad_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked gradient for hot loops; `x` and `out` must have length `dim`.
    #[inline]
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            Kind::Quadratic { kappa } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = kappa * xi;
                }
            }
            Kind::DoubleWell => {
                let s = 4.0 * norm_sq(x) - 2.0;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = s * xi;
                }
            }
            Kind::Custom(g) => g(x, out),
        }
    }

    /// Potential value for the built-ins; `None` for custom potentials.
    pub fn value(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            Kind::Quadratic { kappa } => Some(0.5 * kappa * norm_sq(x)),
            Kind::DoubleWell => {
                let r2 = norm_sq(x);
                Some(r2 * r2 - r2)
            }
            Kind::Custom(_) => None,
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::invalid("dim", "must be >= 1"))
    } else {
        Ok(())
    }
}

#[inline]
pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Far-field contraction rate `m`, near-field expansion rate `M`, crossover
/// radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub m: f64,
    #[serde(rename = "M")]
    pub big_m: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl Certificate {
    pub fn new(m: f64, big_m: f64, r: f64) -> Result<Self> {
        let c = Self { m, big_m, r };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("m", self.m)?;
        ensure_positive("R", self.r)?;
        if !(self.big_m.is_finite() && self.big_m >= self.m) {
            return Err(Error::invalid(
                "M",
                format!("must satisfy M >= m, got M = {}, m = {}", self.big_m, self.m),
            ));
        }
        Ok(())
    }
}

/// Outcome of an empirical certificate check. Margins are reported in rate
/// units (`bound/|x-y|² - lhs/|x-y|²`); `None` means no pair fell into that
/// branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub pass: bool,
    pub worst_near_margin: Option<f64>,
    pub worst_far_margin: Option<f64>,
    pub n_pairs: usize,
    pub n_stress_pairs: usize,
    pub seed: u64,
}

/// Absolute slack allowed on the unnormalised inequality.
pub const CERTIFICATE_TOL: f64 = 1e-9;

/// Default sampling radius for [`verify_certificate`]: `max(5, 3R)`.
pub fn default_check_radius(c: &Certificate) -> f64 {
    (3.0 * c.r).max(5.0)
}

/// Samples `n_pairs` pairs uniformly in the ball of `radius`, adds a fixed
/// grid of stress pairs at separations `R ± δ`, and checks both branches.
pub fn verify_certificate(p: &PotentialSpec, c: &Certificate, n_pairs: usize, radius: f64, seed: u64) -> Result<CertificateReport> {
    c.validate()?;
    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs", "must be >= 1"));
    }
    ensure_positive("radius", radius)?;
    let d = p.dim();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..n_pairs)
        .map(|_| (sample_ball(&mut rng, d, radius), sample_ball(&mut rng, d, radius)))
        .collect();
    let stress = stress_pairs(d, c.r, radius);
    let n_stress = stress.len();
    pairs.extend(stress);

    // Each pair yields (near margin, far margin); min is order independent,
    // so the parallel reduction matches a sequential one exactly.
    let (near, far, ok) = pairs
        .par_iter()
        .map(|(x, y)| {
            let mut gx = vec![0.0; d];
            let mut gy = vec![0.0; d];
            p.grad_into(x, &mut gx);
            p.grad_into(y, &mut gy);
            let mut lhs = 0.0;
            let mut dist2 = 0.0;
            for i in 0..d {
                let dx = x[i] - y[i];
                lhs -= dx * (gx[i] - gy[i]);
                dist2 += dx * dx;
            }
            if dist2 == 0.0 {
                return (f64::INFINITY, f64::INFINITY, true);
            }
            if dist2.sqrt() > c.r {
                let bound = -c.m * dist2;
                (f64::INFINITY, (bound - lhs) / dist2, lhs <= bound + CERTIFICATE_TOL)
            } else {
                let bound = c.big_m * dist2;
                ((bound - lhs) / dist2, f64::INFINITY, lhs <= bound + CERTIFICATE_TOL)
            }
        })
        .reduce(
            || (f64::INFINITY, f64::INFINITY, true),
            |a, b| (a.0.min(b.0), a.1.min(b.1), a.2 && b.2),
        );

    let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
    Ok(CertificateReport {
        pass: ok,
        worst_near_margin: finite(near),
        worst_far_margin: finite(far),
        n_pairs,
        n_stress_pairs: n_stress,
        seed,
    })
}

fn sample_ball<R: Rng>(rng: &mut R, d: usize, radius: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm_sq(&v).sqrt();
        if n == 0.0 {
            continue;
        }
        let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
        for x in &mut v {
            *x *= r / n;
        }
        return v;
    }
}

/// Pairs centred on a grid along the first axis and the main diagonal, with
/// separations just inside and just outside `R`.
fn stress_pairs(d: usize, r: f64, radius: f64) -> Vec<(Vec<f64>, Vec<f64>)> {
    const CENTERS: usize = 41;
    let delta = 1e-3 * r;
    let diag = 1.0 / (d as f64).sqrt();
    let axis: Vec<f64> = (0..d).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    let diagonal = vec![diag; d];
    let mut out = Vec::new();
    for dir in [&axis, &diagonal] {
        for k in 0..CENTERS {
            let s = -radius + 2.0 * radius * k as f64 / (CENTERS - 1) as f64;
            for sep in [r - delta, r + delta] {
                let x: Vec<f64> = dir.iter().map(|u| (s + 0.5 * sep) * u).collect();
                let y: Vec<f64> = dir.iter().map(|u| (s - 0.5 * sep) * u).collect();
                out.push((x, y));
            }
        }
        if d == 1 {
            break;
        }
    }
    out
}
