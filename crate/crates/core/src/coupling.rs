//! Three-process coupling for overdamped Langevin dynamics.
//!
//! `X` starts at `x`, the reference chain `X'` and the interpolation `X''` both
//! start at `x'`. `X` is driven by `B`, while `X'` and `X''` are driven by `B̄`,
//! which is the mirror image of `B` across the hyperplane normal to
//! `Z = X - X''` inside the cutoff radius and equal to `B` outside it. `X''`
//! additionally carries the drift `η_t Z/sqrt(|Z|)` that steers it onto `X`
//! by time `T`; once they meet they move together.
//!
//! Time stepping is explicit Euler–Maruyama with tamed drift
//! `g/(1 + dt|g|)`. Per-path random streams are ChaCha8 streams keyed by
//! `(seed, path index)`, and paths are aggregated in fixed blocks in index
//! order, so results do not depend on the number of worker threads.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_nonnegative, ensure_positive, Error, Result};
use crate::lyapunov::LyapunovF;
use crate::potential::{norm_sq, Certificate, PotentialSpec};
use crate::schedule::ScheduleParams;

/// Below this separation the reflection direction is undefined and the step
/// falls back to synchronous noise.
pub const REFLECTION_MIN_DIST: f64 = 1e-12;

/// Additive slack on the almost-sure bound `|Z_t| <= max(|x-x'|, R + width)`
/// for the discrete chain at `dt = 1e-3`.
pub const SUP_BOUND_SLACK: f64 = 0.05;

/// Fraction of diverged paths above which a run is marked failed.
pub const MAX_DIVERGED_FRACTION: f64 = 1e-3;

const BLOCK: usize = 64;

/// Smooth cutoff pair with `rc² + sc² = 1`: `rc = 1` on `[0, R]`, `rc = 0`
/// beyond `R + width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    #[serde(rename = "R")]
    pub r: f64,
    pub width: f64,
}

impl CutoffPair {
    pub fn new(r: f64, width: f64) -> Result<Self> {
        ensure_positive("R", r)?;
        ensure_positive("width", width)?;
        Ok(Self { r, width })
    }

    pub fn rc(&self, r: f64) -> Result<f64> {
        ensure_nonnegative("r", r)?;
        Ok(self.rc_sc(r).0)
    }

    pub fn sc(&self, r: f64) -> Result<f64> {
        ensure_nonnegative("r", r)?;
        Ok(self.rc_sc(r).1)
    }

    /// `(cos θ, sin θ)` with `θ = (π/2)·s((r - R)/width)` and `s` the clamped
    /// cubic smoothstep.
    #[inline]
    pub(crate) fn rc_sc(&self, r: f64) -> (f64, f64) {
        let u = ((r - self.r) / self.width).clamp(0.0, 1.0);
        if u == 0.0 {
            return (1.0, 0.0);
        }
        if u == 1.0 {
            return (0.0, 1.0);
        }
        let s = u * u * (3.0 - 2.0 * u);
        let (sin, cos) = (FRAC_PI_2 * s).sin_cos();
        (cos, sin)
    }
}

/// Joint state of one coupled path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingState {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_pp: Vec<f64>,
    pub x_p: Vec<f64>,
    pub coupled: bool,
    /// `∫₀ᵗ η_s² |Z_s| ds` by the trapezoid rule.
    pub girsanov_acc: f64,
    pub sup_z: f64,
    pub diverged: bool,
}

impl CouplingState {
    pub fn initial(x0: &[f64], x0_prime: &[f64]) -> Self {
        let sup_z = dist(x0, x0_prime);
        Self {
            t: 0.0,
            x: x0.to_vec(),
            x_pp: x0_prime.to_vec(),
            x_p: x0_prime.to_vec(),
            coupled: sup_z == 0.0,
            girsanov_acc: 0.0,
            sup_z,
            diverged: false,
        }
    }

    pub fn z_norm(&self) -> f64 {
        dist(&self.x, &self.x_pp)
    }
}

/// Standard normal vectors driving `B^{rc}` and `B^{sc}` over one step, plus a
/// uniform draw for the bridge crossing test.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    pub xi_rc: Vec<f64>,
    pub xi_sc: Vec<f64>,
    pub bridge_u: f64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub potential: PotentialSpec,
    pub certificate: Certificate,
    pub x0: Vec<f64>,
    pub x0_prime: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub eps_couple: f64,
    pub cutoff_width: f64,
    /// Simulate the reference chain `X'` (only needed for marginal checks).
    pub simulate_x_prime: bool,
    /// Apply the steering drift on `X''`; disabling it leaves pure
    /// reflection/synchronous coupling.
    pub shift_drift: bool,
    /// Keep `X_T` and `X'_T` for every path.
    pub record_endpoints: bool,
}

impl SimConfig {
    /// Config with the default coupling radius `1e-4·max(1, |x - x'|)` and
    /// cutoff width 1.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        potential: PotentialSpec,
        certificate: Certificate,
        x0: Vec<f64>,
        x0_prime: Vec<f64>,
        horizon: f64,
        dt: f64,
        n_paths: usize,
        seed: u64,
    ) -> Self {
        let eps_couple = default_eps_couple(dist(&x0, &x0_prime));
        Self {
            potential,
            certificate,
            x0,
            x0_prime,
            horizon,
            dt,
            n_paths,
            seed,
            eps_couple,
            cutoff_width: 1.0,
            simulate_x_prime: true,
            shift_drift: true,
            record_endpoints: false,
        }
    }

    pub fn initial_distance(&self) -> f64 {
        dist(&self.x0, &self.x0_prime)
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.certificate.validate()?;
        let d = self.potential.dim();
        for (name, v) in [("x0", &self.x0), ("x0_prime", &self.x0_prime)] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v.len() });
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFinite(name));
            }
        }
        ensure_positive("T", self.horizon)?;
        ensure_positive("dt", self.dt)?;
        if self.dt >= self.horizon {
            return Err(Error::invalid("dt", "must be smaller than T"));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be >= 1"));
        }
        ensure_positive("eps_couple", self.eps_couple)?;
        ensure_positive("cutoff_width", self.cutoff_width)?;
        Ok(())
    }
}

pub fn default_eps_couple(dist: f64) -> f64 {
    1e-4 * dist.max(1.0)
}

/// Aggregated statistics of a simulation on the recording grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub grid: Vec<f64>,
    pub mean_abs_z: Vec<f64>,
    pub se_abs_z: Vec<f64>,
    pub mean_sqrt_f_z: Vec<f64>,
    pub se_sqrt_f_z: Vec<f64>,
    /// Coupling upper bound on `W_f(δ_x P_t, δ_x' P_t)`; `mean_abs_z` bounds `W_1`.
    pub mean_f_z: Vec<f64>,
    pub se_f_z: Vec<f64>,
    pub envelope: Vec<f64>,
    pub coupled_fraction_at_t: f64,
    pub max_sup_z: f64,
    /// Paths whose running max of `|Z|` exceeded `max(dist, R + width) + SUP_BOUND_SLACK`.
    pub n_sup_exceed: usize,
    pub girsanov_integral: f64,
    pub girsanov_se: f64,
    pub n_paths: usize,
    pub n_diverged: usize,
    pub failed: bool,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    /// `∫₀ᵀ η² |Z| dt` per non-diverged path, in path order.
    #[serde(skip)]
    pub per_path_girsanov: Vec<f64>,
    #[serde(skip)]
    pub endpoints_x: Vec<Vec<f64>>,
    #[serde(skip)]
    pub endpoints_x_prime: Vec<Vec<f64>>,
}

/// Step engine bound to one configuration and schedule.
pub struct Coupler<'a> {
    potential: &'a PotentialSpec,
    schedule: &'a ScheduleParams,
    cutoff: CutoffPair,
    lyapunov: LyapunovF,
    eps_couple: f64,
    simulate_x_prime: bool,
    shift_drift: bool,
    dim: usize,
}

struct Scratch {
    g: Vec<f64>,
    db: Vec<f64>,
    db_bar: Vec<f64>,
    e: Vec<f64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        Self {
            g: vec![0.0; d],
            db: vec![0.0; d],
            db_bar: vec![0.0; d],
            e: vec![0.0; d],
        }
    }
}

impl<'a> Coupler<'a> {
    pub fn new(cfg: &'a SimConfig, schedule: &'a ScheduleParams) -> Result<Self> {
        cfg.validate()?;
        if (schedule.horizon - cfg.horizon).abs() > 1e-12 * cfg.horizon {
            return Err(Error::invalid(
                "schedule",
                format!("horizon {} does not match config T = {}", schedule.horizon, cfg.horizon),
            ));
        }
        let d0 = cfg.initial_distance();
        if (schedule.dist - d0).abs() > 1e-12 * d0.max(1.0) {
            return Err(Error::invalid(
                "schedule",
                format!("dist {} does not match |x0 - x0'| = {d0}", schedule.dist),
            ));
        }
        Ok(Self {
            potential: &cfg.potential,
            schedule,
            cutoff: CutoffPair::new(cfg.certificate.r, cfg.cutoff_width)?,
            lyapunov: LyapunovF::from_certificate(&cfg.certificate),
            eps_couple: cfg.eps_couple,
            simulate_x_prime: cfg.simulate_x_prime,
            shift_drift: cfg.shift_drift,
            dim: cfg.potential.dim(),
        })
    }

    fn eta(&self, t: f64) -> f64 {
        if self.shift_drift {
            self.schedule.eta_unchecked(t.min(self.schedule.horizon))
        } else {
            0.0
        }
    }

    /// One checked step of length `dt`.
    pub fn step(&self, state: &CouplingState, dt: f64, noise: &StepNoise) -> Result<CouplingState> {
        ensure_positive("dt", dt)?;
        if state.t + dt > self.schedule.horizon + 1e-12 {
            return Err(Error::invalid(
                "dt",
                format!("step from t = {} overshoots T = {}", state.t, self.schedule.horizon),
            ));
        }
        for v in [&state.x, &state.x_pp, &state.x_p, &noise.xi_rc, &noise.xi_sc] {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        let mut next = state.clone();
        let mut scratch = Scratch::new(self.dim);
        self.advance(&mut next, dt, &noise.xi_rc, &noise.xi_sc, noise.bridge_u, &mut scratch);
        Ok(next)
    }

    #[allow(clippy::needless_range_loop)]
    fn advance(&self, s: &mut CouplingState, dt: f64, xi_rc: &[f64], xi_sc: &[f64], bridge_u: f64, w: &mut Scratch) {
        let d = self.dim;
        let sqdt = dt.sqrt();
        let t0 = s.t;
        let r = if s.coupled { 0.0 } else { dist(&s.x, &s.x_pp) };
        let (rc, sc) = self.cutoff.rc_sc(r);

        for i in 0..d {
            w.db[i] = sqdt * (rc * xi_rc[i] + sc * xi_sc[i]);
        }
        let reflect = !s.coupled && r >= REFLECTION_MIN_DIST;
        if reflect {
            let mut proj = 0.0;
            for i in 0..d {
                w.e[i] = (s.x[i] - s.x_pp[i]) / r;
                proj += w.e[i] * xi_rc[i];
            }
            for i in 0..d {
                w.db_bar[i] = sqdt * (rc * (xi_rc[i] - 2.0 * proj * w.e[i]) + sc * xi_sc[i]);
            }
        } else {
            w.db_bar.copy_from_slice(&w.db);
        }

        let eta0 = self.eta(t0);
        if !s.coupled {
            tamed_drift(self.potential, &s.x_pp, dt, &mut w.g);
            let shift = if reflect { (eta0 * r.sqrt() * dt).min(r) } else { 0.0 };
            for i in 0..d {
                s.x_pp[i] += -w.g[i] * dt + w.db_bar[i] + if reflect { shift * w.e[i] } else { 0.0 };
            }
        }
        tamed_drift(self.potential, &s.x, dt, &mut w.g);
        for i in 0..d {
            s.x[i] += -w.g[i] * dt + w.db[i];
        }
        if self.simulate_x_prime {
            tamed_drift(self.potential, &s.x_p, dt, &mut w.g);
            for i in 0..d {
                s.x_p[i] += -w.g[i] * dt + w.db_bar[i];
            }
        }

        let t1 = t0 + dt;
        let mut r1 = 0.0;
        if s.coupled {
            s.x_pp.copy_from_slice(&s.x);
        } else {
            r1 = dist(&s.x, &s.x_pp);
            let mut meet = r1 <= self.eps_couple;
            if !meet && reflect && rc > 0.0 {
                // Signed separation along the pre-step reflection axis. A sign
                // change means the radial process crossed zero inside the step;
                // otherwise use the Brownian-bridge hitting probability of a
                // radial diffusion with coefficient 2·rc.
                let along: f64 = (0..d).map(|i| w.e[i] * (s.x[i] - s.x_pp[i])).sum();
                meet = along <= 0.0 || {
                    let var = 4.0 * rc * rc * dt;
                    bridge_u < (-2.0 * r * along / var).exp()
                };
            }
            if meet {
                s.coupled = true;
                s.x_pp.copy_from_slice(&s.x);
                r1 = 0.0;
            }
        }

        let eta1 = self.eta(t1);
        s.girsanov_acc += 0.5 * dt * (eta0 * eta0 * r + eta1 * eta1 * r1);
        s.sup_z = s.sup_z.max(r1);
        s.t = t1;
        if !(s.x.iter().chain(&s.x_pp).chain(&s.x_p).all(|v| v.is_finite()) && s.girsanov_acc.is_finite()) {
            s.diverged = true;
        }
    }
}

#[inline]
fn tamed_drift(p: &PotentialSpec, x: &[f64], dt: f64, out: &mut [f64]) {
    p.grad_into(x, out);
    let scale = 1.0 / (1.0 + dt * norm_sq(out).sqrt());
    for v in out.iter_mut() {
        *v *= scale;
    }
}

#[inline]
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

struct PathResult {
    diverged: bool,
    coupled: bool,
    girsanov: f64,
    sup_z: f64,
    x_t: Vec<f64>,
    x_p_t: Vec<f64>,
}

struct BlockResult {
    sums: Vec<[f64; 6]>,
    paths: Vec<PathResult>,
}

/// Simulates `cfg.n_paths` coupled paths and aggregates statistics on the
/// grid `{k·grid_stride·dt} ∪ {T}`.
pub fn simulate(cfg: &SimConfig, sp: &ScheduleParams, grid_stride: usize) -> Result<TrajectoryStats> {
    if grid_stride == 0 {
        return Err(Error::invalid("grid_stride", "must be >= 1"));
    }
    let coupler = Coupler::new(cfg, sp)?;
    let n_steps = cfg.n_steps();
    let record: Vec<usize> = (0..=n_steps).filter(|j| j % grid_stride == 0 || *j == n_steps).collect();
    let grid: Vec<f64> = record.iter().map(|&j| step_time(cfg, j, n_steps)).collect();
    let n_grid = grid.len();
    let d = cfg.potential.dim();
    let lf = coupler.lyapunov;

    let n_blocks = cfg.n_paths.div_ceil(BLOCK);
    let blocks: Vec<BlockResult> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut sums = vec![[0.0; 6]; n_grid];
            let mut local = vec![[0.0; 3]; n_grid];
            let mut paths = Vec::with_capacity(BLOCK);
            let mut scratch = Scratch::new(d);
            let mut xi_rc = vec![0.0; d];
            let mut xi_sc = vec![0.0; d];
            for p in b * BLOCK..((b + 1) * BLOCK).min(cfg.n_paths) {
                let mut rng = path_rng(cfg.seed, p as u64);
                let mut s = CouplingState::initial(&cfg.x0, &cfg.x0_prime);
                let mut next_rec = 0;
                for j in 0..=n_steps {
                    if next_rec < n_grid && record[next_rec] == j {
                        let z = s.z_norm();
                        let f = lf.eval_unchecked(z);
                        local[next_rec] = [z, f.sqrt(), f];
                        next_rec += 1;
                    }
                    if j == n_steps || s.diverged {
                        break;
                    }
                    let dt = step_time(cfg, j + 1, n_steps) - step_time(cfg, j, n_steps);
                    fill_normals(&mut rng, &mut xi_rc);
                    fill_normals(&mut rng, &mut xi_sc);
                    let u: f64 = rng.random();
                    coupler.advance(&mut s, dt, &xi_rc, &xi_sc, u, &mut scratch);
                    // keep t on the exact grid
                    s.t = step_time(cfg, j + 1, n_steps);
                }
                if !s.diverged {
                    for (acc, v) in sums.iter_mut().zip(&local) {
                        for k in 0..3 {
                            acc[2 * k] += v[k];
                            acc[2 * k + 1] += v[k] * v[k];
                        }
                    }
                }
                paths.push(PathResult {
                    diverged: s.diverged,
                    coupled: s.coupled,
                    girsanov: s.girsanov_acc,
                    sup_z: s.sup_z,
                    x_t: if cfg.record_endpoints { s.x } else { Vec::new() },
                    x_p_t: if cfg.record_endpoints { s.x_p } else { Vec::new() },
                });
            }
            BlockResult { sums, paths }
        })
        .collect();

    let mut sums = vec![[0.0; 6]; n_grid];
    let mut per_path_girsanov = Vec::with_capacity(cfg.n_paths);
    let mut endpoints_x = Vec::new();
    let mut endpoints_x_prime = Vec::new();
    let (mut n_diverged, mut n_coupled, mut max_sup, mut n_exceed) = (0usize, 0usize, 0.0f64, 0usize);
    let sup_bound = sp.dist.max(cfg.certificate.r + cfg.cutoff_width) + SUP_BOUND_SLACK;
    for block in blocks {
        for (acc, v) in sums.iter_mut().zip(&block.sums) {
            for k in 0..6 {
                acc[k] += v[k];
            }
        }
        for p in block.paths {
            if p.diverged {
                n_diverged += 1;
                continue;
            }
            n_coupled += p.coupled as usize;
            max_sup = max_sup.max(p.sup_z);
            n_exceed += (p.sup_z > sup_bound) as usize;
            per_path_girsanov.push(p.girsanov);
            if cfg.record_endpoints {
                endpoints_x.push(p.x_t);
                endpoints_x_prime.push(p.x_p_t);
            }
        }
    }

    let n_ok = cfg.n_paths - n_diverged;
    let moments = |k: usize| -> (Vec<f64>, Vec<f64>) { sums.iter().map(|s| mean_se_from_sums(s[2 * k], s[2 * k + 1], n_ok)).unzip() };
    let (mean_abs_z, se_abs_z) = moments(0);
    let (mean_sqrt_f_z, se_sqrt_f_z) = moments(1);
    let (mean_f_z, se_f_z) = moments(2);
    let (girsanov_integral, girsanov_se) = crate::stats::mean_se(&per_path_girsanov);

    Ok(TrajectoryStats {
        envelope: grid.iter().map(|&t| sp.envelope_unchecked(t)).collect(),
        grid,
        mean_abs_z,
        se_abs_z,
        mean_sqrt_f_z,
        se_sqrt_f_z,
        mean_f_z,
        se_f_z,
        coupled_fraction_at_t: if n_ok > 0 { n_coupled as f64 / n_ok as f64 } else { 0.0 },
        max_sup_z: max_sup,
        n_sup_exceed: n_exceed,
        girsanov_integral,
        girsanov_se,
        n_paths: cfg.n_paths,
        n_diverged,
        failed: n_diverged as f64 > MAX_DIVERGED_FRACTION * cfg.n_paths as f64,
        horizon: cfg.horizon,
        dt: cfg.dt,
        per_path_girsanov,
        endpoints_x,
        endpoints_x_prime,
    })
}

fn step_time(cfg: &SimConfig, j: usize, n_steps: usize) -> f64 {
    if j >= n_steps {
        cfg.horizon
    } else {
        j as f64 * cfg.dt
    }
}

fn mean_se_from_sums(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Endpoints `X_T` of independent, uncoupled tamed Euler–Maruyama chains
/// started at `x0`.
pub fn sample_endpoints(potential: &PotentialSpec, x0: &[f64], horizon: f64, dt: f64, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let d = potential.dim();
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    ensure_positive("T", horizon)?;
    ensure_positive("dt", dt)?;
    let n_steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let out = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p as u64);
            let mut x = x0.to_vec();
            let mut g = vec![0.0; d];
            let mut xi = vec![0.0; d];
            for j in 0..n_steps {
                let h = if j + 1 == n_steps { horizon - j as f64 * dt } else { dt };
                fill_normals(&mut rng, &mut xi);
                tamed_drift(potential, &x, h, &mut g);
                let sq = h.sqrt();
                for i in 0..d {
                    x[i] += -g[i] * h + sq * xi[i];
                }
            }
            x
        })
        .collect();
    Ok(out)
}
