//! With the steering drift off, `X` and `X'` are each Euler–Maruyama chains
//! driven by Brownian motions, so their time-T laws must match independent
//! uncoupled chains from the same starting points.

use langevin_coupling::coupling::{sample_endpoints, simulate, SimConfig};
use langevin_coupling::potential::{Certificate, PotentialSpec};
use langevin_coupling::schedule::make_schedule;
use langevin_coupling::stats::mean_se;

const N: usize = 20_000;
const SIGMAS: f64 = 4.0;

fn moments_agree(a: &[f64], b: &[f64], what: &str) {
    for k in [1, 2] {
        let pa: Vec<f64> = a.iter().map(|x| x.powi(k)).collect();
        let pb: Vec<f64> = b.iter().map(|x| x.powi(k)).collect();
        let (ma, sa) = mean_se(&pa);
        let (mb, sb) = mean_se(&pb);
        let z = (ma - mb).abs() / sa.hypot(sb);
        assert!(z <= SIGMAS, "{what} moment {k}: {ma} vs {mb} ({z:.2} SE)");
    }
}

fn check(potential: PotentialSpec, cert: Certificate, x0: Vec<f64>, x0p: Vec<f64>) {
    let horizon = 1.0;
    let dt = 1e-3;
    let mut cfg = SimConfig::new(potential.clone(), cert, x0.clone(), x0p.clone(), horizon, dt, N, 11);
    cfg.shift_drift = false;
    cfg.record_endpoints = true;
    let sp = make_schedule(&cert, horizon, cfg.initial_distance()).unwrap();
    let st = simulate(&cfg, &sp, 100).unwrap();
    let ind_x = sample_endpoints(&potential, &x0, horizon, dt, N, 12).unwrap();
    let ind_xp = sample_endpoints(&potential, &x0p, horizon, dt, N, 13).unwrap();
    for i in 0..potential.dim() {
        let col = |v: &[Vec<f64>]| v.iter().map(|p| p[i]).collect::<Vec<f64>>();
        moments_agree(&col(&st.endpoints_x), &col(&ind_x), "X");
        moments_agree(&col(&st.endpoints_x_prime), &col(&ind_xp), "X'");
    }
}

#[test]
fn quadratic_reflection_preserves_marginals() {
    check(
        PotentialSpec::quadratic(2, 1.0).unwrap(),
        Certificate::new(1.0, 1.0, 0.25).unwrap(),
        vec![0.0, 0.0],
        vec![1.0, 0.0],
    );
}

#[test]
fn double_well_reflection_preserves_marginals() {
    check(
        PotentialSpec::double_well(1).unwrap(),
        Certificate::new(0.5, 2.0, 1.6).unwrap(),
        vec![0.0],
        vec![1.0],
    );
}
