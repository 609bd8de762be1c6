//! Reflection coupling with a shifted Girsanov drift for overdamped Langevin
//! dynamics `dX = -∇U(X) dt + dB`, together with closed-form KL/Rényi bounds
//! and Monte Carlo checks of those bounds.

pub mod cli;
pub mod config;
pub mod coupling;
pub mod divergence;
pub mod error;
pub mod lyapunov;
pub mod potential;
pub mod quadrature;
pub mod schedule;
pub mod stats;
pub mod verify;

pub use coupling::{sample_endpoints, simulate, CouplingState, SimConfig, TrajectoryStats};
pub use divergence::{dv_duality_check, harnack_check, kl_girsanov_estimate, renyi_girsanov_estimate, DivergenceReport};
pub use error::{Error, Result};
pub use lyapunov::LyapunovF;
pub use potential::{verify_certificate, Certificate, CertificateReport, PotentialSpec};
pub use schedule::{make_schedule, BoundReport, ScheduleParams};
