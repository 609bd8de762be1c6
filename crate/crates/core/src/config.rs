//! JSON experiment configuration with dotted-path overrides.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coupling::{default_eps_couple, SimConfig};
use crate::error::{Error, Result};
use crate::potential::{default_check_radius, Certificate, PotentialSpec};
use crate::schedule::{make_schedule, ScheduleParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub name: String,
    pub dim: usize,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub certificate: Certificate,
}

/// Test function used by the Harnack check, applied to the first coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarnackPhi {
    /// `tanh(x₁)`; bounded, sign-changing, so only the log form applies.
    Tanh,
    /// `2 + tanh(x₁)`; strictly positive, so both forms apply.
    TanhPlus2,
}

impl HarnackPhi {
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            HarnackPhi::Tanh => x[0].tanh(),
            HarnackPhi::TanhPlus2 => 2.0 + x[0].tanh(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialConfig,
    pub x0: Vec<f64>,
    pub x0_prime: Vec<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_q_list")]
    pub q_list: Vec<f64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "yes")]
    pub run_x_prime: bool,
    #[serde(default = "yes")]
    pub harnack_check: bool,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_stride")]
    pub grid_stride: usize,
    /// `null` selects `1e-4·max(1, |x0 - x0_prime|)`.
    #[serde(default)]
    pub eps_couple: Option<f64>,
    #[serde(default = "default_width")]
    pub cutoff_width: f64,
    #[serde(default = "default_pairs")]
    pub certificate_pairs: usize,
    /// `null` selects `max(5, 3R)`.
    #[serde(default)]
    pub certificate_radius: Option<f64>,
    #[serde(default = "default_harnack_samples")]
    pub harnack_samples: usize,
    #[serde(default = "default_q_prime")]
    pub harnack_q_prime: f64,
    #[serde(default = "default_phi")]
    pub harnack_phi: HarnackPhi,
}

fn default_q_list() -> Vec<f64> {
    vec![1.1, 2.0, 4.0]
}
fn default_out_dir() -> String {
    "out".into()
}
fn yes() -> bool {
    true
}
fn default_resamples() -> usize {
    1000
}
fn default_stride() -> usize {
    10
}
fn default_width() -> f64 {
    1.0
}
fn default_pairs() -> usize {
    10_000
}
fn default_harnack_samples() -> usize {
    10_000
}
fn default_q_prime() -> f64 {
    2.0
}
fn default_phi() -> HarnackPhi {
    HarnackPhi::Tanh
}

impl ExperimentConfig {
    /// Reads a JSON file, applies `key=value` overrides, and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(value, overrides)
    }

    pub fn from_value(mut value: Value, overrides: &[String]) -> Result<Self> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Merged configuration, including defaults, as echoed into artifacts.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        PotentialSpec::from_name(&self.potential.name, self.potential.dim, &self.potential.params)
    }

    pub fn distance(&self) -> f64 {
        self.x0
            .iter()
            .zip(&self.x0_prime)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn schedule(&self) -> Result<ScheduleParams> {
        make_schedule(&self.potential.certificate, self.horizon, self.distance())
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut sc = SimConfig::new(
            self.potential_spec()?,
            self.potential.certificate,
            self.x0.clone(),
            self.x0_prime.clone(),
            self.horizon,
            self.dt,
            self.n_paths,
            self.seed,
        );
        sc.eps_couple = self.eps_couple.unwrap_or_else(|| default_eps_couple(self.distance()));
        sc.cutoff_width = self.cutoff_width;
        sc.simulate_x_prime = self.run_x_prime;
        Ok(sc)
    }

    pub fn check_radius(&self) -> f64 {
        self.certificate_radius
            .unwrap_or_else(|| default_check_radius(&self.potential.certificate))
    }

    /// Checks every precondition of the downstream stages before any compute.
    pub fn validate(&self) -> Result<()> {
        self.sim_config()?.validate()?;
        self.schedule()?;
        for &q in &self.q_list {
            if !(q.is_finite() && q > 1.0) {
                return Err(Error::invalid("q_list", format!("entries must be finite and > 1, got {q}")));
            }
        }
        if self.grid_stride == 0 {
            return Err(Error::invalid("grid_stride", "must be >= 1"));
        }
        if self.certificate_pairs == 0 {
            return Err(Error::invalid("certificate_pairs", "must be >= 1"));
        }
        if let Some(r) = self.certificate_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid("certificate_radius", "must be finite and > 0"));
            }
        }
        if self.harnack_samples < 2 {
            return Err(Error::invalid("harnack_samples", "must be >= 2"));
        }
        if !(self.harnack_q_prime.is_finite() && self.harnack_q_prime > 1.0) {
            return Err(Error::invalid("harnack_q_prime", "must be finite and > 1"));
        }
        if self.out_dir.is_empty() {
            return Err(Error::invalid("out_dir", "must not be empty"));
        }
        Ok(())
    }
}

/// Sets `a.b.c=value` in a JSON tree. The value is parsed as JSON when
/// possible and taken as a string otherwise; missing objects are created.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let new: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert((*part).to_string(), new);
                    return Ok(());
                }
                map.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Config(format!("`{part}` in `{key}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| Error::Config(format!("index {idx} out of range ({len}) in `{key}`")))?;
                if last {
                    *slot = new;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("`{key}` descends into a scalar"))),
        };
    }
    unreachable!("loop returns on the last segment")
}
