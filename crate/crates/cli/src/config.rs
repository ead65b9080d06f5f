//! Run configuration: one JSON document, leaf overrides by dotted path.

use std::path::Path;

use gfx_core::spine::{ExplosionBudget, Statistic};
use gfx_core::{Caps, Characteristics};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Experiment {
    Cumulant,
    Simulate,
    MartingaleCheck,
    Extinction,
    Couple,
    Spine,
    Explode,
    ChangeOfMeasure,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Cumulant => "cumulant",
            Experiment::Simulate => "simulate",
            Experiment::MartingaleCheck => "martingale-check",
            Experiment::Extinction => "extinction",
            Experiment::Couple => "couple",
            Experiment::Spine => "spine",
            Experiment::Explode => "explode",
            Experiment::ChangeOfMeasure => "change-of-measure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub experiment: Option<Experiment>,
    pub characteristics: Characteristics,
    #[serde(default)]
    pub simulation: Simulation,
    #[serde(default)]
    pub statistics: Statistics,
    #[serde(default)]
    pub extinction: ExtinctionConfig,
    #[serde(default)]
    pub spine: SpineConfig,
    #[serde(default)]
    pub explosion: ExplosionConfig,
    #[serde(default)]
    pub change_of_measure: ChangeOfMeasureConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulation {
    pub x0: f64,
    pub chi_horizon: f64,
    pub step: f64,
    pub path_eps: f64,
    /// Strictly decreasing truncation levels for coupling runs.
    pub eps_levels: Vec<f64>,
    pub caps: Caps,
}

impl Default for Simulation {
    fn default() -> Self {
        Simulation {
            x0: 1.0,
            chi_horizon: 5.0,
            step: gfx_core::levy_path::DEFAULT_STEP,
            path_eps: gfx_core::levy_path::DEFAULT_PATH_EPS,
            eps_levels: vec![0.2, 0.1, 0.05],
            caps: Caps::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Statistics {
    pub q: Vec<f64>,
    pub t: Vec<f64>,
    pub a: f64,
    pub a_prime: f64,
    pub replicas: usize,
    pub seed: Option<u64>,
    /// `|z|` beyond which an estimate fails under `--assert`.
    pub z_max: f64,
    /// Largest tolerated fraction of capped or excluded replicas.
    pub max_excluded: f64,
}

impl Default for Statistics {
    fn default() -> Self {
        Statistics {
            q: vec![0.5, 1.0, 2.0],
            t: vec![0.5, 1.0],
            a: 0.5,
            a_prime: 2.0,
            replicas: 1000,
            seed: None,
            z_max: 3.0,
            max_excluded: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtinctionConfig {
    pub generations: u8,
}

impl Default for ExtinctionConfig {
    fn default() -> Self {
        ExtinctionConfig { generations: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpineConfig {
    /// Tilts to test; empty means the selected `q-` and `q+`.
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: Vec<f64>,
    /// χ-horizons for the lifetime runs (when `alpha != 0`).
    pub lifetime_horizons: Vec<f64>,
}

impl Default for SpineConfig {
    fn default() -> Self {
        SpineConfig { q: vec![], p: vec![0.5, 1.0], t: vec![1.0], lifetime_horizons: vec![10.0, 40.0] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplosionMode {
    /// Siblings of a tilted spine; requires (H).
    Spine,
    /// Untilted populations under growing χ-horizons; the Malthusian control.
    Control,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplosionConfig {
    pub mode: ExplosionMode,
    pub budget: ExplosionBudget,
    /// χ-horizons of the control runs, increasing.
    pub control_horizons: Vec<f64>,
    /// X-time probes of the control runs.
    pub control_probes: Vec<f64>,
}

impl Default for ExplosionConfig {
    fn default() -> Self {
        ExplosionConfig {
            mode: ExplosionMode::Spine,
            budget: ExplosionBudget::default(),
            control_horizons: vec![2.0, 4.0, 8.0, 16.0],
            control_probes: vec![0.05, 0.1, 0.2, 0.4, 0.8, 1.6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChangeOfMeasureConfig {
    pub statistic: Statistic,
}

impl Default for ChangeOfMeasureConfig {
    fn default() -> Self {
        ChangeOfMeasureConfig { statistic: Statistic::AliveCount(1) }
    }
}

/// Sets `path` (dot separated) in `doc` to `raw`, parsed as JSON when
/// possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("bad override path '{path}'")));
    }
    let mut node = doc;
    for k in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("'{path}': '{k}' is inside a non-object")))?;
        node = obj.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("'{path}' does not point into an object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_value(doc: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        for (k, v) in overrides {
            apply_override(&mut doc, k, v)?;
        }
        Self::from_value(doc)
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let s = &self.simulation;
        let st = &self.statistics;
        let mut bad = Vec::new();
        if !(s.x0 > 0.0 && s.x0.is_finite()) {
            bad.push("simulation.x0 must be positive".to_string());
        }
        if !(s.chi_horizon > 0.0) {
            bad.push("simulation.chi_horizon must be positive".to_string());
        }
        if !(s.step > 0.0 && s.path_eps > 0.0) {
            bad.push("simulation.step and simulation.path_eps must be positive".to_string());
        }
        if s.eps_levels.is_empty()
            || s.eps_levels.iter().any(|&e| !(e > 0.0))
            || s.eps_levels.windows(2).any(|w| w[0] <= w[1])
        {
            bad.push("simulation.eps_levels must be positive and strictly decreasing".to_string());
        }
        if s.caps.max_particles == 0 || s.caps.max_generation > gfx_core::homogeneous::MAX_DEPTH {
            bad.push("simulation.caps out of range".to_string());
        }
        if st.q.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
            bad.push("statistics.q must be finite and nonnegative".to_string());
        }
        if st.t.is_empty() || st.t.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            bad.push("statistics.t must be non-empty, positive and finite".to_string());
        }
        if !(0.0 < st.a && st.a < st.a_prime && st.a_prime.is_finite()) {
            bad.push("statistics needs 0 < a < a_prime".to_string());
        }
        if st.replicas == 0 {
            bad.push("statistics.replicas must be positive".to_string());
        }
        if !(st.z_max > 0.0) || !(0.0..=1.0).contains(&st.max_excluded) {
            bad.push("statistics.z_max must be positive and max_excluded in [0, 1]".to_string());
        }
        if self.extinction.generations == 0 || self.extinction.generations > gfx_core::homogeneous::MAX_DEPTH {
            bad.push("extinction.generations out of range".to_string());
        }
        let sp = &self.spine;
        if sp.q.iter().any(|&q| !(q > 0.0)) || sp.p.iter().any(|&p| !(p >= 0.0)) || sp.t.iter().any(|&t| !(t > 0.0)) {
            bad.push("spine.q and spine.t must be positive, spine.p nonnegative".to_string());
        }
        if sp.lifetime_horizons.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            bad.push("spine.lifetime_horizons must be positive".to_string());
        }
        if let Err(e) = self.explosion.budget.validate() {
            bad.push(format!("explosion.budget: {e}"));
        }
        let ex = &self.explosion;
        if ex.control_horizons.is_empty()
            || ex.control_horizons.iter().any(|&h| !(h > 0.0 && h.is_finite()))
            || ex.control_horizons.windows(2).any(|w| w[0] >= w[1])
        {
            bad.push("explosion.control_horizons must be positive and increasing".to_string());
        }
        if ex.control_probes.is_empty() || ex.control_probes.iter().any(|&t| !(t >= 0.0)) {
            bad.push("explosion.control_probes must be nonnegative".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(bad.join("; ")))
        }
    }
}
