//! Experiment configuration and its validation.

use crate::error::{HarnessError, Result};
use crate::registry;
use fbm_mdp_core::sde::{ScaleParams, SystemSpec};
use fbm_mdp_core::systems;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::PathBuf;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub alpha: f64,
    pub theta: f64,
    pub epsilon_chain: Vec<f64>,
    /// Exit level or endpoint target.
    pub delta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    /// Largest Khasminskii block length.
    #[serde(rename = "Delta")]
    pub block: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub system: String,
    pub output_dir: PathBuf,
    /// Overrides the system's fast dissipativity constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
}

impl ExperimentConfig {
    /// Registry defaults for `experiment`.
    pub fn defaults(experiment: &str) -> Result<Self> {
        let entry = registry::lookup(experiment)?;
        let mut c = ExperimentConfig {
            experiment: experiment.to_string(),
            hurst: 0.75,
            alpha: 0.3,
            theta: 0.4,
            epsilon_chain: vec![1e-1, 1e-2, 1e-3, 1e-4],
            delta: 1.0,
            horizon: 1.0,
            steps: 256,
            block: 0.5,
            n_paths: 1000,
            seed: 1,
            system: "SS-LIN".into(),
            output_dir: PathBuf::from("out").join(experiment),
            beta2: None,
        };
        (entry.tweak)(&mut c);
        Ok(c)
    }

    /// Parses JSON, filling absent keys from the registry defaults of the
    /// named experiment.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(vec![e.to_string()]))?;
        let name = value
            .get("experiment")
            .and_then(Value::as_str)
            .ok_or_else(|| HarnessError::Config(vec!["missing key \"experiment\"".into()]))?;
        let mut base = serde_json::to_value(Self::defaults(name)?).expect("config serializes");
        match value {
            Value::Object(map) => {
                for (k, v) in map {
                    base[k] = v;
                }
            }
            _ => return Err(HarnessError::Config(vec!["config must be a JSON object".into()])),
        }
        serde_json::from_value(base).map_err(|e| HarnessError::Config(vec![e.to_string()]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value`; values are read as JSON, falling back to a
    /// plain string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(vec![format!("expected key=value, got {assignment:?}")]))?;
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut v = serde_json::to_value(&*self).expect("config serializes");
        if key != "beta2" && v.get(key).is_none() {
            return Err(HarnessError::Config(vec![format!("unknown key {key:?}")]));
        }
        v[key] = parsed;
        *self = serde_json::from_value(v).map_err(|e| HarnessError::Config(vec![format!("{key}: {e}")]))?;
        Ok(())
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn scale_chain(&self) -> Result<Vec<ScaleParams>> {
        Ok(self.epsilon_chain.iter().map(|&e| ScaleParams::new(e, self.theta)).collect::<fbm_mdp_core::Result<_>>()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    fn error(message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, message: message.into() }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, message: message.into() }
    }
}

/// Every violated invariant; errors block a run, warnings do not.
pub fn validate_config(c: &ExperimentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let entry = match registry::lookup(&c.experiment) {
        Ok(e) => Some(e),
        Err(_) => {
            out.push(Violation::error(format!("unknown experiment {:?}", c.experiment)));
            None
        }
    };
    let h = c.hurst;
    if !(h > 0.5 && h < 1.0) {
        out.push(Violation::error(format!("H = {h} outside (1/2, 1)")));
    }
    if c.alpha <= 1.0 - h {
        out.push(Violation::error(format!("alpha below 1−H: {} <= {}", c.alpha, 1.0 - h)));
    }
    if c.alpha >= 0.5 {
        out.push(Violation::error(format!("alpha not below 1/2: {}", c.alpha)));
    }
    if !(0.0..1.0).contains(&c.theta) {
        out.push(Violation::error(format!("theta = {} outside [0, 1)", c.theta)));
    }
    let chain = &c.epsilon_chain;
    if chain.is_empty() {
        out.push(Violation::error("epsilon_chain is empty"));
    }
    if chain.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        out.push(Violation::error("epsilon_chain leaves (0, 1]"));
    }
    if chain.windows(2).any(|w| w[1] >= w[0]) {
        out.push(Violation::error("epsilon_chain not strictly decreasing"));
    }
    if !c.steps.is_power_of_two() || c.steps < 2 {
        out.push(Violation::error(format!("M = {} is not a power of two", c.steps)));
    }
    if !(c.horizon > 0.0 && c.horizon.is_finite()) {
        out.push(Violation::error(format!("T = {} must be positive", c.horizon)));
    }
    if !(c.delta > 0.0 && c.delta.is_finite()) {
        out.push(Violation::error(format!("delta = {} must be positive", c.delta)));
    }
    if !(c.block > 0.0 && c.block <= c.horizon) {
        out.push(Violation::error(format!("Delta = {} outside (0, T]", c.block)));
    }
    if c.n_paths < 2 {
        out.push(Violation::error(format!("n_paths = {} below 2", c.n_paths)));
    }
    let system = match systems::by_name(&c.system) {
        Ok(s) => Some(s),
        Err(_) => {
            out.push(Violation::error(format!("unknown system {:?}", c.system)));
            None
        }
    };
    if let (Some(entry), Some(system)) = (entry, &system) {
        let two = matches!(system, SystemSpec::TwoScale(_));
        if two != entry.two_scale {
            let kind = if entry.two_scale { "two-scale" } else { "single-scale" };
            out.push(Violation::error(format!("{} needs a {kind} system, got {}", c.experiment, c.system)));
        }
        if two && out.is_empty() {
            let limit = 0.1 / (2.0 * system.constants().lipschitz);
            let smallest = chain.iter().cloned().fold(f64::INFINITY, f64::min);
            if c.step() / smallest > limit {
                out.push(Violation::error(format!(
                    "grid too coarse: T/M / epsilon = {:.3e} exceeds {limit:.3e}",
                    c.step() / smallest
                )));
            }
        }
    }
    let beta2 = c.beta2.or_else(|| match &system {
        Some(SystemSpec::TwoScale(s)) => Some(s.constants.beta2),
        _ => None,
    });
    if let Some(beta2) = beta2 {
        for &e in chain {
            if let Ok(p) = ScaleParams::new(e, c.theta) {
                let s = p.sqrt_eps_h();
                if s >= 0.5 * beta2 {
                    out.push(Violation::warning(format!(
                        "sqrt(eps)h(eps) exceeds beta2/2 at epsilon = {e}: {s:.4} >= {:.4}",
                        0.5 * beta2
                    )));
                }
            }
        }
    }
    out
}

/// Errors as a single config failure, warnings returned.
pub fn check_config(c: &ExperimentConfig) -> Result<Vec<String>> {
    let (errors, warnings): (Vec<_>, Vec<_>) = validate_config(c).into_iter().partition(|v| v.severity == Severity::Error);
    if !errors.is_empty() {
        return Err(HarnessError::Config(errors.into_iter().map(|v| v.message).collect()));
    }
    Ok(warnings.into_iter().map(|v| v.message).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn messages(c: &ExperimentConfig) -> Vec<String> {
        validate_config(c).into_iter().map(|v| v.message).collect()
    }

    #[test]
    fn defaults_are_valid() {
        for e in &registry::EXPERIMENTS {
            let c = ExperimentConfig::defaults(e.name).unwrap();
            assert!(messages(&c).is_empty(), "{}: {:?}", e.name, messages(&c));
        }
    }

    #[test]
    fn alpha_window() {
        let mut c = ExperimentConfig::defaults("exp-rate-endpoint").unwrap();
        c.alpha = 0.3;
        assert!(messages(&c).is_empty());
        c.alpha = 0.2;
        assert!(messages(&c).iter().any(|m| m.contains("alpha below 1−H")));
        c.alpha = 0.5;
        assert!(messages(&c).iter().any(|m| m.contains("alpha not below 1/2")));
    }

    #[test]
    fn dissipativity_warning() {
        let mut c = ExperimentConfig::defaults("exp-rate-endpoint").unwrap();
        c.theta = 0.9;
        c.epsilon_chain = vec![0.5];
        c.beta2 = Some(0.1);
        let v = validate_config(&c);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].severity, Severity::Warning);
        assert!(v[0].message.contains("sqrt(eps)h(eps) exceeds beta2/2"));
        assert!(v[0].message.contains("0.9659"));
        assert!(check_config(&c).unwrap().len() == 1);
    }

    #[test]
    fn chain_and_grid_invariants() {
        let mut c = ExperimentConfig::defaults("exp-ode-limit").unwrap();
        c.epsilon_chain = vec![1e-2, 1e-1];
        c.steps = 100;
        let m = messages(&c);
        assert!(m.iter().any(|m| m.contains("not strictly decreasing")));
        assert!(m.iter().any(|m| m.contains("power of two")));
        assert!(matches!(check_config(&c), Err(HarnessError::Config(v)) if v.len() == 2));
    }

    #[test]
    fn system_kind_and_fast_grid() {
        let mut c = ExperimentConfig::defaults("exp-averaging").unwrap();
        c.system = "SS-LIN".into();
        assert!(messages(&c).iter().any(|m| m.contains("needs a two-scale system")));
        c.system = "TS-OU".into();
        c.steps = 1024;
        assert!(messages(&c).iter().any(|m| m.contains("grid too coarse")));
    }

    #[test]
    fn json_round_trip_and_overrides() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "exp-mdp-trend", "M": 32, "seed": 9}"#).unwrap();
        assert_eq!((c.steps, c.seed), (32, 9));
        assert_eq!(c.system, ExperimentConfig::defaults("exp-mdp-trend").unwrap().system);
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        let mut d = c.clone();
        d.set("epsilon_chain=[0.1,0.01]").unwrap();
        d.set("system=SS-NL").unwrap();
        assert_eq!(d.epsilon_chain, vec![0.1, 0.01]);
        assert_eq!(d.system, "SS-NL");
        assert!(d.set("nope=1").is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "exp-nope"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "exp-mdp-trend", "bogus": 1}"#).is_err());
    }
}
