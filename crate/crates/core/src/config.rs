//! Run configuration: defaults, TOML/JSON files, flag overrides and the canonical hash.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::{FlowKind, StepOptions, DEFAULT_DRIFT_CEILING, DEFAULT_LENGTH_FLOOR};
use crate::grid_curve::{InitDescriptor, MIN_N};

/// Upper bound on dt halvings before a step failure is reported.
pub const MAX_HALVINGS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowName {
    Original,
    Normalized,
    Regularized,
    Classical,
}

impl FlowName {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowName::Original => "original",
            FlowName::Normalized => "normalized",
            FlowName::Regularized => "regularized",
            FlowName::Classical => "classical",
        }
    }
}

impl FromStr for FlowName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(FlowName::Original),
            "normalized" => Ok(FlowName::Normalized),
            "regularized" => Ok(FlowName::Regularized),
            "classical" => Ok(FlowName::Classical),
            other => Err(Error::InvalidConfig(format!("unknown flow '{other}'"))),
        }
    }
}

impl fmt::Display for FlowName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::InvalidConfig(format!("unknown format '{other}' (csv or json)"))),
        }
    }
}

/// Everything that defines one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flow: FlowName,
    pub init: String,
    pub n: usize,
    pub dim: usize,
    pub dt: f64,
    pub t_end: f64,
    pub reparam_every: usize,
    pub epsilon: Option<f64>,
    pub drift_ceiling: f64,
    pub length_floor: f64,
    pub output_dir: Option<PathBuf>,
    pub format: Format,
    /// Write a curve snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Store every this many steps in the series. Per-step checks still see every step.
    pub record_every: usize,
    pub seed: u64,
    /// Stop a normalized run once `‖ξ̃‖ < converge_tol`.
    pub converge_tol: Option<f64>,
}

/// A partial configuration: the contents of a config file, or the flags given on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub flow: Option<FlowName>,
    pub init: Option<String>,
    pub n: Option<usize>,
    pub dim: Option<usize>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub reparam_every: Option<usize>,
    pub epsilon: Option<f64>,
    pub drift_ceiling: Option<f64>,
    pub length_floor: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub snapshot_every: Option<usize>,
    pub record_every: Option<usize>,
    pub seed: Option<u64>,
    pub converge_tol: Option<f64>,
}

impl ConfigLayer {
    /// Read a TOML file, or JSON when the extension is `.json`. Unknown keys are rejected.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    /// Fields set in `top` win over fields set in `self`.
    pub fn overlay(self, top: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            flow: top.flow.or(self.flow),
            init: top.init.or(self.init),
            n: top.n.or(self.n),
            dim: top.dim.or(self.dim),
            dt: top.dt.or(self.dt),
            t_end: top.t_end.or(self.t_end),
            reparam_every: top.reparam_every.or(self.reparam_every),
            epsilon: top.epsilon.or(self.epsilon),
            drift_ceiling: top.drift_ceiling.or(self.drift_ceiling),
            length_floor: top.length_floor.or(self.length_floor),
            output_dir: top.output_dir.or(self.output_dir),
            format: top.format.or(self.format),
            snapshot_every: top.snapshot_every.or(self.snapshot_every),
            record_every: top.record_every.or(self.record_every),
            seed: top.seed.or(self.seed),
            converge_tol: top.converge_tol.or(self.converge_tol),
        }
    }
}

/// Build a validated config for `flow` from an optional file layer and the flag layer.
pub fn parse_config(flow: FlowName, file: Option<ConfigLayer>, flags: ConfigLayer) -> Result<RunConfig> {
    let layer = file.unwrap_or_default().overlay(flags);
    if let Some(f) = layer.flow {
        if f != flow {
            return Err(Error::InvalidConfig(format!("config file is for flow '{f}', command runs '{flow}'")));
        }
    }
    let cfg = RunConfig {
        flow,
        init: layer.init.ok_or_else(|| Error::InvalidConfig("missing required 'init'".into()))?,
        n: layer.n.unwrap_or(256),
        dim: layer.dim.unwrap_or(2),
        dt: layer.dt.unwrap_or(1e-3),
        t_end: layer.t_end.ok_or_else(|| Error::InvalidConfig("missing required 't_end'".into()))?,
        reparam_every: layer.reparam_every.unwrap_or(1),
        epsilon: layer.epsilon,
        drift_ceiling: layer.drift_ceiling.unwrap_or(DEFAULT_DRIFT_CEILING),
        length_floor: layer.length_floor.unwrap_or(DEFAULT_LENGTH_FLOOR),
        output_dir: layer.output_dir,
        format: layer.format.unwrap_or_default(),
        snapshot_every: layer.snapshot_every.unwrap_or(0),
        record_every: layer.record_every.unwrap_or(1),
        seed: layer.seed.unwrap_or(0),
        converge_tol: layer.converge_tol,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    /// A config with defaults for everything but the flow, datum and end time.
    pub fn new(flow: FlowName, init: &str, t_end: f64) -> Self {
        RunConfig {
            flow,
            init: init.to_string(),
            n: 256,
            dim: 2,
            dt: 1e-3,
            t_end,
            reparam_every: 1,
            epsilon: None,
            drift_ceiling: DEFAULT_DRIFT_CEILING,
            length_floor: DEFAULT_LENGTH_FLOOR,
            output_dir: None,
            format: Format::Csv,
            snapshot_every: 0,
            record_every: 1,
            seed: 0,
            converge_tol: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(false)
    }

    /// As [`RunConfig::validate`], optionally admitting `t_end = 0` (zero-duration roundtrips).
    pub(crate) fn validate_with(&self, allow_zero_duration: bool) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < MIN_N {
            return bad(format!("n must be >= {MIN_N}, got {}", self.n));
        }
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        let t_ok = if allow_zero_duration { self.t_end >= 0.0 } else { self.t_end > 0.0 };
        if !t_ok || !self.t_end.is_finite() {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        if self.reparam_every == 0 || self.record_every == 0 {
            return bad("reparam_every and record_every must be >= 1".into());
        }
        match (self.flow, self.epsilon) {
            (FlowName::Regularized, None) => return bad("the regularized flow requires epsilon".into()),
            (FlowName::Regularized, Some(e)) if !(e > 0.0 && e.is_finite()) => {
                return bad(format!("epsilon must be > 0, got {e}"))
            }
            (f, Some(_)) if f != FlowName::Regularized => {
                return bad(format!("epsilon only applies to the regularized flow, not {f}"))
            }
            _ => {}
        }
        if !(self.drift_ceiling > 0.0) || !(self.length_floor >= 0.0) {
            return bad("drift_ceiling must be > 0 and length_floor >= 0".into());
        }
        if let Some(tol) = self.converge_tol {
            if self.flow != FlowName::Normalized || !(tol > 0.0) {
                return bad("converge_tol must be > 0 and applies to the normalized flow only".into());
            }
        }
        self.descriptor()?;
        Ok(())
    }

    pub fn descriptor(&self) -> Result<InitDescriptor> {
        self.init.parse()
    }

    pub fn flow_kind(&self) -> FlowKind {
        match self.flow {
            FlowName::Original => FlowKind::Original,
            FlowName::Normalized => FlowKind::Normalized,
            FlowName::Regularized => FlowKind::Regularized { epsilon: self.epsilon.unwrap_or(f64::NAN) },
            FlowName::Classical => FlowKind::Classical,
        }
    }

    /// Step options for step number `k` (0-based).
    pub fn step_options(&self, k: usize) -> StepOptions {
        StepOptions {
            reparametrize: (k + 1).is_multiple_of(self.reparam_every),
            drift_ceiling: self.drift_ceiling,
            length_floor: self.length_floor,
        }
    }

    /// Canonical JSON: sorted keys, no whitespace. The output directory is not part of it,
    /// since it does not affect what is computed.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut v {
            map.remove("output_dir");
        }
        // serde_json's default map is ordered by key
        serde_json::to_string(&v).expect("value serializes")
    }

    /// SHA-256 of [`RunConfig::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(init: &str, t_end: f64) -> ConfigLayer {
        ConfigLayer { init: Some(init.into()), t_end: Some(t_end), ..Default::default() }
    }

    #[test]
    fn defaults_and_overrides() {
        let file: ConfigLayer = toml::from_str("init = \"circle\"\nt_end = 1.0\ndt = 0.01\nn = 64\n").unwrap();
        let top = ConfigLayer { dt: Some(0.002), ..Default::default() };
        let cfg = parse_config(FlowName::Normalized, Some(file), top).unwrap();
        assert_eq!(cfg.dt, 0.002);
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.reparam_every, 1);
    }

    #[test]
    fn rejects_bad_combinations() {
        assert!(parse_config(FlowName::Regularized, None, flags("square", 1.0)).is_err());
        let mut f = flags("circle", 1.0);
        f.epsilon = Some(0.1);
        assert!(parse_config(FlowName::Normalized, None, f).is_err());
        assert!(toml::from_str::<ConfigLayer>("init = \"circle\"\nbogus = 1\n").is_err());
        assert!(parse_config(FlowName::Original, None, flags("circle", -1.0)).is_err());
        assert!(parse_config(FlowName::Original, None, flags("hexagon", 1.0)).is_err());
    }

    #[test]
    fn hash_is_canonical() {
        let a = parse_config(FlowName::Original, None, flags("circle:1", 0.4)).unwrap();
        let json = a.canonical_json();
        assert!(json.starts_with("{\"converge_tol\":null,\"dim\":2,"));
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
