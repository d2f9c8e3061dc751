//! Run configuration: what to compute, on which profile, and where to put it.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use spinphase::dynamics::IntegratorConfig;
use spinphase::profile::{FieldProfile, ProfileConfig, ProfileKind};

use crate::CliError;

pub const OUT_DIR_ENV: &str = "SPINPHASE_OUT_DIR";
pub const DEFAULT_EPS: [f64; 4] = [0.16, 0.08, 0.04, 0.02];
pub const DEFAULT_HORIZON: f64 = 2.0 * std::f64::consts::PI;
pub const DEFAULT_LOOP_NODES: usize = 2000;
/// Output-node spacing for `simulate` when no sample count is given.
pub const DEFAULT_NODE_SPACING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Phases,
    Convergence,
    Stokes,
    Timescale,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Phases => "phases",
            Command::Convergence => "convergence",
            Command::Stokes => "stokes",
            Command::Timescale => "timescale",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Gnuplot,
}

impl Format {
    pub fn all() -> BTreeSet<Format> {
        [Format::Csv, Format::Json, Format::Gnuplot].into()
    }
}

/// Parses `csv,json,gnuplot`; an empty string or `none` gives the empty set.
pub fn parse_formats(s: &str) -> Result<BTreeSet<Format>, String> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(BTreeSet::new());
    }
    s.split(',')
        .map(|f| match f.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "gnuplot" => Ok(Format::Gnuplot),
            other => Err(format!("unknown format {other:?} (expected csv, json, gnuplot)")),
        })
        .collect()
}

/// Command-specific parameters. Absent values fall back to the defaults
/// above where one exists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    #[serde(default)]
    pub t_start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Number of output intervals (simulate) or loop nodes (stokes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Bloch angles `[theta, phi]` of the initial state; the adiabatic
    /// eigenvector when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    /// Fixed `εt` horizon of the convergence study.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_list: Option<Vec<f64>>,
    /// Also integrate numerically in the timescale demo.
    #[serde(default)]
    pub numeric: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileConfig>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub output_dir: PathBuf,
    pub formats: BTreeSet<Format>,
    #[serde(default)]
    pub params: RunParams,
}

pub fn default_output_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from)
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        RunConfig {
            command,
            profile: None,
            integrator: IntegratorConfig::default(),
            output_dir: default_output_dir(),
            formats: Format::all(),
            params: RunParams::default(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run configs always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Loads a config file for `command`. The file holds either a full run
    /// configuration or a bare profile; missing `command`, `output_dir` and
    /// `formats` are filled from the invocation and the environment.
    pub fn load(path: &Path, command: Command) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(mut obj) = value else {
            return Err(CliError::Config(format!("{}: expected a JSON object", path.display())));
        };
        if obj.contains_key("kind") {
            let profile: ProfileConfig = serde_json::from_value(Value::Object(obj))
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok(RunConfig {
                profile: Some(profile),
                ..RunConfig::new(command)
            });
        }
        let defaults = RunConfig::new(command);
        obj.entry("command").or_insert_with(|| command.name().into());
        obj.entry("output_dir")
            .or_insert_with(|| serde_json::to_value(&defaults.output_dir).unwrap());
        obj.entry("formats")
            .or_insert_with(|| serde_json::to_value(&defaults.formats).unwrap());
        let cfg: RunConfig = serde_json::from_value(Value::Object(obj))
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.command != command {
            return Err(CliError::Config(format!(
                "{} describes a {} run, not {}",
                path.display(),
                cfg.command.name(),
                command.name()
            )));
        }
        Ok(cfg)
    }

    pub fn build_profile(&self) -> Result<Option<FieldProfile>, CliError> {
        self.profile
            .as_ref()
            .map(FieldProfile::from_config)
            .transpose()
            .map_err(CliError::from)
    }

    pub fn profile(&self) -> Result<FieldProfile, CliError> {
        self.build_profile()?
            .ok_or_else(|| CliError::Config(format!("{} needs a field profile", self.command.name())))
    }

    pub fn t_span(&self) -> Result<(f64, f64), CliError> {
        let t0 = self.params.t_start;
        let t1 = self
            .params
            .t_end
            .ok_or_else(|| CliError::Config(format!("{} needs t_end", self.command.name())))?;
        if !(t0.is_finite() && t1.is_finite() && t0 != t1) {
            return Err(CliError::Config(format!("empty or non-finite time span [{t0}, {t1}]")));
        }
        Ok((t0, t1))
    }

    pub fn eps(&self) -> Vec<f64> {
        self.params.eps.clone().unwrap_or_else(|| DEFAULT_EPS.to_vec())
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon.unwrap_or(DEFAULT_HORIZON)
    }

    pub fn b_list(&self) -> Vec<f64> {
        self.params.b_list.clone().unwrap_or_else(|| vec![1.0])
    }

    /// Field magnitude and rotation rate of a uniform-rotation profile.
    pub fn rotation(&self) -> Result<(f64, f64), CliError> {
        let profile = self.profile()?;
        match profile.kind {
            ProfileKind::UniformRotation { b0, omega, .. } => Ok((b0, omega * profile.epsilon)),
            _ => Err(CliError::Config("timescale needs a uniform_rotation profile".into())),
        }
    }

    /// Checks that everything the command needs is present and sane.
    pub fn validate(&self) -> Result<(), CliError> {
        self.integrator
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.build_profile()?;
        if self.params.samples.is_some_and(|n| n < 2) {
            return Err(CliError::Config("samples must be at least 2".into()));
        }
        match self.command {
            Command::Simulate => {
                self.profile()?;
                self.t_span()?;
                if let Some(a) = self.params.initial {
                    if !a.iter().all(|x| x.is_finite()) {
                        return Err(CliError::Config("initial angles must be finite".into()));
                    }
                }
            }
            Command::Phases => {
                self.profile()?;
                self.t_span()?;
            }
            Command::Convergence => {
                self.profile()?;
                let eps = self.eps();
                if eps.is_empty()
                    || eps.iter().any(|e| !(*e > 0.0 && e.is_finite()))
                    || eps.windows(2).any(|w| !(w[1] < w[0]))
                {
                    return Err(CliError::Config("eps must be positive and strictly decreasing".into()));
                }
                if !(self.horizon() > 0.0 && self.horizon().is_finite()) {
                    return Err(CliError::Config("horizon must be positive".into()));
                }
            }
            Command::Stokes => {
                let b = self.b_list();
                if b.is_empty() || b.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                    return Err(CliError::Config("b_list must hold positive field strengths".into()));
                }
                if self.profile.is_some() {
                    self.t_span()?;
                }
            }
            Command::Timescale => {
                let (b, _) = self.rotation()?;
                if !(b > 0.0) {
                    return Err(CliError::Config("B0 must be positive".into()));
                }
            }
        }
        Ok(())
    }
}
