//! Command-line grammar.

use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use spinphase::profile::ProfileConfig;

use crate::config::{parse_formats, Command, Format, RunConfig};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "spinphase",
    version,
    about = "Adiabatic spin-1/2 phases checked against exact integration"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Integrate one run and tabulate field, spin, state and phases.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        span: Span,
        /// Number of output intervals [default: one node per 0.1 time units].
        #[arg(long)]
        samples: Option<usize>,
        /// Bloch angles THETA,PHI of the initial state [default: adiabatic eigenvector].
        #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
        initial: Option<Vec<f64>>,
    },
    /// Phase budget: exact total phase against the adiabatic decomposition.
    Phases {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        span: Span,
    },
    /// Error of the zeroth, first and second order solutions as ε shrinks.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Decreasing list of ε values [default: 0.16,0.08,0.04,0.02].
        #[arg(long, value_delimiter = ',', num_args = 1)]
        eps: Option<Vec<f64>>,
        /// Fixed εt at which each run ends [default: 2π].
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Line against surface integral on loops in the (θ, θ̇) plane.
    Stokes {
        #[command(flatten)]
        common: Common,
        /// Time span of an extra loop traced by the profile, if one is given.
        #[command(flatten)]
        span: Span,
        /// Number of nodes on the profile loop [default: 2000].
        #[arg(long)]
        samples: Option<usize>,
        /// Field strengths to evaluate at [default: 1].
        #[arg(long = "B-list", value_delimiter = ',', num_args = 1)]
        b_list: Option<Vec<f64>>,
    },
    /// Timescales of the second-order phase for uniform rotation.
    Timescale {
        #[command(flatten)]
        common: Common,
        /// Integrate up to t1 and report the measured deviation.
        #[arg(long)]
        numeric: bool,
    },
}

#[derive(Debug, Args)]
pub struct Span {
    #[arg(long, allow_hyphen_values = true)]
    pub t_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_end: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration, or a bare profile.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub max_step: Option<f64>,
    /// Output directory [default: $SPINPHASE_OUT_DIR, else the working directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Subset of csv,json,gnuplot; empty prints the summary instead.
    #[arg(long, value_parser = parse_format_set)]
    pub formats: Option<FormatSet>,
}

#[derive(Debug, Clone)]
pub struct FormatSet(pub BTreeSet<Format>);

fn parse_format_set(s: &str) -> Result<FormatSet, String> {
    parse_formats(s).map(FormatSet)
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    /// constant, uniform_rotation, polynomial_angle, sinusoidal, cone_3d or user_tabulated.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long = "B0")]
    pub b0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    #[arg(long = "Omega", allow_hyphen_values = true)]
    pub big_omega: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    #[arg(long = "theta-c", allow_hyphen_values = true)]
    pub theta_c: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub phi0: Option<f64>,
    #[arg(long = "B-amp", allow_hyphen_values = true)]
    pub b_amp: Option<f64>,
    #[arg(long = "B-Omega", allow_hyphen_values = true)]
    pub b_omega: Option<f64>,
    /// Slow-time scale ε.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Any other profile parameter, e.g. `--param a2=0.01`.
    #[arg(long = "param", value_parser = parse_param, allow_hyphen_values = true)]
    pub extra: Vec<(String, f64)>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{k}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn canonical_kind(kind: &str) -> &str {
    match kind {
        "sinusoidal" => "sinusoidal_angle",
        "cone" => "cone_3d",
        "polynomial" => "polynomial_angle",
        "tabulated" => "user_tabulated",
        other => other,
    }
}

impl ProfileArgs {
    fn named(&self) -> Vec<(&'static str, f64)> {
        [
            ("B0", self.b0),
            ("omega", self.omega),
            ("Omega", self.big_omega),
            ("theta", self.theta),
            ("theta0", self.theta0),
            ("theta_c", self.theta_c),
            ("phi", self.phi),
            ("phi0", self.phi0),
            ("B_amp", self.b_amp),
            ("B_Omega", self.b_omega),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    fn is_empty(&self) -> bool {
        self.profile.is_none() && self.named().is_empty() && self.epsilon.is_none() && self.extra.is_empty()
    }

    /// Applies the flags on top of `base`. `--profile` starts a fresh
    /// profile, with `B0` and, where the kind has one, `Omega` set to 1
    /// unless given.
    fn apply(&self, base: Option<ProfileConfig>) -> Result<Option<ProfileConfig>, CliError> {
        if self.is_empty() {
            return Ok(base);
        }
        let mut cfg = match (&self.profile, base) {
            (Some(kind), _) => {
                let kind = canonical_kind(kind).to_string();
                let mut cfg = ProfileConfig {
                    kind: kind.clone(),
                    params: Default::default(),
                    epsilon: 1.0,
                    t_domain: None,
                    table: None,
                };
                if kind != "user_tabulated" {
                    cfg.params.insert("B0".into(), 1.0);
                }
                if kind == "sinusoidal_angle" || kind == "cone_3d" {
                    cfg.params.insert("Omega".into(), 1.0);
                }
                cfg
            }
            (None, Some(base)) => base,
            (None, None) => return Err(CliError::Usage("profile parameters given without --profile".into())),
        };
        for (k, v) in self.named() {
            cfg.params.insert(k.into(), v);
        }
        for (k, v) in &self.extra {
            cfg.params.insert(k.clone(), *v);
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        Ok(Some(cfg))
    }
}

impl Common {
    fn base(&self, command: Command) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path, command)?,
            None => RunConfig::new(command),
        };
        cfg.profile = self.profile.apply(cfg.profile.take())?;
        if let Some(v) = self.rel_tol {
            cfg.integrator.rel_tol = v;
            if self.abs_tol.is_none() {
                cfg.integrator.abs_tol = v * 1e-2;
            }
        }
        if let Some(v) = self.abs_tol {
            cfg.integrator.abs_tol = v;
        }
        if let Some(v) = self.max_step {
            cfg.integrator.max_step = v;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(f) = &self.formats {
            cfg.formats = f.0.clone();
        }
        Ok(cfg)
    }
}

impl Span {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(t) = self.t_start {
            cfg.params.t_start = t;
        }
        if let Some(t) = self.t_end {
            cfg.params.t_end = Some(t);
        }
    }
}

impl Cli {
    /// Merges flags over the optional config file and validates the result.
    pub fn into_config(self) -> Result<RunConfig, CliError> {
        let cfg = match self.command {
            Sub::Simulate {
                common,
                span,
                samples,
                initial,
            } => {
                let mut cfg = common.base(Command::Simulate)?;
                span.apply(&mut cfg);
                if samples.is_some() {
                    cfg.params.samples = samples;
                }
                if let Some(v) = initial {
                    let [theta, phi] = v[..] else {
                        return Err(CliError::Usage("--initial takes THETA,PHI".into()));
                    };
                    cfg.params.initial = Some([theta, phi]);
                }
                cfg
            }
            Sub::Phases { common, span } => {
                let mut cfg = common.base(Command::Phases)?;
                span.apply(&mut cfg);
                cfg
            }
            Sub::Convergence { common, eps, horizon } => {
                let mut cfg = common.base(Command::Convergence)?;
                if eps.is_some() {
                    cfg.params.eps = eps;
                }
                if horizon.is_some() {
                    cfg.params.horizon = horizon;
                }
                cfg
            }
            Sub::Stokes {
                common,
                span,
                samples,
                b_list,
            } => {
                let mut cfg = common.base(Command::Stokes)?;
                span.apply(&mut cfg);
                if samples.is_some() {
                    cfg.params.samples = samples;
                }
                if b_list.is_some() {
                    cfg.params.b_list = b_list;
                }
                cfg
            }
            Sub::Timescale { common, numeric } => {
                let mut cfg = common.base(Command::Timescale)?;
                cfg.params.numeric |= numeric;
                cfg
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `argv` (program name first) into a validated run configuration.
pub fn parse_cli<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .into_config()
}
