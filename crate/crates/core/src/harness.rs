//! Experiments that compare the adiabatic theory against exact integration
//! and report the outcome as numbers.

use serde::{Deserialize, Serialize};

use crate::adiabatic::{quasi_stationary, tracked_eigenvector};
use crate::dynamics::{integrate_bloch, integrate_with_phase, uniform_grid, IntegratorConfig, PhaseReference};
use crate::error::{Error, Result};
use crate::phases::{self, MLoop, PhaseDecomposition};
use crate::profile::{FieldProfile, ProfileConfig};

const GUARD_SAMPLES: usize = 1000;

/// Rejects spans longer than a tenth of `t₂ = B³/ε⁴`, where ε is the peak
/// angular speed of the field direction and B the weakest field on the span.
pub fn check_t2(profile: &FieldProfile, (t0, t1): (f64, f64)) -> Result<()> {
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok(());
    }
    let mut b_min = f64::INFINITY;
    let mut rate: f64 = 0.0;
    for t in uniform_grid(t0, t1, GUARD_SAMPLES) {
        let s = profile.sample(t)?;
        b_min = b_min.min(s.b_mag);
        rate = rate.max(s.angular_speed());
    }
    if rate == 0.0 {
        return Ok(());
    }
    let limit = 0.1 * b_min.powi(3) / rate.powi(4);
    if span > limit {
        return Err(Error::HorizonExceedsT2 { span, limit });
    }
    Ok(())
}

/// Least-squares slope of `ln err` against `ln ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
}

fn fit_slope(eps: &[f64], err: &[f64]) -> Option<SlopeFit> {
    if eps.len() < 2 || err.iter().any(|&e| !(e > 0.0)) {
        return None;
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let stderr = if x.len() > 2 {
        let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some(SlopeFit { slope, stderr })
}

/// Maximum deviation of the exact spin from the truncated quasi-stationary
/// solution, per ε and per truncation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub errors_order0: Vec<f64>,
    pub errors_order1: Vec<f64>,
    pub errors_order2: Vec<f64>,
    /// Fitted slopes for the three orders; `None` when some error is zero.
    pub slopes: [Option<SlopeFit>; 3],
}

/// Largest output-node spacing used by the convergence runs.
pub const CONVERGENCE_NODE_SPACING: f64 = 0.05;

fn convergence_cell(base: &FieldProfile, eps: f64, horizon: f64, cfg: &IntegratorConfig) -> Result<[f64; 3]> {
    let profile = base.clone().with_epsilon(eps);
    let t1 = horizon / eps;
    check_t2(&profile, (0.0, t1))?;
    let seed = quasi_stationary(&profile, 0.0)?.seed();
    let n = (t1 / CONVERGENCE_NODE_SPACING).ceil() as usize;
    let cfg = IntegratorConfig {
        dense_output_grid: Some(uniform_grid(0.0, t1, n)),
        ..cfg.clone()
    };
    let traj = integrate_bloch(&profile, &seed, (0.0, t1), &cfg)?;
    let mut worst = [0.0f64; 3];
    for (&t, s) in traj.times.iter().zip(&traj.states) {
        let q = quasi_stationary(&profile, t)?;
        let partial = [q.s0, q.s0 + q.s1, q.s0 + q.s1 + q.s2];
        for (w, p) in worst.iter_mut().zip(partial) {
            *w = w.max((s.0 - p).norm());
        }
    }
    Ok(worst)
}

/// Runs the base profile at each ε over `[0, horizon/ε]`, seeded on the
/// quasi-stationary branch. Cells run on separate threads.
pub fn run_convergence(
    base: &FieldProfile,
    eps_list: &[f64],
    horizon_eps_t: f64,
    cfg: &IntegratorConfig,
) -> Result<ConvergenceReport> {
    if eps_list.is_empty() {
        return Err(Error::InvalidArgument("empty epsilon list".into()));
    }
    if eps_list.iter().any(|&e| !(e > 0.0)) || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument(
            "epsilons must be positive and strictly decreasing".into(),
        ));
    }
    if !(horizon_eps_t > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    cfg.validate()?;
    let cells: Vec<Result<[f64; 3]>> = std::thread::scope(|scope| {
        let handles: Vec<_> = eps_list
            .iter()
            .map(|&eps| scope.spawn(move || convergence_cell(base, eps, horizon_eps_t, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("convergence worker panicked"))
            .collect()
    });
    let mut errors: [Vec<f64>; 3] = Default::default();
    for cell in cells {
        let cell = cell?;
        for k in 0..3 {
            errors[k].push(cell[k]);
        }
    }
    let slopes = [0, 1, 2].map(|k| fit_slope(eps_list, &errors[k]));
    let [errors_order0, errors_order1, errors_order2] = errors;
    Ok(ConvergenceReport {
        epsilons: eps_list.to_vec(),
        errors_order0,
        errors_order1,
        errors_order2,
        slopes,
    })
}

/// Phase decomposition of a quasi-stationary run plus residuals against the
/// second-order prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBudget {
    #[serde(flatten)]
    pub phases: PhaseDecomposition,
    /// `phi_total_exact − (phi0 + phi2)`
    #[serde(rename = "residual_eps4")]
    pub r_total: f64,
    /// `phi_geom_aa − 2 phi2`
    pub r_aa: f64,
    /// `phi_geom_aa / phi2`, absent when `phi2` vanishes.
    pub ratio: Option<f64>,
    pub profile: ProfileConfig,
    pub t_span: (f64, f64),
    pub rel_tol: f64,
    pub abs_tol: f64,
}

/// Default output-node spacing for phase runs.
pub const PHASE_NODE_SPACING: f64 = 0.1;

pub(crate) fn even_grid(t0: f64, t1: f64, spacing: f64) -> Vec<f64> {
    let n = ((t1 - t0).abs() / spacing).ceil().max(2.0) as usize;
    uniform_grid(t0, t1, n + n % 2)
}

/// Integrates from the second-order eigenvector and compares the tracked
/// phase with `phi0 + phi2`.
pub fn run_phase_budget(profile: &FieldProfile, t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<PhaseBudget> {
    let (t0, t1) = t_span;
    profile.check_span(t0, t1)?;
    check_t2(profile, t_span)?;
    let mut cfg = cfg.clone();
    if cfg.dense_output_grid.is_none() {
        cfg.dense_output_grid = Some(even_grid(t0, t1, PHASE_NODE_SPACING));
    }
    let psi0 = tracked_eigenvector(profile, t0)?;
    let (traj, phase) = integrate_with_phase(profile, &psi0, t_span, &cfg, PhaseReference::TrackedEigenvector)?;
    let phases = PhaseDecomposition::new(
        phases::phi0(profile, t_span)?,
        phases::berry_phi1(profile, t_span)?,
        phases::phi2(profile, t_span)?,
        phase.final_phase(),
        phases::phi_dyn_expect(&traj)?,
    );
    Ok(PhaseBudget {
        r_total: phases.phi_total_exact - (phases.phi0 + phases.phi2),
        r_aa: phases.phi_geom_aa - 2.0 * phases.phi2,
        ratio: (phases.phi2 != 0.0).then(|| phases.phi_geom_aa / phases.phi2),
        phases,
        profile: profile.to_config(),
        t_span,
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
    })
}

/// A loop in the generalized parameter plane with a label.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedLoop {
    pub name: String,
    pub path: MLoop,
}

/// One row of the Stokes table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesRow {
    pub loop_id: String,
    pub b_mag: f64,
    pub line_integral: f64,
    pub surface_integral: f64,
    pub abs_diff: f64,
}

/// Loops used by default: the sinusoidal ellipse in both orientations, the
/// unit square and a zero-area out-and-back path.
pub fn standard_loops() -> Result<Vec<NamedLoop>> {
    let profile = FieldProfile::sinusoidal(1.0, 0.3, 0.05);
    let ellipse = MLoop::from_profile(&profile, 0.0, 2.0 * std::f64::consts::PI / 0.05, 2000)?;
    let flat = MLoop::new(
        [(0.0, 0.0), (0.5, 0.1), (1.0, 0.2), (0.5, 0.1), (0.0, 0.0)]
            .iter()
            .map(|&(theta, theta_dot)| phases::MPoint { theta, theta_dot })
            .collect(),
    );
    Ok(vec![
        NamedLoop {
            name: "ellipse".into(),
            path: ellipse.clone(),
        },
        NamedLoop {
            name: "ellipse_reversed".into(),
            path: ellipse.reversed(),
        },
        NamedLoop {
            name: "unit_square".into(),
            path: MLoop::rectangle((0.0, 1.0), (0.0, 1.0)),
        },
        NamedLoop {
            name: "degenerate".into(),
            path: flat,
        },
    ])
}

/// Line and surface integrals of every loop at every field strength.
pub fn run_stokes_check(loops: &[NamedLoop], b_list: &[f64]) -> Result<Vec<StokesRow>> {
    let mut rows = Vec::with_capacity(loops.len() * b_list.len());
    for lp in loops {
        for &b in b_list {
            let line = phases::generalized_line_integral(&lp.path, b)?;
            let surface = phases::stokes_surface_integral(&lp.path, b)?;
            rows.push(StokesRow {
                loop_id: format!("{}@B={}", lp.name, b),
                b_mag: b,
                line_integral: line,
                surface_integral: surface,
                abs_diff: (line - surface).abs(),
            });
        }
    }
    Ok(rows)
}

/// Timescales of the second-order phase for uniform rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleReport {
    pub b_mag: f64,
    pub omega: f64,
    /// `B/ω²`, where the second-order phase reaches a quarter radian;
    /// `None` when the field does not rotate.
    pub t1: Option<f64>,
    pub phi2_at_t1: Option<f64>,
    /// `B³/ω⁴`, where the neglected fourth-order terms matter.
    pub t2: Option<f64>,
    /// Exact tracked phase minus `phi0` at `t1`, if computed.
    pub numeric_deviation: Option<f64>,
}

pub fn run_timescale_demo(b_mag: f64, omega: f64, numeric: Option<&IntegratorConfig>) -> Result<TimescaleReport> {
    if !(b_mag > 0.0) {
        return Err(Error::InvalidArgument("field magnitude must be positive".into()));
    }
    if omega == 0.0 {
        return Ok(TimescaleReport {
            b_mag,
            omega,
            t1: None,
            phi2_at_t1: None,
            t2: None,
            numeric_deviation: None,
        });
    }
    let w2 = omega * omega;
    let t1 = b_mag / w2;
    let mut report = TimescaleReport {
        b_mag,
        omega,
        t1: Some(t1),
        phi2_at_t1: Some(phases::phi2_uniform_rotation(b_mag, omega, t1)),
        t2: Some(b_mag.powi(3) / (w2 * w2)),
        numeric_deviation: None,
    };
    if let Some(cfg) = numeric {
        let profile = FieldProfile::uniform_rotation(b_mag, omega);
        let budget = run_phase_budget(&profile, (0.0, t1), cfg)?;
        report.numeric_deviation = Some(budget.phases.phi_total_exact - budget.phases.phi0);
    }
    Ok(report)
}
