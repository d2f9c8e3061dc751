//! Dispatches a validated configuration to the library.

use serde::Serialize;

use spinphase::adiabatic::{quasi_stationary, tracked_eigenvector};
use spinphase::dynamics::{
    integrate_with_phase, spinor_to_bloch, uniform_grid, IntegratorConfig, PhaseReference, Spinor, Trajectory,
};
use spinphase::harness::{
    run_convergence, run_phase_budget, run_stokes_check, run_timescale_demo, standard_loops, ConvergenceReport,
    NamedLoop, PhaseBudget, StokesRow, TimescaleReport,
};
use spinphase::phases::{self, MLoop};
use spinphase::profile::{FieldProfile, ProfileConfig};

use crate::config::{Command, RunConfig, DEFAULT_LOOP_NODES, DEFAULT_NODE_SPACING};
use crate::CliError;

/// Column order of the simulate table.
pub const TRAJ_HEADER: &str = "t,Bx,By,Bz,Sx,Sy,Sz,re_up,im_up,re_dn,im_dn,phase_total,phi0,phi2";

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSummary {
    pub profile: ProfileConfig,
    pub t_span: (f64, f64),
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub nodes: usize,
    pub phase_reference: PhaseReference,
    pub phase_total: f64,
    pub phi0: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Absent when the output grid is too coarse to resolve it.
    pub phi_dyn_expect: Option<f64>,
    /// Largest `| |ψ|² − 1 |` over the output nodes.
    pub norm_error: f64,
    /// `[re_up, im_up, re_dn, im_dn]`
    pub final_state: [f64; 4],
    pub final_bloch: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// One row per output node, laid out as [`TRAJ_HEADER`].
    pub rows: Vec<[f64; 14]>,
    pub summary: SimulateSummary,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Simulate(Simulation),
    Phases(PhaseBudget),
    Convergence(ConvergenceReport),
    Stokes(Vec<StokesRow>),
    Timescale(TimescaleReport),
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    Ok(match cfg.command {
        Command::Simulate => Outcome::Simulate(simulate(cfg)?),
        Command::Phases => Outcome::Phases(run_phase_budget(&cfg.profile()?, cfg.t_span()?, &cfg.integrator)?),
        Command::Convergence => Outcome::Convergence(run_convergence(
            &cfg.profile()?,
            &cfg.eps(),
            cfg.horizon(),
            &cfg.integrator,
        )?),
        Command::Stokes => Outcome::Stokes(stokes(cfg)?),
        Command::Timescale => {
            let (b, omega) = cfg.rotation()?;
            let numeric = cfg.params.numeric.then_some(&cfg.integrator);
            Outcome::Timescale(run_timescale_demo(b, omega, numeric)?)
        }
    })
}

/// Initial state and the phase reference that suits it. In-plane profiles
/// without an explicit state start on the tracked eigenvector; otherwise the
/// phase is measured against the initial state.
fn initial_state(cfg: &RunConfig, profile: &FieldProfile, t0: f64) -> Result<(Spinor, PhaseReference), CliError> {
    if let Some([theta, phi]) = cfg.params.initial {
        return Ok((Spinor::coherent(theta, phi), PhaseReference::InitialState));
    }
    if profile.is_in_plane() {
        return Ok((tracked_eigenvector(profile, t0)?, PhaseReference::TrackedEigenvector));
    }
    let (theta, phi) = quasi_stationary(profile, t0)?.seed().angles();
    Ok((Spinor::coherent(theta, phi), PhaseReference::InitialState))
}

fn simulate(cfg: &RunConfig) -> Result<Simulation, CliError> {
    let profile = cfg.profile()?;
    let (t0, t1) = cfg.t_span()?;
    let mut icfg: IntegratorConfig = cfg.integrator.clone();
    if icfg.dense_output_grid.is_none() {
        let n = cfg
            .params
            .samples
            .unwrap_or_else(|| ((t1 - t0).abs() / DEFAULT_NODE_SPACING).ceil().max(2.0) as usize);
        icfg.dense_output_grid = Some(uniform_grid(t0, t1, n));
    }
    let (psi0, reference) = initial_state(cfg, &profile, t0)?;
    let (traj, phase) = integrate_with_phase(&profile, &psi0, (t0, t1), &icfg, reference)?;
    let (phi0s, phi2s) = phases::phase_series(&profile, &traj.times)?;

    let mut rows = Vec::with_capacity(traj.len());
    let mut norm_error: f64 = 0.0;
    for (k, (&t, psi)) in traj.times.iter().zip(&traj.states).enumerate() {
        let b = profile.field(t)?;
        let s = spinor_to_bloch(psi);
        norm_error = norm_error.max((psi.norm_sq() - 1.0).abs());
        rows.push([
            t,
            b.x,
            b.y,
            b.z,
            s.x(),
            s.y(),
            s.z(),
            psi.up.re,
            psi.up.im,
            psi.down.re,
            psi.down.im,
            phase.phases[k],
            phi0s[k],
            phi2s[k],
        ]);
    }
    let summary = summarize(cfg, &profile, &traj, phase.final_phase(), reference, norm_error)?;
    Ok(Simulation { rows, summary })
}

fn summarize(
    cfg: &RunConfig,
    profile: &FieldProfile,
    traj: &Trajectory<Spinor>,
    phase_total: f64,
    phase_reference: PhaseReference,
    norm_error: f64,
) -> Result<SimulateSummary, CliError> {
    let span = (traj.times[0], traj.last().0);
    let psi = traj.last().1;
    let s = spinor_to_bloch(&psi);
    let phi_dyn_expect = phases::phi_dyn_expect(traj).ok();
    Ok(SimulateSummary {
        profile: profile.to_config(),
        t_span: span,
        rel_tol: cfg.integrator.rel_tol,
        abs_tol: cfg.integrator.abs_tol,
        nodes: traj.len(),
        phase_reference,
        phase_total,
        phi0: phases::phi0(profile, span)?,
        phi1: phases::berry_phi1(profile, span)?,
        phi2: phases::phi2(profile, span)?,
        phi_dyn_expect,
        norm_error,
        final_state: [psi.up.re, psi.up.im, psi.down.re, psi.down.im],
        final_bloch: [s.x(), s.y(), s.z()],
    })
}

fn stokes(cfg: &RunConfig) -> Result<Vec<StokesRow>, CliError> {
    let mut loops = standard_loops()?;
    if let Some(profile) = cfg.build_profile()? {
        let (t0, t1) = cfg.t_span()?;
        let n = cfg.params.samples.unwrap_or(DEFAULT_LOOP_NODES);
        loops.push(NamedLoop {
            name: "profile".into(),
            path: MLoop::from_profile(&profile, t0, t1, n)?,
        });
    }
    Ok(run_stokes_check(&loops, &cfg.b_list())?)
}
