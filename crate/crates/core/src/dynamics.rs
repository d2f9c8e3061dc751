//! Exact reference dynamics: the spinor Schrödinger equation
//! `iψ̇ = ½ B·σ ψ` and the Bloch equation `Ṡ = B × S`.
//!
//! Both are integrated without any adiabatic assumption and serve as the
//! ground truth for everything in [`crate::adiabatic`] and [`crate::phases`].

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::adiabatic;
use crate::error::{Error, Result};
use crate::ode::{self, Tolerances};
use crate::profile::FieldProfile;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Two-component spin-1/2 state `(ψ↑, ψ↓)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spinor {
    pub up: Complex64,
    pub down: Complex64,
}

impl Spinor {
    pub const fn new(up: Complex64, down: Complex64) -> Self {
        Spinor { up, down }
    }

    pub fn spin_up() -> Self {
        Spinor::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    }

    pub fn norm_sq(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sq().sqrt();
        Spinor::new(self.up / n, self.down / n)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Spinor) -> Complex64 {
        self.up.conj() * other.up + self.down.conj() * other.down
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Spinor::new(self.up * c, self.down * c)
    }

    /// Spin-coherent state pointing along `(θ, φ)`, in the gauge regular at
    /// the north pole.
    pub fn coherent(theta: f64, phi: f64) -> Self {
        let (s, c) = (0.5 * theta).sin_cos();
        Spinor::new(Complex64::new(c, 0.0), Complex64::from_polar(s, phi))
    }

    fn pack(&self) -> [f64; 4] {
        [self.up.re, self.up.im, self.down.re, self.down.im]
    }

    fn unpack(y: &[f64; 4]) -> Self {
        Spinor::new(Complex64::new(y[0], y[1]), Complex64::new(y[2], y[3]))
    }
}

/// Mean spin vector on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector(pub Vector3<f64>);

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        BlochVector(Vector3::new(x, y, z))
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Polar angle and azimuth.
    pub fn angles(&self) -> (f64, f64) {
        let v = self.0;
        (v.z.clamp(-1.0, 1.0).acos(), v.y.atan2(v.x))
    }
}

/// `S = ⟨ψ|σ|ψ⟩`, evaluated directly from the Pauli matrices:
/// `Sx = 2 Re(ψ↑* ψ↓)`, `Sy = 2 Im(ψ↑* ψ↓)`, `Sz = |ψ↑|² − |ψ↓|²`.
pub fn spinor_to_bloch(psi: &Spinor) -> BlochVector {
    let c = psi.up.conj() * psi.down;
    BlochVector::new(2.0 * c.re, 2.0 * c.im, psi.up.norm_sqr() - psi.down.norm_sqr())
}

/// `⟨ψ|H|ψ⟩` with `H = ½ B·σ`.
pub fn energy_expectation(psi: &Spinor, b: &Vector3<f64>) -> f64 {
    0.5 * b.dot(&spinor_to_bloch(psi).0) / psi.norm_sq()
}

/// `-iHψ` for `H = ½ B·σ`.
fn schrodinger_rhs(b: &Vector3<f64>, psi: &Spinor) -> Spinor {
    let bm = Complex64::new(b.x, -b.y);
    let bp = Complex64::new(b.x, b.y);
    let h_up = 0.5 * (b.z * psi.up + bm * psi.down);
    let h_dn = 0.5 * (bp * psi.up - b.z * psi.down);
    Spinor::new(-I * h_up, -I * h_dn)
}

/// Exact propagator `exp(-i h ½ B·σ)` for a constant field, applied to ψ.
fn precess_spinor(b: &Vector3<f64>, h: f64, psi: &Spinor) -> Spinor {
    let bm = b.norm();
    if bm == 0.0 {
        return *psi;
    }
    let n = b / bm;
    let (s, c) = (0.5 * bm * h).sin_cos();
    // (n·σ)ψ
    let up = n.z * psi.up + Complex64::new(n.x, -n.y) * psi.down;
    let dn = Complex64::new(n.x, n.y) * psi.up - n.z * psi.down;
    Spinor::new(c * psi.up - I * s * up, c * psi.down - I * s * dn)
}

/// Rotation of S about B by angle |B|h (exact solution of `Ṡ = B × S`).
fn precess_vector(b: &Vector3<f64>, h: f64, s: &Vector3<f64>) -> Vector3<f64> {
    let bm = b.norm();
    if bm == 0.0 {
        return *s;
    }
    let k = b / bm;
    let (sn, cs) = (bm * h).sin_cos();
    s * cs + k.cross(s) * sn + k * k.dot(s) * (1.0 - cs)
}

/// Stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Adaptive Dormand–Prince 5(4).
    Adaptive,
    /// Dormand–Prince 5 at a fixed step (no error control).
    FixedStep { step: f64 },
    /// Norm-preserving exponential midpoint rule at a fixed step.
    ExponentialMidpoint { step: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_output_grid: Option<Vec<f64>>,
    #[serde(default = "default_method")]
    pub method: Method,
}

fn default_method() -> Method {
    Method::Adaptive
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 1.0,
            dense_output_grid: None,
            method: Method::Adaptive,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(rel_tol: f64) -> Self {
        IntegratorConfig {
            rel_tol,
            abs_tol: rel_tol * 1e-2,
            ..Default::default()
        }
    }

    /// Output on `n + 1` evenly spaced nodes covering `[t0, t1]`.
    pub fn with_uniform_grid(mut self, t0: f64, t1: f64, n: usize) -> Self {
        self.dense_output_grid = Some(uniform_grid(t0, t1, n));
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v <= 1e-2) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside (0, 1e-2]")));
            }
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidArgument("max_step must be positive".into()));
        }
        match self.method {
            Method::FixedStep { step } | Method::ExponentialMidpoint { step } if !(step > 0.0) => {
                Err(Error::InvalidArgument("fixed step must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
        }
    }
}

pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n)
        .map(|i| {
            if i == n {
                t1
            } else {
                t0 + (t1 - t0) * i as f64 / n as f64
            }
        })
        .collect()
}

/// Provenance stored alongside a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub method: Method,
    pub profile: FieldProfile,
}

/// Time-stamped states. Times are strictly monotone in the direction of
/// integration (increasing for forward runs).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub times: Vec<f64>,
    pub states: Vec<S>,
    pub meta: TrajectoryMeta,
}

impl<S: Copy> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> (f64, S) {
        (*self.times.last().unwrap(), *self.states.last().unwrap())
    }
}

impl Trajectory<Spinor> {
    pub fn to_bloch(&self) -> Trajectory<BlochVector> {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(spinor_to_bloch).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Formats with 17 significant digits, enough to round-trip an `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Row layout for CSV export.
pub trait CsvState {
    const HEADER: &'static str;
    fn fields(&self) -> Vec<f64>;
}

impl CsvState for Spinor {
    const HEADER: &'static str = "t,re_up,im_up,re_dn,im_dn";
    fn fields(&self) -> Vec<f64> {
        self.pack().to_vec()
    }
}

impl CsvState for BlochVector {
    const HEADER: &'static str = "t,Sx,Sy,Sz";
    fn fields(&self) -> Vec<f64> {
        vec![self.x(), self.y(), self.z()]
    }
}

impl<S: CsvState> Trajectory<S> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", S::HEADER)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![fmt17(*t)];
            row.extend(s.fields().into_iter().map(fmt17));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn output_nodes(cfg: &IntegratorConfig, t0: f64, t1: f64) -> Result<Option<Vec<f64>>> {
    let Some(grid) = &cfg.dense_output_grid else {
        return Ok(None);
    };
    let dir = (t1 - t0).signum();
    let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    if grid.iter().any(|&t| t < lo || t > hi) {
        return Err(Error::InvalidArgument("output grid outside integration span".into()));
    }
    if grid.windows(2).any(|w| !((w[1] - w[0]) * dir > 0.0)) {
        return Err(Error::InvalidArgument("output grid must be strictly monotone".into()));
    }
    Ok(Some(grid.clone()))
}

/// Shared driver: returns output times and packed states.
fn drive<const N: usize>(
    profile: &FieldProfile,
    y0: [f64; N],
    (t0, t1): (f64, f64),
    cfg: &IntegratorConfig,
    rhs: impl Fn(&Vector3<f64>, &[f64; N]) -> [f64; N],
    exact_step: impl Fn(&Vector3<f64>, f64, &[f64; N]) -> [f64; N],
) -> Result<(Vec<f64>, Vec<[f64; N]>)> {
    cfg.validate()?;
    profile.check_span(t0, t1)?;
    let grid = output_nodes(cfg, t0, t1)?;
    let f = |t: f64, y: &[f64; N]| -> Result<[f64; N]> { Ok(rhs(&profile.field(t)?, y)) };

    let mut times = Vec::new();
    let mut states = Vec::new();
    let dir = (t1 - t0).signum();

    let starts_at_t0 = grid.as_ref().is_none_or(|g| g.first() == Some(&t0));
    if starts_at_t0 {
        times.push(t0);
        states.push(y0);
    }

    match cfg.method {
        Method::Adaptive => {
            let grid = grid.unwrap_or_default();
            let use_grid = cfg.dense_output_grid.is_some();
            let mut next = usize::from(starts_at_t0 && use_grid);
            ode::integrate_adaptive(f, t0, y0, t1, &cfg.tolerances(), |step| {
                let t_end = step.t0 + step.h;
                if use_grid {
                    while next < grid.len() && (grid[next] - t_end) * dir <= 0.0 {
                        times.push(grid[next]);
                        states.push(if grid[next] == t_end {
                            step.y1
                        } else {
                            step.interpolate(grid[next])
                        });
                        next += 1;
                    }
                } else {
                    times.push(t_end);
                    states.push(step.y1);
                }
                Ok(())
            })?;
            if use_grid && next < grid.len() {
                // Only t1 itself can remain, reached by the final step.
                times.push(t1);
                states.push(*states.last().unwrap());
            }
        }
        Method::FixedStep { step } | Method::ExponentialMidpoint { step } => {
            let nodes = grid.unwrap_or_else(|| uniform_grid(t0, t1, ode::step_count(t1 - t0, step)));
            let mut t = t0;
            let mut y = y0;
            for &tn in nodes.iter().filter(|&&tn| tn != t0) {
                y = match cfg.method {
                    Method::FixedStep { .. } => ode::integrate_fixed(f, t, y, tn, step)?,
                    _ => {
                        let n = ode::step_count(tn - t, step);
                        let h = (tn - t) / n as f64;
                        for i in 0..n {
                            let tm = t + (i as f64 + 0.5) * h;
                            y = exact_step(&profile.field(tm)?, h, &y);
                        }
                        y
                    }
                };
                t = tn;
                times.push(tn);
                states.push(y);
            }
        }
    }
    if let Some(last) = times.last() {
        if *last != t1 && cfg.dense_output_grid.is_none() {
            // Adaptive stepping lands on t1 up to rounding; pin the label.
            *times.last_mut().unwrap() = t1;
        }
    }
    Ok((times, states))
}

/// Integrates `iψ̇ = ½ B(t)·σ ψ` over `t_span`.
pub fn integrate_schrodinger(
    profile: &FieldProfile,
    psi0: &Spinor,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory<Spinor>> {
    let norm_sq = psi0.norm_sq();
    if (norm_sq - 1.0).abs() > 1e-9 {
        return Err(Error::Normalization { norm_sq });
    }
    let (times, packed) = drive(
        profile,
        psi0.pack(),
        t_span,
        cfg,
        |b, y| schrodinger_rhs(b, &Spinor::unpack(y)).pack(),
        |b, h, y| precess_spinor(b, h, &Spinor::unpack(y)).pack(),
    )?;
    Ok(Trajectory {
        times,
        states: packed.iter().map(Spinor::unpack).collect(),
        meta: meta(profile, cfg),
    })
}

/// Integrates `Ṡ = B(t) × S` over `t_span`.
pub fn integrate_bloch(
    profile: &FieldProfile,
    s0: &BlochVector,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory<BlochVector>> {
    let norm_sq = s0.0.norm_squared();
    if (norm_sq - 1.0).abs() > 1e-9 {
        return Err(Error::Normalization { norm_sq });
    }
    let to = |y: &[f64; 3]| Vector3::new(y[0], y[1], y[2]);
    let from = |v: Vector3<f64>| [v.x, v.y, v.z];
    let (times, packed) = drive(
        profile,
        from(s0.0),
        t_span,
        cfg,
        |b, y| from(b.cross(&to(y))),
        |b, h, y| from(precess_vector(b, h, &to(y))),
    )?;
    Ok(Trajectory {
        times,
        states: packed.iter().map(|y| BlochVector(to(y))).collect(),
        meta: meta(profile, cfg),
    })
}

fn meta(profile: &FieldProfile, cfg: &IntegratorConfig) -> TrajectoryMeta {
    TrajectoryMeta {
        rel_tol: cfg.rel_tol,
        abs_tol: cfg.abs_tol,
        method: cfg.method,
        profile: profile.clone(),
    }
}

/// Largest local defect between consecutive nodes of a spinor trajectory,
/// estimated by re-integrating each interval as two half steps. Reported in
/// units of the trajectory's own tolerance (values ≤ 1 are within tolerance).
pub fn step_doubling_defect(traj: &Trajectory<Spinor>) -> Result<f64> {
    let profile = &traj.meta.profile;
    let tol = Tolerances {
        rel_tol: traj.meta.rel_tol,
        abs_tol: traj.meta.abs_tol,
        max_step: f64::INFINITY,
    };
    let mut f = |t: f64, y: &[f64; 4]| -> Result<[f64; 4]> {
        Ok(schrodinger_rhs(&profile.field(t)?, &Spinor::unpack(y)).pack())
    };
    let mut worst: f64 = 0.0;
    for i in 0..traj.len().saturating_sub(1) {
        let (ta, tb) = (traj.times[i], traj.times[i + 1]);
        let h = 0.5 * (tb - ta);
        let mut y = traj.states[i].pack();
        let mut t = ta;
        for _ in 0..2 {
            let k1 = f(t, &y)?;
            y = ode::dp_step(&mut f, t, &y, &k1, h, &tol)?.0.y1;
            t += h;
        }
        let node = traj.states[i + 1].pack();
        let sum: f64 = (0..4)
            .map(|k| ((y[k] - node[k]) / (tol.abs_tol + tol.rel_tol * node[k].abs())).powi(2))
            .sum();
        worst = worst.max((sum / 4.0).sqrt());
    }
    Ok(worst)
}

/// Which state the total phase is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseReference {
    /// Pancharatnam phase `arg⟨ψ(t₀)|ψ(t)⟩`, wrapped to (−π, π].
    InitialState,
    /// `arg⟨n(t)|ψ(t)⟩` against the second-order adiabatic eigenvector,
    /// unwrapped and zeroed at t₀.
    TrackedEigenvector,
}

/// Phase as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    pub times: Vec<f64>,
    pub phases: Vec<f64>,
}

impl PhaseSeries {
    pub fn final_phase(&self) -> f64 {
        *self.phases.last().unwrap_or(&0.0)
    }
}

pub(crate) fn wrap_angle(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Extracts the total phase of a spinor trajectory.
///
/// The tracked reference requires an in-plane profile, and the state must
/// keep an overlap above 0.5 with the adiabatic eigenvector. Adjacent nodes
/// whose phase differs by more than π/2 give [`Error::BranchJump`].
pub fn extract_total_phase(traj: &Trajectory<Spinor>, reference: PhaseReference) -> Result<PhaseSeries> {
    let Some(&psi0) = traj.states.first() else {
        return Ok(PhaseSeries {
            times: vec![],
            phases: vec![],
        });
    };
    let phases = match reference {
        PhaseReference::InitialState => traj.states.iter().map(|psi| psi0.inner(psi).arg()).collect(),
        PhaseReference::TrackedEigenvector => {
            let profile = &traj.meta.profile;
            let mut out = Vec::with_capacity(traj.len());
            let mut prev = 0.0;
            let mut offset = 0.0;
            for (k, (&t, psi)) in traj.times.iter().zip(&traj.states).enumerate() {
                let n = adiabatic::tracked_eigenvector(profile, t)?;
                let overlap = n.inner(psi);
                let mag = overlap.norm() / psi.norm_sq().sqrt();
                if mag <= 0.5 {
                    return Err(Error::OverlapLoss { t, overlap: mag });
                }
                let raw = overlap.arg();
                if k == 0 {
                    offset = raw;
                    prev = 0.0;
                    out.push(0.0);
                    continue;
                }
                let step = wrap_angle(raw - offset - prev);
                if step.abs() > FRAC_PI_2 {
                    return Err(Error::BranchJump {
                        t0: traj.times[k - 1],
                        t1: t,
                        jump: step,
                    });
                }
                prev += step;
                out.push(prev);
            }
            out
        }
    };
    Ok(PhaseSeries {
        times: traj.times.clone(),
        phases,
    })
}

/// Integrates and extracts the phase, refining the output grid (up to 16x)
/// whenever adjacent nodes are too far apart to unwrap.
pub fn integrate_with_phase(
    profile: &FieldProfile,
    psi0: &Spinor,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
    reference: PhaseReference,
) -> Result<(Trajectory<Spinor>, PhaseSeries)> {
    let mut cfg = cfg.clone();
    let mut factor = 1;
    loop {
        let traj = integrate_schrodinger(profile, psi0, t_span, &cfg)?;
        match extract_total_phase(&traj, reference) {
            Err(Error::BranchJump { .. }) if factor < 16 && cfg.dense_output_grid.is_some() => {
                let grid = cfg.dense_output_grid.take().unwrap();
                cfg.dense_output_grid = Some(refine(&grid));
                factor *= 2;
            }
            other => return other.map(|phase| (traj, phase)),
        }
    }
}

fn refine(grid: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * grid.len());
    for w in grid.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(grid.last());
    out
}
