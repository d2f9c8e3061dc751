//! Phase bookkeeping: dynamical and second-order phases of the adiabatic
//! solution, the exact geometric phase on the spin sphere, the Berry phase
//! of the field path, and the second-order phase as a holonomy in the
//! `(θ, θ̇)` plane.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::dynamics::{energy_expectation, BlochVector, Spinor, Trajectory};
use crate::error::{Error, Result};
use crate::profile::{FieldProfile, DEFAULT_B_MIN};
use crate::quad;

fn quad_tol(t0: f64, t1: f64) -> f64 {
    1e-12 * (t1 - t0).abs().max(1.0)
}

fn profile_integral<F>(profile: &FieldProfile, (t0, t1): (f64, f64), mut g: F) -> Result<f64>
where
    F: FnMut(&crate::profile::FieldSample) -> f64,
{
    profile.check_span(t0, t1)?;
    quad::integrate(|t| profile.sample(t).map(|s| g(&s)), t0, t1, quad_tol(t0, t1))
}

/// Dynamical phase `−½ ∫ B dt`.
pub fn phi0(profile: &FieldProfile, t_span: (f64, f64)) -> Result<f64> {
    profile_integral(profile, t_span, |s| -0.5 * s.b_mag)
}

/// Second-order phase `−¼ ∫ θ̇²/B dt`.
pub fn phi2(profile: &FieldProfile, t_span: (f64, f64)) -> Result<f64> {
    profile_integral(profile, t_span, |s| -0.25 * s.theta_dot * s.theta_dot / s.b_mag)
}

/// Berry phase of the field path, `½ ∫ (1 − cos θ) dφ`.
pub fn berry_phi1(profile: &FieldProfile, t_span: (f64, f64)) -> Result<f64> {
    if profile.is_in_plane() {
        profile.check_span(t_span.0, t_span.1)?;
        return Ok(0.0);
    }
    profile_integral(profile, t_span, |s| 0.5 * (1.0 - s.theta.cos()) * s.phi_dot)
}

/// Cumulative `phi0` and `phi2` at each of `times`, measured from `times[0]`.
pub fn phase_series(profile: &FieldProfile, times: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut p0 = Vec::with_capacity(times.len());
    let mut p2 = Vec::with_capacity(times.len());
    let (mut a0, mut a2) = (0.0, 0.0);
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let span = (times[i - 1], t);
            a0 += phi0(profile, span)?;
            a2 += phi2(profile, span)?;
        }
        p0.push(a0);
        p2.push(a2);
    }
    Ok((p0, p2))
}

/// Pieces of the second-order phase obtained by expanding the exact
/// geometric phase around the field path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Phi2Decomposition {
    /// `−½ ∫ γ sin θ dφ`
    pub term_accel: f64,
    /// `−½ ∫ δ dθ`
    pub term_byparts: f64,
    /// `½ [(1 − cos θ) δ / sin θ]` between the endpoints.
    pub boundary: f64,
}

pub fn phi2_decomposition(profile: &FieldProfile, t_span: (f64, f64)) -> Result<Phi2Decomposition> {
    let term_accel = profile_integral(profile, t_span, |s| {
        let gamma = (s.theta_ddot - s.theta_dot * s.b_dot / s.b_mag) / (s.b_mag * s.b_mag);
        -0.5 * gamma * s.theta.sin() * s.phi_dot
    })?;
    let term_byparts = profile_integral(profile, t_span, |s| -0.5 * s.theta_dot * s.theta_dot / s.b_mag)?;
    // (1 − cos θ)/sin θ = tan(θ/2) stays finite except near the south pole.
    let edge = |t: f64| -> Result<f64> {
        let s = profile.sample(t)?;
        let c = (0.5 * s.theta).cos();
        if c.abs() < 1e-3 {
            return Err(Error::PoleSingularity { sin: s.theta.sin() });
        }
        Ok((0.5 * s.theta).tan() * s.theta_dot / s.b_mag)
    };
    let boundary = 0.5 * (edge(t_span.1)? - edge(t_span.0)?);
    Ok(Phi2Decomposition {
        term_accel,
        term_byparts,
        boundary,
    })
}

/// Expectation-value dynamical phase `−∫ ⟨ψ|H|ψ⟩ dt` on the trajectory grid.
pub fn phi_dyn_expect(traj: &Trajectory<Spinor>) -> Result<f64> {
    let profile = &traj.meta.profile;
    let mut energy = Vec::with_capacity(traj.len());
    let mut b_prev: Option<f64> = None;
    for (i, (&t, psi)) in traj.times.iter().zip(&traj.states).enumerate() {
        let b = profile.field(t)?;
        let bm = b.norm();
        if let Some(bp) = b_prev {
            let dt = (t - traj.times[i - 1]).abs();
            if 0.5 * bm.max(bp) * dt >= FRAC_PI_2 {
                return Err(Error::GridTooCoarse(format!(
                    "phase advance per node exceeds pi/2 near t = {t}"
                )));
            }
        }
        b_prev = Some(bm);
        energy.push(energy_expectation(psi, &b));
    }
    Ok(-quad::stieltjes(&traj.times, &energy))
}

/// Exact geometric phase `−½ ∫ (1 − cos θ̃) dφ̃` along a spin path, with
/// `(θ̃, φ̃)` the spherical angles of the spin and `φ̃` unwrapped.
pub fn aa_geometric_phase_coordinate(traj: &Trajectory<BlochVector>) -> Result<f64> {
    let mut phi = Vec::with_capacity(traj.len());
    let mut g = Vec::with_capacity(traj.len());
    for (k, s) in traj.states.iter().enumerate() {
        let v = s.0 / s.norm();
        let sin = v.x.hypot(v.y);
        if sin < 1e-3 {
            return Err(Error::PoleSingularity { sin });
        }
        let raw = v.y.atan2(v.x);
        let unwrapped = match phi.last() {
            None => raw,
            Some(&prev) => {
                let step = crate::dynamics::wrap_angle(raw - prev);
                if step.abs() >= FRAC_PI_2 {
                    return Err(Error::GridTooCoarse(format!(
                        "azimuth step {step:.3} between nodes {} and {k}",
                        k - 1
                    )));
                }
                prev + step
            }
        };
        phi.push(unwrapped);
        g.push(1.0 - v.z);
    }
    Ok(-0.5 * quad::stieltjes(&phi, &g))
}

/// Signed area of the spherical triangle `(c, a, b)`.
fn triangle_area(c: &nalgebra::Vector3<f64>, a: &nalgebra::Vector3<f64>, b: &nalgebra::Vector3<f64>) -> f64 {
    2.0 * c.dot(&a.cross(b)).atan2(1.0 + c.dot(a) + a.dot(b) + b.dot(c))
}

fn fan_area(points: &[nalgebra::Vector3<f64>], c: &nalgebra::Vector3<f64>) -> f64 {
    let n = points.len();
    (0..n).map(|i| triangle_area(c, &points[i], &points[(i + 1) % n])).sum()
}

/// The same phase as [`aa_geometric_phase_coordinate`], computed as minus
/// half the solid angle enclosed by the path (closed by a geodesic). Free of
/// coordinate singularities; agrees with the coordinate route modulo 2π.
pub fn aa_geometric_phase_solid_angle(traj: &Trajectory<BlochVector>) -> Result<f64> {
    let pts: Vec<_> = traj.states.iter().map(|s| s.0 / s.norm()).collect();
    for w in pts.windows(2) {
        let arc = w[0].cross(&w[1]).norm().atan2(w[0].dot(&w[1]));
        if arc >= FRAC_PI_4 {
            return Err(Error::ArcTooLong { arc });
        }
    }
    if pts.len() < 3 {
        return Ok(0.0);
    }
    let n = pts.len();
    let mut axis = nalgebra::Vector3::zeros();
    for i in 0..n {
        axis += pts[i].cross(&pts[(i + 1) % n]);
    }
    let centre = if axis.norm() > 1e-12 { axis.normalize() } else { pts[0] };
    let fine = fan_area(&pts, &centre);
    let coarse_pts: Vec<_> = pts.iter().step_by(2).copied().collect();
    let omega = if coarse_pts.len() >= 3 {
        let coarse = fan_area(&coarse_pts, &centre);
        fine + (fine - coarse) / 3.0
    } else {
        fine
    };
    Ok(-0.5 * omega)
}

/// Sum that is independent of term order and exactly odd under negating
/// every term, so reversing a loop flips the sign bit-for-bit.
fn antisymmetric_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut pos, mut neg): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for x in terms {
        if x >= 0.0 {
            pos.push(x);
        } else {
            neg.push(-x);
        }
    }
    let total = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v.iter().sum::<f64>()
    };
    total(pos) - total(neg)
}

/// Point in the generalized parameter plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MPoint {
    pub theta: f64,
    pub theta_dot: f64,
}

/// Closed polygon in the `(θ, θ̇)` plane; the last point repeats the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLoop {
    pub points: Vec<MPoint>,
}

impl MLoop {
    pub fn new(points: Vec<MPoint>) -> Self {
        MLoop { points }
    }

    /// Samples `(θ, θ̇)` of a profile at `n + 1` evenly spaced times.
    pub fn from_profile(profile: &FieldProfile, t0: f64, t1: f64, n: usize) -> Result<Self> {
        crate::dynamics::uniform_grid(t0, t1, n)
            .into_iter()
            .map(|t| {
                profile.sample(t).map(|s| MPoint {
                    theta: s.theta,
                    theta_dot: s.theta_dot,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(MLoop::new)
    }

    /// Axis-aligned rectangle traversed counterclockwise.
    pub fn rectangle(theta: (f64, f64), theta_dot: (f64, f64)) -> Self {
        let p = |theta, theta_dot| MPoint { theta, theta_dot };
        MLoop::new(vec![
            p(theta.0, theta_dot.0),
            p(theta.1, theta_dot.0),
            p(theta.1, theta_dot.1),
            p(theta.0, theta_dot.1),
            p(theta.0, theta_dot.0),
        ])
    }

    pub fn reversed(&self) -> Self {
        MLoop::new(self.points.iter().rev().copied().collect())
    }

    /// Checks closure with `θ̇` measured in units of `b_mag`.
    pub fn check_closed(&self, b_mag: f64) -> Result<()> {
        let (Some(a), Some(z)) = (self.points.first(), self.points.last()) else {
            return Ok(());
        };
        let gap = (a.theta - z.theta).abs().max((a.theta_dot - z.theta_dot).abs() / b_mag);
        if gap > 1e-9 {
            return Err(Error::LoopNotClosed { gap });
        }
        Ok(())
    }

    /// Oriented area, counterclockwise positive, in `θ̇` units of `b_mag`.
    pub fn signed_area(&self, b_mag: f64) -> f64 {
        let terms = self
            .points
            .windows(2)
            .map(|w| w[0].theta * w[1].theta_dot - w[1].theta * w[0].theta_dot);
        0.5 * antisymmetric_sum(terms) / b_mag
    }

    /// First pair of non-adjacent edges that cross, if any.
    pub fn find_self_intersection(&self) -> Option<(usize, usize)> {
        let p = &self.points;
        let m = p.len().saturating_sub(1);
        let orient = |a: &MPoint, b: &MPoint, c: &MPoint| {
            (b.theta - a.theta) * (c.theta_dot - a.theta_dot) - (b.theta_dot - a.theta_dot) * (c.theta - a.theta)
        };
        for i in 0..m {
            for j in i + 2..m {
                if i == 0 && j == m - 1 {
                    continue;
                }
                let (a, b, c, d) = (&p[i], &p[i + 1], &p[j], &p[j + 1]);
                let (o1, o2) = (orient(a, b, c), orient(a, b, d));
                let (o3, o4) = (orient(c, d, a), orient(c, d, b));
                if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
                    return Some((i, j));
                }
            }
        }
        None
    }
}

/// `−∮ A·dM` with `A = (θ̇/4B, 0)`, by the trapezoid rule on the polygon.
pub fn generalized_line_integral(lp: &MLoop, b_mag: f64) -> Result<f64> {
    lp.check_closed(b_mag)?;
    let circulation = antisymmetric_sum(
        lp.points
            .windows(2)
            .map(|w| 0.5 * (w[0].theta_dot + w[1].theta_dot) * (w[1].theta - w[0].theta)),
    );
    Ok(-circulation / (4.0 * b_mag))
}

/// Curvature `F = −1/(4B)` of the generalized connection.
pub fn generalized_field(b_mag: f64) -> Result<f64> {
    if !(b_mag >= DEFAULT_B_MIN) {
        return Err(Error::DegenerateField {
            t: f64::NAN,
            b: b_mag,
            b_min: DEFAULT_B_MIN,
        });
    }
    Ok(-0.25 / b_mag)
}

/// `−∫ F dM∧dM = s/(4B)`, with `s` the counterclockwise-positive shoelace
/// area of the loop in the `(θ, θ̇)` plane.
pub fn stokes_surface_integral(lp: &MLoop, b_mag: f64) -> Result<f64> {
    lp.check_closed(b_mag)?;
    if let Some((i, j)) = lp.find_self_intersection() {
        return Err(Error::SelfIntersection(i, j));
    }
    let area = lp.signed_area(1.0);
    Ok(-generalized_field(b_mag)? * area)
}

/// All phase objects for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseDecomposition {
    pub phi0: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub phi_total_exact: f64,
    pub phi_dyn_expect: f64,
    pub phi_geom_aa: f64,
}

impl PhaseDecomposition {
    /// Fills in the geometric part as `total − dynamical`.
    pub fn new(phi0: f64, phi1: f64, phi2: f64, phi_total_exact: f64, phi_dyn_expect: f64) -> Self {
        PhaseDecomposition {
            phi0,
            phi1,
            phi2,
            phi_total_exact,
            phi_dyn_expect,
            phi_geom_aa: phi_total_exact - phi_dyn_expect,
        }
    }
}

/// Closed-form `phi2` for uniform rotation at angular speed `omega`.
pub fn phi2_uniform_rotation(b_mag: f64, omega: f64, t: f64) -> f64 {
    -omega * omega * t / (4.0 * b_mag)
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap(x: f64) -> f64 {
    crate::dynamics::wrap_angle(x)
}
