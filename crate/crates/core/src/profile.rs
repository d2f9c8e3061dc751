//! Time-dependent magnetic field trajectories `B(εt)`.
//!
//! A profile is described in spherical form (magnitude, polar angle θ,
//! azimuth φ) as functions of the slow time `τ = εt`. Sampling at physical
//! time `t` returns the field together with its exact first and second time
//! derivatives, so that every downstream quantity built from θ̇, θ̈ and Ḃ is
//! free of finite-difference noise. Only tabulated profiles fall back to
//! central differences, with a step declared in the profile itself.
//!
//! Angles are never wrapped: θ may run past π or below zero, which keeps
//! contour integrals over θ well defined.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_B_MIN: f64 = 1e-6;
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Field value and derivatives at one instant. Field is in frequency units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub t: f64,
    pub b_vec: Vector3<f64>,
    pub b_mag: f64,
    pub theta: f64,
    pub phi: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
    pub phi_dot: f64,
    pub phi_ddot: f64,
    pub b_dot: f64,
}

impl FieldSample {
    /// Unit vector along the field.
    pub fn direction(&self) -> Vector3<f64> {
        spherical_unit(self.theta, self.phi)
    }

    /// Polar basis vector `e_θ`.
    pub fn e_theta(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(ct * cp, ct * sp, -st)
    }

    /// Azimuthal basis vector `e_φ`.
    pub fn e_phi(&self) -> Vector3<f64> {
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(-sp, cp, 0.0)
    }

    /// Time derivative of the field direction.
    pub fn direction_rate(&self) -> Vector3<f64> {
        self.theta_dot * self.e_theta() + self.phi_dot * self.theta.sin() * self.e_phi()
    }

    /// Second time derivative of the field direction.
    pub fn direction_accel(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (td, pd) = (self.theta_dot, self.phi_dot);
        let radial = -td * td - pd * pd * st * st;
        let polar = self.theta_ddot - pd * pd * st * ct;
        let azimuthal = self.phi_ddot * st + 2.0 * td * pd * ct;
        radial * self.direction() + polar * self.e_theta() + azimuthal * self.e_phi()
    }

    /// Angular speed of the field direction on the unit sphere.
    pub fn angular_speed(&self) -> f64 {
        self.direction_rate().norm()
    }

    /// True when the field stays in the (x, z) plane at this instant.
    pub fn is_in_plane(&self) -> bool {
        self.phi.abs() <= 1e-14 && self.phi_dot == 0.0
    }
}

pub(crate) fn spherical_unit(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(st * cp, st * sp, ct)
}

/// Value with first and second derivative with respect to slow time.
#[derive(Debug, Clone, Copy, Default)]
struct Jet {
    v: f64,
    d1: f64,
    d2: f64,
}

impl Jet {
    fn constant(v: f64) -> Self {
        Jet { v, d1: 0.0, d2: 0.0 }
    }
}

/// Shape of a field trajectory, parameterized in slow time `τ = εt`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// Static field of magnitude `b0` along (theta, phi).
    Constant { b0: f64, theta: f64, phi: f64 },
    /// In-plane rotation `θ = θ₀ + ωτ` at fixed magnitude.
    UniformRotation { b0: f64, omega: f64, theta0: f64 },
    /// In-plane cubic `θ(τ)` and quadratic `B(τ)`.
    PolynomialAngle { theta: [f64; 4], b: [f64; 3] },
    /// In-plane `θ = θ_c + θ₀ sin Ωτ`, magnitude `B₀ + B_amp sin(B_Ω τ)`.
    SinusoidalAngle {
        b0: f64,
        theta0: f64,
        omega: f64,
        theta_c: f64,
        b_amp: f64,
        b_omega: f64,
    },
    /// Field on a cone of fixed polar angle, azimuth `φ₀ + Ωτ`.
    Cone3d { b0: f64, theta: f64, omega: f64, phi0: f64 },
    /// Natural cubic spline through `(τ, B, θ, φ)` rows.
    Tabulated(Table),
}

impl ProfileKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProfileKind::Constant { .. } => "constant",
            ProfileKind::UniformRotation { .. } => "uniform_rotation",
            ProfileKind::PolynomialAngle { .. } => "polynomial_angle",
            ProfileKind::SinusoidalAngle { .. } => "sinusoidal_angle",
            ProfileKind::Cone3d { .. } => "cone_3d",
            ProfileKind::Tabulated(_) => "user_tabulated",
        }
    }

    fn theta_jet(&self, tau: f64) -> Jet {
        match *self {
            ProfileKind::Constant { theta, .. } => Jet::constant(theta),
            ProfileKind::UniformRotation { omega, theta0, .. } => Jet {
                v: theta0 + omega * tau,
                d1: omega,
                d2: 0.0,
            },
            ProfileKind::PolynomialAngle { theta: a, .. } => Jet {
                v: a[0] + tau * (a[1] + tau * (a[2] + tau * a[3])),
                d1: a[1] + tau * (2.0 * a[2] + 3.0 * a[3] * tau),
                d2: 2.0 * a[2] + 6.0 * a[3] * tau,
            },
            ProfileKind::SinusoidalAngle {
                theta0, omega, theta_c, ..
            } => {
                let (s, c) = (omega * tau).sin_cos();
                Jet {
                    v: theta_c + theta0 * s,
                    d1: theta0 * omega * c,
                    d2: -theta0 * omega * omega * s,
                }
            }
            ProfileKind::Cone3d { theta, .. } => Jet::constant(theta),
            ProfileKind::Tabulated(_) => unreachable!("tabulated profiles use finite differences"),
        }
    }

    fn phi_jet(&self, tau: f64) -> Jet {
        match *self {
            ProfileKind::Constant { phi, .. } => Jet::constant(phi),
            ProfileKind::Cone3d { omega, phi0, .. } => Jet {
                v: phi0 + omega * tau,
                d1: omega,
                d2: 0.0,
            },
            ProfileKind::Tabulated(_) => unreachable!("tabulated profiles use finite differences"),
            _ => Jet::default(),
        }
    }

    fn b_jet(&self, tau: f64) -> Jet {
        match *self {
            ProfileKind::Constant { b0, .. }
            | ProfileKind::UniformRotation { b0, .. }
            | ProfileKind::Cone3d { b0, .. } => Jet::constant(b0),
            ProfileKind::PolynomialAngle { b, .. } => Jet {
                v: b[0] + tau * (b[1] + tau * b[2]),
                d1: b[1] + 2.0 * b[2] * tau,
                d2: 2.0 * b[2],
            },
            ProfileKind::SinusoidalAngle { b0, b_amp, b_omega, .. } => {
                let (s, c) = (b_omega * tau).sin_cos();
                Jet {
                    v: b0 + b_amp * s,
                    d1: b_amp * b_omega * c,
                    d2: -b_amp * b_omega * b_omega * s,
                }
            }
            ProfileKind::Tabulated(_) => unreachable!("tabulated profiles use finite differences"),
        }
    }

    /// Whether the azimuth is identically zero for all times.
    pub fn is_in_plane(&self) -> bool {
        match self {
            ProfileKind::Constant { phi, .. } => *phi == 0.0,
            ProfileKind::Cone3d { .. } => false,
            ProfileKind::Tabulated(t) => t.phi.iter().all(|&p| p == 0.0),
            _ => true,
        }
    }
}

/// Tabulated field, interpolated with natural cubic splines per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    tau: Vec<f64>,
    b: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    b_spline: Spline,
    theta_spline: Spline,
    phi_spline: Spline,
    /// Finite-difference step in slow time.
    pub fd_step: f64,
}

impl Table {
    /// Rows are `[τ, B, θ, φ]` with strictly increasing τ.
    pub fn new(rows: &[[f64; 4]], fd_step: f64) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::Config("tabulated profile needs at least 3 rows".into()));
        }
        if !(fd_step > 0.0) {
            return Err(Error::Config("fd_step must be positive".into()));
        }
        if rows.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(Error::Config("tabulated times must be strictly increasing".into()));
        }
        let col = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        let (tau, b, theta, phi) = (col(0), col(1), col(2), col(3));
        Ok(Table {
            b_spline: Spline::natural(&tau, &b),
            theta_spline: Spline::natural(&tau, &theta),
            phi_spline: Spline::natural(&tau, &phi),
            tau,
            b,
            theta,
            phi,
            fd_step,
        })
    }

    pub fn rows(&self) -> Vec<[f64; 4]> {
        (0..self.tau.len())
            .map(|i| [self.tau[i], self.b[i], self.theta[i], self.phi[i]])
            .collect()
    }

    fn span(&self) -> (f64, f64) {
        (self.tau[0], *self.tau.last().unwrap())
    }

    fn jet(&self, spline: &Spline, tau: f64) -> Jet {
        let h = self.fd_step;
        let (m, c, p) = (
            spline.eval(&self.tau, tau - h),
            spline.eval(&self.tau, tau),
            spline.eval(&self.tau, tau + h),
        );
        Jet {
            v: c,
            d1: (p - m) / (2.0 * h),
            d2: (p - 2.0 * c + m) / (h * h),
        }
    }
}

/// Natural cubic spline second-derivative coefficients.
#[derive(Debug, Clone, PartialEq)]
struct Spline {
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    fn natural(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations.
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
                if i > 1 {
                    let w = h0 / diag[i - 1];
                    diag[i] -= w * upper[i - 1];
                    rhs[i] -= w * rhs[i - 1];
                }
            }
            for i in (1..n - 1).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Spline { y: y.to_vec(), m }
    }

    fn eval(&self, x: &[f64], t: f64) -> f64 {
        let n = x.len();
        let i = match x.partition_point(|&xi| xi <= t) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = x[i + 1] - x[i];
        let a = (x[i + 1] - t) / h;
        let b = (t - x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// An immutable field trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    pub kind: ProfileKind,
    /// Adiabaticity scale: the profile is evaluated at slow time `εt`.
    pub epsilon: f64,
    /// Closed interval of physical time on which sampling is allowed.
    pub domain: (f64, f64),
    pub b_min: f64,
}

impl FieldProfile {
    pub fn new(kind: ProfileKind) -> Self {
        let domain = match &kind {
            ProfileKind::Tabulated(table) => table.span(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        };
        FieldProfile {
            kind,
            epsilon: 1.0,
            domain,
            b_min: DEFAULT_B_MIN,
        }
    }

    pub fn constant(b0: f64, theta: f64, phi: f64) -> Self {
        Self::new(ProfileKind::Constant { b0, theta, phi })
    }

    pub fn uniform_rotation(b0: f64, omega: f64) -> Self {
        Self::new(ProfileKind::UniformRotation { b0, omega, theta0: 0.0 })
    }

    pub fn sinusoidal(b0: f64, theta0: f64, omega: f64) -> Self {
        Self::new(ProfileKind::SinusoidalAngle {
            b0,
            theta0,
            omega,
            theta_c: 0.0,
            b_amp: 0.0,
            b_omega: 0.0,
        })
    }

    pub fn cone(b0: f64, theta: f64, omega: f64) -> Self {
        Self::new(ProfileKind::Cone3d {
            b0,
            theta,
            omega,
            phi0: 0.0,
        })
    }

    /// Rescales time. A tabulated profile's domain follows the rescaling.
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        if let ProfileKind::Tabulated(table) = &self.kind {
            let (a, b) = table.span();
            self.domain = (a / epsilon, b / epsilon);
        }
        self.epsilon = epsilon;
        self
    }

    pub fn with_domain(mut self, t0: f64, t1: f64) -> Self {
        self.domain = (t0, t1);
        self
    }

    pub fn with_b_min(mut self, b_min: f64) -> Self {
        self.b_min = b_min;
        self
    }

    pub fn is_in_plane(&self) -> bool {
        self.kind.is_in_plane()
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.domain.0 && t <= self.domain.1
    }

    pub fn check_span(&self, t0: f64, t1: f64) -> Result<()> {
        for t in [t0, t1] {
            if !self.contains(t) {
                return Err(self.domain_error(t));
            }
        }
        Ok(())
    }

    fn domain_error(&self, t: f64) -> Error {
        Error::Domain {
            t,
            lo: self.domain.0,
            hi: self.domain.1,
        }
    }

    /// Evaluates the field and its time derivatives at `t`.
    pub fn sample(&self, t: f64) -> Result<FieldSample> {
        if !self.contains(t) {
            return Err(self.domain_error(t));
        }
        let s = self.sample_unchecked(t);
        if !(s.b_mag >= self.b_min) {
            return Err(Error::DegenerateField {
                t,
                b: s.b_mag,
                b_min: self.b_min,
            });
        }
        Ok(s)
    }

    fn sample_unchecked(&self, t: f64) -> FieldSample {
        let eps = self.epsilon;
        let tau = eps * t;
        let (theta, phi, b) = match &self.kind {
            ProfileKind::Tabulated(table) => (
                table.jet(&table.theta_spline, tau),
                table.jet(&table.phi_spline, tau),
                table.jet(&table.b_spline, tau),
            ),
            kind => (kind.theta_jet(tau), kind.phi_jet(tau), kind.b_jet(tau)),
        };
        FieldSample {
            t,
            b_vec: b.v * spherical_unit(theta.v, phi.v),
            b_mag: b.v,
            theta: theta.v,
            phi: phi.v,
            theta_dot: eps * theta.d1,
            theta_ddot: eps * eps * theta.d2,
            phi_dot: eps * phi.d1,
            phi_ddot: eps * eps * phi.d2,
            b_dot: eps * b.d1,
        }
    }

    /// Field vector only; used by the integrators' right-hand sides.
    pub fn field(&self, t: f64) -> Result<Vector3<f64>> {
        self.sample(t).map(|s| s.b_vec)
    }

    pub fn to_config(&self) -> ProfileConfig {
        let mut params = BTreeMap::new();
        let mut put = |k: &str, v: f64| {
            params.insert(k.to_string(), v);
        };
        let mut table = None;
        match &self.kind {
            ProfileKind::Constant { b0, theta, phi } => {
                put("B0", *b0);
                put("theta", *theta);
                put("phi", *phi);
            }
            ProfileKind::UniformRotation { b0, omega, theta0 } => {
                put("B0", *b0);
                put("omega", *omega);
                put("theta0", *theta0);
            }
            ProfileKind::PolynomialAngle { theta, b } => {
                for (i, a) in theta.iter().enumerate() {
                    put(&format!("a{i}"), *a);
                }
                for (i, c) in b.iter().enumerate() {
                    put(&format!("B{i}"), *c);
                }
            }
            ProfileKind::SinusoidalAngle {
                b0,
                theta0,
                omega,
                theta_c,
                b_amp,
                b_omega,
            } => {
                put("B0", *b0);
                put("theta0", *theta0);
                put("Omega", *omega);
                put("theta_c", *theta_c);
                put("B_amp", *b_amp);
                put("B_Omega", *b_omega);
            }
            ProfileKind::Cone3d { b0, theta, omega, phi0 } => {
                put("B0", *b0);
                put("theta", *theta);
                put("Omega", *omega);
                put("phi0", *phi0);
            }
            ProfileKind::Tabulated(t) => {
                put("fd_step", t.fd_step);
                table = Some(t.rows());
            }
        }
        put("B_min", self.b_min);
        let t_domain = if self.domain.0.is_finite() && self.domain.1.is_finite() {
            Some([self.domain.0, self.domain.1])
        } else {
            None
        };
        ProfileConfig {
            kind: self.kind.name().to_string(),
            params,
            epsilon: self.epsilon,
            t_domain,
            table,
        }
    }

    pub fn from_config(cfg: &ProfileConfig) -> Result<Self> {
        let mut p = Params::new(&cfg.params);
        let kind = match cfg.kind.as_str() {
            "constant" => ProfileKind::Constant {
                b0: p.required("B0")?,
                theta: p.optional("theta", 0.0),
                phi: p.optional("phi", 0.0),
            },
            "uniform_rotation" => ProfileKind::UniformRotation {
                b0: p.required("B0")?,
                omega: p.required("omega")?,
                theta0: p.optional("theta0", 0.0),
            },
            "polynomial_angle" => ProfileKind::PolynomialAngle {
                theta: [
                    p.optional("a0", 0.0),
                    p.optional("a1", 0.0),
                    p.optional("a2", 0.0),
                    p.optional("a3", 0.0),
                ],
                b: [p.required("B0")?, p.optional("B1", 0.0), p.optional("B2", 0.0)],
            },
            "sinusoidal_angle" => ProfileKind::SinusoidalAngle {
                b0: p.required("B0")?,
                theta0: p.required("theta0")?,
                omega: p.required("Omega")?,
                theta_c: p.optional("theta_c", 0.0),
                b_amp: p.optional("B_amp", 0.0),
                b_omega: p.optional("B_Omega", 0.0),
            },
            "cone_3d" => ProfileKind::Cone3d {
                b0: p.required("B0")?,
                theta: p.required("theta")?,
                omega: p.required("Omega")?,
                phi0: p.optional("phi0", 0.0),
            },
            "user_tabulated" => {
                let rows = cfg
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::Config("user_tabulated requires a \"table\"".into()))?;
                ProfileKind::Tabulated(Table::new(rows, p.optional("fd_step", DEFAULT_FD_STEP))?)
            }
            other => return Err(Error::Config(format!("unknown profile kind {other:?}"))),
        };
        let b_min = p.optional("B_min", DEFAULT_B_MIN);
        p.finish()?;
        if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive and finite".into()));
        }
        if !(b_min > 0.0) {
            return Err(Error::Config("B_min must be positive".into()));
        }
        let mut profile = FieldProfile::new(kind).with_epsilon(cfg.epsilon).with_b_min(b_min);
        if let Some([a, b]) = cfg.t_domain {
            if !(a < b) {
                return Err(Error::Config("t_domain must satisfy t0 < t1".into()));
            }
            profile = profile.with_domain(a, b);
        }
        Ok(profile)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ProfileConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_config(&cfg)
    }
}

/// Serialized profile description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub kind: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "unit_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_domain: Option<[f64; 2]>,
    /// Rows `[t, B, θ, φ]` for `user_tabulated`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 4]>>,
}

fn unit_epsilon() -> f64 {
    1.0
}

struct Params<'a> {
    map: &'a BTreeMap<String, f64>,
    used: Vec<&'static str>,
}

impl<'a> Params<'a> {
    fn new(map: &'a BTreeMap<String, f64>) -> Self {
        Params { map, used: Vec::new() }
    }

    fn required(&mut self, key: &'static str) -> Result<f64> {
        self.used.push(key);
        match self.map.get(key) {
            Some(v) if v.is_finite() => Ok(*v),
            Some(_) => Err(Error::Config(format!("parameter {key} must be finite"))),
            None => Err(Error::Config(format!("missing parameter {key}"))),
        }
    }

    fn optional(&mut self, key: &'static str, default: f64) -> f64 {
        self.used.push(key);
        self.map.get(key).copied().unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().find(|k| !self.used.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown parameter {k}"))),
            None => Ok(()),
        }
    }
}

/// Largest discrepancy between the analytic derivatives and central
/// differences of the lower-order quantities, over a grid of times.
///
/// Each term is `|analytic − fd| / max(1, |analytic|)`.
pub fn derivative_selftest(profile: &FieldProfile, t_grid: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let mut worst: f64 = 0.0;
    for &t in t_grid {
        let s = profile.sample(t)?;
        let m = profile.sample(t - h)?;
        let p = profile.sample(t + h)?;
        let fd = |a: f64, b: f64| (b - a) / (2.0 * h);
        let pairs = [
            (s.theta_dot, fd(m.theta, p.theta)),
            (s.theta_ddot, fd(m.theta_dot, p.theta_dot)),
            (s.phi_dot, fd(m.phi, p.phi)),
            (s.phi_ddot, fd(m.phi_dot, p.phi_dot)),
            (s.b_dot, fd(m.b_mag, p.b_mag)),
        ];
        for (analytic, numeric) in pairs {
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
        }
    }
    Ok(worst)
}
