//! Second-order adiabatic solutions.
//!
//! The instantaneous Hamiltonian is diagonalized by three successive SU(2)
//! transformations `U0 U1 U2` (exact polar rotation, then first- and
//! second-order frame corrections). Their SO(3) images `R0 R1 R2` act on the
//! classical spin. Everything here is accurate to O(ε²); the neglected terms
//! are O(ε³) in the state and O(ε⁴ t) in the phase.

use nalgebra::{Matrix2, Matrix3, Vector3};
use num_complex::Complex64;

use crate::dynamics::{BlochVector, Spinor};
use crate::error::{Error, Result};
use crate::profile::{FieldProfile, FieldSample};

/// Bound on |δ| and |γ| beyond which the truncated chain is refused.
pub const REGIME_LIMIT: f64 = 0.5;

/// Order in ε of the first neglected term of every truncated quantity.
pub const TRUNCATION_ORDER: u32 = 3;

/// Dimensionless angular velocity and acceleration of the field direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticParams {
    pub theta: f64,
    pub b_mag: f64,
    /// `θ̇ / B`
    pub delta: f64,
    /// `(θ̈ − θ̇ Ḃ/B) / B²`
    pub gamma: f64,
    /// `B (1 + δ²/2)`
    pub b_eff: f64,
}

impl AdiabaticParams {
    pub fn from_sample(s: &FieldSample) -> Self {
        let b = s.b_mag;
        let delta = s.theta_dot / b;
        let gamma = (s.theta_ddot - s.theta_dot * s.b_dot / b) / (b * b);
        AdiabaticParams {
            theta: s.theta,
            b_mag: b,
            delta,
            gamma,
            b_eff: b * (1.0 + 0.5 * delta * delta),
        }
    }

    pub fn check_regime(&self) -> Result<()> {
        if self.delta.abs() < REGIME_LIMIT && self.gamma.abs() < REGIME_LIMIT {
            Ok(())
        } else {
            Err(Error::PerturbativeRegimeViolation {
                delta: self.delta,
                gamma: self.gamma,
            })
        }
    }
}

pub fn adiabatic_params(profile: &FieldProfile, t: f64) -> Result<AdiabaticParams> {
    profile.sample(t).map(|s| AdiabaticParams::from_sample(&s))
}

fn in_plane_sample(profile: &FieldProfile, t: f64) -> Result<FieldSample> {
    let s = profile.sample(t)?;
    if !profile.is_in_plane() || !s.is_in_plane() {
        return Err(Error::NotInPlane {
            phi: s.phi,
            phi_dot: s.phi_dot,
        });
    }
    Ok(s)
}

/// The three SU(2) diagonalizations and their SO(3) counterparts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformChain {
    pub u0: Matrix2<Complex64>,
    pub u1: Matrix2<Complex64>,
    pub u2: Matrix2<Complex64>,
    pub r0: Matrix3<f64>,
    pub r1: Matrix3<f64>,
    pub r2: Matrix3<f64>,
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn im(x: f64) -> Complex64 {
    Complex64::new(0.0, x)
}

impl TransformChain {
    /// Builds the chain for polar angle `theta` and the given δ, γ.
    pub fn new(theta: f64, delta: f64, gamma: f64) -> Result<Self> {
        let p = AdiabaticParams {
            theta,
            b_mag: 1.0,
            delta,
            gamma,
            b_eff: 1.0 + 0.5 * delta * delta,
        };
        p.check_regime()?;
        let (s, c) = (0.5 * theta).sin_cos();
        let d = 1.0 - delta * delta / 8.0;
        let u0 = Matrix2::new(re(c), re(-s), re(s), re(c));
        let u1 = Matrix2::new(re(d), im(-0.5 * delta), im(-0.5 * delta), re(d));
        let u2 = Matrix2::new(re(1.0), re(0.5 * gamma), re(-0.5 * gamma), re(1.0));

        let (st, ct) = theta.sin_cos();
        let h = 1.0 - 0.5 * delta * delta;
        let r0 = Matrix3::new(ct, 0.0, st, 0.0, 1.0, 0.0, -st, 0.0, ct);
        let r1 = Matrix3::new(1.0, 0.0, 0.0, 0.0, h, -delta, 0.0, delta, h);
        let r2 = Matrix3::new(1.0, 0.0, -gamma, 0.0, 1.0, 0.0, gamma, 0.0, 1.0);
        Ok(TransformChain { u0, u1, u2, r0, r1, r2 })
    }

    pub fn from_params(p: &AdiabaticParams) -> Result<Self> {
        Self::new(p.theta, p.delta, p.gamma)
    }

    /// `U0 U1 U2`
    pub fn u(&self) -> Matrix2<Complex64> {
        self.u0 * self.u1 * self.u2
    }

    /// `R0 R1 R2`
    pub fn r(&self) -> Matrix3<f64> {
        self.r0 * self.r1 * self.r2
    }
}

/// Chain at time `t` of an in-plane profile.
pub fn transform_chain(profile: &FieldProfile, t: f64) -> Result<TransformChain> {
    let s = in_plane_sample(profile, t)?;
    TransformChain::from_params(&AdiabaticParams::from_sample(&s))
}

/// Amplitudes of the two adiabatic branches and the matching classical
/// constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionConstants {
    pub alpha: Complex64,
    pub beta: Complex64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SolutionConstants {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let (a, b, c) = constants_map(alpha, beta)?;
        Ok(SolutionConstants { alpha, beta, a, b, c })
    }

    /// The quasi-stationary branch `α = 1, β = 0`.
    pub fn quasi_stationary() -> Self {
        SolutionConstants {
            alpha: re(1.0),
            beta: re(0.0),
            a: 0.0,
            b: 0.0,
            c: 1.0,
        }
    }
}

/// Maps spinor amplitudes to classical constants:
/// `A = 2 Re(α*β)`, `B = 2 Im(α*β)`, `C = |α|² − |β|²`.
pub fn constants_map(alpha: Complex64, beta: Complex64) -> Result<(f64, f64, f64)> {
    let norm_sq = alpha.norm_sqr() + beta.norm_sqr();
    if (norm_sq - 1.0).abs() > 1e-9 {
        return Err(Error::Normalization { norm_sq });
    }
    let x = alpha.conj() * beta;
    Ok((2.0 * x.re, 2.0 * x.im, alpha.norm_sqr() - beta.norm_sqr()))
}

/// Spinor `U0 U1 U2 (α e^{iφ}, β e^{−iφ})` at time `t`.
pub fn spinor_solution(k: &SolutionConstants, profile: &FieldProfile, t: f64, phase: f64) -> Result<Spinor> {
    let u = transform_chain(profile, t)?.u();
    let psi3 = nalgebra::Vector2::new(k.alpha * Complex64::cis(phase), k.beta * Complex64::cis(-phase));
    let psi = u * psi3;
    Ok(Spinor::new(psi[0], psi[1]))
}

/// Classical spin `R0 R1 R2 S3` at time `t`, where `S3` precesses about z
/// with azimuth `arg(A + iB) − 2φ`.
pub fn classical_solution(k: &SolutionConstants, profile: &FieldProfile, t: f64, phase: f64) -> Result<BlochVector> {
    let r = transform_chain(profile, t)?.r();
    let (s2, c2) = (2.0 * phase).sin_cos();
    let s3 = Vector3::new(k.a * c2 + k.b * s2, k.b * c2 - k.a * s2, k.c);
    Ok(BlochVector(r * s3))
}

/// Normalized second-order eigenvector on the `+B_eff/2` branch.
pub fn tracked_eigenvector(profile: &FieldProfile, t: f64) -> Result<Spinor> {
    spinor_solution(&SolutionConstants::quasi_stationary(), profile, t, 0.0).map(|s| s.normalized())
}

/// Quasi-stationary classical spin and its order-by-order pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiStationary {
    /// `S⁽⁰⁾ + S⁽¹⁾ + S⁽²⁾`, unit length up to O(ε³).
    pub total: BlochVector,
    pub s0: Vector3<f64>,
    pub s1: Vector3<f64>,
    pub s2: Vector3<f64>,
}

impl QuasiStationary {
    /// Normalized total, for seeding an exact integration.
    pub fn seed(&self) -> BlochVector {
        BlochVector(self.total.0.normalize())
    }
}

/// Coordinate-free quasi-stationary solution for any 3-D field:
/// `S⁽⁰⁾ = n`, `S⁽¹⁾ = ṅ × n / B`, `S⁽²⁾ = Ṡ⁽¹⁾ × n / B − |S⁽¹⁾|² n / 2`,
/// with all time derivatives taken analytically.
pub fn quasi_stationary(profile: &FieldProfile, t: f64) -> Result<QuasiStationary> {
    let s = profile.sample(t)?;
    let b = s.b_mag;
    let n = s.direction();
    let n_dot = s.direction_rate();
    let n_ddot = s.direction_accel();
    let nd_x_n = n_dot.cross(&n);
    let s1 = nd_x_n / b;
    let s1_dot = n_ddot.cross(&n) / b - nd_x_n * (s.b_dot / (b * b));
    let s2 = s1_dot.cross(&n) / b - n * (0.5 * s1.norm_squared());
    Ok(QuasiStationary {
        total: BlochVector(n + s1 + s2),
        s0: n,
        s1,
        s2,
    })
}

/// Closed Cartesian form for in-plane fields, in terms of θ, δ, γ.
pub fn quasi_stationary_in_plane(profile: &FieldProfile, t: f64) -> Result<QuasiStationary> {
    let p = AdiabaticParams::from_sample(&in_plane_sample(profile, t)?);
    let (st, ct) = p.theta.sin_cos();
    let h = 0.5 * p.delta * p.delta;
    let s0 = Vector3::new(st, 0.0, ct);
    let s1 = Vector3::new(0.0, -p.delta, 0.0);
    let s2 = Vector3::new(-p.gamma * ct - h * st, 0.0, p.gamma * st - h * ct);
    Ok(QuasiStationary {
        total: BlochVector(s0 + s1 + s2),
        s0,
        s1,
        s2,
    })
}

/// Components of a vector in the local `(e_r, e_θ, e_φ)` basis of the field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalComponents {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

/// `S⁽¹⁾` and `S⁽²⁾` resolved along the field's spherical basis.
pub fn quasi_stationary_spherical(
    profile: &FieldProfile,
    t: f64,
) -> Result<(SphericalComponents, SphericalComponents)> {
    let s = profile.sample(t)?;
    let q = quasi_stationary(profile, t)?;
    let (er, et, ep) = (s.direction(), s.e_theta(), s.e_phi());
    let split = |v: Vector3<f64>| SphericalComponents {
        r: v.dot(&er),
        theta: v.dot(&et),
        phi: v.dot(&ep),
    };
    Ok((split(q.s1), split(q.s2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::spinor_to_bloch;
    use crate::profile::ProfileKind;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, PI};

    fn sigma(b: Vector3<f64>) -> Matrix2<Complex64> {
        Matrix2::new(re(b.z), Complex64::new(b.x, -b.y), Complex64::new(b.x, b.y), re(-b.z)) * re(0.5)
    }

    fn max_abs<const R: usize, const C: usize>(m: &nalgebra::SMatrix<Complex64, R, C>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// In-plane profile with prescribed θ, δ, γ at t = 0 and constant B.
    fn local_profile(theta: f64, delta: f64, gamma: f64, b: f64) -> FieldProfile {
        FieldProfile::new(ProfileKind::PolynomialAngle {
            theta: [theta, delta * b, 0.5 * gamma * b * b, 0.0],
            b: [b, 0.0, 0.0],
        })
    }

    #[test]
    fn params_examples() {
        let p = adiabatic_params(&FieldProfile::uniform_rotation(1.0, 0.1), 37.0).unwrap();
        assert_abs_diff_eq!(p.delta, 0.1, epsilon = 1e-15);
        assert_eq!(p.gamma, 0.0);
        assert_abs_diff_eq!(p.b_eff, 1.005, epsilon = 1e-15);

        let p = adiabatic_params(&FieldProfile::constant(2.5, 0.3, 0.0), 1.0).unwrap();
        assert_eq!((p.delta, p.gamma, p.b_eff), (0.0, 0.0, 2.5));

        let p = adiabatic_params(&FieldProfile::sinusoidal(1.0, 0.3, 0.05), 0.0).unwrap();
        assert_abs_diff_eq!(p.delta, 0.015, epsilon = 1e-15);
        assert_abs_diff_eq!(p.gamma, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.b_eff, 1.0 + 1.125e-4, epsilon = 1e-15);
    }

    #[test]
    fn params_with_varying_magnitude() {
        let profile = FieldProfile::new(ProfileKind::PolynomialAngle {
            theta: [0.2, 0.03, 0.004, 0.0],
            b: [1.5, 0.1, 0.0],
        });
        let t = 0.7;
        let (th_d, th_dd) = (0.03 + 0.008 * t, 0.008);
        let (b, b_d) = (1.5 + 0.1 * t, 0.1);
        let p = adiabatic_params(&profile, t).unwrap();
        assert_abs_diff_eq!(p.delta, th_d / b, epsilon = 1e-15);
        assert_abs_diff_eq!(p.gamma, (th_dd - th_d * b_d / b) / (b * b), epsilon = 1e-15);
        assert!(p.b_eff >= p.b_mag);
    }

    #[test]
    fn degenerate_field_rejected() {
        let profile = FieldProfile::constant(0.0, 0.0, 0.0);
        assert!(matches!(
            adiabatic_params(&profile, 0.0),
            Err(Error::DegenerateField { .. })
        ));
    }

    #[test]
    fn u_chain_examples() {
        let h = FRAC_1_SQRT_2;
        let ch = TransformChain::new(FRAC_PI_2, 0.0, 0.0).unwrap();
        assert!(max_abs(&(ch.u0 - Matrix2::new(re(h), re(-h), re(h), re(h)))) < 1e-15);
        assert_eq!(ch.u1, Matrix2::identity());
        assert_eq!(ch.u2, Matrix2::identity());

        let ch = TransformChain::new(0.0, 0.1, 0.0).unwrap();
        let want = Matrix2::new(re(0.99875), im(-0.05), im(-0.05), re(0.99875));
        assert!(max_abs(&(ch.u1 - want)) < 1e-15);

        let ch = TransformChain::new(0.0, 0.0, 0.02).unwrap();
        let want = Matrix2::new(re(1.0), re(0.01), re(-0.01), re(1.0));
        assert!(max_abs(&(ch.u2 - want)) < 1e-15);
    }

    #[test]
    fn r_chain_examples() {
        let ch = TransformChain::new(0.0, 0.0, 0.0).unwrap();
        assert_eq!(ch.r(), Matrix3::identity());

        let ch = TransformChain::new(FRAC_PI_2, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(ch.r0 * Vector3::z(), Vector3::x(), epsilon = 1e-15);

        let ch = TransformChain::new(0.0, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(ch.r1 * Vector3::z(), Vector3::new(0.0, -0.1, 0.995), epsilon = 1e-15);
    }

    #[test]
    fn regime_guard() {
        assert!(matches!(
            TransformChain::new(0.0, 0.6, 0.0),
            Err(Error::PerturbativeRegimeViolation { .. })
        ));
        assert!(TransformChain::new(0.0, 0.1, -0.5).is_err());
        let fast = FieldProfile::uniform_rotation(1.0, 0.7);
        assert!(spinor_solution(&SolutionConstants::quasi_stationary(), &fast, 0.0, 0.0).is_err());
    }

    #[test]
    fn chain_requires_in_plane_field() {
        let cone = FieldProfile::cone(1.0, 1.0, 0.01);
        assert!(matches!(transform_chain(&cone, 0.0), Err(Error::NotInPlane { .. })));
    }

    #[test]
    fn constants_examples() {
        assert_eq!(constants_map(re(1.0), re(0.0)).unwrap(), (0.0, 0.0, 1.0));
        let h = FRAC_1_SQRT_2;
        let (a, b, c) = constants_map(re(h), re(h)).unwrap();
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b, 0.0);
        assert_abs_diff_eq!(c, 0.0, epsilon = 1e-15);
        let (a, b, c) = constants_map(re(h), im(h)).unwrap();
        assert_abs_diff_eq!(a, 0.0);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c, 0.0, epsilon = 1e-15);
        let bloch = spinor_to_bloch(&Spinor::new(re(h), im(h)));
        assert_abs_diff_eq!(bloch.0, Vector3::new(a, b, c), epsilon = 1e-15);
        assert!(matches!(
            constants_map(re(1.0), re(1.0)),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn spinor_solution_examples() {
        let qs = SolutionConstants::quasi_stationary();
        let psi = spinor_solution(&qs, &FieldProfile::constant(1.0, 0.0, 0.0), 0.0, 0.0).unwrap();
        assert_eq!(psi, Spinor::spin_up());

        let psi = spinor_solution(&qs, &local_profile(0.0, 0.1, 0.0, 1.0), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(psi.up.re, 0.99875, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.up.im, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.down.im, -0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.down.re, 0.0, epsilon = 1e-15);

        let k = SolutionConstants::new(re(0.0), re(1.0)).unwrap();
        let psi = spinor_solution(&k, &FieldProfile::constant(1.0, FRAC_PI_2, 0.0), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(psi.up.re, -FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.down.re, FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn spinor_solution_matches_closed_form_columns() {
        // Expanded columns of U0 U1 U2, dropping products of δ and γ.
        let (theta, delta, gamma) = (0.7, 0.04, 0.0016);
        let p = local_profile(theta, delta, gamma, 1.0);
        let (s, c) = (0.5 * theta).sin_cos();
        let d = 1.0 - delta * delta / 8.0;
        let first = [
            Complex64::new(d * c + 0.5 * gamma * s, 0.5 * delta * s),
            Complex64::new(d * s - 0.5 * gamma * c, -0.5 * delta * c),
        ];
        let second = [
            Complex64::new(-d * s + 0.5 * gamma * c, -0.5 * delta * c),
            Complex64::new(d * c + 0.5 * gamma * s, -0.5 * delta * s),
        ];
        let bound = 2.0 * delta * gamma;
        let k = SolutionConstants::quasi_stationary();
        let psi = spinor_solution(&k, &p, 0.0, 0.0).unwrap();
        assert!((psi.up - first[0]).norm() < bound && (psi.down - first[1]).norm() < bound);
        let k = SolutionConstants::new(re(0.0), re(1.0)).unwrap();
        let psi = spinor_solution(&k, &p, 0.0, 0.0).unwrap();
        assert!((psi.up - second[0]).norm() < bound && (psi.down - second[1]).norm() < bound);
    }

    #[test]
    fn classical_solution_examples() {
        let k = SolutionConstants::new(re(FRAC_1_SQRT_2), re(FRAC_1_SQRT_2)).unwrap();
        let s = classical_solution(&k, &FieldProfile::constant(1.0, 0.0, 0.0), 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(s.0, Vector3::x(), epsilon = 1e-15);

        let p = local_profile(0.4, 0.05, 0.002, 1.0);
        let s = classical_solution(&SolutionConstants::quasi_stationary(), &p, 0.0, 1.3).unwrap();
        let q = quasi_stationary(&p, 0.0).unwrap();
        assert!((s.0 - q.total.0).norm() < 0.05 * 0.002 * 2.0);
    }

    #[test]
    fn classical_phase_rotates_like_bloch_equation() {
        // For a static field along z, S3 precesses counterclockwise as φ decreases.
        let k = SolutionConstants::new(re(FRAC_1_SQRT_2), re(FRAC_1_SQRT_2)).unwrap();
        let p = FieldProfile::constant(1.0, 0.0, 0.0);
        let s = classical_solution(&k, &p, 0.0, -0.25 * PI).unwrap();
        assert_abs_diff_eq!(s.0, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn truncated_unitarity() {
        for &(theta, delta, gamma) in &[(0.3, 0.1, 0.01), (2.0, -0.2, 0.04), (1.0, 0.45, -0.3)] {
            let ch = TransformChain::new(theta, delta, gamma).unwrap();
            let bound = 10.0 * (delta.abs().powi(3) + gamma.abs().powf(1.5));
            assert!(max_abs(&(ch.u0.adjoint() * ch.u0 - Matrix2::identity())) < 1e-15);
            assert!(max_abs(&(ch.u1.adjoint() * ch.u1 - Matrix2::identity())) <= bound);
            assert!(max_abs(&(ch.u2.adjoint() * ch.u2 - Matrix2::identity())) <= bound);
            assert!((ch.r0.transpose() * ch.r0 - Matrix3::identity()).amax() < 1e-15);
            assert!((ch.r1.transpose() * ch.r1 - Matrix3::identity()).amax() <= bound);
            assert!((ch.r2.transpose() * ch.r2 - Matrix3::identity()).amax() <= bound);
        }
    }

    #[test]
    fn chain_diagonalizes_hamiltonian() {
        let b = 1.3;
        for &theta in &[0.0, 0.5, 1.5, 2.8] {
            for &delta in &[-0.1, -0.03, 0.0, 0.05, 0.1] {
                for &gamma in &[-0.1, 0.0, 0.01, 0.1] {
                    let p = local_profile(theta, delta, gamma, b);
                    let u = |t: f64| transform_chain(&p, t).unwrap().u();
                    let h = 1e-5;
                    let u_dot = (u(h) - u(-h)) * re(0.5 / h);
                    let u0 = u(0.0);
                    let u_inv = u0.try_inverse().unwrap();
                    let h0 = sigma(p.field(0.0).unwrap());
                    let h3 = u_inv * h0 * u0 - u_inv * u_dot * im(1.0);
                    let b_eff = b * (1.0 + 0.5 * delta * delta);
                    let eps = delta.abs().max(gamma.abs().sqrt());
                    let bound = 10.0 * eps.powi(3) * b + 1e-9;
                    assert!(h3[(0, 1)].norm() <= bound, "{theta} {delta} {gamma}: {}", h3[(0, 1)]);
                    assert!(h3[(1, 0)].norm() <= bound);
                    assert!((h3[(0, 0)] - re(0.5 * b_eff)).norm() <= bound);
                    assert!((h3[(1, 1)] + re(0.5 * b_eff)).norm() <= bound);
                }
            }
        }
    }

    #[test]
    fn quasi_stationary_examples() {
        let q = quasi_stationary(&FieldProfile::constant(1.0, 0.0, 0.0), 3.0).unwrap();
        assert_eq!(q.total.0, Vector3::z());
        assert_eq!(q.s1, Vector3::zeros());
        assert_eq!(q.s2, Vector3::zeros());

        let q = quasi_stationary(&FieldProfile::uniform_rotation(1.0, 0.1), 0.0).unwrap();
        assert_abs_diff_eq!(q.s1, Vector3::new(0.0, -0.1, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(q.s2, Vector3::new(0.0, 0.0, -0.005), epsilon = 1e-15);
        assert_abs_diff_eq!(q.total.0, Vector3::new(0.0, -0.1, 0.995), epsilon = 1e-15);
    }

    #[test]
    fn spherical_components_without_magnitude_change() {
        let (th_d, th_dd, b) = (0.04, 0.003, 1.2);
        let p = FieldProfile::new(ProfileKind::PolynomialAngle {
            theta: [0.9, th_d, 0.5 * th_dd, 0.0],
            b: [b, 0.0, 0.0],
        });
        let (s1, s2) = quasi_stationary_spherical(&p, 0.0).unwrap();
        let delta = th_d / b;
        assert_abs_diff_eq!(s1.phi, -delta, epsilon = 1e-15);
        assert_abs_diff_eq!(s1.r, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s1.theta, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s2.theta, -th_dd / (b * b), epsilon = 1e-15);
        assert_abs_diff_eq!(s2.r, -0.5 * delta * delta, epsilon = 1e-15);
        assert_abs_diff_eq!(s2.phi, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quasi_stationary_satisfies_bloch_equation_in_3d() {
        // Residual of d/dt S − B × S scales as ε³.
        let residual = |eps: f64| {
            let p = FieldProfile::new(ProfileKind::Cone3d {
                b0: 1.0,
                theta: FRAC_PI_3,
                omega: 1.0,
                phi0: 0.0,
            })
            .with_epsilon(eps);
            let h = 1e-3;
            let t = 2.0 / eps;
            let s = |t| quasi_stationary(&p, t).unwrap().total.0;
            let ds = (s(t + h) - s(t - h)) / (2.0 * h);
            (ds - p.field(t).unwrap().cross(&s(t))).norm()
        };
        for eps in [0.1, 0.05, 0.02] {
            assert!(residual(eps) <= 10.0 * eps.powi(3), "{eps}: {}", residual(eps));
        }
        let ratio = residual(0.1) / residual(0.05);
        assert!(ratio > 6.0, "{ratio}");
    }

    proptest! {
        #[test]
        fn coordinate_free_matches_cartesian(
            a0 in -3.0..3.0f64, a1 in -0.1..0.1f64, a2 in -0.02..0.02f64, a3 in -0.005..0.005f64,
            b0 in 0.8..2.0f64, b1 in -0.1..0.1f64, t in -1.0..1.0f64,
        ) {
            let p = FieldProfile::new(ProfileKind::PolynomialAngle { theta: [a0, a1, a2, a3], b: [b0, b1, 0.0] });
            let q = quasi_stationary(&p, t).unwrap();
            let c = quasi_stationary_in_plane(&p, t).unwrap();
            prop_assert!((q.s0 - c.s0).amax() <= 1e-12);
            prop_assert!((q.s1 - c.s1).amax() <= 1e-12);
            prop_assert!((q.s2 - c.s2).amax() <= 1e-12);
        }

        #[test]
        fn quasi_stationary_near_unit_norm(
            a0 in -3.0..3.0f64, a1 in -0.1..0.1f64, a2 in -0.01..0.01f64, b0 in 0.8..2.0f64,
        ) {
            let p = FieldProfile::new(ProfileKind::PolynomialAngle { theta: [a0, a1, a2, 0.0], b: [b0, 0.0, 0.0] });
            let pr = adiabatic_params(&p, 0.0).unwrap();
            let eps = pr.delta.abs().max(pr.gamma.abs().sqrt());
            let q = quasi_stationary(&p, 0.0).unwrap();
            prop_assert!((q.total.0.norm_squared() - 1.0).abs() <= 10.0 * eps.powi(3) + 1e-15);
        }

        #[test]
        fn constants_lie_on_sphere(re_a in -1.0..1.0f64, im_a in -1.0..1.0f64, re_b in -1.0..1.0f64, im_b in -1.0..1.0f64) {
            let n = (re_a * re_a + im_a * im_a + re_b * re_b + im_b * im_b).sqrt();
            prop_assume!(n > 1e-3);
            let alpha = Complex64::new(re_a / n, im_a / n);
            let beta = Complex64::new(re_b / n, im_b / n);
            let (a, b, c) = constants_map(alpha, beta).unwrap();
            prop_assert!((a * a + b * b + c * c - 1.0).abs() <= 1e-12);
            let s = spinor_to_bloch(&Spinor::new(alpha, beta));
            prop_assert!((s.0 - Vector3::new(a, b, c)).amax() <= 1e-12);
        }

        #[test]
        fn chain_correspondence(
            theta in -3.0..3.0f64, delta in -0.1..0.1f64, gamma in -0.01..0.01f64,
            re_a in -1.0..1.0f64, im_a in -1.0..1.0f64, re_b in -1.0..1.0f64, im_b in -1.0..1.0f64,
        ) {
            let n = (re_a * re_a + im_a * im_a + re_b * re_b + im_b * im_b).sqrt();
            prop_assume!(n > 1e-3);
            let psi3 = Spinor::new(Complex64::new(re_a / n, im_a / n), Complex64::new(re_b / n, im_b / n));
            let ch = TransformChain::new(theta, delta, gamma).unwrap();
            let v = ch.u() * nalgebra::Vector2::new(psi3.up, psi3.down);
            let lhs = spinor_to_bloch(&Spinor::new(v[0], v[1])).0;
            let rhs = ch.r() * spinor_to_bloch(&psi3).0;
            let eps = delta.abs().max(gamma.abs().sqrt());
            prop_assert!((lhs - rhs).amax() <= 5.0 * eps.powi(3) + 1e-14);
        }
    }
}
