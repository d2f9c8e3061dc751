//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any failure.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use spinphase::adiabatic::{self, classical_solution, spinor_solution, SolutionConstants};
use spinphase::dynamics::{
    extract_total_phase, integrate_bloch, integrate_schrodinger, integrate_with_phase, spinor_to_bloch, BlochVector,
    IntegratorConfig, PhaseReference, Spinor,
};
use spinphase::harness::{run_convergence, run_phase_budget, run_timescale_demo};
use spinphase::phases::{self, wrap, MLoop};
use spinphase::profile::{FieldProfile, ProfileKind};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn tight() -> IntegratorConfig {
    IntegratorConfig::with_tolerance(1e-10)
}

fn rotating_frame_phase() -> Outcome {
    let start = Instant::now();
    let p = FieldProfile::uniform_rotation(1.0, 0.1);
    let span = (0.0, 200.0);
    let psi0 = adiabatic::tracked_eigenvector(&p, 0.0).unwrap();
    let cfg = tight().with_uniform_grid(0.0, 200.0, 2000);
    let (_, phase) = integrate_with_phase(&p, &psi0, span, &cfg, PhaseReference::TrackedEigenvector).unwrap();
    let extracted = phase.final_phase();
    let analytic = -0.5 * 1.01f64.sqrt() * 200.0;
    let second_order = phases::phi0(&p, span).unwrap() + phases::phi2(&p, span).unwrap();
    let elapsed = start.elapsed();
    let (e1, e2) = ((extracted - analytic).abs(), (extracted - second_order).abs());
    outcome(
        e1 <= 1e-5 && e2 <= 2e-3 && elapsed < Duration::from_secs(5),
        format!(
            "phase {extracted:.9}, |vs exact| {e1:.2e}, |vs phi0+phi2| {e2:.3e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn convergence_orders() -> Outcome {
    let start = Instant::now();
    let base = FieldProfile::sinusoidal(1.0, 0.3, 1.0);
    let report = run_convergence(
        &base,
        &[0.16, 0.08, 0.04, 0.02],
        2.0 * PI,
        &IntegratorConfig::with_tolerance(1e-12),
    )
    .unwrap();
    let elapsed = start.elapsed();
    let slopes: Vec<f64> = report.slopes.iter().map(|s| s.map_or(f64::NAN, |f| f.slope)).collect();
    let pass = (slopes[0] - 1.0).abs() <= 0.2
        && (slopes[1] - 2.0).abs() <= 0.2
        && (slopes[2] - 3.0).abs() <= 0.3
        && elapsed < Duration::from_secs(60);
    outcome(
        pass,
        format!(
            "slopes {:.3} / {:.3} / {:.3}, {:.2}s",
            slopes[0],
            slopes[1],
            slopes[2],
            elapsed.as_secs_f64()
        ),
    )
}

fn precession_circle(theta: f64) -> spinphase::dynamics::Trajectory<BlochVector> {
    let p = FieldProfile::constant(1.0, 0.0, 0.0);
    let s0 = BlochVector::new(theta.sin(), 0.0, theta.cos());
    let cfg = tight().with_uniform_grid(0.0, 2.0 * PI, 1000);
    integrate_bloch(&p, &s0, (0.0, 2.0 * PI), &cfg).unwrap()
}

fn aa_identity() -> Outcome {
    let mut worst_circle: f64 = 0.0;
    for (theta, want) in [(FRAC_PI_2, -PI), (FRAC_PI_3, -FRAC_PI_2)] {
        let traj = precession_circle(theta);
        let coord = phases::aa_geometric_phase_coordinate(&traj).unwrap();
        let solid = phases::aa_geometric_phase_solid_angle(&traj).unwrap();
        worst_circle = worst_circle.max((coord - want).abs()).max(wrap(solid - want).abs());
    }

    // Uniform rotation with √(B² + ω²)/ω = 10: every state returns to −ψ₀
    // after one turn of the field.
    let omega = 1.0 / 99f64.sqrt();
    let p = FieldProfile::uniform_rotation(1.0, omega);
    let t1 = 2.0 * PI / omega;
    let psi0 = adiabatic::tracked_eigenvector(&p, 0.0).unwrap();
    let cfg = tight().with_uniform_grid(0.0, t1, 8000);
    let traj = integrate_schrodinger(&p, &psi0, (0.0, t1), &cfg).unwrap();
    let total = extract_total_phase(&traj, PhaseReference::InitialState)
        .unwrap()
        .final_phase();
    let dyn_phase = phases::phi_dyn_expect(&traj).unwrap();
    let coord = phases::aa_geometric_phase_coordinate(&traj.to_bloch()).unwrap();
    let solid = phases::aa_geometric_phase_solid_angle(&traj.to_bloch()).unwrap();
    let identity = wrap(total - dyn_phase - coord).abs();
    let routes = wrap(coord - solid).abs();
    outcome(
        worst_circle <= 1e-8 && identity <= 1e-6 && routes <= 1e-6,
        format!("circles {worst_circle:.1e}, rotating run identity {identity:.1e}, routes {routes:.1e}"),
    )
}

fn berry_phase() -> Outcome {
    let cone = FieldProfile::cone(1.0, FRAC_PI_3, 0.01);
    let v = phases::berry_phi1(&cone, (0.0, 2.0 * PI / 0.01)).unwrap();
    let in_plane = [
        FieldProfile::uniform_rotation(1.0, 0.1),
        FieldProfile::sinusoidal(1.0, 0.3, 0.05),
        FieldProfile::constant(1.0, 0.4, 0.0),
    ];
    let zeros = in_plane
        .iter()
        .all(|p| phases::berry_phi1(p, (0.0, 100.0)).unwrap() == 0.0);
    let err = (v - FRAC_PI_2).abs();
    outcome(
        err <= 1e-9 && zeros,
        format!("cone {v:.12} (err {err:.1e}), in-plane zero: {zeros}"),
    )
}

fn stokes_identity() -> Outcome {
    let profile = FieldProfile::sinusoidal(1.0, 0.3, 0.05);
    let lp = MLoop::from_profile(&profile, 0.0, 2.0 * PI / 0.05, 2000).unwrap();
    let target = -PI * 0.09 * 0.05 / 4.0;
    let line = phases::generalized_line_integral(&lp, 1.0).unwrap();
    let surface = phases::stokes_surface_integral(&lp, 1.0).unwrap();
    let rev = lp.reversed();
    let flips = phases::generalized_line_integral(&rev, 1.0).unwrap() == -line
        && phases::stokes_surface_integral(&rev, 1.0).unwrap() == -surface;
    let err = (line - target).abs().max((surface - target).abs());
    outcome(
        err <= 1e-6 && flips,
        format!("line {line:.9}, surface {surface:.9}, target {target:.9}, reversal exact: {flips}"),
    )
}

fn timescale() -> Outcome {
    let r = run_timescale_demo(1.0, 0.05, Some(&tight())).unwrap();
    let t1 = r.t1.unwrap();
    let closed = r.phi2_at_t1.unwrap().abs();
    let dev = r.numeric_deviation.unwrap().abs();
    outcome(
        (t1 - 400.0).abs() <= 1e-9 && (closed - 0.25).abs() <= 1e-15 && (dev - 0.25).abs() <= 3e-3,
        format!("t1 {t1}, |phi2(t1)| {closed}, numeric deviation {dev:.6}"),
    )
}

fn chain_consistency() -> Outcome {
    let p = FieldProfile::sinusoidal(1.0, 0.8, 0.1);
    let psi0 = Spinor::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
    let cfg = tight().with_uniform_grid(0.0, 100.0, 1000);
    let spin = integrate_schrodinger(&p, &psi0, (0.0, 100.0), &cfg).unwrap().to_bloch();
    let bloch = integrate_bloch(&p, &spinor_to_bloch(&psi0), (0.0, 100.0), &cfg).unwrap();
    let ehrenfest = spin
        .states
        .iter()
        .zip(&bloch.states)
        .map(|(a, b)| (a.0 - b.0).amax())
        .fold(0.0, f64::max);

    let eps: f64 = 0.05;
    let mut rng = StdRng::seed_from_u64(20_061_018);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let theta = rng.gen_range(-PI..PI);
        let local = FieldProfile::new(ProfileKind::PolynomialAngle {
            theta: [theta, eps, 0.5 * eps * eps, 0.0],
            b: [1.0, 0.0, 0.0],
        });
        let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let k = SolutionConstants::new(Complex64::new(v[0] / n, v[1] / n), Complex64::new(v[2] / n, v[3] / n)).unwrap();
        let phase = rng.gen_range(-PI..PI);
        let a = spinor_to_bloch(&spinor_solution(&k, &local, 0.0, phase).unwrap());
        let b = classical_solution(&k, &local, 0.0, phase).unwrap();
        worst = worst.max((a.0 - b.0).amax());
    }
    let bound = 5.0 * eps.powi(3);
    outcome(
        ehrenfest <= 1e-8 && worst <= bound,
        format!("Ehrenfest {ehrenfest:.1e}, chain residual {worst:.2e} (bound {bound:.2e})"),
    )
}

fn factor_two_report() -> Outcome {
    let b = run_phase_budget(&FieldProfile::uniform_rotation(1.0, 0.1), (0.0, 200.0), &tight()).unwrap();
    let ratio = b.ratio.unwrap_or(f64::NAN);
    outcome(
        b.phases.phi_geom_aa.is_finite() && ratio.is_finite(),
        format!(
            "phi2 {:.6}, AA geometric {:.6}, ratio {ratio:.4}, r_aa {:.2e} (diagnostic only)",
            b.phases.phi2, b.phases.phi_geom_aa, b.r_aa
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("rotating-frame total phase", rotating_frame_phase),
        ("convergence orders", convergence_orders),
        ("Aharonov-Anandan identity", aa_identity),
        ("Berry phase", berry_phase),
        ("Stokes identity", stokes_identity),
        ("timescale t1", timescale),
        ("Ehrenfest and chain consistency", chain_consistency),
        ("factor-of-two report", factor_two_report),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {} ({name}): {tag} - {}", i + 1, result.detail);
        failures += usize::from(!result.pass);
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
