//! Dormand–Prince 5(4) with the standard fourth-order continuous extension.
//!
//! Works on fixed-size real state vectors; complex spinors are packed as
//! `[re_up, im_up, re_dn, im_dn]`. Integration may run backward in time.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Tolerances and step limits for the adaptive stepper.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

/// One Dormand–Prince step with everything needed for dense output.
#[derive(Debug, Clone)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    /// Weighted RMS error estimate (≤ 1 means acceptable).
    pub err: f64,
    cont: [[f64; N]; 3],
}

impl<const N: usize> Step<N> {
    /// Continuous extension at `t` within the step.
    pub fn interpolate(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        std::array::from_fn(|i| {
            let diff = self.y1[i] - self.y0[i];
            self.y0[i] + s * (diff + s1 * (self.cont[0][i] + s * (self.cont[1][i] + s1 * self.cont[2][i])))
        })
    }
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Takes a single step of size `h` from `(t, y)` given the slope `k1 = f(t, y)`.
/// Returns the step and the slope at its end (first-same-as-last).
pub fn dp_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    h: f64,
    tol: &Tolerances,
) -> Result<(Step<N>, [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = f(
        t + h,
        &axpy(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y1 = axpy(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y1)?;

    let mut err_sq = 0.0;
    let mut cont = [[0.0; N]; 3];
    for i in 0..N {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = tol.abs_tol + tol.rel_tol * y[i].abs().max(y1[i].abs());
        err_sq += (e / scale).powi(2);

        let diff = y1[i] - y[i];
        let bspl = h * k1[i] - diff;
        cont[0][i] = bspl;
        cont[1][i] = diff - h * k7[i] - bspl;
        cont[2][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    let step = Step {
        t0: t,
        h,
        y0: *y,
        y1,
        err: (err_sq / N as f64).sqrt(),
        cont,
    };
    Ok((step, k7))
}

fn initial_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k1: &[f64; N],
    dir: f64,
    tol: &Tolerances,
) -> Result<f64>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    // Hairer–Wanner starting step heuristic.
    let scale = |i: usize| tol.abs_tol + tol.rel_tol * y[i].abs();
    let norm = |v: &[f64; N]| ((0..N).map(|i| (v[i] / scale(i)).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d0 = norm(y);
    let d1 = norm(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(tol.max_step);
    let y1 = axpy(y, dir * h0, &[(1.0, k1)]);
    let k2 = f(t + dir * h0, &y1)?;
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = k2[i] - k1[i];
    }
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1).min(tol.max_step))
}

/// Adaptive integration from `t0` to `t1`, calling `on_step` for every
/// accepted step in order.
pub fn integrate_adaptive<const N: usize, F, G>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    tol: &Tolerances,
    mut on_step: G,
) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    G: FnMut(&Step<N>) -> Result<()>,
{
    if t1 == t0 {
        return Ok(y0);
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    let mut h = initial_step(&mut f, t, &y, &k1, dir, tol)?;
    let mut rejected_last = false;
    loop {
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };
        if h_try < 1e-14 * t.abs().max(1.0) && !last {
            return Err(Error::StepSizeUnderflow { t, h: h_try });
        }
        let (step, k7) = dp_step(&mut f, t, &y, &k1, dir * h_try, tol)?;
        let err = step.err;
        if !err.is_finite() {
            return Err(Error::StepSizeUnderflow { t, h: h_try });
        }
        if err <= 1.0 {
            let mut fac = if err == 0.0 { FAC_MAX } else { SAFETY * err.powf(-0.2) };
            fac = fac.clamp(FAC_MIN, FAC_MAX);
            if rejected_last {
                fac = fac.min(1.0);
            }
            on_step(&step)?;
            t = if last { t1 } else { t + dir * h_try };
            y = step.y1;
            k1 = k7;
            if last {
                return Ok(y);
            }
            h = (h_try * fac).min(tol.max_step);
            rejected_last = false;
        } else {
            h = h_try * (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            rejected_last = true;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepSizeUnderflow { t, h });
            }
        }
    }
}

/// Number of equal steps of size at most `h` covering `span`, ignoring
/// rounding in the ratio.
pub fn step_count(span: f64, h: f64) -> usize {
    ((span.abs() / h) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Fixed-step Dormand–Prince (error estimate ignored), landing exactly on `t1`.
pub fn integrate_fixed<const N: usize, F>(mut f: F, t0: f64, y0: [f64; N], t1: f64, h: f64) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let n = step_count(span, h);
    let dt = span / n as f64;
    let tol = Tolerances {
        rel_tol: 1.0,
        abs_tol: 1.0,
        max_step: f64::INFINITY,
    };
    let mut y = y0;
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        let k1 = f(t, &y)?;
        y = dp_step(&mut f, t, &y, &k1, dt, &tol)?.0.y1;
    }
    Ok(y)
}
