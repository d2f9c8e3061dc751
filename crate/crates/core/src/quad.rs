//! Numerical quadrature: adaptive Gauss–Kronrod for profile integrands and
//! Richardson-corrected trapezoid sums for sampled trajectories.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn kronrod<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64) -> Result<Piece> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut gauss = WG[3] * fc;
    let mut kron = WGK[7] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x)? + f(c + x)?;
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    Ok(Piece {
        a,
        b,
        value: kron * h,
        err: ((kron - gauss) * h).abs(),
    })
}

/// `∫_a^b f` to absolute accuracy `abs_tol`, by globally adaptive
/// G7–K15 bisection. Reversed limits give the negated integral.
pub fn integrate<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, abs_tol).map(|v| -v);
    }
    // Start from a few panels so that short-period integrands are resolved.
    let panels = 8;
    let mut heap = BinaryHeap::new();
    for i in 0..panels {
        let lo = a + (b - a) * i as f64 / panels as f64;
        let hi = if i + 1 == panels {
            b
        } else {
            a + (b - a) * (i + 1) as f64 / panels as f64
        };
        heap.push(kronrod(&mut f, lo, hi)?);
    }
    loop {
        let total_err: f64 = heap.iter().map(|p| p.err).sum();
        if total_err <= abs_tol {
            break;
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::GridTooCoarse(format!(
                "quadrature on [{a}, {b}] stalled at error {total_err:e}"
            )));
        }
        let worst = heap.pop().unwrap();
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(kronrod(&mut f, worst.a, mid)?);
        heap.push(kronrod(&mut f, mid, worst.b)?);
    }
    // Sum smallest first.
    Ok(heap.into_sorted_vec().iter().map(|p| p.value).sum())
}

fn trapezoid_sum(x: &[f64], g: &[f64], stride: usize, upto: usize) -> f64 {
    let mut sum = 0.0;
    let mut i = 0;
    while i + stride <= upto {
        sum += 0.5 * (g[i] + g[i + stride]) * (x[i + stride] - x[i]);
        i += stride;
    }
    sum
}

/// Integral of the last interval from the quadratic through the last three
/// samples of `g` and `x`, each treated as a function of the node index.
fn quadratic_tail(x: &[f64], g: &[f64]) -> f64 {
    let n = x.len();
    let (x0, x1, x2) = (x[n - 3], x[n - 2], x[n - 1]);
    let (g0, g1, g2) = (g[n - 3], g[n - 2], g[n - 1]);
    // Lagrange on s = 0, 1, 2; integrate g(s) x'(s) over s in [1, 2].
    let gq = |s: f64| 0.5 * (s - 1.0) * (s - 2.0) * g0 - s * (s - 2.0) * g1 + 0.5 * s * (s - 1.0) * g2;
    let xd = |s: f64| (s - 1.5) * x0 - (2.0 * s - 2.0) * x1 + (s - 0.5) * x2;
    let r = 0.5 / 3f64.sqrt();
    let (s1, s2) = (1.5 - r, 1.5 + r);
    0.5 * (gq(s1) * xd(s1) + gq(s2) * xd(s2))
}

/// `∫ g dx` over sampled nodes: trapezoid sums with one Richardson step
/// against the every-other-node sum.
pub fn stieltjes(x: &[f64], g: &[f64]) -> f64 {
    assert_eq!(x.len(), g.len());
    let n = x.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * (g[0] + g[1]) * (x[1] - x[0]),
        _ => {
            let intervals = n - 1;
            let even = intervals - intervals % 2;
            let fine = trapezoid_sum(x, g, 1, even);
            let coarse = trapezoid_sum(x, g, 2, even);
            let head = fine + (fine - coarse) / 3.0;
            if even == intervals {
                head
            } else {
                head + quadratic_tail(x, g)
            }
        }
    }
}
