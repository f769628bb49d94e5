//! Reference computations that share no code with the library.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `J_m(x)` from Bessel's integral `(1/2π) ∫₀^{2π} cos(mτ - x sin τ) dτ`.
/// The integrand is smooth and periodic, so the trapezoidal rule converges
/// geometrically once the node count exceeds `x + m` by a margin.
pub fn bessel_j_integral(m: u32, x: f64) -> f64 {
    let n = 64 + 4 * (x.abs().ceil() as usize + m as usize);
    let h = 2.0 * PI / n as f64;
    let s: f64 = (0..n)
        .map(|k| {
            let t = k as f64 * h;
            (m as f64 * t - x * t.sin()).cos()
        })
        .sum();
    s / n as f64
}

/// First `count` positive zeros of `J_m`, bracketed by a sign scan of
/// [`bessel_j_integral`] and refined by plain bisection.
pub fn bessel_zeros_bisection(m: u32, count: usize) -> Vec<f64> {
    let f = |x: f64| bessel_j_integral(m, x);
    let step = 0.05;
    // every positive zero of J_m lies above m
    let mut a = (m as f64).max(step);
    let mut fa = f(a);
    let mut zeros = Vec::with_capacity(count);
    while zeros.len() < count {
        let b = a + step;
        let fb = f(b);
        if fa == 0.0 {
            zeros.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            zeros.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    zeros
}

fn gauss5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        0.0,
        0.538_469_310_105_683_1,
        -0.538_469_310_105_683_1,
        0.906_179_845_938_664,
        -0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    X.iter().zip(W).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

fn adaptive_rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    // below this width the Gauss nodes would round onto the endpoints
    if b - a < 1e-13 {
        return whole;
    }
    let left = gauss5(f, a, m);
    let right = gauss5(f, m, b);
    if depth == 0 || (left + right - whole).abs() <= tol {
        return left + right;
    }
    adaptive_rec(f, a, m, left, tol, depth - 1) + adaptive_rec(f, m, b, right, tol, depth - 1)
}

/// Adaptive bisection with 5-point Gauss panels; `tol` bounds the
/// estimated error of each accepted panel. Never samples the endpoints,
/// so integrable endpoint singularities are fine.
pub fn adaptive_integral(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let whole = gauss5(&f, a, b);
    adaptive_rec(&f, a, b, whole, tol, 60)
}

/// `∫₀^L sin(aπx/L) sin(bπx/L) cos(cπx/L) dx` for integer wavenumbers.
pub fn int_ssc(a: i64, b: i64, c: i64, len: f64) -> f64 {
    let cos_int = |k: i64| if k == 0 { len } else { 0.0 };
    0.25 * (cos_int(a - b - c) + cos_int(a - b + c) - cos_int(a + b - c) - cos_int(a + b + c))
}

/// `∫ e_i ∇⊥e_j · ∇e_l` on the square `[0, L]²` for the modes
/// `e = (2/L) sin(kx πx/L) sin(ky πy/L)`, with `∇⊥ = (-∂_y, ∂_x)`.
pub fn square_triad(i: (i64, i64), j: (i64, i64), l: (i64, i64), len: f64) -> f64 {
    let k = PI / len;
    let norm = (2.0 / len).powi(3);
    // -∫ e_i ∂_y e_j ∂_x e_l
    let t1 = -(l.0 as f64 * k) * int_ssc(i.0, j.0, l.0, len) * (j.1 as f64 * k) * int_ssc(i.1, l.1, j.1, len);
    // +∫ e_i ∂_x e_j ∂_y e_l
    let t2 = (j.0 as f64 * k) * int_ssc(i.0, l.0, j.0, len) * (l.1 as f64 * k) * int_ssc(i.1, j.1, l.1, len);
    norm * (t1 + t2)
}
