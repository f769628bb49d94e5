//! Bessel functions of the first kind and their positive zeros.
//!
//! `J_m(x)` is evaluated by the ascending series where its terms do not
//! cancel (`x^2/4 <= m + 1`) and by Miller's backward recurrence elsewhere,
//! normalised with `J_0 + 2 sum J_{2k} = 1`. Zeros are bracketed by a sign
//! scan and polished with a safeguarded Newton iteration.

use crate::error::{HmError, Result};

/// Largest supported order for [`bessel_zero`].
pub const MAX_ORDER: u32 = 60;
/// Largest supported zero index for [`bessel_zero`].
pub const MAX_ZERO_INDEX: u32 = 200;

const RESCALE_ABOVE: f64 = 1e250;
const RESCALE_BY: f64 = 1e-250;

fn series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for i in 1..=m {
        lead *= half / f64::from(i);
    }
    let q = -half * half;
    let mut term = lead;
    let mut sum = lead;
    for k in 1..200u32 {
        term *= q / (f64::from(k) * f64::from(k + m));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `J_0(x), ..., J_max_order(x)` for `x >= 0` by Miller's algorithm.
pub fn bessel_j_upto(max_order: u32, x: f64) -> Vec<f64> {
    let len = max_order as usize + 1;
    let mut out = vec![0.0; len];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = f64::from(max_order).max(x);
    let mut start = (top + 30.0 + (50.0 * top).sqrt()).ceil() as usize;
    start += start % 2;

    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-30; // J_k
    let mut norm = 0.0;
    let two_over_x = 2.0 / x;
    for k in (1..=start).rev() {
        if k < len {
            out[k] = cur;
        }
        if k % 2 == 0 {
            norm += 2.0 * cur;
        }
        let prev = k as f64 * two_over_x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > RESCALE_ABOVE {
            cur *= RESCALE_BY;
            next *= RESCALE_BY;
            norm *= RESCALE_BY;
            for v in out.iter_mut().skip(k.min(len)) {
                *v *= RESCALE_BY;
            }
        }
    }
    out[0] = cur;
    norm += cur;
    for v in &mut out {
        *v /= norm;
    }
    out
}

/// `J_m(x)` for integer order `m >= 0` and `x >= 0`.
pub fn bessel_j(m: u32, x: f64) -> f64 {
    if x * x * 0.25 <= f64::from(m + 1) {
        series(m, x)
    } else {
        bessel_j_upto(m, x)[m as usize]
    }
}

/// `J_{m+o}(x)` for `o` in `-2..=2`, using `J_{-n} = (-1)^n J_n`.
pub(crate) fn bessel_j_window(m: u32, x: f64) -> [f64; 5] {
    let top = m + 2;
    let table: Vec<f64> = if x * x * 0.25 <= f64::from(m + 1) {
        (0..=top).map(|k| series(k, x)).collect()
    } else {
        bessel_j_upto(top, x)
    };
    let at = |o: i64| -> f64 {
        let k = i64::from(m) + o;
        if k >= 0 {
            table[k as usize]
        } else {
            let v = table[(-k) as usize];
            if k % 2 == 0 {
                v
            } else {
                -v
            }
        }
    };
    [at(-2), at(-1), at(0), at(1), at(2)]
}

/// Value, first and second derivative of `J_m` at `x`.
pub(crate) fn bessel_j_derivs(m: u32, x: f64) -> (f64, f64, f64) {
    let w = bessel_j_window(m, x);
    let d1 = 0.5 * (w[1] - w[3]);
    let d2 = 0.25 * (w[0] - 2.0 * w[2] + w[4]);
    (w[2], d1, d2)
}

fn derivative(m: u32, x: f64) -> f64 {
    bessel_j_derivs(m, x).1
}

fn refine_zero(m: u32, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = bessel_j(m, lo);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let f = bessel_j(m, x);
        if f == 0.0 {
            return x;
        }
        if (f > 0.0) == (f_lo > 0.0) {
            lo = x;
        } else {
            hi = x;
        }
        let d = derivative(m, x);
        let mut cand = x - f / d;
        if !(cand > lo && cand < hi) || !cand.is_finite() {
            cand = 0.5 * (lo + hi);
        }
        let step = (cand - x).abs();
        x = cand;
        if step <= 1e-15 * x.max(1.0) || hi - lo <= 1e-14 * x.max(1.0) {
            break;
        }
    }
    x
}

/// All positive zeros of `J_m` that are `<= x_max`, ascending.
pub fn bessel_zeros_below(m: u32, x_max: f64) -> Vec<f64> {
    zeros_scan(m, |x, _| x <= x_max)
}

fn zeros_scan(m: u32, mut keep_going: impl FnMut(f64, usize) -> bool) -> Vec<f64> {
    // consecutive zeros are more than 2.9 apart for every order, and
    // J_m > 0 on (0, j_{m,1}) with j_{m,1} > m
    const STEP: f64 = 1.0;
    let mut zeros = Vec::new();
    let mut a = f64::from(m).max(1e-3);
    let mut fa = bessel_j(m, a);
    loop {
        let b = a + STEP;
        let fb = bessel_j(m, b);
        if fa == 0.0 && a > 1e-3 {
            if !keep_going(a, zeros.len()) {
                break;
            }
            zeros.push(a);
        } else if (fa > 0.0) != (fb > 0.0) && fb != 0.0 {
            let z = refine_zero(m, a, b);
            if !keep_going(z, zeros.len()) {
                break;
            }
            zeros.push(z);
        }
        a = b;
        fa = fb;
    }
    zeros
}

/// The `k`-th positive zero `j_{m,k}` of `J_m` (`k` is 1-based).
pub fn bessel_zero(m: u32, k: u32) -> Result<f64> {
    if m > MAX_ORDER || k == 0 || k > MAX_ZERO_INDEX {
        return Err(HmError::Range(format!(
            "bessel zero (m={m}, k={k}) outside m <= {MAX_ORDER}, 1 <= k <= {MAX_ZERO_INDEX}"
        )));
    }
    let want = k as usize;
    let zeros = zeros_scan(m, |_, found| found < want);
    Ok(zeros[want - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_zeros() {
        let cases = [
            (0, 1, 2.404825557695773),
            (1, 1, 3.831705970207512),
            (0, 2, 5.520078110286311),
        ];
        for (m, k, want) in cases {
            let got = bessel_zero(m, k).unwrap();
            assert!((got - want).abs() < 1e-12, "j_{m},{k} = {got}");
        }
    }

    #[test]
    fn out_of_range_is_an_error() {
        assert!(matches!(bessel_zero(61, 1), Err(HmError::Range(_))));
        assert!(matches!(bessel_zero(0, 0), Err(HmError::Range(_))));
        assert!(matches!(bessel_zero(0, 201), Err(HmError::Range(_))));
    }

    #[test]
    fn extreme_table_corner() {
        let a = bessel_zero(60, 1).unwrap();
        let b = bessel_zero(60, 2).unwrap();
        assert!(a > 60.0 && b > a + 2.9);
        assert!(bessel_j(60, a).abs() < 1e-13);
        let z = bessel_zero(0, 200).unwrap();
        // McMahon: (k - 1/4) pi - 1/(8 beta)
        let beta = 199.75 * std::f64::consts::PI;
        assert!((z - (beta + 1.0 / (8.0 * beta))).abs() < 1e-6);
    }

    #[test]
    fn series_and_recurrence_agree_on_overlap() {
        for m in [0u32, 1, 3, 10, 25] {
            for &x in &[0.5, 2.0, 5.0, 9.0] {
                let s = series(m, x);
                let r = bessel_j_upto(m, x)[m as usize];
                assert!((s - r).abs() < 1e-13, "m={m} x={x}: {s} vs {r}");
            }
        }
    }

    #[test]
    fn zeros_strictly_increase() {
        let z = bessel_zeros_below(3, 60.0);
        assert!(z.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(z.len(), bessel_zeros_below(3, 60.0).len());
    }
}
