//! Small fixed-size ODE integrators and adaptive quadrature.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[inline]
fn combine<T: Real, const N: usize>(y: &[T; N], h: T, terms: &[(T, &[T; N])]) -> [T; N] {
    let mut out = *y;
    for (c, k) in terms {
        for (o, ki) in out.iter_mut().zip(k.iter()) {
            *o = *o + h * *c * *ki;
        }
    }
    out
}

/// One classic fourth-order Runge-Kutta step.
pub fn rk4_step<T: Real, const N: usize, F>(f: &F, t: T, y: &[T; N], h: T) -> [T; N]
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    let half = T::lit(0.5);
    let k1 = f(t, y);
    let k2 = f(t + half * h, &combine(y, h, &[(half, &k1)]));
    let k3 = f(t + half * h, &combine(y, h, &[(half, &k2)]));
    let k4 = f(t + h, &combine(y, h, &[(T::one(), &k3)]));
    let sixth = T::one() / T::lit(6.0);
    let third = T::one() / T::lit(3.0);
    combine(y, h, &[(sixth, &k1), (third, &k2), (third, &k3), (sixth, &k4)])
}

/// Integrates from `t0` to `t1` with fixed-step RK4, shortening the last step.
pub fn rk4_integrate<T: Real, const N: usize, F>(f: &F, t0: T, y0: &[T; N], t1: T, h: T) -> [T; N]
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    let mut t = t0;
    let mut y = *y0;
    while t < t1 {
        let step = h.min(t1 - t);
        y = rk4_step(f, t, &y, step);
        t = t + step;
        if step < h {
            break;
        }
    }
    y
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince integration from `t0` to `t1` with mixed
/// absolute/relative tolerance `tol`.
pub fn dopri_integrate<T: Real, const N: usize, F>(
    f: &F,
    t0: T,
    y0: &[T; N],
    t1: T,
    tol: T,
    max_steps: usize,
) -> Result<[T; N]>
where
    F: Fn(T, &[T; N]) -> [T; N],
{
    let mut t = t0;
    let mut y = *y0;
    let span = t1 - t0;
    if span <= T::zero() {
        return Ok(y);
    }
    let mut h = span.min(T::lit(1e-2) * span.max(T::one()));
    let min_h = span * T::lit(1e-14);
    for _ in 0..max_steps {
        if t >= t1 {
            return Ok(y);
        }
        h = h.min(t1 - t);
        let mut k = [[T::zero(); N]; 7];
        k[0] = f(t, &y);
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = T::lit(A[s - 1][j]);
                for (yi, kji) in ys.iter_mut().zip(kj.iter()) {
                    *yi = *yi + h * a * *kji;
                }
            }
            k[s] = f(t + T::lit(C[s - 1]) * h, &ys);
        }
        let mut y5 = y;
        let mut err = T::zero();
        for i in 0..N {
            let mut d5 = T::zero();
            let mut d4 = T::zero();
            for s in 0..7 {
                d5 = d5 + T::lit(B5[s]) * k[s][i];
                d4 = d4 + T::lit(B4[s]) * k[s][i];
            }
            y5[i] = y[i] + h * d5;
            let scale = tol * (T::one() + y[i].abs().max(y5[i].abs()));
            err = err.max((h * (d5 - d4)).abs() / scale);
        }
        if !err.is_finite() {
            return Err(Error::Numerical("non-finite state in adaptive step".into()));
        }
        if err <= T::one() {
            t = t + h;
            y = y5;
        }
        let factor = if err == T::zero() {
            T::lit(5.0)
        } else {
            (T::lit(0.9) * err.powf(-T::lit(0.2))).max(T::lit(0.2)).min(T::lit(5.0))
        };
        h = h * factor;
        if h < min_h {
            return Err(Error::Numerical(format!("step size underflow at t = {t}")));
        }
    }
    Err(Error::Numerical(format!("adaptive integration exceeded {max_steps} steps")))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    fn recurse<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> T {
        let half = T::lit(0.5);
        let m = half * (a + b);
        let lm = half * (a + m);
        let rm = half * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let sixth = T::one() / T::lit(6.0);
        let left = (m - a) * sixth * (fa + T::lit(4.0) * flm + fm);
        let right = (b - m) * sixth * (fm + T::lit(4.0) * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
            return left + right + delta / T::lit(15.0);
        }
        recurse(f, a, m, fa, flm, fm, left, half * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, half * tol, depth - 1)
    }
    if a == b {
        return T::zero();
    }
    let fa = f(a);
    let fb = f(b);
    let m = T::lit(0.5) * (a + b);
    let fm = f(m);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}
