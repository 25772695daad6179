//! Fourth-order central finite differences on periodic grids.
//!
//! The `wrapped` variants difference a phase-like quantity modulo `period`,
//! so they are insensitive to `2 pi hbar` jumps left by unwrapping.

use crate::domain::Grid;
use crate::scalar::{Real, Vec3};

const C1: f64 = 8.0 / 12.0;
const C2: f64 = -1.0 / 12.0;

#[inline]
fn wrap<T: Real>(d: T, period: T) -> T {
    d - period * (d / period).round()
}

#[inline]
pub fn first_derivative<T: Real>(grid: &Grid<T>, values: &[T], flat: usize, axis: usize) -> T {
    let f = |o: isize| values[grid.neighbor(flat, axis, o)];
    (T::lit(C1) * (f(1) - f(-1)) + T::lit(C2) * (f(2) - f(-2))) / grid.spacing()[axis]
}

#[inline]
pub fn first_derivative_wrapped<T: Real>(
    grid: &Grid<T>,
    values: &[T],
    flat: usize,
    axis: usize,
    period: T,
) -> T {
    let c = values[flat];
    let d = |o: isize| wrap(values[grid.neighbor(flat, axis, o)] - c, period);
    (T::lit(C1) * (d(1) - d(-1)) + T::lit(C2) * (d(2) - d(-2))) / grid.spacing()[axis]
}

#[inline]
pub fn second_derivative<T: Real>(grid: &Grid<T>, values: &[T], flat: usize, axis: usize) -> T {
    let f = |o: isize| values[grid.neighbor(flat, axis, o)];
    let h = grid.spacing()[axis];
    (T::lit(-1.0 / 12.0) * (f(2) + f(-2)) + T::lit(16.0 / 12.0) * (f(1) + f(-1)) - T::lit(30.0 / 12.0) * f(0))
        / (h * h)
}

pub fn gradient<T: Real>(grid: &Grid<T>, values: &[T]) -> Vec<Vec3<T>> {
    (0..grid.len())
        .map(|i| {
            let mut g = [T::zero(); 3];
            for (axis, ga) in g.iter_mut().enumerate().take(grid.dim()) {
                *ga = first_derivative(grid, values, i, axis);
            }
            g
        })
        .collect()
}

pub fn gradient_wrapped<T: Real>(grid: &Grid<T>, values: &[T], period: T) -> Vec<Vec3<T>> {
    (0..grid.len())
        .map(|i| {
            let mut g = [T::zero(); 3];
            for (axis, ga) in g.iter_mut().enumerate().take(grid.dim()) {
                *ga = first_derivative_wrapped(grid, values, i, axis, period);
            }
            g
        })
        .collect()
}

pub fn divergence<T: Real>(grid: &Grid<T>, field: &[Vec3<T>]) -> Vec<T> {
    let mut comp = vec![T::zero(); grid.len()];
    let mut out = vec![T::zero(); grid.len()];
    for axis in 0..grid.dim() {
        for (c, v) in comp.iter_mut().zip(field) {
            *c = v[axis];
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = *o + first_derivative(grid, &comp, i, axis);
        }
    }
    out
}

pub fn laplacian<T: Real>(grid: &Grid<T>, values: &[T]) -> Vec<T> {
    (0..grid.len())
        .map(|i| (0..grid.dim()).map(|axis| second_derivative(grid, values, i, axis)).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    #[test]
    fn fourth_order_convergence() {
        let tau = std::f64::consts::TAU;
        let err = |n: usize| {
            let grid = make_grid::<f64>(1, &[(0.0, tau)], &[n]).unwrap();
            let f: Vec<f64> = grid.axis_coordinates(0).iter().map(|x| x.sin()).collect();
            (0..n)
                .map(|i| (first_derivative(&grid, &f, i, 0) - grid.coordinate(0, i).cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn wrapped_derivative_ignores_two_pi_jumps() {
        let grid = make_grid::<f64>(1, &[(-4.0, 4.0)], &[64]).unwrap();
        let period = std::f64::consts::TAU;
        let raw: Vec<f64> = grid.axis_coordinates(0).iter().map(|x| 1.5 * x).collect();
        let folded: Vec<f64> = raw.iter().map(|p| crate::scalar::wrap_angle(*p)).collect();
        for i in 3..60 {
            let d = first_derivative_wrapped(&grid, &folded, i, 0, period);
            assert!((d - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_exact_in_the_interior() {
        let grid = make_grid::<f64>(2, &[(-2.0, 2.0), (-2.0, 2.0)], &[16, 16]).unwrap();
        let f: Vec<f64> = (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                x[0] * x[0] + 3.0 * x[1] * x[1]
            })
            .collect();
        let lap = laplacian(&grid, &f);
        let i = grid.index([8, 8, 0]);
        assert!((lap[i] - 8.0).abs() < 1e-10);
    }
}
