//! Tensor-product Catmull-Rom interpolation on periodic grids.

use crate::domain::Grid;
use crate::scalar::{Real, Vec3};

/// Stencil for one axis: four node indices and their weights (value and d/dx).
#[derive(Clone, Copy)]
struct AxisStencil<T> {
    nodes: [usize; 4],
    w: [T; 4],
    dw: [T; 4],
}

fn axis_stencil<T: Real>(grid: &Grid<T>, axis: usize, x: T) -> AxisStencil<T> {
    let n = grid.points()[axis];
    let h = grid.spacing()[axis];
    let s = (x - grid.lower()[axis]) / h;
    let base = s.floor();
    let u = s - base;
    let base = base.to_i64().unwrap_or(0);
    let n_i = n as i64;
    let mut nodes = [0usize; 4];
    for (k, node) in nodes.iter_mut().enumerate() {
        *node = (base - 1 + k as i64).rem_euclid(n_i) as usize;
    }
    let half = T::lit(0.5);
    let (u2, u3) = (u * u, u * u * u);
    let c = |a: f64, b: f64, c: f64, d: f64| {
        half * (T::lit(a) * u3 + T::lit(b) * u2 + T::lit(c) * u + T::lit(d))
    };
    let dc = |a: f64, b: f64, c: f64| half * (T::lit(a) * u2 + T::lit(b) * u + T::lit(c)) / h;
    AxisStencil {
        nodes,
        w: [
            c(-1.0, 2.0, -1.0, 0.0),
            c(3.0, -5.0, 0.0, 2.0),
            c(-3.0, 4.0, 1.0, 0.0),
            c(1.0, -1.0, 0.0, 0.0),
        ],
        dw: [
            dc(-3.0, 4.0, -1.0),
            dc(9.0, -10.0, 0.0),
            dc(-9.0, 8.0, 1.0),
            dc(3.0, -2.0, 0.0),
        ],
    }
}

fn stencils<T: Real>(grid: &Grid<T>, x: &Vec3<T>) -> [AxisStencil<T>; 3] {
    let trivial = AxisStencil {
        nodes: [0; 4],
        w: [T::one(), T::zero(), T::zero(), T::zero()],
        dw: [T::zero(); 4],
    };
    let mut out = [trivial; 3];
    for (axis, st) in out.iter_mut().enumerate().take(grid.dim()) {
        *st = axis_stencil(grid, axis, x[axis]);
    }
    out
}

/// Interpolates `K` node-valued fields at `x`.
pub fn sample_many<T: Real, const K: usize>(grid: &Grid<T>, fields: [&[T]; K], x: &Vec3<T>) -> [T; K] {
    let st = stencils(grid, x);
    let reach = |axis: usize| if axis < grid.dim() { 4 } else { 1 };
    let mut out = [T::zero(); K];
    for a in 0..reach(0) {
        for b in 0..reach(1) {
            let wab = st[0].w[a] * st[1].w[b];
            for c in 0..reach(2) {
                let w = wab * st[2].w[c];
                let idx = grid.index([st[0].nodes[a], st[1].nodes[b], st[2].nodes[c]]);
                for (o, f) in out.iter_mut().zip(fields.iter()) {
                    *o = *o + w * f[idx];
                }
            }
        }
    }
    out
}

/// Interpolated value and gradient of one node-valued field at `x`.
pub fn sample_with_gradient<T: Real>(grid: &Grid<T>, values: &[T], x: &Vec3<T>) -> (T, Vec3<T>) {
    let st = stencils(grid, x);
    let reach = |axis: usize| if axis < grid.dim() { 4 } else { 1 };
    let mut value = T::zero();
    let mut grad = [T::zero(); 3];
    for a in 0..reach(0) {
        for b in 0..reach(1) {
            for c in 0..reach(2) {
                let f = values[grid.index([st[0].nodes[a], st[1].nodes[b], st[2].nodes[c]])];
                let (wa, wb, wc) = (st[0].w[a], st[1].w[b], st[2].w[c]);
                value = value + wa * wb * wc * f;
                grad[0] = grad[0] + st[0].dw[a] * wb * wc * f;
                grad[1] = grad[1] + wa * st[1].dw[b] * wc * f;
                grad[2] = grad[2] + wa * wb * st[2].dw[c] * f;
            }
        }
    }
    for g in grad.iter_mut().skip(grid.dim()) {
        *g = T::zero();
    }
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    #[test]
    fn reproduces_node_values() {
        let grid = make_grid::<f64>(2, &[(-1.0, 1.0), (0.0, 2.0)], &[16, 8]).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        for i in (0..grid.len()).step_by(7) {
            let [v] = sample_many(&grid, [&vals], &grid.position(i));
            assert!((v - vals[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn cubic_is_accurate_for_smooth_periodic_data() {
        let grid = make_grid::<f64>(1, &[(0.0, std::f64::consts::TAU)], &[64]).unwrap();
        let vals: Vec<f64> = grid.axis_coordinates(0).iter().map(|x| x.sin()).collect();
        for k in 0..50 {
            let x = 0.123 * k as f64;
            let (v, g) = sample_with_gradient(&grid, &vals, &[x, 0.0, 0.0]);
            assert!((v - x.sin()).abs() < 1e-4, "value at {x}");
            assert!((g[0] - x.cos()).abs() < 5e-3, "slope at {x}");
        }
    }

    #[test]
    fn quadratics_are_exact_away_from_the_seam() {
        // Catmull-Rom reproduces polynomials up to degree two.
        let grid = make_grid::<f64>(1, &[(-4.0, 4.0)], &[32]).unwrap();
        let vals: Vec<f64> = grid.axis_coordinates(0).iter().map(|x| 1.0 + 2.0 * x - 0.5 * x * x).collect();
        for k in 0..20 {
            let x = -2.0 + 0.2 * k as f64 + 0.013;
            let (v, g) = sample_with_gradient(&grid, &vals, &[x, 0.0, 0.0]);
            assert!((v - (1.0 + 2.0 * x - 0.5 * x * x)).abs() < 1e-12);
            assert!((g[0] - (2.0 - x)).abs() < 1e-12);
        }
    }
}
