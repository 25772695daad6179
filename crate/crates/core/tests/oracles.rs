//! Closed forms and solvers checked against independent finite-difference oracles.

use num_complex::Complex64;
use semiclassical::analytic::{coherent_fields, coherent_quantum_potential, linear_fields, CoherentScenario, LinearScenario};
use semiclassical::bohm::{velocity_field, AnalyticLinearVelocity, VelocityMode, VelocitySource};
use semiclassical::classical::{local_action_evolve, local_state};
use semiclassical::domain::{make_grid, prepare_wavefunction, CoherentPrep, GaussianPrep, PotentialSpec, Preparation, SystemParams};
use semiclassical::madelung::decompose;
use semiclassical::schrodinger::{evolve, PropagatorConfig};
use semiclassical::Vec3;

fn psi_of(f: impl Fn(&Vec3<f64>, f64) -> (f64, f64), hbar: f64) -> impl Fn(&Vec3<f64>, f64) -> Complex64 {
    move |x, t| {
        let (rho, s) = f(x, t);
        Complex64::from_polar(rho.sqrt(), s / hbar)
    }
}

/// Grid positions carry zeros on inactive axes.
fn active(mut x: Vec3<f64>, dim: usize) -> Vec3<f64> {
    x.iter_mut().skip(dim).for_each(|c| *c = 0.0);
    x
}

/// Relative residual of `i hbar psi_t = -hbar^2/2m lap psi + V psi` at `x`,
/// with fourth-order central differences in `t` and every active axis.
fn schrodinger_residual(
    psi: &impl Fn(&Vec3<f64>, f64) -> Complex64,
    params: &SystemParams<f64>,
    x: &Vec3<f64>,
    t: f64,
    ht: f64,
    hx: f64,
) -> f64 {
    let d1 = |f: &dyn Fn(f64) -> Complex64, h: f64| (f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h);
    let d2 = |f: &dyn Fn(f64) -> Complex64, h: f64| {
        (-f(-2.0 * h) + 16.0 * f(-h) - 30.0 * f(0.0) + 16.0 * f(h) - f(2.0 * h)) / (12.0 * h * h)
    };
    let psi_t = d1(&|d| psi(x, t + d), ht);
    let mut lap = Complex64::new(0.0, 0.0);
    for a in 0..params.dim {
        lap += d2(
            &|d| {
                let mut y = *x;
                y[a] += d;
                psi(&y, t)
            },
            hx,
        );
    }
    let (m, hbar) = (params.mass, params.hbar);
    let v = params.potential.value(x, m);
    let here = psi(x, t);
    let lhs = Complex64::new(0.0, hbar) * psi_t;
    let rhs = -hbar * hbar / (2.0 * m) * lap + v * here;
    (lhs - rhs).norm() / here.norm().max(1e-300)
}

fn linear_scenario(dim: usize, hbar: f64) -> LinearScenario<f64> {
    LinearScenario::new(
        GaussianPrep {
            zeta0: [0.2, -0.4, 0.1],
            sigma0: 0.9,
            v0: [0.5, 0.3, -0.2],
        },
        [0.5, -0.25, 0.4],
        1.3,
        hbar,
        dim,
    )
    .unwrap()
}

#[test]
fn linear_fields_solve_the_schrodinger_equation() {
    for dim in 1..=3 {
        for hbar in [1.0, 0.3] {
            let scen = linear_scenario(dim, hbar);
            let psi = psi_of(|x, t| linear_fields(x, t, &scen), hbar);
            for (x, t) in [([0.5, 0.1, -0.3], 0.7), ([-0.4, 0.6, 0.2], 1.9)] {
                let x = active(x, dim);
                let r = schrodinger_residual(&psi, &scen.params, &x, t, 1e-3, 1e-3);
                assert!(r < 1e-6, "dim {dim} hbar {hbar}: residual {r:e}");
            }
        }
    }
}

#[test]
fn coherent_fields_solve_the_schrodinger_equation() {
    for dim in 1..=3 {
        let scen = CoherentScenario::new(
            CoherentPrep {
                x0: [1.0, -0.5, 0.3],
                v0: [0.2, 0.5, -0.1],
                omega: 1.4,
            },
            0.8,
            0.5,
            dim,
        )
        .unwrap();
        let psi = psi_of(|x, t| coherent_fields(x, t, &scen), 0.5);
        for (x, t) in [([0.9, -0.2, 0.1], 0.4), ([0.3, 0.1, 0.4], 2.3)] {
            let x = active(x, dim);
            let r = schrodinger_residual(&psi, &scen.params, &x, t, 1e-2, 1e-3);
            assert!(r < 1e-5, "dim {dim}: residual {r:e}");
        }
    }
}

#[test]
fn coherent_quantum_potential_matches_finite_differences() {
    let scen = CoherentScenario::new(
        CoherentPrep {
            x0: [1.0, 0.0, 0.0],
            v0: [0.0, 0.5, 0.0],
            omega: 1.0,
        },
        1.0,
        0.25,
        2,
    )
    .unwrap();
    let (t, h) = (0.6, 1e-3);
    let amp = |x: &Vec3<f64>| coherent_fields(x, t, &scen).0.sqrt();
    for x in [[0.8, 0.4, 0.0], [0.2, 0.7, 0.0]] {
        let mut lap = 0.0;
        for a in 0..2 {
            let at = |d: f64| {
                let mut y = x;
                y[a] += d;
                amp(&y)
            };
            lap += (at(-h) - 2.0 * at(0.0) + at(h)) / (h * h);
        }
        let fd = -0.25 * 0.25 / 2.0 * lap / amp(&x);
        let q = coherent_quantum_potential(&x, t, &scen);
        assert!((fd - q).abs() < 1e-6, "{fd} vs {q}");
    }
}

#[test]
fn local_action_in_a_linear_potential() {
    // Along xi(t), g' = -m |xi'|^2 / 2 - V(xi) - m xi'' . xi = -m |v(t)|^2 / 2.
    let (m, k, v0, x0): (f64, Vec3<f64>, Vec3<f64>, Vec3<f64>) = (1.5, [0.4, -0.3, 0.0], [0.2, 0.6, 0.0], [1.0, -1.0, 0.0]);
    let params = SystemParams::new(m, 1.0, PotentialSpec::Linear { force: k }, 2).unwrap();
    let act = local_action_evolve(&x0, &v0, &params, 2.0, 1e-2).unwrap();
    for t in [0.37_f64, 1.0, 2.0] {
        let st = local_state(&act, t).unwrap();
        let g: f64 = (0..2)
            .map(|a| -0.5 * m * (v0[a] * v0[a] * t + v0[a] * k[a] * t * t / m + k[a] * k[a] * t.powi(3) / (3.0 * m * m)))
            .sum();
        assert!((st.g - g).abs() < 1e-10, "g({t}) = {} vs {g}", st.g);
        for a in 0..2 {
            let xi = x0[a] + v0[a] * t + k[a] * t * t / (2.0 * m);
            assert!((st.position[a] - xi).abs() < 1e-10);
        }
    }
}

#[test]
fn solver_tracks_the_exact_coherent_state() {
    let scen = CoherentScenario::new(
        CoherentPrep {
            x0: [1.0, 0.0, 0.0],
            v0: [0.0, 0.5, 0.0],
            omega: 1.0,
        },
        1.0,
        0.5,
        2,
    )
    .unwrap();
    let grid = make_grid(2, &[(-8.0, 8.0), (-8.0, 8.0)], &[128, 128]).unwrap();
    let psi0 = prepare_wavefunction(&Preparation::Coherent(scen.prep.clone()), &scen.params, &grid).unwrap();
    let out = evolve(&psi0, &scen.params, &PropagatorConfig::new(1e-3, 1000, 1000)).unwrap();
    let psi = out.last().unwrap();
    let f = decompose(psi, &scen.params).unwrap();
    let peak = f.rho.iter().copied().fold(0.0, f64::max);
    let worst = (0..grid.len())
        .map(|i| (f.rho[i] - coherent_fields(&grid.position(i), psi.time, &scen).0).abs())
        .fold(0.0, f64::max);
    assert!(worst / peak < 1e-6, "relative density error {:e}", worst / peak);
}

#[test]
fn solver_spin_velocity_matches_closed_form_fields() {
    let scen = LinearScenario::new(
        GaussianPrep {
            zeta0: [0.0; 3],
            sigma0: 1.0,
            v0: [0.4, 0.0, 0.0],
        },
        [0.0, 0.3, 0.0],
        1.0,
        1.0,
        2,
    )
    .unwrap();
    let mode = VelocityMode::SpinCurrent { axis: [0.0, 0.0, 1.0] };
    let grid = make_grid(2, &[(-12.0, 12.0), (-12.0, 12.0)], &[128, 128]).unwrap();
    let psi0 = prepare_wavefunction(&Preparation::Gaussian(scen.prep.clone()), &scen.params, &grid).unwrap();
    let out = evolve(&psi0, &scen.params, &PropagatorConfig::new(1e-3, 500, 500)).unwrap();
    let psi = out.last().unwrap();
    let fields = decompose(psi, &scen.params).unwrap();
    let vf = velocity_field(&fields, &scen.params, &mode).unwrap();
    let exact = AnalyticLinearVelocity::new(scen.clone(), mode).unwrap();
    let c = scen.center(psi.time);
    let mut worst: f64 = 0.0;
    for dx in [-1.5, 0.0, 1.0] {
        for dy in [-1.0, 0.5, 2.0] {
            let x = [c[0] + dx, c[1] + dy, 0.0];
            let node = grid.nearest_node(&x).unwrap();
            let p = grid.position(node);
            let v: Vec3<f64> = exact.velocity(&p, psi.time).unwrap();
            for a in 0..2 {
                worst = worst.max((vf.values[node][a] - v[a]).abs());
            }
        }
    }
    assert!(worst < 1e-6, "velocity error {worst:e}");
}
