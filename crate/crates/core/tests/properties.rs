use proptest::prelude::*;

use semiclassical::analytic::{linear_fields, LinearScenario};
use semiclassical::bohm::{sample_gaussian_prep, AnalyticLinearVelocity, VelocityMode, VelocitySource};
use semiclassical::domain::{make_grid, prepare_wavefunction, GaussianPrep, Preparation, SystemParams};
use semiclassical::lab::fit_order;
use semiclassical::madelung::{align_gauge, decompose, recompose};
use semiclassical::scalar::{cross3, dot3, masked};
use semiclassical::schrodinger::{evolve, norm, PropagatorConfig};
use semiclassical::stats::{ks_statistic, ks_two_sample};
use semiclassical::{Grid32, Vec3};

fn scenario(v0: f64, force: f64, sigma0: f64, hbar: f64) -> LinearScenario<f64> {
    LinearScenario::new(
        GaussianPrep {
            zeta0: [0.0; 3],
            sigma0,
            v0: [v0, 0.0, 0.0],
        },
        [force, 0.0, 0.0],
        1.0,
        hbar,
        1,
    )
    .unwrap()
}

fn vec3() -> impl Strategy<Value = Vec3<f64>> {
    [-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn propagation_conserves_norm(v0 in -1.0..1.0f64, force in -0.5..0.5f64, sigma0 in 0.7..1.5f64, hbar in 0.3..1.5f64) {
        let scen = scenario(v0, force, sigma0, hbar);
        let grid = make_grid(1, &[(-20.0, 20.0)], &[512]).unwrap();
        let psi0 = prepare_wavefunction(&Preparation::Gaussian(scen.prep.clone()), &scen.params, &grid).unwrap();
        let out = evolve(&psi0, &scen.params, &PropagatorConfig::new(1e-2, 50, 50)).unwrap();
        let n0 = norm(&psi0);
        let n1 = norm(out.last().unwrap());
        prop_assert!((n1 - n0).abs() < 1e-12 * n0, "{n0} -> {n1}");
    }

    #[test]
    fn decompose_then_recompose_is_identity(v0 in -2.0..2.0f64, sigma0 in 0.6..1.5f64, hbar in 0.2..1.5f64) {
        let scen = scenario(v0, 0.0, sigma0, hbar);
        let grid = make_grid(1, &[(-12.0, 12.0)], &[256]).unwrap();
        let psi = prepare_wavefunction(&Preparation::Gaussian(scen.prep.clone()), &scen.params, &grid).unwrap();
        let back = recompose(&decompose(&psi, &scen.params).unwrap(), &scen.params);
        let peak = psi.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in psi.values.iter().zip(&back.values) {
            prop_assert!((a - b).norm() <= 1e-12 * peak);
        }
    }

    #[test]
    fn whole_turns_of_action_are_invisible(turns in -5i64..5, hbar in 0.2..1.5f64) {
        let scen = scenario(0.7, 0.0, 1.0, hbar);
        let grid = make_grid(1, &[(-12.0, 12.0)], &[256]).unwrap();
        let psi = prepare_wavefunction(&Preparation::Gaussian(scen.prep.clone()), &scen.params, &grid).unwrap();
        let reference = decompose(&psi, &scen.params).unwrap();
        let mut shifted = reference.clone();
        let shift = turns as f64 * 2.0 * std::f64::consts::PI * hbar;
        shifted.action.iter_mut().for_each(|s| *s += shift);
        let a = recompose(&reference, &scen.params);
        let b = recompose(&shifted, &scen.params);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).norm() < 1e-9);
        }
        prop_assert_eq!(align_gauge(&mut shifted, &reference, hbar), turns);
        for (s, r) in shifted.action.iter().zip(&reference.action) {
            prop_assert!((s - r).abs() < 1e-9);
        }
    }

    #[test]
    fn closed_form_density_is_normalized(v0 in -1.0..1.0f64, force in -0.5..0.5f64, sigma0 in 0.7..1.5f64, hbar in 0.1..1.5f64, t in 0.0..2.0f64) {
        let scen = scenario(v0, force, sigma0, hbar);
        let n = 4001;
        let (lo, hi) = (-40.0, 40.0);
        let dx = (hi - lo) / (n - 1) as f64;
        let mass: f64 = (0..n).map(|i| linear_fields(&[lo + i as f64 * dx, 0.0, 0.0], t, &scen).0).sum::<f64>() * dx;
        prop_assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
    }

    #[test]
    fn spin_term_is_transverse(x in vec3(), t in 0.0..2.0f64, hbar in 0.2..1.5f64, k in vec3()) {
        prop_assume!(dot3(&k, &k) > 0.01);
        let len = dot3(&k, &k).sqrt();
        let axis = [k[0] / len, k[1] / len, k[2] / len];
        let scen = LinearScenario::new(
            GaussianPrep { zeta0: [0.1, -0.2, 0.3], sigma0: 1.0, v0: [0.5, 0.2, -0.1] },
            [0.0, 0.0, 0.4],
            1.0,
            hbar,
            3,
        )
        .unwrap();
        let std = AnalyticLinearVelocity::new(scen.clone(), VelocityMode::Standard).unwrap();
        let spin = AnalyticLinearVelocity::new(scen.clone(), VelocityMode::SpinCurrent { axis }).unwrap();
        let a = std.velocity(&x, t).unwrap();
        let b = spin.velocity(&x, t).unwrap();
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let c = scen.center(t);
        let r = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
        let scale = 1.0 + dot3(&d, &d).sqrt() * dot3(&r, &r).sqrt();
        prop_assert!(dot3(&d, &axis).abs() < 1e-12 * scale);
        prop_assert!(dot3(&d, &r).abs() < 1e-12 * scale);
    }

    #[test]
    fn fit_order_recovers_power_laws(order in 0.3..3.0f64, c in 1e-3..1e3f64, h0 in 0.5..2.0f64, ratio in 0.3..0.8f64) {
        let hbars: Vec<f64> = (0..6).map(|k| h0 * ratio.powi(k)).collect();
        let errors: Vec<f64> = hbars.iter().map(|h| c * h.powf(order)).collect();
        let fit = fit_order(&errors, &hbars).unwrap();
        prop_assert!((fit.order - order).abs() < 1e-9);
        prop_assert!(fit.ci < 1e-9);
        prop_assert_eq!(fit.points, 6);
    }

    #[test]
    fn ks_statistics_are_bounded_and_order_free(xs in prop::collection::vec(-5.0..5.0f64, 1..200), ys in prop::collection::vec(-5.0..5.0f64, 1..200)) {
        let cdf = |x: f64| ((x + 5.0) / 10.0).clamp(0.0, 1.0);
        let d = ks_statistic(&xs, cdf);
        prop_assert!(d >= 0.5 / xs.len() as f64 - 1e-15 && d <= 1.0);
        let mut rev = xs.clone();
        rev.reverse();
        prop_assert_eq!(d, ks_statistic(&rev, cdf));
        let d2 = ks_two_sample(&xs, &ys);
        prop_assert!((0.0..=1.0).contains(&d2));
        prop_assert_eq!(d2, ks_two_sample(&ys, &xs));
        prop_assert_eq!(ks_two_sample(&xs, &rev), 0.0);
    }

    #[test]
    fn cross_product_is_orthogonal(a in vec3(), b in vec3()) {
        let c = cross3(&a, &b);
        let scale = dot3(&a, &a) * dot3(&b, &b) + 1.0;
        prop_assert!(dot3(&a, &c).abs() < 1e-12 * scale);
        prop_assert!(dot3(&b, &c).abs() < 1e-12 * scale);
    }

    #[test]
    fn masking_keeps_active_axes(v in vec3(), dim in 1usize..=3) {
        let m = masked(v, dim);
        for a in 0..3 {
            prop_assert_eq!(m[a], if a < dim { v[a] } else { 0.0 });
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible(seed in any::<u64>(), n in 1usize..64) {
        let prep = GaussianPrep { zeta0: [0.0; 3], sigma0: 1.0, v0: [0.0; 3] };
        let a = sample_gaussian_prep(&prep, 2, n, seed);
        let b = sample_gaussian_prep(&prep, 2, n, seed);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn single_precision_propagation_runs() {
    let prep = GaussianPrep {
        zeta0: [0.0f32; 3],
        sigma0: 1.0,
        v0: [0.5, 0.0, 0.0],
    };
    let params = SystemParams::new(1.0f32, 1.0, semiclassical::domain::PotentialSpec::Free, 1).unwrap();
    let grid: Grid32 = make_grid(1, &[(-16.0, 16.0)], &[256]).unwrap();
    let psi0 = prepare_wavefunction(&Preparation::Gaussian(prep), &params, &grid).unwrap();
    let out = evolve(&psi0, &params, &PropagatorConfig::new(1e-2, 100, 100)).unwrap();
    let n1 = norm(out.last().unwrap());
    assert!((n1 - norm(&psi0)).abs() < 1e-5, "norm {n1}");
    let f = decompose(out.last().unwrap(), &params).unwrap();
    let centre = f.grid.nearest_node(&[0.5, 0.0, 0.0]).unwrap();
    let peak = f.rho.iter().copied().fold(0.0f32, f32::max);
    assert_eq!(f.rho[centre], peak);
}
