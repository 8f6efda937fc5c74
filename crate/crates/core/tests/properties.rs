use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DVector;
use proptest::prelude::*;

use spectrolab::control::{
    heat_evolve, hum_control, observability_gramian, HumOptions, ImpulseSchedule, RetentionPolicy, TimeIntegration,
    TimeSet,
};
use spectrolab::extension::{extend, Region};
use spectrolab::sets::{fat_cantor_intervals, generate_set, hausdorff_content, ObservationSet, SetShape};
use spectrolab::specineq::spectral_constant_l2;
use spectrolab::{assemble, build_torus, cell_cover, eigendecompose, sample_coefficients, CoefficientSpec};
use spectrolab::SpectralDecomposition;

const N: usize = 32;

fn laplacian() -> &'static SpectralDecomposition {
    static DEC: OnceLock<SpectralDecomposition> = OnceLock::new();
    DEC.get_or_init(|| {
        let g = build_torus(1, 2.0 * PI, N).unwrap();
        let c = sample_coefficients(
            &CoefficientSpec::SmoothPeriodic {
                kappa_mean: 2.0,
                kappa_amplitude: 0.5,
                frequency: 1,
                metric_mean: 1.0,
                metric_amplitude: 0.2,
                metric_shear: 0.0,
            },
            &g,
        )
        .unwrap();
        eigendecompose(&assemble(&g, &c).unwrap()).unwrap()
    })
}

fn interval(dec: &SpectralDecomposition, start: f64, length: f64) -> ObservationSet {
    generate_set(&SetShape::Interval { start, length }.into(), dec.grid()).unwrap()
}

fn vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, N)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).map(|v| v.abs()).fold(1.0, f64::max);
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projector_is_an_orthogonal_idempotent(u in vector(), v in vector(), mu in 0.0f64..12.0) {
        let dec = laplacian();
        let pu = dec.project(mu, &u);
        prop_assert!(close(&dec.project(mu, &pu), &pu, 1e-12));
        let pv = dec.project(mu, &v);
        prop_assert!((dec.inner(&pu, &v) - dec.inner(&u, &pv)).abs() <= 1e-10 * (1.0 + dec.norm(&u) * dec.norm(&v)));
        prop_assert!(dec.norm(&pu) <= dec.norm(&u) * (1.0 + 1e-12));
    }

    #[test]
    fn heat_is_a_contraction_semigroup(u in vector(), s in 0.0f64..1.0, t in 0.0f64..1.0) {
        let dec = laplacian();
        let a = heat_evolve(dec, &heat_evolve(dec, &u, s).unwrap(), t).unwrap();
        let b = heat_evolve(dec, &u, s + t).unwrap();
        prop_assert!(close(&a, &b, 1e-11));
        prop_assert!(dec.norm(&b) <= dec.norm(&u) * (1.0 + 1e-12));
    }

    #[test]
    fn spectral_constant_is_monotone(mu in 1.0f64..8.0, extra in 0.0f64..4.0, len in 1.0f64..3.0, grow in 0.0f64..2.0) {
        let dec = laplacian();
        let small = interval(dec, 0.3, len);
        let big = interval(dec, 0.3, len + grow);
        prop_assume!(small.is_subset_of(&big));
        let c_small = spectral_constant_l2(dec, &small, mu).unwrap().constant;
        let c_big = spectral_constant_l2(dec, &big, mu).unwrap().constant;
        prop_assert!(c_big <= c_small * (1.0 + 1e-9));
        let c_higher = spectral_constant_l2(dec, &small, mu + extra).unwrap().constant;
        prop_assert!(c_small <= c_higher * (1.0 + 1e-9));
        prop_assert!(c_small >= 1.0 - 1e-12);
    }

    #[test]
    fn extension_is_odd_and_regions_nest(u in vector(), mu in 1.0f64..10.0) {
        let dec = laplacian();
        let f = extend(dec, &u, mu, 1.0, 6).unwrap();
        let last = f.times().len() - 1;
        for i in 0..=last {
            let neg: Vec<f64> = f.value(last - i).iter().map(|v| -v).collect();
            prop_assert!(close(f.value(i), &neg, 1e-12));
        }
        prop_assert!(f.value(f.zero_index()).iter().all(|v| v.abs() < 1e-14));
        let set = interval(dec, 0.0, 2.0);
        let cells = cell_cover(dec.grid(), PI / 2.0, PI / 4.0, 0.5, 1.0).unwrap();
        for c in &cells {
            let e = f.sup_gradient(&Region::E(c, &set));
            let k = f.sup_gradient(&Region::K(c)).value;
            let o = f.sup_gradient(&Region::Omega(c)).value;
            prop_assert!(e.empty || e.value <= k);
            prop_assert!(k <= o);
        }
    }

    #[test]
    fn gramian_is_symmetric_psd_and_dual(u in vector(), a in 0.0f64..0.4, len in 0.05f64..0.5) {
        let dec = laplacian();
        let set = interval(dec, 1.0, 2.0);
        let f = TimeSet::new(vec![(a, a + len)], 10).unwrap();
        let g = observability_gramian(dec, &set, &f, dec.len(), TimeIntegration::Trapezoid).unwrap();
        prop_assert!((&g.matrix - g.matrix.transpose()).abs().max() == 0.0);
        let c = dec.coefficients(&u);
        let w = dec.weight();
        let direct: f64 = f
            .quadrature()
            .iter()
            .map(|&(t, q)| {
                let v = heat_evolve(dec, &u, t).unwrap();
                q * set.nodes().iter().map(|&x| w[x] * v[x] * v[x]).sum::<f64>()
            })
            .sum();
        prop_assert!((g.quadratic_form(&c) - direct).abs() <= 1e-10 * direct.max(1e-300));
        prop_assert!(g.quadratic_form(&c) >= 0.0);
    }

    #[test]
    fn hum_cost_never_exceeds_the_dual_value(u in vector(), v in vector()) {
        let dec = laplacian();
        let set = interval(dec, 0.5, 2.5);
        let f = TimeSet::new(vec![(0.0, 0.3), (0.5, 0.8)], 16).unwrap();
        let opts = HumOptions { retention: RetentionPolicy::up_to(4.0), ..HumOptions::default() };
        let r = hum_control(dec, &set, &f, &u, &v, 1.0, opts).unwrap();
        prop_assert!(r.cost <= r.dual_value * (1.0 + 1e-9) + 1e-300);
        prop_assert!(r.success);
        for fq in &r.control {
            prop_assert!(fq.iter().enumerate().all(|(x, val)| set.contains(x) || *val == 0.0));
        }
    }

    #[test]
    fn geometric_schedules_are_valid(tau in 0.05f64..0.95, count in 1usize..10, d in 0.001f64..1.0) {
        let s = ImpulseSchedule::geometric(0.0, 1.0, tau, count, d).unwrap();
        prop_assert_eq!(s.impulse_times().len(), count);
        prop_assert!(s.times().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(*s.times().last().unwrap() < 1.0);
        prop_assert!(s.weights().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn fat_cantor_measure_is_closed_form(depth in 0usize..8, frac in 0.05f64..0.6) {
        let l = 2.0 * PI;
        let total: f64 = fat_cantor_intervals(l, depth, frac).iter().map(|(a, b)| b - a).sum();
        // level k removes frac / 2^(k-1) of every surviving interval
        let expected: f64 = (1..=depth).map(|k| 1.0 - frac / 2f64.powi(k as i32 - 1)).product::<f64>() * l;
        prop_assert!((total - expected).abs() <= 1e-12 * l);
    }

    #[test]
    fn content_bounds_bracket(start in 0.0f64..6.0, len in 0.3f64..3.0, order in 0.2f64..1.0) {
        let g = build_torus(1, 2.0 * PI, 256).unwrap();
        let set = generate_set(&SetShape::Interval { start, length: len }.into(), &g).unwrap();
        let est = hausdorff_content(&set, &g, order, 2.0).unwrap();
        prop_assert!(est.lower_bound <= est.upper_bound * (1.0 + 1e-12));
        prop_assert!(est.lower_bound > 0.0);
    }
}

#[test]
fn coefficients_roundtrip() {
    let dec = laplacian();
    let c = DVector::from_fn(N, |k, _| (k as f64 * 0.37).sin());
    let back = dec.coefficients(&dec.synthesize(&c));
    assert!((back - c).norm() < 1e-12);
}
