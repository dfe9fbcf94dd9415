use depth_align::gssa::apply_gssa;
use depth_align::solver::SolverConfig;
use depth_align::ssra::{
    apply_ssra, fit_ssra, fit_ssra_from, forward_model, ssra_cost, ForwardModel, NO_ROTATION,
    PARAM_COUNT,
};
use depth_align::synth::{perturb, render_scene, Camera, PerturbationSpec, Plane, SceneSpec};
use depth_align::{
    fit_gssa, pair_predictions, sample_points, DepthMap, Error, Mask, SamplePoint, ThetaParams,
};
use proptest::prelude::*;

const W: usize = 80;
const H: usize = 60;

fn theta_strategy() -> impl Strategy<Value = ThetaParams> {
    (
        0.3f64..3.0,
        -0.3f64..0.3,
        -0.3f64..0.3,
        -1.0f64..1.0,
        -10.0f64..10.0,
        -8.0f64..8.0,
        0.7f64..1.5,
    )
        .prop_map(|(s, theta, phi, t3, dx, dy, f)| ThetaParams {
            s,
            theta,
            phi,
            t3,
            cxp: W as f64 / 2.0 + dx,
            cyp: H as f64 / 2.0 + dy,
            fp: f * W as f64,
        })
}

fn paired(gt: &DepthMap, pred: &DepthMap, n: usize, seed: u64) -> Vec<SamplePoint> {
    let s = sample_points(gt, &Mask::full(gt.width(), gt.height()), n, seed).unwrap();
    pair_predictions(&s, pred).unwrap().into_points()
}

fn noisy_samples(n: usize, seed: u64) -> Vec<SamplePoint> {
    (0..n)
        .map(|k| {
            let u = (k * 7 + seed as usize) % 200;
            let v = (k * 13) % 150;
            let z_p = 0.5 + (k as f64 * 0.37).sin().abs() * 3.0;
            let wobble = ((k as f64 + seed as f64) * 1.7).cos() * 0.05;
            SamplePoint::paired(u, v, 1.4 * z_p + 0.3 + wobble, z_p)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn synthetic_round_trip_reproduces_depth(theta in theta_strategy(), seed in 0u64..1000) {
        let gt = render_scene(&SceneSpec::tabletop(W, H)).unwrap();
        let data = perturb(&gt, &PerturbationSpec::exact(theta), 0).unwrap();
        let pts = paired(&gt, &data.pred, 100, seed);
        let (fit, report) = fit_ssra(&pts, &SolverConfig::default(), (W, H)).unwrap();
        prop_assert!(report.final_cost <= report.init_cost);
        let out = apply_ssra(&data.pred, &fit).unwrap();
        let err = out.data().iter().zip(gt.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-6, "max error {err}");
    }

    #[test]
    fn cost_history_never_increases(seed in 0u64..500, n in 8usize..120) {
        let pts = noisy_samples(n, seed);
        let (_, r) = fit_ssra(&pts, &SolverConfig::default(), (200, 150)).unwrap();
        prop_assert_eq!(r.cost_history[0], r.init_cost);
        prop_assert_eq!(*r.cost_history.last().unwrap(), r.final_cost);
        for w in r.cost_history.windows(2) {
            prop_assert!(w[1] <= w[0], "{:?}", r.cost_history);
        }
    }

    #[test]
    fn frozen_rotation_matches_global_fit(
        seed in 0u64..500,
        n in 4usize..100,
        cxp in -300.0f64..600.0,
        cyp in -300.0f64..600.0,
        fp in 10.0f64..3000.0,
    ) {
        let pts = noisy_samples(n, seed);
        let g = fit_gssa(&pts).unwrap();
        let gssa_cost = g.cost(&pts).unwrap() / n as f64;
        let init = ThetaParams { s: 1.0, theta: 0.0, phi: 0.0, t3: 0.0, cxp, cyp, fp };
        let (fit, _) = fit_ssra_from(&pts, &SolverConfig::default(), init, NO_ROTATION).unwrap();
        prop_assert_eq!((fit.theta, fit.phi), (0.0, 0.0));
        prop_assert!((ssra_cost(&pts, &fit).unwrap() - gssa_cost).abs() < 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_central_differences(
        s in -3.0f64..3.0,
        theta in -1.5f64..1.5,
        phi in -1.5f64..1.5,
        t3 in -1.0f64..1.0,
        cxp in 100.0f64..500.0,
        cyp in 100.0f64..400.0,
        fp in 200.0f64..900.0,
        u in 0.0f64..640.0,
        v in 0.0f64..480.0,
        z in 0.1f64..5.0,
    ) {
        let p = ThetaParams { s, theta, phi, t3, cxp, cyp, fp };
        let analytic = ForwardModel::new(&p).unwrap().gradient(u, v, z);
        let x = p.to_vector();
        for i in 0..PARAM_COUNT {
            let h = 1e-6 * x[i].abs().max(1.0);
            let (mut hi, mut lo) = (x, x);
            hi[i] += h;
            lo[i] -= h;
            let f = |x| forward_model(u, v, z, &ThetaParams::from_vector(&x)).unwrap();
            let numeric = (f(hi) - f(lo)) / (2.0 * h);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
            prop_assert!((analytic[i] - numeric).abs() / scale < 1e-5, "param {i}: {} vs {numeric}", analytic[i]);
        }
    }
}

#[test]
fn unidentifiable_intrinsics_still_converge_to_global_depth() {
    // Unrotated truth leaves cxp, cyp and fp without any gradient.
    let (w, h) = (64, 48);
    let pred = DepthMap::new(
        w,
        h,
        (0..w * h)
            .map(|i| 0.5 + ((i * 2654435761) % 1000) as f64 / 400.0)
            .collect(),
    )
    .unwrap();
    let gt = pred.map_values(|_, _, z| 2.0 * z + 0.6);
    let pts = paired(&gt, &pred, 100, 3);
    for free_init in [(w as f64 / 2.0, h as f64 / 2.0, 64.0), (-50.0, 400.0, 5.0)] {
        let init = ThetaParams {
            s: 0.7,
            theta: 0.0,
            phi: 0.0,
            t3: -0.1,
            cxp: free_init.0,
            cyp: free_init.1,
            fp: free_init.2,
        };
        let (fit, report) =
            fit_ssra_from(&pts, &SolverConfig::default(), init, [true; PARAM_COUNT]).unwrap();
        assert!(report.converged, "{report:?}");
        let ours = apply_ssra(&pred, &fit).unwrap();
        let global = apply_gssa(&pred, fit_gssa(&pts).unwrap());
        let diff = ours
            .data()
            .iter()
            .zip(global.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }
}

#[test]
fn fronto_parallel_constant_depth_is_reported_degenerate() {
    let scene = SceneSpec {
        camera: Camera {
            width: 32,
            height: 24,
            fx: 30.0,
            fy: 30.0,
            cx: 16.0,
            cy: 12.0,
        },
        plane: Plane {
            normal: [0.0, 0.0, 1.0],
            offset: 1.5,
        },
        boxes: vec![],
    };
    let gt = render_scene(&scene).unwrap();
    assert!(gt.data().iter().all(|&z| (z - 1.5).abs() < 1e-12));
    let theta = ThetaParams::scale_shift(1.2, 0.1, (32, 24));
    let data = perturb(&gt, &PerturbationSpec::exact(theta), 0).unwrap();
    let pts = paired(&gt, &data.pred, 50, 0);
    assert!(matches!(
        fit_ssra(&pts, &SolverConfig::default(), (32, 24)),
        Err(Error::DegenerateDesign)
    ));
}

#[test]
fn strong_perspective_draws_converge_well_inside_the_iteration_budget() {
    use rand::{Rng, SeedableRng};
    let gt = render_scene(&SceneSpec::tabletop(W, H)).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(34);
    for k in 0..300 {
        let theta = ThetaParams {
            s: rng.gen_range(1.5..3.0),
            theta: rng.gen_range(-0.3..0.3),
            phi: rng.gen_range(-0.3..0.3),
            t3: rng.gen_range(-1.0..0.0),
            cxp: rng.gen_range(30.0..50.0),
            cyp: rng.gen_range(20.0..40.0),
            fp: rng.gen_range(56.0..90.0),
        };
        let data = perturb(&gt, &PerturbationSpec::exact(theta), 0).unwrap();
        let pts = paired(&gt, &data.pred, 100, k);
        let (fit, report) = fit_ssra(&pts, &SolverConfig::default(), (W, H)).unwrap();
        assert!(
            report.converged && report.iterations < 150,
            "draw {k}: {report:?}"
        );
        let out = apply_ssra(&data.pred, &fit).unwrap();
        let err = out
            .data()
            .iter()
            .zip(gt.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "draw {k}: {err}");
    }
}
