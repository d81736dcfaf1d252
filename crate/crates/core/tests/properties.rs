mod common;

use common::{close_slices, dims, relative_l2, rng};
use olat_relight::estimate::{estimate_field_iterative, estimate_field_ridge, EstimationConfig};
use olat_relight::gamma::{apply_dual_gamma, fit_dual_gamma_with, gamma_fit_residual, DualGamma, GammaFitConfig};
use olat_relight::imagecore::{apply_mask, load_image, pad_and_resize, save_image, ImageF, MaskImage};
use olat_relight::probe::{
    delta_footprints, mirrorball_to_latlong, nearest_pixel, project_environment, solid_angle_map, LatLongMap,
    LightingWeights, MirrorBall,
};
use olat_relight::relight::{
    reconstruction_loss, relight, rendering_loss, IdentityFeatures, LossWeights, ReflectanceField,
};
use olat_relight::stagesim::{
    fibonacci_directions, generate_dataset, render_env, render_olat, smooth_random_environment, SphereScene,
};
use proptest::prelude::*;
use rand::Rng;

fn small_dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..9, 1usize..9)
}

fn nonneg_f32() -> impl Strategy<Value = f32> {
    prop_oneof![Just(0.0f32), Just(f32::MAX), Just(f32::MIN_POSITIVE), 0.0f32..1e6]
}

proptest! {
    #[test]
    fn pfm_round_trip_is_bit_exact(w in 1usize..7, h in 1usize..7, values in prop::collection::vec(nonneg_f32(), 147)) {
        let d = dims(w, h);
        let img = ImageF::from_fn(d, |x, y| {
            let i = 3 * (y * w + x);
            [values[i] as f64, values[i + 1] as f64, values[i + 2] as f64]
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pfm");
        save_image(&img, &path).unwrap();
        prop_assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn pad_and_resize_at_target_size_is_identity((w, h) in small_dims(), seed in any::<u64>()) {
        let img = common::image(&mut rng(seed), dims(w, h));
        prop_assert_eq!(&pad_and_resize(&img, img.dims()), &img);
    }

    #[test]
    fn apply_mask_is_linear((w, h) in small_dims(), seed in any::<u64>(), a in 0.0f64..4.0, b in 0.0f64..4.0) {
        let mut r = rng(seed);
        let d = dims(w, h);
        let (x, y, m) = (common::image(&mut r, d), common::image(&mut r, d), common::mask(&mut r, d));
        let lhs = apply_mask(&x.scaled(a).add(&y.scaled(b)).unwrap(), &m).unwrap();
        let rhs = apply_mask(&x, &m).unwrap().scaled(a).add(&apply_mask(&y, &m).unwrap().scaled(b)).unwrap();
        prop_assert!(close_slices(lhs.data(), rhs.data(), 1e-12));
    }

    #[test]
    fn projection_is_linear(n in 1usize..6, seed in any::<u64>(), a in 0.0f64..5.0) {
        let mut r = rng(seed);
        let d = dims(16, 8);
        let fps: Vec<_> = (0..n)
            .map(|_| olat_relight::probe::footprint_from_probe(&common::env(&mut r, d)).unwrap())
            .collect();
        let (e1, e2) = (common::env(&mut r, d), common::env(&mut r, d));
        let combo = LatLongMap::new(e1.image().scaled(a).add(e2.image()).unwrap()).unwrap();
        let lhs = project_environment(&combo, &fps).unwrap();
        let rhs = project_environment(&e1, &fps).unwrap().scaled(a).add(&project_environment(&e2, &fps).unwrap()).unwrap();
        for (p, q) in lhs.as_slice().iter().zip(rhs.as_slice()) {
            prop_assert!(close_slices(p, q, 1e-12));
        }
    }

    #[test]
    fn delta_projection_samples_env(n in 1usize..20, seed in any::<u64>()) {
        let d = dims(32, 16);
        let dirs = fibonacci_directions(n);
        let env = common::env(&mut rng(seed), d);
        let w = project_environment(&env, &delta_footprints(&dirs, d).unwrap()).unwrap();
        for (k, &(t, p)) in dirs.iter().enumerate() {
            let (u, v) = nearest_pixel(d, t, p);
            prop_assert!(close_slices(&w.get(k), &env.radiance(u, v), 1e-12));
        }
    }

    #[test]
    fn constant_ball_unwraps_to_constant(size in 5usize..40, c in 0.0f64..10.0, height in 2usize..12) {
        let ball = MirrorBall::inscribed(ImageF::filled(dims(size, size), [c, 2.0 * c, 0.5])).unwrap();
        let map = mirrorball_to_latlong(&ball, dims(2 * height, height)).unwrap();
        prop_assert!(map.image().data().chunks_exact(3).all(|p| close_slices(p, &[c, 2.0 * c, 0.5], 1e-12)));
        let omega = solid_angle_map(map.dims()).unwrap();
        let energy: f64 = map.image().data().chunks_exact(3).zip(omega.values()).map(|(p, w)| p[1] * w).sum();
        prop_assert!(energy.is_finite());
    }

    #[test]
    fn gamma_fixes_endpoints(a in 0.2f64..=5.0, b in 0.2f64..=5.0) {
        let g = DualGamma::new(a, b).unwrap();
        prop_assert_eq!(g.eval(0.0), 0.0);
        prop_assert_eq!(g.eval(1.0), 1.0);
    }

    #[test]
    fn equal_exponents_are_a_power_law(g in 0.2f64..=5.0, i in 0.0f64..=1.0) {
        let curve = DualGamma::new(g, g).unwrap();
        prop_assert!((curve.eval(i) - i.powf(g)).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn gamma_is_in_range_and_clamps(a in 0.2f64..=5.0, b in 0.2f64..=5.0, seed in any::<u64>()) {
        let img = common::image(&mut rng(seed), dims(4, 3)).map(|v| 3.0 * v - 1.0);
        let out = apply_dual_gamma(&img, DualGamma::new(a, b).unwrap());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn relight_superposition(n in 1usize..6, (w, h) in small_dims(), seed in any::<u64>(), a in 0.0f64..3.0) {
        let mut r = rng(seed);
        let d = dims(w, h);
        let (f1, f2) = (common::field(&mut r, n, d), common::field(&mut r, n, d));
        let (w1, w2) = (common::weights(&mut r, n), common::weights(&mut r, n));
        let lhs = relight(&f1, &w1.scaled(a).add(&w2).unwrap()).unwrap();
        let rhs = relight(&f1, &w1).unwrap().scaled(a).add(&relight(&f1, &w2).unwrap()).unwrap();
        prop_assert!(close_slices(lhs.data(), rhs.data(), 1e-12));
        let sum = ReflectanceField::new(f1.olats().iter().zip(f2.olats()).map(|(x, y)| x.add(y).unwrap()).collect()).unwrap();
        let lhs = relight(&sum, &w1).unwrap();
        let rhs = relight(&f1, &w1).unwrap().add(&relight(&f2, &w1).unwrap()).unwrap();
        prop_assert!(close_slices(lhs.data(), rhs.data(), 1e-12));
    }

    #[test]
    fn losses_are_nonnegative_and_symmetric(n in 1usize..4, (w, h) in small_dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = dims(w, h);
        let (a, b) = (common::field(&mut r, n, d), common::field(&mut r, n, d));
        let m = MaskImage::from_fn(d, |_, _| r.random_range(0.1..1.0));
        let fx = IdentityFeatures;
        let l = rendering_loss(a.olat(0), b.olat(0), &m, &fx).unwrap();
        prop_assert!(l > 0.0);
        prop_assert_eq!(rendering_loss(a.olat(0), a.olat(0), &m, &fx).unwrap(), 0.0);
        prop_assert_eq!(l, rendering_loss(b.olat(0), a.olat(0), &m, &fx).unwrap());
        prop_assert_eq!(reconstruction_loss(&a, &b, &m, &fx).unwrap(), reconstruction_loss(&b, &a, &m, &fx).unwrap());
    }

    #[test]
    fn unmasked_differences_cost_nothing((w, h) in (2usize..6, 1usize..6), seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = dims(w, h);
        let a = common::image(&mut r, d);
        let m = MaskImage::from_fn(d, |x, _| if x == 0 { 0.0 } else { 1.0 });
        let b = ImageF::from_fn(d, |x, y| if x == 0 { [9.0; 3] } else { a.pixel(x, y) });
        prop_assert_eq!(rendering_loss(&a, &b, &m, &IdentityFeatures).unwrap(), 0.0);
    }

    #[test]
    fn ridge_is_stationary(n in 1usize..6, (w, h) in small_dims(), seed in any::<u64>(), lambda in 0.001f64..2.0) {
        let mut r = rng(seed);
        let d = dims(w, h);
        let (frame, wt, r0, mask) = (common::image(&mut r, d), common::weights(&mut r, n), common::field(&mut r, n, d), common::mask(&mut r, d));
        let est = estimate_field_ridge(&frame, &wt, &r0, &mask, lambda).unwrap();
        let relit = relight(&est, &wt).unwrap();
        for p in 0..d.pixel_count() {
            for c in 0..3 {
                let idx = 3 * p + c;
                let res = relit.data()[idx] - frame.data()[idx];
                for k in 0..n {
                    let g = mask.data()[p] * wt.get(k)[c] * res + lambda * (est.olat(k).data()[idx] - r0.olat(k).data()[idx]);
                    prop_assert!(g.abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn unregularized_ridge_fits_masked_pixels(n in 1usize..6, (w, h) in small_dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = dims(w, h);
        let (frame, wt, r0, mask) = (common::image(&mut r, d), common::weights(&mut r, n), common::field(&mut r, n, d), common::mask(&mut r, d));
        let est = estimate_field_ridge(&frame, &wt, &r0, &mask, 0.0).unwrap();
        let relit = relight(&est, &wt).unwrap();
        for p in (0..d.pixel_count()).filter(|&p| mask.data()[p] > 0.0) {
            prop_assert!(close_slices(&relit.data()[3 * p..3 * p + 3], &frame.data()[3 * p..3 * p + 3], 1e-12));
        }
        // masked-out pixels keep the prior
        for p in (0..d.pixel_count()).filter(|&p| mask.data()[p] == 0.0) {
            for k in 0..n {
                prop_assert_eq!(&est.olat(k).data()[3 * p..3 * p + 3], &r0.olat(k).data()[3 * p..3 * p + 3]);
            }
        }
    }

    #[test]
    fn one_hot_constraint_is_reproduced(n in 1usize..6, k in 0usize..6, seed in any::<u64>()) {
        let k = k % n;
        let mut r = rng(seed);
        let d = dims(5, 4);
        let (frame, r0) = (common::image(&mut r, d), common::field(&mut r, n, d));
        let w = LightingWeights::one_hot(n, k);
        let est = estimate_field_ridge(&frame, &w, &r0, &MaskImage::ones(d), 0.0).unwrap();
        let relit = relight(&est, &w).unwrap();
        prop_assert!(relit.data().iter().zip(frame.data()).all(|(a, b)| (a - b).abs() <= 2.0 * f64::EPSILON));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn iterative_trace_is_monotone(n in 1usize..4, seed in any::<u64>(), lambda in 0.01f64..1.0, l1 in 0.0f64..1.0) {
        let mut r = rng(seed);
        let d = dims(4, 3);
        let (frame, w, r0, mask, gt) = (
            common::image(&mut r, d),
            common::weights(&mut r, n),
            common::field(&mut r, n, d),
            common::mask(&mut r, d),
            common::field(&mut r, n, d),
        );
        let cfg = EstimationConfig { lambda_prior: lambda, iterations: 100, ..Default::default() };
        let est = estimate_field_iterative(&frame, &w, &r0, &mask, &cfg, Some(&gt), LossWeights::new(l1, 1.0).unwrap()).unwrap();
        prop_assert!(est.loss_trace.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn fitted_gamma_beats_identity(seed in any::<u64>(), a in 0.3f64..4.0, b in 0.3f64..4.0) {
        let mut r = rng(seed);
        let d = dims(6, 6);
        let (field, w) = (common::field(&mut r, 3, d), common::weights(&mut r, 3).scaled(0.3));
        let target = relight(&olat_relight::gamma::apply_dual_gamma_field(&field, DualGamma::new(a, b).unwrap()), &w).unwrap();
        let mask = MaskImage::ones(d);
        let cfg = GammaFitConfig::default();
        let fit = fit_dual_gamma_with(&field, &w, &target, &mask, &cfg).unwrap();
        prop_assert!(fit.residual <= gamma_fit_residual(&field, &w, &target, &mask, DualGamma::IDENTITY).unwrap() + 1e-15);
    }

    #[test]
    fn render_energy_bound(seed in any::<u64>(), ambient in 0.0f64..0.5, radius in 0.2f64..=1.0) {
        let scene = SphereScene::new([0.9, 0.4, 0.1], radius, dims(17, 17), [ambient; 3]).unwrap();
        let env = smooth_random_environment(seed, dims(16, 8)).unwrap();
        let omega = solid_angle_map(env.dims()).unwrap();
        let total: Vec<f64> = (0..3)
            .map(|c| env.image().data().chunks_exact(3).zip(omega.values()).map(|(p, w)| p[c] * w).sum())
            .collect();
        let img = render_env(&scene, &env).unwrap();
        for px in img.data().chunks_exact(3) {
            for c in 0..3 {
                prop_assert!(px[c] <= scene.albedo[c] * total[c] / std::f64::consts::PI + ambient + 1e-12);
            }
        }
    }

    #[test]
    fn olat_render_is_bounded(theta in 0.0f64..std::f64::consts::PI, phi in -3.1f64..3.1) {
        let scene = SphereScene::new([0.5, 0.6, 0.7], 0.7, dims(15, 15), [0.1; 3]).unwrap();
        let img = render_olat(&scene, theta, phi);
        prop_assert!(img.data().chunks_exact(3).all(|p| (0..3).all(|c| p[c] <= scene.albedo[c] + 0.1 + 1e-12)));
    }
}

#[test]
fn oracle_error_shrinks_with_basis_count() {
    let scene = SphereScene::new([0.8, 0.6, 0.4], 0.9, dims(48, 48), [0.0; 3]).unwrap();
    let env_dims = dims(64, 32);
    for seed in [1, 2, 3] {
        let env = smooth_random_environment(seed, env_dims).unwrap();
        let direct = render_env(&scene, &env).unwrap();
        let errors: Vec<f64> = [8, 41, 146]
            .iter()
            .map(|&n| {
                let ds = generate_dataset(&scene, &fibonacci_directions(n), env_dims).unwrap();
                let relit = relight(&ds.field, &project_environment(&env, &ds.footprints).unwrap()).unwrap();
                relative_l2(relit.data(), direct.data())
            })
            .collect();
        assert!(
            errors[0] > errors[1] && errors[1] > errors[2],
            "seed {seed}: {errors:?}"
        );
        assert!(errors[2] < 0.01, "{errors:?}");
    }
}

#[test]
fn gamma_curve_is_monotone_on_fine_grid_when_not_too_steep() {
    // Over the full box the curve is not monotone (see the unit tests); it is
    // whenever γ2 ≤ γ1 + 1.
    let steps: Vec<f64> = (0..=48).map(|i| (0.2 + i as f64 * 0.1).min(5.0)).collect();
    for &a in &steps {
        for &b in steps.iter().filter(|&&b| b <= a + 1.0) {
            let g = DualGamma::new(a, b).unwrap();
            let mut prev = 0.0;
            for i in 0..=1000 {
                let y = g.eval(i as f64 / 1000.0);
                assert!(y >= prev, "({a}, {b}) at {}", i as f64 / 1000.0);
                prev = y;
            }
        }
    }
}
