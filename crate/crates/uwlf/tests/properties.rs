mod common;

use proptest::prelude::*;
use uwlf::degrade::{degrade, degrade_view, DegradationParams};
use uwlf::disparity::{wta_index, HypothesisRange};
use uwlf::enhance::{enhance_stage, estimate_beta_channel, invert_model, BetaFit, EnhanceConfig};
use uwlf::image::{fill_nearest, Image};
use uwlf::lightfield::{CameraRig, DepthMap, DisparityMap, LightField};
use uwlf::metrics::{psnr, ssim, uciqe, uiqm};

fn image(h: usize, w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0..=1.0f64, h * w * 3).prop_map(move |v| Image::from_vec(h, w, 3, v).unwrap())
}

fn depth(h: usize, w: usize, lo: f64, hi: f64) -> impl Strategy<Value = DepthMap> {
    prop::collection::vec(lo..hi, h * w).prop_map(move |v| DepthMap::new(h, w, v).unwrap())
}

fn params(max_beta: f64) -> impl Strategy<Value = DegradationParams> {
    (prop::array::uniform3(0.0..max_beta), prop::array::uniform3(0.0..=1.0f64), 0.0..0.05f64, any::<u64>()).prop_map(
        |(beta, background_light, noise_sigma, seed)| DegradationParams {
            beta,
            background_light,
            noise_sigma,
            seed,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degraded_values_stay_in_unit_range(img in image(6, 7), d in depth(6, 7, 0.1, 50.0), p in params(3.0)) {
        let out = degrade_view(&img, &d, &p, 3).unwrap();
        prop_assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_attenuation_without_noise_is_identity(img in image(5, 5), d in depth(5, 5, 0.1, 50.0), a in prop::array::uniform3(0.0..=1.0f64)) {
        let p = DegradationParams { beta: [0.0; 3], background_light: a, noise_sigma: 0.0, seed: 0 };
        let lf = LightField::from_views(1, 1, &[img.clone()]).unwrap();
        let out = degrade(&lf, &[d], &p).unwrap();
        prop_assert_eq!(out.as_slice(), img.as_slice());
    }

    #[test]
    fn inversion_undoes_noise_free_degradation(img in image(5, 6), d in depth(5, 6, 0.1, 6.0), mut p in params(0.5)) {
        p.noise_sigma = 0.0;
        let murky = degrade_view(&img, &d, &p, 0).unwrap();
        let back = invert_model(&murky, &d, p.beta, p.background_light, 1e-6);
        for (a, b) in back.as_slice().iter().zip(img.as_slice()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn inversion_output_is_finite_and_bounded(img in image(4, 4), d in depth(4, 4, 0.01, 1e4), p in params(50.0), t_min in 1e-9..1.0f64) {
        let out = invert_model(&img, &d, p.beta, p.background_light, t_min);
        prop_assert!(out.as_slice().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn enhancement_output_is_finite_and_bounded(
        views in prop::collection::vec(image(12, 12), 9),
        disp in prop::collection::vec(-1.5..1.5f64, 144),
    ) {
        let lf = LightField::from_views(3, 3, &views).unwrap();
        let rig = CameraRig::for_depth_range(1.5, 6.0, 12, 3.0).unwrap();
        let disparity = DisparityMap::dense(12, 12, disp).unwrap();
        let config = EnhanceConfig { stages: 1, ..Default::default() };
        let out = enhance_stage(&lf, &disparity, &rig, &config).unwrap();
        prop_assert!(out.as_slice().iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
    }

    #[test]
    fn attenuation_estimate_is_non_negative(img in image(12, 12), d in depth(12, 12, 0.5, 8.0), a in 0.0..=1.0f64, c in 0usize..3, robust in any::<bool>()) {
        let fit = if robust { BetaFit::RobustTrimmed } else { BetaFit::LeastSquares };
        if let Ok(beta) = estimate_beta_channel(&img, &d, c, a, fit) {
            prop_assert!(beta >= 0.0 && beta.is_finite());
        }
    }

    #[test]
    fn self_similarity_is_perfect(img in image(12, 13)) {
        prop_assert_eq!(psnr(&img, &img).unwrap(), 99.0);
        prop_assert!((ssim(&img, &img).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(a in image(11, 11), b in image(11, 11)) {
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&ab));
    }

    #[test]
    fn gray_images_score_zero(level in 0.0..=1.0f64) {
        let gray = Image::filled(16, 16, 3, level);
        prop_assert_eq!(uiqm(&gray), 0.0);
        prop_assert_eq!(uciqe(&gray), 0.0);
    }

    #[test]
    fn nearest_fill_copies_valid_values(
        values in prop::collection::vec(-5.0..5.0f64, 48),
        valid in prop::collection::vec(any::<bool>(), 48),
    ) {
        let mut filled = values.clone();
        let result = fill_nearest(&mut filled, &valid, 6, 8);
        if valid.iter().any(|&v| v) {
            prop_assert!(result.is_some());
            for i in 0..48 {
                if valid[i] {
                    prop_assert_eq!(filled[i], values[i]);
                } else {
                    prop_assert!((0..48).any(|j| valid[j] && values[j] == filled[i]));
                }
            }
        } else {
            prop_assert!(result.is_none());
        }
    }

    #[test]
    fn hypothesis_grid_is_ordered(min in -6.0..0.0f64, span in 0.0..8.0f64, step in 0.05..1.0f64) {
        let range = HypothesisRange { min, max: min + span, step };
        let v = range.values();
        prop_assert!(!v.is_empty());
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(v[0] >= min - step / 2.0 - 1e-9 && *v.last().unwrap() <= min + span + step / 2.0 + 1e-9);
    }

    #[test]
    fn winner_matches_sorted_order(costs in prop::collection::vec(prop::sample::select(vec![0.0, 0.25, 0.5, 1.0]), 9)) {
        let hyps: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.5).collect();
        prop_assert_eq!(wta_index(costs.iter().copied(), &hyps), common::naive_wta(&costs, &hyps));
    }

    #[test]
    fn depth_round_trip_any_rig(f in 1.0..100.0f64, b in 1e-3..1.0f64, s in 1.0..50.0f64, r in 16usize..4096, d in 0.01..1e3f64) {
        let rig = CameraRig::new(f, b, s, r).unwrap();
        let back = rig.depth_at(rig.disparity_at(d));
        prop_assert!(((back - d) / d).abs() <= 1e-9);
    }
}
