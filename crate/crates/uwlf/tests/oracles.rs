mod common;

use common::*;
use uwlf::disparity::{build_cost_volume, wta_disparity, wta_index, HypothesisRange, SubLf, SubLfKind};
use uwlf::image::Image;
use uwlf::lightfield::*;
use uwlf::metrics::{disparity_error_masked, psnr, ssim};
use uwlf::scene::{render_lf, Geometry, LayerSpec, Rect, SceneSpec, TextureKind};

fn plane_scene(size: usize, layers: Vec<LayerSpec>) -> SceneSpec {
    SceneSpec {
        height: size,
        width: size,
        seed: 21,
        unit: LengthUnit::Meter,
        layers,
    }
}

fn noise_layer(geometry: Geometry) -> LayerSpec {
    LayerSpec {
        geometry,
        texture: TextureKind::ValueNoise { scale: 3.0, octaves: 2 },
    }
}

#[test]
fn disparity_hand_value() {
    let rig = CameraRig::new(35.0, 0.1, 32.0, 512).unwrap();
    assert_eq!(rig.disparity_at(10.0), 5.6);
}

#[test]
fn depth_disparity_round_trip() {
    for (f, b, s, r) in [(35.0, 0.1, 32.0, 512), (8.0, 0.004, 6.4, 256), (50.0, 0.25, 36.0, 1024)] {
        let rig = CameraRig::new(f, b, s, r).unwrap();
        for i in 0..200 {
            let depth = 0.05 * 1.07f64.powi(i);
            let back = rig.depth_at(rig.disparity_at(depth));
            assert!(((back - depth) / depth).abs() <= 1e-9, "{depth} -> {back}");
        }
        let depth = DepthMap::new(1, 4, vec![0.5, 2.0, 9.0, 40.0]).unwrap();
        let disp = disparity_from_depth(&rig, &depth);
        let back = depth_from_disparity(&rig, &disp, DEFAULT_MIN_DISPARITY);
        for (a, b) in depth.values().iter().zip(&back.values) {
            assert!(((a - b) / a).abs() <= 1e-9);
        }
    }
}

#[test]
fn rendered_plane_epi_slope_matches_disparity() {
    let size = 64;
    let rig = CameraRig::for_depth_range(1.5, 6.0, size, 4.0).unwrap();
    for depth in [1.6, 2.4, 3.5, 5.5] {
        let spec = plane_scene(size, vec![noise_layer(Geometry::Plane { depth, footprint: None })]);
        let lf = render_lf(&spec, &rig, (5, 5)).unwrap().lf;
        let expected = rig.disparity_at(depth) - rig.zero_parallax;
        for (orientation, fixed) in [(EpiOrientation::Horizontal, 2), (EpiOrientation::Vertical, 2)] {
            for line in [20, 32, 44] {
                let slope = lf.epi(orientation, fixed, line).unwrap().fit_slope(6.0, 12);
                assert!(
                    (slope - expected).abs() <= 0.05,
                    "depth {depth}: slope {slope} vs {expected} ({orientation:?} {line})"
                );
            }
        }
    }
}

#[test]
fn rendered_depth_matches_z_buffer() {
    let size = 48;
    let rig = CameraRig::for_depth_range(1.5, 6.0, size, 4.0).unwrap();
    let rect = |x0, y0, x1, y1| Some(Rect { x0, y0, x1, y1 });
    let planes = [(5.8, None), (3.0, rect(8.0, 10.0, 30.0, 40.0)), (1.7, rect(20.0, 5.0, 41.0, 22.0))];
    let spec = plane_scene(
        size,
        planes
            .iter()
            .map(|&(depth, footprint)| noise_layer(Geometry::Plane { depth, footprint }))
            .collect(),
    );
    let rendered = render_lf(&spec, &rig, (3, 3)).unwrap();
    let dims = rendered.lf.dims();
    let k = rig.disparity_scale();
    for (v, u) in dims.angular_indices() {
        let (dv, du) = dims.offset(v, u);
        let depth = &rendered.depths[v * dims.cols + u];
        for y in 0..size {
            for x in 0..size {
                let expected = planes
                    .iter()
                    .filter(|(d, footprint)| {
                        let shift = k / d - rig.zero_parallax;
                        let (qy, qx) = (y as f64 - dv * shift, x as f64 - du * shift);
                        footprint.is_none_or(|r| qx >= r.x0 && qx < r.x1 && qy >= r.y0 && qy < r.y1)
                    })
                    .map(|(d, _)| *d)
                    .fold(f64::INFINITY, f64::min);
                let got = depth.get(y, x);
                assert!((got - expected).abs() <= 1e-12 * expected, "view ({v},{u}) pixel ({y},{x})");
            }
        }
    }
}

fn test_lf(size: usize, seed: u64) -> LightField {
    let views: Vec<Image> = (0..9)
        .map(|i| {
            let mut img = noise_image(size, size, seed + i);
            // a patch shared by all views, so hypotheses tie inside it
            for y in 4..10 {
                for x in 3..11 {
                    for c in 0..3 {
                        img.set(y, x, c, 0.4 + 0.1 * c as f64);
                    }
                }
            }
            img
        })
        .collect();
    LightField::from_views(3, 3, &views).unwrap()
}

#[test]
fn cost_volume_and_wta_match_brute_force() {
    for (size, seed) in [(16, 1), (12, 2), (16, 3)] {
        let lf = test_lf(size, seed * 100);
        for range in [
            HypothesisRange { min: -1.5, max: 1.5, step: 0.25 },
            HypothesisRange { min: -0.5, max: 0.5, step: 1.0 },
        ] {
            let hyps = range.values();
            for kind in SubLfKind::ALL {
                let sub = SubLf::new(lf.dims(), kind);
                let cv = build_cost_volume(&lf, &sub, &hyps).unwrap();
                let est = wta_disparity(&cv);
                for y in 0..size {
                    for x in 0..size {
                        let pixel = y * size + x;
                        let naive: Vec<f64> = hyps.iter().map(|&d| naive_cost(&lf, &sub.views, d, y, x)).collect();
                        for (h, n) in naive.iter().enumerate() {
                            assert!((cv.at(h, pixel) - n).abs() <= 1e-9);
                        }
                        let lib = wta_index((0..hyps.len()).map(|h| cv.at(h, pixel)), &hyps);
                        let want = naive_wta(&naive, &hyps);
                        assert_eq!(lib, want, "pixel ({y},{x}) {kind:?}");
                        let d = est.disparity.get(y, x);
                        assert!((d - hyps[want]).abs() <= 0.5 * range.step + 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn ties_resolve_toward_zero_then_negative() {
    let flat = LightField::from_views(3, 3, &vec![Image::filled(8, 8, 3, 0.3); 9]).unwrap();
    let sub = SubLf::new(flat.dims(), SubLfKind::HorizontalRow);
    let hyps = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let cv = build_cost_volume(&flat, &sub, &hyps).unwrap();
    for p in 0..64 {
        assert_eq!(wta_index((0..5).map(|h| cv.at(h, p)), &hyps), 2);
    }
    let hyps = [-0.5, 0.5];
    let cv = build_cost_volume(&flat, &sub, &hyps).unwrap();
    for p in 0..64 {
        assert_eq!(wta_index((0..2).map(|h| cv.at(h, p)), &hyps), 0);
    }
}

#[test]
fn psnr_and_ssim_match_brute_force() {
    for seed in 0..6u64 {
        let (h, w) = (11 + (seed as usize % 3) * 2, 16 - seed as usize % 2);
        let a = noise_image(h, w, seed);
        let mut b = a.clone();
        for (i, v) in b.as_mut_slice().iter_mut().enumerate() {
            *v = (*v + 0.2 * (uwlf::hash::unit(seed + 50, &[i as u64]) - 0.5)).clamp(0.0, 1.0);
        }
        let other = noise_image(h, w, seed + 99);
        for (x, y) in [(&a, &b), (&a, &other), (&a, &a)] {
            assert!((psnr(x, y).unwrap() - naive_psnr(x, y)).abs() <= 1e-9);
            assert!((ssim(x, y).unwrap() - naive_ssim(x, y)).abs() <= 1e-9);
        }
    }
}

#[test]
fn masked_disparity_error_matches_direct_sum() {
    let n = 16 * 16;
    let unit = |s: u64, i: usize| uwlf::hash::unit(s, &[i as u64]);
    let est = DisparityMap::new(16, 16, (0..n).map(|i| 2.0 * unit(1, i) - 1.0).collect(), (0..n).map(|i| unit(2, i) > 0.1).collect()).unwrap();
    let gt = DisparityMap::new(16, 16, (0..n).map(|i| 2.0 * unit(3, i) - 1.0).collect(), (0..n).map(|i| unit(4, i) > 0.2).collect()).unwrap();
    let mask: Vec<bool> = (0..n).map(|i| unit(5, i) > 0.3).collect();
    let used: Vec<usize> = (0..n).filter(|&i| est.valid()[i] && gt.valid()[i] && mask[i]).collect();
    let errs: Vec<f64> = used.iter().map(|&i| (est.values()[i] - gt.values()[i]).abs()).collect();
    let stats = disparity_error_masked(&est, &gt, Some(&mask)).unwrap();
    assert_eq!(stats.count, used.len());
    assert!((stats.mae - errs.iter().sum::<f64>() / errs.len() as f64).abs() <= 1e-12);
    let bad = errs.iter().filter(|&&e| e > 0.2).count() as f64 / errs.len() as f64;
    assert!((stats.badpix - bad).abs() <= 1e-12);
}
