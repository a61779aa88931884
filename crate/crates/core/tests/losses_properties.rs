use proptest::prelude::*;

use flowpose::losses::{
    appearance_loss, consistency_loss, occlusion_mask, photometric_loss, smoothness_loss,
    total_warp_loss, warp_image, warp_loss_maps, LossConfig,
};
use flowpose::{ScalarImage, WarpField};

const W: usize = 12;
const H: usize = 9;

fn image() -> impl Strategy<Value = ScalarImage> {
    prop::collection::vec(0.0..1.0f64, W * H).prop_map(|d| ScalarImage::new(W, H, d).unwrap())
}

fn warp(scale: f64) -> impl Strategy<Value = WarpField> {
    (
        prop::collection::vec(-scale..scale, W * H),
        prop::collection::vec(-scale..scale, W * H),
    )
        .prop_map(|(u, v)| WarpField::new(W, H, u, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn maps_are_nonnegative(a in image(), b in image(), f in warp(3.0), g in warp(3.0)) {
        let cfg = LossConfig::default();
        let m = warp_loss_maps(&a, &b, &f, Some(&g), &cfg).unwrap();
        for v in m.photometric.values.iter()
            .chain(&m.appearance.values)
            .chain(&m.smoothness.values)
            .chain(&m.consistency.as_ref().unwrap().values)
        {
            prop_assert!(*v >= 0.0);
        }
        for i in 0..W * H {
            if m.occlusion.data[i] {
                prop_assert!(m.photometric.values[i] >= cfg.epsilon);
            }
        }
    }

    #[test]
    fn mirroring_everything_keeps_the_aggregates(a in image(), b in image(), f in warp(2.5), g in warp(2.5)) {
        let cfg = LossConfig::default();
        let (fa, fb) = (a.flip_horizontal(), b.flip_horizontal());
        let (ff, fg) = (f.flip_horizontal(), g.flip_horizontal());
        let t1 = total_warp_loss(&a, &b, &f, &g, &cfg).unwrap();
        let t2 = total_warp_loss(&fa, &fb, &ff, &fg, &cfg).unwrap();
        prop_assert!((t1 - t2).abs() <= 1e-9 * (1.0 + t1.abs()));

        let p1 = photometric_loss(&a, &b, &f, &cfg).unwrap().sum();
        let p2 = photometric_loss(&fa, &fb, &ff, &cfg).unwrap().sum();
        prop_assert!((p1 - p2).abs() <= 1e-9);
        let s1 = smoothness_loss(&f, &a, &cfg).unwrap().sum();
        let s2 = smoothness_loss(&ff, &fa, &cfg).unwrap().sum();
        prop_assert!((s1 - s2).abs() <= 1e-9);
        let c1 = consistency_loss(&f, &g, &cfg).unwrap().sum();
        let c2 = consistency_loss(&ff, &fg, &cfg).unwrap().sum();
        prop_assert!((c1 - c2).abs() <= 1e-9);
    }

    #[test]
    fn occlusion_is_the_complement_of_out_of_bounds(b in image(), f in warp(4.0)) {
        let (_, oob) = warp_image(&b, &f).unwrap();
        prop_assert_eq!(occlusion_mask(&f), oob.not());
    }

    #[test]
    fn smaller_epsilon_gives_smaller_total(a in image(), b in image(), f in warp(2.0), g in warp(2.0), e in 1e-4..1e-2f64) {
        let hi = LossConfig { epsilon: e, ..LossConfig::default() };
        let lo = LossConfig { epsilon: e * 0.5, ..LossConfig::default() };
        prop_assert!(total_warp_loss(&a, &b, &f, &g, &lo).unwrap() < total_warp_loss(&a, &b, &f, &g, &hi).unwrap());
    }

    #[test]
    fn appearance_at_alpha_one_is_photometric(a in image(), b in image(), f in warp(2.0)) {
        let cfg = LossConfig { alpha: 1.0, ..LossConfig::default() };
        let app = appearance_loss(&a, &b, &f, &cfg).unwrap();
        let photo = photometric_loss(&a, &b, &f, &cfg).unwrap();
        for (x, y) in app.values.iter().zip(&photo.values) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn identical_pair_with_zero_warp_hits_the_floor() {
    let img = ScalarImage::from_fn(W, H, |x, y| ((x * 7 + y * 3) % 11) as f64 / 10.0).unwrap();
    let cfg = LossConfig::default();
    let z = WarpField::zero(W, H);
    let m = warp_loss_maps(&img, &img, &z, Some(&z), &cfg).unwrap();
    assert!(m
        .photometric
        .values
        .iter()
        .all(|&v| (v - 1e-3).abs() < 1e-18));
    assert!(m.ssim.values.iter().all(|&v| v == 1.0));
    assert!(m.occlusion.data.iter().all(|&b| b));
}
