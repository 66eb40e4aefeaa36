use approx::assert_abs_diff_eq;
use fovea_core::composite::{
    blend_mask, combination_factor, compose, edge_factor, foveal_mask, smootherstep, tonemap,
};
use fovea_core::eval::{
    dssim, l1, psnr, regularizer_r, ssim, total_loss, FovealRegion, LossWeights, MetricRow,
    RegionShape, PSNR_CAP,
};
use fovea_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(w: usize, h: usize, seed: u64) -> Image<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, 3, |_, _, _| rng.gen())
}

#[test]
fn smootherstep_shape() {
    assert_eq!(smootherstep(-1.0f64), 0.0);
    assert_eq!(smootherstep(0.0f64), 0.0);
    assert_eq!(smootherstep(0.5f64), 0.5);
    assert_eq!(smootherstep(1.0f64), 1.0);
    assert_eq!(smootherstep(3.0f64), 1.0);
    let mut prev = 0.0;
    for i in 1..=100 {
        let v = smootherstep(i as f64 / 100.0);
        assert!(v >= prev);
        prev = v;
    }
}

#[test]
fn edge_term_pulls_toward_periphery() {
    // strong edges raise f_e and therefore lower c
    assert!(combination_factor(0.2f64, 1.0, 0.2) < combination_factor(0.2, 0.0, 0.2));
    assert_eq!(combination_factor(0.0f64, 0.0, 0.2), 1.0);
    assert_eq!(combination_factor(1.0f64, 0.0, 0.2), 0.0);
    // saturates rather than overshooting
    assert_eq!(combination_factor(0.9f64, 5.0, 0.2), 0.0);
}

#[test]
fn mask_ignores_edges_of_flat_images() {
    let flat = Image::filled(32, 32, 3, 0.4f64);
    assert!(edge_factor(&flat).data().iter().all(|&v| v == 0.0));
    let with = foveal_mask(&flat, [0, 0], [16.0, 16.0], 16.0, 0.75, 0.2, true).unwrap();
    let without = foveal_mask(&flat, [0, 0], [16.0, 16.0], 16.0, 0.75, 0.2, false).unwrap();
    assert_eq!(with.c, without.c);
    let bad = Image::new(4, 4, 1);
    assert!(blend_mask(&with.f_p, &bad, 0.2).is_err());
}

#[test]
fn compose_lerps_inside_the_crop_only() {
    let p = Image::filled(16, 16, 3, 0.2f64);
    let f = Image::filled(4, 4, 3, 0.8f64);
    let mut c = Image::filled(4, 4, 1, 0.5f64);
    c.set(0, 0, 0, 1.0);
    c.set(3, 3, 0, 0.0);
    let mut mask = foveal_mask(&f, [6, 7], [8.0, 9.0], 2.0, 0.75, 0.2, false).unwrap();
    mask.c = c;
    let out = compose(&p, &f, &mask, [6, 7]).unwrap();
    assert_eq!(out.get(0, 0, 0), 0.2);
    assert_eq!(out.get(6, 7, 1), 0.8);
    assert_eq!(out.get(9, 10, 1), 0.2);
    assert_abs_diff_eq!(out.get(7, 8, 2), 0.5, epsilon = 1e-15);
    assert!(compose(&p, &f, &mask, [14, 14]).is_err());
}

#[test]
fn tonemap_clamps_and_gamma_corrects() {
    let img = Image::from_vec(3, 1, 1, vec![-1.0f64, 0.25, 4.0]).unwrap();
    let out = tonemap(&img, 0.0, 2.0);
    assert_eq!(out.data(), &[0.0, 0.5, 1.0]);
    let brighter = tonemap(&img, 1.0, 1.0);
    assert_eq!(brighter.get(1, 0, 0), 0.5);
}

#[test]
fn ssim_identity_and_symmetry() {
    let a = noise(40, 30, 1);
    let b = noise(40, 30, 2);
    assert_abs_diff_eq!(ssim(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
    assert_eq!(dssim(&a, &a).unwrap().abs() < 1e-12, true);
    assert_abs_diff_eq!(ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap(), epsilon = 1e-14);
    assert!(ssim(&a, &b).unwrap() < 0.5);
    assert!(ssim(&a, &noise(40, 31, 2)).is_err());
}

#[test]
fn psnr_and_l1_known_values() {
    let a = Image::filled(8, 8, 3, 0.5f64);
    let b = Image::filled(8, 8, 3, 0.6f64);
    assert_abs_diff_eq!(l1(&a, &b).unwrap(), 0.1, epsilon = 1e-12);
    // mse 0.01 → 20 dB
    assert_abs_diff_eq!(psnr(&a, &b).unwrap(), 20.0, epsilon = 1e-9);
    assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
}

#[test]
fn regularizer_matches_scalar_oracle() {
    let (fv, pv) = (0.7f32, 0.3f32);
    let p = Image::filled(64, 64, 3, pv);
    let f = Image::filled(32, 32, 3, fv);
    for shape in [RegionShape::Disk, RegionShape::Square] {
        let region = FovealRegion {
            crop_origin: [16, 16],
            crop_size: 32,
            gaze: [32.0, 32.0],
            d_f: 16.0,
            shape,
        };
        let r = regularizer_r(&f, &p, &region).unwrap();
        assert!((r - (fv - pv).abs()).abs() < 1e-7, "{shape:?}: {r}");
    }
}

#[test]
fn regularizer_respects_the_region() {
    // F differs from P only in the crop corners, outside the disk
    let p = Image::filled(32, 32, 3, 0.5f64);
    let f = Image::from_fn(32, 32, 3, |x, y, _| if (x < 3 || x > 28) && (y < 3 || y > 28) { 1.0 } else { 0.5 });
    let disk = FovealRegion {
        crop_origin: [0, 0],
        crop_size: 32,
        gaze: [16.0, 16.0],
        d_f: 16.0,
        shape: RegionShape::Disk,
    };
    assert_eq!(regularizer_r(&f, &p, &disk).unwrap(), 0.0);
    let square = FovealRegion {
        shape: RegionShape::Square,
        ..disk
    };
    assert!(regularizer_r(&f, &p, &square).unwrap() > 0.0);
}

#[test]
fn total_loss_weighted_sum() {
    let gt = noise(24, 24, 5);
    let render = noise(24, 24, 6);
    let p = noise(24, 24, 7);
    let f = p.crop(4, 4, 16, 16).unwrap().map(|v| v * 0.5);
    let region = FovealRegion {
        crop_origin: [4, 4],
        crop_size: 16,
        gaze: [12.0, 12.0],
        d_f: 8.0,
        shape: RegionShape::Disk,
    };
    let w = LossWeights {
        lambda: 0.3,
        mu: 0.0,
        beta: 0.5,
    };
    let b = total_loss(&render, &gt, &f, &p, &region, &w).unwrap();
    let expect = 0.7 * l1(&render, &gt).unwrap() + 0.3 * dssim(&render, &gt).unwrap() + 0.5 * regularizer_r(&f, &p, &region).unwrap();
    assert_abs_diff_eq!(b.total, expect, epsilon = 1e-15);
    assert!(b.vgg_excluded);
    let bad = LossWeights { lambda: 1.5, ..w };
    assert!(total_loss(&render, &gt, &f, &p, &region, &bad).is_err());
}

#[test]
fn metric_row_values() {
    let a = noise(16, 16, 1);
    let b = a.map(|v| (v + 0.1).min(1.0));
    let row = MetricRow::compute("view_000", &a, &b, 0.25f64).unwrap();
    assert_eq!(row.view_id, "view_000");
    assert_abs_diff_eq!(row.l1, l1(&a, &b).unwrap(), epsilon = 1e-15);
    assert_abs_diff_eq!(row.dssim, (1.0 - row.ssim) / 2.0, epsilon = 1e-15);
    assert_eq!(row.r, 0.25);
}
