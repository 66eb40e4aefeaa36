use fovea_core::fovea::{
    cull_points, fovea_radius_px, make_subfrustum, splat_pyramid, CullParams, FramePyramid,
};
use fovea_core::resolver::bypass_resolve;
use fovea_core::{CameraView, FoveaConfig, Image, NeuralPoint, NeuralPointCloud, Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn camera() -> CameraView<f64> {
    CameraView::new(256, 256, 200.0, Pose::identity())
}

fn point(x: f64, y: f64, z: f64, size: f64, opacity: f64, features: Vec<f64>) -> NeuralPoint<f64> {
    NeuralPoint {
        position: Vec3::new(x, y, z),
        size,
        features,
        opacity,
    }
}

/// World point that projects to crop pixel coordinate (u, v) at depth z.
fn at_crop(cam: &CameraView<f64>, origin: [usize; 2], u: f64, v: f64, z: f64) -> Vec3<f64> {
    let k = &cam.intrinsics;
    let (fu, fv) = (u + origin[0] as f64, v + origin[1] as f64);
    Vec3::new((fu - k.cx) / k.fx * z, (fv - k.cy) / k.fy * z, z)
}

#[test]
fn occlusion_culling_rules() {
    let cam = camera();
    let sub = make_subfrustum(&cam, [128.0, 128.0], 32.0);
    let depth = Image::filled(256, 256, 1, 5.0);
    let mut alpha = Image::filled(256, 256, 1, 0.95);
    let o = sub.crop_origin;
    // one translucent periphery pixel
    alpha.set(o[0] + 40, o[1] + 40, 0, 0.5);
    let mut cloud = NeuralPointCloud::<f64>::new(1);
    for (u, v, z) in [
        (10.5, 10.5, 6.0),  // behind an opaque surface
        (12.5, 10.5, 5.2),  // within the 5% slack
        (14.5, 10.5, 4.0),  // in front
        (40.5, 40.5, 9.0),  // behind a translucent pixel
        (-3.0, 10.5, 4.0),  // left of the crop
        (10.5, 10.5, -1.0), // behind the camera
    ] {
        let p = if z > 0.0 { at_crop(&cam, o, u, v, z) } else { Vec3::new(0.0, 0.0, z) };
        cloud.points.push(NeuralPoint {
            position: p,
            size: 0.01,
            features: vec![1.0],
            opacity: 1.0,
        });
    }
    let r = cull_points(&cloud, &sub, &depth, &alpha, &CullParams::default()).unwrap();
    assert_eq!(r.indices, vec![1, 2, 3]);
    assert_eq!(r.in_frustum, 4);
    assert_eq!(r.occluded, 1);

    let open = CullParams {
        occlusion: false,
        ..CullParams::default()
    };
    let r = cull_points(&cloud, &sub, &depth, &alpha, &open).unwrap();
    assert_eq!(r.indices, vec![0, 1, 2, 3]);
    assert_eq!(r.occluded, 0);

    let small = Image::filled(8, 8, 1, 1.0);
    assert!(cull_points(&cloud, &sub, &small, &small, &CullParams::default()).is_err());
}

#[test]
fn fovea_size_is_next_power_of_two() {
    // 15.7 px/deg x 17 deg x 1.4 = 373.66 px
    let s = fovea_radius_px(&FoveaConfig::<f64>::default()).unwrap();
    assert!((s.raw - 373.66).abs() < 1e-9);
    assert_eq!(s.size, 512);
    assert_eq!(s.radius, 256.0);
    let exact = FoveaConfig::<f64> {
        pixels_per_degree: 8.0,
        fovea_degrees: 16.0,
        resolution_scale: 1.0,
        ..FoveaConfig::default()
    };
    assert_eq!(fovea_radius_px(&exact).unwrap().size, 128);
    let bad = FoveaConfig::<f64> {
        fovea_degrees: 0.0,
        ..FoveaConfig::default()
    };
    assert!(fovea_radius_px(&bad).is_err());
}

/// Per-layer splatting computed directly: tent weights across layers and
/// across pixels, per-pixel sort, then the first `k` fragments blended.
fn naive_pyramid(
    cloud: &NeuralPointCloud<f64>,
    sub: &fovea_core::fovea::Subfrustum<f64>,
    levels: usize,
    k: usize,
) -> Vec<Image<f64>> {
    let d = cloud.feature_dim;
    let mut out = Vec::new();
    for layer in 0..levels {
        let side = sub.crop_size.div_ceil(1 << layer);
        let mut lists: Vec<Vec<(f64, usize, f64)>> = vec![Vec::new(); side * side];
        for (i, p) in cloud.points.iter().enumerate() {
            let ([u, v], z) = sub.project(&p.position);
            let s_px = p.size * sub.camera.intrinsics.fx / z;
            let l = s_px.max(1.0).log2().clamp(0.0, (levels - 1) as f64);
            let wl = (1.0 - (l - layer as f64).abs()).max(0.0);
            let scale = (1 << layer) as f64;
            let (cu, cv) = (u / scale, v / scale);
            for y in 0..side {
                for x in 0..side {
                    let wx = (1.0 - (x as f64 + 0.5 - cu).abs()).max(0.0);
                    let wy = (1.0 - (y as f64 + 0.5 - cv).abs()).max(0.0);
                    let a = p.opacity * wl * wx * wy;
                    if a > 0.0 {
                        lists[y * side + x].push((z, i, a));
                    }
                }
            }
        }
        let mut img = Image::<f64>::new(side, side, d + 1);
        for y in 0..side {
            for x in 0..side {
                let list = &mut lists[y * side + x];
                list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut t = 1.0;
                let px = img.pixel_mut(x, y);
                for &(_, i, a) in list.iter().take(k) {
                    for c in 0..d {
                        px[c] += cloud.points[i].features[c] * a * t;
                    }
                    px[d] += a * t;
                    t *= 1.0 - a;
                }
                px[d] = px[d].min(1.0);
            }
        }
        out.push(img);
    }
    out
}

#[test]
fn pyramid_matches_naive_per_layer_splatting() {
    let cam = camera();
    let sub = make_subfrustum(&cam, [100.0, 140.0], 16.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut cloud = NeuralPointCloud::<f64>::new(3);
    for _ in 0..300 {
        let z = rng.gen_range(2.0..6.0);
        let u = rng.gen_range(0.0..32.0);
        let v = rng.gen_range(0.0..32.0);
        let pos = at_crop(&cam, sub.crop_origin, u, v, z);
        // sizes spanning every layer, including the clamps
        let s_px: f64 = 2f64.powf(rng.gen_range(-1.0..4.0));
        cloud.points.push(point(
            pos.x(),
            pos.y(),
            pos.z(),
            s_px * z / cam.intrinsics.fx,
            rng.gen_range(0.1..1.0),
            vec![rng.gen(), rng.gen(), rng.gen()],
        ));
    }
    let indices: Vec<usize> = (0..cloud.len()).collect();
    for k in [1, 4, 16] {
        let got = splat_pyramid(&cloud, &indices, &sub, 4, k).unwrap();
        let expect = naive_pyramid(&cloud, &sub, 4, k);
        for (l, (g, e)) in got.layers.iter().zip(&expect).enumerate() {
            assert_eq!(g.dims(), e.dims());
            for (a, b) in g.data().iter().zip(e.data()) {
                assert!((a - b).abs() < 1e-12, "layer {l}, k {k}: {a} vs {b}");
            }
        }
        assert!(got.fragment_counts.iter().sum::<usize>() > 0);
    }
    assert!(splat_pyramid(&cloud, &[cloud.len()], &sub, 4, 4).is_err());
    assert!(splat_pyramid(&cloud, &indices, &sub, 0, 4).is_err());
}

fn bilinear_up(img: &Image<f64>, w: usize, h: usize) -> Image<f64> {
    let (iw, ih) = img.dims();
    Image::from_fn(w, h, img.channels(), |x, y, c| {
        let sx = ((x as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (iw - 1) as f64);
        let sy = ((y as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (ih - 1) as f64);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(iw - 1), (y0 + 1).min(ih - 1));
        let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
        let g = |xx, yy| img.get(xx, yy, c);
        (1.0 - fy) * ((1.0 - fx) * g(x0, y0) + fx * g(x1, y0)) + fy * ((1.0 - fx) * g(x0, y1) + fx * g(x1, y1))
    })
}

#[test]
fn bypass_matches_hole_fill_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut p = FramePyramid::<f64>::zeros(8, 3, 3);
    for layer in &mut p.layers {
        let (w, h) = layer.dims();
        for y in 0..h {
            for x in 0..w {
                if rng.gen_bool(0.6) {
                    let a = rng.gen_range(0.05..1.0);
                    let px = layer.pixel_mut(x, y);
                    for c in 0..3 {
                        px[c] = a * rng.gen_range(0.0..1.0);
                    }
                    px[3] = a;
                }
            }
        }
    }
    let crop = Image::from_fn(8, 8, 3, |_, _, _| rng.gen_range(0.0..1.0));

    let mut filled = p.layers[2].clone();
    for l in [1, 0] {
        let layer = &p.layers[l];
        let (w, h) = layer.dims();
        let up = bilinear_up(&filled, w, h);
        filled = Image::from_fn(w, h, 4, |x, y, c| if layer.get(x, y, 3) > 0.0 { layer.get(x, y, c) } else { up.get(x, y, c) });
    }
    let got = bypass_resolve(&p, &crop).unwrap();
    for y in 0..8 {
        for x in 0..8 {
            let a = filled.get(x, y, 3);
            for c in 0..3 {
                let e = if a > 0.0 { filled.get(x, y, c) + (1.0 - a) * crop.get(x, y, c) } else { crop.get(x, y, c) };
                assert!((got.get(x, y, c) - e).abs() < 1e-12);
            }
        }
    }

    // nothing splatted: the crop passes through untouched
    let empty = FramePyramid::<f64>::zeros(8, 3, 3);
    assert_eq!(bypass_resolve(&empty, &crop).unwrap(), crop);
    let wrong = Image::new(4, 4, 3);
    assert!(bypass_resolve(&p, &wrong).is_err());
}
