use std::cell::Cell;

use fovea_core::pipeline::{clamp_gaze, Ablations};
use fovea_core::scene::synth::{generate_synthetic, SceneKind, SceneSpec, SyntheticScene};
use fovea_core::{FoveatedRenderer, RenderMode, RenderOptions, SortMode};

fn scene() -> SyntheticScene<f32> {
    generate_synthetic(&SceneSpec::new(SceneKind::TexturedQuads, 2, 8_000, 20_000)).unwrap()
}

fn options() -> RenderOptions<f32> {
    let mut o = RenderOptions::default();
    o.fovea.d_f = 40.0;
    o
}

#[test]
fn foveated_frame_is_complete_and_deterministic() {
    let s = scene();
    let cam = s.views[0].camera;
    let r = FoveatedRenderer::new(&s.gaussians, &s.points, options());
    let a = r.render(&cam, [100.0, 140.0]).unwrap();
    let b = r.render(&cam, [100.0, 140.0]).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.image.dims(), (256, 256));
    assert!(a.image.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let sub = a.subfrustum.as_ref().unwrap();
    assert_eq!(sub.crop_size, 80);
    assert_eq!(a.foveal.as_ref().unwrap().dims(), (80, 80));
    assert!(!a.cull.as_ref().unwrap().indices.is_empty());
    // outside the crop the frame is the periphery
    assert_eq!(a.linear.pixel(5, 5), a.periphery.color.pixel(5, 5));
}

#[test]
fn late_latch_reads_gaze_after_the_periphery() {
    let s = scene();
    let cam = s.views[0].camera;
    let r = FoveatedRenderer::new(&s.gaussians, &s.points, options());
    let calls = Cell::new(0);
    let out = r
        .render_late_latch(&cam, || {
            calls.set(calls.get() + 1);
            [60.0, 70.0]
        })
        .unwrap();
    assert_eq!(calls.get(), 1);
    assert_eq!(out.gaze, [60.0, 70.0]);
    assert_eq!(out.subfrustum.unwrap().crop_origin, [20, 30]);
}

#[test]
fn gaze_is_clamped() {
    let s = scene();
    let cam = s.views[0].camera;
    assert_eq!(clamp_gaze([f32::NAN, 3.0], &cam), [128.0, 128.0]);
    assert_eq!(clamp_gaze([-5.0, 900.0], &cam), [0.0, 256.0]);
    let r = FoveatedRenderer::new(&s.gaussians, &s.points, options());
    let out = r.render(&cam, [f32::INFINITY, 0.0]).unwrap();
    assert_eq!(out.gaze, [128.0, 128.0]);
}

#[test]
fn full_gs_skips_the_fovea() {
    let s = scene();
    let cam = s.views[0].camera;
    let o = RenderOptions {
        mode: RenderMode::FullGs,
        ..options()
    };
    let out = FoveatedRenderer::new(&s.gaussians, &s.points, o).render(&cam, [128.0, 128.0]).unwrap();
    assert!(out.foveal.is_none() && out.pyramid.is_none());
    assert_eq!(out.linear, out.periphery.color);
    assert!(out.mask_image().data().iter().all(|&v| v == 0.0));
}

#[test]
fn mask_debug_shows_the_blend_factor() {
    let s = scene();
    let cam = s.views[0].camera;
    let o = RenderOptions {
        mode: RenderMode::MaskDebug,
        ..options()
    };
    let out = FoveatedRenderer::new(&s.gaussians, &s.points, o).render(&cam, [128.0, 128.0]).unwrap();
    assert_eq!(out.image.get(128, 128, 0), 1.0);
    assert_eq!(out.image.get(128, 128, 2), 1.0);
    assert_eq!(out.image.get(0, 0, 0), 0.0);
    // beyond d_f the periphery takes over
    assert_eq!(out.image.get(128 + 40, 128, 0), 0.0);
    assert!(out.image.get(128 + 39, 128, 0) > 0.0);
}

#[test]
fn ablations_change_what_they_should() {
    let s = scene();
    let cam = s.views[0].camera;
    let base = FoveatedRenderer::new(&s.gaussians, &s.points, options()).render(&cam, [128.0, 128.0]).unwrap();

    let mut o = options();
    o.ablations = Ablations {
        no_depth_cull: true,
        ..Default::default()
    };
    let open = FoveatedRenderer::new(&s.gaussians, &s.points, o).render(&cam, [128.0, 128.0]).unwrap();
    assert_eq!(open.cull.as_ref().unwrap().occluded, 0);
    assert!(base.cull.as_ref().unwrap().occluded > 0);

    let mut o = options();
    o.ablations.no_edge_term = true;
    let flat = FoveatedRenderer::new(&s.gaussians, &s.points, o).render(&cam, [128.0, 128.0]).unwrap();
    assert!(flat.mask.as_ref().unwrap().f_e.data().iter().all(|&v| v == 0.0));

    let mut o = options();
    o.ablations.no_popping_fix = true;
    assert_eq!(o.effective_sort_mode(), SortMode::Global);
}

#[test]
fn invalid_configuration_is_an_error() {
    let s = scene();
    let cam = s.views[0].camera;
    let mut o = options();
    o.fovea.m = 1.0;
    assert!(FoveatedRenderer::new(&s.gaussians, &s.points, o).render(&cam, [1.0, 1.0]).is_err());
    let mut bad_cam = cam;
    bad_cam.width = 0;
    assert!(FoveatedRenderer::new(&s.gaussians, &s.points, options()).render(&bad_cam, [1.0, 1.0]).is_err());
}
