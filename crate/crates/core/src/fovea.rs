//! Gaze-centered foveal pass: crop frustum, point culling against the
//! peripheral depth, and splatting into a multi-resolution pyramid.

use rayon::prelude::*;

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::periphery::PeripheryFrame;
use crate::scalar::{cmp_real, Real};
use crate::scene::{FoveaConfig, NeuralPointCloud};

/// Pyramid depth used by the renderer.
pub const PYRAMID_LAYERS: usize = 4;
/// Front-most fragments blended per pyramid pixel.
pub const FRAGMENTS_PER_PIXEL: usize = 16;

/// Off-center frustum covering the square crop window around the gaze.
#[derive(Clone, Debug, PartialEq)]
pub struct Subfrustum<T> {
    pub base: CameraView<T>,
    pub gaze_px: [T; 2],
    /// Top-left pixel of the crop in the base image.
    pub crop_origin: [usize; 2],
    /// Side of the square crop, pixels.
    pub crop_size: usize,
    /// Camera whose image is exactly the crop window.
    pub camera: CameraView<T>,
}

impl<T: Real> Subfrustum<T> {
    /// Projects a world point into crop pixel coordinates; returns depth too.
    pub fn project(&self, p: &crate::linalg::Vec3<T>) -> ([T; 2], T) {
        self.camera.project(p)
    }
}

fn round_to_isize<T: Real>(v: T) -> isize {
    (v + T::lit(0.5)).floor().to_f64_lossy() as isize
}

/// Builds the crop window of side `2·d_f` centered on `gaze_px`, clamped to
/// the image. The side shrinks to the image size if it does not fit.
pub fn make_subfrustum<T: Real>(camera: &CameraView<T>, gaze_px: [T; 2], d_f: T) -> Subfrustum<T> {
    let side = round_to_isize(d_f * T::lit(2.0)).max(1) as usize;
    let side = side.min(camera.width).min(camera.height);
    let half = T::from_usize_lossy(side) * T::lit(0.5);
    let origin = |g: T, extent: usize| -> usize {
        let o = round_to_isize(g - half);
        o.clamp(0, (extent - side) as isize) as usize
    };
    let crop_origin = [origin(gaze_px[0], camera.width), origin(gaze_px[1], camera.height)];
    let mut crop = *camera;
    crop.width = side;
    crop.height = side;
    crop.intrinsics.cx = camera.intrinsics.cx - T::from_usize_lossy(crop_origin[0]);
    crop.intrinsics.cy = camera.intrinsics.cy - T::from_usize_lossy(crop_origin[1]);
    Subfrustum {
        base: *camera,
        gaze_px,
        crop_origin,
        crop_size: side,
        camera: crop,
    }
}

/// Fovea extent derived from display density and angular size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoveaSize<T> {
    /// pixels/degree × degrees × resolution scale.
    pub raw: T,
    /// Next power of two ≥ raw.
    pub size: usize,
    /// Radius d_f = size / 2.
    pub radius: T,
}

pub fn fovea_radius_px<T: Real>(cfg: &FoveaConfig<T>) -> Result<FoveaSize<T>> {
    if !(cfg.pixels_per_degree > T::zero()
        && cfg.fovea_degrees > T::zero()
        && cfg.resolution_scale > T::zero())
    {
        return Err(Error::Config("fovea size parameters must be positive".into()));
    }
    let raw = cfg.pixels_per_degree * cfg.fovea_degrees * cfg.resolution_scale;
    let size = (raw.ceil().to_f64_lossy() as usize).next_power_of_two();
    Ok(FoveaSize {
        raw,
        size,
        radius: T::from_usize_lossy(size) * T::lit(0.5),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CullParams<T> {
    /// Relative slack on the peripheral depth.
    pub eps_rel: T,
    /// Peripheral alpha above which a pixel counts as an occluder.
    pub alpha_occl: T,
    /// Disable to keep every point inside the frustum.
    pub occlusion: bool,
}

impl<T: Real> Default for CullParams<T> {
    fn default() -> Self {
        Self {
            eps_rel: T::lit(0.05),
            alpha_occl: T::lit(0.9),
            occlusion: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CullResult {
    /// Retained point indices, ascending.
    pub indices: Vec<usize>,
    /// Points inside the subfrustum before occlusion culling.
    pub in_frustum: usize,
    /// Points removed by the occlusion test.
    pub occluded: usize,
}

enum Verdict {
    Outside,
    Occluded,
    Keep,
}

/// Frustum and occlusion culling of `cloud` for the foveal pass.
pub fn cull_points<T: Real>(
    cloud: &NeuralPointCloud<T>,
    sub: &Subfrustum<T>,
    periphery_depth: &Image<T>,
    periphery_alpha: &Image<T>,
    params: &CullParams<T>,
) -> Result<CullResult> {
    let (bw, bh) = (sub.base.width, sub.base.height);
    if periphery_depth.dims() != (bw, bh) || periphery_alpha.dims() != (bw, bh) {
        return Err(Error::Shape(
            "periphery depth/alpha must match the base resolution".into(),
        ));
    }
    let cam = &sub.camera;
    let side = T::from_usize_lossy(sub.crop_size);
    let slack = T::one() + params.eps_rel;
    let verdicts: Vec<Verdict> = cloud
        .points
        .par_iter()
        .map(|p| {
            let ([u, v], z) = sub.project(&p.position);
            if !(z > cam.near && z < cam.far) {
                return Verdict::Outside;
            }
            if !(u >= T::zero() && u < side && v >= T::zero() && v < side) {
                return Verdict::Outside;
            }
            if params.occlusion {
                let bx = (sub.crop_origin[0] + u.floor().to_f64_lossy() as usize).min(bw - 1);
                let by = (sub.crop_origin[1] + v.floor().to_f64_lossy() as usize).min(bh - 1);
                let a = periphery_alpha.get(bx, by, 0);
                let d = periphery_depth.get(bx, by, 0);
                if a >= params.alpha_occl && z > d * slack {
                    return Verdict::Occluded;
                }
            }
            Verdict::Keep
        })
        .collect();
    let mut out = CullResult::default();
    for (i, v) in verdicts.into_iter().enumerate() {
        match v {
            Verdict::Outside => {}
            Verdict::Occluded => {
                out.in_frustum += 1;
                out.occluded += 1;
            }
            Verdict::Keep => {
                out.in_frustum += 1;
                out.indices.push(i);
            }
        }
    }
    Ok(out)
}

/// Convenience wrapper taking the peripheral frame directly.
pub fn cull_against_frame<T: Real>(
    cloud: &NeuralPointCloud<T>,
    sub: &Subfrustum<T>,
    frame: &PeripheryFrame<T>,
    params: &CullParams<T>,
) -> Result<CullResult> {
    cull_points(cloud, sub, &frame.depth, &frame.alpha, params)
}

/// Multi-resolution splat targets; layer l has `D + 1` channels (features,
/// then alpha) at `ceil(crop_size / 2^l)` pixels per side.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePyramid<T> {
    pub feature_dim: usize,
    pub layers: Vec<Image<T>>,
    /// Fragments written into each layer.
    pub fragment_counts: Vec<usize>,
}

impl<T: Real> FramePyramid<T> {
    /// All-zero pyramid for a crop of side `crop_size`.
    pub fn zeros(crop_size: usize, feature_dim: usize, levels: usize) -> Self {
        assert!(levels >= 1);
        let layers = (0..levels)
            .map(|l| {
                let s = layer_side(crop_size, l);
                Image::new(s, s, feature_dim + 1)
            })
            .collect();
        Self {
            feature_dim,
            layers,
            fragment_counts: vec![0; levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.layers.len()
    }

    pub fn crop_size(&self) -> usize {
        self.layers[0].width()
    }

    pub fn alpha(&self, layer: usize, x: usize, y: usize) -> T {
        self.layers[layer].get(x, y, self.feature_dim)
    }
}

pub fn layer_side(crop_size: usize, layer: usize) -> usize {
    crop_size.div_ceil(1 << layer)
}

/// A point's contribution to one pyramid pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PyramidFragment<T> {
    pub layer: usize,
    pub x: usize,
    pub y: usize,
    pub depth: T,
    pub point: usize,
    pub alpha: T,
}

/// Layer coordinate `clamp(log2(max(s_px, 1)), 0, levels − 1)`.
pub fn layer_coordinate<T: Real>(s_px: T, levels: usize) -> T {
    s_px.max(T::one())
        .log2()
        .max(T::zero())
        .min(T::from_usize_lossy(levels - 1))
}

/// Fragments of point `index` in every layer it touches: the two layers
/// bracketing its layer coordinate, bilinearly over 2×2 pixels each.
pub fn point_fragments<T: Real>(
    cloud: &NeuralPointCloud<T>,
    index: usize,
    sub: &Subfrustum<T>,
    levels: usize,
    out: &mut Vec<PyramidFragment<T>>,
) {
    let p = &cloud.points[index];
    let ([u, v], z) = sub.project(&p.position);
    if !(z > T::zero()) {
        return;
    }
    let s_px = p.size * sub.camera.intrinsics.fx / z;
    let l = layer_coordinate(s_px, levels);
    let lo = l.floor();
    let frac = l - lo;
    let lo = lo.to_f64_lossy() as usize;
    let hi = l.ceil().to_f64_lossy() as usize;
    let layer_weights = if hi == lo {
        [(lo, T::one()), (hi, T::zero())]
    } else {
        [(lo, T::one() - frac), (hi, frac)]
    };
    let half = T::lit(0.5);
    for (layer, wl) in layer_weights {
        if wl <= T::zero() {
            continue;
        }
        let side = layer_side(sub.crop_size, layer);
        let scale = T::from_usize_lossy(1 << layer);
        let xf = u / scale - half;
        let yf = v / scale - half;
        let (x0, y0) = (xf.floor(), yf.floor());
        let (fx, fy) = (xf - x0, yf - y0);
        let (x0, y0) = (x0.to_f64_lossy() as i64, y0.to_f64_lossy() as i64);
        for (dy, wy) in [(0i64, T::one() - fy), (1, fy)] {
            for (dx, wx) in [(0i64, T::one() - fx), (1, fx)] {
                let w = wx * wy;
                let (x, y) = (x0 + dx, y0 + dy);
                if w <= T::zero() || x < 0 || y < 0 || x >= side as i64 || y >= side as i64 {
                    continue;
                }
                out.push(PyramidFragment {
                    layer,
                    x: x as usize,
                    y: y as usize,
                    depth: z,
                    point: index,
                    alpha: p.opacity * wl * w,
                });
            }
        }
    }
}

/// Splats `indices` of `cloud` into a `levels`-layer pyramid, keeping the
/// `k` nearest fragments per pixel. All layers share one fragment buffer
/// and one sort.
pub fn splat_pyramid<T: Real>(
    cloud: &NeuralPointCloud<T>,
    indices: &[usize],
    sub: &Subfrustum<T>,
    levels: usize,
    k: usize,
) -> Result<FramePyramid<T>> {
    if levels == 0 {
        return Err(Error::Config("pyramid needs at least one layer".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::Bounds(format!("point index {bad} out of range")));
    }
    let dim = cloud.feature_dim;
    let mut pyramid = FramePyramid::zeros(sub.crop_size, dim, levels);
    let offsets: Vec<usize> = (0..levels)
        .scan(0, |acc, l| {
            let o = *acc;
            let s = layer_side(sub.crop_size, l);
            *acc += s * s;
            Some(o)
        })
        .collect();

    let mut frags: Vec<PyramidFragment<T>> = indices
        .par_iter()
        .fold(Vec::new, |mut acc, &i| {
            point_fragments(cloud, i, sub, levels, &mut acc);
            acc
        })
        .flatten()
        .collect();
    for f in &frags {
        pyramid.fragment_counts[f.layer] += 1;
    }
    let pixel_id = |f: &PyramidFragment<T>| {
        offsets[f.layer] + f.y * layer_side(sub.crop_size, f.layer) + f.x
    };
    frags.par_sort_unstable_by(|a, b| {
        pixel_id(a)
            .cmp(&pixel_id(b))
            .then(cmp_real(a.depth, b.depth))
            .then(a.point.cmp(&b.point))
    });

    let mut starts = Vec::new();
    for (i, f) in frags.iter().enumerate() {
        if i == 0 || pixel_id(f) != pixel_id(&frags[i - 1]) {
            starts.push(i);
        }
    }
    starts.push(frags.len());

    let blended: Vec<(usize, usize, usize, Vec<T>)> = starts
        .par_windows(2)
        .map(|w| {
            let seg = &frags[w[0]..w[1]];
            let mut acc = vec![T::zero(); dim + 1];
            let mut trans = T::one();
            for f in seg.iter().take(k) {
                let wgt = f.alpha * trans;
                for (c, a) in acc.iter_mut().take(dim).enumerate() {
                    *a += cloud.points[f.point].features[c] * wgt;
                }
                acc[dim] += wgt;
                trans *= T::one() - f.alpha;
            }
            acc[dim] = acc[dim].min(T::one());
            (seg[0].layer, seg[0].x, seg[0].y, acc)
        })
        .collect();
    for (layer, x, y, acc) in blended {
        pyramid.layers[layer].pixel_mut(x, y).copy_from_slice(&acc);
    }
    Ok(pyramid)
}
