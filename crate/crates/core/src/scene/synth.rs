//! Deterministic synthetic scenes.
//!
//! A scene is a handful of opaque analytic surfaces (checker-textured quads
//! and flat-colored spheres). Gaussians and neural points are sampled on the
//! surfaces; the reference images come from rasterizing the surfaces
//! directly with a depth test, so they share no code with either splatting
//! path.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraView, Pose};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{Mat3, Quat, Vec3};
use crate::periphery::sh::SH_C0;
use crate::scalar::Real;
use crate::scene::{
    sh_coeff_count, Gaussian, GaussianSet, NeuralPoint, NeuralPointCloud, DEFAULT_FEATURE_DIM,
    MAX_SH_DEGREE,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    TexturedQuads,
    ColoredSpheres,
    CheckerboardRoom,
}

impl std::str::FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "textured_quads" => Ok(Self::TexturedQuads),
            "colored_spheres" => Ok(Self::ColoredSpheres),
            "checkerboard_room" => Ok(Self::CheckerboardRoom),
            _ => Err(Error::Config(format!("unknown scene kind `{s}`"))),
        }
    }
}

fn default_feature_dim() -> usize {
    DEFAULT_FEATURE_DIM
}

/// Synthetic scene description, read from a TOML key-value file:
///
/// ```toml
/// kind = "textured_quads"
/// seed = 7
/// n_gaussians = 50000
/// n_points = 100000
/// n_views = 3
/// resolution = [512, 512]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub seed: u64,
    pub n_gaussians: usize,
    pub n_points: usize,
    pub n_views: usize,
    pub resolution: [usize; 2],
    #[serde(default)]
    pub sh_degree: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, seed: u64, n_gaussians: usize, n_points: usize) -> Self {
        Self {
            kind,
            seed,
            n_gaussians,
            n_points,
            n_views: 1,
            resolution: [256, 256],
            sh_degree: 0,
            feature_dim: DEFAULT_FEATURE_DIM,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scene spec serializes")
    }
}

/// An opaque analytic surface.
#[derive(Clone, Debug, PartialEq)]
pub enum Surface<T> {
    /// Parallelogram `origin + s·edge_u + t·edge_v`, s, t ∈ [0, 1], with a
    /// two-color checker of `cells` squares.
    Quad {
        origin: Vec3<T>,
        edge_u: Vec3<T>,
        edge_v: Vec3<T>,
        cells: [usize; 2],
        colors: [[T; 3]; 2],
    },
    Sphere {
        center: Vec3<T>,
        radius: T,
        color: [T; 3],
    },
}

/// A surface sample: position, orthonormal frame (t1, t2, normal), color.
struct SurfaceSample<T> {
    position: Vec3<T>,
    frame: [Vec3<T>; 3],
    color: [T; 3],
}

impl<T: Real> Surface<T> {
    pub fn area(&self) -> T {
        match self {
            Self::Quad { edge_u, edge_v, .. } => edge_u.cross(edge_v).norm(),
            Self::Sphere { radius, .. } => T::lit(4.0) * T::PI() * *radius * *radius,
        }
    }

    fn checker(cells: [usize; 2], colors: &[[T; 3]; 2], s: T, t: T) -> [T; 3] {
        let cu = (s * T::from_usize_lossy(cells[0])).floor().to_f64_lossy() as i64;
        let cv = (t * T::from_usize_lossy(cells[1])).floor().to_f64_lossy() as i64;
        colors[((cu + cv).rem_euclid(2)) as usize]
    }

    fn sample(&self, rng: &mut impl Rng) -> SurfaceSample<T> {
        match self {
            Self::Quad {
                origin,
                edge_u,
                edge_v,
                cells,
                colors,
            } => {
                let s = T::lit(rng.gen::<f64>());
                let t = T::lit(rng.gen::<f64>());
                let n = edge_u.cross(edge_v).normalized();
                let t1 = edge_u.normalized();
                let t2 = n.cross(&t1);
                SurfaceSample {
                    position: *origin + *edge_u * s + *edge_v * t,
                    frame: [t1, t2, n],
                    color: Self::checker(*cells, colors, s, t),
                }
            }
            Self::Sphere {
                center,
                radius,
                color,
            } => {
                // uniform direction via z = cos(theta) ~ U[-1, 1]
                let z = T::lit(rng.gen_range(-1.0..1.0));
                let phi = T::lit(rng.gen_range(0.0..std::f64::consts::TAU));
                let r = (T::one() - z * z).max(T::zero()).sqrt();
                let n = Vec3::new(r * phi.cos(), r * phi.sin(), z);
                let helper = if n.x().abs() < T::lit(0.9) {
                    Vec3::new(T::one(), T::zero(), T::zero())
                } else {
                    Vec3::new(T::zero(), T::one(), T::zero())
                };
                let t1 = helper.cross(&n).normalized();
                let t2 = n.cross(&t1);
                SurfaceSample {
                    position: *center + n * *radius,
                    frame: [t1, t2, n],
                    color: *color,
                }
            }
        }
    }

    /// Nearest hit along `origin + t·dir` with t > `t_min`; returns (t, color).
    pub fn intersect(&self, origin: &Vec3<T>, dir: &Vec3<T>, t_min: T) -> Option<(T, [T; 3])> {
        match self {
            Self::Quad {
                origin: q0,
                edge_u,
                edge_v,
                cells,
                colors,
            } => {
                let n = edge_u.cross(edge_v);
                let denom = n.dot(dir);
                if denom == T::zero() {
                    return None;
                }
                let t = n.dot(&(*q0 - *origin)) / denom;
                if !(t > t_min) {
                    return None;
                }
                let rel = *origin + *dir * t - *q0;
                // solve rel = s·u + t·v in the plane
                let uu = edge_u.dot(edge_u);
                let uv = edge_u.dot(edge_v);
                let vv = edge_v.dot(edge_v);
                let ru = rel.dot(edge_u);
                let rv = rel.dot(edge_v);
                let det = uu * vv - uv * uv;
                let s = (ru * vv - rv * uv) / det;
                let w = (rv * uu - ru * uv) / det;
                let (z, o) = (T::zero(), T::one());
                if s < z || s > o || w < z || w > o {
                    return None;
                }
                Some((t, Self::checker(*cells, colors, s, w)))
            }
            Self::Sphere {
                center,
                radius,
                color,
            } => {
                let oc = *origin - *center;
                let a = dir.dot(dir);
                let b = oc.dot(dir);
                let c = oc.dot(&oc) - *radius * *radius;
                let disc = b * b - a * c;
                if disc < T::zero() {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = (-b - sq) / a;
                let t1 = (-b + sq) / a;
                let t = if t0 > t_min {
                    t0
                } else if t1 > t_min {
                    t1
                } else {
                    return None;
                };
                Some((t, *color))
            }
        }
    }

    /// World-space bounding box corners.
    fn bounds_corners(&self) -> Vec<Vec3<T>> {
        match self {
            Self::Quad {
                origin,
                edge_u,
                edge_v,
                ..
            } => vec![
                *origin,
                *origin + *edge_u,
                *origin + *edge_v,
                *origin + *edge_u + *edge_v,
            ],
            Self::Sphere { center, radius, .. } => {
                let mut out = Vec::with_capacity(8);
                for i in 0..8 {
                    let s = |bit: usize| if i & bit != 0 { *radius } else { -*radius };
                    out.push(*center + Vec3::new(s(1), s(2), s(4)));
                }
                out
            }
        }
    }
}

/// Reference color and depth of `surfaces` seen from `camera`, z-buffered.
/// Depth is camera-space z; uncovered pixels hold color 0 and depth 0.
pub fn rasterize_reference<T: Real>(
    surfaces: &[Surface<T>],
    camera: &CameraView<T>,
) -> (Image<T>, Image<T>) {
    let (w, h) = (camera.width, camera.height);
    let mut color = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let mut zbuf = vec![T::infinity(); w * h];
    let center = camera.pose.center();
    let rt = camera.pose.rotation.transpose();
    let half = T::lit(0.5);

    // far-to-near painting order; the depth test makes the result exact
    // even where the order is ambiguous
    let mut order: Vec<(T, usize)> = surfaces
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let corners = s.bounds_corners();
            let n = T::from_usize_lossy(corners.len());
            let c = corners.iter().fold(Vec3::zero(), |a, b| a + *b) * (T::one() / n);
            (camera.to_camera(&c).z(), i)
        })
        .collect();
    order.sort_by(|a, b| crate::scalar::cmp_real(b.0, a.0).then(a.1.cmp(&b.1)));

    for &(_, si) in &order {
        let surf = &surfaces[si];
        let (x0, y0, x1, y1) = screen_bounds(surf, camera);
        for y in y0..y1 {
            for x in x0..x1 {
                let u = T::from_usize_lossy(x) + half;
                let v = T::from_usize_lossy(y) + half;
                let dir = rt.mul_vec(&camera.ray(u, v));
                if let Some((t, c)) = surf.intersect(&center, &dir, camera.near) {
                    // dir has unit camera z, so t is the camera depth
                    if t < camera.far && t < zbuf[y * w + x] {
                        zbuf[y * w + x] = t;
                        color.pixel_mut(x, y).copy_from_slice(&c);
                        depth.set(x, y, 0, t);
                    }
                }
            }
        }
    }
    (color, depth)
}

fn screen_bounds<T: Real>(surf: &Surface<T>, camera: &CameraView<T>) -> (usize, usize, usize, usize) {
    let full = (0, 0, camera.width, camera.height);
    let mut lo = [T::infinity(); 2];
    let mut hi = [T::neg_infinity(); 2];
    for c in surf.bounds_corners() {
        let pc = camera.to_camera(&c);
        if pc.z() <= camera.near {
            return full;
        }
        let p = camera.project_camera(&pc);
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let clampi = |v: T, max: usize| -> usize {
        let v = v.to_f64_lossy();
        if v <= 0.0 {
            0
        } else {
            (v as usize).min(max)
        }
    };
    (
        clampi(lo[0].floor(), camera.width),
        clampi(lo[1].floor(), camera.height),
        clampi(hi[0].ceil() + T::one(), camera.width),
        clampi(hi[1].ceil() + T::one(), camera.height),
    )
}

#[derive(Clone, Debug)]
pub struct SyntheticView<T> {
    pub camera: CameraView<T>,
    pub reference: Image<T>,
    /// Camera depth of the nearest surface, 0 where nothing was hit.
    pub reference_depth: Image<T>,
}

#[derive(Clone, Debug)]
pub struct SyntheticScene<T> {
    pub spec: SceneSpec,
    pub surfaces: Vec<Surface<T>>,
    pub gaussians: GaussianSet<T>,
    pub points: NeuralPointCloud<T>,
    pub views: Vec<SyntheticView<T>>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_color<T: Real>(rng: &mut impl Rng) -> [T; 3] {
    [(); 3].map(|_| T::lit(rng.gen_range(0.05..0.95)))
}

fn layout<T: Real>(kind: SceneKind, rng: &mut impl Rng) -> Vec<Surface<T>> {
    let l = T::lit;
    let mut out = Vec::new();
    match kind {
        SceneKind::TexturedQuads => {
            for _ in 0..6 {
                let c = Vec3::new(
                    l(rng.gen_range(-2.0..2.0)),
                    l(rng.gen_range(-1.5..1.5)),
                    l(rng.gen_range(3.5..8.0)),
                );
                let hu = l(rng.gen_range(0.6..1.5));
                let hv = l(rng.gen_range(0.6..1.5));
                let yaw = l(rng.gen_range(-0.6..0.6));
                let pitch = l(rng.gen_range(-0.4..0.4));
                let rot = Mat3::rotation_y(yaw).mul_mat(&Mat3::rotation_z(pitch));
                let eu = rot.mul_vec(&Vec3::new(l(2.0) * hu, l(0.0), l(0.0)));
                let ev = rot.mul_vec(&Vec3::new(l(0.0), l(2.0) * hv, l(0.0)));
                let tilt = Mat3([
                    [l(1.0), l(0.0), l(0.0)],
                    [l(0.0), pitch.cos(), -pitch.sin()],
                    [l(0.0), pitch.sin(), pitch.cos()],
                ]);
                let (eu, ev) = (tilt.mul_vec(&eu), tilt.mul_vec(&ev));
                out.push(Surface::Quad {
                    origin: c - eu * l(0.5) - ev * l(0.5),
                    edge_u: eu,
                    edge_v: ev,
                    cells: [rng.gen_range(3..9), rng.gen_range(3..9)],
                    colors: [random_color(rng), random_color(rng)],
                });
            }
            out.push(back_wall(rng));
        }
        SceneKind::ColoredSpheres => {
            for _ in 0..8 {
                out.push(Surface::Sphere {
                    center: Vec3::new(
                        l(rng.gen_range(-2.5..2.5)),
                        l(rng.gen_range(-1.5..1.5)),
                        l(rng.gen_range(4.0..8.0)),
                    ),
                    radius: l(rng.gen_range(0.4..1.0)),
                    color: random_color(rng),
                });
            }
            out.push(back_wall(rng));
        }
        SceneKind::CheckerboardRoom => {
            let (x, y, z) = (l(4.0), l(2.5), l(4.0));
            let v = Vec3::new;
            // six inward-facing faces as (origin, edge_u, edge_v)
            let faces = [
                (v(-x, -y, z), v(l(2.0) * x, l(0.0), l(0.0)), v(l(0.0), l(2.0) * y, l(0.0))),
                (v(x, -y, -z), v(-l(2.0) * x, l(0.0), l(0.0)), v(l(0.0), l(2.0) * y, l(0.0))),
                (v(-x, -y, -z), v(l(0.0), l(0.0), l(2.0) * z), v(l(0.0), l(2.0) * y, l(0.0))),
                (v(x, -y, z), v(l(0.0), l(0.0), -l(2.0) * z), v(l(0.0), l(2.0) * y, l(0.0))),
                (v(-x, -y, -z), v(l(2.0) * x, l(0.0), l(0.0)), v(l(0.0), l(0.0), l(2.0) * z)),
                (v(-x, y, z), v(l(2.0) * x, l(0.0), l(0.0)), v(l(0.0), l(0.0), -l(2.0) * z)),
            ];
            for (origin, edge_u, edge_v) in faces {
                let cells = [
                    (edge_u.norm().to_f64_lossy() as usize).max(1),
                    (edge_v.norm().to_f64_lossy() as usize).max(1),
                ];
                out.push(Surface::Quad {
                    origin,
                    edge_u,
                    edge_v,
                    cells,
                    colors: [random_color(rng), random_color(rng)],
                });
            }
        }
    }
    out
}

fn back_wall<T: Real>(rng: &mut impl Rng) -> Surface<T> {
    let l = T::lit;
    Surface::Quad {
        origin: Vec3::new(l(-7.0), l(-5.0), l(10.0)),
        edge_u: Vec3::new(l(14.0), l(0.0), l(0.0)),
        edge_v: Vec3::new(l(0.0), l(10.0), l(0.0)),
        cells: [7, 5],
        colors: [random_color(rng), random_color(rng)],
    }
}

fn cameras<T: Real>(spec: &SceneSpec) -> Vec<CameraView<T>> {
    let [w, h] = spec.resolution;
    let focal = T::lit(0.9 * w.max(h) as f64);
    let up = Vec3::new(T::zero(), T::one(), T::zero());
    let n = spec.n_views.max(1);
    (0..spec.n_views)
        .map(|i| {
            let f = if n == 1 {
                0.0
            } else {
                i as f64 / (n - 1) as f64 - 0.5
            };
            let pose = match spec.kind {
                SceneKind::CheckerboardRoom => {
                    let a = std::f64::consts::TAU * i as f64 / n as f64;
                    let eye = Vec3::new(T::lit(0.3 * a.sin()), T::lit(-0.5), T::zero());
                    let target = Vec3::new(T::lit(a.sin()), T::lit(-0.6), T::lit(a.cos()));
                    Pose::look_at(eye, target, up)
                }
                _ => {
                    let a = 0.3 * f;
                    let target = Vec3::new(T::zero(), T::zero(), T::lit(6.0));
                    let eye = target
                        + Vec3::new(T::lit(6.0 * a.sin()), T::lit(0.3 * f), T::lit(-6.0 * a.cos()));
                    Pose::look_at(eye, target, up)
                }
            };
            let mut cam = CameraView::new(w, h, focal, pose);
            cam.near = T::lit(0.05);
            cam.far = T::lit(100.0);
            cam
        })
        .collect()
}

/// Picks a surface index with probability proportional to area.
fn pick(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let r = rng.gen::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= r).min(cdf.len() - 1)
}

fn area_cdf<T: Real>(surfaces: &[Surface<T>]) -> Vec<f64> {
    let mut acc = 0.0;
    surfaces
        .iter()
        .map(|s| {
            acc += s.area().to_f64_lossy();
            acc
        })
        .collect()
}

/// Samples `n` flat Gaussians covering `surfaces`.
pub fn sample_gaussians<T: Real>(
    surfaces: &[Surface<T>],
    n: usize,
    sh_degree: usize,
    rng: &mut impl Rng,
) -> GaussianSet<T> {
    assert!(sh_degree <= MAX_SH_DEGREE);
    let cdf = area_cdf(surfaces);
    let total = cdf.last().copied().unwrap_or(0.0);
    let spacing = (total / n.max(1) as f64).sqrt();
    let tangent = T::lit(0.7 * spacing).ln();
    let normal = T::lit(0.02 * spacing).ln();
    let n_coeffs = sh_coeff_count(sh_degree);
    let y0 = T::lit(SH_C0);
    let half = T::lit(0.5);
    let gaussians = (0..n)
        .map(|_| {
            let s = surfaces[pick(&cdf, rng)].sample(rng);
            let mut sh = vec![[T::zero(); 3]; n_coeffs];
            sh[0] = s.color.map(|c| (c - half) / y0);
            for coeff in sh.iter_mut().skip(1) {
                *coeff = [(); 3].map(|_| T::lit(rng.gen_range(-0.02..0.02)));
            }
            let [t1, t2, nn] = s.frame;
            let jitter = T::lit(rng.gen_range(0.0..0.05));
            Gaussian {
                position: s.position,
                log_scale: Vec3::new(tangent, tangent, normal),
                rotation: Quat::from_mat3(&Mat3::from_cols(t1, t2, nn)),
                opacity: T::one() - jitter,
                sh,
            }
        })
        .collect();
    GaussianSet {
        sh_degree,
        gaussians,
    }
}

/// Samples `n` neural points whose first three features carry the surface
/// color and whose remaining features are 1.
pub fn sample_points<T: Real>(
    surfaces: &[Surface<T>],
    n: usize,
    feature_dim: usize,
    rng: &mut impl Rng,
) -> NeuralPointCloud<T> {
    let cdf = area_cdf(surfaces);
    let total = cdf.last().copied().unwrap_or(0.0);
    let size = T::lit((total / n.max(1) as f64).sqrt());
    let points = (0..n)
        .map(|_| {
            let s = surfaces[pick(&cdf, rng)].sample(rng);
            let features = (0..feature_dim)
                .map(|k| if k < 3 { s.color[k] } else { T::one() })
                .collect();
            NeuralPoint {
                position: s.position,
                size,
                features,
                opacity: T::one(),
            }
        })
        .collect();
    NeuralPointCloud {
        feature_dim,
        points,
    }
}

/// Builds the scene described by `spec`; a pure function of `spec`.
pub fn generate_synthetic<T: Real>(spec: &SceneSpec) -> Result<SyntheticScene<T>> {
    if spec.n_gaussians == 0 && spec.n_points == 0 {
        return Err(Error::EmptyScene);
    }
    if spec.sh_degree > MAX_SH_DEGREE {
        return Err(Error::Config(format!(
            "sh_degree {} exceeds {MAX_SH_DEGREE}",
            spec.sh_degree
        )));
    }
    if spec.resolution[0] == 0 || spec.resolution[1] == 0 {
        return Err(Error::Config("resolution must be positive".into()));
    }
    let surfaces = layout::<T>(spec.kind, &mut rng_for(spec.seed, 0));
    let gaussians = sample_gaussians(
        &surfaces,
        spec.n_gaussians,
        spec.sh_degree,
        &mut rng_for(spec.seed, 1),
    );
    let points = sample_points(
        &surfaces,
        spec.n_points,
        spec.feature_dim,
        &mut rng_for(spec.seed, 2),
    );
    let views = cameras::<T>(spec)
        .into_iter()
        .map(|camera| {
            let (reference, reference_depth) = rasterize_reference(&surfaces, &camera);
            SyntheticView {
                camera,
                reference,
                reference_depth,
            }
        })
        .collect();
    Ok(SyntheticScene {
        spec: spec.clone(),
        surfaces,
        gaussians,
        points,
        views,
    })
}
