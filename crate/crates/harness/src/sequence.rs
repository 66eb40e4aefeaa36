//! Offline trajectory rendering and mode comparison.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use fovea_core::eval::{regularizer_r, FovealRegion, MetricRow, RegionShape};
use fovea_core::fovea::make_subfrustum;
use fovea_core::pipeline::{ResolverChoice, StageTimings};
use fovea_core::resolver::{load_weights, ResolverArch, ResolverWeights, DEFAULT_FILTERS};
use fovea_core::{FoveatedRenderer, FrameOutput, Image32, RenderMode, RenderOptions};

use crate::error::{at, HarnessError, Result};
use crate::gaze::GazeTrace;
use crate::io::{save_f32, save_png, LoadedScene};

/// Where resolver weights come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolverSpec {
    Bypass,
    /// Crop pass-through weights.
    Identity,
    /// Untrained weights drawn from a seed.
    Random(u64),
    File(PathBuf),
}

impl FromStr for ResolverSpec {
    type Err = HarnessError;

    /// `bypass`, `identity`, `random[:SEED]`, or a path to a weights file.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "bypass" => Self::Bypass,
            "identity" => Self::Identity,
            "random" => Self::Random(0),
            _ => match s.strip_prefix("random:") {
                Some(seed) => Self::Random(
                    seed.parse()
                        .map_err(|_| HarnessError::Usage(format!("bad seed in {s:?}")))?,
                ),
                None => Self::File(PathBuf::from(s)),
            },
        })
    }
}

impl ResolverSpec {
    pub fn build(&self, feature_dim: usize) -> Result<ResolverChoice> {
        let w = match self {
            Self::Bypass => return Ok(ResolverChoice::Bypass),
            Self::Identity => ResolverWeights::identity(feature_dim, &DEFAULT_FILTERS)?,
            Self::Random(seed) => {
                ResolverWeights::random(ResolverArch::new(feature_dim, &DEFAULT_FILTERS), *seed)?
            }
            Self::File(p) => load_weights(p)?,
        };
        Ok(ResolverChoice::Network(Arc::new(w)))
    }

    pub fn label(&self) -> String {
        match self {
            Self::Bypass => "bypass".into(),
            Self::Identity => "identity".into(),
            Self::Random(seed) => format!("random:{seed}"),
            Self::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SequenceOptions {
    pub render: RenderOptions<f32>,
    /// Also write lossless float dumps of each frame.
    pub write_float: bool,
    pub region: RegionShape,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        Self {
            render: RenderOptions::default(),
            write_float: false,
            region: RegionShape::Disk,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SequenceReport {
    pub frames: Vec<PathBuf>,
    pub metrics: Vec<MetricRow>,
    pub image_hashes: Vec<u64>,
    pub timings: Vec<StageTimings>,
}

fn image_center(scene: &LoadedScene, i: usize) -> [f64; 2] {
    let c = &scene.cameras[i];
    [c.width as f64 * 0.5, c.height as f64 * 0.5]
}

/// Gaze per camera from `trace`, or the image center without one.
pub fn frame_gazes(scene: &LoadedScene, trace: Option<&GazeTrace>) -> Vec<[f32; 2]> {
    let n = scene.cameras.len();
    let fallback = if n > 0 { image_center(scene, 0) } else { [0.0; 2] };
    let raw = match trace {
        Some(t) => t.per_frame(0, n, fallback),
        None => (0..n).map(|i| image_center(scene, i)).collect(),
    };
    raw.into_iter().map(|[u, v]| [u as f32, v as f32]).collect()
}

/// Mean regularizer of a rendered frame, 0 for Gaussian-only frames.
pub fn frame_regularizer(out: &FrameOutput<f32>, d_f: f32, shape: RegionShape) -> Result<f32> {
    let (Some(f), Some(sub)) = (&out.foveal, &out.subfrustum) else {
        return Ok(0.0);
    };
    let region = FovealRegion {
        crop_origin: sub.crop_origin,
        crop_size: sub.crop_size,
        gaze: out.gaze,
        d_f,
        shape,
    };
    Ok(regularizer_r(f, &out.periphery.color, &region)?)
}

/// Renders every camera of `scene` into `out_dir` as `frame_NNNN.png` and,
/// when ground truth exists, writes `metrics.csv`.
pub fn render_sequence(
    scene: &LoadedScene,
    trace: Option<&GazeTrace>,
    opts: &SequenceOptions,
    out_dir: impl AsRef<Path>,
) -> Result<SequenceReport> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(at(out_dir))?;
    let gazes = frame_gazes(scene, trace);
    let renderer = FoveatedRenderer::new(&scene.gaussians, &scene.points, opts.render.clone());
    let mut report = SequenceReport::default();
    for (i, cam) in scene.cameras.iter().enumerate() {
        let out = renderer.render(cam, gazes[i])?;
        let path = out_dir.join(format!("frame_{i:04}.png"));
        save_png(&path, &out.image)?;
        if opts.write_float {
            save_f32(out_dir.join(format!("frame_{i:04}.f32")), &out.linear)?;
        }
        report.image_hashes.push(out.image.fingerprint());
        report.timings.push(out.timings);
        report.frames.push(path);
        if let Some(Some(gt)) = scene.ground_truth.get(i) {
            if gt.dims() != out.linear.dims() {
                return Err(HarnessError::Usage(format!(
                    "ground truth for view {i} is {:?}, render is {:?}",
                    gt.dims(),
                    out.linear.dims()
                )));
            }
            let r = frame_regularizer(&out, opts.render.fovea.d_f, opts.region)?;
            report
                .metrics
                .push(MetricRow::compute(format!("view_{i:03}"), &out.image, gt, r)?);
        }
    }
    if !report.metrics.is_empty() {
        write_metrics_csv(out_dir.join("metrics.csv"), &report.metrics)?;
    }
    Ok(report)
}

pub fn write_metrics_csv<R: Serialize>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(at(path))?;
    let mut w = csv::Writer::from_writer(f);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(at(path))?;
    Ok(())
}

/// Foveal-crop metrics of one mode on one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub mode: String,
    pub view_id: String,
    pub l1: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub dssim: f64,
}

/// Crop window used to score view `cam` at `gaze`.
pub fn foveal_window(cam: &fovea_core::CameraView32, gaze: [f32; 2], d_f: f32) -> ([usize; 2], usize) {
    let sub = make_subfrustum(cam, fovea_core::pipeline::clamp_gaze(gaze, cam), d_f);
    (sub.crop_origin, sub.crop_size)
}

/// Scores Gaussian-only, foveated (with `weights`) and bypass-foveated
/// renders against ground truth on the foveal crop only.
pub fn compare_modes(
    scene: &LoadedScene,
    trace: Option<&GazeTrace>,
    base: &RenderOptions<f32>,
    weights: &ResolverSpec,
) -> Result<Vec<CompareRow>> {
    let gazes = frame_gazes(scene, trace);
    let dim = scene.points.feature_dim;
    let variants = [
        ("full_gs".to_string(), RenderMode::FullGs, ResolverChoice::Bypass),
        (
            format!("foveated[{}]", weights.label()),
            RenderMode::Foveated,
            weights.build(dim)?,
        ),
        ("bypass_foveated".to_string(), RenderMode::Foveated, ResolverChoice::Bypass),
    ];
    let mut rows = Vec::new();
    for (i, cam) in scene.cameras.iter().enumerate() {
        let Some(Some(gt)) = scene.ground_truth.get(i) else {
            return Err(HarnessError::Usage(format!("view {i} has no ground truth")));
        };
        if gt.dims() != (cam.width, cam.height) {
            return Err(HarnessError::Usage(format!(
                "ground truth for view {i} does not match the camera resolution"
            )));
        }
        let (origin, size) = foveal_window(cam, gazes[i], base.fovea.d_f);
        let gt_crop = gt.crop(origin[0], origin[1], size, size)?;
        for (label, mode, resolver) in &variants {
            let opts = RenderOptions {
                mode: *mode,
                resolver: resolver.clone(),
                ..base.clone()
            };
            let out = FoveatedRenderer::new(&scene.gaussians, &scene.points, opts).render(cam, gazes[i])?;
            let crop = out.image.crop(origin[0], origin[1], size, size)?;
            rows.push(compare_row(label, i, &crop, &gt_crop)?);
        }
    }
    Ok(rows)
}

fn compare_row(mode: &str, view: usize, a: &Image32, b: &Image32) -> Result<CompareRow> {
    let m = MetricRow::compute(format!("view_{view:03}"), a, b, 0.0)?;
    Ok(CompareRow {
        mode: mode.to_string(),
        view_id: m.view_id,
        l1: m.l1,
        psnr: m.psnr,
        ssim: m.ssim,
        dssim: m.dssim,
    })
}
