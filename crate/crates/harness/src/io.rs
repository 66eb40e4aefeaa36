//! Scene directories, image files and float dumps.
//!
//! A scene directory holds `scene.toml` (optional), `gaussians.ply`,
//! `points.ply`, `cameras.json`, and per-view ground truth as
//! `gt/view_NNN.f32` (lossless) plus `gt/view_NNN.png` (for viewing).

use std::path::{Path, PathBuf};

use fovea_core::scene::ply;
use fovea_core::scene::synth::SyntheticScene;
use fovea_core::{CameraView32, GaussianSet32, Image32, NeuralPointCloud32};

use crate::error::{at, HarnessError, Result};

const FLOAT_MAGIC: &[u8; 4] = b"FVIM";

#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub gaussians: GaussianSet32,
    pub points: NeuralPointCloud32,
    pub cameras: Vec<CameraView32>,
    /// Ground truth per camera, where available.
    pub ground_truth: Vec<Option<Image32>>,
}

impl LoadedScene {
    pub fn from_synthetic(s: SyntheticScene<f32>) -> Self {
        let cameras = s.views.iter().map(|v| v.camera).collect();
        let ground_truth = s.views.into_iter().map(|v| Some(v.reference)).collect();
        Self {
            gaussians: s.gaussians,
            points: s.points,
            cameras,
            ground_truth,
        }
    }
}

fn gt_path(dir: &Path, i: usize, ext: &str) -> PathBuf {
    dir.join("gt").join(format!("view_{i:03}.{ext}"))
}

pub fn write_scene(dir: impl AsRef<Path>, scene: &SyntheticScene<f32>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("gt")).map_err(at(dir))?;
    let spec = dir.join("scene.toml");
    std::fs::write(&spec, scene.spec.to_toml_string()).map_err(at(&spec))?;
    ply::save_gaussians(dir.join("gaussians.ply"), &scene.gaussians)?;
    ply::save_points(dir.join("points.ply"), &scene.points)?;
    let cams: Vec<CameraView32> = scene.views.iter().map(|v| v.camera).collect();
    let cam_path = dir.join("cameras.json");
    std::fs::write(&cam_path, serde_json::to_string_pretty(&cams)?).map_err(at(&cam_path))?;
    for (i, v) in scene.views.iter().enumerate() {
        save_f32(gt_path(dir, i, "f32"), &v.reference)?;
        save_png(gt_path(dir, i, "png"), &v.reference)?;
    }
    Ok(())
}

pub fn load_scene(dir: impl AsRef<Path>) -> Result<LoadedScene> {
    let dir = dir.as_ref();
    let gaussians = ply::load_gaussians(dir.join("gaussians.ply"))?;
    let points_path = dir.join("points.ply");
    let points = if points_path.exists() {
        ply::load_points(&points_path)?
    } else {
        NeuralPointCloud32::new(fovea_core::scene::DEFAULT_FEATURE_DIM)
    };
    let cam_path = dir.join("cameras.json");
    let text = std::fs::read_to_string(&cam_path).map_err(at(&cam_path))?;
    let cameras: Vec<CameraView32> = serde_json::from_str(&text)?;
    for c in &cameras {
        c.validate()?;
    }
    let mut ground_truth = Vec::with_capacity(cameras.len());
    for i in 0..cameras.len() {
        let p = gt_path(dir, i, "f32");
        ground_truth.push(if p.exists() { Some(load_f32(&p)?) } else { None });
    }
    Ok(LoadedScene {
        gaussians,
        points,
        cameras,
        ground_truth,
    })
}

/// Writes an RGB (3-channel) or grayscale (1-channel) image as 8-bit PNG.
pub fn save_png(path: impl AsRef<Path>, img: &Image32) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    match img.channels() {
        3 => image::RgbImage::from_raw(w, h, img.to_rgb8())
            .expect("buffer matches dimensions")
            .save(path)?,
        1 => {
            let bytes = img.data().iter().map(|&v| fovea_core::image::quantize_u8(v)).collect();
            image::GrayImage::from_raw(w, h, bytes)
                .expect("buffer matches dimensions")
                .save(path)?
        }
        c => {
            return Err(HarnessError::Usage(format!(
                "cannot write a {c}-channel image as PNG"
            )))
        }
    }
    Ok(())
}

/// Reads an 8-bit RGB PNG into [0, 1] floats.
pub fn load_png(path: impl AsRef<Path>) -> Result<Image32> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|b| b as f32 / 255.0).collect();
    Ok(Image32::from_vec(w as usize, h as usize, 3, data)?)
}

/// Lossless float dump: `"FVIM"`, u32 width, height, channels, then f32
/// samples, all little-endian.
pub fn save_f32(path: impl AsRef<Path>, img: &Image32) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + img.data().len() * 4);
    out.extend_from_slice(FLOAT_MAGIC);
    for d in [img.width(), img.height(), img.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out).map_err(at(path))
}

pub fn load_f32(path: impl AsRef<Path>) -> Result<Image32> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(at(path))?;
    let bad = |m: &str| HarnessError::Usage(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..4] != FLOAT_MAGIC {
        return Err(bad("not a float image dump"));
    }
    let dim = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize;
    let (w, h, c) = (dim(0), dim(1), dim(2));
    let body = &bytes[16..];
    if body.len() != w * h * c * 4 {
        return Err(bad("size does not match header"));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Image32::from_vec(w, h, c, data)?)
}
