//! Hybrid foveated radiance-field renderer.
//!
//! The periphery is drawn from 3D Gaussians with per-pixel ordering and an
//! accumulated depth buffer. Around the gaze, neural points are culled
//! against that depth, splatted into an image pyramid and resolved by a
//! small CNN that also sees the peripheral crop. The two images are blended
//! with a radial and edge-aware mask.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! bottom of this file name the common instantiations.

pub mod camera;
pub mod composite;
pub mod error;
pub mod eval;
pub mod fovea;
pub mod hash;
pub mod image;
pub mod linalg;
pub mod periphery;
pub mod pipeline;
pub mod resolver;
pub mod scalar;
pub mod scene;

pub use camera::{CameraView, Intrinsics, Pose};
pub use error::{Error, Result};
pub use image::Image;
pub use linalg::{Mat3, Quat, Vec3};
pub use periphery::{render_periphery, PeripheryFrame, SortMode};
pub use pipeline::{FoveatedRenderer, FrameOutput, RenderMode, RenderOptions, StageTimings};
pub use scalar::Real;
pub use scene::{FoveaConfig, Gaussian, GaussianSet, NeuralPoint, NeuralPointCloud};

pub type CameraView32 = CameraView<f32>;
pub type CameraView64 = CameraView<f64>;
pub type Image32 = Image<f32>;
pub type Image64 = Image<f64>;
pub type GaussianSet32 = GaussianSet<f32>;
pub type GaussianSet64 = GaussianSet<f64>;
pub type NeuralPointCloud32 = NeuralPointCloud<f32>;
pub type NeuralPointCloud64 = NeuralPointCloud<f64>;
pub type FrameOutput32 = FrameOutput<f32>;
pub type RenderOptions32 = RenderOptions<f32>;
