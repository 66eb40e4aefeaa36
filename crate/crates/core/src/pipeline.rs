//! One frame of the hybrid renderer: Gaussian periphery, gaze sampled late,
//! foveal point pass with the resolver, blending and tone mapping.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::composite::{compose, foveal_mask, tonemap, BlendMask};
use crate::error::{Error, Result};
use crate::fovea::{
    cull_against_frame, make_subfrustum, splat_pyramid, CullParams, CullResult, FramePyramid,
    Subfrustum, FRAGMENTS_PER_PIXEL, PYRAMID_LAYERS,
};
use crate::image::Image;
use crate::periphery::{render_periphery, PeripheryFrame, SortMode};
use crate::resolver::{bypass_resolve, resolve, ResolverWeights};
use crate::scalar::Real;
use crate::scene::{FoveaConfig, GaussianSet, NeuralPointCloud};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    #[default]
    Foveated,
    /// Gaussians only; no foveal pass.
    FullGs,
    /// Grayscale blend factor over the frame.
    MaskDebug,
}

impl RenderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RenderMode::Foveated => "foveated",
            RenderMode::FullGs => "full_gs",
            RenderMode::MaskDebug => "mask_debug",
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RenderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "foveated" => Ok(RenderMode::Foveated),
            "full_gs" | "full-gs" => Ok(RenderMode::FullGs),
            "mask_debug" | "mask-debug" => Ok(RenderMode::MaskDebug),
            other => Err(Error::Config(format!("unknown render mode {other:?}"))),
        }
    }
}

/// How the foveal image is produced from the point pyramid.
#[derive(Clone, Debug, Default)]
pub enum ResolverChoice {
    /// Analytic hole filling and alpha mixing.
    #[default]
    Bypass,
    Network(Arc<ResolverWeights>),
}

/// Feature toggles matching the performance ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    pub no_depth_cull: bool,
    pub no_edge_term: bool,
    /// Fall back to a single global depth sort for the periphery.
    pub no_popping_fix: bool,
}

#[derive(Clone, Debug)]
pub struct RenderOptions<T> {
    pub mode: RenderMode,
    pub sort_mode: SortMode,
    pub resolver: ResolverChoice,
    pub fovea: FoveaConfig<T>,
    pub cull: CullParams<T>,
    pub ablations: Ablations,
    pub pyramid_levels: usize,
    pub fragments_per_pixel: usize,
}

impl<T: Real> Default for RenderOptions<T> {
    fn default() -> Self {
        Self {
            mode: RenderMode::Foveated,
            sort_mode: SortMode::Hierarchical,
            resolver: ResolverChoice::Bypass,
            fovea: FoveaConfig::default(),
            cull: CullParams::default(),
            ablations: Ablations::default(),
            pyramid_levels: PYRAMID_LAYERS,
            fragments_per_pixel: FRAGMENTS_PER_PIXEL,
        }
    }
}

impl<T: Real> RenderOptions<T> {
    /// Sort mode after applying the popping ablation.
    pub fn effective_sort_mode(&self) -> SortMode {
        if self.ablations.no_popping_fix {
            SortMode::Global
        } else {
            self.sort_mode
        }
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub periphery: f64,
    pub fovea_points: f64,
    pub resolver: f64,
    pub combine: f64,
    pub tonemap: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.periphery + self.fovea_points + self.resolver + self.combine + self.tonemap
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Everything produced while rendering one frame.
#[derive(Clone, Debug)]
pub struct FrameOutput<T> {
    /// Display-ready RGB in [0, 1].
    pub image: Image<T>,
    /// Linear composited RGB before tone mapping.
    pub linear: Image<T>,
    pub periphery: PeripheryFrame<T>,
    /// Gaze used by the foveal pass, full-image pixels.
    pub gaze: [T; 2],
    pub subfrustum: Option<Subfrustum<T>>,
    pub cull: Option<CullResult>,
    pub pyramid: Option<FramePyramid<T>>,
    pub foveal: Option<Image<T>>,
    pub mask: Option<BlendMask<T>>,
    pub timings: StageTimings,
}

impl<T: Real> FrameOutput<T> {
    /// Blend factor over the whole frame; zero outside the crop and in
    /// Gaussian-only frames.
    pub fn mask_image(&self) -> Image<T> {
        let (w, h) = self.linear.dims();
        let mut out = Image::new(w, h, 1);
        if let (Some(mask), Some(sub)) = (&self.mask, &self.subfrustum) {
            let [ox, oy] = sub.crop_origin;
            for y in 0..mask.c.height() {
                for x in 0..mask.c.width() {
                    out.set(ox + x, oy + y, 0, mask.c.get(x, y, 0));
                }
            }
        }
        out
    }
}

/// Borrowed scene plus render options.
pub struct FoveatedRenderer<'a, T> {
    pub gaussians: &'a GaussianSet<T>,
    pub points: &'a NeuralPointCloud<T>,
    pub options: RenderOptions<T>,
}

impl<'a, T: Real> FoveatedRenderer<'a, T> {
    pub fn new(
        gaussians: &'a GaussianSet<T>,
        points: &'a NeuralPointCloud<T>,
        options: RenderOptions<T>,
    ) -> Self {
        Self {
            gaussians,
            points,
            options,
        }
    }

    /// Renders with a fixed gaze.
    pub fn render(&self, camera: &CameraView<T>, gaze: [T; 2]) -> Result<FrameOutput<T>> {
        self.render_late_latch(camera, || gaze)
    }

    /// Renders one frame. `gaze` is called once, after the peripheral pass
    /// and before any gaze-dependent work, so the newest sample is used.
    pub fn render_late_latch(
        &self,
        camera: &CameraView<T>,
        gaze: impl FnOnce() -> [T; 2],
    ) -> Result<FrameOutput<T>> {
        camera.validate()?;
        let opts = &self.options;
        opts.fovea.validate()?;
        let mut timings = StageTimings::default();

        let t = Instant::now();
        let periphery = render_periphery(self.gaussians, camera, opts.effective_sort_mode());
        timings.periphery = ms_since(t);

        let gaze = clamp_gaze(gaze(), camera);

        if opts.mode == RenderMode::FullGs {
            let t = Instant::now();
            let image = tonemap(&periphery.color, camera.exposure, camera.gamma);
            timings.tonemap = ms_since(t);
            return Ok(FrameOutput {
                image,
                linear: periphery.color.clone(),
                periphery,
                gaze,
                subfrustum: None,
                cull: None,
                pyramid: None,
                foveal: None,
                mask: None,
                timings,
            });
        }

        let t = Instant::now();
        let sub = make_subfrustum(camera, gaze, opts.fovea.d_f);
        let cull_params = CullParams {
            occlusion: opts.cull.occlusion && !opts.ablations.no_depth_cull,
            ..opts.cull
        };
        let cull = cull_against_frame(self.points, &sub, &periphery, &cull_params)?;
        let pyramid = splat_pyramid(
            self.points,
            &cull.indices,
            &sub,
            opts.pyramid_levels,
            opts.fragments_per_pixel,
        )?;
        timings.fovea_points = ms_since(t);

        let t = Instant::now();
        let [ox, oy] = sub.crop_origin;
        let crop = periphery.color.crop(ox, oy, sub.crop_size, sub.crop_size)?;
        let foveal = match &opts.resolver {
            ResolverChoice::Bypass => bypass_resolve(&pyramid, &crop)?,
            ResolverChoice::Network(w) => resolve(&pyramid, &crop, w)?,
        };
        timings.resolver = ms_since(t);

        let t = Instant::now();
        let mask = foveal_mask(
            &foveal,
            sub.crop_origin,
            gaze,
            opts.fovea.d_f,
            opts.fovea.m,
            opts.fovea.gamma_edge,
            !opts.ablations.no_edge_term,
        )?;
        let linear = compose(&periphery.color, &foveal, &mask, sub.crop_origin)?;
        timings.combine = ms_since(t);

        let mut out = FrameOutput {
            image: Image::new(0, 0, 3),
            linear,
            periphery,
            gaze,
            subfrustum: Some(sub),
            cull: Some(cull),
            pyramid: Some(pyramid),
            foveal: Some(foveal),
            mask: Some(mask),
            timings,
        };
        let t = Instant::now();
        out.image = match opts.mode {
            RenderMode::MaskDebug => {
                let m = out.mask_image();
                let (w, h) = m.dims();
                Image::from_fn(w, h, 3, |x, y, _| m.get(x, y, 0))
            }
            _ => tonemap(&out.linear, camera.exposure, camera.gamma),
        };
        out.timings.tonemap = ms_since(t);
        Ok(out)
    }
}

/// Keeps a gaze sample inside the image; non-finite samples map to the
/// image center.
pub fn clamp_gaze<T: Real>(gaze: [T; 2], camera: &CameraView<T>) -> [T; 2] {
    let w = T::from_usize_lossy(camera.width);
    let h = T::from_usize_lossy(camera.height);
    if !(gaze[0].is_finite() && gaze[1].is_finite()) {
        return [w * T::lit(0.5), h * T::lit(0.5)];
    }
    [gaze[0].max(T::zero()).min(w), gaze[1].max(T::zero()).min(h)]
}
