//! Full-frame peripheral rasterization of Gaussians.
//!
//! Splats are binned into 16×16 tiles in global center-depth order. Each
//! pixel then blends its fragments front to back in one of three orders:
//! the global order, an exact per-pixel sort, or the global order passed
//! through a small per-pixel resort window. Alongside color and alpha the
//! rasterizer accumulates the transmittance-weighted fragment depth,
//! `D = Σ dᵢ αᵢ Πₘ<ᵢ (1 − αₘ)`, which the foveal pass uses for occlusion
//! culling.

pub mod project;
pub mod sh;

use std::cmp::Ordering;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::Vec3;
use crate::scalar::{cmp_real, Real};
use crate::scene::GaussianSet;

pub use project::{project_gaussian, Splat2D};

pub const TILE_SIZE: usize = 16;
/// Per-pixel resort window of the hierarchical mode.
pub const RESORT_WINDOW: usize = 16;
/// Blending stops once transmittance drops below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortMode {
    /// One depth sort of splat centers for the whole frame (3DGS).
    Global,
    /// Every pixel sorts all of its fragments by their own depth.
    PerPixelExact,
    /// Tile-sorted fragments resorted per pixel through a K-entry window.
    Hierarchical,
}

impl SortMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Global => "global",
            Self::PerPixelExact => "per_pixel_exact",
            Self::Hierarchical => "hierarchical",
        }
    }
}

impl FromStr for SortMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Self::Global),
            "per_pixel_exact" | "exact" => Ok(Self::PerPixelExact),
            "hierarchical" => Ok(Self::Hierarchical),
            _ => Err(Error::Config(format!("unknown sort mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for SortMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One splat's contribution to one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment<T> {
    pub depth: T,
    pub alpha: T,
    pub color: [T; 3],
    pub index: u32,
}

impl<T: Real> Fragment<T> {
    /// Front-to-back order: depth, then source index.
    #[inline]
    pub fn order(&self, other: &Self) -> Ordering {
        cmp_real(self.depth, other.depth).then(self.index.cmp(&other.index))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PixelAccum<T> {
    pub color: [T; 3],
    pub alpha: T,
    pub depth: T,
}

/// Front-to-back compositing state of one pixel.
#[derive(Clone, Copy, Debug)]
pub struct Blender<T> {
    color: [T; 3],
    alpha: T,
    depth: T,
    transmittance: T,
}

impl<T: Real> Default for Blender<T> {
    fn default() -> Self {
        Self {
            color: [T::zero(); 3],
            alpha: T::zero(),
            depth: T::zero(),
            transmittance: T::one(),
        }
    }
}

impl<T: Real> Blender<T> {
    /// Composites `f` behind what has been blended so far. Returns `false`
    /// once the pixel is saturated and further fragments must be ignored.
    #[inline]
    pub fn push(&mut self, f: &Fragment<T>) -> bool {
        let w = f.alpha * self.transmittance;
        for c in 0..3 {
            self.color[c] += f.color[c] * w;
        }
        self.alpha += w;
        self.depth += f.depth * w;
        self.transmittance *= T::one() - f.alpha;
        self.transmittance >= T::lit(MIN_TRANSMITTANCE)
    }

    pub fn transmittance(&self) -> T {
        self.transmittance
    }

    pub fn finish(&self) -> PixelAccum<T> {
        PixelAccum {
            color: self.color,
            alpha: self.alpha.min(T::one()),
            depth: self.depth,
        }
    }
}

/// Blends `fragments` in the given order with the rasterizer's cutoffs.
pub fn blend_fragments<T: Real>(fragments: &[Fragment<T>]) -> PixelAccum<T> {
    let mut b = Blender::default();
    for f in fragments {
        if f.alpha < T::lit(project::MIN_ALPHA) {
            continue;
        }
        if !b.push(f) {
            break;
        }
    }
    b.finish()
}

/// Peripheral render output at camera resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct PeripheryFrame<T> {
    /// Linear HDR RGB.
    pub color: Image<T>,
    /// Accumulated opacity in [0, 1].
    pub alpha: Image<T>,
    /// Accumulated (unnormalized) depth; 0 where nothing was blended.
    pub depth: Image<T>,
    /// Fragments examined per pixel: all of them for the exact mode, those
    /// seen before saturation for the streaming modes.
    pub fragment_count: Vec<u32>,
}

impl<T: Real> PeripheryFrame<T> {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            color: Image::new(width, height, 3),
            alpha: Image::new(width, height, 1),
            depth: Image::new(width, height, 1),
            fragment_count: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }
}

/// Fragment of `splat` at pixel (`x`, `y`), if any.
#[inline]
pub fn fragment_at<T: Real>(
    splat: &Splat2D<T>,
    camera: &CameraView<T>,
    x: usize,
    y: usize,
) -> Option<Fragment<T>> {
    let px = T::from_usize_lossy(x) + T::lit(0.5);
    let py = T::from_usize_lossy(y) + T::lit(0.5);
    let alpha = splat.alpha_at(px, py)?;
    let ray: Vec3<T> = camera.ray(px, py);
    Some(Fragment {
        depth: splat.depth_along(&ray),
        alpha,
        color: splat.color,
        index: splat.index,
    })
}

/// Projects every Gaussian, dropping culled ones; output is in index order.
pub fn project_all<T: Real>(set: &GaussianSet<T>, camera: &CameraView<T>) -> Vec<Splat2D<T>> {
    set.gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| project_gaussian(g, i, set.sh_degree, camera))
        .collect()
}

pub fn render_periphery<T: Real>(
    set: &GaussianSet<T>,
    camera: &CameraView<T>,
    mode: SortMode,
) -> PeripheryFrame<T> {
    let splats = project_all(set, camera);
    render_splats(&splats, camera, mode)
}

/// Per-tile lists of splat positions, each in global (depth, index) order.
fn bin_tiles<T: Real>(splats: &[Splat2D<T>], tiles_x: usize, tiles_y: usize) -> Vec<Vec<u32>> {
    let mut order: Vec<u32> = (0..splats.len() as u32).collect();
    order.par_sort_unstable_by(|&a, &b| {
        let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
        cmp_real(sa.depth, sb.depth).then(sa.index.cmp(&sb.index))
    });
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for &i in &order {
        let [x0, y0, x1, y1] = splats[i as usize].bbox;
        for ty in y0 / TILE_SIZE..=(y1 - 1) / TILE_SIZE {
            for tx in x0 / TILE_SIZE..=(x1 - 1) / TILE_SIZE {
                tiles[ty * tiles_x + tx].push(i);
            }
        }
    }
    tiles
}

/// Sorted resort window: fragments enter in tile order and leave nearest
/// first once the window is full.
struct ResortWindow<T> {
    buf: [Fragment<T>; RESORT_WINDOW],
    len: usize,
}

impl<T: Real> ResortWindow<T> {
    fn new() -> Self {
        let zero = Fragment {
            depth: T::zero(),
            alpha: T::zero(),
            color: [T::zero(); 3],
            index: 0,
        };
        Self {
            buf: [zero; RESORT_WINDOW],
            len: 0,
        }
    }

    /// Inserts `f`; when full, returns the nearest fragment to blend now.
    fn push(&mut self, f: Fragment<T>) -> Option<Fragment<T>> {
        if self.len == RESORT_WINDOW {
            if f.order(&self.buf[0]) == Ordering::Less {
                return Some(f);
            }
            let out = self.buf[0];
            self.buf.copy_within(1..RESORT_WINDOW, 0);
            self.len -= 1;
            self.insert(f);
            return Some(out);
        }
        self.insert(f);
        None
    }

    fn insert(&mut self, f: Fragment<T>) {
        let mut pos = self.len;
        while pos > 0 && f.order(&self.buf[pos - 1]) == Ordering::Less {
            self.buf[pos] = self.buf[pos - 1];
            pos -= 1;
        }
        self.buf[pos] = f;
        self.len += 1;
    }

    fn drain(&self) -> &[Fragment<T>] {
        &self.buf[..self.len]
    }
}

struct TileOut<T> {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    px: Vec<PixelAccum<T>>,
    counts: Vec<u32>,
}

fn shade_pixel<T: Real>(
    splats: &[Splat2D<T>],
    list: &[u32],
    camera: &CameraView<T>,
    x: usize,
    y: usize,
    mode: SortMode,
    scratch: &mut Vec<Fragment<T>>,
) -> (PixelAccum<T>, u32) {
    let mut blender = Blender::default();
    let mut count = 0u32;
    let frags = list
        .iter()
        .filter_map(|&i| fragment_at(&splats[i as usize], camera, x, y));
    match mode {
        SortMode::Global => {
            for f in frags {
                count += 1;
                if !blender.push(&f) {
                    break;
                }
            }
        }
        SortMode::PerPixelExact => {
            scratch.clear();
            scratch.extend(frags);
            count = scratch.len() as u32;
            scratch.sort_unstable_by(Fragment::order);
            for f in scratch.iter() {
                if !blender.push(f) {
                    break;
                }
            }
        }
        SortMode::Hierarchical => {
            let mut window = ResortWindow::new();
            let mut saturated = false;
            for f in frags {
                count += 1;
                if let Some(front) = window.push(f) {
                    if !blender.push(&front) {
                        saturated = true;
                        break;
                    }
                }
            }
            if !saturated {
                for f in window.drain() {
                    if !blender.push(f) {
                        break;
                    }
                }
            }
        }
    }
    (blender.finish(), count)
}

/// Rasterizes already projected splats. Output does not depend on the
/// order of `splats` beyond their `index` fields, nor on thread count.
pub fn render_splats<T: Real>(
    splats: &[Splat2D<T>],
    camera: &CameraView<T>,
    mode: SortMode,
) -> PeripheryFrame<T> {
    let (w, h) = (camera.width, camera.height);
    let mut frame = PeripheryFrame::empty(w, h);
    if splats.is_empty() {
        return frame;
    }
    let tiles_x = w.div_ceil(TILE_SIZE);
    let tiles_y = h.div_ceil(TILE_SIZE);
    let tiles = bin_tiles(splats, tiles_x, tiles_y);

    let outs: Vec<TileOut<T>> = tiles
        .par_iter()
        .enumerate()
        .map_init(Vec::new, |scratch, (t, list)| {
            let x0 = (t % tiles_x) * TILE_SIZE;
            let y0 = (t / tiles_x) * TILE_SIZE;
            let tw = TILE_SIZE.min(w - x0);
            let th = TILE_SIZE.min(h - y0);
            let mut px = Vec::with_capacity(tw * th);
            let mut counts = Vec::with_capacity(tw * th);
            for y in y0..y0 + th {
                for x in x0..x0 + tw {
                    let (acc, n) = shade_pixel(splats, list, camera, x, y, mode, scratch);
                    px.push(acc);
                    counts.push(n);
                }
            }
            TileOut {
                x0,
                y0,
                w: tw,
                h: th,
                px,
                counts,
            }
        })
        .collect();

    for out in outs {
        for dy in 0..out.h {
            for dx in 0..out.w {
                let (x, y) = (out.x0 + dx, out.y0 + dy);
                let acc = &out.px[dy * out.w + dx];
                frame.color.pixel_mut(x, y).copy_from_slice(&acc.color);
                frame.alpha.set(x, y, 0, acc.alpha);
                frame.depth.set(x, y, 0, acc.depth);
                frame.fragment_count[y * w + x] = out.counts[dy * out.w + dx];
            }
        }
    }
    frame
}

/// Mean absolute color difference between renders from two cameras.
pub fn popping_score<T: Real>(
    set: &GaussianSet<T>,
    camera_a: &CameraView<T>,
    camera_b: &CameraView<T>,
    mode: SortMode,
) -> Result<T> {
    let a = render_periphery(set, camera_a, mode);
    let b = render_periphery(set, camera_b, mode);
    a.color.mean_abs_diff(&b.color)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frag(depth: f64, alpha: f64, index: u32) -> Fragment<f64> {
        Fragment {
            depth,
            alpha,
            color: [1.0, 0.0, 0.0],
            index,
        }
    }

    #[test]
    fn single_opaque_fragment() {
        let acc = blend_fragments(&[frag(2.0, 1.0, 0)]);
        assert_eq!(acc.depth, 2.0);
        assert_eq!(acc.alpha, 1.0);
    }

    #[test]
    fn two_fragment_depth() {
        let acc = blend_fragments(&[frag(1.0, 0.5, 0), frag(2.0, 1.0, 1)]);
        assert_eq!(acc.depth, 1.5);
        assert_eq!(acc.alpha, 1.0);
    }

    #[test]
    fn saturation_stops_blending() {
        let acc = blend_fragments(&[frag(1.0, 1.0, 0), frag(5.0, 0.5, 1)]);
        assert_eq!(acc.depth, 1.0);
    }

    #[test]
    fn weak_fragments_are_skipped() {
        let acc = blend_fragments(&[frag(1.0, 0.001, 0)]);
        assert_eq!(acc, PixelAccum::default());
    }

    #[test]
    fn window_emits_in_order_when_overfull() {
        let mut w = ResortWindow::<f64>::new();
        let mut emitted = Vec::new();
        // strictly decreasing depths: the window must always emit the newest
        for i in 0..(RESORT_WINDOW as u32 + 4) {
            if let Some(f) = w.push(frag(100.0 - i as f64, 0.1, i)) {
                emitted.push(f.index);
            }
        }
        assert_eq!(emitted, vec![16, 17, 18, 19]);
        let rest: Vec<u32> = w.drain().iter().map(|f| f.index).collect();
        assert_eq!(rest, (0..16).rev().collect::<Vec<_>>());
    }

    #[test]
    fn sort_mode_names() {
        for m in [SortMode::Global, SortMode::PerPixelExact, SortMode::Hierarchical] {
            assert_eq!(m.as_str().parse::<SortMode>().unwrap(), m);
        }
        assert!("bogus".parse::<SortMode>().is_err());
    }
}
