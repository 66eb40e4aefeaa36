//! Image metrics and training-loss terms used for regression checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

pub fn l1<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    a.mean_abs_diff(b)
}

pub fn mse<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    a.ensure_same_shape(b, "metric input")?;
    let n = a.data().len();
    if n == 0 {
        return Ok(T::zero());
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| ((x - y) * (x - y)).to_f64_lossy())
        .sum();
    Ok(T::lit(sum / n as f64))
}

/// Peak signal-to-noise ratio for unit range, capped at 99 dB.
pub fn psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    let e = mse(a, b)?;
    let cap = T::lit(PSNR_CAP);
    if e <= T::zero() {
        return Ok(cap);
    }
    Ok((T::lit(10.0) * (T::one() / e).log10()).min(cap))
}

fn gaussian_window<T: Real>() -> Vec<T> {
    let r = (SSIM_WINDOW / 2) as f64;
    let raw: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::lit(v / s)).collect()
}

/// Separable Gaussian filter of a single-channel plane, zero padded.
fn blur<T: Real>(plane: &[T], w: usize, h: usize, k: &[T]) -> Vec<T> {
    let r = (k.len() / 2) as isize;
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (i, &kv) in k.iter().enumerate() {
                let sx = x as isize + i as isize - r;
                if sx >= 0 && sx < w as isize {
                    acc += kv * plane[y * w + sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (i, &kv) in k.iter().enumerate() {
                let sy = y as isize + i as isize - r;
                if sy >= 0 && sy < h as isize {
                    acc += kv * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Mean SSIM over pixels and channels, 11×11 Gaussian window (σ = 1.5),
/// zero padding at the borders.
pub fn ssim<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    a.ensure_same_shape(b, "metric input")?;
    let (w, h) = a.dims();
    let ch = a.channels();
    if w * h * ch == 0 {
        return Ok(T::one());
    }
    let k = gaussian_window::<T>();
    let c1 = T::lit(SSIM_K1 * SSIM_K1);
    let c2 = T::lit(SSIM_K2 * SSIM_K2);
    let two = T::lit(2.0);
    let mut total = 0.0f64;
    for c in 0..ch {
        let pa: Vec<T> = a.data().iter().skip(c).step_by(ch).copied().collect();
        let pb: Vec<T> = b.data().iter().skip(c).step_by(ch).copied().collect();
        let sq = |p: &[T], q: &[T]| p.iter().zip(q).map(|(&x, &y)| x * y).collect::<Vec<T>>();
        let mu_a = blur(&pa, w, h, &k);
        let mu_b = blur(&pb, w, h, &k);
        let e_aa = blur(&sq(&pa, &pa), w, h, &k);
        let e_bb = blur(&sq(&pb, &pb), w, h, &k);
        let e_ab = blur(&sq(&pa, &pb), w, h, &k);
        for i in 0..w * h {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            let num = (two * ma * mb + c1) * (two * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += (num / den).to_f64_lossy();
        }
    }
    Ok(T::lit(total / (w * h * ch) as f64))
}

/// `(1 − ssim) / 2`.
pub fn dssim<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    Ok((T::one() - ssim(a, b)?) * T::lit(0.5))
}

/// Which pixels count as "inside the fovea" for the mean regularizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    /// Pixel centers within `d_f` of the gaze.
    #[default]
    Disk,
    /// The whole crop window.
    Square,
}

/// Foveal window of a frame: crop placement plus the gaze disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FovealRegion<T> {
    pub crop_origin: [usize; 2],
    pub crop_size: usize,
    pub gaze: [T; 2],
    pub d_f: T,
    pub shape: RegionShape,
}

impl<T: Real> FovealRegion<T> {
    /// Whether crop pixel (`x`, `y`) belongs to the region.
    pub fn contains(&self, x: usize, y: usize) -> bool {
        match self.shape {
            RegionShape::Square => x < self.crop_size && y < self.crop_size,
            RegionShape::Disk => {
                let half = T::lit(0.5);
                let u = T::from_usize_lossy(self.crop_origin[0] + x) + half - self.gaze[0];
                let v = T::from_usize_lossy(self.crop_origin[1] + y) + half - self.gaze[1];
                (u * u + v * v).sqrt() <= self.d_f
            }
        }
    }
}

/// `|mean(F) − mean(P)|` over the foveal region, channel-averaged. `f` is
/// crop-sized, `p` full-sized.
pub fn regularizer_r<T: Real>(f: &Image<T>, p: &Image<T>, region: &FovealRegion<T>) -> Result<T> {
    let s = region.crop_size;
    if f.dims() != (s, s) || f.channels() != p.channels() {
        return Err(Error::Shape("foveal image does not match the crop".into()));
    }
    let [ox, oy] = region.crop_origin;
    if ox + s > p.width() || oy + s > p.height() {
        return Err(Error::Bounds("crop exceeds the peripheral image".into()));
    }
    // f64 sums keep f32 images accurate over large crops
    let (mut sf, mut sp, mut n) = (0.0f64, 0.0f64, 0usize);
    for y in 0..s {
        for x in 0..s {
            if !region.contains(x, y) {
                continue;
            }
            sf += f.pixel(x, y).iter().map(|v| v.to_f64_lossy()).sum::<f64>();
            sp += p.pixel(ox + x, oy + y).iter().map(|v| v.to_f64_lossy()).sum::<f64>();
            n += f.channels();
        }
    }
    if n == 0 {
        return Err(Error::EmptyRegion);
    }
    let n = n as f64;
    Ok(T::lit((sf / n - sp / n).abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights<T> {
    /// Mix between L1 and D-SSIM.
    pub lambda: T,
    /// Perceptual term weight; the term itself is not computed.
    pub mu: T,
    /// Mean-regularizer weight.
    pub beta: T,
}

impl<T: Real> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(0.2),
            mu: T::lit(0.001),
            beta: T::lit(1e-5),
        }
    }
}

impl<T: Real> LossWeights<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda >= T::zero()
            && self.lambda <= T::one()
            && self.mu >= T::zero()
            && self.beta >= T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::Config("loss weights must be ≥ 0 with lambda ≤ 1".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub l1: T,
    pub dssim: T,
    /// Always 0: no pretrained perceptual network is available.
    pub vgg: T,
    pub vgg_excluded: bool,
    pub r: T,
    pub total: T,
}

/// `(1−λ)·L1 + λ·D-SSIM + β·R`, with the perceptual term reported as
/// excluded.
pub fn total_loss<T: Real>(
    render: &Image<T>,
    gt: &Image<T>,
    f: &Image<T>,
    p: &Image<T>,
    region: &FovealRegion<T>,
    w: &LossWeights<T>,
) -> Result<LossBreakdown<T>> {
    w.validate()?;
    let l1 = l1(render, gt)?;
    let dssim = dssim(render, gt)?;
    let r = regularizer_r(f, p, region)?;
    let total = (T::one() - w.lambda) * l1 + w.lambda * dssim + w.beta * r;
    Ok(LossBreakdown {
        l1,
        dssim,
        vgg: T::zero(),
        vgg_excluded: true,
        r,
        total,
    })
}

/// One row of a metrics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub view_id: String,
    pub l1: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub dssim: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

impl MetricRow {
    /// Image metrics of `a` against `b`; `r` is supplied by the caller.
    pub fn compute<T: Real>(view_id: impl Into<String>, a: &Image<T>, b: &Image<T>, r: T) -> Result<Self> {
        let s = ssim(a, b)?.to_f64_lossy();
        Ok(Self {
            view_id: view_id.into(),
            l1: l1(a, b)?.to_f64_lossy(),
            psnr: psnr(a, b)?.to_f64_lossy(),
            ssim: s,
            dssim: (1.0 - s) * 0.5,
            r: r.to_f64_lossy(),
        })
    }
}
