//! Convolutional decoder that turns the point-feature pyramid plus the
//! injected peripheral crop into the foveal image, its weights file format,
//! and an analytic bypass used when no trained weights are available.
//!
//! Weights file, little-endian throughout:
//!
//! ```text
//! "FVSPW1"
//! u32 feature_dim, u32 levels, u32 filters[levels] (finest first),
//! u32 kernel (= 3), u32 activation (0 = ELU), u32 tensor_count
//! per tensor: u32 rank, u32 dims[rank]
//! f32 data of every tensor, in declared order
//! u64 FNV-1a of all preceding bytes
//! ```
//!
//! Tensors are ordered coarsest level first: `conv_a.w, conv_a.b, conv_b.w,
//! conv_b.b` per level, then the final 1×1 projection `w, b`. Convolution
//! weights have shape `[out, in, k, k]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fovea::FramePyramid;
use crate::hash::fnv1a64;
use crate::image::Image;
use crate::scalar::Real;

pub const MAGIC: &[u8; 6] = b"FVSPW1";
/// Filter counts, finest level first. The finest level has half the filters
/// of the next one to keep the full-resolution convolutions cheap.
pub const DEFAULT_FILTERS: [usize; 4] = [8, 16, 32, 32];
pub const KERNEL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Elu,
}

impl Activation {
    fn code(self) -> u32 {
        match self {
            Activation::Elu => 0,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Activation::Elu),
            other => Err(Error::Parse(format!("unknown activation code {other}"))),
        }
    }
}

#[inline]
fn elu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResolverArch {
    pub feature_dim: usize,
    /// Filters per level, finest first.
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub activation: Activation,
}

impl ResolverArch {
    pub fn new(feature_dim: usize, filters: &[usize]) -> Self {
        Self {
            feature_dim,
            filters: filters.to_vec(),
            kernel: KERNEL,
            activation: Activation::Elu,
        }
    }

    pub fn levels(&self) -> usize {
        self.filters.len()
    }

    /// Channels entering the first convolution of `level`.
    pub fn input_channels(&self, level: usize) -> usize {
        let mut c = self.feature_dim + 1;
        if level + 1 < self.levels() {
            c += self.filters[level + 1];
        }
        if level == 0 {
            c += 3;
        }
        c
    }

    /// Shapes of every tensor in file order.
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let k = self.kernel;
        let mut out = Vec::new();
        for level in (0..self.levels()).rev() {
            let f = self.filters[level];
            out.push(vec![f, self.input_channels(level), k, k]);
            out.push(vec![f]);
            out.push(vec![f, f, k, k]);
            out.push(vec![f]);
        }
        out.push(vec![3, self.filters[0], 1, 1]);
        out.push(vec![3]);
        out
    }

    /// With `enforce_halving`, level 0 must have exactly half the filters of
    /// level 1. Turning it off admits the full-width ablation network.
    pub fn validate(&self, enforce_halving: bool) -> Result<()> {
        if self.levels() == 0 {
            return Err(Error::Shape("resolver needs at least one level".into()));
        }
        if self.kernel != KERNEL {
            return Err(Error::Shape(format!("kernel {} unsupported", self.kernel)));
        }
        if self.filters.iter().any(|&f| f == 0) {
            return Err(Error::Shape("zero filter count".into()));
        }
        if enforce_halving && self.levels() >= 2 && self.filters[0] * 2 != self.filters[1] {
            return Err(Error::Shape(format!(
                "level-0 filters {} must be half of level-1 filters {}",
                self.filters[0], self.filters[1]
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolverWeights {
    pub arch: ResolverArch,
    pub tensors: Vec<Tensor>,
}

impl ResolverWeights {
    fn zeros(arch: ResolverArch) -> Self {
        let tensors = arch.tensor_shapes().into_iter().map(Tensor::zeros).collect();
        Self { arch, tensors }
    }

    /// Weights that copy the injected crop to the output and ignore the
    /// pyramid: center-tap identities on the RGB path, everything else zero.
    pub fn identity(feature_dim: usize, filters: &[usize]) -> Result<Self> {
        let arch = ResolverArch::new(feature_dim, filters);
        arch.validate(false)?;
        if filters[0] < 3 {
            return Err(Error::Shape("identity weights need ≥ 3 level-0 filters".into()));
        }
        let mut w = Self::zeros(arch);
        let n = w.tensors.len();
        let l0 = n - 6;
        let in0 = w.arch.input_channels(0);
        let f0 = w.arch.filters[0];
        let crop_first = in0 - 3;
        for c in 0..3 {
            // conv_a: crop channel → channel c, center tap
            w.tensors[l0].data[((c * in0 + crop_first + c) * 3 + 1) * 3 + 1] = 1.0;
            // conv_b: channel c → channel c
            w.tensors[l0 + 2].data[((c * f0 + c) * 3 + 1) * 3 + 1] = 1.0;
            // final 1×1
            w.tensors[n - 2].data[c * f0 + c] = 1.0;
        }
        Ok(w)
    }

    /// Uniform He-style initialization, deterministic in `seed`.
    pub fn random(arch: ResolverArch, seed: u64) -> Result<Self> {
        arch.validate(false)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(arch);
        for t in &mut w.tensors {
            let fan_in: usize = t.dims.iter().skip(1).product::<usize>().max(1);
            let bound = if t.dims.len() == 1 {
                0.1
            } else {
                (6.0 / fan_in as f32).sqrt() * 0.5
            };
            for v in &mut t.data {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Ok(w)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        out.extend_from_slice(MAGIC);
        u32le(&mut out, self.arch.feature_dim);
        u32le(&mut out, self.arch.levels());
        for &f in &self.arch.filters {
            u32le(&mut out, f);
        }
        u32le(&mut out, self.arch.kernel);
        out.extend_from_slice(&self.arch.activation.code().to_le_bytes());
        u32le(&mut out, self.tensors.len());
        for t in &self.tensors {
            u32le(&mut out, t.dims.len());
            for &d in &t.dims {
                u32le(&mut out, d);
            }
        }
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    /// Parses a weights file. The checksum is verified before anything else,
    /// so truncation surfaces as a checksum error.
    pub fn from_bytes(bytes: &[u8], enforce_halving: bool) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Checksum {
                stored: 0,
                computed: fnv1a64(bytes),
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let computed = fnv1a64(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(6)? != MAGIC {
            return Err(Error::Parse("not a resolver weights file".into()));
        }
        let feature_dim = r.u32()? as usize;
        let levels = r.u32()? as usize;
        if levels == 0 || levels > 16 {
            return Err(Error::Shape(format!("implausible level count {levels}")));
        }
        let filters = (0..levels)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let kernel = r.u32()? as usize;
        let activation = Activation::from_code(r.u32()?)?;
        let arch = ResolverArch {
            feature_dim,
            filters,
            kernel,
            activation,
        };
        arch.validate(enforce_halving)?;
        let expected = arch.tensor_shapes();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, found {count}",
                expected.len()
            )));
        }
        let mut dims_list = Vec::with_capacity(count);
        for (i, want) in expected.iter().enumerate() {
            let rank = r.u32()? as usize;
            let dims = (0..rank)
                .map(|_| r.u32().map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            if &dims != want {
                return Err(Error::Shape(format!(
                    "tensor {i} has shape {dims:?}, architecture requires {want:?}"
                )));
            }
            dims_list.push(dims);
        }
        let mut tensors = Vec::with_capacity(count);
        for dims in dims_list {
            let n: usize = dims.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(Tensor { dims, data });
        }
        if r.pos != body.len() {
            return Err(Error::Shape("trailing bytes after tensor data".into()));
        }
        Ok(Self { arch, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// Reads a weights file, enforcing the halved finest level.
pub fn load_weights(path: impl AsRef<Path>) -> Result<ResolverWeights> {
    ResolverWeights::from_bytes(&std::fs::read(path)?, true)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Parse("weights file ends early".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// A 3×3 (or 1×1) convolution with weights rearranged to
/// `[out][ky][kx][in]` for contiguous patch dot products.
struct Conv<T> {
    cin: usize,
    cout: usize,
    k: usize,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> Conv<T> {
    fn new(w: &Tensor, b: &Tensor) -> Self {
        let (cout, cin, k) = (w.dims[0], w.dims[1], w.dims[2]);
        let mut weights = vec![T::zero(); w.data.len()];
        for o in 0..cout {
            for i in 0..cin {
                for ky in 0..k {
                    for kx in 0..k {
                        let src = ((o * cin + i) * k + ky) * k + kx;
                        let dst = ((o * k + ky) * k + kx) * cin + i;
                        weights[dst] = T::lit(w.data[src] as f64);
                    }
                }
            }
        }
        Self {
            cin,
            cout,
            k,
            weights,
            bias: b.data.iter().map(|&v| T::lit(v as f64)).collect(),
        }
    }

    /// Zero-padded same-size convolution, optionally followed by ELU.
    fn apply(&self, input: &Image<T>, activate: bool) -> Image<T> {
        let (w, h) = input.dims();
        debug_assert_eq!(input.channels(), self.cin);
        let mut out = Image::new(w, h, self.cout);
        let r = (self.k / 2) as isize;
        let patch_len = self.k * self.k * self.cin;
        out.data_mut()
            .par_chunks_mut(w * self.cout)
            .enumerate()
            .for_each_init(
                || vec![T::zero(); patch_len],
                |patch, (y, row)| {
                    for x in 0..w {
                        let mut p = 0;
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (sx, sy) = (x as isize + dx, y as isize + dy);
                                let dst = &mut patch[p..p + self.cin];
                                if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                                    dst.fill(T::zero());
                                } else {
                                    dst.copy_from_slice(input.pixel(sx as usize, sy as usize));
                                }
                                p += self.cin;
                            }
                        }
                        let px = &mut row[x * self.cout..(x + 1) * self.cout];
                        for (o, dst) in px.iter_mut().enumerate() {
                            let wrow = &self.weights[o * patch_len..(o + 1) * patch_len];
                            let mut acc = self.bias[o];
                            for (a, b) in wrow.iter().zip(patch.iter()) {
                                acc += *a * *b;
                            }
                            *dst = if activate { elu(acc) } else { acc };
                        }
                    }
                },
            );
        out
    }
}

/// Bilinear ×2 upsampling to `out_w × out_h` with half-pixel alignment and
/// edge clamping. Output sizes may be one less than double (odd layers).
pub fn upsample2<T: Real>(img: &Image<T>, out_w: usize, out_h: usize) -> Image<T> {
    let (iw, ih) = img.dims();
    let ch = img.channels();
    let half = T::lit(0.5);
    let coord = |o: usize, n: usize| -> (usize, usize, T) {
        let s = (T::from_usize_lossy(o) + half) * half - half;
        let s = s.max(T::zero()).min(T::from_usize_lossy(n - 1));
        let i0 = s.floor().to_f64_lossy() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - T::from_usize_lossy(i0))
    };
    let mut out = Image::new(out_w, out_h, ch);
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, ih);
        for x in 0..out_w {
            let (x0, x1, fx) = coord(x, iw);
            let (a, b) = (img.pixel(x0, y0), img.pixel(x1, y0));
            let (c, d) = (img.pixel(x0, y1), img.pixel(x1, y1));
            let px = out.pixel_mut(x, y);
            for k in 0..ch {
                let top = a[k] + (b[k] - a[k]) * fx;
                let bot = c[k] + (d[k] - c[k]) * fx;
                px[k] = top + (bot - top) * fy;
            }
        }
    }
    out
}

fn concat<T: Real>(parts: &[&Image<T>]) -> Image<T> {
    let (w, h) = parts[0].dims();
    let ch: usize = parts.iter().map(|p| p.channels()).sum();
    let mut out = Image::new(w, h, ch);
    for y in 0..h {
        for x in 0..w {
            let dst = out.pixel_mut(x, y);
            let mut off = 0;
            for p in parts {
                let src = p.pixel(x, y);
                dst[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
    }
    out
}

fn check_inputs<T: Real>(pyramid: &FramePyramid<T>, crop: &Image<T>) -> Result<()> {
    if crop.channels() != 3 {
        return Err(Error::Shape("crop must be RGB".into()));
    }
    if pyramid.layers[0].dims() != crop.dims() {
        return Err(Error::Shape(format!(
            "pyramid layer 0 is {:?}, crop is {:?}",
            pyramid.layers[0].dims(),
            crop.dims()
        )));
    }
    Ok(())
}

/// Runs the decoder from the coarsest level to the finest and projects to
/// RGB at crop resolution.
pub fn resolve<T: Real>(
    pyramid: &FramePyramid<T>,
    crop: &Image<T>,
    weights: &ResolverWeights,
) -> Result<Image<T>> {
    check_inputs(pyramid, crop)?;
    let arch = &weights.arch;
    if pyramid.feature_dim != arch.feature_dim {
        return Err(Error::Shape(format!(
            "pyramid feature dim {} does not match weights ({})",
            pyramid.feature_dim, arch.feature_dim
        )));
    }
    if pyramid.levels() != arch.levels() {
        return Err(Error::Shape(format!(
            "pyramid has {} levels, weights expect {}",
            pyramid.levels(),
            arch.levels()
        )));
    }
    let t = &weights.tensors;
    let mut prev: Option<Image<T>> = None;
    for (slot, level) in (0..arch.levels()).rev().enumerate() {
        let layer = &pyramid.layers[level];
        let (w, h) = layer.dims();
        let up = prev.as_ref().map(|p| upsample2(p, w, h));
        let mut parts: Vec<&Image<T>> = Vec::with_capacity(3);
        if let Some(u) = &up {
            parts.push(u);
        }
        parts.push(layer);
        if level == 0 {
            parts.push(crop);
        }
        let input = concat(&parts);
        let base = slot * 4;
        let a = Conv::new(&t[base], &t[base + 1]).apply(&input, true);
        let b = Conv::new(&t[base + 2], &t[base + 3]).apply(&a, true);
        prev = Some(b);
    }
    let n = t.len();
    let last = prev.expect("at least one level");
    Ok(Conv::new(&t[n - 2], &t[n - 1]).apply(&last, false))
}

/// Analytic stand-in for the network: fills alpha holes in each layer from
/// the next coarser one, then mixes the alpha-normalized feature color over
/// the crop with the layer-0 alpha.
pub fn bypass_resolve<T: Real>(pyramid: &FramePyramid<T>, crop: &Image<T>) -> Result<Image<T>> {
    check_inputs(pyramid, crop)?;
    let d = pyramid.feature_dim;
    if d < 3 {
        return Err(Error::Shape("bypass needs at least 3 feature channels".into()));
    }
    let filled = hole_filled(pyramid);
    let (w, h) = crop.dims();
    Ok(Image::from_fn(w, h, 3, |x, y, c| {
        let px = filled.pixel(x, y);
        bypass_mix(px[c], px[d], crop.get(x, y, c))
    }))
}

/// `a·(f/a) + (1−a)·crop`, or the crop where nothing was splatted.
#[inline]
pub fn bypass_mix<T: Real>(premultiplied: T, alpha: T, crop: T) -> T {
    if alpha > T::zero() {
        alpha * (premultiplied / alpha) + (T::one() - alpha) * crop
    } else {
        crop
    }
}

/// Layer 0 with every alpha = 0 pixel replaced by the bilinearly upsampled
/// (and recursively hole-filled) coarser layer.
pub fn hole_filled<T: Real>(pyramid: &FramePyramid<T>) -> Image<T> {
    let d = pyramid.feature_dim;
    let mut filled = pyramid.layers[pyramid.levels() - 1].clone();
    for level in (0..pyramid.levels() - 1).rev() {
        let layer = &pyramid.layers[level];
        let (w, h) = layer.dims();
        let up = upsample2(&filled, w, h);
        filled = Image::from_fn(w, h, d + 1, |x, y, c| {
            if layer.get(x, y, d) > T::zero() {
                layer.get(x, y, c)
            } else {
                up.get(x, y, c)
            }
        });
    }
    filled
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_arch_shapes() {
        let arch = ResolverArch::new(4, &DEFAULT_FILTERS);
        arch.validate(true).unwrap();
        let shapes = arch.tensor_shapes();
        assert_eq!(shapes.len(), 18);
        // coarsest level: pyramid only
        assert_eq!(shapes[0], vec![32, 5, 3, 3]);
        // level 2 sees 32 upsampled channels + 5
        assert_eq!(shapes[4], vec![32, 37, 3, 3]);
        // finest: 16 upsampled + 5 pyramid + 3 crop
        assert_eq!(shapes[12], vec![8, 24, 3, 3]);
        assert_eq!(shapes[16], vec![3, 8, 1, 1]);
    }

    #[test]
    fn halving_rule() {
        assert!(ResolverArch::new(4, &[16, 16, 32, 32]).validate(true).is_err());
        assert!(ResolverArch::new(4, &[16, 16, 32, 32]).validate(false).is_ok());
    }

    #[test]
    fn elu_values() {
        assert_eq!(elu(2.0f64), 2.0);
        assert_eq!(elu(0.0f64), 0.0);
        assert!((elu(-1.0f64) - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn upsample_constant_is_constant() {
        let img = Image::filled(3, 3, 2, 0.25f64);
        let up = upsample2(&img, 5, 6);
        assert!(up.data().iter().all(|&v| v == 0.25));
    }

    #[test]
    fn upsample_matches_half_pixel_oracle() {
        let img = Image::from_fn(4, 4, 1, |x, y, _| (x * 3 + y * 7) as f64);
        let up = upsample2(&img, 8, 8);
        // interior: linear function stays linear at source coordinates (o+0.5)/2-0.5
        for y in 1..7 {
            for x in 1..7 {
                let sx = (x as f64 + 0.5) / 2.0 - 0.5;
                let sy = (y as f64 + 0.5) / 2.0 - 0.5;
                assert!((up.get(x, y, 0) - (sx * 3.0 + sy * 7.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_bytes_fail_checksum() {
        let w = ResolverWeights::identity(4, &DEFAULT_FILTERS).unwrap();
        let bytes = w.to_bytes();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                ResolverWeights::from_bytes(&bytes[..cut], true),
                Err(Error::Checksum { .. })
            ));
        }
    }
}
