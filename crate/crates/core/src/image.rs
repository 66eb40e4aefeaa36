//! Interleaved multi-channel images.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major image with `channels` interleaved values per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, T::zero())
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "image buffer of {} values does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [T] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Copies the `w`×`h` window at (`x0`, `y0`).
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::Bounds(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
        }
        Ok(Self {
            width: w,
            height: h,
            channels: c,
            data,
        })
    }

    /// Selects `count` channels starting at `first`.
    pub fn channel_range(&self, first: usize, count: usize) -> Self {
        assert!(first + count <= self.channels);
        let mut data = Vec::with_capacity(self.width * self.height * count);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[first..first + count]);
        }
        Self {
            width: self.width,
            height: self.height,
            channels: count,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }

    /// Mean of |a − b| over all values.
    pub fn mean_abs_diff(&self, other: &Self) -> Result<T> {
        self.ensure_same_shape(other, "mean_abs_diff")?;
        if self.data.is_empty() {
            return Ok(T::zero());
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs().to_f64_lossy())
            .sum();
        Ok(T::lit(sum / self.data.len() as f64))
    }

    /// Quantizes to 8-bit RGBA. Grayscale images are replicated; alpha is opaque.
    pub fn to_rgba8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 4);
        for px in self.data.chunks_exact(self.channels) {
            let rgb = match self.channels {
                1 | 2 => [px[0]; 3],
                _ => [px[0], px[1], px[2]],
            };
            out.extend(rgb.iter().map(|&v| quantize_u8(v)));
            out.push(255);
        }
        out
    }

    /// Quantizes to 8-bit RGB.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.to_rgba8()
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect()
    }

    /// FNV-1a over the raw little-endian value bytes; stable fingerprint for
    /// reproducibility checks.
    pub fn fingerprint(&self) -> u64 {
        let mut h = crate::hash::Fnv1a64::default();
        h.update(&(self.width as u64).to_le_bytes());
        h.update(&(self.height as u64).to_le_bytes());
        h.update(&(self.channels as u64).to_le_bytes());
        for v in &self.data {
            h.update(&v.to_f64_lossy().to_bits().to_le_bytes());
        }
        h.finish()
    }
}

#[inline]
pub fn quantize_u8<T: Real>(v: T) -> u8 {
    let v = v.clamp01().to_f64_lossy();
    (v * 255.0 + 0.5).floor() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_checks_bounds() {
        let img = Image::<f32>::from_fn(4, 3, 1, |x, y, _| (x + 10 * y) as f32);
        let c = img.crop(1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[11.0, 12.0, 21.0, 22.0]);
        assert!(img.crop(3, 0, 2, 1).is_err());
    }

    #[test]
    fn quantization_rounds() {
        assert_eq!(quantize_u8(0.0f32), 0);
        assert_eq!(quantize_u8(1.0f32), 255);
        assert_eq!(quantize_u8(2.0f32), 255);
        assert_eq!(quantize_u8(0.5f64), 128);
    }
}
