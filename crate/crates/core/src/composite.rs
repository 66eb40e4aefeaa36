//! Blending the foveal image into the peripheral one, and tone mapping.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Real;

/// Quintic ramp `6x⁵ − 15x⁴ + 10x³` on `x` clamped to [0, 1].
#[inline]
pub fn smootherstep<T: Real>(x: T) -> T {
    let x = x.clamp01();
    x * x * x * (x * (x * T::lit(6.0) - T::lit(15.0)) + T::lit(10.0))
}

/// Normalized gaze distance `clamp(|(u, v) − gaze| / d_f, 0, 1)`.
#[inline]
pub fn radial_norm<T: Real>(u: T, v: T, gaze: [T; 2], d_f: T) -> T {
    let (dx, dy) = (u - gaze[0], v - gaze[1]);
    ((dx * dx + dy * dy).sqrt() / d_f).clamp01()
}

/// `(r_norm − m) / (1 − m)`; negative inside the inner disk.
#[inline]
pub fn radial_factor<T: Real>(u: T, v: T, gaze: [T; 2], d_f: T, m: T) -> T {
    (radial_norm(u, v, gaze, d_f) - m) / (T::one() - m)
}

/// Rec. 601 luma.
#[inline]
pub fn luminance<T: Real>(rgb: &[T]) -> T {
    T::lit(0.299) * rgb[0] + T::lit(0.587) * rgb[1] + T::lit(0.114) * rgb[2]
}

/// Unnormalized Sobel gradient magnitude of the luminance of an RGB image,
/// with replicated borders.
pub fn edge_factor<T: Real>(rgb: &Image<T>) -> Image<T> {
    let (w, h) = rgb.dims();
    let luma: Vec<T> = rgb.data().chunks_exact(rgb.channels()).map(luminance).collect();
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        luma[y * w + x]
    };
    let two = T::lit(2.0);
    let mut out = Image::new(w, h, 1);
    out.data_mut().par_chunks_mut(w.max(1)).enumerate().for_each(|(y, row)| {
        let y = y as isize;
        for (x, dst) in row.iter_mut().enumerate() {
            let x = x as isize;
            let gx = (at(x + 1, y - 1) + two * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + two * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + two * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + two * at(x, y - 1) + at(x + 1, y - 1));
            *dst = (gx * gx + gy * gy).sqrt();
        }
    });
    out
}

/// Per-pixel combination factor `c` over the crop window, with its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendMask<T> {
    pub c: Image<T>,
    pub f_p: Image<T>,
    pub f_e: Image<T>,
}

/// `c = 1 − S₂(clamp(f_p + γ·f_e, 0, 1))`.
#[inline]
pub fn combination_factor<T: Real>(f_p: T, f_e: T, gamma_edge: T) -> T {
    T::one() - smootherstep(f_p + gamma_edge * f_e)
}

pub fn blend_mask<T: Real>(f_p: &Image<T>, f_e: &Image<T>, gamma_edge: T) -> Result<BlendMask<T>> {
    f_p.ensure_same_shape(f_e, "edge factor")?;
    if f_p.channels() != 1 {
        return Err(Error::Shape("blend factors must be single-channel".into()));
    }
    let (w, h) = f_p.dims();
    let c = Image::from_fn(w, h, 1, |x, y, _| {
        combination_factor(f_p.get(x, y, 0), f_e.get(x, y, 0), gamma_edge)
    });
    Ok(BlendMask {
        c,
        f_p: f_p.clone(),
        f_e: f_e.clone(),
    })
}

/// Radial factor over a `size × size` crop at `crop_origin`, with the gaze
/// given in full-image pixels and evaluated at pixel centers.
pub fn radial_factor_image<T: Real>(
    size: usize,
    crop_origin: [usize; 2],
    gaze: [T; 2],
    d_f: T,
    m: T,
) -> Image<T> {
    let half = T::lit(0.5);
    Image::from_fn(size, size, 1, |x, y, _| {
        let u = T::from_usize_lossy(crop_origin[0] + x) + half;
        let v = T::from_usize_lossy(crop_origin[1] + y) + half;
        radial_factor(u, v, gaze, d_f, m)
    })
}

/// Blend mask for the foveal image `f`; `edges = false` drops the edge term.
pub fn foveal_mask<T: Real>(
    f: &Image<T>,
    crop_origin: [usize; 2],
    gaze: [T; 2],
    d_f: T,
    m: T,
    gamma_edge: T,
    edges: bool,
) -> Result<BlendMask<T>> {
    let f_p = radial_factor_image(f.width(), crop_origin, gaze, d_f, m);
    let f_e = if edges {
        edge_factor(f)
    } else {
        Image::new(f.width(), f.height(), 1)
    };
    blend_mask(&f_p, &f_e, gamma_edge)
}

/// `(1 − c)·p + c·f` inside the crop, `p` outside. Evaluated as
/// `p + c·(f − p)`, which is exact at `c ∈ {0, 1}` and when `f = p`.
pub fn compose<T: Real>(
    p: &Image<T>,
    f: &Image<T>,
    mask: &BlendMask<T>,
    crop_origin: [usize; 2],
) -> Result<Image<T>> {
    let (fw, fh) = f.dims();
    if mask.c.dims() != (fw, fh) {
        return Err(Error::Shape("mask and foveal image differ in size".into()));
    }
    if f.channels() != p.channels() {
        return Err(Error::Shape("foveal and peripheral channel counts differ".into()));
    }
    if crop_origin[0] + fw > p.width() || crop_origin[1] + fh > p.height() {
        return Err(Error::Bounds(format!(
            "crop {fw}×{fh} at {crop_origin:?} exceeds {}×{}",
            p.width(),
            p.height()
        )));
    }
    let mut out = p.clone();
    for y in 0..fh {
        for x in 0..fw {
            let c = mask.c.get(x, y, 0);
            let fp = f.pixel(x, y);
            let dst = out.pixel_mut(crop_origin[0] + x, crop_origin[1] + y);
            for (d, &fv) in dst.iter_mut().zip(fp) {
                *d = lerp(*d, fv, c);
            }
        }
    }
    Ok(out)
}

#[inline]
fn lerp<T: Real>(p: T, f: T, c: T) -> T {
    if c == T::one() {
        f
    } else {
        p + c * (f - p)
    }
}

/// `clamp(2^exposure · x, 0, 1)^(1/gamma)`.
pub fn tonemap<T: Real>(img: &Image<T>, exposure: T, gamma: T) -> Image<T> {
    let gain = exposure.exp2();
    let inv = T::one() / gamma;
    let unit_gamma = gamma == T::one();
    img.map(|v| {
        let v = (gain * v).clamp01();
        if unit_gamma {
            v
        } else {
            v.powf(inv)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smootherstep_points() {
        assert_eq!(smootherstep(0.0f64), 0.0);
        assert_eq!(smootherstep(1.0f64), 1.0);
        assert_eq!(smootherstep(0.5f64), 0.5);
        assert_eq!(smootherstep(-3.0f64), 0.0);
        assert_eq!(smootherstep(7.0f64), 1.0);
    }

    #[test]
    fn radial_examples() {
        let g = [10.0f64, 10.0];
        assert_eq!(radial_factor(10.0, 10.0, g, 8.0, 0.75), -3.0);
        assert_eq!(radial_factor(18.0, 10.0, g, 8.0, 0.75), 1.0);
        assert!((radial_factor(17.0, 10.0, g, 8.0, 0.75) - 0.5).abs() < 1e-12);
        // beyond d_f the radius saturates
        assert_eq!(radial_factor(40.0, 10.0, g, 8.0, 0.75), 1.0);
    }

    #[test]
    fn sobel_vertical_step() {
        let img = Image::from_fn(8, 8, 3, |x, _, _| if x >= 4 { 1.0f64 } else { 0.0 });
        let e = edge_factor(&img);
        // columns 3 and 4 straddle the step: (1+2+1)·1
        assert!((e.get(3, 4, 0) - 4.0).abs() < 1e-12);
        assert!((e.get(4, 4, 0) - 4.0).abs() < 1e-12);
        assert_eq!(e.get(1, 4, 0), 0.0);
        assert_eq!(e.get(6, 4, 0), 0.0);
    }

    #[test]
    fn sobel_transposes() {
        let img = Image::from_fn(7, 7, 3, |x, y, c| ((x * 5 + y * y * 3 + c) % 7) as f64 / 7.0);
        let t = Image::from_fn(7, 7, 3, |x, y, c| img.get(y, x, c));
        let (e, et) = (edge_factor(&img), edge_factor(&t));
        for y in 0..7 {
            for x in 0..7 {
                assert!((e.get(x, y, 0) - et.get(y, x, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_image_has_no_edges() {
        let e = edge_factor(&Image::filled(5, 4, 3, 0.3f32));
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mask_examples() {
        assert_eq!(combination_factor(-2.0f64, 0.0, 0.2), 1.0);
        assert_eq!(combination_factor(1.0f64, 0.0, 0.2), 0.0);
        assert_eq!(combination_factor(0.5f64, 0.0, 0.2), 0.5);
        let c = combination_factor(0.9f64, 100.0, 0.2);
        assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn compose_cases() {
        let p = Image::filled(6, 6, 3, 0.0f64);
        let f = Image::filled(2, 2, 3, 1.0f64);
        let mask = |v| BlendMask {
            c: Image::filled(2, 2, 1, v),
            f_p: Image::new(2, 2, 1),
            f_e: Image::new(2, 2, 1),
        };
        let out = compose(&p, &f, &mask(0.5), [1, 2]).unwrap();
        assert_eq!(out.get(1, 2, 0), 0.5);
        assert_eq!(out.get(0, 0, 0), 0.0);
        let out = compose(&p, &f, &mask(1.0), [1, 2]).unwrap();
        assert_eq!(out.get(2, 3, 1), 1.0);
        assert!(compose(&p, &f, &mask(1.0), [5, 5]).is_err());
    }

    #[test]
    fn tonemap_cases() {
        let img = Image::filled(1, 1, 1, 0.25f64);
        assert_eq!(tonemap(&img, 1.0, 1.0).get(0, 0, 0), 0.5);
        let v = tonemap(&img, 0.0, 2.2).get(0, 0, 0);
        assert!((v - 0.25f64.powf(1.0 / 2.2)).abs() < 1e-12);
        assert!((v - 0.5326).abs() < 1e-4);
        let hot = Image::filled(1, 1, 1, 3.0f64);
        assert_eq!(tonemap(&hot, 0.0, 1.0).get(0, 0, 0), 1.0);
    }
}
