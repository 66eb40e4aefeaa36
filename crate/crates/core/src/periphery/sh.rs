//! View-dependent color from real spherical harmonics (degree ≤ 3), using the
//! 3DGS basis ordering and sign convention.

use crate::linalg::Vec3;
use crate::scalar::Real;
use crate::scene::sh_coeff_count;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values Y_k(dir) for k < (degree+1)².
pub fn sh_basis<T: Real>(degree: usize, dir: &Vec3<T>) -> [T; 16] {
    let l = T::lit;
    let mut out = [T::zero(); 16];
    out[0] = l(SH_C0);
    if degree == 0 {
        return out;
    }
    let [x, y, z] = dir.0;
    out[1] = -l(SH_C1) * y;
    out[2] = l(SH_C1) * z;
    out[3] = -l(SH_C1) * x;
    if degree == 1 {
        return out;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    out[4] = l(SH_C2[0]) * xy;
    out[5] = l(SH_C2[1]) * yz;
    out[6] = l(SH_C2[2]) * (l(2.0) * zz - xx - yy);
    out[7] = l(SH_C2[3]) * xz;
    out[8] = l(SH_C2[4]) * (xx - yy);
    if degree == 2 {
        return out;
    }
    out[9] = l(SH_C3[0]) * y * (l(3.0) * xx - yy);
    out[10] = l(SH_C3[1]) * xy * z;
    out[11] = l(SH_C3[2]) * y * (l(4.0) * zz - xx - yy);
    out[12] = l(SH_C3[3]) * z * (l(2.0) * zz - l(3.0) * xx - l(3.0) * yy);
    out[13] = l(SH_C3[4]) * x * (l(4.0) * zz - xx - yy);
    out[14] = l(SH_C3[5]) * z * (xx - yy);
    out[15] = l(SH_C3[6]) * x * (xx - l(3.0) * yy);
    out
}

/// RGB radiance `max(Σ c_k Y_k(dir) + 0.5, 0)`.
///
/// Panics if `view_dir` is not unit length (tolerance 1e-3) or `coeffs`
/// holds fewer than `(degree+1)²` entries.
pub fn sh_to_color<T: Real>(coeffs: &[[T; 3]], degree: usize, view_dir: &Vec3<T>) -> [T; 3] {
    assert!(degree <= 3, "SH degree {degree} unsupported");
    assert!(
        (view_dir.norm() - T::one()).abs() < T::lit(1e-3),
        "view direction must be unit length"
    );
    let n = sh_coeff_count(degree);
    assert!(coeffs.len() >= n, "too few SH coefficients");
    let basis = sh_basis(degree, view_dir);
    let mut rgb = [T::zero(); 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        let mut acc = T::zero();
        for k in 0..n {
            acc += coeffs[k][c] * basis[k];
        }
        *out = (acc + T::lit(0.5)).max(T::zero());
    }
    rgb
}
