//! EWA projection of 3D Gaussians to screen-space splats.

use crate::camera::CameraView;
use crate::linalg::Vec3;
use crate::periphery::sh::sh_to_color;
use crate::scalar::Real;
use crate::scene::Gaussian;

/// Screen-space dilation added to every projected covariance (px²).
pub const LOW_PASS: f64 = 0.3;
/// Mahalanobis² radius of the 99% ellipse of a 2D Gaussian, −2 ln 0.01.
pub const EXTENT_Q: f64 = 9.210_340_371_976_184;
/// Fragments weaker than this are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// Covariances with determinant at or below this are discarded.
pub const MIN_DET: f64 = 1e-12;

/// A projected Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat2D<T> {
    /// Index of the source Gaussian.
    pub index: u32,
    pub mean2d: [T; 2],
    /// Low-passed covariance (xx, xy, yy) in px².
    pub cov2d: [T; 3],
    /// Inverse of `cov2d`.
    pub conic: [T; 3],
    /// Camera-space z of the center.
    pub depth: T,
    pub opacity: T,
    pub color: [T; 3],
    /// Pixel range [x0, x1) × [y0, y1) whose centers lie in the 99% ellipse.
    pub bbox: [usize; 4],
    /// Camera-space precision matrix (xx, xy, xz, yy, yz, zz).
    precision: [T; 6],
    /// precision · camera-space mean.
    precision_mean: Vec3<T>,
}

impl<T: Real> Splat2D<T> {
    /// Opacity-weighted footprint at pixel center (`px`, `py`), or `None`
    /// outside the 99% ellipse or below the 1/255 cutoff.
    #[inline]
    pub fn alpha_at(&self, px: T, py: T) -> Option<T> {
        let dx = px - self.mean2d[0];
        let dy = py - self.mean2d[1];
        let [a, b, c] = self.conic;
        let q = a * dx * dx + T::lit(2.0) * b * dx * dy + c * dy * dy;
        if !(q <= T::lit(EXTENT_Q)) {
            return None;
        }
        let alpha = self.opacity * (T::lit(-0.5) * q).exp();
        if alpha < T::lit(MIN_ALPHA) {
            None
        } else {
            Some(alpha)
        }
    }

    /// Depth of maximum density along the camera ray `ray` (z = 1).
    #[inline]
    pub fn depth_along(&self, ray: &Vec3<T>) -> T {
        let [xx, xy, xz, yy, yz, zz] = self.precision;
        let [rx, ry, rz] = ray.0;
        let ar = Vec3::new(
            xx * rx + xy * ry + xz * rz,
            xy * rx + yy * ry + yz * rz,
            xz * rx + yz * ry + zz * rz,
        );
        let t = self.precision_mean.dot(ray) / ar.dot(ray);
        if t.is_finite() && t > T::zero() {
            t
        } else {
            self.depth
        }
    }

    /// Eigenvalues of `cov2d`, ascending.
    pub fn cov_eigenvalues(&self) -> [T; 2] {
        eigen_sym2(self.cov2d)
    }
}

fn eigen_sym2<T: Real>([a, b, c]: [T; 3]) -> [T; 2] {
    let mid = T::lit(0.5) * (a + c);
    let r = (T::lit(0.25) * (a - c) * (a - c) + b * b).sqrt();
    [mid - r, mid + r]
}

/// Projects `g` through `camera`. Returns `None` when the Gaussian is behind
/// the near plane, beyond the far plane, degenerate after low-pass, too
/// transparent to produce a fragment, or entirely off screen.
pub fn project_gaussian<T: Real>(
    g: &Gaussian<T>,
    index: usize,
    sh_degree: usize,
    camera: &CameraView<T>,
) -> Option<Splat2D<T>> {
    let pc = camera.to_camera(&g.position);
    let z = pc.z();
    if !(z > camera.near && z < camera.far) {
        return None;
    }
    if g.opacity < T::lit(MIN_ALPHA) {
        return None;
    }
    let k = &camera.intrinsics;
    let w = &camera.pose.rotation;

    // Jacobian of the perspective map, with the off-axis clamp of 3DGS
    let w_px = T::from_usize_lossy(camera.width);
    let h_px = T::from_usize_lossy(camera.height);
    let lim = T::lit(1.3);
    let lim_x = lim * k.cx.max(w_px - k.cx) / k.fx;
    let lim_y = lim * k.cy.max(h_px - k.cy) / k.fy;
    let tx = (pc.x() / z).max(-lim_x).min(lim_x) * z;
    let ty = (pc.y() / z).max(-lim_y).min(lim_y) * z;
    let inv_z = T::one() / z;
    let j00 = k.fx * inv_z;
    let j02 = -k.fx * tx * inv_z * inv_z;
    let j11 = k.fy * inv_z;
    let j12 = -k.fy * ty * inv_z * inv_z;

    let sigma_cam = w.mul_mat(&g.covariance()).mul_mat(&w.transpose());
    let s = &sigma_cam.0;
    // rows of J·Σ
    let r0 = [
        j00 * s[0][0] + j02 * s[2][0],
        j00 * s[0][1] + j02 * s[2][1],
        j00 * s[0][2] + j02 * s[2][2],
    ];
    let r1 = [
        j11 * s[1][0] + j12 * s[2][0],
        j11 * s[1][1] + j12 * s[2][1],
        j11 * s[1][2] + j12 * s[2][2],
    ];
    let lp = T::lit(LOW_PASS);
    let cxx = r0[0] * j00 + r0[2] * j02 + lp;
    let cxy = r0[1] * j11 + r0[2] * j12;
    let cyy = r1[1] * j11 + r1[2] * j12 + lp;
    let det = cxx * cyy - cxy * cxy;
    if !(det > T::lit(MIN_DET)) {
        return None;
    }
    let inv_det = T::one() / det;
    let conic = [cyy * inv_det, -cxy * inv_det, cxx * inv_det];

    let mean2d = camera.project_camera(&pc);
    let [_, lmax] = eigen_sym2([cxx, cxy, cyy]);
    let radius = (T::lit(EXTENT_Q) * lmax).sqrt();
    let half = T::lit(0.5);
    let lo = |m: T| (m - radius - half).ceil();
    let hi = |m: T| (m + radius - half).floor() + T::one();
    let clampi = |v: T, max: usize| -> usize {
        let v = v.to_f64_lossy();
        if v <= 0.0 {
            0
        } else if v >= max as f64 {
            max
        } else {
            v as usize
        }
    };
    let bbox = [
        clampi(lo(mean2d[0]), camera.width),
        clampi(lo(mean2d[1]), camera.height),
        clampi(hi(mean2d[0]), camera.width),
        clampi(hi(mean2d[1]), camera.height),
    ];
    if bbox[0] >= bbox[2] || bbox[1] >= bbox[3] {
        return None;
    }

    let p = w.mul_mat(&g.precision()).mul_mat(&w.transpose()).0;
    let precision = [p[0][0], p[0][1], p[0][2], p[1][1], p[1][2], p[2][2]];
    let precision_mean = Vec3::new(
        p[0][0] * pc.x() + p[0][1] * pc.y() + p[0][2] * pc.z(),
        p[1][0] * pc.x() + p[1][1] * pc.y() + p[1][2] * pc.z(),
        p[2][0] * pc.x() + p[2][1] * pc.y() + p[2][2] * pc.z(),
    );

    let view_dir = (g.position - camera.pose.center()).normalized();
    let color = sh_to_color(&g.sh, sh_degree, &view_dir);

    Some(Splat2D {
        index: index as u32,
        mean2d,
        cov2d: [cxx, cxy, cyy],
        conic,
        depth: z,
        opacity: g.opacity,
        color,
        bbox,
        precision,
        precision_mean,
    })
}
