//! Pinhole cameras. Camera space is x right, y down, z forward; a pixel
//! (i, j) covers [i, i+1)×[j, j+1) and has its center at (i+0.5, j+0.5).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

/// Rigid world-to-camera transform: `p_cam = rotation · p_world + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    /// Camera at `eye` looking at `target`; `up` is the world up direction.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, up: Vec3<T>) -> Self {
        let z = (target - eye).normalized();
        let x = z.cross(&up).normalized();
        let y = z.cross(&x);
        let rotation = Mat3::from_rows(x, y, z);
        let translation = -rotation.mul_vec(&eye);
        Self {
            rotation,
            translation,
        }
    }

    pub fn transform(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        -self.rotation.transpose().mul_vec(&self.translation)
    }

    /// Rotates the camera about its own center by `delta` (camera-space
    /// rotation applied after the current pose).
    pub fn rotated(&self, delta: &Mat3<T>) -> Self {
        let center = self.center();
        let rotation = delta.mul_mat(&self.rotation);
        Self {
            rotation,
            translation: -rotation.mul_vec(&center),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraView<T> {
    pub intrinsics: Intrinsics<T>,
    pub pose: Pose<T>,
    pub width: usize,
    pub height: usize,
    pub near: T,
    pub far: T,
    /// Exposure in EV stops applied at tone mapping.
    pub exposure: T,
    pub gamma: T,
}

impl<T: Real> CameraView<T> {
    /// Camera with square pixels, principal point at the image center,
    /// near 0.01, far 1000, exposure 0 and gamma 1.
    pub fn new(width: usize, height: usize, focal: T, pose: Pose<T>) -> Self {
        Self {
            intrinsics: Intrinsics {
                fx: focal,
                fy: focal,
                cx: T::from_usize_lossy(width) * T::lit(0.5),
                cy: T::from_usize_lossy(height) * T::lit(0.5),
            },
            pose,
            width,
            height,
            near: T::lit(0.01),
            far: T::lit(1000.0),
            exposure: T::zero(),
            gamma: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        if !(self.near > T::zero() && self.near < self.far) {
            return Err(Error::Config(format!(
                "camera requires 0 < near < far, got near={} far={}",
                self.near, self.far
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("camera resolution must be positive".into()));
        }
        if !(k.fx > T::zero() && k.fy > T::zero()) {
            return Err(Error::Config("focal lengths must be positive".into()));
        }
        if !(self.pose.rotation.is_finite() && self.pose.translation.is_finite()) {
            return Err(Error::Config("camera pose is not finite".into()));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: &Vec3<T>) -> Vec3<T> {
        self.pose.transform(p)
    }

    /// Perspective projection of a camera-space point to pixel coordinates.
    pub fn project_camera(&self, pc: &Vec3<T>) -> [T; 2] {
        let k = &self.intrinsics;
        let inv_z = T::one() / pc.z();
        [k.fx * pc.x() * inv_z + k.cx, k.fy * pc.y() * inv_z + k.cy]
    }

    /// Projects a world point; returns pixel coordinates and camera depth.
    pub fn project(&self, p: &Vec3<T>) -> ([T; 2], T) {
        let pc = self.to_camera(p);
        (self.project_camera(&pc), pc.z())
    }

    /// Camera-space ray through pixel coordinate (`u`, `v`), scaled to z = 1.
    pub fn ray(&self, u: T, v: T) -> Vec3<T> {
        let k = &self.intrinsics;
        Vec3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, T::one())
    }

    pub fn with_pose(&self, pose: Pose<T>) -> Self {
        Self { pose, ..*self }
    }

    pub fn cast<U: Real>(&self) -> CameraView<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        CameraView {
            intrinsics: Intrinsics {
                fx: c(self.intrinsics.fx),
                fy: c(self.intrinsics.fy),
                cx: c(self.intrinsics.cx),
                cy: c(self.intrinsics.cy),
            },
            pose: Pose {
                rotation: self.pose.rotation.cast(),
                translation: self.pose.translation.cast(),
            },
            width: self.width,
            height: self.height,
            near: c(self.near),
            far: c(self.far),
            exposure: c(self.exposure),
            gamma: c(self.gamma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn look_at_puts_target_on_axis() {
        let pose = Pose::look_at(
            Vec3::new(1.0f64, 2.0, -3.0),
            Vec3::new(0.5, 0.0, 4.0),
            Vec3::new(0.0, 1.0, 0.0),
        );
        let cam = CameraView::new(64, 48, 50.0, pose);
        let (px, depth) = cam.project(&Vec3::new(0.5, 0.0, 4.0));
        assert_relative_eq!(px[0], 32.0, epsilon = 1e-9);
        assert_relative_eq!(px[1], 24.0, epsilon = 1e-9);
        assert!(depth > 0.0);
        assert_relative_eq!(pose.center().0[2], -3.0, epsilon = 1e-12);
        // world up maps to image up (negative camera y)
        let (up, _) = cam.project(&Vec3::new(0.5, 1.0, 4.0));
        assert!(up[1] < 24.0);
    }

    #[test]
    fn validate_rejects_bad_planes() {
        let mut cam = CameraView::new(8, 8, 10.0f32, Pose::identity());
        assert!(cam.validate().is_ok());
        cam.near = 2.0;
        cam.far = 1.0;
        assert!(cam.validate().is_err());
    }
}
