//! Scene representation: Gaussians for the periphery, neural points for the
//! fovea, and the foveation parameters.

pub mod ply;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Quat, Vec3};
use crate::scalar::Real;

/// Number of SH coefficients per channel for a degree.
pub const fn sh_coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Maximum supported SH degree.
pub const MAX_SH_DEGREE: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian<T> {
    pub position: Vec3<T>,
    /// Natural-log scale; world extent is `exp(log_scale)`.
    pub log_scale: Vec3<T>,
    /// Unit quaternion (w, x, y, z).
    pub rotation: Quat<T>,
    /// Post-sigmoid opacity in [0, 1].
    pub opacity: T,
    /// SH coefficients, `sh_coeff_count(degree)` entries of RGB.
    pub sh: Vec<[T; 3]>,
}

impl<T: Real> Gaussian<T> {
    pub fn scale(&self) -> Vec3<T> {
        self.log_scale.map(|s| s.exp())
    }

    /// World-space covariance `R S Sᵀ Rᵀ`.
    pub fn covariance(&self) -> Mat3<T> {
        let r = self.rotation.to_mat3();
        let s = self.scale();
        let m = r.mul_mat(&Mat3::diag(s));
        m.mul_mat(&m.transpose())
    }

    /// Inverse world covariance `R S⁻² Rᵀ`, built without a matrix inverse.
    pub fn precision(&self) -> Mat3<T> {
        let r = self.rotation.to_mat3();
        let inv = self.scale().map(|s| T::one() / (s * s));
        r.mul_mat(&Mat3::diag(inv)).mul_mat(&r.transpose())
    }
}

/// Peripheral representation.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet<T> {
    pub sh_degree: usize,
    pub gaussians: Vec<Gaussian<T>>,
}

impl<T: Real> GaussianSet<T> {
    pub fn new(sh_degree: usize) -> Self {
        assert!(sh_degree <= MAX_SH_DEGREE);
        Self {
            sh_degree,
            gaussians: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Checks the per-Gaussian invariants; reports the first offending index.
    pub fn validate(&self) -> Result<()> {
        let n_sh = sh_coeff_count(self.sh_degree);
        let tol = T::lit(1e-6);
        for (index, g) in self.gaussians.iter().enumerate() {
            let bad = |message: &str| Error::Data {
                index,
                message: message.to_string(),
            };
            if !(g.position.is_finite() && g.log_scale.is_finite()) {
                return Err(bad("non-finite position or scale"));
            }
            if (g.rotation.norm() - T::one()).abs() > tol {
                return Err(bad("rotation is not a unit quaternion"));
            }
            if !(g.opacity >= T::zero() && g.opacity <= T::one()) {
                return Err(bad("opacity outside [0, 1]"));
            }
            if g.sh.len() != n_sh || !g.sh.iter().flatten().all(|v| v.is_finite()) {
                return Err(bad("bad SH coefficients"));
            }
            if !g.scale().0.iter().all(|&s| s > T::zero()) {
                return Err(bad("scale underflows to zero"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralPoint<T> {
    pub position: Vec3<T>,
    /// Contribution size in world units.
    pub size: T,
    /// Neural descriptor.
    pub features: Vec<T>,
    pub opacity: T,
}

/// Foveal representation.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralPointCloud<T> {
    pub feature_dim: usize,
    pub points: Vec<NeuralPoint<T>>,
}

/// Default descriptor width.
pub const DEFAULT_FEATURE_DIM: usize = 4;

impl<T: Real> NeuralPointCloud<T> {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (index, p) in self.points.iter().enumerate() {
            let bad = |message: &str| Error::Data {
                index,
                message: message.to_string(),
            };
            if !p.position.is_finite() {
                return Err(bad("non-finite position"));
            }
            if !(p.size > T::zero() && p.size.is_finite()) {
                return Err(bad("size must be positive"));
            }
            if p.features.len() != self.feature_dim {
                return Err(bad("feature dimension mismatch"));
            }
            if !p.features.iter().all(|v| v.is_finite()) {
                return Err(bad("non-finite feature"));
            }
            if !(p.opacity >= T::zero() && p.opacity <= T::one()) {
                return Err(bad("opacity outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Opacity threshold used to discard obsolete primitives.
pub const OPACITY_PRUNE_THRESHOLD: f64 = 0.005;

/// Keeps the Gaussians with opacity ≥ `threshold`, preserving order.
pub fn prune_by_opacity<T: Real>(set: &GaussianSet<T>, threshold: T) -> GaussianSet<T> {
    GaussianSet {
        sh_degree: set.sh_degree,
        gaussians: set
            .gaussians
            .iter()
            .filter(|g| g.opacity >= threshold)
            .cloned()
            .collect(),
    }
}

/// Same rule for neural points.
pub fn prune_points_by_opacity<T: Real>(
    cloud: &NeuralPointCloud<T>,
    threshold: T,
) -> NeuralPointCloud<T> {
    NeuralPointCloud {
        feature_dim: cloud.feature_dim,
        points: cloud
            .points
            .iter()
            .filter(|p| p.opacity >= threshold)
            .cloned()
            .collect(),
    }
}

/// Foveation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoveaConfig<T> {
    /// Fovea radius in pixels.
    pub d_f: T,
    /// Start of the normalized blend interval, in [0, 1).
    pub m: T,
    /// Weight of the edge term.
    pub gamma_edge: T,
    pub pixels_per_degree: T,
    pub fovea_degrees: T,
    pub resolution_scale: T,
}

impl<T: Real> Default for FoveaConfig<T> {
    fn default() -> Self {
        Self {
            d_f: T::lit(256.0),
            m: T::lit(0.75),
            gamma_edge: T::lit(0.2),
            pixels_per_degree: T::lit(15.7),
            fovea_degrees: T::lit(17.0),
            resolution_scale: T::lit(1.4),
        }
    }
}

impl<T: Real> FoveaConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_f > T::zero()) {
            return Err(Error::Config("d_f must be positive".into()));
        }
        if !(self.m >= T::zero() && self.m < T::one()) {
            return Err(Error::Config("m must lie in [0, 1)".into()));
        }
        if !(self.gamma_edge >= T::zero()) {
            return Err(Error::Config("gamma_edge must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(opacity: f32) -> Gaussian<f32> {
        Gaussian {
            position: Vec3::zero(),
            log_scale: Vec3::zero(),
            rotation: Quat::identity(),
            opacity,
            sh: vec![[0.0; 3]],
        }
    }

    #[test]
    fn prune_keeps_order_and_threshold() {
        let set = GaussianSet {
            sh_degree: 0,
            gaussians: [0.9, 0.001, 0.5].into_iter().map(gaussian).collect(),
        };
        let pruned = prune_by_opacity(&set, OPACITY_PRUNE_THRESHOLD as f32);
        let ops: Vec<f32> = pruned.gaussians.iter().map(|g| g.opacity).collect();
        assert_eq!(ops, vec![0.9, 0.5]);
        assert_eq!(prune_by_opacity(&set, 0.0), set);
    }

    #[test]
    fn prune_at_one_keeps_only_opaque() {
        let set = GaussianSet {
            sh_degree: 0,
            gaussians: [1.0, 0.999, 1.0, 0.2].into_iter().map(gaussian).collect(),
        };
        let pruned = prune_by_opacity(&set, 1.0);
        assert_eq!(pruned.len(), 2);
        assert!(pruned.gaussians.iter().all(|g| g.opacity == 1.0));
    }

    #[test]
    fn precision_inverts_covariance() {
        let g = Gaussian {
            position: Vec3::zero(),
            log_scale: Vec3::new(-1.0f64, 0.3, -3.0),
            rotation: Quat([0.9, 0.1, -0.3, 0.2]).normalized().unwrap(),
            opacity: 1.0,
            sh: vec![[0.0; 3]],
        };
        let id = g.covariance().mul_mat(&g.precision());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id.0[i][j] - e).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn default_fovea_config_is_valid() {
        let cfg = FoveaConfig::<f32>::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.m, 0.75);
        assert_eq!(cfg.gamma_edge, 0.2);
    }
}
