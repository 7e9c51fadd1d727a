use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::manifold::{left_jacobian_inv, right_jacobian_inv, Pose2, TangentVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    OdomRelative,
    GpsUnary,
    Custom,
}

/// A user-supplied 3-dimensional residual over any set of poses.
pub trait CustomResidual: Send + Sync + fmt::Debug {
    fn residual(&self, poses: &[Pose2]) -> Vector3<f64>;

    /// Jacobians with respect to a right perturbation of each pose.
    /// Defaults to central differences.
    fn jacobians(&self, poses: &[Pose2]) -> Vec<Matrix3<f64>> {
        let h = 1e-6;
        let mut work = poses.to_vec();
        (0..poses.len())
            .map(|i| {
                let mut j = Matrix3::zeros();
                for k in 0..3 {
                    let mut e = Vector3::zeros();
                    e[k] = h;
                    work[i] = poses[i].retract(&TangentVec::from(e));
                    let rp = self.residual(&work);
                    work[i] = poses[i].retract(&TangentVec::from(-e));
                    let rm = self.residual(&work);
                    work[i] = poses[i];
                    j.set_column(k, &((rp - rm) / (2.0 * h)));
                }
                j
            })
            .collect()
    }
}

/// `r = Σ_j C_j · local(anchor_j, x_j) - target`.
///
/// Linear in the tangent coordinates of the anchors' charts, so a graph
/// built from these factors with `target = 0` has its mode at the anchors
/// and an exactly Gaussian Boltzmann distribution in that chart.
#[derive(Clone, Debug)]
pub struct LinearTangentFactor {
    pub anchors: Vec<Pose2>,
    pub coeffs: Vec<Matrix3<f64>>,
    pub target: Vector3<f64>,
}

impl CustomResidual for LinearTangentFactor {
    fn residual(&self, poses: &[Pose2]) -> Vector3<f64> {
        let mut r = -self.target;
        for ((a, c), p) in self.anchors.iter().zip(&self.coeffs).zip(poses) {
            r += c * a.local(p).as_vector();
        }
        r
    }

    fn jacobians(&self, poses: &[Pose2]) -> Vec<Matrix3<f64>> {
        self.anchors
            .iter()
            .zip(&self.coeffs)
            .zip(poses)
            .map(|((a, c), p)| c * right_jacobian_inv(&a.local(p)))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub enum FactorModel {
    /// Residual `local(between(x_i, x_j), z)`.
    OdomRelative(Pose2),
    /// Residual `local(x_i, z)`.
    GpsUnary(Pose2),
    Custom(Arc<dyn CustomResidual>),
}

#[derive(Clone, Debug)]
pub struct Factor {
    vars: Vec<usize>,
    model: FactorModel,
    condition: Option<u8>,
    noise_ref: String,
}

impl Factor {
    pub fn odom(from: usize, to: usize, z: Pose2, noise_ref: impl Into<String>) -> Self {
        Self {
            vars: vec![from, to],
            model: FactorModel::OdomRelative(z),
            condition: None,
            noise_ref: noise_ref.into(),
        }
    }

    pub fn gps(var: usize, z: Pose2, noise_ref: impl Into<String>) -> Self {
        Self {
            vars: vec![var],
            model: FactorModel::GpsUnary(z),
            condition: None,
            noise_ref: noise_ref.into(),
        }
    }

    pub fn custom(vars: Vec<usize>, model: Arc<dyn CustomResidual>, noise_ref: impl Into<String>) -> Self {
        Self {
            vars,
            model: FactorModel::Custom(model),
            condition: None,
            noise_ref: noise_ref.into(),
        }
    }

    pub fn with_condition(mut self, label: Option<u8>) -> Self {
        self.condition = label;
        self
    }

    pub fn kind(&self) -> FactorKind {
        match self.model {
            FactorModel::OdomRelative(_) => FactorKind::OdomRelative,
            FactorModel::GpsUnary(_) => FactorKind::GpsUnary,
            FactorModel::Custom(_) => FactorKind::Custom,
        }
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn model(&self) -> &FactorModel {
        &self.model
    }

    pub fn condition(&self) -> Option<u8> {
        self.condition
    }

    pub fn noise_ref(&self) -> &str {
        &self.noise_ref
    }

    /// Raw (unwhitened) residual, reading this factor's variables from `poses`.
    pub fn residual(&self, poses: &[Pose2]) -> Vector3<f64> {
        match &self.model {
            FactorModel::OdomRelative(z) => {
                let pred = poses[self.vars[0]].between(&poses[self.vars[1]]);
                pred.local(z).as_vector()
            }
            FactorModel::GpsUnary(z) => poses[self.vars[0]].local(z).as_vector(),
            FactorModel::Custom(c) => {
                let sub: Vec<Pose2> = self.vars.iter().map(|&v| poses[v]).collect();
                c.residual(&sub)
            }
        }
    }

    /// Raw residual and its Jacobians with respect to right perturbations of
    /// each connected variable.
    pub fn linearize(&self, poses: &[Pose2]) -> (Vector3<f64>, Vec<Matrix3<f64>>) {
        match &self.model {
            FactorModel::OdomRelative(z) => {
                let a = poses[self.vars[0]];
                let b = poses[self.vars[1]];
                let r = a.between(&b).local(z);
                // r = Log(b⁻¹ a z)
                let ja = right_jacobian_inv(&r) * z.inverse().adjoint();
                let jb = -left_jacobian_inv(&r);
                (r.as_vector(), vec![ja, jb])
            }
            FactorModel::GpsUnary(z) => {
                // r = Log(x⁻¹ z)
                let r = poses[self.vars[0]].local(z);
                (r.as_vector(), vec![-left_jacobian_inv(&r)])
            }
            FactorModel::Custom(c) => {
                let sub: Vec<Pose2> = self.vars.iter().map(|&v| poses[v]).collect();
                (c.residual(&sub), c.jacobians(&sub))
            }
        }
    }
}
