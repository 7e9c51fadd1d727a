//! Factor graphs over SE(2) poses: energy, linearization, Gauss-Newton MAP
//! inference, and Laplace-approximation sampling.

mod banded;
mod factor;
mod sampling;
mod solver;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use banded::BandCholesky;
pub use factor::{CustomResidual, Factor, FactorKind, FactorModel, LinearTangentFactor};
pub use sampling::sample_posterior;
pub use solver::{
    dead_reckon, solve_gn, solve_incremental, GaussianPosterior, IncrementalSolver, SolverConfig,
};

use crate::error::{LeoError, Result};
use crate::manifold::Pose2;
use crate::models::ThetaParams;

/// A sequence of poses, one per graph variable.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    poses: Vec<Pose2>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose2>) -> Self {
        Self { poses }
    }

    pub fn poses(&self) -> &[Pose2] {
        &self.poses
    }

    pub fn poses_mut(&mut self) -> &mut Vec<Pose2> {
        &mut self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Applies a stacked tangent update (3 entries per pose).
    pub fn retract(&self, delta: &[f64]) -> Trajectory {
        debug_assert_eq!(delta.len(), 3 * self.len());
        Trajectory::new(
            self.poses
                .iter()
                .zip(delta.chunks_exact(3))
                .map(|(p, d)| p.retract(&crate::manifold::TangentVec::new(d[0], d[1], d[2])))
                .collect(),
        )
    }

    /// Stacked tangent coordinates of `other` in the chart at `self`.
    pub fn local(&self, other: &Trajectory) -> Vec<f64> {
        self.poses
            .iter()
            .zip(&other.poses)
            .flat_map(|(a, b)| {
                let v = a.local(b);
                [v.dx, v.dy, v.dtheta]
            })
            .collect()
    }
}

impl From<Vec<Pose2>> for Trajectory {
    fn from(poses: Vec<Pose2>) -> Self {
        Self::new(poses)
    }
}

#[derive(Clone, Debug, Default)]
pub struct FactorGraph {
    num_vars: usize,
    factors: Vec<Factor>,
}

impl FactorGraph {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            factors: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn dim(&self) -> usize {
        3 * self.num_vars
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Grows the variable set; new variables have no factors yet.
    pub fn add_vars(&mut self, count: usize) -> std::ops::Range<usize> {
        let start = self.num_vars;
        self.num_vars += count;
        start..self.num_vars
    }

    pub fn add_factor(&mut self, factor: Factor) -> Result<()> {
        if let Some(&v) = factor.vars().iter().find(|&&v| v >= self.num_vars) {
            return Err(LeoError::Shape(format!(
                "factor references variable {v} but the graph has {}",
                self.num_vars
            )));
        }
        self.factors.push(factor);
        Ok(())
    }

    pub fn check_trajectory(&self, x: &Trajectory) -> Result<()> {
        if x.len() != self.num_vars {
            return Err(LeoError::Shape(format!(
                "trajectory has {} poses, graph has {} variables",
                x.len(),
                self.num_vars
            )));
        }
        Ok(())
    }

    /// Largest index distance between two variables sharing a factor.
    pub fn max_var_gap(&self) -> usize {
        self.factors
            .iter()
            .map(|f| {
                let vs = f.vars();
                let lo = vs.iter().min().copied().unwrap_or(0);
                let hi = vs.iter().max().copied().unwrap_or(0);
                hi - lo
            })
            .max()
            .unwrap_or(0)
    }
}

/// `½ Σ_k ‖exp(-s_k) ⊙ r_k‖²`.
pub fn energy(graph: &FactorGraph, theta: &ThetaParams, x: &Trajectory) -> Result<f64> {
    graph.check_trajectory(x)?;
    let mut total = 0.0;
    for f in graph.factors() {
        let w = theta.whitening(f.noise_ref(), f.condition())?.scale();
        let r = f.residual(x.poses());
        total += (0..3).map(|i| (w[i] * r[i]).powi(2)).sum::<f64>();
    }
    Ok(0.5 * total)
}

/// One factor's rows in the stacked linear system.
#[derive(Clone, Debug)]
pub struct FactorRows {
    pub row_start: usize,
    pub vars: Vec<usize>,
    /// Whitened Jacobian blocks, one per connected variable.
    pub jacobians: Vec<Matrix3<f64>>,
}

/// Stacked whitened Jacobians `A` and negated whitened residuals `b`.
#[derive(Clone, Debug)]
pub struct SparseLinearSystem {
    pub cols: usize,
    pub rows: Vec<FactorRows>,
    pub b: DVector<f64>,
}

impl SparseLinearSystem {
    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.num_rows(), self.cols);
        for fr in &self.rows {
            for (&v, j) in fr.vars.iter().zip(&fr.jacobians) {
                a.view_mut((fr.row_start, 3 * v), (3, 3)).copy_from(j);
            }
        }
        a
    }

    /// `AᵀA` in banded storage and `Aᵀb`.
    pub fn normal_equations(&self, bandwidth: usize) -> (banded::BandMatrix, DVector<f64>) {
        let mut h = banded::BandMatrix::zeros(self.cols, bandwidth);
        let mut g = DVector::zeros(self.cols);
        for fr in &self.rows {
            let b = self.b.fixed_rows::<3>(fr.row_start);
            for (ia, (&va, ja)) in fr.vars.iter().zip(&fr.jacobians).enumerate() {
                let gv = ja.transpose() * b;
                for k in 0..3 {
                    g[3 * va + k] += gv[k];
                }
                for (&vb, jb) in fr.vars.iter().zip(&fr.jacobians).skip(ia) {
                    let blk = ja.transpose() * jb;
                    h.add_block(3 * va, 3 * vb, &blk);
                }
            }
        }
        (h, g)
    }

    /// Gradient of `½‖Aδ - b‖²` at `δ = 0` is `-Aᵀb`.
    pub fn gradient(&self) -> DVector<f64> {
        let mut g = DVector::zeros(self.cols);
        for fr in &self.rows {
            let b = self.b.fixed_rows::<3>(fr.row_start);
            for (&v, j) in fr.vars.iter().zip(&fr.jacobians) {
                let gv = j.transpose() * b;
                for k in 0..3 {
                    g[3 * v + k] -= gv[k];
                }
            }
        }
        g
    }
}

pub(crate) fn bandwidth_for(graph: &FactorGraph) -> usize {
    3 * graph.max_var_gap() + 2
}

/// Linearizes every factor at `x0`.
pub fn linearize(graph: &FactorGraph, theta: &ThetaParams, x0: &Trajectory) -> Result<SparseLinearSystem> {
    graph.check_trajectory(x0)?;
    let mut rows = Vec::with_capacity(graph.factors().len());
    let mut b = DVector::zeros(3 * graph.factors().len());
    for (k, f) in graph.factors().iter().enumerate() {
        let w = theta.whitening(f.noise_ref(), f.condition())?.scale();
        let wdiag = Matrix3::from_diagonal(&Vector3::from(w));
        let (r, jacs) = f.linearize(x0.poses());
        for i in 0..3 {
            b[3 * k + i] = -w[i] * r[i];
        }
        rows.push(FactorRows {
            row_start: 3 * k,
            vars: f.vars().to_vec(),
            jacobians: jacs.iter().map(|j| wdiag * j).collect(),
        });
    }
    Ok(SparseLinearSystem {
        cols: graph.dim(),
        rows,
        b,
    })
}

/// Per-pose translational and rotational RMSE of `b` relative to `a`.
pub fn tracking_rmse(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(LeoError::Shape(format!(
            "trajectories have {} and {} poses",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(LeoError::Empty("trajectories have no poses".into()));
    }
    let (mut t2, mut r2) = (0.0, 0.0);
    for (p, q) in a.poses().iter().zip(b.poses()) {
        let d = p.local(q);
        t2 += d.dx * d.dx + d.dy * d.dy;
        r2 += d.dtheta * d.dtheta;
    }
    let n = a.len() as f64;
    Ok(((t2 / n).sqrt(), (r2 / n).sqrt()))
}
