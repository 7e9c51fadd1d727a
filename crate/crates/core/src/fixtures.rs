//! Small graphs with known closed-form posteriors, used by tests, the
//! acceptance suite, and sampler benchmarks.

use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::Rng;

use crate::graph::{Factor, FactorGraph, LinearTangentFactor, Trajectory};
use crate::manifold::{Pose2, TangentVec};
use crate::models::{CovBlock, ThetaParams};
use crate::seed;

/// A linear-Gaussian chain: one unary `local(anchor_i, x_i)` factor per
/// pose (block `"unary"`) and one relative factor
/// `local(anchor_i, x_i) - local(anchor_{i+1}, x_{i+1})` per neighbour pair
/// (block `"relative"`). With zero targets the mode is the anchor
/// trajectory and, in the anchors' chart, the energy is exactly quadratic.
#[derive(Clone, Debug)]
pub struct LinearChain {
    pub graph: FactorGraph,
    pub anchors: Trajectory,
    /// Unwhitened stacked design matrix, rows in factor order.
    pub design: DMatrix<f64>,
}

impl LinearChain {
    pub fn new(num_poses: usize, seed_value: u64) -> Self {
        Self::with_targets(num_poses, seed_value, false)
    }

    /// With `random_targets` the factor targets are nonzero, moving the mode
    /// away from the anchors.
    pub fn with_targets(num_poses: usize, seed_value: u64, random_targets: bool) -> Self {
        let mut rng = seed::rng(seed_value, &[0xf1]);
        let anchors: Vec<Pose2> = (0..num_poses)
            .map(|_| {
                Pose2::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                )
            })
            .collect();
        let target = |rng: &mut rand_chacha::ChaCha8Rng| {
            if random_targets {
                Vector3::new(
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.3..0.3),
                )
            } else {
                Vector3::zeros()
            }
        };
        let mut graph = FactorGraph::new(num_poses);
        let rows = 3 * (2 * num_poses - 1);
        let mut design = DMatrix::zeros(rows, 3 * num_poses);
        let mut row = 0;
        for i in 0..num_poses {
            let f = LinearTangentFactor {
                anchors: vec![anchors[i]],
                coeffs: vec![Matrix3::identity()],
                target: target(&mut rng),
            };
            graph
                .add_factor(Factor::custom(vec![i], Arc::new(f), "unary"))
                .expect("valid index");
            design
                .view_mut((row, 3 * i), (3, 3))
                .copy_from(&Matrix3::identity());
            row += 3;
        }
        for i in 0..num_poses - 1 {
            let f = LinearTangentFactor {
                anchors: vec![anchors[i], anchors[i + 1]],
                coeffs: vec![Matrix3::identity(), -Matrix3::identity()],
                target: target(&mut rng),
            };
            graph
                .add_factor(Factor::custom(vec![i, i + 1], Arc::new(f), "relative"))
                .expect("valid index");
            design
                .view_mut((row, 3 * i), (3, 3))
                .copy_from(&Matrix3::identity());
            design
                .view_mut((row, 3 * (i + 1)), (3, 3))
                .copy_from(&(-Matrix3::identity()));
            row += 3;
        }
        Self {
            graph,
            anchors: Trajectory::new(anchors),
            design,
        }
    }

    pub fn theta(unary_log_std: [f64; 3], relative_log_std: [f64; 3]) -> ThetaParams {
        ThetaParams::new()
            .with_block("unary", CovBlock::fixed(unary_log_std))
            .with_block("relative", CovBlock::fixed(relative_log_std))
    }

    /// Row-wise log-std matching `design`'s rows under `theta`.
    pub fn row_log_std(&self, theta: &ThetaParams) -> Vec<f64> {
        let mut out = Vec::new();
        for f in self.graph.factors() {
            let w = theta
                .whitening(f.noise_ref(), f.condition())
                .expect("fixture blocks present");
            out.extend_from_slice(&w.log_std);
        }
        out
    }

    /// Exact `(AᵀA)⁻¹` in the anchors' chart, from the dense design matrix.
    pub fn exact_covariance(&self, theta: &ThetaParams) -> DMatrix<f64> {
        let s = self.row_log_std(theta);
        let mut a = self.design.clone();
        for (r, sv) in s.iter().enumerate() {
            a.row_mut(r).scale_mut((-sv).exp());
        }
        (a.transpose() * a)
            .try_inverse()
            .expect("chain design has full column rank")
    }

    pub fn anchor_retract(&self, delta: &[f64]) -> Trajectory {
        self.anchors.retract(delta)
    }

    pub fn anchor_local(&self, x: &Trajectory) -> Vec<f64> {
        self.anchors.local(x)
    }
}

/// Single-pose graph with one GPS unary at `z`, noise block `"gps"`.
pub fn single_gps(z: Pose2) -> FactorGraph {
    let mut g = FactorGraph::new(1);
    g.add_factor(Factor::gps(0, z, "gps")).expect("valid index");
    g
}

pub fn tangent(dx: f64, dy: f64, dtheta: f64) -> TangentVec {
    TangentVec::new(dx, dy, dtheta)
}
