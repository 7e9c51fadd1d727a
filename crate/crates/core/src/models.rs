//! Learnable observation-model parameters and the analytic energy gradient
//! with respect to them.
//!
//! Every covariance block is diagonal and parameterized by log standard
//! deviations, so any real-valued parameter vector maps to a positive
//! definite covariance.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LeoError, Result};
use crate::graph::{FactorGraph, Trajectory};
use crate::toy1d::MlpWeights;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovMode {
    /// One covariance shared by every factor that references the block.
    Fixed,
    /// One covariance per discrete condition label carried by the factor.
    Conditioned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovBlock {
    pub mode: CovMode,
    pub log_std: Vec<[f64; 3]>,
}

impl CovBlock {
    pub fn fixed(log_std: [f64; 3]) -> Self {
        Self {
            mode: CovMode::Fixed,
            log_std: vec![log_std],
        }
    }

    pub fn conditioned(per_label: Vec<[f64; 3]>) -> Self {
        Self {
            mode: CovMode::Conditioned,
            log_std: per_label,
        }
    }

    pub fn from_std(mode: CovMode, stds: &[[f64; 3]]) -> Self {
        Self {
            mode,
            log_std: stds.iter().map(|s| s.map(f64::ln)).collect(),
        }
    }

    /// Index of the label row that whitens a factor carrying `condition`.
    pub fn label_index(&self, condition: Option<u8>) -> Option<usize> {
        match self.mode {
            CovMode::Fixed => Some(0),
            CovMode::Conditioned => {
                let l = condition? as usize;
                (l < self.log_std.len()).then_some(l)
            }
        }
    }

    pub fn variances(&self) -> Vec<[f64; 3]> {
        self.log_std
            .iter()
            .map(|s| s.map(|v| (2.0 * v).exp()))
            .collect()
    }
}

/// The parameter set θ.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub blocks: BTreeMap<String, CovBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp: Option<MlpWeights>,
}

/// Resolved whitening for one factor: where its gradient goes and the
/// active log standard deviations.
#[derive(Clone, Copy, Debug)]
pub struct Whitening<'a> {
    pub block: &'a str,
    pub label: usize,
    pub log_std: [f64; 3],
}

impl Whitening<'_> {
    pub fn scale(&self) -> [f64; 3] {
        self.log_std.map(|s| (-s).exp())
    }
}

impl ThetaParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_block(mut self, name: impl Into<String>, block: CovBlock) -> Self {
        self.blocks.insert(name.into(), block);
        self
    }

    pub fn whitening<'a>(&'a self, noise_ref: &str, condition: Option<u8>) -> Result<Whitening<'a>> {
        let (name, block) = self
            .blocks
            .get_key_value(noise_ref)
            .ok_or_else(|| LeoError::Config(format!("unknown noise block '{noise_ref}'")))?;
        let label = block.label_index(condition).ok_or_else(|| {
            LeoError::Config(format!(
                "block '{noise_ref}' has no covariance for condition {condition:?}"
            ))
        })?;
        Ok(Whitening {
            block: name,
            label,
            log_std: block.log_std[label],
        })
    }

    /// Number of scalar parameters in the covariance blocks.
    pub fn cov_dim(&self) -> usize {
        self.blocks.values().map(|b| 3 * b.log_std.len()).sum()
    }

    pub fn dim(&self) -> usize {
        self.cov_dim() + self.mlp.as_ref().map_or(0, MlpWeights::len)
    }

    /// Flattens blocks (name order, label, component) followed by MLP weights.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for b in self.blocks.values() {
            for row in &b.log_std {
                out.extend_from_slice(row);
            }
        }
        if let Some(m) = &self.mlp {
            out.extend(m.to_flat());
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat), using `self` as the shape template.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.dim() {
            return Err(LeoError::Shape(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.dim()
            )));
        }
        let mut out = self.clone();
        let mut it = flat.iter().copied();
        for b in out.blocks.values_mut() {
            for row in &mut b.log_std {
                for v in row.iter_mut() {
                    *v = it.next().unwrap();
                }
            }
        }
        if let Some(m) = &mut out.mlp {
            let rest: Vec<f64> = it.collect();
            *m = m.with_flat(&rest)?;
        }
        Ok(out)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| LeoError::Config(format!("cannot serialize parameters: {e}")))?;
        std::fs::write(path, text + "\n").map_err(|e| LeoError::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LeoError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LeoError::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Cotangent of [`ThetaParams`], same shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrad {
    pub blocks: BTreeMap<String, Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp: Option<MlpWeights>,
}

impl ThetaGrad {
    pub fn zeros_like(theta: &ThetaParams) -> Self {
        Self {
            blocks: theta
                .blocks
                .iter()
                .map(|(k, b)| (k.clone(), vec![[0.0; 3]; b.log_std.len()]))
                .collect(),
            mlp: theta.mlp.as_ref().map(MlpWeights::zeros_like),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for rows in self.blocks.values() {
            for row in rows {
                out.extend_from_slice(row);
            }
        }
        if let Some(m) = &self.mlp {
            out.extend(m.to_flat());
        }
        out
    }

    pub fn from_flat(template: &ThetaParams, flat: &[f64]) -> Result<Self> {
        let shaped = template.with_flat(flat)?;
        Ok(Self {
            blocks: shaped
                .blocks
                .into_iter()
                .map(|(k, b)| (k, b.log_std))
                .collect(),
            mlp: shaped.mlp,
        })
    }

    pub fn add_scaled(&mut self, other: &ThetaGrad, scale: f64) -> Result<()> {
        for (k, rows) in &mut self.blocks {
            let o = other
                .blocks
                .get(k)
                .filter(|o| o.len() == rows.len())
                .ok_or_else(|| LeoError::Shape(format!("gradient block '{k}' mismatch")))?;
            for (r, orow) in rows.iter_mut().zip(o) {
                for (v, ov) in r.iter_mut().zip(orow) {
                    *v += scale * ov;
                }
            }
        }
        if other.blocks.len() != self.blocks.len() {
            return Err(LeoError::Shape("gradient block sets differ".into()));
        }
        match (&mut self.mlp, &other.mlp) {
            (Some(a), Some(b)) => a.add_scaled(b, scale)?,
            (None, None) => {}
            _ => return Err(LeoError::Shape("gradient MLP presence differs".into())),
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for rows in self.blocks.values_mut() {
            for r in rows.iter_mut() {
                for v in r.iter_mut() {
                    *v *= s;
                }
            }
        }
        if let Some(m) = &mut self.mlp {
            m.scale(s);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// ∂E/∂θ for the covariance blocks at trajectory `x`.
///
/// With whitened residual `exp(-s) ⊙ r` the energy term is
/// `½ Σ r_i² exp(-2 s_i)`, so each factor contributes `-r_i² exp(-2 s_i)`
/// to the log-std of its active label.
pub fn energy_grad_theta(graph: &FactorGraph, theta: &ThetaParams, x: &Trajectory) -> Result<ThetaGrad> {
    graph.check_trajectory(x)?;
    let mut grad = ThetaGrad::zeros_like(theta);
    for factor in graph.factors() {
        let w = theta.whitening(factor.noise_ref(), factor.condition())?;
        let r = factor.residual(x.poses());
        let scale = w.scale();
        let slot = &mut grad.blocks.get_mut(w.block).expect("block resolved above")[w.label];
        for i in 0..3 {
            let wr = r[i] * scale[i];
            slot[i] -= wr * wr;
        }
    }
    Ok(grad)
}

/// Elementwise `theta - step * grad`.
pub fn theta_axpy(theta: &ThetaParams, grad: &ThetaGrad, step: f64) -> Result<ThetaParams> {
    let t = theta.to_flat();
    let g = grad.to_flat();
    if t.len() != g.len() {
        return Err(LeoError::Shape(format!(
            "parameter vector has {} entries, gradient has {}",
            t.len(),
            g.len()
        )));
    }
    let updated: Vec<f64> = t.iter().zip(&g).map(|(a, b)| a - step * b).collect();
    theta.with_flat(&updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::single_gps;
    use crate::graph::{energy, Factor};
    use crate::manifold::{Pose2, TangentVec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn conditioned_theta(rng: &mut ChaCha8Rng) -> ThetaParams {
        let mut r3 = || [rng.random_range(-1.5..1.0), rng.random_range(-1.5..1.0), rng.random_range(-1.5..1.0)];
        ThetaParams::new()
            .with_block("odom", CovBlock::conditioned(vec![r3(), r3()]))
            .with_block("gps", CovBlock::conditioned(vec![r3(), r3()]))
            .with_block("extra", CovBlock::fixed(r3()))
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> (FactorGraph, Trajectory) {
        let mut g = FactorGraph::new(n);
        let mut poses = Vec::new();
        for i in 0..n {
            let p = Pose2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0));
            poses.push(p);
            let label = Some(rng.random_range(0..2u8));
            let z = p.retract(&TangentVec::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)));
            g.add_factor(Factor::gps(i, z, "gps").with_condition(label)).unwrap();
            if i > 0 {
                let z = poses[i - 1].between(&p).retract(&TangentVec::new(0.3, -0.2, 0.1));
                g.add_factor(Factor::odom(i - 1, i, z, "odom").with_condition(Some(rng.random_range(0..2u8)))).unwrap();
            }
        }
        g.add_factor(Factor::gps(0, Pose2::new(0.1, 0.2, 0.3), "extra")).unwrap();
        let x = Trajectory::new(poses.iter().map(|p| p.retract(&TangentVec::new(0.2, 0.1, -0.1))).collect());
        (g, x)
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let m = Pose2::new(1.0, 1.0, 1.0);
        let theta = ThetaParams::new().with_block("gps", CovBlock::fixed([0.4, 0.1, -0.3]));
        let g = energy_grad_theta(&single_gps(m), &theta, &Trajectory::new(vec![m])).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn unit_residual_example() {
        // r = local(x, m) = (1, 0, 0) when x = m ⊕ (-1, 0, 0)
        let m = Pose2::new(0.0, 0.0, 0.0);
        let x = m.retract(&TangentVec::new(-1.0, 0.0, 0.0));
        let theta = ThetaParams::new().with_block("gps", CovBlock::fixed([0.0; 3]));
        let g = energy_grad_theta(&single_gps(m), &theta, &Trajectory::new(vec![x])).unwrap();
        let d = g.blocks["gps"][0];
        assert!((d[0] + 1.0).abs() < 1e-12 && d[1] == 0.0 && d[2] == 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let h = 1e-5;
        for _ in 0..100 {
            let (g, x) = random_graph(&mut rng, 4);
            let theta = conditioned_theta(&mut rng);
            let grad = energy_grad_theta(&g, &theta, &x).unwrap().to_flat();
            let flat = theta.to_flat();
            for i in 0..flat.len() {
                let mut p = flat.clone();
                p[i] += h;
                let ep = energy(&g, &theta.with_flat(&p).unwrap(), &x).unwrap();
                p[i] -= 2.0 * h;
                let em = energy(&g, &theta.with_flat(&p).unwrap(), &x).unwrap();
                let fd = (ep - em) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0), "coord {i}: {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn label_routing_is_isolated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (g, x) = random_graph(&mut rng, 6);
        let theta = conditioned_theta(&mut rng);
        let mut bumped = theta.clone();
        bumped.blocks.get_mut("gps").unwrap().log_std[0][1] += 0.7;
        for f in g.factors() {
            let mut single = FactorGraph::new(g.num_vars());
            single.add_factor(f.clone()).unwrap();
            let e0 = energy(&single, &theta, &x).unwrap();
            let e1 = energy(&single, &bumped, &x).unwrap();
            let touched = f.noise_ref() == "gps" && f.condition() == Some(0);
            assert_eq!(e0 != e1, touched && f.residual(x.poses())[1] != 0.0);
        }
    }

    #[test]
    fn conditioned_block_requires_label() {
        let theta = ThetaParams::new().with_block("gps", CovBlock::conditioned(vec![[0.0; 3]; 2]));
        assert!(theta.whitening("gps", None).is_err());
        assert!(theta.whitening("gps", Some(2)).is_err());
        assert_eq!(theta.whitening("gps", Some(1)).unwrap().label, 1);
        let fixed = ThetaParams::new().with_block("gps", CovBlock::fixed([0.0; 3]));
        assert_eq!(fixed.whitening("gps", Some(1)).unwrap().label, 0);
    }

    #[test]
    fn axpy_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = conditioned_theta(&mut rng);
        let grad = ThetaGrad::from_flat(&theta, &(0..theta.dim()).map(|i| i as f64 - 4.0).collect::<Vec<_>>()).unwrap();
        assert_eq!(theta_axpy(&theta, &grad, 0.0).unwrap(), theta);
        assert_eq!(theta_axpy(&theta, &ThetaGrad::zeros_like(&theta), 0.3).unwrap(), theta);
        let half = theta_axpy(&theta_axpy(&theta, &grad, 0.25).unwrap(), &grad, 0.25).unwrap();
        let full = theta_axpy(&theta, &grad, 0.5).unwrap();
        for (a, b) in half.to_flat().iter().zip(full.to_flat()) {
            assert!((a - b).abs() < 1e-12);
        }
        let other = ThetaParams::new().with_block("gps", CovBlock::fixed([0.0; 3]));
        assert!(theta_axpy(&other, &grad, 1.0).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut theta = conditioned_theta(&mut rng);
        let mut mlp = MlpWeights::zeros(3);
        let flat: Vec<f64> = (0..mlp.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        mlp = mlp.with_flat(&flat).unwrap();
        theta.mlp = Some(mlp);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.json");
        theta.save_json(&path).unwrap();
        assert_eq!(ThetaParams::load_json(&path).unwrap(), theta);
    }

    proptest! {
        #[test]
        fn any_update_keeps_covariance_positive(
            start in proptest::collection::vec(-20.0..20.0f64, 6),
            grads in proptest::collection::vec(proptest::collection::vec(-10.0..10.0f64, 6), 1..8),
            step in -1.0..1.0f64,
        ) {
            let base = ThetaParams::new()
                .with_block("a", CovBlock::fixed([0.0; 3]))
                .with_block("b", CovBlock::fixed([0.0; 3]));
            let mut theta = base.with_flat(&start).unwrap();
            for g in grads {
                let g = ThetaGrad::from_flat(&theta, &g).unwrap();
                theta = theta_axpy(&theta, &g, step).unwrap();
            }
            for b in theta.blocks.values() {
                for row in b.variances() {
                    prop_assert!(row.iter().all(|v| *v > 0.0 && v.is_finite()));
                }
            }
        }
    }
}
