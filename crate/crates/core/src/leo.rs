//! Sample-based contrastive learning of observation-model parameters.
//!
//! Each epoch solves every training graph at the current θ, draws `S`
//! trajectories from the Laplace posterior at temperature `T`, and steps θ
//! along the pooled estimate of
//!
//! ```text
//! ∇θ E(θ; x_gt, z) − (1/S) Σ_s ∇θ E(θ; x̂_s, z)
//! ```
//!
//! No derivative flows through the solver: the gradient depends only on
//! the returned posterior, the ground truth, and θ.

use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LeoError, Result};
use crate::graph::{
    energy, sample_posterior, solve_gn, tracking_rmse, FactorGraph, GaussianPosterior, SolverConfig,
    Trajectory,
};
use crate::models::{energy_grad_theta, ThetaGrad, ThetaParams};
use crate::navsim::{to_graph, DatasetId, Episode};
use crate::optim::{Optimizer, OptimizerKind};
use crate::seed;
use crate::trainlog::{EpochRecord, TrainLog};

/// A graph with its ground truth and the solver's starting point.
#[derive(Clone, Debug)]
pub struct Example {
    pub graph: FactorGraph,
    pub gt: Trajectory,
    pub init: Trajectory,
}

impl Example {
    pub fn from_episode(ep: &Episode, id: DatasetId) -> Self {
        Self {
            graph: to_graph(ep, id),
            gt: ep.gt.clone(),
            init: ep.gps_guess(),
        }
    }
}

pub fn examples(episodes: &[Episode], id: DatasetId) -> Vec<Example> {
    episodes.iter().map(|e| Example::from_episode(e, id)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TemperatureSchedule {
    Constant,
    /// `T_e = max(T_0 · factor^e, min)`.
    Geometric { factor: f64, min: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeoConfig {
    pub samples: usize,
    pub temperature: f64,
    #[serde(default = "constant_schedule")]
    pub schedule: TemperatureSchedule,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub max_epochs: usize,
    pub seed: u64,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub solver: SolverConfig,
    /// Evaluate the test split every this many epochs; 0 disables.
    #[serde(default)]
    pub test_every: usize,
}

fn constant_schedule() -> TemperatureSchedule {
    TemperatureSchedule::Constant
}

impl Default for LeoConfig {
    fn default() -> Self {
        Self {
            samples: 10,
            temperature: 1.0,
            schedule: TemperatureSchedule::Constant,
            lr: 1e-2,
            optimizer: OptimizerKind::adam_default(),
            max_epochs: 200,
            seed: 0,
            convergence_window: 10,
            convergence_tol: 1e-3,
            solver: SolverConfig::default(),
            test_every: 0,
        }
    }
}

impl LeoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(LeoError::Config("samples must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(LeoError::Config("temperature must be finite and non-negative".into()));
        }
        if !(self.lr > 0.0) {
            return Err(LeoError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn temperature_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            TemperatureSchedule::Constant => self.temperature,
            TemperatureSchedule::Geometric { factor, min } => {
                (self.temperature * factor.powi(epoch as i32)).max(min)
            }
        }
    }
}

/// Both halves of the contrastive estimate for one example.
#[derive(Clone, Debug)]
pub struct ContrastiveTerms {
    pub gt: ThetaGrad,
    pub samples: Vec<ThetaGrad>,
    pub gt_energy: f64,
    pub mean_sample_energy: f64,
}

impl ContrastiveTerms {
    pub fn gradient(&self) -> ThetaGrad {
        let mut g = self.gt.clone();
        let w = -1.0 / self.samples.len() as f64;
        for s in &self.samples {
            g.add_scaled(s, w).expect("same template");
        }
        g
    }
}

/// Energy gradients at the ground truth and at posterior samples.
pub fn contrastive_terms(
    graph: &FactorGraph,
    gt: &Trajectory,
    post: &GaussianPosterior,
    theta: &ThetaParams,
    samples: usize,
    temperature: f64,
    rng_seed: u64,
) -> Result<ContrastiveTerms> {
    let draws = sample_posterior(post, samples, temperature, rng_seed)?;
    let sample_grads = draws
        .iter()
        .map(|x| energy_grad_theta(graph, theta, x))
        .collect::<Result<Vec<_>>>()?;
    let mean_sample_energy = draws
        .iter()
        .map(|x| energy(graph, theta, x))
        .sum::<Result<f64>>()?
        / draws.len() as f64;
    Ok(ContrastiveTerms {
        gt: energy_grad_theta(graph, theta, gt)?,
        samples: sample_grads,
        gt_energy: energy(graph, theta, gt)?,
        mean_sample_energy,
    })
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub grad: ThetaGrad,
    pub mean: Trajectory,
    pub trans_rmse: f64,
    pub rot_rmse: f64,
    /// `E(x_gt) − mean_s E(x̂_s)`.
    pub energy_gap: f64,
}

/// Solve, sample, and assemble the contrastive gradient for one example.
pub fn leo_gradient(
    example: &Example,
    theta: &ThetaParams,
    cfg: &LeoConfig,
    temperature: f64,
    rng_seed: u64,
) -> Result<StepOutcome> {
    let post = solve_gn(&example.graph, theta, &example.init, &cfg.solver)?;
    if !post.converged {
        return Err(LeoError::StaleLinearization);
    }
    let terms = contrastive_terms(
        &example.graph,
        &example.gt,
        &post,
        theta,
        cfg.samples,
        temperature,
        rng_seed,
    )?;
    let (t, r) = tracking_rmse(&example.gt, &post.mean)?;
    Ok(StepOutcome {
        grad: terms.gradient(),
        mean: post.mean,
        trans_rmse: t,
        rot_rmse: r,
        energy_gap: terms.gt_energy - terms.mean_sample_energy,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub failed: usize,
    pub trans_rmse_mean: f64,
    pub trans_rmse_std: f64,
    pub rot_rmse_mean: f64,
    pub rot_rmse_std: f64,
    pub gt_energy_mean: f64,
    pub solve_time_mean_s: f64,
    pub per_episode: Vec<(f64, f64)>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// Solves every example with θ and summarizes tracking errors. Failed
/// solves are counted and excluded from the means.
pub fn evaluate(examples: &[Example], theta: &ThetaParams, solver: &SolverConfig) -> Result<EvalMetrics> {
    if examples.is_empty() {
        return Err(LeoError::Empty("evaluation split has no episodes".into()));
    }
    let results: Vec<_> = examples
        .par_iter()
        .map(|ex| {
            let start = Instant::now();
            let post = solve_gn(&ex.graph, theta, &ex.init, solver);
            let elapsed = start.elapsed().as_secs_f64();
            let out = post.and_then(|p| {
                let (t, r) = tracking_rmse(&ex.gt, &p.mean)?;
                let e = energy(&ex.graph, theta, &ex.gt)?;
                Ok((t, r, e))
            });
            (out, elapsed)
        })
        .collect();
    let mut trans = Vec::new();
    let mut rot = Vec::new();
    let mut energies = Vec::new();
    let mut failed = 0;
    let mut time = 0.0;
    for (i, (r, dt)) in results.into_iter().enumerate() {
        time += dt;
        match r {
            Ok((t, ro, e)) => {
                trans.push(t);
                rot.push(ro);
                energies.push(e);
            }
            // θ that does not fit the graph is a caller error, not a failed solve.
            Err(e @ (LeoError::Config(_) | LeoError::Shape(_))) => return Err(e),
            Err(e) => {
                warn!("evaluation of episode {i} failed: {e}");
                failed += 1;
            }
        }
    }
    let (tm, ts) = mean_std(&trans);
    let (rm, rs) = mean_std(&rot);
    Ok(EvalMetrics {
        episodes: examples.len(),
        failed,
        trans_rmse_mean: tm,
        trans_rmse_std: ts,
        rot_rmse_mean: rm,
        rot_rmse_std: rs,
        gt_energy_mean: mean_std(&energies).0,
        solve_time_mean_s: time / examples.len() as f64,
        per_episode: trans.into_iter().zip(rot).collect(),
    })
}

/// Relative spread of the last `window` values, `(max − min) / mean`.
pub(crate) fn plateaued(history: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    let tail = &history[history.len() - window..];
    let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = tail.iter().sum::<f64>() / window as f64;
    mean > 0.0 && (hi - lo) / mean < tol
}

/// Runs the contrastive trainer; returns the θ with the lowest training
/// tracking error seen and the full log.
pub fn train(
    train_set: &[Example],
    test_set: &[Example],
    theta_init: &ThetaParams,
    cfg: &LeoConfig,
) -> Result<(ThetaParams, TrainLog)> {
    train_named("leo", train_set, test_set, theta_init, cfg)
}

pub(crate) fn train_named(
    method: &str,
    train_set: &[Example],
    test_set: &[Example],
    theta_init: &ThetaParams,
    cfg: &LeoConfig,
) -> Result<(ThetaParams, TrainLog)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(LeoError::Empty("training split has no episodes".into()));
    }
    let start = Instant::now();
    let mut log = TrainLog::new(method);

    // Every episode must be solvable at the starting parameters.
    let offenders: Vec<usize> = train_set
        .par_iter()
        .enumerate()
        .filter_map(|(i, ex)| match solve_gn(&ex.graph, theta_init, &ex.init, &cfg.solver) {
            Ok(p) if p.converged => None,
            _ => Some(i),
        })
        .collect();
    let mut fevals = train_set.len();
    if !offenders.is_empty() {
        return Err(LeoError::Unsolvable(offenders));
    }

    let mut theta = theta_init.clone();
    let mut params = theta.to_flat();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, params.len());
    let mut best: Option<(f64, ThetaParams)> = None;
    let mut history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let temperature = cfg.temperature_at(epoch);
        let outcomes: Vec<Result<StepOutcome>> = train_set
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let s = seed::derive(cfg.seed, &[epoch as u64, i as u64]);
                leo_gradient(ex, &theta, cfg, temperature, s)
            })
            .collect();
        fevals += train_set.len();

        let mut pooled = ThetaGrad::zeros_like(&theta);
        let (mut ok, mut skipped) = (0usize, 0usize);
        let (mut t_sum, mut r_sum, mut gap_sum) = (0.0, 0.0, 0.0);
        for (i, out) in outcomes.into_iter().enumerate() {
            match out {
                Ok(o) => {
                    pooled.add_scaled(&o.grad, 1.0)?;
                    t_sum += o.trans_rmse;
                    r_sum += o.rot_rmse;
                    gap_sum += o.energy_gap;
                    ok += 1;
                }
                Err(e) => {
                    warn!("epoch {epoch}: skipping episode {i}: {e}");
                    skipped += 1;
                }
            }
        }
        if ok == 0 {
            return Err(LeoError::TrainingAbort {
                reason: format!("every episode failed in epoch {epoch}"),
                log: Box::new(log),
            });
        }
        pooled.scale(1.0 / ok as f64);
        let train_t = t_sum / ok as f64;
        let train_r = r_sum / ok as f64;
        if best.as_ref().map_or(true, |(b, _)| train_t < *b) {
            best = Some((train_t, theta.clone()));
        }
        history.push(train_t);

        opt.step(&mut params, &pooled.to_flat());
        theta = theta.with_flat(&params)?;

        let (test_t, test_r) = if cfg.test_every > 0 && !test_set.is_empty() && (epoch + 1) % cfg.test_every == 0 {
            let m = evaluate(test_set, &theta, &cfg.solver)?;
            (Some(m.trans_rmse_mean), Some(m.rot_rmse_mean))
        } else {
            (None, None)
        };
        info!("{method} epoch {epoch}: train rmse ({train_t:.4}, {train_r:.4}) gap {:.3}", gap_sum / ok as f64);
        log.records.push(EpochRecord {
            epoch,
            objective: gap_sum / ok as f64,
            train_trans_rmse: train_t,
            train_rot_rmse: train_r,
            test_trans_rmse: test_t,
            test_rot_rmse: test_r,
            theta: params.clone(),
            fevals,
            skipped,
            wall_clock_s: start.elapsed().as_secs_f64(),
        });
        if plateaued(&history, cfg.convergence_window, cfg.convergence_tol) {
            info!("{method}: converged after {} epochs", epoch + 1);
            break;
        }
    }
    let best = best.map(|(_, t)| t).unwrap_or(theta);
    Ok((best, log))
}
