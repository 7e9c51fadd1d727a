//! One-dimensional regression with a learned neural energy
//! `E(θ, y; x) = f(θ, y; x)²`, trained either contrastively (LEO with a
//! Gauss-Newton inner solver) or by unrolling a fixed inner optimizer.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LeoError, Result};
use crate::graph::Trajectory;
use crate::optim::{Optimizer, OptimizerKind};
use crate::seed;
use crate::trainlog::{EpochRecord, TrainLog};

/// Weights of the `(x, y) → H tanh → H tanh → f` network, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub hidden: usize,
    /// `H × 2`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `H × H`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// `1 × H`
    pub w3: Vec<f64>,
    pub b3: f64,
}

impl MlpWeights {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            hidden,
            w1: vec![0.0; 2 * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * hidden],
            b2: vec![0.0; hidden],
            w3: vec![0.0; hidden],
            b3: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(hidden: usize, seed_value: u64) -> Self {
        let mut rng = seed::rng(seed_value, &[0x3117]);
        let mut fill = |n: usize, fan_in: usize, fan_out: usize| -> Vec<f64> {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-a..a)).collect()
        };
        Self {
            hidden,
            w1: fill(2 * hidden, 2, hidden),
            b1: vec![0.0; hidden],
            w2: fill(hidden * hidden, hidden, hidden),
            b2: vec![0.0; hidden],
            w3: fill(hidden, hidden, 1),
            b3: 0.0,
        }
    }

    pub fn zeros_like(other: &MlpWeights) -> Self {
        Self::zeros(other.hidden)
    }

    pub fn len(&self) -> usize {
        let h = self.hidden;
        2 * h + h + h * h + h + h + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out.extend_from_slice(&self.w3);
        out.push(self.b3);
        out
    }

    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.len() {
            return Err(LeoError::Shape(format!(
                "MLP expects {} parameters, got {}",
                self.len(),
                flat.len()
            )));
        }
        let h = self.hidden;
        let mut off = 0;
        let mut take = |n: usize| {
            let s = flat[off..off + n].to_vec();
            off += n;
            s
        };
        let w1 = take(2 * h);
        let b1 = take(h);
        let w2 = take(h * h);
        let b2 = take(h);
        let w3 = take(h);
        let b3 = take(1)[0];
        Ok(Self {
            hidden: h,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        })
    }

    pub fn add_scaled(&mut self, other: &MlpWeights, scale: f64) -> Result<()> {
        if other.hidden != self.hidden {
            return Err(LeoError::Shape(format!(
                "MLP hidden widths differ: {} vs {}",
                self.hidden, other.hidden
            )));
        }
        let sum: Vec<f64> = self
            .to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| a + scale * b)
            .collect();
        *self = self.with_flat(&sum)?;
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        let v: Vec<f64> = self.to_flat().iter().map(|a| a * s).collect();
        *self = self.with_flat(&v).expect("same shape");
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden;
        let ok = h > 0
            && self.w1.len() == 2 * h
            && self.b1.len() == h
            && self.w2.len() == h * h
            && self.b2.len() == h
            && self.w3.len() == h;
        if !ok {
            return Err(LeoError::Shape(format!("inconsistent MLP layer sizes for hidden width {h}")));
        }
        Ok(())
    }
}

/// Network output and its exact derivatives at one `(x, y)`.
#[derive(Clone, Debug)]
pub struct ToyForward {
    pub f: f64,
    pub grad_y: f64,
    pub grad_theta: MlpWeights,
}

/// Fixed input normalization: x ∈ [0, 2π] maps to [−1, 1], y is divided by 3.
const X_SCALE: f64 = 1.0 / std::f64::consts::PI;
const Y_SCALE: f64 = 1.0 / 3.0;

fn normalized(x: f64, y: f64) -> (f64, f64) {
    (x * X_SCALE - 1.0, y * Y_SCALE)
}

fn hidden_layers(theta: &MlpWeights, x: f64, y: f64, h1: &mut [f64], h2: &mut [f64]) -> f64 {
    let h = theta.hidden;
    let (x, y) = normalized(x, y);
    for i in 0..h {
        h1[i] = (theta.w1[2 * i] * x + theta.w1[2 * i + 1] * y + theta.b1[i]).tanh();
    }
    let mut f = theta.b3;
    for i in 0..h {
        let row = &theta.w2[i * h..(i + 1) * h];
        let a = theta.b2[i] + row.iter().zip(h1.iter()).map(|(w, v)| w * v).sum::<f64>();
        h2[i] = a.tanh();
        f += theta.w3[i] * h2[i];
    }
    f
}

/// `f` and `∂f/∂y` only; the inner solvers' workhorse.
pub fn toy_eval(theta: &MlpWeights, x: f64, y: f64) -> (f64, f64) {
    let h = theta.hidden;
    let mut h1 = vec![0.0; h];
    let mut h2 = vec![0.0; h];
    let f = hidden_layers(theta, x, y, &mut h1, &mut h2);
    // Forward-mode tangent along y.
    let mut df = 0.0;
    let d1: Vec<f64> = (0..h).map(|i| (1.0 - h1[i] * h1[i]) * theta.w1[2 * i + 1] * Y_SCALE).collect();
    for i in 0..h {
        let row = &theta.w2[i * h..(i + 1) * h];
        let da = row.iter().zip(&d1).map(|(w, v)| w * v).sum::<f64>();
        df += theta.w3[i] * (1.0 - h2[i] * h2[i]) * da;
    }
    (f, df)
}

/// Forward pass with reverse-mode derivatives w.r.t. `y` and every weight.
pub fn toy_forward(theta: &MlpWeights, x: f64, y: f64) -> ToyForward {
    let h = theta.hidden;
    let mut h1 = vec![0.0; h];
    let mut h2 = vec![0.0; h];
    let f = hidden_layers(theta, x, y, &mut h1, &mut h2);

    let mut g = MlpWeights::zeros(h);
    g.b3 = 1.0;
    let mut da2 = vec![0.0; h];
    for i in 0..h {
        g.w3[i] = h2[i];
        da2[i] = theta.w3[i] * (1.0 - h2[i] * h2[i]);
        g.b2[i] = da2[i];
    }
    let mut dh1 = vec![0.0; h];
    for i in 0..h {
        for j in 0..h {
            g.w2[i * h + j] = da2[i] * h1[j];
            dh1[j] += theta.w2[i * h + j] * da2[i];
        }
    }
    let (x, y) = normalized(x, y);
    let mut grad_y = 0.0;
    for i in 0..h {
        let da1 = dh1[i] * (1.0 - h1[i] * h1[i]);
        g.w1[2 * i] = da1 * x;
        g.w1[2 * i + 1] = da1 * y;
        g.b1[i] = da1;
        grad_y += da1 * theta.w1[2 * i + 1] * Y_SCALE;
    }
    ToyForward { f, grad_y, grad_theta: g }
}

pub fn toy_energy(theta: &MlpWeights, x: f64, y: f64) -> f64 {
    toy_eval(theta, x, y).0.powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnerSolver {
    /// Damped scalar Gauss-Newton to convergence.
    BatchGn,
    /// Exactly `steps` gradient steps on `E`.
    Gd { step: f64, steps: usize },
    /// Exactly `steps` Gauss-Newton steps, for the unrolled-GN baseline.
    UnrolledGn { steps: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Start the inner solver at `y = 0`.
    Zero,
    /// Start the inner solver at the ground truth.
    GroundTruth,
}

impl InitScheme {
    pub fn start(self, y_gt: f64) -> f64 {
        match self {
            InitScheme::Zero => 0.0,
            InitScheme::GroundTruth => y_gt,
        }
    }
}

impl std::str::FromStr for InitScheme {
    type Err = LeoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(InitScheme::Zero),
            "gt" | "ground_truth" | "ground-truth" => Ok(InitScheme::GroundTruth),
            _ => Err(LeoError::Config(format!("unknown init scheme '{s}' (zero | gt)"))),
        }
    }
}

const GN_DAMPING: f64 = 1e-9;
const GN_TOL: f64 = 1e-8;
const GN_MAX_ITERS: usize = 100;

fn diverged(iterations: usize, e: f64) -> LeoError {
    LeoError::Divergence {
        iterations,
        best_energy: e,
        best: Box::new(Trajectory::new(Vec::new())),
    }
}

fn gn_step(theta: &MlpWeights, x: f64, y: f64) -> f64 {
    let (f, j) = toy_eval(theta, x, y);
    -j * f / (j * j + GN_DAMPING)
}

/// Damped Gauss-Newton to `|δy| < 1e-8`; the flag is false when the
/// iteration cap was hit first.
pub fn gauss_newton(theta: &MlpWeights, x: f64, y_init: f64) -> Result<(f64, bool)> {
    let mut y = y_init;
    for it in 0..GN_MAX_ITERS {
        let d = gn_step(theta, x, y);
        y += d;
        if !y.is_finite() {
            return Err(diverged(it + 1, f64::NAN));
        }
        if d.abs() < GN_TOL {
            return Ok((y, true));
        }
    }
    Ok((y, false))
}

/// Minimizes `E(θ, ·; x)` from `y_init`. A [`LeoError::Divergence`] carries
/// an empty trajectory since the state is scalar.
pub fn inner_solve(theta: &MlpWeights, x: f64, y_init: f64, inner: InnerSolver) -> Result<f64> {
    let mut y = y_init;
    match inner {
        InnerSolver::BatchGn => y = gauss_newton(theta, x, y)?.0,
        InnerSolver::UnrolledGn { steps } => {
            for it in 0..steps {
                y += gn_step(theta, x, y);
                if !y.is_finite() {
                    return Err(diverged(it + 1, f64::NAN));
                }
            }
        }
        InnerSolver::Gd { step, steps } => {
            for it in 0..steps {
                let (f, j) = toy_eval(theta, x, y);
                y -= step * 2.0 * f * j;
                if !y.is_finite() {
                    return Err(diverged(it + 1, f64::NAN));
                }
            }
        }
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub nx: usize,
    pub ny: usize,
    pub y_range: (f64, f64),
}

impl Default for SurfaceGrid {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 401,
            y_range: (-6.0, 4.0),
        }
    }
}

impl SurfaceGrid {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.y_range;
        if self.nx == 0 || self.ny < 2 || !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(LeoError::Config(format!("invalid surface grid {self:?}")));
        }
        Ok(())
    }

    pub fn xs(&self) -> Vec<f64> {
        linspace(0.0, std::f64::consts::TAU, self.nx)
    }

    pub fn ys(&self) -> Vec<f64> {
        linspace(self.y_range.0, self.y_range.1, self.ny)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub hidden: usize,
    pub num_points: usize,
    pub inner: InnerSolver,
    pub init_scheme: InitScheme,
    pub samples: usize,
    pub temperature: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub grid: SurfaceGrid,
    /// Central-difference step for the unrolled baselines' θ-gradient.
    pub fd_step: f64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            num_points: 50,
            inner: InnerSolver::BatchGn,
            init_scheme: InitScheme::Zero,
            samples: 10,
            temperature: 1.0,
            lr: 3e-3,
            epochs: 2000,
            seed: 0,
            grid: SurfaceGrid::default(),
            fd_step: 1e-5,
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.num_points == 0 || self.samples == 0 {
            return Err(LeoError::Config("hidden, num_points and samples must be positive".into()));
        }
        if !(self.temperature >= 0.0 && self.lr > 0.0 && self.fd_step > 0.0) {
            return Err(LeoError::Config("temperature must be ≥ 0, lr and fd_step > 0".into()));
        }
        if let InnerSolver::Gd { step, .. } = self.inner {
            if !(step > 0.0 && step.is_finite()) {
                return Err(LeoError::Config(format!("GD step {step} must be positive")));
            }
        }
        self.grid.validate()
    }
}

/// `(x, x·sin x)` at `n` evenly spaced x in `[0, 2π]`.
pub fn toy_data(n: usize) -> Vec<(f64, f64)> {
    linspace(0.0, std::f64::consts::TAU, n)
        .into_iter()
        .map(|x| (x, x * x.sin()))
        .collect()
}

pub fn write_data_csv(data: &[(f64, f64)], path: &Path) -> Result<()> {
    let mut out = String::from("x,y_gt\n");
    for (x, y) in data {
        out.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(path, out).map_err(|e| LeoError::io(path, e))
}

/// Mean squared tracking error of the inner solver's output (Loss 1).
pub fn tracking_loss(theta: &MlpWeights, data: &[(f64, f64)], inner: InnerSolver, scheme: InitScheme) -> Result<f64> {
    let errs: Result<Vec<f64>> = data
        .par_iter()
        .map(|&(x, y)| inner_solve(theta, x, scheme.start(y), inner).map(|yh| (yh - y).powi(2)))
        .collect();
    let errs = errs?;
    Ok(errs.iter().sum::<f64>() / errs.len().max(1) as f64)
}

struct PointStep {
    grad: Vec<f64>,
    gap: f64,
    sq_err: f64,
}

fn leo_point(theta: &MlpWeights, x: f64, y_gt: f64, cfg: &ToyConfig, seed_value: u64) -> Result<PointStep> {
    let y_hat = inner_solve(theta, x, cfg.init_scheme.start(y_gt), InnerSolver::BatchGn)?;
    let (_, j) = toy_eval(theta, x, y_hat);
    if !(j * j > 0.0) {
        return Err(LeoError::StaleLinearization);
    }
    // Laplace approximation with the Gauss-Newton Hessian 2J².
    let std = (cfg.temperature / (2.0 * j * j)).sqrt();
    let mut rng = seed::rng(seed_value, &[]);

    let gt = toy_forward(theta, x, y_gt);
    let mut grad: Vec<f64> = gt.grad_theta.to_flat().iter().map(|g| 2.0 * gt.f * g).collect();
    let e_gt = gt.f * gt.f;
    let mut e_samples = 0.0;
    let w = 1.0 / cfg.samples as f64;
    for _ in 0..cfg.samples {
        let eps: f64 = StandardNormal.sample(&mut rng);
        let ys = y_hat + std * eps;
        let s = toy_forward(theta, x, ys);
        e_samples += w * s.f * s.f;
        for (a, b) in grad.iter_mut().zip(s.grad_theta.to_flat()) {
            *a -= w * 2.0 * s.f * b;
        }
    }
    Ok(PointStep {
        grad,
        gap: e_gt - e_samples,
        sq_err: (y_hat - y_gt).powi(2),
    })
}

fn toy_record(epoch: usize, objective: f64, sq_err: f64, fevals: usize, skipped: usize, start: &Instant) -> EpochRecord {
    EpochRecord {
        epoch,
        objective,
        train_trans_rmse: sq_err.sqrt(),
        train_rot_rmse: 0.0,
        test_trans_rmse: None,
        test_rot_rmse: None,
        // Network weights are checkpointed separately; per-epoch copies
        // would dominate the log.
        theta: Vec::new(),
        fevals,
        skipped,
        wall_clock_s: start.elapsed().as_secs_f64(),
    }
}

/// Contrastive training: lower the energy at the data, raise it at Laplace
/// samples around the inner solver's mode. Returns the final weights.
pub fn toy_leo_train(data: &[(f64, f64)], theta_init: &MlpWeights, cfg: &ToyConfig) -> Result<(MlpWeights, TrainLog)> {
    cfg.validate()?;
    theta_init.validate()?;
    if data.is_empty() {
        return Err(LeoError::Empty("toy training set is empty".into()));
    }
    let start = Instant::now();
    let mut log = TrainLog::new("toy-leo");
    let mut params = theta_init.to_flat();
    let mut theta = theta_init.clone();
    let mut opt = Optimizer::new(OptimizerKind::adam_default(), cfg.lr, params.len());
    let mut fevals = 0;
    for epoch in 0..cfg.epochs {
        let steps: Vec<Result<PointStep>> = data
            .par_iter()
            .enumerate()
            .map(|(i, &(x, y))| leo_point(&theta, x, y, cfg, seed::derive(cfg.seed, &[epoch as u64, i as u64])))
            .collect();
        fevals += data.len();
        let mut pooled = vec![0.0; params.len()];
        let (mut ok, mut skipped, mut gap, mut sq) = (0usize, 0usize, 0.0, 0.0);
        for (i, s) in steps.into_iter().enumerate() {
            match s {
                Ok(s) => {
                    for (a, b) in pooled.iter_mut().zip(&s.grad) {
                        *a += b;
                    }
                    gap += s.gap;
                    sq += s.sq_err;
                    ok += 1;
                }
                Err(e) => {
                    warn!("toy epoch {epoch}: skipping point {i}: {e}");
                    skipped += 1;
                }
            }
        }
        if ok == 0 {
            return Err(LeoError::TrainingAbort {
                reason: format!("every point failed in epoch {epoch}"),
                log: Box::new(log),
            });
        }
        let n = ok as f64;
        pooled.iter_mut().for_each(|g| *g /= n);
        opt.step(&mut params, &pooled);
        theta = theta.with_flat(&params)?;
        if epoch % 100 == 0 {
            info!("toy-leo epoch {epoch}: tracking mse {:.5} gap {:.4}", sq / n, gap / n);
        }
        log.records.push(toy_record(epoch, gap / n, sq / n, fevals, skipped, &start));
    }
    Ok((theta, log))
}

/// Central-difference gradient of the tracking loss w.r.t. every weight.
pub fn unrolled_gradient(
    theta: &MlpWeights,
    data: &[(f64, f64)],
    inner: InnerSolver,
    scheme: InitScheme,
    h: f64,
) -> Result<Vec<f64>> {
    let base = theta.to_flat();
    (0..base.len())
        .into_par_iter()
        .map(|k| {
            let mut p = base.clone();
            p[k] = base[k] + h;
            let up = tracking_loss(&theta.with_flat(&p)?, data, inner, scheme)?;
            p[k] = base[k] - h;
            let down = tracking_loss(&theta.with_flat(&p)?, data, inner, scheme)?;
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Trains the energy so that `cfg.inner`, started per `cfg.init_scheme`,
/// lands on the data: direct minimization of the tracking loss.
pub fn toy_unrolled_train(data: &[(f64, f64)], theta_init: &MlpWeights, cfg: &ToyConfig) -> Result<(MlpWeights, TrainLog)> {
    cfg.validate()?;
    theta_init.validate()?;
    if data.is_empty() {
        return Err(LeoError::Empty("toy training set is empty".into()));
    }
    let method = match cfg.inner {
        InnerSolver::Gd { .. } => "toy-unrolled-gd",
        InnerSolver::UnrolledGn { .. } => "toy-unrolled-gn",
        InnerSolver::BatchGn => "toy-unrolled-batch-gn",
    };
    let start = Instant::now();
    let mut log = TrainLog::new(method);
    let mut params = theta_init.to_flat();
    let mut theta = theta_init.clone();
    let mut opt = Optimizer::new(OptimizerKind::adam_default(), cfg.lr, params.len());
    let per_grad = 2 * params.len() * data.len();
    let mut fevals = 0;
    for epoch in 0..cfg.epochs {
        let loss = tracking_loss(&theta, data, cfg.inner, cfg.init_scheme)?;
        let grad = unrolled_gradient(&theta, data, cfg.inner, cfg.init_scheme, cfg.fd_step)?;
        fevals += data.len() + per_grad;
        opt.step(&mut params, &grad);
        theta = theta.with_flat(&params)?;
        if epoch % 50 == 0 {
            info!("{method} epoch {epoch}: tracking mse {loss:.5}");
        }
        log.records.push(toy_record(epoch, loss, loss, fevals, 0, &start));
    }
    Ok((theta, log))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Surface {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `energy[i][j]` at `(xs[i], ys[j])`.
    pub energy: Vec<Vec<f64>>,
}

impl Surface {
    /// Energy min-max normalized along each x-slice; flat slices map to 0.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.energy
            .iter()
            .map(|col| {
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let range = hi - lo;
                col.iter()
                    .map(|e| if range > 0.0 { (e - lo) / range } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    /// Per-x `y` minimizing the energy on the grid.
    pub fn argmin(&self) -> Vec<(f64, f64)> {
        self.xs
            .iter()
            .zip(&self.energy)
            .map(|(&x, col)| {
                let j = (0..col.len()).min_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap_or(0);
                (x, self.ys[j])
            })
            .collect()
    }

    /// Strict local minima along each x-slice; an endpoint counts when it is
    /// below its single neighbour.
    pub fn basin_counts(&self) -> Vec<usize> {
        self.energy
            .iter()
            .map(|col| {
                let n = col.len();
                (0..n)
                    .filter(|&j| {
                        let left = j == 0 || col[j] < col[j - 1];
                        let right = j + 1 == n || col[j] < col[j + 1];
                        left && right
                    })
                    .count()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let norm = self.normalized();
        let mut out = String::from("x,y,E,E_normalized\n");
        for (i, &x) in self.xs.iter().enumerate() {
            for (j, &y) in self.ys.iter().enumerate() {
                out.push_str(&format!("{x},{y},{},{}\n", self.energy[i][j], norm[i][j]));
            }
        }
        out
    }
}

pub fn energy_surface(theta: &MlpWeights, grid: &SurfaceGrid) -> Result<Surface> {
    grid.validate()?;
    let xs = grid.xs();
    let ys = grid.ys();
    let energy = xs
        .par_iter()
        .map(|&x| ys.iter().map(|&y| toy_energy(theta, x, y)).collect())
        .collect();
    Ok(Surface { xs, ys, energy })
}

pub fn export_surface(theta: &MlpWeights, grid: &SurfaceGrid, path: &Path) -> Result<Surface> {
    let s = energy_surface(theta, grid)?;
    let mut f = std::fs::File::create(path).map_err(|e| LeoError::io(path, e))?;
    f.write_all(s.to_csv().as_bytes()).map_err(|e| LeoError::io(path, e))?;
    Ok(s)
}

/// Fraction of `(x, y)` pairs with `|y − x·sin x| ≤ tol`.
pub fn fraction_on_curve(points: &[(f64, f64)], tol: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let hits = points.iter().filter(|(x, y)| (y - x * x.sin()).abs() <= tol).count();
    hits as f64 / points.len() as f64
}

/// Inner-solver outputs at the grid's x values from the given init scheme.
pub fn solve_on_grid(theta: &MlpWeights, grid: &SurfaceGrid, scheme: InitScheme) -> Vec<(f64, f64)> {
    grid.xs()
        .into_par_iter()
        .map(|x| {
            let y = inner_solve(theta, x, scheme.start(x * x.sin()), InnerSolver::BatchGn).unwrap_or(f64::NAN);
            (x, y)
        })
        .collect()
}
