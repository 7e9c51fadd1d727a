//! Comparison methods: derivative-free search on tracking loss, decoupled
//! residual-moment fitting, and the zero-temperature contrastive trainer.

use std::collections::BTreeMap;
use std::time::Instant;

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LeoError, Result};
use crate::graph::{solve_gn, tracking_rmse, SolverConfig};
use crate::leo::{evaluate, train_named, Example, LeoConfig, TemperatureSchedule};
use crate::models::ThetaParams;
use crate::trainlog::{EpochRecord, TrainLog};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SimplexResult {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
}

/// Nelder-Mead minimization from an explicit starting simplex of `n + 1`
/// vertices. `f` is called at most `budget` times; non-finite values are
/// treated as `+∞`. `on_eval` sees every evaluated point and its value.
pub fn nelder_mead<F, G>(mut f: F, simplex: Vec<Vec<f64>>, budget: usize, mut on_eval: G) -> Result<SimplexResult>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64], f64),
{
    let n = simplex.first().map_or(0, Vec::len);
    if n == 0 || simplex.len() != n + 1 || simplex.iter().any(|v| v.len() != n) {
        return Err(LeoError::DegenerateSimplex(format!(
            "need {} vertices of dimension {n}, got {}",
            n + 1,
            simplex.len()
        )));
    }
    check_simplex(&simplex)?;
    if budget < n + 1 {
        return Err(LeoError::Config(format!(
            "budget of {budget} evaluations cannot cover the {}-vertex simplex",
            n + 1
        )));
    }

    let mut used = 0usize;
    let mut eval = |x: &[f64], used: &mut usize| -> f64 {
        *used += 1;
        let v = f(x);
        let v = if v.is_finite() { v } else { f64::INFINITY };
        on_eval(x, v);
        v
    };

    let mut pts: Vec<(Vec<f64>, f64)> = simplex
        .into_iter()
        .map(|x| {
            let v = eval(&x, &mut used);
            (x, v)
        })
        .collect();

    let point = |c: &[f64], d: &[f64], t: f64| -> Vec<f64> { c.iter().zip(d).map(|(a, b)| a + t * (b - a)).collect() };

    while used < budget {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let worst = pts[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64)
            .collect();

        let xr = point(&centroid, &worst.0, -REFLECT);
        let fr = eval(&xr, &mut used);
        if fr < pts[0].1 {
            if used >= budget {
                pts[n] = (xr, fr);
                break;
            }
            let xe = point(&centroid, &xr, EXPAND);
            let fe = eval(&xe, &mut used);
            pts[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < pts[n - 1].1 {
            pts[n] = (xr, fr);
            continue;
        }
        if used >= budget {
            if fr < worst.1 {
                pts[n] = (xr, fr);
            }
            break;
        }
        let (xc, fc, ok) = if fr < worst.1 {
            let xc = point(&centroid, &xr, CONTRACT);
            let fc = eval(&xc, &mut used);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = point(&centroid, &worst.0, CONTRACT);
            let fc = eval(&xc, &mut used);
            let ok = fc < worst.1;
            (xc, fc, ok)
        };
        if ok {
            pts[n] = (xc, fc);
            continue;
        }
        if fr < worst.1 {
            pts[n] = (xr, fr);
        }
        let best = pts[0].0.clone();
        for p in pts.iter_mut().skip(1) {
            if used >= budget {
                break;
            }
            let x = point(&best, &p.0, SHRINK);
            let v = eval(&x, &mut used);
            *p = (x, v);
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (best, best_value) = pts.swap_remove(0);
    Ok(SimplexResult {
        best,
        best_value,
        evaluations: used,
    })
}

fn check_simplex(simplex: &[Vec<f64>]) -> Result<()> {
    let n = simplex[0].len();
    if simplex.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LeoError::DegenerateSimplex("non-finite vertex".into()));
    }
    let d = DMatrix::from_fn(n, n, |i, j| simplex[j + 1][i] - simplex[0][i]);
    let sv = d.singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if !(hi > 0.0) || lo <= 1e-10 * hi {
        return Err(LeoError::DegenerateSimplex(format!(
            "edge vectors are linearly dependent (singular values {lo:e}..{hi:e})"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NelderMeadConfig {
    /// Budget in graph solves; one objective evaluation costs one solve per
    /// training episode.
    pub budget_fevals: usize,
    /// Edge length of the initial axis-aligned simplex, in log-std units.
    pub initial_step: f64,
    pub solver: SolverConfig,
    /// Evaluate on the test split every this many objective evaluations (0 = never).
    pub test_every: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            budget_fevals: 3000,
            initial_step: 0.5,
            solver: SolverConfig::default(),
            test_every: 0,
        }
    }
}

/// Mean squared tangent-space tracking error per pose, averaged over
/// episodes; `+∞` if any solve fails. Also returns mean (trans, rot) RMSE.
pub fn tracking_loss(examples: &[Example], theta: &ThetaParams, solver: &SolverConfig) -> (f64, f64, f64) {
    let per: Vec<Option<(f64, f64, f64)>> = examples
        .par_iter()
        .map(|ex| {
            let post = solve_gn(&ex.graph, theta, &ex.init, solver).ok()?;
            let local = ex.gt.local(&post.mean);
            let sq = local.iter().map(|v| v * v).sum::<f64>() / ex.gt.len() as f64;
            let (t, r) = tracking_rmse(&ex.gt, &post.mean).ok()?;
            Some((sq, t, r))
        })
        .collect();
    if per.iter().any(Option::is_none) || per.is_empty() {
        return (f64::INFINITY, f64::NAN, f64::NAN);
    }
    let n = per.len() as f64;
    per.into_iter().flatten().fold((0.0, 0.0, 0.0), |acc, (l, t, r)| {
        (acc.0 + l / n, acc.1 + t / n, acc.2 + r / n)
    })
}

/// Derivative-free minimization of the training tracking loss over the
/// flattened log-std vector. One log record per objective evaluation,
/// reporting the best vertex found so far.
pub fn blackbox_nelder_mead(
    train_set: &[Example],
    test_set: &[Example],
    theta_init: &ThetaParams,
    cfg: &NelderMeadConfig,
) -> Result<(ThetaParams, TrainLog)> {
    if train_set.is_empty() {
        return Err(LeoError::Empty("training split has no episodes".into()));
    }
    if !(cfg.initial_step.is_finite() && cfg.initial_step != 0.0) {
        return Err(LeoError::DegenerateSimplex(format!(
            "initial step {} spans no volume",
            cfg.initial_step
        )));
    }
    let x0 = theta_init.to_flat();
    let dim = x0.len();
    let budget = cfg.budget_fevals / train_set.len();
    if budget < dim + 1 {
        return Err(LeoError::Config(format!(
            "feval budget {} allows {budget} objective evaluations, need at least {}",
            cfg.budget_fevals,
            dim + 1
        )));
    }
    let mut simplex = vec![x0.clone()];
    for i in 0..dim {
        let mut v = x0.clone();
        v[i] += cfg.initial_step;
        simplex.push(v);
    }

    let start = Instant::now();
    let mut log = TrainLog::new("nelder-mead");
    let mut best: Option<(f64, f64, f64, Vec<f64>)> = None;
    let mut count = 0usize;
    // Train RMSEs are side outputs of each objective call; they are paired
    // with the evaluated points afterwards to build the log.
    let mut side: Vec<(f64, f64)> = Vec::new();
    let mut pending: Vec<(Vec<f64>, f64)> = Vec::new();
    let objective = |x: &[f64]| -> f64 {
        let Ok(theta) = theta_init.with_flat(x) else {
            side.push((f64::NAN, f64::NAN));
            return f64::INFINITY;
        };
        let (loss, t, r) = tracking_loss(train_set, &theta, &cfg.solver);
        side.push((t, r));
        loss
    };
    let result = nelder_mead(objective, simplex, budget, |x, v| pending.push((x.to_vec(), v)))?;

    for ((x, v), (t, r)) in pending.into_iter().zip(side) {
        count += 1;
        if v.is_infinite() {
            warn!("nelder-mead evaluation {count}: a training solve failed");
        }
        if best.as_ref().map_or(true, |b| v < b.0) {
            best = Some((v, t, r, x));
        }
        let (bv, bt, br, bx) = best.clone().unwrap();
        let (test_t, test_r) = if cfg.test_every > 0 && !test_set.is_empty() && count % cfg.test_every == 0 {
            let m = evaluate(test_set, &theta_init.with_flat(&bx)?, &cfg.solver)?;
            (Some(m.trans_rmse_mean), Some(m.rot_rmse_mean))
        } else {
            (None, None)
        };
        log.records.push(EpochRecord {
            epoch: count - 1,
            objective: bv,
            train_trans_rmse: bt,
            train_rot_rmse: br,
            test_trans_rmse: test_t,
            test_rot_rmse: test_r,
            theta: bx,
            fevals: count * train_set.len(),
            skipped: usize::from(v.is_infinite()),
            wall_clock_s: start.elapsed().as_secs_f64(),
        });
    }
    info!(
        "nelder-mead: {} evaluations, best loss {:.6}",
        result.evaluations, result.best_value
    );
    Ok((theta_init.with_flat(&result.best)?, log))
}

/// Per block and condition label, variance = mean squared raw residual at
/// the ground truth (floored at 1e-12). Ignores the optimizer entirely.
pub fn surrogate_fit(examples: &[Example], template: &ThetaParams) -> Result<ThetaParams> {
    if examples.is_empty() {
        return Err(LeoError::Empty("surrogate fit needs at least one episode".into()));
    }
    let mut sums: BTreeMap<(String, usize), ([f64; 3], usize)> = BTreeMap::new();
    for ex in examples {
        ex.graph.check_trajectory(&ex.gt)?;
        for f in ex.graph.factors() {
            let w = template.whitening(f.noise_ref(), f.condition())?;
            let r = f.residual(ex.gt.poses());
            let e = sums.entry((w.block.to_string(), w.label)).or_insert(([0.0; 3], 0));
            for i in 0..3 {
                e.0[i] += r[i] * r[i];
            }
            e.1 += 1;
        }
    }
    let mut out = template.clone();
    for (name, block) in out.blocks.iter_mut() {
        for (label, s) in block.log_std.iter_mut().enumerate() {
            let Some((sq, n)) = sums.get(&(name.clone(), label)) else {
                return Err(LeoError::Empty(format!(
                    "no factors support noise block '{name}' label {label}"
                )));
            };
            for i in 0..3 {
                let var = (sq[i] / *n as f64).max(1e-12);
                s[i] = 0.5 * var.ln();
            }
        }
    }
    Ok(out)
}

/// [`surrogate_fit`] packaged like the other trainers: a single log record
/// with train (and optionally test) tracking errors of the fitted θ.
pub fn surrogate_train(
    train_set: &[Example],
    test_set: &[Example],
    template: &ThetaParams,
    solver: &SolverConfig,
) -> Result<(ThetaParams, TrainLog)> {
    let start = Instant::now();
    let theta = surrogate_fit(train_set, template)?;
    let train = evaluate(train_set, &theta, solver)?;
    let test = if test_set.is_empty() {
        None
    } else {
        Some(evaluate(test_set, &theta, solver)?)
    };
    let mut log = TrainLog::new("surrogate");
    log.records.push(EpochRecord {
        epoch: 0,
        objective: train.gt_energy_mean,
        train_trans_rmse: train.trans_rmse_mean,
        train_rot_rmse: train.rot_rmse_mean,
        test_trans_rmse: test.as_ref().map(|m| m.trans_rmse_mean),
        test_rot_rmse: test.as_ref().map(|m| m.rot_rmse_mean),
        theta: theta.to_flat(),
        fevals: train_set.len(),
        skipped: train.failed,
        wall_clock_s: start.elapsed().as_secs_f64(),
    });
    Ok((theta, log))
}

/// Contrastive training at zero temperature: the sample set collapses to
/// the optimizer's mode.
pub fn perceptron_train(
    train_set: &[Example],
    test_set: &[Example],
    theta_init: &ThetaParams,
    cfg: &LeoConfig,
) -> Result<(ThetaParams, TrainLog)> {
    let cfg = LeoConfig {
        temperature: 0.0,
        schedule: TemperatureSchedule::Constant,
        ..cfg.clone()
    };
    train_named("perceptron", train_set, test_set, theta_init, &cfg)
}
