use log::debug;
use serde::{Deserialize, Serialize};

use super::banded::BandCholesky;
use super::{bandwidth_for, energy, linearize, Factor, FactorGraph, FactorModel, Trajectory};
use crate::error::{LeoError, Result};
use crate::manifold::Pose2;
use crate::models::ThetaParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop when the update's ∞-norm drops below this.
    pub tol: f64,
    pub max_iters: usize,
    /// First Levenberg damping tried after a rejected Gauss-Newton step.
    pub initial_damping: f64,
    /// Damping beyond which the solve is declared diverged.
    pub max_damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 100,
            initial_damping: 1e-4,
            max_damping: 1e10,
        }
    }
}

/// Laplace approximation at the mode: mean trajectory plus the
/// square-root information factor of the undamped `AᵀA`.
#[derive(Clone, Debug)]
pub struct GaussianPosterior {
    pub mean: Trajectory,
    pub sqrt_info: BandCholesky,
    pub iterations: usize,
    pub converged: bool,
    /// Largest Levenberg damping used during the solve; 0 for pure Gauss-Newton.
    pub max_damping_used: f64,
    pub energy: f64,
}

impl GaussianPosterior {
    pub fn dim(&self) -> usize {
        self.sqrt_info.dim()
    }
}

/// Initial guess for variables `known.len()..`: chain odometry from already
/// initialized neighbours, else the variable's GPS measurement, else the
/// previous pose.
pub fn dead_reckon(graph: &FactorGraph, known: &[Pose2]) -> Trajectory {
    let n = graph.num_vars();
    let mut by_var: Vec<Vec<&Factor>> = vec![Vec::new(); n];
    for f in graph.factors() {
        for &v in f.vars() {
            by_var[v].push(f);
        }
    }
    let mut poses: Vec<Pose2> = known.iter().copied().take(n).collect();
    for v in poses.len()..n {
        let mut guess = None;
        for f in &by_var[v] {
            match f.model() {
                FactorModel::OdomRelative(z) => {
                    let (a, b) = (f.vars()[0], f.vars()[1]);
                    if b == v && a < v {
                        guess = Some(poses[a].compose(z));
                        break;
                    }
                    if a == v && b < v {
                        guess = Some(poses[b].compose(&z.inverse()));
                        break;
                    }
                }
                FactorModel::GpsUnary(z) if guess.is_none() => guess = Some(*z),
                _ => {}
            }
        }
        let fallback = poses.last().copied().unwrap_or_default();
        poses.push(guess.unwrap_or(fallback));
    }
    Trajectory::new(poses)
}

fn factor_at(
    graph: &FactorGraph,
    theta: &ThetaParams,
    x: &Trajectory,
    bw: usize,
) -> Result<(BandCholesky, nalgebra::DVector<f64>, super::banded::BandMatrix)> {
    let sys = linearize(graph, theta, x)?;
    let (h, g) = sys.normal_equations(bw);
    let chol = h.cholesky()?;
    Ok((chol, g, h))
}

/// Batch Gauss-Newton with Levenberg fallback.
pub fn solve_gn(
    graph: &FactorGraph,
    theta: &ThetaParams,
    init: &Trajectory,
    cfg: &SolverConfig,
) -> Result<GaussianPosterior> {
    graph.check_trajectory(init)?;
    let bw = bandwidth_for(graph);
    let mut x = init.clone();
    let mut e = energy(graph, theta, &x)?;
    let mut converged = false;
    let mut iterations = 0;
    let mut max_damping_used: f64 = 0.0;

    // Factorization of the undamped system at the current x, kept for reuse
    // as the returned sqrt-information factor.
    let (mut chol, mut g, mut h) = factor_at(graph, theta, &x, bw)?;

    // Damping carried across iterations and adapted by the gain ratio
    // (actual over predicted decrease); zero means a pure Gauss-Newton step.
    let mut carried: f64 = 0.0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut damping = carried;
        loop {
            let delta = if damping == 0.0 {
                chol.solve(&g)
            } else {
                let mut hd = h.clone();
                hd.add_diagonal(damping, 1e-12);
                hd.cholesky()?.solve(&g)
            };
            let step = delta.amax();
            let candidate = x.retract(delta.as_slice());
            let e_new = energy(graph, theta, &candidate)?;
            if !e_new.is_finite() || !candidate.poses().iter().all(Pose2::is_finite) {
                return Err(LeoError::Divergence {
                    iterations,
                    best_energy: e,
                    best: Box::new(x),
                });
            }
            let small = step < cfg.tol;
            if e_new < e || (small && e_new <= e) || (small && damping == 0.0) {
                let predicted = g.dot(&delta) - 0.5 * delta.dot(&h.mul_vec(&delta));
                let rho = if predicted > 0.0 { (e - e_new) / predicted } else { 0.0 };
                x = candidate;
                e = e_new;
                (chol, g, h) = factor_at(graph, theta, &x, bw)?;
                if small {
                    if damping == 0.0 {
                        converged = true;
                    }
                    // A tiny damped step may just be over-damping; probe an
                    // undamped step before declaring convergence.
                    carried = 0.0;
                } else if rho > 0.75 {
                    carried = if damping / 10.0 < cfg.initial_damping { 0.0 } else { damping / 10.0 };
                } else if rho < 0.25 {
                    carried = (damping * 10.0).max(cfg.initial_damping);
                } else {
                    carried = damping;
                }
                max_damping_used = max_damping_used.max(carried);
                break;
            }
            damping = if damping == 0.0 {
                cfg.initial_damping
            } else {
                damping * 10.0
            };
            max_damping_used = max_damping_used.max(damping);
            if damping > cfg.max_damping {
                return Err(LeoError::Divergence {
                    iterations,
                    best_energy: e,
                    best: Box::new(x),
                });
            }
        }
        if converged {
            break;
        }
    }
    debug!("gauss-newton finished: iters={iterations} energy={e:.6e} converged={converged}");
    Ok(GaussianPosterior {
        mean: x,
        sqrt_info: chol,
        iterations,
        converged,
        max_damping_used,
        energy: e,
    })
}

/// Appends `new_vars` variables and `new_factors` to `graph`, then re-solves
/// warm-started at `prev.mean` extended by dead reckoning.
pub fn solve_incremental(
    graph: &mut FactorGraph,
    theta: &ThetaParams,
    prev: &GaussianPosterior,
    new_vars: usize,
    new_factors: Vec<Factor>,
    cfg: &SolverConfig,
) -> Result<GaussianPosterior> {
    if prev.mean.len() != graph.num_vars() {
        return Err(LeoError::Shape(format!(
            "previous posterior has {} poses, graph has {} variables",
            prev.mean.len(),
            graph.num_vars()
        )));
    }
    graph.add_vars(new_vars);
    for f in new_factors {
        graph.add_factor(f)?;
    }
    let init = dead_reckon(graph, prev.mean.poses());
    solve_gn(graph, theta, &init, cfg)
}

/// Owns a growing graph and its latest posterior for streaming use.
#[derive(Clone, Debug)]
pub struct IncrementalSolver {
    graph: FactorGraph,
    posterior: Option<GaussianPosterior>,
    cfg: SolverConfig,
    calls: usize,
}

impl IncrementalSolver {
    pub fn new(cfg: SolverConfig) -> Self {
        Self {
            graph: FactorGraph::new(0),
            posterior: None,
            cfg,
            calls: 0,
        }
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn posterior(&self) -> Option<&GaussianPosterior> {
        self.posterior.as_ref()
    }

    /// Number of optimizer calls made so far.
    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn update(
        &mut self,
        theta: &ThetaParams,
        new_vars: usize,
        new_factors: Vec<Factor>,
    ) -> Result<&GaussianPosterior> {
        self.calls += 1;
        let post = match &self.posterior {
            Some(prev) => solve_incremental(&mut self.graph, theta, prev, new_vars, new_factors, &self.cfg)?,
            None => {
                self.graph.add_vars(new_vars);
                for f in new_factors {
                    self.graph.add_factor(f)?;
                }
                let init = dead_reckon(&self.graph, &[]);
                solve_gn(&self.graph, theta, &init, &self.cfg)?
            }
        };
        Ok(self.posterior.insert(post))
    }
}
