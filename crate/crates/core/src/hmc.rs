//! Hamiltonian Monte Carlo over the tangent space at a fixed base
//! trajectory, as a reference sampler for the Laplace approximation.
//!
//! The chain lives in the chart at `init` (no re-charting), which is exact
//! for energies quadratic in that chart and accurate for the small
//! excursions of well-constrained navigation graphs.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{LeoError, Result};
use crate::graph::{energy, linearize, sample_posterior, solve_gn, FactorGraph, SolverConfig, Trajectory};
use crate::manifold::{right_jacobian, TangentVec};
use crate::models::ThetaParams;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    /// Initial step size; adapted during burn-in when `adapt` is set.
    pub step_size: f64,
    pub burn_in: usize,
    pub adapt: bool,
    pub target_accept: f64,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            leapfrog_steps: 10,
            step_size: 0.1,
            burn_in: 500,
            adapt: true,
            target_accept: 0.65,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HmcChain {
    pub samples: Vec<Trajectory>,
    /// Tangent coordinates of each sample in the chart at the base.
    pub tangents: Vec<DVector<f64>>,
    /// Acceptance rate after burn-in.
    pub accept_rate: f64,
    pub step_size: f64,
    /// Mean `|ΔH|` over post-burn-in proposals.
    pub mean_abs_delta_h: f64,
}

struct Potential<'a> {
    graph: &'a FactorGraph,
    theta: &'a ThetaParams,
    base: &'a Trajectory,
}

impl Potential<'_> {
    fn value(&self, q: &DVector<f64>) -> Result<f64> {
        energy(self.graph, self.theta, &self.base.retract(q.as_slice()))
    }

    /// `∂U/∂q`: the energy gradient w.r.t. a right perturbation at
    /// `base ⊕ q`, pulled back through each pose's right Jacobian.
    fn gradient(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.base.retract(q.as_slice());
        let g = linearize(self.graph, self.theta, &x)?.gradient();
        let mut out = DVector::zeros(q.len());
        for v in 0..q.len() / 3 {
            let d = TangentVec { dx: q[3 * v], dy: q[3 * v + 1], dtheta: q[3 * v + 2] };
            let gv = right_jacobian(&d).transpose() * g.fixed_rows::<3>(3 * v);
            out.fixed_rows_mut::<3>(3 * v).copy_from(&gv);
        }
        Ok(out)
    }
}

/// Leapfrog trajectory from `(q, p)`; returns the end state and its
/// potential, or `None` if anything became non-finite.
fn leapfrog(
    pot: &Potential,
    q: &DVector<f64>,
    p: &DVector<f64>,
    grad: &DVector<f64>,
    eps: f64,
    steps: usize,
) -> Result<Option<(DVector<f64>, DVector<f64>, DVector<f64>, f64)>> {
    let mut q = q.clone();
    let mut p = p - grad * (0.5 * eps);
    let mut g = grad.clone();
    for l in 0..steps {
        q += &p * eps;
        g = pot.gradient(&q)?;
        if !g.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        let w = if l + 1 == steps { 0.5 } else { 1.0 };
        p -= &g * (w * eps);
    }
    let u = pot.value(&q)?;
    if !u.is_finite() {
        return Ok(None);
    }
    Ok(Some((q, p, g, u)))
}

/// Nesterov dual averaging of the log step size toward a target acceptance.
struct DualAveraging {
    mu: f64,
    target: f64,
    h_bar: f64,
    log_eps_bar: f64,
    m: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps: f64, target: f64) -> Self {
        Self { mu: (10.0 * eps).ln(), target, h_bar: 0.0, log_eps_bar: eps.ln(), m: 0.0 }
    }

    fn update(&mut self, accept_prob: f64) -> f64 {
        self.m += 1.0;
        let w = 1.0 / (self.m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        let log_eps = self.mu - self.m.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.m.powf(-Self::KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_step(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// HMC chain of `n_samples` post-burn-in states with unit mass matrix.
pub fn hmc_sample(
    graph: &FactorGraph,
    theta: &ThetaParams,
    init: &Trajectory,
    n_samples: usize,
    cfg: &HmcConfig,
) -> Result<HmcChain> {
    graph.check_trajectory(init)?;
    if cfg.leapfrog_steps == 0 || !(cfg.step_size > 0.0 && cfg.step_size.is_finite()) {
        return Err(LeoError::Config(format!(
            "HMC needs leapfrog_steps > 0 and a positive step size, got {} and {}",
            cfg.leapfrog_steps, cfg.step_size
        )));
    }
    if !(cfg.target_accept > 0.0 && cfg.target_accept < 1.0) {
        return Err(LeoError::Config(format!("target acceptance {} outside (0, 1)", cfg.target_accept)));
    }
    let pot = Potential { graph, theta, base: init };
    let dim = graph.dim();
    let mut rng = seed::rng(cfg.seed, &[0x4d4c]);
    let mut q = DVector::zeros(dim);
    let mut u = pot.value(&q)?;
    let mut grad = pot.gradient(&q)?;
    let mut eps = cfg.step_size;
    let mut da = DualAveraging::new(eps, cfg.target_accept);

    let mut tangents = Vec::with_capacity(n_samples);
    let (mut accepted, mut dh_sum) = (0usize, 0.0);
    for it in 0..cfg.burn_in + n_samples {
        let p0 = DVector::from_fn(dim, |_, _| Distribution::<f64>::sample(&StandardNormal, &mut rng));
        let h0 = u + 0.5 * p0.norm_squared();
        let proposal = leapfrog(&pot, &q, &p0, &grad, eps, cfg.leapfrog_steps)?;
        let (accept_prob, dh) = match &proposal {
            Some((_, p1, _, u1)) => {
                let dh = u1 + 0.5 * p1.norm_squared() - h0;
                let a = if dh.is_finite() { (-dh).exp().min(1.0) } else { 0.0 };
                (a, dh)
            }
            None => (0.0, f64::INFINITY),
        };
        let draw: f64 = rand::Rng::random(&mut rng);
        let take = draw < accept_prob;
        if take {
            let (q1, _, g1, u1) = proposal.expect("accepted proposal exists");
            q = q1;
            grad = g1;
            u = u1;
        }
        if it < cfg.burn_in {
            if cfg.adapt {
                eps = da.update(accept_prob);
                if it + 1 == cfg.burn_in {
                    eps = da.final_step();
                }
            }
        } else {
            accepted += usize::from(take);
            dh_sum += dh.abs();
            tangents.push(q.clone());
        }
    }
    let accept_rate = if n_samples == 0 { 1.0 } else { accepted as f64 / n_samples as f64 };
    if n_samples > 0 && accept_rate < 0.01 {
        return Err(LeoError::Tuning(format!(
            "acceptance rate {accept_rate:.4} after burn-in (step size {eps:.3e})"
        )));
    }
    let samples = tangents.iter().map(|t| init.retract(t.as_slice())).collect();
    Ok(HmcChain {
        samples,
        tangents,
        accept_rate,
        step_size: eps,
        mean_abs_delta_h: dh_sum / n_samples.max(1) as f64,
    })
}

/// Sample covariance of tangent vectors.
pub fn empirical_covariance(tangents: &[DVector<f64>]) -> DMatrix<f64> {
    let n = tangents.len();
    let dim = tangents.first().map_or(0, DVector::len);
    if n < 2 {
        return DMatrix::zeros(dim, dim);
    }
    let mean = tangents.iter().fold(DVector::zeros(dim), |acc, t| acc + t) / n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for t in tangents {
        let d = t - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov / (n - 1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerBench {
    pub dim: usize,
    pub n_samples: usize,
    pub gn_seconds: f64,
    pub hmc_seconds: f64,
    pub gn_per_sample_s: f64,
    pub hmc_per_sample_s: f64,
    /// `hmc_per_sample_s / gn_per_sample_s`.
    pub speedup: f64,
    /// `‖Σ_hmc − Σ_gn‖_F / ‖Σ_gn‖_F` of the empirical tangent covariances.
    pub cov_rel_frobenius: f64,
    pub hmc_accept_rate: f64,
    pub hmc_step_size: f64,
}

impl SamplerBench {
    pub fn without_timing(&self) -> Self {
        Self {
            gn_seconds: 0.0,
            hmc_seconds: 0.0,
            gn_per_sample_s: 0.0,
            hmc_per_sample_s: 0.0,
            speedup: 0.0,
            ..self.clone()
        }
    }
}

/// Solves the graph, then draws `n_samples` from the Laplace sampler and
/// from HMC (in the chart at the mode) and compares cost and covariance.
/// HMC time includes its burn-in.
pub fn bench_samplers(
    graph: &FactorGraph,
    theta: &ThetaParams,
    init: &Trajectory,
    n_samples: usize,
    solver: &SolverConfig,
    hmc: &HmcConfig,
) -> Result<SamplerBench> {
    if n_samples < 2 {
        return Err(LeoError::Config("benchmark needs at least 2 samples".into()));
    }
    let post = solve_gn(graph, theta, init, solver)?;

    let start = Instant::now();
    let gn = sample_posterior(&post, n_samples, 1.0, seed::derive(hmc.seed, &[1]))?;
    let gn_seconds = start.elapsed().as_secs_f64();
    let gn_tangents: Vec<DVector<f64>> = gn
        .iter()
        .map(|s| DVector::from_vec(post.mean.local(s)))
        .collect();

    let start = Instant::now();
    let chain = hmc_sample(graph, theta, &post.mean, n_samples, hmc)?;
    let hmc_seconds = start.elapsed().as_secs_f64();

    let c_gn = empirical_covariance(&gn_tangents);
    let c_hmc = empirical_covariance(&chain.tangents);
    let n = n_samples as f64;
    Ok(SamplerBench {
        dim: graph.dim(),
        n_samples,
        gn_seconds,
        hmc_seconds,
        gn_per_sample_s: gn_seconds / n,
        hmc_per_sample_s: hmc_seconds / n,
        speedup: hmc_seconds / gn_seconds.max(1e-12),
        cov_rel_frobenius: (&c_hmc - &c_gn).norm() / c_gn.norm(),
        hmc_accept_rate: chain.accept_rate,
        hmc_step_size: chain.step_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{single_gps, LinearChain};
    use crate::manifold::Pose2;
    use crate::models::CovBlock;

    fn unit_gps() -> (FactorGraph, ThetaParams, Trajectory) {
        let z = Pose2::new(0.5, -1.0, 0.3);
        let theta = ThetaParams::new().with_block("gps", CovBlock::fixed([0.1f64.ln(); 3]));
        (single_gps(z), theta, Trajectory::new(vec![z]))
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let chain = LinearChain::new(3, 4);
        let theta = LinearChain::theta([0.2, -0.1, 0.3], [-0.4, 0.1, 0.0]);
        let pot = Potential { graph: &chain.graph, theta: &theta, base: &chain.anchors };
        let q = DVector::from_fn(9, |i, _| 0.3 * ((i as f64) * 0.7).sin());
        let g = pot.gradient(&q).unwrap();
        let h = 1e-6;
        for k in 0..9 {
            let mut a = q.clone();
            a[k] += h;
            let mut b = q.clone();
            b[k] -= h;
            let fd = (pot.value(&a).unwrap() - pot.value(&b).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * fd.abs().max(1.0), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn unit_gaussian_moments() {
        let (graph, theta, z) = unit_gps();
        let cfg = HmcConfig { leapfrog_steps: 5, step_size: 0.03, burn_in: 1000, seed: 3, ..Default::default() };
        let chain = hmc_sample(&graph, &theta, &z, 50_000, &cfg).unwrap();
        let cov = empirical_covariance(&chain.tangents);
        let n = chain.tangents.len() as f64;
        let mean = chain.tangents.iter().fold(DVector::zeros(3), |a, t| a + t) / n;
        for k in 0..3 {
            assert!(mean[k].abs() < 0.005, "mean {k}: {}", mean[k]);
            assert!((cov[(k, k)] / 0.01 - 1.0).abs() < 0.05, "var {k}: {}", cov[(k, k)]);
        }
        assert!(chain.accept_rate > 0.4);
    }

    #[test]
    fn small_steps_are_almost_always_accepted() {
        let (graph, theta, z) = unit_gps();
        let cfg = HmcConfig { leapfrog_steps: 50, step_size: 1e-3, burn_in: 0, adapt: false, seed: 1, ..Default::default() };
        let chain = hmc_sample(&graph, &theta, &z, 200, &cfg).unwrap();
        assert!(chain.accept_rate > 0.99, "{}", chain.accept_rate);
    }

    #[test]
    fn leapfrog_error_scales_quadratically() {
        let chain = LinearChain::new(3, 2);
        let theta = LinearChain::theta([0.0; 3], [-0.5; 3]);
        let run = |eps: f64, steps: usize| {
            let cfg = HmcConfig { leapfrog_steps: steps, step_size: eps, burn_in: 0, adapt: false, seed: 5, ..Default::default() };
            hmc_sample(&chain.graph, &theta, &chain.anchors, 400, &cfg).unwrap().mean_abs_delta_h
        };
        let coarse = run(0.1, 10);
        let fine = run(0.05, 20);
        let ratio = coarse / fine;
        assert!((2.5..6.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn linear_chain_matches_laplace_covariance() {
        let chain = LinearChain::new(3, 6);
        let theta = LinearChain::theta([0.1, -0.2, 0.0], [-0.3, 0.2, -0.1]);
        let exact = chain.exact_covariance(&theta);
        let cfg = HmcConfig { leapfrog_steps: 10, step_size: 0.1, burn_in: 1000, seed: 2, ..Default::default() };
        let hmc = hmc_sample(&chain.graph, &theta, &chain.anchors, 40_000, &cfg).unwrap();
        let cov = empirical_covariance(&hmc.tangents);
        let err = (&cov - &exact).norm() / exact.norm();
        assert!(err < 0.1, "relative Frobenius error {err}");
    }

    #[test]
    fn hopeless_step_size_is_a_tuning_error() {
        let chain = LinearChain::new(3, 1);
        let theta = LinearChain::theta([-3.0; 3], [-3.0; 3]);
        let cfg = HmcConfig { leapfrog_steps: 5, step_size: 50.0, burn_in: 0, adapt: false, ..Default::default() };
        assert!(matches!(
            hmc_sample(&chain.graph, &theta, &chain.anchors, 200, &cfg),
            Err(LeoError::Tuning(_))
        ));
        let bad = HmcConfig { leapfrog_steps: 0, ..Default::default() };
        assert!(hmc_sample(&chain.graph, &theta, &chain.anchors, 10, &bad).is_err());
    }

    #[test]
    fn bench_on_tiny_graph_agrees_and_is_deterministic() {
        let chain = LinearChain::new(3, 8);
        let theta = LinearChain::theta([0.0; 3], [-0.2; 3]);
        let cfg = HmcConfig { burn_in: 1000, seed: 4, ..Default::default() };
        let a = bench_samplers(&chain.graph, &theta, &chain.anchors, 20_000, &SolverConfig::default(), &cfg).unwrap();
        assert!(a.cov_rel_frobenius < 0.1, "{}", a.cov_rel_frobenius);
        assert_eq!(a.dim, 9);
        let b = bench_samplers(&chain.graph, &theta, &chain.anchors, 20_000, &SolverConfig::default(), &cfg).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
    }
}
