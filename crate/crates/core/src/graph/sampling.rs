use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{GaussianPosterior, Trajectory};
use crate::error::{LeoError, Result};
use crate::seed;

/// Draws `count` trajectories `mean ⊕ δx` with `R δx = √T ε`, `ε ~ N(0, I)`,
/// so the tangent samples have covariance `T (AᵀA)⁻¹`. Each sample uses its
/// own derived stream, so the result does not depend on thread scheduling.
pub fn sample_posterior(
    post: &GaussianPosterior,
    count: usize,
    temperature: f64,
    rng_seed: u64,
) -> Result<Vec<Trajectory>> {
    if !post.converged {
        return Err(LeoError::StaleLinearization);
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(LeoError::Config(format!(
            "temperature must be finite and non-negative, got {temperature}"
        )));
    }
    if temperature == 0.0 {
        return Ok(vec![post.mean.clone(); count]);
    }
    let scale = temperature.sqrt();
    let n = post.dim();
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(rng_seed, &[i as u64]);
            let mut v: Vec<f64> = (0..n)
                .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>();
            post.sqrt_info.solve_upper(&mut v);
            post.mean.retract(&v)
        })
        .collect())
}
