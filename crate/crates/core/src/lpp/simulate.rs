use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{DriftSpec, LatentTrajectorySet, LppError, TimeGrid};
use crate::rng::{domain, substream};

fn check_common(n: usize, v: &[f64], sigma: f64) -> Result<(), LppError> {
    if n == 0 {
        return Err(LppError::InvalidSpec("node count must be positive".into()));
    }
    if v.is_empty() {
        return Err(LppError::InvalidSpec("direction v is empty".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(LppError::InvalidSpec(format!("sigma {sigma} must be >= 0")));
    }
    Ok(())
}

/// Runs `path` once per node on the node's own substream and scatters the
/// resulting `m x d` paths into time-major snapshots.
fn simulate_nodes<F>(grid: &TimeGrid, n: usize, d: usize, seed: u64, path: F) -> LatentTrajectorySet
where
    F: Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    let m = grid.len();
    let paths: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| path(&mut substream(seed, domain::LATENT, j as u64)))
        .collect();
    let snapshots = (0..m)
        .map(|i| DMatrix::from_fn(n, d, |j, k| paths[j][i * d + k]))
        .collect();
    LatentTrajectorySet::new(grid.clone(), snapshots).expect("one snapshot per grid time")
}

/// `X_t = a(t) v + B_t`, with `B` a `d`-dimensional Brownian motion of scale
/// `sigma` started at 0 at time 0. Increments between grid times are exact
/// Gaussians.
pub fn simulate_bm_drift(
    spec: &DriftSpec,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<LatentTrajectorySet, LppError> {
    spec.validate()?;
    check_common(n, &spec.v, spec.sigma)?;
    let d = spec.v.len();
    Ok(simulate_nodes(grid, n, d, seed, |rng| {
        let mut out = Vec::with_capacity(grid.len() * d);
        let mut w = vec![0.0; d];
        let mut prev = 0.0;
        for &t in grid.times() {
            let sd = spec.sigma * (t - prev).sqrt();
            let a = spec.a(t);
            for k in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                w[k] += sd * z;
                out.push(a * spec.v[k] + w[k]);
            }
            prev = t;
        }
        out
    }))
}

/// `X_t = (a t + b) v + I_t` with `I_t` the time integral of a Brownian
/// motion of scale `sigma`. The pair `(B, I)` advances by its exact joint
/// Gaussian increment over each grid step `h`:
/// `Var dB = s^2 h`, `Var J = s^2 h^3 / 3`, `Cov(dB, J) = s^2 h^2 / 2`, and
/// `I` gains `h B + J`.
pub fn simulate_integrated_bm(
    a: f64,
    b: f64,
    v: &[f64],
    sigma: f64,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<LatentTrajectorySet, LppError> {
    check_common(n, v, sigma)?;
    let d = v.len();
    let inv_2sqrt3 = 1.0 / (2.0 * 3f64.sqrt());
    Ok(simulate_nodes(grid, n, d, seed, |rng| {
        let mut out = Vec::with_capacity(grid.len() * d);
        let mut bm = vec![0.0; d];
        let mut integral = vec![0.0; d];
        let mut prev = 0.0;
        for &t in grid.times() {
            let h = t - prev;
            let sh = sigma * h.sqrt();
            let mean = a * t + b;
            for k in 0..d {
                let z1: f64 = StandardNormal.sample(rng);
                let z2: f64 = StandardNormal.sample(rng);
                let jump = sh * h * (0.5 * z1 + inv_2sqrt3 * z2);
                integral[k] += h * bm[k] + jump;
                bm[k] += sh * z1;
                out.push(mean * v[k] + integral[k]);
            }
            prev = t;
        }
        out
    }))
}
