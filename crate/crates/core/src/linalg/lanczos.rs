//! Lanczos iteration with full reorthogonalization for the largest
//! algebraic eigenpairs of a symmetric operator.
//!
//! The Krylov basis is kept in memory and every new vector is
//! orthogonalized twice against it, so no ghost eigenvalues appear and the
//! Ritz pairs are exact once the basis spans an invariant subspace. On
//! breakdown with unconverged pairs the iteration restarts from a fresh
//! random vector orthogonal to the basis.
//!
//! A Krylov space built from one start vector sees each distinct eigenvalue
//! once, so a repeated leading eigenvalue is reported with multiplicity one
//! unless a breakdown-restart happens to reach the second copy.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use super::{symmetric_eigen_desc, EigenPairs, SymmetricOperator};
use crate::rng::{domain, substream};

#[derive(Debug, Error, PartialEq)]
pub enum LanczosError {
    #[error("requested {requested} eigenpairs of a {dim}-dimensional operator")]
    TooManyPairs { requested: usize, dim: usize },
    #[error("Lanczos did not converge within {steps} steps (worst residual {residual:e})")]
    NotConverged { steps: usize, residual: f64 },
}

#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Residual tolerance relative to the estimated operator norm.
    pub tol: f64,
    /// Cap on the Krylov dimension (defaults to the operator dimension).
    pub max_dim: Option<usize>,
    /// Seed of the start-vector stream.
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_dim: None,
            seed: 0x4c41_4e43,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(-c, q, w);
        }
    }
}

fn random_unit(n: usize, seed: u64, index: u64, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
    let mut rng = substream(seed, domain::LANCZOS_START, index);
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    orthogonalize(&mut v, basis);
    let nv = norm(&v);
    if nv < 1e-8 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= nv);
    Some(v)
}

fn ritz(alpha: &[f64], beta: &[f64]) -> EigenPairs {
    let k = alpha.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    symmetric_eigen_desc(&t)
}

/// Top-`d` eigenpairs of `op` by largest algebraic eigenvalue.
pub fn lanczos_top<O: SymmetricOperator>(
    op: &O,
    d: usize,
    opts: &LanczosOptions,
) -> Result<EigenPairs, LanczosError> {
    let n = op.dim();
    if d == 0 || d > n {
        return Err(LanczosError::TooManyPairs { requested: d, dim: n });
    }
    let max_dim = opts.max_dim.unwrap_or(n).clamp(d, n);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_dim.min(512));
    let mut alpha: Vec<f64> = Vec::new();
    // beta[j] couples basis vectors j and j+1; zero marks a restart.
    let mut beta: Vec<f64> = Vec::new();
    let mut restarts = 0u64;
    let mut norm_est = 0.0f64;
    let mut next_check = (2 * d + 10).max(20).min(max_dim);

    basis.push(random_unit(n, opts.seed, restarts, &basis).expect("nonzero start vector"));
    let mut w = vec![0.0; n];

    loop {
        let j = basis.len() - 1;
        op.apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w);
        axpy(-a, &basis[j], &mut w);
        if j > 0 && beta[j - 1] != 0.0 {
            axpy(-beta[j - 1], &basis[j - 1], &mut w);
        }
        orthogonalize(&mut w, &basis);
        let b = norm(&w);
        alpha.push(a);
        let prev = if j > 0 { beta[j - 1] } else { 0.0 };
        norm_est = norm_est.max(a.abs() + b + prev);

        let k = basis.len();
        let breakdown = b <= 1e-13 * norm_est.max(f64::MIN_POSITIVE);
        let exhausted = k >= max_dim;

        if breakdown || exhausted || k >= next_check {
            let pairs = ritz(&alpha, &beta);
            let wanted = d.min(k);
            let scale = norm_est.max(f64::MIN_POSITIVE);
            let residual = (0..wanted)
                .map(|i| (b * pairs.vectors[(k - 1, i)]).abs() / scale)
                .fold(0.0f64, f64::max);
            let converged = k >= d && residual <= opts.tol;
            if converged || (exhausted && k == n && k >= d) || (breakdown && k == n) {
                return Ok(assemble(&basis, &pairs, d));
            }
            if exhausted {
                return Err(LanczosError::NotConverged { steps: k, residual });
            }
            next_check = (k + (k / 10).max(5)).min(max_dim);
        }

        if breakdown {
            restarts += 1;
            let mut fresh = None;
            for attempt in 0..8 {
                fresh = random_unit(n, opts.seed, restarts * 8 + attempt, &basis);
                if fresh.is_some() {
                    break;
                }
            }
            match fresh {
                Some(v) => {
                    beta.push(0.0);
                    basis.push(v);
                }
                None => {
                    let pairs = ritz(&alpha, &beta);
                    return Ok(assemble(&basis, &pairs, d.min(basis.len())));
                }
            }
        } else {
            w.iter_mut().for_each(|x| *x /= b);
            beta.push(b);
            basis.push(std::mem::replace(&mut w, vec![0.0; n]));
        }
    }
}

fn assemble(basis: &[Vec<f64>], pairs: &EigenPairs, d: usize) -> EigenPairs {
    let n = basis[0].len();
    let k = pairs.values.len();
    let d = d.min(k);
    let mut vectors = DMatrix::zeros(n, d);
    for i in 0..d {
        let mut col = vec![0.0; n];
        for (j, q) in basis.iter().enumerate().take(k) {
            axpy(pairs.vectors[(j, i)], q, &mut col);
        }
        let nc = norm(&col);
        for r in 0..n {
            vectors[(r, i)] = col[r] / nc;
        }
    }
    EigenPairs {
        values: pairs.values[..d].to_vec(),
        vectors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense_top;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = substream(seed, 99, 0);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = rng.random_range(-1.0..1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn matches_dense_solver() {
        let m = random_symmetric(150, 3);
        let dense = dense_top(&m, 4);
        let lz = lanczos_top(&m, 4, &LanczosOptions::default()).unwrap();
        for i in 0..4 {
            assert!((dense.values[i] - lz.values[i]).abs() < 1e-8 * dense.values[0].abs());
            let dotp: f64 = dense.vectors.column(i).dot(&lz.vectors.column(i));
            assert!((dotp.abs() - 1.0).abs() < 1e-6, "vector {i}: {dotp}");
        }
    }

    #[test]
    fn low_rank_operator_breaks_down_cleanly() {
        let x = DMatrix::from_fn(300, 2, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 + 0.1);
        let p = &x * x.transpose();
        let lz = lanczos_top(&p, 2, &LanczosOptions::default()).unwrap();
        let dense = dense_top(&p, 2);
        for i in 0..2 {
            assert!((dense.values[i] - lz.values[i]).abs() < 1e-9 * dense.values[0]);
        }
    }

    #[test]
    fn rejects_too_many_pairs() {
        let m = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(
            lanczos_top(&m, 4, &LanczosOptions::default()),
            Err(LanczosError::TooManyPairs { .. })
        ));
    }

    #[test]
    fn capped_krylov_dimension_reports_nonconvergence() {
        let m = random_symmetric(200, 5);
        let opts = LanczosOptions {
            max_dim: Some(6),
            ..LanczosOptions::default()
        };
        assert!(matches!(
            lanczos_top(&m, 3, &opts),
            Err(LanczosError::NotConverged { .. })
        ));
    }
}
