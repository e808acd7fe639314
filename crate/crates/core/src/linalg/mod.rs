//! Symmetric eigensolvers and small dense helpers shared by the embedding,
//! metric and mirror modules.

mod lanczos;

pub use lanczos::{lanczos_top, LanczosError, LanczosOptions};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Graphs up to this many nodes are eigendecomposed densely; larger ones go
/// through Lanczos.
pub const DENSE_LIMIT: usize = 512;

/// A real symmetric linear operator `y = A x`.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// Overwrites `y` with `A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Materializes the operator as a dense matrix.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

impl SymmetricOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.nrows();
        for (i, yi) in y.iter_mut().enumerate().take(n) {
            *yi = 0.0;
            for (j, xj) in x.iter().enumerate() {
                *yi += self[(i, j)] * xj;
            }
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

/// Leading eigenpairs of a symmetric operator.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Eigenvalues, descending by algebraic value.
    pub values: Vec<f64>,
    /// Unit eigenvectors as columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Full eigendecomposition of a symmetric matrix, sorted descending.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> EigenPairs {
    let n = m.nrows();
    // Symmetrize to shield the solver from round-off asymmetry.
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    EigenPairs { values, vectors }
}

/// Top-`d` eigenpairs (largest algebraic). Dense below [`DENSE_LIMIT`],
/// Lanczos with full reorthogonalization above.
pub fn top_eigenpairs<O: SymmetricOperator>(op: &O, d: usize) -> Result<EigenPairs, LanczosError> {
    if op.dim() <= DENSE_LIMIT {
        Ok(dense_top(&op.to_dense(), d))
    } else {
        lanczos_top(op, d, &LanczosOptions::default())
    }
}

/// Top-`d` eigenpairs through the dense solver regardless of size.
pub fn dense_top(m: &DMatrix<f64>, d: usize) -> EigenPairs {
    let full = symmetric_eigen_desc(m);
    let d = d.min(full.values.len());
    EigenPairs {
        values: full.values[..d].to_vec(),
        vectors: full.vectors.columns(0, d).into_owned(),
    }
}

/// Flips each column so that its entry of largest magnitude is positive.
/// Entries within a relative 1e-9 of the maximum count as ties, resolved
/// toward the lowest row index.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let max = col.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        let pivot = col
            .iter()
            .position(|v| v.abs() >= max * (1.0 - 1e-9))
            .expect("column has a maximal entry");
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Haar-distributed random orthogonal `d x d` matrix (QR of a Gaussian
/// matrix with the diagonal of `R` made positive).
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..d {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}
