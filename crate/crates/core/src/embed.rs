//! Adjacency spectral embedding.
//!
//! The embedding of a snapshot is `U S^{1/2}` (scaled) or `U` (unscaled),
//! where `S` holds the `d` largest algebraic eigenvalues of the adjacency
//! matrix and `U` the matching unit eigenvectors. The diagonal of the
//! adjacency matrix is left at zero. Each eigenvector is sign-fixed so its
//! largest-magnitude entry is positive.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphgen::{GraphSnapshot, LatentMatrix};
use crate::linalg::{fix_column_signs, top_eigenpairs, EigenPairs, LanczosError, SymmetricOperator};
use crate::table::{self, TableError};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding dimension {d} must lie in 1..={n}")]
    InvalidDimension { d: usize, n: usize },
    #[error("rank deficient: top eigenvalues {eigenvalues:?} include non-positive values")]
    RankDeficient { eigenvalues: Vec<f64> },
    #[error(transparent)]
    Solver(#[from] LanczosError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("malformed embedding file {file}: {message}")]
    Format { file: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// `n x d` spectral embedding of one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub time: f64,
    pub rows: DMatrix<f64>,
    /// Top eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub scaled: bool,
}

impl EmbeddingMatrix {
    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    /// Wraps known latent positions so they can be fed to the distance
    /// routines directly.
    pub fn from_latent(x: &LatentMatrix) -> Self {
        Self {
            time: x.time,
            rows: x.rows.clone(),
            eigenvalues: Vec::new(),
            scaled: true,
        }
    }
}

/// An embedding together with any eigenvalues that had to be zero-padded.
#[derive(Debug, Clone)]
pub struct PaddedEmbedding {
    pub embedding: EmbeddingMatrix,
    /// Indices of columns zeroed because their eigenvalue was not positive.
    pub zeroed: Vec<usize>,
}

fn build(pairs: EigenPairs, time: f64, scaled: bool, pad: bool) -> Result<PaddedEmbedding, EmbedError> {
    let EigenPairs { values, mut vectors } = pairs;
    let zeroed: Vec<usize> = (0..values.len()).filter(|&k| values[k] <= 0.0).collect();
    if !zeroed.is_empty() && !pad {
        return Err(EmbedError::RankDeficient { eigenvalues: values });
    }
    fix_column_signs(&mut vectors);
    for (k, mut col) in vectors.column_iter_mut().enumerate() {
        if values[k] <= 0.0 {
            col.fill(0.0);
        } else if scaled {
            col *= values[k].sqrt();
        }
    }
    Ok(PaddedEmbedding {
        embedding: EmbeddingMatrix {
            time,
            rows: vectors,
            eigenvalues: values,
            scaled,
        },
        zeroed,
    })
}

fn top_pairs<O: SymmetricOperator>(op: &O, d: usize) -> Result<EigenPairs, EmbedError> {
    let n = op.dim();
    if d == 0 || d > n {
        return Err(EmbedError::InvalidDimension { d, n });
    }
    Ok(top_eigenpairs(op, d)?)
}

/// Spectral embedding of any symmetric operator (the adjacency matrix, or
/// e.g. an exact probability matrix in tests).
pub fn spectral_embedding<O: SymmetricOperator>(
    op: &O,
    time: f64,
    d: usize,
    scaled: bool,
) -> Result<EmbeddingMatrix, EmbedError> {
    Ok(build(top_pairs(op, d)?, time, scaled, false)?.embedding)
}

/// Adjacency spectral embedding of `g` in dimension `d`. Fails with
/// [`EmbedError::RankDeficient`] when any of the top `d` eigenvalues is not
/// positive.
pub fn ase(g: &GraphSnapshot, d: usize, scaled: bool) -> Result<EmbeddingMatrix, EmbedError> {
    spectral_embedding(&g.adjacency(), g.time(), d, scaled)
}

/// Like [`ase`], but columns with non-positive eigenvalues are zeroed
/// instead of failing.
pub fn ase_padded(g: &GraphSnapshot, d: usize, scaled: bool) -> Result<PaddedEmbedding, EmbedError> {
    build(top_pairs(&g.adjacency(), d)?, g.time(), scaled, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    time: f64,
    n: usize,
    d: usize,
    scaled: bool,
    eigenvalues: Vec<f64>,
}

/// Writes `<stem>.csv` (`node,x1..xd`) and `<stem>.json` (time,
/// eigenvalues, scaled flag). Returns both paths.
pub fn write_embedding(
    dir: &Path,
    stem: &str,
    e: &EmbeddingMatrix,
) -> Result<(PathBuf, PathBuf), EmbedError> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    let rows: Vec<Vec<f64>> = (0..e.n())
        .map(|j| std::iter::once(j as f64).chain(e.rows.row(j).iter().copied()).collect())
        .collect();
    table::write(&csv, &table::node_header(e.dim()), &rows)?;
    let sidecar = Sidecar {
        time: e.time,
        n: e.n(),
        d: e.dim(),
        scaled: e.scaled,
        eigenvalues: e.eigenvalues.clone(),
    };
    fs::write(&json, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok((csv, json))
}

/// Reads an embedding from its CSV path; the sidecar is the sibling `.json`.
pub fn read_embedding(csv: &Path) -> Result<EmbeddingMatrix, EmbedError> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(csv.with_extension("json"))?)?;
    let t = table::read(csv)?;
    let file = csv.display().to_string();
    if t.header.len() != sidecar.d + 1 || t.rows.len() != sidecar.n {
        return Err(EmbedError::Format {
            file,
            message: format!(
                "{} rows x {} columns, sidecar says {} x {}",
                t.rows.len(),
                t.header.len(),
                sidecar.n,
                sidecar.d + 1
            ),
        });
    }
    let mut rows = DMatrix::zeros(sidecar.n, sidecar.d);
    for (i, r) in t.rows.iter().enumerate() {
        if r[0] != i as f64 {
            return Err(EmbedError::Format {
                file,
                message: format!("row {i} carries node id {}", r[0]),
            });
        }
        for k in 0..sidecar.d {
            rows[(i, k)] = r[k + 1];
        }
    }
    Ok(EmbeddingMatrix {
        time: sidecar.time,
        rows,
        eigenvalues: sidecar.eigenvalues,
        scaled: sidecar.scaled,
    })
}

/// Writes `embedding_0000.{csv,json}`, ... for a sequence of embeddings.
pub fn write_embedding_dir(dir: &Path, embeddings: &[EmbeddingMatrix]) -> Result<Vec<PathBuf>, EmbedError> {
    let mut out = Vec::new();
    for (i, e) in embeddings.iter().enumerate() {
        let (csv, json) = write_embedding(dir, &format!("embedding_{i:04}"), e)?;
        out.push(csv);
        out.push(json);
    }
    Ok(out)
}

/// Reads every embedding CSV in `dir`, ordered by time.
pub fn read_embedding_dir(dir: &Path) -> Result<Vec<EmbeddingMatrix>, EmbedError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut out = paths.iter().map(|p| read_embedding(p)).collect::<Result<Vec<_>, _>>()?;
    out.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(out)
}
