use nalgebra::DMatrix;

use super::{GraphError, LatentMatrix};
use crate::linalg::{fix_column_signs, symmetric_eigen_desc};
use crate::lpp::{LatentTrajectorySet, TimeGrid};

/// Eigenvalues down to this are treated as round-off zeros.
const PSD_TOLERANCE: f64 = 1e-10;

pub const SBM_B1: [[f64; 2]; 2] = [[1.0 / 2.0, 1.0 / 3.0], [1.0 / 3.0, 1.0 / 2.0]];
pub const SBM_B2: [[f64; 2]; 2] = [[1.0 / 2.0, 1.0 / 2.0], [1.0 / 2.0, 1.0 / 2.0]];
pub const SBM_B3: [[f64; 2]; 2] = [[1.0 / 2.0, 1.0 / 3.0], [1.0 / 3.0, 1.0 / 3.0]];

fn to_matrix(b: &[[f64; 2]; 2]) -> DMatrix<f64> {
    DMatrix::from_fn(2, 2, |i, j| b[i][j])
}

/// Stochastic block model: a symmetric `K x K` probability matrix and the
/// size of each block. Nodes are laid out block by block.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmSpec {
    block_matrix: DMatrix<f64>,
    block_sizes: Vec<usize>,
}

impl SbmSpec {
    pub fn new(block_matrix: DMatrix<f64>, block_sizes: Vec<usize>) -> Result<Self, GraphError> {
        let k = block_matrix.nrows();
        if block_matrix.ncols() != k || k == 0 {
            return Err(GraphError::InvalidSbm(format!(
                "block matrix must be square and nonempty, got {}x{}",
                k,
                block_matrix.ncols()
            )));
        }
        if block_sizes.len() != k {
            return Err(GraphError::InvalidSbm(format!(
                "{} block sizes for {k} blocks",
                block_sizes.len()
            )));
        }
        if block_sizes.contains(&0) {
            return Err(GraphError::InvalidSbm("block sizes must be positive".into()));
        }
        for i in 0..k {
            for j in 0..k {
                let v = block_matrix[(i, j)];
                if !(0.0..=1.0).contains(&v) {
                    return Err(GraphError::InvalidSbm(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if (v - block_matrix[(j, i)]).abs() > 1e-12 {
                    return Err(GraphError::InvalidSbm(format!(
                        "block matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            block_matrix,
            block_sizes,
        })
    }

    pub fn block_matrix(&self) -> &DMatrix<f64> {
        &self.block_matrix
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn n(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    /// Block label of every node, in node order.
    pub fn membership(&self) -> Vec<usize> {
        self.block_sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect()
    }
}

/// Block connectivity of the rank-collapse experiment: piecewise-linear
/// interpolation `B1 -> B2 -> B3 -> B1` over `[0, 1]`, `[1, 2]`, `[2, 3]`.
pub fn sbm_block_matrix_at(t: f64) -> Result<DMatrix<f64>, GraphError> {
    if !(0.0..=3.0).contains(&t) {
        return Err(GraphError::TimeOutOfDomain(t));
    }
    let (b1, b2, b3) = (to_matrix(&SBM_B1), to_matrix(&SBM_B2), to_matrix(&SBM_B3));
    Ok(if t <= 1.0 {
        b1 * (1.0 - t) + b2 * t
    } else if t <= 2.0 {
        b2 * (2.0 - t) + b3 * (t - 1.0)
    } else {
        b3 * (3.0 - t) + b1 * (t - 2.0)
    })
}

/// Factors `B = V L V^T` and returns `V L^{1/2}` (row `k` is block `k`'s
/// latent vector). Eigenvalues descend; each eigenvector's largest entry is
/// positive; round-off-negative eigenvalues give zero columns.
pub fn block_latents(b: &DMatrix<f64>) -> Result<DMatrix<f64>, GraphError> {
    let mut eig = symmetric_eigen_desc(b);
    if let Some(&neg) = eig.values.iter().find(|&&v| v < -PSD_TOLERANCE) {
        return Err(GraphError::NotPsd(neg));
    }
    fix_column_signs(&mut eig.vectors);
    let k = b.nrows();
    Ok(DMatrix::from_fn(k, k, |r, c| {
        eig.vectors[(r, c)] * eig.values[c].max(0.0).sqrt()
    }))
}

/// Latent matrix of an SBM: every node gets its block's latent vector.
pub fn sbm_latents(spec: &SbmSpec, time: f64) -> Result<LatentMatrix, GraphError> {
    let blocks = block_latents(&spec.block_matrix)?;
    let membership = spec.membership();
    let k = blocks.ncols();
    let rows = DMatrix::from_fn(membership.len(), k, |i, c| blocks[(membership[i], c)]);
    Ok(LatentMatrix::new(time, rows))
}

/// Latent trajectories of the two-block rank-collapse process on `grid`
/// (times must lie in `[0, 3]`).
pub fn sbm_trajectory(
    grid: &TimeGrid,
    block_sizes: &[usize],
) -> Result<LatentTrajectorySet, GraphError> {
    let snapshots = grid
        .times()
        .iter()
        .map(|&t| {
            let spec = SbmSpec::new(sbm_block_matrix_at(t)?, block_sizes.to_vec())?;
            Ok(sbm_latents(&spec, t)?.rows)
        })
        .collect::<Result<Vec<_>, GraphError>>()?;
    Ok(LatentTrajectorySet::new(grid.clone(), snapshots).expect("snapshots match the grid"))
}
