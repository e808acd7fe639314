use nalgebra::DMatrix;
use rand::Rng;

use super::{LatentTrajectorySet, LppError};
use crate::rng::{domain, substream};

/// `n_s` row indices drawn uniformly with replacement from `0..n_source`.
pub fn bootstrap_indices(n_source: usize, n_s: usize, seed: u64) -> Result<Vec<usize>, LppError> {
    if n_source == 0 {
        return Err(LppError::EmptySource);
    }
    if n_s == 0 {
        return Err(LppError::ZeroSampleSize);
    }
    let mut rng = substream(seed, domain::BOOTSTRAP_INDEX, 0);
    Ok((0..n_s).map(|_| rng.random_range(0..n_source)).collect())
}

/// Builds a trajectory set whose node `i` is source node `indices[i]` at
/// every time, so each node's dependence across time is kept.
pub fn resample_rows(
    source: &LatentTrajectorySet,
    indices: &[usize],
) -> Result<LatentTrajectorySet, LppError> {
    if indices.is_empty() {
        return Err(LppError::ZeroSampleSize);
    }
    if let Some(&bad) = indices.iter().find(|&&j| j >= source.n()) {
        return Err(LppError::ShapeMismatch(format!(
            "row index {bad} out of range for {} source nodes",
            source.n()
        )));
    }
    let d = source.dim();
    let snapshots = source
        .snapshots()
        .iter()
        .map(|s| DMatrix::from_fn(indices.len(), d, |i, k| s[(indices[i], k)]))
        .collect();
    LatentTrajectorySet::new(source.grid().clone(), snapshots)
}

/// Row bootstrap: one draw of `n_s` source nodes with replacement, reused
/// at every time point.
pub fn bootstrap_resample(
    source: &LatentTrajectorySet,
    n_s: usize,
    seed: u64,
) -> Result<LatentTrajectorySet, LppError> {
    let indices = bootstrap_indices(source.n(), n_s, seed)?;
    resample_rows(source, &indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpp::{simulate_bm_drift, DriftSpec, TimeGrid};

    fn source(n: usize) -> LatentTrajectorySet {
        let spec = DriftSpec {
            sigma: 0.05,
            ..DriftSpec::linear_experiment()
        };
        simulate_bm_drift(&spec, &TimeGrid::integers(4).unwrap(), n, 2).unwrap()
    }

    #[test]
    fn single_node_source_repeats() {
        let src = source(1);
        let out = bootstrap_resample(&src, 6, 0).unwrap();
        for j in 0..6 {
            assert_eq!(out.node_path(j), src.node_path(0));
        }
    }

    #[test]
    fn zero_sample_size_is_an_error() {
        assert!(matches!(
            bootstrap_resample(&source(3), 0, 0),
            Err(LppError::ZeroSampleSize)
        ));
        assert!(matches!(bootstrap_indices(0, 3, 0), Err(LppError::EmptySource)));
    }

    #[test]
    fn every_output_path_is_a_source_path() {
        let src = source(25);
        let paths: Vec<_> = (0..25).map(|j| src.node_path(j)).collect();
        let out = bootstrap_resample(&src, 60, 17).unwrap();
        assert_eq!(out.n(), 60);
        for j in 0..60 {
            let p = out.node_path(j);
            assert!(paths.contains(&p), "node {j} is not a source path");
        }
    }

    #[test]
    fn resampling_is_seeded() {
        let src = source(40);
        assert_eq!(
            bootstrap_resample(&src, 30, 5).unwrap(),
            bootstrap_resample(&src, 30, 5).unwrap()
        );
        assert_ne!(bootstrap_indices(40, 30, 5).unwrap(), bootstrap_indices(40, 30, 6).unwrap());
    }

    #[test]
    fn identity_indices_reproduce_the_source() {
        let src = source(10);
        let ident: Vec<usize> = (0..10).collect();
        assert_eq!(resample_rows(&src, &ident).unwrap(), src);
        assert!(resample_rows(&src, &[10]).is_err());
    }
}
