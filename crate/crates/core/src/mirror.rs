//! Distance matrices between snapshots, classical multidimensional scaling
//! (the mirror), a one-dimensional ISOMAP trace, and the stress diagnostic.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{fix_column_signs, symmetric_eigen_desc};
use crate::lpp::{LppError, TimeGrid};
use crate::metric::{dmv_hat, MetricError, Rows};
use crate::table::{self, TableError};

#[derive(Debug, Error)]
pub enum MirrorError {
    #[error("snapshot at t={time}: shape {found:?} differs from {expected:?}")]
    ShapeMismatch {
        time: f64,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{0}")]
    InvalidInput(String),
    #[error("mirror dimension c={c} must satisfy 1 <= c < {m}")]
    DimensionOutOfRange { c: usize, m: usize },
    #[error("no positive eigenvalue in scree")]
    NoPositiveEigenvalue,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Grid(#[from] LppError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Symmetric `m x m` matrix of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    grid: TimeGrid,
    values: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(grid: TimeGrid, values: DMatrix<f64>) -> Result<Self, MirrorError> {
        let m = grid.len();
        if values.shape() != (m, m) {
            return Err(MirrorError::InvalidInput(format!(
                "distance matrix is {:?}, grid has {m} times",
                values.shape()
            )));
        }
        for i in 0..m {
            if values[(i, i)] != 0.0 {
                return Err(MirrorError::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                let v = values[(i, j)];
                if v != values[(j, i)] || !v.is_finite() || v < 0.0 {
                    return Err(MirrorError::InvalidInput(format!(
                        "entry ({i},{j}) must be finite, nonnegative and symmetric"
                    )));
                }
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Pairwise estimated distances between a sequence of same-shape matrices
/// (embeddings, or true latent positions) indexed by `grid`.
pub fn distance_matrix_on<R: Rows + Sync>(
    grid: &TimeGrid,
    items: &[R],
    refine: bool,
) -> Result<DistanceMatrix, MirrorError> {
    let m = grid.len();
    if items.len() != m {
        return Err(MirrorError::InvalidInput(format!(
            "{} snapshots for {m} grid times",
            items.len()
        )));
    }
    let expected = items[0].rows().shape();
    for (k, item) in items.iter().enumerate() {
        let found = item.rows().shape();
        if found != expected {
            return Err(MirrorError::ShapeMismatch {
                time: grid.times()[k],
                expected,
                found,
            });
        }
    }
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let dists = pairs
        .par_iter()
        .map(|&(i, j)| dmv_hat(&items[i], &items[j], refine).map(|r| r.distance))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut values = DMatrix::zeros(m, m);
    for (&(i, j), &d) in pairs.iter().zip(&dists) {
        values[(i, j)] = d;
        values[(j, i)] = d;
    }
    DistanceMatrix::new(grid.clone(), values)
}

/// Distance matrix of a time-ordered embedding sequence; the grid is taken
/// from the embedding times.
pub fn distance_matrix(
    embeddings: &[crate::embed::EmbeddingMatrix],
    refine: bool,
) -> Result<DistanceMatrix, MirrorError> {
    let grid = TimeGrid::from_times(embeddings.iter().map(|e| e.time).collect())?;
    distance_matrix_on(&grid, embeddings, refine)
}

/// CMDS output: row `i` of `coords` is the mirror point at `grid.times()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MirrorCurve {
    pub grid: TimeGrid,
    pub coords: DMatrix<f64>,
    /// All eigenvalues of the double-centered matrix, descending.
    pub scree: Vec<f64>,
    pub c: usize,
    pub warnings: Vec<String>,
}

/// Eigenvalues at or below this fraction of the largest magnitude count as
/// zero.
const ZERO_EIGEN_RELATIVE: f64 = 1e-12;

/// Classical multidimensional scaling into `c` dimensions: eigendecompose
/// `B = -1/2 P D∘D P` with `P = I - J/m` and scale the top eigenvectors by
/// the square roots of their eigenvalues. Directions whose eigenvalue is not
/// positive are zeroed and reported in `warnings`.
pub fn cmds(d: &DistanceMatrix, c: usize) -> Result<MirrorCurve, MirrorError> {
    let m = d.len();
    if c == 0 || c >= m {
        return Err(MirrorError::DimensionOutOfRange { c, m });
    }
    let sq = d.values.map(|v| v * v);
    let p = DMatrix::<f64>::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64);
    let b = (&p * sq * &p) * -0.5;
    let eig = symmetric_eigen_desc(&b);
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut coords = eig.vectors.columns(0, c).into_owned();
    fix_column_signs(&mut coords);
    let mut warnings = Vec::new();
    for (k, mut col) in coords.column_iter_mut().enumerate() {
        let lambda = eig.values[k];
        if lambda <= ZERO_EIGEN_RELATIVE * scale {
            col.fill(0.0);
            if scale > 0.0 {
                warnings.push(format!(
                    "eigenvalue {lambda:e} of direction {} is not positive; coordinate zeroed",
                    k + 1
                ));
            }
        } else {
            col *= lambda.sqrt();
        }
    }
    Ok(MirrorCurve {
        grid: d.grid.clone(),
        coords,
        scree: eig.values,
        c,
        warnings,
    })
}

/// One-dimensional ISOMAP output, sign-fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct IsomapTrace {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

fn euclidean(points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    (points.row(i) - points.row(j)).norm()
}

/// Edges of a Euclidean minimum spanning tree (Prim, dense).
fn minimum_spanning_tree(points: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let m = points.nrows();
    let mut in_tree = vec![false; m];
    let mut best = vec![f64::INFINITY; m];
    let mut parent = vec![0usize; m];
    let mut edges = Vec::with_capacity(m.saturating_sub(1));
    best[0] = 0.0;
    for _ in 0..m {
        let u = (0..m)
            .filter(|&v| !in_tree[v])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
            .unwrap();
        in_tree[u] = true;
        if u != 0 {
            edges.push((parent[u], u));
        }
        for v in 0..m {
            if !in_tree[v] {
                let w = euclidean(points, u, v);
                if w < best[v] {
                    best[v] = w;
                    parent[v] = u;
                }
            }
        }
    }
    edges
}

fn is_connected(adj: &[Vec<bool>]) -> bool {
    let m = adj.len();
    let mut seen = vec![false; m];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..m {
            if adj[u][v] && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Geodesic distances on the symmetric `k`-nearest-neighbour graph of the
/// rows of `points`, augmented with minimum-spanning-tree edges when the
/// neighbourhood graph is disconnected.
pub fn geodesic_distances(points: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>, MirrorError> {
    let m = points.nrows();
    if k == 0 {
        return Err(MirrorError::InvalidInput("neighbourhood size k must be >= 1".into()));
    }
    let mut adj = vec![vec![false; m]; m];
    for i in 0..m {
        let mut others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            euclidean(points, i, a)
                .total_cmp(&euclidean(points, i, b))
                .then(a.cmp(&b))
        });
        for &j in others.iter().take(k) {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    if m > 0 && !is_connected(&adj) {
        for (i, j) in minimum_spanning_tree(points) {
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    let mut g = DMatrix::from_element(m, m, f64::INFINITY);
    for i in 0..m {
        g[(i, i)] = 0.0;
        for j in 0..m {
            if adj[i][j] {
                g[(i, j)] = euclidean(points, i, j);
            }
        }
    }
    for via in 0..m {
        for i in 0..m {
            let div = g[(i, via)];
            if div.is_infinite() {
                continue;
            }
            for j in 0..m {
                let cand = div + g[(via, j)];
                if cand < g[(i, j)] {
                    g[(i, j)] = cand;
                }
            }
        }
    }
    // Floyd–Warshall keeps symmetry only up to summation order.
    for i in 0..m {
        for j in 0..i {
            let v = g[(i, j)].min(g[(j, i)]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// ISOMAP of mirror points to one dimension with neighbourhood size `k`.
/// The trace is oriented so that it does not decrease over its first two
/// points.
pub fn isomap_points(grid: &TimeGrid, points: &DMatrix<f64>, k: usize) -> Result<IsomapTrace, MirrorError> {
    let m = points.nrows();
    if m < 2 {
        return Err(MirrorError::InvalidInput(format!("ISOMAP needs at least 2 points, got {m}")));
    }
    if m != grid.len() {
        return Err(MirrorError::InvalidInput(format!("{m} points for {} grid times", grid.len())));
    }
    let geo = DistanceMatrix::new(grid.clone(), geodesic_distances(points, k)?)?;
    let curve = cmds(&geo, 1)?;
    let mut values: Vec<f64> = curve.coords.column(0).iter().copied().collect();
    if values[1] < values[0] {
        values.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(IsomapTrace {
        grid: grid.clone(),
        values,
    })
}

pub fn isomap_1d(mirror: &MirrorCurve, k: usize) -> Result<IsomapTrace, MirrorError> {
    isomap_points(&mirror.grid, &mirror.coords, k)
}

/// Time weights `Δt_i = t_i − t_{i−1}`, with `Δt_1 = t_2 − t_1`.
pub fn time_weights(grid: &TimeGrid) -> Vec<f64> {
    let t = grid.times();
    (0..t.len())
        .map(|i| if i == 0 { t[1] - t[0] } else { t[i] - t[i - 1] })
        .collect()
}

/// Weighted stress `Σ_ij |D_ij² − ||v_i − v_j||²|² Δt_i Δt_j`.
pub fn stress(d: &DistanceMatrix, coords: &DMatrix<f64>) -> Result<f64, MirrorError> {
    let m = d.len();
    if coords.nrows() != m {
        return Err(MirrorError::InvalidInput(format!(
            "{} coordinate rows for {m} grid times",
            coords.nrows()
        )));
    }
    let w = time_weights(&d.grid);
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let gap = d.values[(i, j)].powi(2) - (coords.row(i) - coords.row(j)).norm_squared();
            total += gap * gap * w[i] * w[j];
        }
    }
    Ok(total)
}

/// Chosen mirror dimension with the cumulative positive-mass profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionChoice {
    pub c: usize,
    /// `mass[k]` is the share of positive eigenvalue mass in the first
    /// `k + 1` eigenvalues.
    pub mass: Vec<f64>,
}

pub const DEFAULT_DIMENSION_THRESHOLD: f64 = 0.95;

/// Smallest `c` whose leading eigenvalues carry at least `threshold` of the
/// positive eigenvalue mass. Negative eigenvalues (and positive ones below
/// round-off relative to the largest) carry no mass.
pub fn select_dimension(scree: &[f64], threshold: f64) -> Result<DimensionChoice, MirrorError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(MirrorError::InvalidInput(format!("threshold {threshold} must be in (0, 1]")));
    }
    let top = scree.iter().fold(0.0f64, |a, &v| a.max(v));
    if top <= 0.0 {
        return Err(MirrorError::NoPositiveEigenvalue);
    }
    let weights: Vec<f64> = scree
        .iter()
        .map(|&v| if v > ZERO_EIGEN_RELATIVE * top { v } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    let mass: Vec<f64> = weights
        .iter()
        .map(|w| {
            acc += w;
            acc / total
        })
        .collect();
    let c = mass.iter().position(|&m| m >= threshold).map_or(mass.len(), |k| k + 1);
    Ok(DimensionChoice { c, mass })
}

fn time_header(grid: &TimeGrid) -> Vec<String> {
    grid.times().iter().map(|t| t.to_string()).collect()
}

/// Square CSV whose header is the grid times.
pub fn write_distance_csv(path: &Path, d: &DistanceMatrix) -> Result<(), MirrorError> {
    let rows: Vec<Vec<f64>> = d.values.row_iter().map(|r| r.iter().copied().collect()).collect();
    table::write(path, &time_header(&d.grid), &rows)?;
    Ok(())
}

pub fn read_distance_csv(path: &Path) -> Result<DistanceMatrix, MirrorError> {
    let t = table::read(path)?;
    let times = t
        .header
        .iter()
        .map(|h| h.parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| MirrorError::InvalidInput(format!("{}: bad time in header: {e}", path.display())))?;
    let m = times.len();
    if t.rows.len() != m {
        return Err(MirrorError::InvalidInput(format!(
            "{}: {} rows for {m} times",
            path.display(),
            t.rows.len()
        )));
    }
    let values = DMatrix::from_fn(m, m, |i, j| t.rows[i][j]);
    DistanceMatrix::new(TimeGrid::from_times(times)?, values)
}

fn time_rows(grid: &TimeGrid, cols: &DMatrix<f64>) -> Vec<Vec<f64>> {
    grid.times()
        .iter()
        .enumerate()
        .map(|(i, &t)| std::iter::once(t).chain(cols.row(i).iter().copied()).collect())
        .collect()
}

/// `t,psi1..psic`
pub fn write_mirror_csv(path: &Path, mirror: &MirrorCurve) -> Result<(), MirrorError> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=mirror.c).map(|k| format!("psi{k}")))
        .collect();
    table::write(path, &header, &time_rows(&mirror.grid, &mirror.coords))?;
    Ok(())
}

/// Reads a `t,psi1..` CSV as a grid plus coordinates.
pub fn read_mirror_csv(path: &Path) -> Result<(TimeGrid, DMatrix<f64>), MirrorError> {
    let t = table::read(path)?;
    let c = t.header.len().saturating_sub(1);
    if c == 0 {
        return Err(MirrorError::InvalidInput(format!("{}: no coordinate columns", path.display())));
    }
    let grid = TimeGrid::from_times(t.rows.iter().map(|r| r[0]).collect())?;
    let coords = DMatrix::from_fn(t.rows.len(), c, |i, k| t.rows[i][k + 1]);
    Ok((grid, coords))
}

/// `rank,eigenvalue`
pub fn write_scree_csv(path: &Path, scree: &[f64]) -> Result<(), MirrorError> {
    let rows: Vec<Vec<f64>> = scree
        .iter()
        .enumerate()
        .map(|(k, &v)| vec![(k + 1) as f64, v])
        .collect();
    table::write(path, &["rank".to_string(), "eigenvalue".to_string()], &rows)?;
    Ok(())
}

/// `t,iota`
pub fn write_isomap_csv(path: &Path, trace: &IsomapTrace) -> Result<(), MirrorError> {
    let rows: Vec<Vec<f64>> = trace
        .grid
        .times()
        .iter()
        .zip(&trace.values)
        .map(|(&t, &v)| vec![t, v])
        .collect();
    table::write(path, &["t".to_string(), "iota".to_string()], &rows)?;
    Ok(())
}

pub fn read_isomap_csv(path: &Path) -> Result<IsomapTrace, MirrorError> {
    let t = table::read(path)?;
    if t.header.len() != 2 {
        return Err(MirrorError::InvalidInput(format!(
            "{}: expected columns t,iota",
            path.display()
        )));
    }
    let grid = TimeGrid::from_times(t.rows.iter().map(|r| r[0]).collect())?;
    Ok(IsomapTrace {
        grid,
        values: t.rows.iter().map(|r| r[1]).collect(),
    })
}

/// Writes the CMDS warnings, one per line, if there are any.
pub fn write_warnings(path: &Path, warnings: &[String]) -> Result<(), MirrorError> {
    if !warnings.is_empty() {
        fs::write(path, warnings.join("\n") + "\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use crate::metric::procrustes_rotation;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn grid(m: usize) -> TimeGrid {
        TimeGrid::integers(m).unwrap()
    }

    fn euclidean_dm(points: &DMatrix<f64>) -> DistanceMatrix {
        let m = points.nrows();
        let v = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { euclidean(points, i, j) });
        // Exact symmetry: the norm of a-b and b-a can differ in the last bit.
        let v = DMatrix::from_fn(m, m, |i, j| if i <= j { v[(i, j)] } else { v[(j, i)] });
        DistanceMatrix::new(grid(m), v).unwrap()
    }

    fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
        let mean = x.row_mean();
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, k| x[(i, k)] - mean[k])
    }

    fn aligned_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let (w, _) = procrustes_rotation(a, b).unwrap();
        (a - b * w).norm()
    }

    fn gaussian_points(m: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, c, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn distance_matrix_examples() {
        let e = |t: f64, v: f64| crate::embed::EmbeddingMatrix {
            time: t,
            rows: DMatrix::from_element(6, 1, v),
            eigenvalues: vec![],
            scaled: true,
        };
        let same = distance_matrix(&[e(1.0, 0.3), e(2.0, 0.3), e(3.0, 0.3)], false).unwrap();
        assert!(same.values().iter().all(|&v| v == 0.0));
        let two = distance_matrix(&[e(1.0, 1.0), e(2.0, 0.5)], false).unwrap();
        assert!((two.values()[(0, 1)] - 0.5).abs() < 1e-12);
        assert_eq!(two.values()[(0, 1)], two.values()[(1, 0)]);

        let mut bad = vec![e(1.0, 1.0), e(2.0, 1.0), e(3.0, 1.0)];
        bad[2].rows = DMatrix::from_element(5, 1, 1.0);
        match distance_matrix(&bad, false) {
            Err(MirrorError::ShapeMismatch { time, .. }) => assert_eq!(time, 3.0),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn cmds_examples() {
        let zero = DistanceMatrix::new(grid(4), DMatrix::zeros(4, 4)).unwrap();
        let c = cmds(&zero, 2).unwrap();
        assert!(c.coords.iter().all(|&v| v == 0.0));

        let two = DistanceMatrix::new(grid(2), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let c = cmds(&two, 1).unwrap();
        assert!((c.coords[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((c.coords[(1, 0)] + 0.5).abs() < 1e-12);
        assert!((c.scree[0] - 0.5).abs() < 1e-12);

        let tri = DistanceMatrix::new(grid(3), DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 })).unwrap();
        let c = cmds(&tri, 2).unwrap();
        for i in 0..3 {
            for j in 0..i {
                assert!(((c.coords.row(i) - c.coords.row(j)).norm() - 1.0).abs() < 1e-10);
            }
        }
        assert!(matches!(cmds(&tri, 3), Err(MirrorError::DimensionOutOfRange { .. })));
        assert!(matches!(cmds(&tri, 0), Err(MirrorError::DimensionOutOfRange { .. })));
    }

    #[test]
    fn cmds_zeroes_non_euclidean_directions() {
        // Four points where one pair violates the triangle inequality badly.
        let mut v = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        v[(0, 3)] = 5.0;
        v[(3, 0)] = 5.0;
        let c = cmds(&DistanceMatrix::new(grid(4), v).unwrap(), 3).unwrap();
        assert!(c.scree.iter().any(|&l| l < 0.0));
        assert!(!c.warnings.is_empty());
        assert!(c.scree.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn cmds_recovers_euclidean_configurations() {
        let x = gaussian_points(20, 3, 11);
        let curve = cmds(&euclidean_dm(&x), 3).unwrap();
        assert!(aligned_residual(&curve.coords, &centered(&x)) <= 1e-8);
        for k in 0..3 {
            assert!(curve.coords.column(k).sum().abs() <= 1e-9 * 20.0);
            for l in 0..k {
                assert!(curve.coords.column(k).dot(&curve.coords.column(l)).abs() <= 1e-8);
            }
        }
        assert!(curve.warnings.is_empty());
    }

    #[test]
    fn cmds_is_permutation_equivariant() {
        let x = gaussian_points(12, 2, 12);
        let d = euclidean_dm(&x);
        let perm: Vec<usize> = vec![5, 2, 11, 0, 7, 1, 9, 3, 10, 4, 8, 6];
        let pv = DMatrix::from_fn(12, 12, |i, j| d.values()[(perm[i], perm[j])]);
        let base = cmds(&d, 2).unwrap().coords;
        let moved = cmds(&DistanceMatrix::new(grid(12), pv).unwrap(), 2).unwrap().coords;
        let base_perm = DMatrix::from_fn(12, 2, |i, k| base[(perm[i], k)]);
        assert!(aligned_residual(&moved, &base_perm) < 1e-9);
    }

    #[test]
    fn scree_is_stable_under_small_perturbations() {
        let x = gaussian_points(15, 3, 13);
        let d = euclidean_dm(&x);
        let base = cmds(&d, 3).unwrap().scree;
        let eps = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut sq = d.values().map(|v| v * v);
        for i in 0..15 {
            for j in 0..i {
                let bump = sq[(i, j)] + rng.random_range(-eps..eps);
                let bump = bump.max(0.0);
                sq[(i, j)] = bump;
                sq[(j, i)] = bump;
            }
        }
        let perturbed = cmds(&DistanceMatrix::new(grid(15), sq.map(f64::sqrt)).unwrap(), 3).unwrap().scree;
        for (a, b) in base.iter().zip(&perturbed) {
            assert!((a - b).abs() <= 15.0 * eps / 2.0);
        }
    }

    #[test]
    fn isomap_examples() {
        // Collinear points with uneven spacing.
        let s = [0.0, 0.3, 1.1, 1.5, 2.8, 3.0, 4.2];
        let dir = [0.6, -0.8];
        let pts = DMatrix::from_fn(s.len(), 2, |i, k| 1.0 + s[i] * dir[k]);
        let tr = isomap_points(&grid(s.len()), &pts, 2).unwrap();
        let r = pearson(&tr.values, &s);
        assert!((r.abs() - 1.0).abs() < 1e-9);
        assert!(tr.values[1] >= tr.values[0]);

        let pair = DMatrix::from_row_slice(2, 1, &[0.0, 3.0]);
        let tr = isomap_points(&grid(2), &pair, 5).unwrap();
        assert!((tr.values[0] + 1.5).abs() < 1e-12 && (tr.values[1] - 1.5).abs() < 1e-12);

        let one = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(isomap_points(&grid(2), &one, 1).is_err());
    }

    #[test]
    fn isomap_unrolls_an_arc() {
        let m = 30;
        let theta: Vec<f64> = (0..m).map(|i| std::f64::consts::FRAC_PI_2 * i as f64 / (m - 1) as f64).collect();
        let pts = DMatrix::from_fn(m, 2, |i, k| if k == 0 { theta[i].cos() } else { theta[i].sin() });
        let tr = isomap_points(&grid(m), &pts, 3).unwrap();
        let arc_gap = theta[1] - theta[0];
        for w in tr.values.windows(2) {
            assert!(((w[1] - w[0]).abs() - arc_gap).abs() <= 0.05 * arc_gap);
        }
    }

    #[test]
    fn isomap_bridges_disconnected_neighbourhoods() {
        let pts = DMatrix::from_row_slice(6, 1, &[0.0, 0.1, 0.2, 10.0, 10.1, 10.2]);
        let geo = geodesic_distances(&pts, 1).unwrap();
        assert!(geo.iter().all(|v| v.is_finite()));
        assert!((geo[(0, 5)] - 10.2).abs() < 1e-12);
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn stress_examples() {
        let x = gaussian_points(10, 2, 15);
        let d = euclidean_dm(&x);
        assert!(stress(&d, &x).unwrap() <= 1e-12);
        let curve = cmds(&d, 2).unwrap();
        assert!(stress(&d, &curve.coords).unwrap() <= 1e-12);
        let mut bumped = x.clone();
        bumped[(3, 1)] += 0.01;
        assert!(stress(&d, &bumped).unwrap() > stress(&d, &x).unwrap());
    }

    #[test]
    fn stress_is_minimal_at_the_cmds_solution() {
        let x = gaussian_points(12, 2, 16);
        let d = euclidean_dm(&x);
        let coords = cmds(&d, 2).unwrap().coords;
        let base = stress(&d, &coords).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let q = random_orthogonal(2, &mut rng);
            let noise = DMatrix::from_fn(12, 2, |_, _| 1e-3 * rng.sample::<f64, _>(StandardNormal));
            let probe = &coords * q + noise;
            assert!(base <= stress(&d, &probe).unwrap());
        }
    }

    #[test]
    fn time_weights_use_backward_differences() {
        let g = TimeGrid::new(vec![0.5, 1.0, 2.0, 4.0], 4.0).unwrap();
        assert_eq!(time_weights(&g), vec![0.5, 0.5, 1.0, 2.0]);
    }

    #[test]
    fn select_dimension_examples() {
        assert_eq!(select_dimension(&[1.0, 0.0, 0.0], 0.95).unwrap().c, 1);
        let choice = select_dimension(&[0.6, 0.39, 0.01, 0.0, -0.2], 0.95).unwrap();
        assert_eq!(choice.c, 2);
        assert!((choice.mass[1] - 0.99).abs() < 1e-12);
        assert!(matches!(
            select_dimension(&[0.0, -1.0], 0.95),
            Err(MirrorError::NoPositiveEigenvalue)
        ));
        assert!(select_dimension(&[1.0], 0.0).is_err());
    }

    #[test]
    fn select_dimension_finds_exact_rank() {
        for c in 1..=4 {
            let x = gaussian_points(25, c, 100 + c as u64);
            let scree = cmds(&euclidean_dm(&x), 5).unwrap().scree;
            assert_eq!(select_dimension(&scree, 1.0).unwrap().c, c);
        }
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let x = gaussian_points(5, 2, 18);
        let d = euclidean_dm(&x);
        let p = dir.path().join("d.csv");
        write_distance_csv(&p, &d).unwrap();
        let back = read_distance_csv(&p).unwrap();
        assert_eq!(back.values(), d.values());
        assert_eq!(back.grid().times(), d.grid().times());

        let curve = cmds(&d, 2).unwrap();
        let p = dir.path().join("m.csv");
        write_mirror_csv(&p, &curve).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("t,psi1,psi2\n1,"));
        let (g, coords) = read_mirror_csv(&p).unwrap();
        assert_eq!(coords, curve.coords);
        assert_eq!(g.times(), curve.grid.times());

        let p = dir.path().join("s.csv");
        write_scree_csv(&p, &[2.0, -0.5]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "rank,eigenvalue\n1,2\n2,-0.5\n");

        let tr = isomap_1d(&curve, 2).unwrap();
        let p = dir.path().join("i.csv");
        write_isomap_csv(&p, &tr).unwrap();
        assert_eq!(read_isomap_csv(&p).unwrap(), tr);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn cmds_output_structure(seed in any::<u64>(), m in 4usize..15, c in 1usize..3) {
            let d = euclidean_dm(&gaussian_points(m, 3, seed));
            let curve = cmds(&d, c).unwrap();
            prop_assert!(curve.scree.windows(2).all(|w| w[0] >= w[1]));
            for k in 0..c {
                prop_assert!(curve.coords.column(k).sum().abs() <= 1e-9 * m as f64);
                for l in 0..k {
                    prop_assert!(curve.coords.column(k).dot(&curve.coords.column(l)).abs() <= 1e-8);
                }
            }
        }
    }
}
