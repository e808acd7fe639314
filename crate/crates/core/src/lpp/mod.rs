//! Latent position processes: time grids, per-node latent trajectories,
//! the drift-plus-Brownian simulators, closed-form d_MV oracles for them,
//! and row bootstrap of empirical trajectories.

mod archive;
mod bootstrap;
mod oracle;
mod simulate;

pub use archive::{read_archive, write_archive, ArchiveManifest};
pub use bootstrap::{bootstrap_indices, bootstrap_resample, resample_rows};
pub use oracle::{dmv_oracle_bm, dmv_oracle_ibm};
pub use simulate::{simulate_bm_drift, simulate_integrated_bm};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphgen::LatentMatrix;

#[derive(Debug, Error)]
pub enum LppError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid process specification: {0}")]
    InvalidSpec(String),
    #[error("cannot resample from an empty trajectory set")]
    EmptySource,
    #[error("bootstrap sample size must be at least 1")]
    ZeroSampleSize,
    #[error("trajectory shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{file}: line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Strictly increasing sample times inside `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct TimeGrid {
    times: Vec<f64>,
    horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGrid {
    times: Vec<f64>,
    horizon: f64,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = LppError;
    fn try_from(raw: RawGrid) -> Result<Self, LppError> {
        TimeGrid::new(raw.times, raw.horizon)
    }
}

impl From<TimeGrid> for RawGrid {
    fn from(g: TimeGrid) -> Self {
        RawGrid {
            times: g.times,
            horizon: g.horizon,
        }
    }
}

impl TimeGrid {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self, LppError> {
        if times.len() < 2 {
            return Err(LppError::InvalidGrid(format!(
                "need at least 2 times, got {}",
                times.len()
            )));
        }
        if !horizon.is_finite() || horizon <= 0.0 {
            return Err(LppError::InvalidGrid(format!("horizon {horizon} must be positive")));
        }
        if let Some(t) = times.iter().find(|t| !(0.0..=horizon).contains(*t)) {
            return Err(LppError::InvalidGrid(format!("time {t} outside [0, {horizon}]")));
        }
        if let Some(w) = times.windows(2).find(|w| w[0] >= w[1]) {
            return Err(LppError::InvalidGrid(format!(
                "times not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { times, horizon })
    }

    /// `count` equally spaced times from `start` to `end` inclusive, with
    /// horizon `end`.
    pub fn linspace(start: f64, end: f64, count: usize) -> Result<Self, LppError> {
        if count < 2 {
            return Err(LppError::InvalidGrid(format!("need at least 2 times, got {count}")));
        }
        let step = (end - start) / (count - 1) as f64;
        let mut times: Vec<f64> = (0..count).map(|i| start + step * i as f64).collect();
        times[count - 1] = end;
        Self::new(times, end)
    }

    /// Times `1, 2, ..., count` with horizon `count`.
    pub fn integers(count: usize) -> Result<Self, LppError> {
        Self::new((1..=count).map(|i| i as f64).collect(), count as f64)
    }

    /// Grid with horizon equal to the last time.
    pub fn from_times(times: Vec<f64>) -> Result<Self, LppError> {
        let horizon = times.last().copied().unwrap_or(0.0);
        Self::new(times, horizon)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the grid time nearest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        (0..self.times.len())
            .min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
            .unwrap()
    }
}

/// Latent positions of `n` nodes at every grid time. Stored time-major:
/// `snapshot(i)` is the `n x d` matrix at `grid.times()[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectorySet {
    grid: TimeGrid,
    snapshots: Vec<DMatrix<f64>>,
}

impl LatentTrajectorySet {
    pub fn new(grid: TimeGrid, snapshots: Vec<DMatrix<f64>>) -> Result<Self, LppError> {
        if snapshots.len() != grid.len() {
            return Err(LppError::ShapeMismatch(format!(
                "{} snapshots for {} grid times",
                snapshots.len(),
                grid.len()
            )));
        }
        let shape = snapshots[0].shape();
        if let Some((i, s)) = snapshots.iter().enumerate().find(|(_, s)| s.shape() != shape) {
            return Err(LppError::ShapeMismatch(format!(
                "snapshot {i} is {}x{}, expected {}x{}",
                s.nrows(),
                s.ncols(),
                shape.0,
                shape.1
            )));
        }
        Ok(Self { grid, snapshots })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.snapshots[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.snapshots[0].ncols()
    }

    pub fn snapshots(&self) -> &[DMatrix<f64>] {
        &self.snapshots
    }

    pub fn snapshot(&self, i: usize) -> &DMatrix<f64> {
        &self.snapshots[i]
    }

    pub fn latent_at(&self, i: usize) -> LatentMatrix {
        LatentMatrix::new(self.grid.times()[i], self.snapshots[i].clone())
    }

    /// Node `j`'s position at every grid time.
    pub fn node_path(&self, j: usize) -> Vec<DVector<f64>> {
        self.snapshots
            .iter()
            .map(|s| s.row(j).transpose())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    /// `a(t) = c1 t + c2`
    Linear,
    /// `a(t) = c1 t^2 + c2`
    Quadratic,
}

/// Deterministic drift `a(t) v` plus Brownian motion with scale `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub kind: DriftKind,
    pub c1: f64,
    pub c2: f64,
    pub v: Vec<f64>,
    pub sigma: f64,
}

impl DriftSpec {
    /// Linear drift `t/50 + 1/10` along `(1, 1)/sqrt 2`, Brownian scale 1e-3.
    pub fn linear_experiment() -> Self {
        Self {
            kind: DriftKind::Linear,
            c1: 1.0 / 50.0,
            c2: 1.0 / 10.0,
            v: vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            sigma: 1e-3,
        }
    }

    /// Quadratic drift `t^2/1000 + 1/10` along `(1, 1)/sqrt 2`, Brownian scale 1e-3.
    pub fn quadratic_experiment() -> Self {
        Self {
            kind: DriftKind::Quadratic,
            c1: 1.0 / 1000.0,
            ..Self::linear_experiment()
        }
    }

    pub fn a(&self, t: f64) -> f64 {
        match self.kind {
            DriftKind::Linear => self.c1 * t + self.c2,
            DriftKind::Quadratic => self.c1 * t * t + self.c2,
        }
    }

    pub fn v_norm(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// The one-dimensional mirror `psi(t) = ||v|| a(t)`.
    pub fn mirror(&self, t: f64) -> f64 {
        self.v_norm() * self.a(t)
    }

    pub fn validate(&self) -> Result<(), LppError> {
        if self.v.is_empty() {
            return Err(LppError::InvalidSpec("drift direction v is empty".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(LppError::InvalidSpec(format!("sigma {} must be >= 0", self.sigma)));
        }
        if !(self.c1.is_finite() && self.c2.is_finite() && self.v.iter().all(|x| x.is_finite())) {
            return Err(LppError::InvalidSpec("non-finite drift parameter".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.0], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.5, 0.2], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.5, 1.2], 1.0).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0], 0.0).is_err());
        let g = TimeGrid::linspace(0.0, 3.0, 30).unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!(g.times()[29], 3.0);
        assert_eq!(g.nearest(1.0), 10);
        let g = TimeGrid::integers(30).unwrap();
        assert_eq!(g.times()[0], 1.0);
        assert_eq!(g.horizon(), 30.0);
    }

    #[test]
    fn grid_serde_validates() {
        let g: TimeGrid = serde_json::from_str(r#"{"times":[1,2],"horizon":2}"#).unwrap();
        assert_eq!(g.times(), &[1.0, 2.0]);
        assert!(serde_json::from_str::<TimeGrid>(r#"{"times":[2,1],"horizon":2}"#).is_err());
    }

    #[test]
    fn trajectory_shape_checks() {
        let g = TimeGrid::integers(2).unwrap();
        assert!(LatentTrajectorySet::new(g.clone(), vec![DMatrix::zeros(3, 2)]).is_err());
        assert!(LatentTrajectorySet::new(
            g.clone(),
            vec![DMatrix::zeros(3, 2), DMatrix::zeros(4, 2)]
        )
        .is_err());
        let set = LatentTrajectorySet::new(
            g,
            vec![DMatrix::from_element(3, 2, 1.0), DMatrix::from_element(3, 2, 2.0)],
        )
        .unwrap();
        assert_eq!(set.node_path(1)[1], DVector::from_element(2, 2.0));
        assert_eq!(set.latent_at(1).time, 2.0);
    }

    #[test]
    fn drift_functions() {
        let lin = DriftSpec::linear_experiment();
        assert!((lin.a(10.0) - 0.3).abs() < 1e-15);
        assert!((lin.v_norm() - 1.0).abs() < 1e-15);
        let quad = DriftSpec::quadratic_experiment();
        assert!((quad.a(30.0) - 1.0).abs() < 1e-15);
        assert!(DriftSpec { sigma: -1.0, ..lin.clone() }.validate().is_err());
        assert!(DriftSpec { v: vec![], ..lin }.validate().is_err());
    }
}
