//! Configuration-driven end-to-end runs: obtain a graph time series
//! (simulated or loaded), embed every snapshot, build the distance matrix,
//! recover the mirror and its ISOMAP trace, scan for change points, and
//! write every artifact together with a hashed manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::changepoint::{
    regression_band_scan, sigmage_scan, write_report_json, ChangepointError, RegressionBandReport,
    SigmageReport,
};
use crate::embed::{ase_padded, read_embedding_dir, write_embedding_dir, EmbedError, EmbeddingMatrix};
use crate::graphgen::{
    induced_subgraph, read_snapshot_dir, sample_rdpg, sbm_trajectory, write_snapshot_dir, GraphError,
    GraphSnapshot,
};
use crate::lpp::{
    bootstrap_indices, read_archive, resample_rows, simulate_bm_drift, simulate_integrated_bm,
    write_archive, DriftSpec, LatentTrajectorySet, LppError, TimeGrid,
};
use crate::mirror::{
    cmds, distance_matrix, isomap_1d, select_dimension, stress, write_distance_csv, write_isomap_csv,
    write_mirror_csv, write_scree_csv, DimensionChoice, DistanceMatrix, IsomapTrace, MirrorCurve,
    MirrorError, DEFAULT_DIMENSION_THRESHOLD,
};
use crate::rng::{derive_seed, domain};
use crate::table::{self, TableError};

// ---------------------------------------------------------------------------
// Errors

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numerical => 4,
        }
    }
}

/// A failure tagged with the stage that raised it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineError {
    pub stage: String,
    pub category: ErrorCategory,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &str, category: ErrorCategory, message: impl Into<String>) -> Self {
        Self {
            stage: stage.to_string(),
            category,
            message: message.into(),
        }
    }

    pub fn config(stage: &str, message: impl Into<String>) -> Self {
        Self::new(stage, ErrorCategory::Config, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.category.exit_code()
    }

    /// Single-line JSON rendering for machine consumption.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({:?}): {}", self.stage, self.category, self.message)
    }
}

impl std::error::Error for PipelineError {}

pub fn io_err(stage: &str, path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::new(stage, ErrorCategory::Data, format!("{}: {e}", path.display()))
}

pub fn graph_err(stage: &str, e: GraphError) -> PipelineError {
    let category = match e {
        GraphError::InvalidSbm(_) | GraphError::TimeOutOfDomain(_) => ErrorCategory::Config,
        GraphError::NotPsd(_) => ErrorCategory::Numerical,
        _ => ErrorCategory::Data,
    };
    PipelineError::new(stage, category, e.to_string())
}

pub fn lpp_err(stage: &str, e: LppError) -> PipelineError {
    let category = match e {
        LppError::InvalidGrid(_) | LppError::InvalidSpec(_) | LppError::ZeroSampleSize => ErrorCategory::Config,
        _ => ErrorCategory::Data,
    };
    PipelineError::new(stage, category, e.to_string())
}

pub fn embed_err(e: EmbedError) -> PipelineError {
    let category = match e {
        EmbedError::InvalidDimension { .. } => ErrorCategory::Config,
        EmbedError::RankDeficient { .. } | EmbedError::Solver(_) => ErrorCategory::Numerical,
        _ => ErrorCategory::Data,
    };
    PipelineError::new("embed", category, e.to_string())
}

pub fn mirror_err(stage: &str, e: MirrorError) -> PipelineError {
    let category = match e {
        MirrorError::DimensionOutOfRange { .. } => ErrorCategory::Config,
        MirrorError::NoPositiveEigenvalue => ErrorCategory::Numerical,
        _ => ErrorCategory::Data,
    };
    PipelineError::new(stage, category, e.to_string())
}

pub fn changepoint_err(e: ChangepointError) -> PipelineError {
    let category = match e {
        ChangepointError::Io(_) => ErrorCategory::Data,
        _ => ErrorCategory::Config,
    };
    PipelineError::new("changepoint", category, e.to_string())
}

// ---------------------------------------------------------------------------
// Configuration

/// Mirror dimension: a fixed value or chosen from the scree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimensionSetting {
    Fixed(usize),
    Auto,
}

impl Default for DimensionSetting {
    fn default() -> Self {
        DimensionSetting::Fixed(1)
    }
}

impl Serialize for DimensionSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            DimensionSetting::Fixed(c) => s.serialize_u64(*c as u64),
            DimensionSetting::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for DimensionSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(c) => Ok(DimensionSetting::Fixed(c)),
            Raw::Text(t) if t == "auto" => Ok(DimensionSetting::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "mirror dimension must be an integer or \"auto\", got {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangepointConfig {
    #[serde(default = "default_window")]
    pub w: usize,
    #[serde(default = "default_five")]
    pub threshold: f64,
    #[serde(default = "default_five")]
    pub multiplier: f64,
}

fn default_window() -> usize {
    5
}

fn default_five() -> f64 {
    5.0
}

impl Default for ChangepointConfig {
    fn default() -> Self {
        Self {
            w: default_window(),
            threshold: default_five(),
            multiplier: default_five(),
        }
    }
}

/// Sample times for a simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// Times `1..=count`.
    Integers(usize),
    /// `count` equally spaced times from `start` to `end`.
    Linspace { start: f64, end: f64, count: usize },
    /// Explicit times and horizon.
    Explicit(TimeGrid),
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid, LppError> {
        match self {
            GridSpec::Integers(count) => TimeGrid::integers(*count),
            GridSpec::Linspace { start, end, count } => TimeGrid::linspace(*start, *end, *count),
            GridSpec::Explicit(g) => Ok(g.clone()),
        }
    }
}

/// Drift parameters, by preset name (`"linear"`, `"quadratic"`) or given
/// in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DriftChoice {
    Preset(String),
    Custom(DriftSpec),
}

impl DriftChoice {
    pub fn resolve(&self) -> Result<DriftSpec, LppError> {
        match self {
            DriftChoice::Preset(name) => match name.as_str() {
                "linear" => Ok(DriftSpec::linear_experiment()),
                "quadratic" => Ok(DriftSpec::quadratic_experiment()),
                other => Err(LppError::InvalidSpec(format!("unknown drift preset {other:?}"))),
            },
            DriftChoice::Custom(spec) => Ok(spec.clone()),
        }
    }
}

/// Latent position process to simulate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    /// Drift along `v` plus Brownian motion.
    BmDrift { drift: DriftChoice },
    /// Linear drift `(a t + b) v` plus integrated Brownian motion.
    IntegratedBm { a: f64, b: f64, v: Vec<f64>, sigma: f64 },
    /// Two-block model whose block matrix passes through rank one at `t = 1`.
    Sbm {
        #[serde(default = "default_block_sizes")]
        block_sizes: Vec<usize>,
    },
    /// Latent trajectories previously written with `write_archive`.
    Archive { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub process: ProcessSpec,
    /// Required except for archives, which carry their own grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    /// Node count; required for the drift processes.
    #[serde(default)]
    pub n: Option<usize>,
}

fn default_block_sizes() -> Vec<usize> {
    vec![1000, 1000]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Simulate(SimulateSpec),
    /// Directory of edge-list snapshots.
    Load(PathBuf),
    /// Directory of precomputed embeddings (`embedding_*.csv` with JSON
    /// sidecars); the embedding stage is skipped.
    Embeddings(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputSpec,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default)]
    pub c: DimensionSetting,
    #[serde(default = "default_c_threshold")]
    pub c_threshold: f64,
    #[serde(default = "default_true")]
    pub scaled: bool,
    #[serde(default)]
    pub refine: bool,
    #[serde(default = "default_isomap_k")]
    pub isomap_k: usize,
    #[serde(default)]
    pub changepoint: ChangepointConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// CSV with columns `node,community`.
    #[serde(default)]
    pub partition: Option<PathBuf>,
}

fn default_d() -> usize {
    2
}

fn default_c_threshold() -> f64 {
    DEFAULT_DIMENSION_THRESHOLD
}

fn default_true() -> bool {
    true
}

fn default_isomap_k() -> usize {
    5
}

/// The analysis knobs of a configuration, independent of input and output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisSettings {
    pub d: usize,
    pub c: DimensionSetting,
    pub c_threshold: f64,
    pub scaled: bool,
    pub refine: bool,
    pub isomap_k: usize,
    pub changepoint: ChangepointConfig,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            d: default_d(),
            c: DimensionSetting::default(),
            c_threshold: default_c_threshold(),
            scaled: true,
            refine: false,
            isomap_k: default_isomap_k(),
            changepoint: ChangepointConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| {
            PipelineError::config("config", format!("{}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn settings(&self) -> AnalysisSettings {
        AnalysisSettings {
            d: self.d,
            c: self.c,
            c_threshold: self.c_threshold,
            scaled: self.scaled,
            refine: self.refine,
            isomap_k: self.isomap_k,
            changepoint: self.changepoint,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::config("config", m));
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        if self.c == DimensionSetting::Fixed(0) {
            return bad("c must be at least 1".into());
        }
        if !(self.c_threshold > 0.0 && self.c_threshold <= 1.0) {
            return bad(format!("cThreshold {} must be in (0, 1]", self.c_threshold));
        }
        if self.isomap_k == 0 {
            return bad("isomapK must be at least 1".into());
        }
        if self.changepoint.w < 3 {
            return bad(format!("changepoint window {} must be at least 3", self.changepoint.w));
        }
        match &self.input {
            InputSpec::Simulate(sim) if self.seed.is_none() && !matches!(sim.process, ProcessSpec::Archive { .. }) => {
                return bad("seed is required when simulating".into());
            }
            InputSpec::Embeddings(_) if self.partition.is_some() => {
                return bad("a partition needs graph input, not precomputed embeddings".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON rendering (defaults filled in).
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

// ---------------------------------------------------------------------------
// Inputs

/// Latent trajectories described by a simulation spec.
pub fn simulate_latents(spec: &SimulateSpec, seed: Option<u64>) -> Result<LatentTrajectorySet, PipelineError> {
    const STAGE: &str = "simulate";
    let grid = || -> Result<TimeGrid, PipelineError> {
        spec.grid
            .as_ref()
            .ok_or_else(|| PipelineError::config(STAGE, "a grid is required for this process"))?
            .build()
            .map_err(|e| lpp_err(STAGE, e))
    };
    let n = || spec.n.ok_or_else(|| PipelineError::config(STAGE, "n is required for this process"));
    let seed = || seed.ok_or_else(|| PipelineError::config(STAGE, "seed is required when simulating"));
    match &spec.process {
        ProcessSpec::BmDrift { drift } => {
            let drift = drift.resolve().map_err(|e| lpp_err(STAGE, e))?;
            simulate_bm_drift(&drift, &grid()?, n()?, seed()?).map_err(|e| lpp_err(STAGE, e))
        }
        ProcessSpec::IntegratedBm { a, b, v, sigma } => {
            simulate_integrated_bm(*a, *b, v, *sigma, &grid()?, n()?, seed()?).map_err(|e| lpp_err(STAGE, e))
        }
        ProcessSpec::Sbm { block_sizes } => {
            if let Some(n) = spec.n {
                if n != block_sizes.iter().sum::<usize>() {
                    return Err(PipelineError::config(STAGE, "n does not match the block sizes"));
                }
            }
            sbm_trajectory(&grid()?, block_sizes).map_err(|e| graph_err(STAGE, e))
        }
        ProcessSpec::Archive { dir } => read_archive(dir).map(|(set, _)| set).map_err(|e| lpp_err(STAGE, e)),
    }
}

/// Seed of the graph drawn at grid index `i`.
pub fn graph_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, domain::GRAPH, &[i as u64])
}

/// One RDPG per grid time, drawn with the given per-snapshot seeds.
pub fn sample_graphs_with(
    set: &LatentTrajectorySet,
    seeds: &[u64],
) -> Result<(Vec<GraphSnapshot>, usize), PipelineError> {
    let mut clamped = 0;
    let mut graphs = Vec::with_capacity(set.grid().len());
    for (i, &s) in seeds.iter().enumerate().take(set.grid().len()) {
        let sample = sample_rdpg(&set.latent_at(i), s).map_err(|e| graph_err("sample", e))?;
        clamped += sample.clamped;
        graphs.push(sample.graph);
    }
    Ok((graphs, clamped))
}

/// One RDPG per grid time, seeded by [`graph_seed`].
pub fn sample_graphs(set: &LatentTrajectorySet, seed: u64) -> Result<(Vec<GraphSnapshot>, usize), PipelineError> {
    let seeds: Vec<u64> = (0..set.grid().len()).map(|i| graph_seed(seed, i)).collect();
    sample_graphs_with(set, &seeds)
}

/// The graph series named by the configuration, plus input warnings.
pub fn load_graphs(cfg: &PipelineConfig) -> Result<(Vec<GraphSnapshot>, Vec<String>), PipelineError> {
    match &cfg.input {
        InputSpec::Load(dir) => {
            let graphs = read_snapshot_dir(dir).map_err(|e| {
                let mut err = graph_err("load", e);
                err.message = format!("{}: {}", dir.display(), err.message);
                err
            })?;
            if graphs.len() < 2 {
                return Err(PipelineError::new(
                    "load",
                    ErrorCategory::Data,
                    format!("{}: need at least 2 snapshots, found {}", dir.display(), graphs.len()),
                ));
            }
            Ok((graphs, Vec::new()))
        }
        InputSpec::Simulate(sim) => {
            let set = simulate_latents(sim, cfg.seed)?;
            let (graphs, clamped) = sample_graphs(&set, cfg.seed.unwrap_or(0))?;
            let mut warnings = Vec::new();
            if clamped > 0 {
                warnings.push(format!("{clamped} edge probabilities clamped into [0, 1]"));
            }
            Ok((graphs, warnings))
        }
        InputSpec::Embeddings(_) => Err(PipelineError::config("load", "input holds embeddings, not graphs")),
    }
}

/// Reads a precomputed embedding directory; needs at least two snapshots.
pub fn load_embeddings(dir: &Path) -> Result<Vec<EmbeddingMatrix>, PipelineError> {
    let embeddings = read_embedding_dir(dir).map_err(|e| {
        let mut err = embed_err(e);
        err.stage = "load".into();
        err.message = format!("{}: {}", dir.display(), err.message);
        err
    })?;
    if embeddings.len() < 2 {
        return Err(PipelineError::new(
            "load",
            ErrorCategory::Data,
            format!("{}: need at least 2 embeddings, found {}", dir.display(), embeddings.len()),
        ));
    }
    Ok(embeddings)
}

// ---------------------------------------------------------------------------
// Analysis

/// In-memory results of one run over a graph series.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub embeddings: Vec<EmbeddingMatrix>,
    pub distances: DistanceMatrix,
    pub dimension: Option<DimensionChoice>,
    pub mirror: MirrorCurve,
    pub stress: f64,
    pub isomap: IsomapTrace,
    pub sigmage: Option<SigmageReport>,
    pub regression: Option<RegressionBandReport>,
    pub warnings: Vec<String>,
}

/// Embeds every snapshot (zero-padding rank-deficient directions).
pub fn embed_all(graphs: &[GraphSnapshot], d: usize, scaled: bool) -> Result<(Vec<EmbeddingMatrix>, Vec<String>), PipelineError> {
    let padded = graphs
        .par_iter()
        .map(|g| ase_padded(g, d, scaled))
        .collect::<Result<Vec<_>, _>>()
        .map_err(embed_err)?;
    let mut warnings = Vec::new();
    let mut embeddings = Vec::with_capacity(padded.len());
    for p in padded {
        if !p.zeroed.is_empty() {
            warnings.push(format!(
                "t={}: non-positive eigenvalues {:?}; directions {:?} zero-padded",
                p.embedding.time,
                p.zeroed.iter().map(|&k| p.embedding.eigenvalues[k]).collect::<Vec<_>>(),
                p.zeroed.iter().map(|k| k + 1).collect::<Vec<_>>()
            ));
        }
        embeddings.push(p.embedding);
    }
    Ok((embeddings, warnings))
}

/// Mirror, ISOMAP and change-point stages on a distance matrix; the
/// returned analysis has no embeddings.
pub fn analyze_distances(distances: DistanceMatrix, settings: &AnalysisSettings) -> Result<Analysis, PipelineError> {
    let m = distances.len();
    let mut warnings = Vec::new();
    let (c, dimension) = match settings.c {
        DimensionSetting::Fixed(c) => (c, None),
        DimensionSetting::Auto => {
            let scree = cmds(&distances, 1).map_err(|e| mirror_err("mirror", e))?.scree;
            let choice = select_dimension(&scree, settings.c_threshold).map_err(|e| mirror_err("mirror", e))?;
            (choice.c.min(m - 1), Some(choice))
        }
    };
    let mirror = cmds(&distances, c).map_err(|e| mirror_err("mirror", e))?;
    warnings.extend(mirror.warnings.iter().cloned());
    let stress = stress(&distances, &mirror.coords).map_err(|e| mirror_err("mirror", e))?;
    let isomap = isomap_1d(&mirror, settings.isomap_k).map_err(|e| mirror_err("isomap", e))?;
    let cp = settings.changepoint;
    let (sigmage, regression) = if isomap.values.len() > cp.w {
        (
            Some(sigmage_scan(&isomap, cp.w, cp.threshold).map_err(changepoint_err)?),
            Some(regression_band_scan(&isomap, cp.w, cp.multiplier).map_err(changepoint_err)?),
        )
    } else {
        warnings.push(format!(
            "trace of {} points is too short for change-point window {}; scans skipped",
            isomap.values.len(),
            cp.w
        ));
        (None, None)
    };
    Ok(Analysis {
        embeddings: Vec::new(),
        distances,
        dimension,
        mirror,
        stress,
        isomap,
        sigmage,
        regression,
        warnings,
    })
}

/// Runs every analysis stage on a graph series.
pub fn analyze(graphs: &[GraphSnapshot], settings: &AnalysisSettings) -> Result<Analysis, PipelineError> {
    let (embeddings, warnings) = embed_all(graphs, settings.d, settings.scaled)?;
    analyze_embeddings(embeddings, warnings, settings)
}

/// Everything after the embedding stage, starting from `embeddings`.
pub fn analyze_embeddings(
    embeddings: Vec<EmbeddingMatrix>,
    mut warnings: Vec<String>,
    settings: &AnalysisSettings,
) -> Result<Analysis, PipelineError> {
    let distances = distance_matrix(&embeddings, settings.refine).map_err(|e| mirror_err("distances", e))?;
    let mut analysis = analyze_distances(distances, settings)?;
    warnings.append(&mut analysis.warnings);
    analysis.warnings = warnings;
    analysis.embeddings = embeddings;
    Ok(analysis)
}

// ---------------------------------------------------------------------------
// Artifacts

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub c: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension_mass: Option<Vec<f64>>,
    pub stress: f64,
    pub sigmage_flags: Vec<f64>,
    pub regression_flags: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub summary: RunSummary,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub communities: BTreeMap<String, RunSummary>,
    pub files: Vec<FileEntry>,
}

fn summary_of(a: &Analysis) -> RunSummary {
    RunSummary {
        c: a.mirror.c,
        dimension_mass: a.dimension.as_ref().map(|d| d.mass.clone()),
        stress: a.stress,
        sigmage_flags: a.sigmage.as_ref().map(|r| r.flagged_times()).unwrap_or_default(),
        regression_flags: a.regression.as_ref().map(|r| r.flagged_times()).unwrap_or_default(),
        warnings: a.warnings.clone(),
    }
}

fn create_dir(stage: &str, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| io_err(stage, dir, e))
}

/// Writes the artifacts of one analysis into `dir` and returns their paths.
pub fn write_analysis(dir: &Path, a: &Analysis) -> Result<Vec<PathBuf>, PipelineError> {
    const STAGE: &str = "write";
    create_dir(STAGE, dir)?;
    let mut files = write_embedding_dir(&dir.join("embeddings"), &a.embeddings)
        .map_err(|e| PipelineError::new(STAGE, ErrorCategory::Data, e.to_string()))?;
    let wrap = |e: MirrorError| mirror_err(STAGE, e);
    let p = dir.join("distances.csv");
    write_distance_csv(&p, &a.distances).map_err(wrap)?;
    files.push(p);
    let p = dir.join("scree.csv");
    write_scree_csv(&p, &a.mirror.scree).map_err(wrap)?;
    files.push(p);
    let p = dir.join("mirror.csv");
    write_mirror_csv(&p, &a.mirror).map_err(wrap)?;
    files.push(p);
    let p = dir.join("isomap.csv");
    write_isomap_csv(&p, &a.isomap).map_err(wrap)?;
    files.push(p);
    if let Some(r) = &a.sigmage {
        let p = dir.join("sigmage.json");
        write_report_json(&p, r).map_err(changepoint_err)?;
        files.push(p);
    }
    if let Some(r) = &a.regression {
        let p = dir.join("regression_band.json");
        write_report_json(&p, r).map_err(changepoint_err)?;
        files.push(p);
    }
    Ok(files)
}

fn file_entries(root: &Path, files: &[PathBuf]) -> Result<Vec<FileEntry>, PipelineError> {
    let mut entries = files
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| io_err("manifest", p, e))?;
            let rel = p.strip_prefix(root).unwrap_or(p);
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            Ok(FileEntry {
                path,
                sha256: hex::encode(Sha256::digest(&bytes)),
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

/// Reads a `node,community` CSV into sorted community -> node lists.
pub fn read_partition(path: &Path, n: usize) -> Result<BTreeMap<u64, Vec<usize>>, PipelineError> {
    const STAGE: &str = "partition";
    let t = table::read(path).map_err(|e: TableError| PipelineError::new(STAGE, ErrorCategory::Data, e.to_string()))?;
    if t.header.len() != 2 {
        return Err(PipelineError::new(
            STAGE,
            ErrorCategory::Data,
            format!("{}: expected columns node,community", path.display()),
        ));
    }
    let mut seen = vec![false; n];
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for row in &t.rows {
        let (node, comm) = (row[0], row[1]);
        let valid = |x: f64| x >= 0.0 && x.fract() == 0.0;
        if !valid(node) || !valid(comm) || node as usize >= n || seen[node as usize] {
            return Err(PipelineError::new(
                STAGE,
                ErrorCategory::Data,
                format!("{}: invalid or repeated assignment {node},{comm} for {n} nodes", path.display()),
            ));
        }
        seen[node as usize] = true;
        groups.entry(comm as u64).or_default().push(node as usize);
    }
    for nodes in groups.values_mut() {
        nodes.sort_unstable();
    }
    Ok(groups)
}

fn write_json(stage: &str, path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("serializable") + "\n";
    fs::write(path, text).map_err(|e| io_err(stage, path, e))
}

/// Outcome of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub analysis: Analysis,
    pub manifest: Manifest,
}

fn manifest_for(cfg: &PipelineConfig, summary: RunSummary) -> Manifest {
    Manifest {
        package: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: cfg.hash(),
        config: serde_json::to_value(cfg).expect("config serializes"),
        summary,
        communities: BTreeMap::new(),
        files: Vec::new(),
    }
}

/// Full run: input, analysis, artifacts, optional per-community runs, and
/// `manifest.json`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    let settings = cfg.settings();
    let (graphs, analysis) = match &cfg.input {
        InputSpec::Embeddings(dir) => (Vec::new(), analyze_embeddings(load_embeddings(dir)?, Vec::new(), &settings)?),
        _ => {
            let (graphs, input_warnings) = load_graphs(cfg)?;
            let mut analysis = analyze(&graphs, &settings)?;
            analysis.warnings.splice(0..0, input_warnings);
            (graphs, analysis)
        }
    };
    let root = &cfg.output_dir;
    let mut files = write_analysis(root, &analysis)?;
    let mut manifest = manifest_for(cfg, summary_of(&analysis));

    if let Some(partition) = &cfg.partition {
        let groups = read_partition(partition, graphs[0].n())?;
        for (comm, nodes) in &groups {
            let sub = graphs
                .iter()
                .map(|g| induced_subgraph(g, nodes))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| graph_err("partition", e))?;
            let a = analyze(&sub, &settings).map_err(|mut e| {
                e.stage = format!("community {comm}: {}", e.stage);
                e
            })?;
            files.extend(write_analysis(&root.join(format!("community_{comm}")), &a)?);
            manifest.communities.insert(comm.to_string(), summary_of(&a));
        }
    }

    manifest.files = file_entries(root, &files)?;
    write_json("manifest", &root.join("manifest.json"), &manifest)?;
    Ok(PipelineOutcome { analysis, manifest })
}

/// Writes the simulated latent archive and edge-list snapshots for a
/// simulation config into `cfg.output_dir`.
pub fn run_simulate(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, PipelineError> {
    cfg.validate()?;
    let InputSpec::Simulate(sim) = &cfg.input else {
        return Err(PipelineError::config("simulate", "input must be a simulation spec"));
    };
    let set = simulate_latents(sim, cfg.seed)?;
    let (graphs, _) = sample_graphs(&set, cfg.seed.unwrap_or(0))?;
    let root = &cfg.output_dir;
    let spec = serde_json::to_value(sim).expect("spec serializes");
    write_archive(&root.join("latents"), &set, cfg.seed, spec).map_err(|e| lpp_err("simulate", e))?;
    let mut files = write_snapshot_dir(&root.join("graphs"), &graphs).map_err(|e| graph_err("simulate", e))?;
    files.insert(0, root.join("latents").join("manifest.json"));
    Ok(files)
}

// ---------------------------------------------------------------------------
// Bootstrap

/// How bootstrap replicates choose their rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resampling {
    /// Rows drawn uniformly with replacement.
    Random,
    /// Rows `0..n_s` with the source graph seeds; a replicate with
    /// `n_s = n` reproduces the source run exactly.
    Identity,
}

/// Latent trajectories to resample from: the simulated (or archived)
/// latents, or, for loaded graphs, their scaled embeddings (precomputed
/// embeddings are used as given).
pub fn bootstrap_source(cfg: &PipelineConfig) -> Result<LatentTrajectorySet, PipelineError> {
    match &cfg.input {
        InputSpec::Simulate(sim) => simulate_latents(sim, cfg.seed),
        InputSpec::Load(_) | InputSpec::Embeddings(_) => {
            let emb = match &cfg.input {
                InputSpec::Embeddings(dir) => load_embeddings(dir)?,
                _ => embed_all(&load_graphs(cfg)?.0, cfg.d, true)?.0,
            };
            let grid = TimeGrid::from_times(emb.iter().map(|e| e.time).collect()).map_err(|e| lpp_err("bootstrap", e))?;
            LatentTrajectorySet::new(grid, emb.into_iter().map(|e| e.rows).collect()).map_err(|e| lpp_err("bootstrap", e))
        }
    }
}

/// Signed ISOMAP traces are defined up to sign and shift: root-mean-square
/// difference after centering both, minimized over the sign of `b`.
pub fn aligned_trace_error(a: &[f64], b: &[f64]) -> f64 {
    let center = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| v - m).collect::<Vec<f64>>()
    };
    let (a, b) = (center(a), center(b));
    let rms = |sign: f64| {
        (a.iter().zip(&b).map(|(x, y)| (x - sign * y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
    };
    rms(1.0).min(rms(-1.0))
}

/// One bootstrap replicate: resample `n_s` rows, draw fresh graphs, and
/// rerun the analysis.
pub fn bootstrap_replicate(
    source: &LatentTrajectorySet,
    settings: &AnalysisSettings,
    seed: u64,
    n_s: usize,
    replicate: usize,
    resampling: Resampling,
) -> Result<Analysis, PipelineError> {
    let m = source.grid().len();
    let (indices, seeds): (Vec<usize>, Vec<u64>) = match resampling {
        Resampling::Random => {
            let key = derive_seed(seed, domain::BOOTSTRAP_INDEX, &[n_s as u64, replicate as u64]);
            let idx = bootstrap_indices(source.n(), n_s, key).map_err(|e| lpp_err("bootstrap", e))?;
            let seeds = (0..m)
                .map(|i| derive_seed(seed, domain::BOOTSTRAP_GRAPH, &[n_s as u64, replicate as u64, i as u64]))
                .collect();
            (idx, seeds)
        }
        Resampling::Identity => {
            if n_s > source.n() {
                return Err(PipelineError::config("bootstrap", "identity resampling needs n_s <= n"));
            }
            ((0..n_s).collect(), (0..m).map(|i| graph_seed(seed, i)).collect())
        }
    };
    let set = resample_rows(source, &indices).map_err(|e| lpp_err("bootstrap", e))?;
    let (graphs, _) = sample_graphs_with(&set, &seeds)?;
    analyze(&graphs, settings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplicateSummary {
    pub n_s: usize,
    pub replicate: usize,
    pub trace_error: f64,
    pub sigmage_flags: Vec<f64>,
    pub regression_flags: Vec<f64>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BootstrapSummary {
    pub source_trace: Vec<f64>,
    pub times: Vec<f64>,
    pub replicates: Vec<ReplicateSummary>,
    /// Median aligned trace error per sample size, in `n_s` order.
    pub median_error: Vec<(usize, f64)>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Bootstrap study: the source trace (graphs sampled from the source
/// latents at the configured seed), then `replicates` resampled runs for
/// each `n_s`. Writes `bootstrap/source.csv`, one ISOMAP CSV per replicate,
/// `bootstrap/summary.json`, and `manifest.json`.
pub fn run_bootstrap(
    cfg: &PipelineConfig,
    n_s_list: &[usize],
    replicates: usize,
    resampling: Resampling,
) -> Result<BootstrapSummary, PipelineError> {
    cfg.validate()?;
    if n_s_list.is_empty() || replicates == 0 {
        return Err(PipelineError::config("bootstrap", "need at least one sample size and one replicate"));
    }
    let settings = cfg.settings();
    let seed = cfg.seed.unwrap_or(0);
    let source = bootstrap_source(cfg)?;
    let (graphs, _) = sample_graphs(&source, seed)?;
    let reference = analyze(&graphs, &settings)?;

    let root = cfg.output_dir.join("bootstrap");
    create_dir("bootstrap", &root)?;
    let mut files = Vec::new();
    let p = root.join("source.csv");
    write_isomap_csv(&p, &reference.isomap).map_err(|e| mirror_err("bootstrap", e))?;
    files.push(p);

    let jobs: Vec<(usize, usize)> = n_s_list
        .iter()
        .flat_map(|&n_s| (0..replicates).map(move |r| (n_s, r)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(n_s, r)| bootstrap_replicate(&source, &settings, seed, n_s, r, resampling))
        .collect::<Result<Vec<_>, _>>()?;

    let mut summaries = Vec::with_capacity(jobs.len());
    for (&(n_s, r), a) in jobs.iter().zip(&results) {
        let dir = root.join(format!("n_{n_s}"));
        create_dir("bootstrap", &dir)?;
        let p = dir.join(format!("replicate_{r:03}.csv"));
        write_isomap_csv(&p, &a.isomap).map_err(|e| mirror_err("bootstrap", e))?;
        let s = summary_of(a);
        summaries.push(ReplicateSummary {
            n_s,
            replicate: r,
            trace_error: aligned_trace_error(&reference.isomap.values, &a.isomap.values),
            sigmage_flags: s.sigmage_flags,
            regression_flags: s.regression_flags,
            file: format!("n_{n_s}/replicate_{r:03}.csv"),
        });
        files.push(p);
    }
    let median_error = n_s_list
        .iter()
        .map(|&n_s| {
            let errs: Vec<f64> = summaries.iter().filter(|s| s.n_s == n_s).map(|s| s.trace_error).collect();
            (n_s, median(&errs))
        })
        .collect();
    let summary = BootstrapSummary {
        source_trace: reference.isomap.values.clone(),
        times: reference.isomap.grid.times().to_vec(),
        replicates: summaries,
        median_error,
    };
    let p = root.join("summary.json");
    write_json("bootstrap", &p, &summary)?;
    files.push(p);

    let mut manifest = manifest_for(cfg, summary_of(&reference));
    manifest.files = file_entries(&cfg.output_dir, &files)?;
    write_json("manifest", &cfg.output_dir.join("manifest.json"), &manifest)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drift_config(dir: &Path, n: usize, m: usize) -> PipelineConfig {
        PipelineConfig::from_json(
            &serde_json::json!({
                "input": {"simulate": {"process": {"type": "bm_drift", "drift": "linear"},
                                        "grid": {"integers": m}, "n": n}},
                "d": 1, "c": 1, "seed": 11,
                "outputDir": dir,
            })
            .to_string(),
        )
        .unwrap()
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = drift_config(Path::new("/tmp/x"), 10, 6);
        assert_eq!(cfg.isomap_k, 5);
        assert_eq!(cfg.changepoint, ChangepointConfig::default());
        assert!(cfg.scaled && !cfg.refine);
        let v = serde_json::to_value(&cfg).unwrap();
        assert_eq!(v["c"], 1);
        assert_eq!(v["cThreshold"], 0.95);

        let auto: PipelineConfig = serde_json::from_value(serde_json::json!({
            "input": {"load": "graphs"}, "c": "auto", "outputDir": "o"
        }))
        .unwrap();
        assert_eq!(auto.c, DimensionSetting::Auto);
        assert_eq!(serde_json::to_value(auto.c).unwrap(), "auto");

        let no_seed = serde_json::json!({
            "input": {"simulate": {"process": {"type": "sbm", "block_sizes": [3, 3]}, "grid": {"integers": 3}}},
            "outputDir": "o"
        });
        let err = PipelineConfig::from_json(&no_seed.to_string()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(PipelineConfig::from_json(r#"{"input":{"load":"g"},"outputDir":"o","bogus":1}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"input":{"load":"g"},"outputDir":"o","c":"many"}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"input":{"load":"g"},"outputDir":"o","d":0}"#).is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = drift_config(Path::new("/tmp/a"), 10, 6);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.refine = true;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn small_pipeline_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_pipeline(&drift_config(dir.path(), 120, 8)).unwrap();
        for f in ["distances.csv", "scree.csv", "mirror.csv", "isomap.csv", "sigmage.json", "regression_band.json", "manifest.json"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        assert_eq!(fs::read_dir(dir.path().join("embeddings")).unwrap().count(), 16);
        let listed: Vec<&str> = out.manifest.files.iter().map(|f| f.path.as_str()).collect();
        assert!(listed.contains(&"embeddings/embedding_0007.json"));
        assert!(listed.contains(&"mirror.csv"));
        for entry in &out.manifest.files {
            let bytes = fs::read(dir.path().join(&entry.path)).unwrap();
            assert_eq!(hex::encode(Sha256::digest(&bytes)), entry.sha256);
        }
        let mirror = fs::read_to_string(dir.path().join("mirror.csv")).unwrap();
        assert_eq!(mirror.lines().count(), 9);
    }

    #[test]
    fn partition_runs_each_community() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = drift_config(&dir.path().join("out"), 60, 7);
        let part = dir.path().join("part.csv");
        let rows: Vec<Vec<f64>> = (0..60).map(|j| vec![j as f64, (j % 2) as f64]).collect();
        table::write(&part, &["node".into(), "community".into()], &rows).unwrap();
        cfg.partition = Some(part);
        let out = run_pipeline(&cfg).unwrap();
        assert_eq!(out.manifest.communities.len(), 2);
        assert!(dir.path().join("out/community_1/isomap.csv").exists());
        assert!(out.manifest.files.iter().any(|f| f.path == "community_0/mirror.csv"));
    }

    #[test]
    fn bad_partition_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.csv");
        fs::write(&p, "node,community\n0,1\n0,2\n").unwrap();
        let err = read_partition(&p, 5).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        fs::write(&p, "node,community\n9,1\n").unwrap();
        assert!(read_partition(&p, 5).is_err());
    }

    #[test]
    fn loaded_identical_snapshots_are_at_distance_zero() {
        let dir = tempfile::tempdir().unwrap();
        let g = GraphSnapshot::new(0.0, 6, vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (0, 3)]).unwrap();
        let graphs = vec![g.clone(), g.with_time(1.0)];
        write_snapshot_dir(&dir.path().join("g"), &graphs).unwrap();
        let cfg = PipelineConfig::from_json(
            &serde_json::json!({"input": {"load": dir.path().join("g")}, "d": 1, "outputDir": dir.path().join("o")})
                .to_string(),
        )
        .unwrap();
        let out = run_pipeline(&cfg).unwrap();
        let d = out.analysis.distances.values();
        assert!(d[(0, 1)] <= 1e-12 && d[(1, 0)] <= 1e-12);
        assert!(out.analysis.sigmage.is_none());
        assert!(!out.manifest.summary.warnings.is_empty());
    }

    #[test]
    fn error_json_names_stage_and_category() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::from_json(
            &serde_json::json!({"input": {"load": dir.path().join("missing")}, "outputDir": dir.path()}).to_string(),
        )
        .unwrap();
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.stage, "load");
        assert_eq!(err.exit_code(), 3);
        let v: serde_json::Value = serde_json::from_str(&err.to_json()).unwrap();
        assert_eq!(v["error"]["category"], "data");
    }

    #[test]
    fn aligned_error_ignores_sign_and_shift() {
        let a = [0.0, 1.0, 3.0, 2.0];
        let b: Vec<f64> = a.iter().map(|v| 5.0 - v).collect();
        assert!(aligned_trace_error(&a, &b) < 1e-15);
        assert!(aligned_trace_error(&a, &[0.0, 0.0, 0.0, 0.0]) > 0.5);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn identity_bootstrap_reproduces_the_source_trace() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = drift_config(dir.path(), 80, 8);
        let summary = run_bootstrap(&cfg, &[80], 1, Resampling::Identity).unwrap();
        assert!(summary.replicates[0].trace_error <= 1e-9);
        let direct = run_pipeline(&drift_config(&dir.path().join("p"), 80, 8)).unwrap();
        for (x, y) in summary.source_trace.iter().zip(&direct.analysis.isomap.values) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!(dir.path().join("bootstrap/n_80/replicate_000.csv").exists());
    }
}
