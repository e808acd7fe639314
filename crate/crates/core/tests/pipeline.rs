use std::fs;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use netmirror::embed::{write_embedding_dir, EmbeddingMatrix};
use netmirror::graphgen::{write_snapshot_dir, GraphSnapshot};
use netmirror::lpp::{LatentTrajectorySet, TimeGrid};
use netmirror::mirror::{read_distance_csv, read_mirror_csv};
use netmirror::pipeline::{
    bootstrap_replicate, run_pipeline, AnalysisSettings, ChangepointConfig, DimensionSetting, PipelineConfig,
    Resampling,
};

fn config(value: serde_json::Value) -> PipelineConfig {
    PipelineConfig::from_json(&value.to_string()).unwrap()
}

#[test]
fn linear_drift_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(serde_json::json!({
        "input": {"simulate": {"process": {"type": "bm_drift", "drift": "linear"},
                                "grid": {"integers": 30}, "n": 2000}},
        "d": 1, "c": 1, "seed": 11, "outputDir": dir.path(),
    }));
    let outcome = run_pipeline(&cfg).unwrap();
    let root = dir.path();
    for f in ["distances.csv", "scree.csv", "mirror.csv", "isomap.csv", "sigmage.json", "regression_band.json", "manifest.json"] {
        assert!(root.join(f).is_file(), "{f} missing");
    }
    assert_eq!(fs::read_dir(root.join("embeddings")).unwrap().count(), 60);
    let (grid, coords) = read_mirror_csv(&root.join("mirror.csv")).unwrap();
    assert_eq!((grid.len(), coords.nrows(), coords.ncols()), (30, 30, 1));

    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["configSha256"], cfg.hash());
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), outcome.manifest.files.len());
    assert_eq!(files.len(), 66);
    for f in files {
        let bytes = fs::read(root.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn identical_loaded_snapshots_are_at_distance_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let edges: Vec<(usize, usize)> = (0..40)
        .flat_map(|i| ((i + 1)..40).map(move |j| (i, j)))
        .filter(|_| rng.random_bool(0.4))
        .collect();
    let graphs: Vec<GraphSnapshot> = (1..=2)
        .map(|t| GraphSnapshot::new(t as f64, 40, edges.clone()).unwrap())
        .collect();
    write_snapshot_dir(&dir.path().join("graphs"), &graphs).unwrap();
    let cfg = config(serde_json::json!({
        "input": {"load": dir.path().join("graphs")}, "outputDir": dir.path().join("out"),
    }));
    run_pipeline(&cfg).unwrap();
    let d = read_distance_csv(&dir.path().join("out/distances.csv")).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.values()[(0, 0)], 0.0);
    assert!(d.values()[(0, 1)] <= 1e-12);
}

/// One-dimensional embeddings `x_t = b + sqrt(n) (p_t1 e1 + p_t2 e2)` with
/// `b` large and `e1`, `e2` orthonormal have estimated distances equal to
/// the planar distances `|p_t - p_s|`, so the distance matrix has rank two.
#[test]
fn auto_dimension_on_exact_rank_two_input_records_two() {
    let dir = tempfile::tempdir().unwrap();
    let (n, m) = (60, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let basis = DMatrix::<f64>::from_fn(n, 2, |_, _| rng.sample(StandardNormal)).qr().q();
    let points = DMatrix::<f64>::from_fn(m, 2, |_, _| rng.sample(StandardNormal));
    let embeddings: Vec<EmbeddingMatrix> = (0..m)
        .map(|t| {
            let offset = &basis * points.row(t).transpose() * (n as f64).sqrt();
            EmbeddingMatrix {
                time: (t + 1) as f64,
                rows: DMatrix::from_fn(n, 1, |i, _| 20.0 + offset[i]),
                eigenvalues: vec![1.0],
                scaled: true,
            }
        })
        .collect();
    write_embedding_dir(&dir.path().join("emb"), &embeddings).unwrap();
    let cfg = config(serde_json::json!({
        "input": {"embeddings": dir.path().join("emb")}, "c": "auto", "outputDir": dir.path().join("out"),
    }));
    let outcome = run_pipeline(&cfg).unwrap();
    assert_eq!(outcome.manifest.summary.c, 2);
    for i in 0..m {
        for j in 0..m {
            let planar = (points.row(i) - points.row(j)).norm();
            assert!((outcome.analysis.distances.values()[(i, j)] - planar).abs() <= 1e-9);
        }
    }
    let scree = &outcome.analysis.mirror.scree;
    assert!(scree[2].abs() <= 1e-9 * scree[0]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["summary"]["c"], 2);
}

#[test]
fn partition_requires_graph_input() {
    let dir = tempfile::tempdir().unwrap();
    let json = serde_json::json!({
        "input": {"embeddings": dir.path()}, "partition": dir.path().join("p.csv"), "outputDir": dir.path(),
    });
    assert_eq!(PipelineConfig::from_json(&json.to_string()).unwrap_err().exit_code(), 2);
}

/// Drifting latents `a(t) v + sigma B_t` whose drift jumps by `jump` at
/// month `change`.
fn jump_source(n: usize, months: usize, change: usize, jump: f64, seed: u64) -> LatentTrajectorySet {
    let grid = TimeGrid::integers(months).unwrap();
    let v = [std::f64::consts::FRAC_1_SQRT_2; 2];
    let sigma = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walk = DMatrix::<f64>::zeros(n, 2);
    let snapshots = grid
        .times()
        .iter()
        .map(|&t| {
            walk += DMatrix::from_fn(n, 2, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
            let a = 0.02 * t + 0.1 + if t >= change as f64 { jump } else { 0.0 };
            DMatrix::from_fn(n, 2, |i, k| a * v[k] + walk[(i, k)])
        })
        .collect();
    LatentTrajectorySet::new(grid, snapshots).unwrap()
}

#[test]
fn bootstrap_replicates_flag_injected_change_month() {
    let change = 15;
    let source = jump_source(2000, 24, change, 0.2, 21);
    let settings = AnalysisSettings {
        d: 1,
        c: DimensionSetting::Fixed(1),
        changepoint: ChangepointConfig { w: 5, threshold: 5.0, multiplier: 5.0 },
        ..AnalysisSettings::default()
    };
    let hits = (0..100)
        .filter(|&r| {
            let a = bootstrap_replicate(&source, &settings, 77, 600, r, Resampling::Random).unwrap();
            a.sigmage.unwrap().flagged_times().contains(&(change as f64))
        })
        .count();
    assert!(hits >= 90, "change month flagged in {hits}/100 replicates");
}
