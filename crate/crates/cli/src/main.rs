//! Command-line front end: individual stages as subcommands plus the full
//! pipeline and bootstrap runs. Failures print a JSON error object to
//! standard error and exit with 2 (configuration), 3 (data) or 4
//! (numerical).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use netmirror::changepoint::{regression_band_scan, sigmage_scan, write_report_json};
use netmirror::embed::{read_embedding_dir, write_embedding_dir};
use netmirror::graphgen::read_snapshot_dir;
use netmirror::mirror::{
    distance_matrix, isomap_points, read_distance_csv, read_isomap_csv, read_mirror_csv,
    write_distance_csv, write_isomap_csv, write_mirror_csv, write_scree_csv, write_warnings,
};
use netmirror::pipeline::{
    analyze_distances, changepoint_err, embed_all, embed_err, graph_err, io_err, mirror_err,
    run_bootstrap, run_pipeline, run_simulate, AnalysisSettings, ChangepointConfig, DimensionSetting,
    PipelineConfig, PipelineError, Resampling,
};

#[derive(Parser)]
#[command(name = "netmirror", version, about = "Euclidean mirrors of network time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate latent trajectories and write them with the sampled graphs.
    Simulate(RunArgs),
    /// Adjacency spectral embedding of every snapshot in a directory.
    Embed {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Use unit eigenvectors instead of scaling by sqrt(eigenvalue).
        #[arg(long)]
        unscaled: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise distance matrix between embeddings.
    Distances {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        refine: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classical multidimensional scaling of a distance matrix.
    Mirror {
        #[arg(long)]
        distances: PathBuf,
        /// Mirror dimension, or "auto".
        #[arg(long, default_value = "1")]
        c: String,
        #[arg(long, default_value_t = 0.95)]
        c_threshold: f64,
        /// Output directory for mirror.csv and scree.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// One-dimensional ISOMAP of a mirror CSV.
    Isomap {
        #[arg(long)]
        mirror: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sigmage and regression-band scans of an ISOMAP trace.
    Changepoint {
        #[arg(long)]
        isomap: PathBuf,
        #[arg(long, default_value_t = 5)]
        w: usize,
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        #[arg(long, default_value_t = 5.0)]
        multiplier: f64,
        /// Output directory for the two JSON reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full run from graphs (simulated or loaded) to change-point reports.
    Pipeline(RunArgs),
    /// Row-bootstrap study of the ISOMAP trace.
    Bootstrap {
        #[command(flatten)]
        run: RunArgs,
        /// Bootstrap sample sizes.
        #[arg(long = "n-s", value_delimiter = ',', required = true)]
        n_s: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        replicates: usize,
        /// Reuse rows 0..n_s and the source graph seeds instead of resampling.
        #[arg(long)]
        identity: bool,
    },
}

/// Flags mirroring the pipeline configuration. Values from `--config`
/// override them.
#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of edge-list snapshots to analyze.
    #[arg(long, conflicts_with = "process")]
    load: Option<PathBuf>,
    /// Directory of precomputed embeddings to analyze.
    #[arg(long, conflicts_with_all = ["process", "load"])]
    embeddings: Option<PathBuf>,
    /// bm_drift, integrated_bm, sbm or archive.
    #[arg(long)]
    process: Option<String>,
    /// Drift preset for bm_drift: linear or quadratic.
    #[arg(long)]
    drift: Option<String>,
    /// Grid of times 1..=COUNT.
    #[arg(long)]
    grid_integers: Option<usize>,
    /// Grid as START,END,COUNT.
    #[arg(long, value_delimiter = ',')]
    grid_linspace: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    block_sizes: Option<Vec<usize>>,
    /// Latent archive directory for the archive process.
    #[arg(long)]
    archive: Option<PathBuf>,
    #[arg(long)]
    ibm_a: Option<f64>,
    #[arg(long)]
    ibm_b: Option<f64>,
    #[arg(long)]
    ibm_sigma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    ibm_v: Option<Vec<f64>>,
    #[arg(long)]
    d: Option<usize>,
    /// Mirror dimension, or "auto".
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    c_threshold: Option<f64>,
    #[arg(long)]
    unscaled: bool,
    #[arg(long)]
    refine: bool,
    #[arg(long)]
    isomap_k: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    multiplier: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    partition: Option<PathBuf>,
}

fn dimension_value(c: &str) -> Value {
    c.parse::<u64>().map(Value::from).unwrap_or_else(|_| Value::from(c))
}

fn insert<T: Into<Value>>(map: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), v.into());
    }
}

fn path_value(p: &Path) -> Value {
    Value::from(p.to_string_lossy().into_owned())
}

impl RunArgs {
    fn process_value(&self) -> Option<Value> {
        let kind = self.process.as_deref()?;
        let mut p = Map::new();
        p.insert("type".into(), kind.into());
        match kind {
            "bm_drift" => {
                p.insert("drift".into(), self.drift.clone().unwrap_or_else(|| "linear".into()).into());
            }
            "integrated_bm" => {
                insert(&mut p, "a", self.ibm_a);
                insert(&mut p, "b", self.ibm_b);
                insert(&mut p, "sigma", self.ibm_sigma);
                insert(&mut p, "v", self.ibm_v.clone());
            }
            "sbm" => insert(&mut p, "block_sizes", self.block_sizes.clone()),
            "archive" => insert(&mut p, "dir", self.archive.as_deref().map(path_value)),
            _ => {}
        }
        Some(Value::Object(p))
    }

    fn to_value(&self) -> Value {
        let mut m = Map::new();
        if let Some(dir) = &self.load {
            m.insert("input".into(), json!({ "load": path_value(dir) }));
        } else if let Some(dir) = &self.embeddings {
            m.insert("input".into(), json!({ "embeddings": path_value(dir) }));
        } else if let Some(process) = self.process_value() {
            let mut sim = Map::new();
            sim.insert("process".into(), process);
            if let Some(count) = self.grid_integers {
                sim.insert("grid".into(), json!({ "integers": count }));
            } else if let Some(l) = &self.grid_linspace {
                sim.insert("grid".into(), json!({ "linspace": { "start": l[0], "end": l[1], "count": l[2] as usize } }));
            }
            insert(&mut sim, "n", self.n);
            m.insert("input".into(), json!({ "simulate": sim }));
        }
        insert(&mut m, "d", self.d);
        insert(&mut m, "c", self.c.as_deref().map(dimension_value));
        insert(&mut m, "cThreshold", self.c_threshold);
        if self.unscaled {
            m.insert("scaled".into(), false.into());
        }
        if self.refine {
            m.insert("refine".into(), true.into());
        }
        insert(&mut m, "isomapK", self.isomap_k);
        let mut cp = Map::new();
        insert(&mut cp, "w", self.w);
        insert(&mut cp, "threshold", self.threshold);
        insert(&mut cp, "multiplier", self.multiplier);
        if !cp.is_empty() {
            m.insert("changepoint".into(), Value::Object(cp));
        }
        insert(&mut m, "seed", self.seed);
        insert(&mut m, "outputDir", self.output_dir.as_deref().map(path_value));
        insert(&mut m, "partition", self.partition.as_deref().map(path_value));
        Value::Object(m)
    }

    /// Flags first, then the config file on top: file values win, and the
    /// change-point block is merged field by field.
    fn build(&self) -> Result<PipelineConfig, PipelineError> {
        if self.grid_linspace.as_ref().is_some_and(|l| l.len() != 3) {
            return Err(PipelineError::config("config", "--grid-linspace takes START,END,COUNT"));
        }
        let mut merged = self.to_value();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::config("config", format!("{}: {e}", path.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| PipelineError::config("config", format!("{}: {e}", path.display())))?;
            let Value::Object(file) = file else {
                return Err(PipelineError::config("config", "config file must hold a JSON object"));
            };
            let target = merged.as_object_mut().expect("flags form an object");
            for (k, v) in file {
                match (target.get_mut(&k), v) {
                    (Some(Value::Object(old)), Value::Object(new)) if k == "changepoint" => old.extend(new),
                    (_, v) => {
                        target.insert(k, v);
                    }
                }
            }
        }
        PipelineConfig::from_json(&merged.to_string())
    }
}

fn parse_dimension(c: &str) -> Result<DimensionSetting, PipelineError> {
    serde_json::from_value(dimension_value(c)).map_err(|e| PipelineError::config("config", e.to_string()))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string(v).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = args.build()?;
            let files = run_simulate(&cfg)?;
            print_json(&json!({ "outputDir": path_value(&cfg.output_dir), "files": files.len() }));
        }
        Command::Embed { graphs, d, unscaled, out } => {
            let snaps = read_snapshot_dir(&graphs).map_err(|e| graph_err("load", e))?;
            let (emb, warnings) = embed_all(&snaps, d, !unscaled)?;
            write_embedding_dir(&out, &emb).map_err(embed_err)?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            print_json(&json!({ "snapshots": emb.len(), "warnings": warnings }));
        }
        Command::Distances { embeddings, refine, out } => {
            let emb = read_embedding_dir(&embeddings).map_err(embed_err)?;
            let d = distance_matrix(&emb, refine).map_err(|e| mirror_err("distances", e))?;
            write_distance_csv(&out, &d).map_err(|e| mirror_err("distances", e))?;
            print_json(&json!({ "times": d.len() }));
        }
        Command::Mirror { distances, c, c_threshold, out } => {
            let d = read_distance_csv(&distances).map_err(|e| mirror_err("mirror", e))?;
            let settings = AnalysisSettings {
                c: parse_dimension(&c)?,
                c_threshold,
                ..AnalysisSettings::default()
            };
            let analysis = analyze_distances(d, &settings)?;
            let (mirror, stress) = (analysis.mirror, analysis.stress);
            std::fs::create_dir_all(&out).map_err(|e| io_err("mirror", &out, e))?;
            let wrap = |e| mirror_err("mirror", e);
            write_mirror_csv(&out.join("mirror.csv"), &mirror).map_err(wrap)?;
            write_scree_csv(&out.join("scree.csv"), &mirror.scree).map_err(wrap)?;
            write_warnings(&out.join("warnings.txt"), &mirror.warnings).map_err(wrap)?;
            print_json(&json!({ "c": mirror.c, "stress": stress, "warnings": mirror.warnings }));
        }
        Command::Isomap { mirror, k, out } => {
            let (grid, coords) = read_mirror_csv(&mirror).map_err(|e| mirror_err("isomap", e))?;
            let trace = isomap_points(&grid, &coords, k).map_err(|e| mirror_err("isomap", e))?;
            write_isomap_csv(&out, &trace).map_err(|e| mirror_err("isomap", e))?;
            print_json(&json!({ "times": trace.values.len() }));
        }
        Command::Changepoint { isomap, w, threshold, multiplier, out } => {
            let cp = ChangepointConfig { w, threshold, multiplier };
            let trace = read_isomap_csv(&isomap).map_err(|e| mirror_err("changepoint", e))?;
            let s = sigmage_scan(&trace, cp.w, cp.threshold).map_err(changepoint_err)?;
            let r = regression_band_scan(&trace, cp.w, cp.multiplier).map_err(changepoint_err)?;
            std::fs::create_dir_all(&out).map_err(|e| io_err("changepoint", &out, e))?;
            write_report_json(&out.join("sigmage.json"), &s).map_err(changepoint_err)?;
            write_report_json(&out.join("regression_band.json"), &r).map_err(changepoint_err)?;
            print_json(&json!({ "sigmageFlags": s.flagged_times(), "regressionFlags": r.flagged_times() }));
        }
        Command::Pipeline(args) => {
            let cfg = args.build()?;
            let out = run_pipeline(&cfg)?;
            let s = &out.manifest.summary;
            print_json(&json!({
                "outputDir": path_value(&cfg.output_dir),
                "c": s.c,
                "sigmageFlags": s.sigmage_flags,
                "regressionFlags": s.regression_flags,
                "warnings": s.warnings,
            }));
        }
        Command::Bootstrap { run, n_s, replicates, identity } => {
            let cfg = run.build()?;
            let resampling = if identity { Resampling::Identity } else { Resampling::Random };
            let summary = run_bootstrap(&cfg, &n_s, replicates, resampling)?;
            print_json(&json!({ "medianError": summary.median_error }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
