//! Trajectory archive: `latent_<i>.csv` (`node,x1..xd`) per grid time plus
//! `manifest.json`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LatentTrajectorySet, LppError, TimeGrid};
use crate::table::{self, TableError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub times: Vec<f64>,
    pub horizon: f64,
    pub d: usize,
    pub n: usize,
    pub seed: Option<u64>,
    /// Free-form description of the generating process.
    pub spec: serde_json::Value,
    pub files: Vec<String>,
}

fn table_err(e: TableError) -> LppError {
    match e {
        TableError::Parse {
            file,
            line,
            message,
        } => LppError::Parse {
            file,
            line,
            message,
        },
        TableError::Io { source, .. } => LppError::Io(source),
    }
}

fn file_name(i: usize) -> String {
    format!("latent_{i:04}.csv")
}

pub fn write_archive(
    dir: &Path,
    set: &LatentTrajectorySet,
    seed: Option<u64>,
    spec: serde_json::Value,
) -> Result<ArchiveManifest, LppError> {
    fs::create_dir_all(dir)?;
    let header = table::node_header(set.dim());
    let mut files = Vec::new();
    for (i, snap) in set.snapshots().iter().enumerate() {
        let rows: Vec<Vec<f64>> = (0..snap.nrows())
            .map(|j| {
                std::iter::once(j as f64)
                    .chain(snap.row(j).iter().copied())
                    .collect()
            })
            .collect();
        let name = file_name(i);
        table::write(&dir.join(&name), &header, &rows).map_err(table_err)?;
        files.push(name);
    }
    let manifest = ArchiveManifest {
        times: set.grid().times().to_vec(),
        horizon: set.grid().horizon(),
        d: set.dim(),
        n: set.n(),
        seed,
        spec,
        files,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

pub fn read_archive(dir: &Path) -> Result<(LatentTrajectorySet, ArchiveManifest), LppError> {
    let manifest: ArchiveManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let grid = TimeGrid::new(manifest.times.clone(), manifest.horizon)?;
    if manifest.files.len() != grid.len() {
        return Err(LppError::ShapeMismatch(format!(
            "manifest lists {} files for {} times",
            manifest.files.len(),
            grid.len()
        )));
    }
    let mut snapshots = Vec::with_capacity(grid.len());
    for name in &manifest.files {
        let t = table::read(&dir.join(name)).map_err(table_err)?;
        if t.header.len() != manifest.d + 1 || t.rows.len() != manifest.n {
            return Err(LppError::ShapeMismatch(format!(
                "{name}: {} rows x {} columns, expected {} x {}",
                t.rows.len(),
                t.header.len(),
                manifest.n,
                manifest.d + 1
            )));
        }
        let mut m = DMatrix::zeros(manifest.n, manifest.d);
        for row in &t.rows {
            let j = row[0] as usize;
            if row[0] < 0.0 || row[0].fract() != 0.0 || j >= manifest.n {
                return Err(LppError::ShapeMismatch(format!("{name}: bad node id {}", row[0])));
            }
            for k in 0..manifest.d {
                m[(j, k)] = row[k + 1];
            }
        }
        snapshots.push(m);
    }
    Ok((LatentTrajectorySet::new(grid, snapshots)?, manifest))
}
