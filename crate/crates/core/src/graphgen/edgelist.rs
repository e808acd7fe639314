//! Edge-list files: a `# t=<time> n=<count>` header followed by one
//! `i<TAB>j` line per edge, `i < j`, sorted.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{GraphError, GraphSnapshot};

pub fn format_edge_list(g: &GraphSnapshot) -> String {
    let mut out = String::with_capacity(16 + 12 * g.edge_count());
    writeln!(out, "# t={} n={}", g.time(), g.n()).unwrap();
    for &(i, j) in g.edges() {
        writeln!(out, "{i}\t{j}").unwrap();
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_edge_list(text: &str) -> Result<GraphSnapshot, GraphError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header
        .strip_prefix("# ")
        .ok_or_else(|| parse_err(1, "missing '# t=<time> n=<count>' header"))?;
    let mut time = None;
    let mut n = None;
    for field in header.split_whitespace() {
        if let Some(v) = field.strip_prefix("t=") {
            time = Some(v.parse::<f64>().map_err(|e| parse_err(1, format!("bad time: {e}")))?);
        } else if let Some(v) = field.strip_prefix("n=") {
            n = Some(v.parse::<usize>().map_err(|e| parse_err(1, format!("bad count: {e}")))?);
        }
    }
    let time = time.ok_or_else(|| parse_err(1, "header lacks t="))?;
    let n = n.ok_or_else(|| parse_err(1, "header lacks n="))?;

    let mut edges = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let mut node = |what: &str| -> Result<usize, GraphError> {
            parts
                .next()
                .ok_or_else(|| parse_err(idx + 1, format!("missing {what} endpoint")))?
                .trim()
                .parse::<usize>()
                .map_err(|e| parse_err(idx + 1, format!("bad {what} endpoint: {e}")))
        };
        let i = node("first")?;
        let j = node("second")?;
        edges.push((i, j));
    }
    GraphSnapshot::new(time, n, edges)
}

pub fn write_edge_list(g: &GraphSnapshot, path: &Path) -> Result<(), GraphError> {
    fs::write(path, format_edge_list(g))?;
    Ok(())
}

pub fn read_edge_list(path: &Path) -> Result<GraphSnapshot, GraphError> {
    parse_edge_list(&fs::read_to_string(path)?)
}

/// Writes `snapshot_0000.tsv`, `snapshot_0001.tsv`, ... and returns the paths.
pub fn write_snapshot_dir(dir: &Path, graphs: &[GraphSnapshot]) -> Result<Vec<PathBuf>, GraphError> {
    fs::create_dir_all(dir)?;
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let path = dir.join(format!("snapshot_{i:04}.tsv"));
            write_edge_list(g, &path)?;
            Ok(path)
        })
        .collect()
}

/// Reads every `*.tsv` edge list in `dir`, ordered by time (ties by file
/// name).
pub fn read_snapshot_dir(dir: &Path) -> Result<Vec<GraphSnapshot>, GraphError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    paths.sort();
    let mut graphs = paths
        .iter()
        .map(|p| read_edge_list(p))
        .collect::<Result<Vec<_>, _>>()?;
    graphs.sort_by(|a, b| a.time().total_cmp(&b.time()));
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_text_format() {
        let g = GraphSnapshot::new(2.5, 4, [(3, 1), (0, 2), (0, 1)]).unwrap();
        assert_eq!(format_edge_list(&g), "# t=2.5 n=4\n0\t1\n0\t2\n1\t3\n");
    }

    #[test]
    fn parse_round_trip() {
        let g = GraphSnapshot::new(0.1, 6, [(0, 5), (2, 3)]).unwrap();
        assert_eq!(parse_edge_list(&format_edge_list(&g)).unwrap(), g);
        let empty = GraphSnapshot::empty(1.0, 1);
        assert_eq!(parse_edge_list(&format_edge_list(&empty)).unwrap(), empty);
    }

    #[test]
    fn parse_errors_name_the_line() {
        assert!(matches!(parse_edge_list("0\t1\n"), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_edge_list("# t=0 n=3\n0\t1\n0 x\n"),
            Err(GraphError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_edge_list("# t=0 n=3\n0\t7\n"),
            Err(GraphError::NodeOutOfRange { node: 7, n: 3 })
        ));
    }

    #[test]
    fn directory_round_trip_orders_by_time() {
        let dir = tempfile::tempdir().unwrap();
        let graphs = vec![
            GraphSnapshot::complete(0.0, 3),
            GraphSnapshot::new(1.0, 3, [(0, 1)]).unwrap(),
        ];
        write_snapshot_dir(dir.path(), &graphs).unwrap();
        assert_eq!(read_snapshot_dir(dir.path()).unwrap(), graphs);
    }
}
