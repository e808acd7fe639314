//! Minimal numeric CSV tables: one header line, comma-separated values,
//! LF line endings. Floats are written with Rust's shortest round-trip
//! formatting so artifacts are byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{file}: line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

/// A parsed numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn render(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<(), TableError> {
    fs::write(path, render(header, rows)).map_err(|source| TableError::Io {
        file: path.display().to_string(),
        source,
    })
}

pub fn parse(text: &str, file: &str) -> Result<Table, TableError> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| TableError::Parse {
            file: file.to_string(),
            line: 1,
            message: "empty table".into(),
        })?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| TableError::Parse {
                file: file.to_string(),
                line: idx + 2,
                message: e.to_string(),
            })?;
        if row.len() != header.len() {
            return Err(TableError::Parse {
                file: file.to_string(),
                line: idx + 2,
                message: format!("{} fields, header has {}", row.len(), header.len()),
            });
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read(path: &Path) -> Result<Table, TableError> {
    let file = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| TableError::Io {
        file: file.clone(),
        source,
    })?;
    parse(&text, &file)
}

/// `["node", "x1", ..., "xd"]`
pub fn node_header(d: usize) -> Vec<String> {
    std::iter::once("node".to_string())
        .chain((1..=d).map(|k| format!("x{k}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_and_parse() {
        let header = node_header(2);
        let rows = vec![vec![0.0, 0.1, -2.5], vec![1.0, 1e-7, 3.0]];
        let text = render(&header, &rows);
        assert_eq!(text, "node,x1,x2\n0,0.1,-2.5\n1,0.0000001,3\n");
        let t = parse(&text, "mem").unwrap();
        assert_eq!(t.header, header);
        assert_eq!(t.rows, rows);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(matches!(
            parse("a,b\n1,2\n3\n", "mem"),
            Err(TableError::Parse { line: 3, .. })
        ));
        assert!(matches!(parse("a\nx\n", "mem"), Err(TableError::Parse { line: 2, .. })));
    }
}
