//! Input parsing and CSV/JSON emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rtrunc::Complex64;
use serde::de::DeserializeOwned;
use serde_json::Value;

pub const CSV_VERSION_LINE: &str = "# rtrunc-csv v1";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Compute(#[from] rtrunc::Error),
    #[error("{0}")]
    Usage(String),
    #[error("oracle cross-check failed: {0}")]
    Oracle(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Compute(_) => "compute",
            CliError::Usage(_) => "usage",
            CliError::Oracle(_) => "oracle",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn parse_err(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

pub fn read_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let v = read_json(path)?;
    serde_json::from_value(v).map_err(|e| parse_err(path, e.to_string()))
}

/// A flat array of reals or an array of `[re, im]` pairs.
pub fn parse_amplitudes(v: &Value, path: &Path) -> CliResult<Vec<Complex64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| parse_err(path, "expected an array of amplitudes"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| match x {
            Value::Number(n) => Ok(Complex64::new(n.as_f64().unwrap_or(f64::NAN), 0.0)),
            Value::Array(p) if p.len() == 2 => match (p[0].as_f64(), p[1].as_f64()) {
                (Some(re), Some(im)) => Ok(Complex64::new(re, im)),
                _ => Err(parse_err(
                    path,
                    format!("entry {i}: [re, im] must be numbers"),
                )),
            },
            _ => Err(parse_err(
                path,
                format!("entry {i}: expected a number or an [re, im] pair"),
            )),
        })
        .collect()
}

pub fn read_vector(path: &Path) -> CliResult<Vec<Complex64>> {
    parse_amplitudes(&read_json(path)?, path)
}

/// `{"dims": [a, b], "amplitudes": [...]}` with row-major amplitudes.
pub fn read_bipartite(path: &Path) -> CliResult<(usize, usize, Vec<Complex64>)> {
    let v = read_json(path)?;
    let dims = v
        .get("dims")
        .and_then(Value::as_array)
        .filter(|d| d.len() == 2)
        .and_then(|d| Some((d[0].as_u64()? as usize, d[1].as_u64()? as usize)))
        .ok_or_else(|| parse_err(path, "expected \"dims\": [a, b]"))?;
    let amps = v
        .get("amplitudes")
        .ok_or_else(|| parse_err(path, "missing \"amplitudes\""))?;
    Ok((dims.0, dims.1, parse_amplitudes(amps, path)?))
}

pub fn read_reals(path: &Path) -> CliResult<Vec<f64>> {
    let v = read_json(path)?;
    let arr = v
        .as_array()
        .ok_or_else(|| parse_err(path, "expected an array of numbers"))?;
    arr.iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| parse_err(path, format!("entry {i} is not a number")))
        })
        .collect()
}

/// A header plus rows, written after the version line.
#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_VERSION_LINE}").unwrap();
        writeln!(out, "{}", self.header.join(",")).unwrap();
        for r in &self.rows {
            writeln!(out, "{}", r.join(",")).unwrap();
        }
        out
    }

    /// Long form `row,col,re,im`.
    pub fn complex_matrix(m: &DMatrix<Complex64>) -> Self {
        let mut t = Table::new(&["row", "col", "re", "im"]);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                t.push(vec![i.to_string(), j.to_string(), num(z.re), num(z.im)]);
            }
        }
        t
    }

    /// Long form `row,col,value`.
    pub fn real_matrix(m: &DMatrix<f64>) -> Self {
        let mut t = Table::new(&["row", "col", "value"]);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                t.push(vec![i.to_string(), j.to_string(), num(m[(i, j)])]);
            }
        }
        t
    }

    /// One row per state: `sample,re_0,im_0,...`.
    pub fn states(states: &[Vec<Complex64>]) -> Self {
        let d = states.first().map_or(0, Vec::len);
        let mut header = vec![String::from("sample")];
        for i in 0..d {
            header.push(format!("re_{i}"));
            header.push(format!("im_{i}"));
        }
        let mut t = Table {
            header,
            rows: Vec::new(),
        };
        for (s, w) in states.iter().enumerate() {
            let mut row = vec![s.to_string()];
            for z in w {
                row.push(num(z.re));
                row.push(num(z.im));
            }
            t.push(row);
        }
        t
    }
}

/// Shortest round-trip representation, so output is reproducible.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
