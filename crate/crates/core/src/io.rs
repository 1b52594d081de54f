//! CSV and JSON files. Every write goes to a temporary file in the target
//! directory and is renamed into place, so failed runs leave nothing behind.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::estimator::{EstimatorError, Sample, VarianceEstimate};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Sample {
        path: PathBuf,
        #[source]
        source: EstimatorError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a two-column CSV with the exact header `expected` into columns.
pub fn read_columns(path: &Path, expected: [&str; 2]) -> Result<(Vec<f64>, Vec<f64>), IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() != 2 || header[0] != *expected[0] || header[1] != *expected[1] {
        return Err(IoError::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("`{s}` is not a number"),
            })
        };
        a.push(parse(&rec[0])?);
        b.push(parse(&rec[1])?);
    }
    Ok((a, b))
}

/// Reads `x,y` data.
pub fn read_sample_csv(path: &Path) -> Result<Sample, IoError> {
    let (xs, ys) = read_columns(path, ["x", "y"])?;
    Sample::new(xs, ys).map_err(|source| IoError::Sample {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// CSV text with a header row; floats use the shortest round-tripping form.
pub fn columns_to_csv(header: &[&str], columns: &[&[f64]]) -> Vec<u8> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).expect("in-memory write");
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        wtr.write_record(columns.iter().map(|c| c[i].to_string()))
            .expect("in-memory write");
    }
    wtr.into_inner().expect("in-memory write")
}

pub fn estimate_to_csv(est: &VarianceEstimate) -> Vec<u8> {
    columns_to_csv(&["x", "vhat"], &[&est.grid, &est.values])
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("reports serialize");
    v.push(b'\n');
    v
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    atomic_write(path, &to_json_bytes(value))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let xs = vec![0.1, 1.0 / 3.0, 0.7];
        let ys = vec![-2.5e-300, std::f64::consts::PI, 1e17];
        atomic_write(&p, &columns_to_csv(&["x", "y"], &[&xs, &ys])).unwrap();
        let s = read_sample_csv(&p).unwrap();
        assert_eq!(s.xs(), xs.as_slice());
        assert_eq!(s.ys(), ys.as_slice());
    }

    #[test]
    fn malformed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,b\n0.1,2\n").unwrap();
        assert!(matches!(read_sample_csv(&p), Err(IoError::Header { .. })));
        std::fs::write(&p, "x,y\n0.1,2\n0.2,abc\n").unwrap();
        assert!(matches!(read_sample_csv(&p), Err(IoError::Parse { line: 3, .. })));
        std::fs::write(&p, "x,y\n0.3,2\n0.2,1\n").unwrap();
        assert!(matches!(read_sample_csv(&p), Err(IoError::Sample { .. })));
        assert!(matches!(read_sample_csv(&dir.path().join("none.csv")), Err(IoError::Io { .. })));
    }
}
