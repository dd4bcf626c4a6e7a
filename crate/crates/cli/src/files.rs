//! CSV and JSON artifacts exchanged between subcommands.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use artic::contour::SyntheticTruth;
use artic::numkit::Mat;
use serde::{Deserialize, Serialize};

use crate::InvalidInput;

pub fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Header line then one comma-separated row per matrix row.
pub fn format_csv(header: &[String], m: &Mat) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

/// Parses a numeric CSV with a header line. Returns the header and the rows.
pub fn parse_csv(text: &str, what: &str) -> Result<(Vec<String>, Mat)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((_, head)) = lines.next() else {
        bail!(InvalidInput(format!("{what}: empty file")));
    };
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| InvalidInput(format!("{what} line {}: {e}", i + 1)))?;
        if row.len() != header.len() {
            bail!(InvalidInput(format!(
                "{what} line {}: {} fields, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            bail!(InvalidInput(format!(
                "{what} line {}: non-finite value",
                i + 1
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        bail!(InvalidInput(format!("{what}: no data rows")));
    }
    Ok((header, Mat::from_rows(&rows)?))
}

pub const SCORE_HEADER: [&str; 5] = ["jaw", "tongue", "lip", "velum", "larynx"];

/// t×5 factor scores.
pub fn read_scores(path: &Path) -> Result<Mat> {
    let (header, m) = parse_csv(&read(path)?, &path.display().to_string())?;
    if header != SCORE_HEADER {
        bail!(InvalidInput(format!(
            "{}: expected header {}",
            path.display(),
            SCORE_HEADER.join(",")
        )));
    }
    Ok(m)
}

pub fn format_scores(y: &Mat) -> String {
    format_csv(&SCORE_HEADER.map(String::from), y)
}

/// Gestural scores are stored frame-major: header `g1..gD`, one row per frame.
pub fn format_gestural(h: &Mat) -> String {
    let header: Vec<String> = (1..=h.rows()).map(|d| format!("g{d}")).collect();
    format_csv(&header, &h.transpose())
}

/// Returns H as D×t.
pub fn read_gestural(path: &Path) -> Result<Mat> {
    let (header, m) = parse_csv(&read(path)?, &path.display().to_string())?;
    let expect: Vec<String> = (1..=header.len()).map(|d| format!("g{d}")).collect();
    if header != expect {
        bail!(InvalidInput(format!(
            "{}: expected header g1,g2,…",
            path.display()
        )));
    }
    if m.data().iter().any(|&v| v < 0.0) {
        bail!(InvalidInput(format!(
            "{}: negative gestural score",
            path.display()
        )));
    }
    Ok(m.transpose())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorsDoc {
    pub p: usize,
    pub articulators: Vec<String>,
    /// 2p rows, one column per articulator.
    pub factors: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthDoc {
    pub seed: u64,
    pub p: usize,
    pub t: usize,
    pub gestures: usize,
    pub window: usize,
    pub noise_sigma: f64,
    /// 2p×5
    pub factors: Vec<Vec<f64>>,
    /// t×5
    pub scores: Vec<Vec<f64>>,
    /// D×t
    pub activations: Vec<Vec<f64>>,
    /// K×D×5
    pub kernels: Vec<Vec<Vec<f64>>>,
}

impl TruthDoc {
    pub fn new(truth: &SyntheticTruth, seed: u64) -> Self {
        Self {
            seed,
            p: truth.contours.p(),
            t: truth.contours.t(),
            gestures: truth.true_activations.rows(),
            window: truth.true_kernels.len(),
            noise_sigma: truth.noise_sigma,
            factors: truth.true_factors.to_rows(),
            scores: truth.true_scores.to_rows(),
            activations: truth.true_activations.to_rows(),
            kernels: truth.true_kernels.iter().map(Mat::to_rows).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read(path)?)
            .map_err(|e| InvalidInput(format!("{}: {e}", path.display())).into())
    }

    pub fn activations(&self) -> Result<Mat> {
        let m = Mat::from_rows(&self.activations)?;
        if m.shape() != (self.gestures, self.t) {
            bail!(InvalidInput(format!(
                "activations are {:?}, header says {}×{}",
                m.shape(),
                self.gestures,
                self.t
            )));
        }
        Ok(m)
    }
}

pub fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let m =
            Mat::from_rows(&[[0.1, -2.5, 3.0, 1e-17, 4.0], [5.0, 6.0, 7.0, 8.0, -0.0]]).unwrap();
        let text = format_scores(&m);
        let (_, back) = parse_csv(&text, "x").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn ragged_row_rejected() {
        assert!(parse_csv("a,b\n1,2\n3\n", "x").is_err());
        assert!(parse_csv("a,b\n1,zz\n", "x").is_err());
        assert!(parse_csv("a,b\n", "x").is_err());
    }
}
