//! Vocal-tract contour sequences and articulator masks.
//!
//! A sequence stores `p` contour vertices per frame as an interleaved
//! `2p×t` matrix: row `2i` is the x coordinate of vertex `i`, row `2i+1` its
//! y coordinate. Every vertex belongs to exactly one articulator.

mod csf;
mod synth;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::numkit::{Mat, NumError};

pub use csf::{format_csf, parse_csf, read_csf, write_csf};
pub use synth::{generate_synthetic, SynthConfig, SyntheticTruth, ACTIVATION_MIN_SPARSITY};

#[derive(Debug, Error)]
pub enum ContourError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type Result<T> = std::result::Result<T, ContourError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArticulatorId {
    Jaw,
    Tongue,
    Lip,
    Velum,
    Larynx,
}

impl ArticulatorId {
    /// Canonical order; also the factor column order.
    pub const ALL: [ArticulatorId; 5] = [
        ArticulatorId::Jaw,
        ArticulatorId::Tongue,
        ArticulatorId::Lip,
        ArticulatorId::Velum,
        ArticulatorId::Larynx,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            ArticulatorId::Jaw => "jaw",
            ArticulatorId::Tongue => "tongue",
            ArticulatorId::Lip => "lip",
            ArticulatorId::Velum => "velum",
            ArticulatorId::Larynx => "larynx",
        }
    }
}

impl fmt::Display for ArticulatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ArticulatorId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ArticulatorId::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| format!("unknown articulator label {s:?}"))
    }
}

/// Vertex → articulator assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticulatorMap {
    assignment: Vec<ArticulatorId>,
}

impl ArticulatorMap {
    /// Any non-empty assignment is a partition of the vertices. Whether every
    /// articulator is represented is checked separately by
    /// [`ArticulatorMap::ensure_complete`], since masks are also useful on
    /// partial maps.
    pub fn new(assignment: Vec<ArticulatorId>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(ContourError::Argument(
                "articulator map has no vertices".into(),
            ));
        }
        Ok(Self { assignment })
    }

    /// Contiguous blocks: the first `sizes[0]` vertices are jaw, and so on.
    pub fn from_block_sizes(sizes: [usize; 5]) -> Result<Self> {
        let assignment = ArticulatorId::ALL
            .iter()
            .zip(sizes)
            .flat_map(|(&a, n)| std::iter::repeat_n(a, n))
            .collect();
        let map = Self::new(assignment)?;
        map.ensure_complete()?;
        Ok(map)
    }

    pub fn p(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[ArticulatorId] {
        &self.assignment
    }

    pub fn count(&self, art: ArticulatorId) -> usize {
        self.assignment.iter().filter(|&&a| a == art).count()
    }

    pub fn ensure_complete(&self) -> Result<()> {
        for art in ArticulatorId::ALL {
            if self.count(art) == 0 {
                return Err(ContourError::Invariant(format!(
                    "articulator {art} owns no vertex"
                )));
            }
        }
        Ok(())
    }

    /// Coordinate rows (2i, 2i+1) of every vertex assigned to one of `arts`.
    pub fn coordinate_rows(&self, arts: &[ArticulatorId]) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, a)| arts.contains(a))
            .flat_map(|(i, _)| [2 * i, 2 * i + 1])
            .collect()
    }
}

/// Binary diagonal projection `P_art`, stored as its diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionMask {
    diag: Vec<bool>,
}

impl ProjectionMask {
    pub fn diag(&self) -> &[bool] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn complement(&self) -> Self {
        Self {
            diag: self.diag.iter().map(|b| !b).collect(),
        }
    }

    /// Dense `{0,1}` diagonal matrix.
    pub fn to_matrix(&self) -> Mat {
        Mat::diag(
            &self
                .diag
                .iter()
                .map(|&b| f64::from(u8::from(b)))
                .collect::<Vec<_>>(),
        )
    }

    /// `Pᵀ·X`: keeps masked rows, zeroes the rest.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if self.diag.len() != x.rows() {
            return Err(ContourError::Dimension(format!(
                "mask of length {} applied to {} rows",
                self.diag.len(),
                x.rows()
            )));
        }
        let mut out = x.clone();
        for (r, &keep) in self.diag.iter().enumerate() {
            if !keep {
                out.row_mut(r).fill(0.0);
            }
        }
        Ok(out)
    }
}

/// Mask keeping the coordinates of every vertex owned by one of `arts`.
pub fn build_projection(map: &ArticulatorMap, arts: &[ArticulatorId]) -> Result<ProjectionMask> {
    if arts.is_empty() {
        return Err(ContourError::Argument(
            "projection needs at least one articulator".into(),
        ));
    }
    let diag = map.assignment.iter().flat_map(|a| {
        let keep = arts.contains(a);
        [keep, keep]
    });
    Ok(ProjectionMask {
        diag: diag.collect(),
    })
}

pub fn apply_projection(mask: &ProjectionMask, x: &Mat) -> Result<Mat> {
    mask.apply(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourSequence {
    x: Mat,
    fps: f64,
    map: ArticulatorMap,
}

impl ContourSequence {
    pub fn new(x: Mat, fps: f64, map: ArticulatorMap) -> Result<Self> {
        let p = map.p();
        if p < 5 {
            return Err(ContourError::Invariant(format!(
                "need p ≥ 5 vertices, got {p}"
            )));
        }
        map.ensure_complete()?;
        if x.rows() != 2 * p {
            return Err(ContourError::Dimension(format!(
                "{} coordinate rows for {p} vertices",
                x.rows()
            )));
        }
        if x.cols() == 0 {
            return Err(ContourError::Invariant("sequence has no frames".into()));
        }
        if !x.is_finite() {
            return Err(ContourError::Invariant("non-finite coordinates".into()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(ContourError::Invariant(format!(
                "fps must be positive, got {fps}"
            )));
        }
        Ok(Self { x, fps, map })
    }

    pub fn p(&self) -> usize {
        self.map.p()
    }

    pub fn t(&self) -> usize {
        self.x.cols()
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn map(&self) -> &ArticulatorMap {
        &self.map
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ArticulatorId::*;

    fn jtlv() -> ArticulatorMap {
        ArticulatorMap::new(vec![Jaw, Tongue, Lip, Velum]).unwrap()
    }

    fn mask_bits(m: &ProjectionMask) -> Vec<u8> {
        m.diag().iter().map(|&b| u8::from(b)).collect()
    }

    #[test]
    fn single_and_union_masks() {
        let map = jtlv();
        assert_eq!(
            mask_bits(&build_projection(&map, &[Jaw]).unwrap()),
            [1, 1, 0, 0, 0, 0, 0, 0]
        );
        assert_eq!(
            mask_bits(&build_projection(&map, &[Jaw, Lip]).unwrap()),
            [1, 1, 0, 0, 1, 1, 0, 0]
        );
        let all = build_projection(&map, &ArticulatorId::ALL).unwrap();
        assert!(all.diag().iter().all(|&b| b));
        assert!(matches!(
            build_projection(&map, &[]),
            Err(ContourError::Argument(_))
        ));
    }

    #[test]
    fn union_mask_equals_sum_of_masks() {
        let map = jtlv();
        let sum = build_projection(&map, &[Jaw])
            .unwrap()
            .to_matrix()
            .add(&build_projection(&map, &[Lip]).unwrap().to_matrix())
            .unwrap();
        assert_eq!(
            sum,
            build_projection(&map, &[Jaw, Lip]).unwrap().to_matrix()
        );
    }

    #[test]
    fn apply_keeps_only_masked_rows() {
        let map = jtlv();
        let x = Mat::from_fn(8, 3, |r, c| (r * 3 + c) as f64 + 1.0);
        let all = build_projection(&map, &ArticulatorId::ALL).unwrap();
        assert_eq!(apply_projection(&all, &x).unwrap(), x);
        let jaw = build_projection(&map, &[Jaw]).unwrap();
        let out = apply_projection(&jaw, &x).unwrap();
        for r in 0..8 {
            let expect: &[f64] = if r < 2 { x.row(r) } else { &[0.0; 3] };
            assert_eq!(out.row(r), expect);
        }
        assert!(matches!(
            apply_projection(&jaw, &Mat::zeros(6, 3)),
            Err(ContourError::Dimension(_))
        ));
    }

    #[test]
    fn sequence_invariants() {
        let map = ArticulatorMap::from_block_sizes([1, 1, 1, 1, 1]).unwrap();
        assert!(ContourSequence::new(Mat::zeros(10, 4), 83.0, map.clone()).is_ok());
        assert!(ContourSequence::new(Mat::zeros(10, 0), 83.0, map.clone()).is_err());
        assert!(ContourSequence::new(Mat::zeros(8, 4), 83.0, map).is_err());
        assert!(ArticulatorMap::from_block_sizes([1, 0, 1, 1, 1]).is_err());
        assert!(ContourSequence::new(Mat::zeros(8, 4), 83.0, jtlv()).is_err());
    }

    #[test]
    fn labels_round_trip() {
        for a in ArticulatorId::ALL {
            assert_eq!(a.label().parse::<ArticulatorId>().unwrap(), a);
        }
        assert!("teeth".parse::<ArticulatorId>().is_err());
    }
}
