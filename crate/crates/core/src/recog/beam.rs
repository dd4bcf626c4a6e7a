//! Prefix beam search over CTC outputs.

use std::collections::BTreeMap;

use super::ctc::{log_softmax, log_sum_exp2};
use super::{RecogError, Result};
use crate::numkit::Mat;

/// Width used for evaluation decoding.
pub const DEFAULT_BEAM_WIDTH: usize = 10;

/// Removes repeats, then blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &s in path {
        if Some(s) != prev && s != 0 {
            out.push(s);
        }
        prev = Some(s);
    }
    out
}

/// Best-path decoding: argmax per frame, then collapse.
pub fn greedy_decode(logits: &Mat) -> Vec<usize> {
    let path: Vec<usize> = (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
        })
        .collect();
    collapse(&path)
}

#[derive(Clone, Copy)]
struct PrefixScore {
    /// Log probability of the prefix with its last frame a blank.
    blank: f64,
    /// Log probability of the prefix with its last frame the prefix's final label.
    label: f64,
}

impl PrefixScore {
    const EMPTY: PrefixScore = PrefixScore {
        blank: f64::NEG_INFINITY,
        label: f64::NEG_INFINITY,
    };

    fn total(self) -> f64 {
        log_sum_exp2(self.blank, self.label)
    }
}

/// Prefix beam search keeping the `width` most probable labelings per frame.
/// Paths that collapse to the same labeling are merged by summed probability.
pub fn beam_decode(logits: &Mat, width: usize) -> Result<Vec<usize>> {
    if width == 0 {
        return Err(RecogError::Argument("beam width must be ≥ 1".into()));
    }
    if logits.rows() == 0 {
        return Ok(Vec::new());
    }
    if !logits.is_finite() {
        return Err(RecogError::Domain("non-finite logits".into()));
    }
    let lp = log_softmax(logits);
    let mut beams: Vec<(Vec<usize>, PrefixScore)> = vec![(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            label: f64::NEG_INFINITY,
        },
    )];

    for tau in 0..lp.rows() {
        let frame = lp.row(tau);
        let mut next: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
        for (prefix, score) in &beams {
            let total = score.total();
            let entry = next.entry(prefix.clone()).or_insert(PrefixScore::EMPTY);
            entry.blank = log_sum_exp2(entry.blank, total + frame[0]);

            let last = prefix.last().copied();
            for (k, &p) in frame.iter().enumerate().skip(1) {
                let mut extended = prefix.clone();
                extended.push(k);
                if last == Some(k) {
                    // A repeat only extends after a blank; otherwise it folds into the prefix.
                    let e = next.entry(extended).or_insert(PrefixScore::EMPTY);
                    e.label = log_sum_exp2(e.label, score.blank + p);
                    let same = next.get_mut(prefix).expect("inserted above");
                    same.label = log_sum_exp2(same.label, score.label + p);
                } else {
                    let e = next.entry(extended).or_insert(PrefixScore::EMPTY);
                    e.label = log_sum_exp2(e.label, total + p);
                }
            }
        }
        let mut ranked: Vec<(Vec<usize>, PrefixScore)> = next.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.total()
                .total_cmp(&a.1.total())
                .then_with(|| a.0.cmp(&b.0))
        });
        ranked.truncate(width);
        beams = ranked;
    }
    Ok(beams.into_iter().next().map(|(p, _)| p).unwrap_or_default())
}
