//! Phone recognition on top of gestural scores: CTC loss, prefix beam
//! search, a convolutional recognizer head, and the evaluation metrics
//! (phone error rate, range across data sizes, model variance).

mod beam;
mod ctc;
mod head;
mod metrics;

use thiserror::Error;

use crate::autograd::AutogradError;

pub use beam::{beam_decode, collapse, greedy_decode, DEFAULT_BEAM_WIDTH};
pub use ctc::{ctc_loss, ctc_loss_and_grad, log_softmax, min_frames};
pub use head::{
    ctc_on, event_peaks, targets_from_activations, train_head, CtcHead, HeadConfig, HeadVars,
    HEAD_WIDTH,
};
pub use metrics::{corpus_per, levenshtein, model_variance, per, range_metric};

#[derive(Debug, Error)]
pub enum RecogError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("target needs {needed} frames but only {frames} are available")]
    Infeasible { needed: usize, frames: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
}

pub type Result<T> = std::result::Result<T, RecogError>;

pub const BLANK_LABEL: &str = "<b>";

/// Phone inventory with the CTC blank at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
}

impl Vocabulary {
    pub fn new<S: Into<String>>(phones: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut symbols = vec![BLANK_LABEL.to_string()];
        for p in phones {
            let p = p.into();
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(RecogError::Argument(format!("bad phone label {p:?}")));
            }
            if symbols.contains(&p) {
                return Err(RecogError::Argument(format!("duplicate phone label {p:?}")));
            }
            symbols.push(p);
        }
        Ok(Self { symbols })
    }

    /// `g1 … gD`, one phone per gesture.
    pub fn for_gestures(d: usize) -> Self {
        Self::new((1..=d).map(|i| format!("g{i}"))).expect("labels are distinct")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() <= 1
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    /// Parses a whitespace-separated phone string.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        text.split_whitespace()
            .map(|w| match self.symbols.iter().position(|s| s == w) {
                Some(0) | None => Err(RecogError::Argument(format!("unknown phone {w:?}"))),
                Some(i) => Ok(i),
            })
            .collect()
    }

    pub fn decode(&self, labels: &[usize]) -> Result<String> {
        let words = labels
            .iter()
            .map(|&i| match self.symbols.get(i) {
                Some(s) if i != 0 => Ok(s.as_str()),
                _ => Err(RecogError::Argument(format!(
                    "label {i} outside vocabulary"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(words.join(" "))
    }
}
