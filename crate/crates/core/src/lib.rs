//! Articulatory decomposition of vocal-tract contour sequences.
//!
//! The pipeline has two stages:
//!
//! 1. [`factana`] splits a contour sequence `X (2p×t)` into five
//!    articulator-specific spatial factors `F (2p×5)` and their factor scores
//!    `Y (t×5)`, so that `X ≈ F·Yᵀ`. Articulator masks ([`contour`]) steer
//!    each factor onto its articulator's vertices.
//! 2. [`ncmf`] trains a small convolutional autoencoder on `Y`. The encoder
//!    produces nonnegative, sparse gestural scores `H (D×t)`; the decoder is a
//!    single causal convolution whose kernel `W (K×D×5)` reconstructs `Y`.
//!    Gestures in contour space are `G(i) = W(i)·Fᵀ`.
//!
//! [`recog`] adds the CTC loss used for recognition fine-tuning, a prefix
//! beam decoder, and the evaluation metrics. [`autograd`] is the small
//! reverse-mode tape everything trains on, and [`numkit`] the dense linear
//! algebra underneath.

pub mod autograd;
pub mod contour;
pub mod factana;
pub mod ncmf;
pub mod numkit;
pub mod recog;
mod sampler;

pub use contour::{ArticulatorId, ArticulatorMap, ContourSequence};
pub use factana::{FactorScores, FactorSet};
pub use ncmf::{GesturalScores, NcmfModel, TrainConfig};
pub use numkit::Mat;
