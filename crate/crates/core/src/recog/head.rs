//! A single same-padded convolution from gestural scores to phone logits.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use super::beam::beam_decode;
use super::ctc::ctc_loss_and_grad;
use super::{RecogError, Result};
use crate::autograd::{AdamConfig, AdamState, LrSchedule, Padding, Tape, Tensor, Var};
use crate::numkit::Mat;
use crate::sampler::EpochSampler;

/// Head kernel width.
pub const HEAD_WIDTH: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CtcHead {
    /// 3×D×|V|
    pub kernel: Tensor,
    /// |V|
    pub bias: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub kernel: Var,
    pub bias: Var,
}

impl CtcHead {
    pub fn new(features: usize, vocab: usize, seed: u64) -> Result<Self> {
        if features == 0 || vocab < 2 {
            return Err(RecogError::Argument(format!(
                "head needs D ≥ 1 and |V| ≥ 2, got {features} and {vocab}"
            )));
        }
        let mut rng = Pcg64::seed_from_u64(seed);
        let bound = 1.0 / ((HEAD_WIDTH * features) as f64).sqrt();
        let data = (0..HEAD_WIDTH * features * vocab)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Ok(Self {
            kernel: Tensor::from_vec(vec![HEAD_WIDTH, features, vocab], data)
                .expect("shape product"),
            bias: Tensor::zeros(&[vocab]),
        })
    }

    pub fn from_parts(kernel: Tensor, bias: Tensor) -> Result<Self> {
        match (kernel.shape(), bias.shape()) {
            (&[HEAD_WIDTH, d, v], &[vb]) if d > 0 && v >= 2 && v == vb => {}
            (k, b) => return Err(RecogError::Argument(format!("head shapes {k:?} and {b:?}"))),
        }
        if !kernel.is_finite() || !bias.is_finite() {
            return Err(RecogError::Domain("non-finite head parameter".into()));
        }
        Ok(Self { kernel, bias })
    }

    pub fn features(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn vocab(&self) -> usize {
        self.kernel.shape()[2]
    }

    pub fn bind(&self, tape: &mut Tape) -> HeadVars {
        HeadVars {
            kernel: tape.leaf(self.kernel.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }

    /// Logits as a |V|×t tape node from a D×t feature node.
    pub fn logits_on(tape: &mut Tape, vars: &HeadVars, features: Var) -> Result<Var> {
        let z = tape.conv1d(features, vars.kernel, Padding::Same)?;
        Ok(tape.add_bias(z, vars.bias)?)
    }

    /// t×|V| logits for a D×t feature matrix.
    pub fn logits(&self, features: &Mat) -> Result<Mat> {
        if features.rows() != self.features() {
            return Err(RecogError::Argument(format!(
                "head expects {} feature rows, got {}",
                self.features(),
                features.rows()
            )));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = tape.leaf(Tensor::from_mat(features));
        let z = Self::logits_on(&mut tape, &vars, x)?;
        Ok(tape.value(z).to_mat()?.transpose())
    }

    pub fn decode(&self, features: &Mat, width: usize) -> Result<Vec<usize>> {
        beam_decode(&self.logits(features)?, width)
    }
}

/// CTC loss of a |V|×t logit node as a tape node.
pub fn ctc_on(tape: &mut Tape, logits: Var, target: &[usize]) -> Result<Var> {
    let z = tape.value(logits).to_mat()?.transpose();
    let (loss, grad) = ctc_loss_and_grad(&z, target)?;
    Ok(tape.external(logits, loss, Tensor::from_mat(&grad.transpose()))?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub updates: usize,
    pub batch: usize,
    pub lr0: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            updates: 300,
            batch: 4,
            lr0: 0.02,
            decay: 0.95,
            decay_every: 10,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

/// Fits the head alone on fixed features. Returns the mean batch loss per update.
pub fn train_head(
    head: &mut CtcHead,
    features: &[Mat],
    targets: &[Vec<usize>],
    cfg: &HeadConfig,
) -> Result<Vec<f64>> {
    if features.is_empty() || features.len() != targets.len() {
        return Err(RecogError::Argument(format!(
            "{} feature sequences for {} targets",
            features.len(),
            targets.len()
        )));
    }
    if cfg.batch == 0 || cfg.updates == 0 {
        return Err(RecogError::Argument("updates and batch must be ≥ 1".into()));
    }
    let adam_cfg = AdamConfig {
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, &[&head.kernel, &head.bias]);
    let schedule = LrSchedule {
        lr0: cfg.lr0,
        factor: cfg.decay,
        every: cfg.decay_every,
    };
    let mut sampler = EpochSampler::new(features.len(), cfg.seed);
    let mut trace = Vec::with_capacity(cfg.updates);
    for update in 0..cfg.updates {
        let mut tape = Tape::new();
        let vars = head.bind(&mut tape);
        let mut total: Option<Var> = None;
        for _ in 0..cfg.batch {
            let i = sampler.next_index();
            let x = tape.leaf(Tensor::from_mat(&features[i]));
            let z = CtcHead::logits_on(&mut tape, &vars, x)?;
            let l = ctc_on(&mut tape, z, &targets[i])?;
            total = Some(match total {
                Some(acc) => tape.add(acc, l)?,
                None => l,
            });
        }
        let loss = tape.scale(total.expect("batch ≥ 1"), 1.0 / cfg.batch as f64);
        tape.backward(loss)?;
        trace.push(tape.value(loss).item()?);
        let grads = [
            tape.grad(vars.kernel)?.clone(),
            tape.grad(vars.bias)?.clone(),
        ];
        adam.step(
            &mut [&mut head.kernel, &mut head.bias],
            &[&grads[0], &grads[1]],
            schedule.lr_at(update),
        )?;
    }
    Ok(trace)
}

/// Local maxima of each row of a nonnegative D×t matrix as `(frame, d + 1)`,
/// ordered by frame then row. A plateau counts once, at its last frame.
pub fn event_peaks(h: &Mat) -> Vec<(usize, usize)> {
    let (d, t) = h.shape();
    let mut events = Vec::new();
    for g in 0..d {
        let row = h.row(g);
        for tau in 0..t {
            let v = row[tau];
            let left = if tau > 0 { row[tau - 1] } else { 0.0 };
            let right = if tau + 1 < t { row[tau + 1] } else { 0.0 };
            if v > 0.0 && v >= left && v > right {
                events.push((tau, g + 1));
            }
        }
    }
    events.sort_unstable();
    events
}

/// Phone targets read off activation peaks: the labels of [`event_peaks`].
pub fn targets_from_activations(h: &Mat) -> Vec<usize> {
    event_peaks(h).into_iter().map(|(_, label)| label).collect()
}
