use super::{mean_sparsity, GesturalScores, NcmfError, NcmfModel, Result};
use crate::autograd::{AdamConfig, AdamState, LrSchedule, Tape, Tensor, Var};
use crate::numkit::Mat;
use crate::recog::{ctc_on, CtcHead};
use crate::sampler::EpochSampler;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr0: f64,
    pub weight_decay: f64,
    /// Learning-rate factor applied every `decay_every` updates.
    pub decay: f64,
    pub decay_every: usize,
    pub updates: usize,
    pub batch: usize,
    pub seed: u64,
    pub decoupled_weight_decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 0.0,
            lr0: 0.001,
            weight_decay: 4e-4,
            decay: 0.95,
            decay_every: 10,
            updates: 1000,
            batch: 4,
            seed: 0,
            decoupled_weight_decay: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lr0", self.lr0),
            ("weight_decay", self.weight_decay),
            ("decay", self.decay),
        ];
        for (name, v) in reals {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(NcmfError::Argument(format!(
                    "{name} must be finite and ≥ 0, got {v}"
                )));
            }
        }
        if self.updates == 0 || self.batch == 0 {
            return Err(NcmfError::Argument("updates and batch must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            lr0: self.lr0,
            factor: self.decay,
            every: self.decay_every,
        }
    }
}

/// Phone targets for fine-tuning through a recognizer head, one per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcTask {
    pub head: CtcHead,
    pub targets: Vec<Vec<usize>>,
}

/// One row of the training trace; values are batch means before the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub update: usize,
    pub loss: f64,
    pub mse: f64,
    pub sparsity: f64,
    pub ctc: f64,
    pub lr: f64,
}

/// Overlapping windows of `len` frames every `hop` frames from a t×5 score matrix.
pub fn segment(y: &Mat, len: usize, hop: usize) -> Result<Vec<Mat>> {
    if len < 2 || hop == 0 {
        return Err(NcmfError::Argument(format!(
            "segment length {len} and hop {hop}"
        )));
    }
    if y.rows() < len {
        return Err(NcmfError::Argument(format!(
            "{} frames is shorter than segment length {len}",
            y.rows()
        )));
    }
    let cols: Vec<usize> = (0..y.cols()).collect();
    Ok((0..=y.rows() - len)
        .step_by(hop)
        .map(|s| y.select(&(s..s + len).collect::<Vec<_>>(), &cols))
        .collect())
}

/// Runs `cfg.updates` Adam steps of the combined loss on mini-batches drawn
/// from `segments` (each t×5). With a CTC task and `λ₂ > 0` the head is
/// trained jointly and the CTC gradient reaches the encoder.
pub fn train(
    model: &mut NcmfModel,
    segments: &[Mat],
    cfg: &TrainConfig,
    mut ctc: Option<&mut CtcTask>,
) -> Result<Vec<TraceRow>> {
    cfg.validate()?;
    if segments.is_empty() {
        return Err(NcmfError::Argument("no training segments".into()));
    }
    for (i, s) in segments.iter().enumerate() {
        if s.cols() != super::FACTORS {
            return Err(NcmfError::Dimension(format!(
                "segment {i} has {} channels",
                s.cols()
            )));
        }
        if s.rows() < model.window() {
            return Err(NcmfError::Argument(format!(
                "segment {i} has {} frames, fewer than the window {}",
                s.rows(),
                model.window()
            )));
        }
        s.ensure_finite("training segment")?;
    }
    let use_ctc = cfg.lambda2 > 0.0;
    if let Some(task) = ctc.as_deref() {
        if task.targets.len() != segments.len() {
            return Err(NcmfError::Argument(format!(
                "{} CTC targets for {} segments",
                task.targets.len(),
                segments.len()
            )));
        }
        if task.head.features() != model.gestures() {
            return Err(NcmfError::Dimension(format!(
                "head reads {} features, model has {} gestures",
                task.head.features(),
                model.gestures()
            )));
        }
    } else if use_ctc {
        return Err(NcmfError::Argument(
            "lambda2 > 0 needs phone targets".into(),
        ));
    }

    let adam_cfg = AdamConfig {
        weight_decay: cfg.weight_decay,
        decoupled: cfg.decoupled_weight_decay,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, &model.params());
    let mut head_adam = ctc
        .as_deref()
        .map(|t| AdamState::new(adam_cfg, &[&t.head.kernel, &t.head.bias]));
    let transposed: Vec<Tensor> = segments
        .iter()
        .map(|s| Tensor::from_mat(&s.transpose()))
        .collect();
    let schedule = cfg.schedule();
    let mut sampler = EpochSampler::new(segments.len(), cfg.seed);
    let mut trace = Vec::with_capacity(cfg.updates);

    for update in 0..cfg.updates {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let head_vars = match ctc.as_deref() {
            Some(task) if use_ctc => Some(task.head.bind(&mut tape)),
            _ => None,
        };
        let (mut mse_sum, mut sp_sum, mut ctc_sum) = (0.0, 0.0, 0.0);
        let mut total: Option<Var> = None;
        for _ in 0..cfg.batch {
            let i = sampler.next_index();
            let y = tape.leaf(transposed[i].clone());
            let h = NcmfModel::encode_on(&mut tape, &vars, y)?;
            let y_hat = NcmfModel::decode_on(&mut tape, &vars, h)?;
            let mse = tape.mse(y_hat, y)?;
            let sp = tape.mean_hoyer(h)?;
            mse_sum += tape.value(mse).item()?;
            sp_sum += tape.value(sp).item()?;
            let neg_sp = tape.scale(sp, -cfg.lambda1);
            let mut loss = tape.add(mse, neg_sp)?;
            if let (Some(hv), Some(task)) = (head_vars.as_ref(), ctc.as_deref()) {
                let z = CtcHead::logits_on(&mut tape, hv, h)?;
                let c = ctc_on(&mut tape, z, &task.targets[i])?;
                ctc_sum += tape.value(c).item()?;
                let weighted = tape.scale(c, cfg.lambda2);
                loss = tape.add(loss, weighted)?;
            }
            total = Some(match total {
                Some(acc) => tape.add(acc, loss)?,
                None => loss,
            });
        }
        let loss = tape.scale(total.expect("batch ≥ 1"), 1.0 / cfg.batch as f64);
        tape.backward(loss)?;
        let lr = schedule.lr_at(update);
        let n = cfg.batch as f64;
        trace.push(TraceRow {
            update,
            loss: tape.value(loss).item()?,
            mse: mse_sum / n,
            sparsity: sp_sum / n,
            ctc: ctc_sum / n,
            lr,
        });

        let grads: Vec<Tensor> = vars
            .all()
            .iter()
            .map(|&v| tape.grad(v).cloned())
            .collect::<std::result::Result<_, _>>()?;
        let grad_refs: Vec<&Tensor> = grads.iter().collect();
        adam.step(&mut model.params_mut(), &grad_refs, lr)?;
        if let (Some(hv), Some(task), Some(st)) =
            (head_vars, ctc.as_deref_mut(), head_adam.as_mut())
        {
            let gk = tape.grad(hv.kernel)?.clone();
            let gb = tape.grad(hv.bias)?.clone();
            st.step(
                &mut [&mut task.head.kernel, &mut task.head.bias],
                &[&gk, &gb],
                lr,
            )?;
        }
    }
    Ok(trace)
}

/// Full-sequence reconstruction quality of a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mse: f64,
    pub sparsity: f64,
    pub h: GesturalScores,
    /// t×5
    pub y_hat: Mat,
}

pub fn evaluate(model: &NcmfModel, y: &Mat) -> Result<Evaluation> {
    let h = model.encode_mat(y)?;
    let y_hat = model.decode_linear(h.matrix())?;
    let diff = y.sub(&y_hat)?;
    let mse = diff.data().iter().map(|v| v * v).sum::<f64>() / diff.data().len() as f64;
    let sparsity = if h.t() >= 2 {
        mean_sparsity(h.matrix())?
    } else {
        1.0
    };
    Ok(Evaluation {
        mse,
        sparsity,
        h,
        y_hat,
    })
}
