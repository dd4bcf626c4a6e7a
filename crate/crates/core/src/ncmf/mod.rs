//! Neural convolutive matrix factorization of factor scores.
//!
//! The encoder maps factor scores `Y (t×5)` to gestural scores
//! `H = relu(conv(relu(conv(Yᵀ, enc1) + b1), enc2) + b2)`, two same-padded
//! width-3 convolutions. The decoder is one causal convolution whose kernel
//! `W (K×D×5)` is the factorization basis:
//!
//! ```text
//! Ŷ(τ,:) = Σ_{i<K} H(:, τ−i)ᵀ · W(i)
//! ```
//!
//! Gestures in contour space are `G(i) = W(i)·Fᵀ`, so decoding through `G`
//! lands on the same contours as decoding to `Ŷ` and mapping through `F`.

mod checkpoint;
mod train;

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use thiserror::Error;

use crate::autograd::{AutogradError, Padding, Tape, Tensor, Var};
use crate::factana::{FactorError, FactorScores, FactorSet};
use crate::numkit::{Mat, NumError};

pub use checkpoint::Checkpoint;
pub use train::{evaluate, segment, train, CtcTask, Evaluation, TraceRow, TrainConfig};

/// Factor count, the decoder's output channels.
pub const FACTORS: usize = 5;
/// Encoder hidden channels.
pub const HIDDEN: usize = 64;
/// Encoder kernel width.
pub const ENC_WIDTH: usize = 3;

#[derive(Debug, Error)]
pub enum NcmfError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Recog(#[from] crate::recog::RecogError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, NcmfError>;

/// Nonnegative gestural scores, D×t.
#[derive(Debug, Clone, PartialEq)]
pub struct GesturalScores {
    h: Mat,
}

impl GesturalScores {
    pub fn new(h: Mat) -> Result<Self> {
        if !h.is_finite() {
            return Err(NcmfError::Invariant("non-finite gestural scores".into()));
        }
        if h.data().iter().any(|&v| v < 0.0) {
            return Err(NcmfError::Invariant("negative gestural score".into()));
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &Mat {
        &self.h
    }

    pub fn gestures(&self) -> usize {
        self.h.rows()
    }

    pub fn t(&self) -> usize {
        self.h.cols()
    }
}

/// Parameter handles of an [`NcmfModel`] bound to one tape.
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub enc1: Var,
    pub enc1_bias: Var,
    pub enc2: Var,
    pub enc2_bias: Var,
    pub dec: Var,
}

impl ModelVars {
    pub fn all(&self) -> [Var; 5] {
        [
            self.enc1,
            self.enc1_bias,
            self.enc2,
            self.enc2_bias,
            self.dec,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcmfModel {
    gestures: usize,
    window: usize,
    /// 3×5×64
    pub enc1: Tensor,
    pub enc1_bias: Tensor,
    /// 3×64×D
    pub enc2: Tensor,
    pub enc2_bias: Tensor,
    /// K×D×5, the `W` of the factorization.
    pub dec: Tensor,
}

/// Uniform in `±1/√fan_in`.
fn fan_in_uniform(shape: &[usize], fan_in: usize, rng: &mut Pcg64) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("shape product")
}

impl NcmfModel {
    pub fn new(gestures: usize, window: usize, seed: u64) -> Result<Self> {
        if gestures == 0 || window == 0 {
            return Err(NcmfError::Argument(format!(
                "need D ≥ 1 and K ≥ 1, got D = {gestures}, K = {window}"
            )));
        }
        let mut rng = Pcg64::seed_from_u64(seed);
        Ok(Self {
            gestures,
            window,
            enc1: fan_in_uniform(&[ENC_WIDTH, FACTORS, HIDDEN], ENC_WIDTH * FACTORS, &mut rng),
            enc1_bias: Tensor::zeros(&[HIDDEN]),
            enc2: fan_in_uniform(&[ENC_WIDTH, HIDDEN, gestures], ENC_WIDTH * HIDDEN, &mut rng),
            enc2_bias: Tensor::zeros(&[gestures]),
            dec: fan_in_uniform(&[window, gestures, FACTORS], window * gestures, &mut rng),
        })
    }

    /// Rebuilds a model from raw parameters, checking every shape.
    pub fn from_parts(
        enc1: Tensor,
        enc1_bias: Tensor,
        enc2: Tensor,
        enc2_bias: Tensor,
        dec: Tensor,
    ) -> Result<Self> {
        let (window, gestures) = match dec.shape() {
            &[k, d, q] if q == FACTORS && k > 0 && d > 0 => (k, d),
            s => return Err(NcmfError::Dimension(format!("decoder shape {s:?}"))),
        };
        let expect: [(&Tensor, Vec<usize>); 4] = [
            (&enc1, vec![ENC_WIDTH, FACTORS, HIDDEN]),
            (&enc1_bias, vec![HIDDEN]),
            (&enc2, vec![ENC_WIDTH, HIDDEN, gestures]),
            (&enc2_bias, vec![gestures]),
        ];
        for (t, shape) in expect {
            if t.shape() != shape.as_slice() {
                return Err(NcmfError::Dimension(format!(
                    "parameter shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(NcmfError::Invariant("non-finite parameter".into()));
            }
        }
        if !dec.is_finite() {
            return Err(NcmfError::Invariant("non-finite parameter".into()));
        }
        Ok(Self {
            gestures,
            window,
            enc1,
            enc1_bias,
            enc2,
            enc2_bias,
            dec,
        })
    }

    pub fn gestures(&self) -> usize {
        self.gestures
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn params(&self) -> [&Tensor; 5] {
        [
            &self.enc1,
            &self.enc1_bias,
            &self.enc2,
            &self.enc2_bias,
            &self.dec,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 5] {
        [
            &mut self.enc1,
            &mut self.enc1_bias,
            &mut self.enc2,
            &mut self.enc2_bias,
            &mut self.dec,
        ]
    }

    /// Decoder tap `W(lag)` as a D×5 matrix.
    pub fn kernel_at(&self, lag: usize) -> Mat {
        let stride = self.gestures * FACTORS;
        Mat::from_vec(
            self.gestures,
            FACTORS,
            self.dec.data()[lag * stride..(lag + 1) * stride].to_vec(),
        )
        .expect("decoder tap shape")
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            enc1: tape.leaf(self.enc1.clone()),
            enc1_bias: tape.leaf(self.enc1_bias.clone()),
            enc2: tape.leaf(self.enc2.clone()),
            enc2_bias: tape.leaf(self.enc2_bias.clone()),
            dec: tape.leaf(self.dec.clone()),
        }
    }

    /// `y_t` is the 5×t channel-major transpose of the factor scores.
    pub fn encode_on(tape: &mut Tape, vars: &ModelVars, y_t: Var) -> Result<Var> {
        let a = tape.conv1d(y_t, vars.enc1, Padding::Same)?;
        let a = tape.add_bias(a, vars.enc1_bias)?;
        let a = tape.relu(a);
        let b = tape.conv1d(a, vars.enc2, Padding::Same)?;
        let b = tape.add_bias(b, vars.enc2_bias)?;
        Ok(tape.relu(b))
    }

    /// Returns the 5×t reconstruction.
    pub fn decode_on(tape: &mut Tape, vars: &ModelVars, h: Var) -> Result<Var> {
        Ok(tape.conv1d(h, vars.dec, Padding::Causal)?)
    }

    fn check_scores(&self, y: &Mat) -> Result<()> {
        if y.cols() != FACTORS {
            return Err(NcmfError::Dimension(format!(
                "encoder expects {FACTORS} channels, got {}",
                y.cols()
            )));
        }
        if y.rows() == 0 {
            return Err(NcmfError::Argument("empty score sequence".into()));
        }
        Ok(())
    }

    pub fn encode(&self, y: &FactorScores) -> Result<GesturalScores> {
        self.encode_mat(y.matrix())
    }

    /// [`NcmfModel::encode`] on a raw t×5 matrix.
    pub fn encode_mat(&self, y: &Mat) -> Result<GesturalScores> {
        self.check_scores(y)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let yt = tape.leaf(Tensor::from_mat(&y.transpose()));
        let h = Self::encode_on(&mut tape, &vars, yt)?;
        GesturalScores::new(tape.value(h).to_mat()?)
    }

    pub fn decode(&self, h: &GesturalScores) -> Result<FactorScores> {
        if h.gestures() != self.gestures {
            return Err(NcmfError::Dimension(format!(
                "decoder expects {} gestures, got {}",
                self.gestures,
                h.gestures()
            )));
        }
        Ok(FactorScores::new(self.decode_linear(h.matrix())?)?)
    }

    /// Decoder applied to any D×t matrix (not necessarily nonnegative). Returns t×5.
    pub fn decode_linear(&self, h: &Mat) -> Result<Mat> {
        if h.rows() != self.gestures {
            return Err(NcmfError::Dimension(format!(
                "decoder expects {} gestures, got {}",
                self.gestures,
                h.rows()
            )));
        }
        let mut tape = Tape::new();
        let dec = tape.leaf(self.dec.clone());
        let hv = tape.leaf(Tensor::from_mat(h));
        let y = tape.conv1d(hv, dec, Padding::Causal)?;
        Ok(tape.value(y).to_mat()?.transpose())
    }
}

/// Gestures in contour space, one D×2p matrix per lag.
#[derive(Debug, Clone, PartialEq)]
pub struct Gesture {
    taps: Vec<Mat>,
}

impl Gesture {
    pub fn taps(&self) -> &[Mat] {
        &self.taps
    }

    pub fn window(&self) -> usize {
        self.taps.len()
    }

    /// Contour-space trajectory of gesture `d`: K×2p, row `i` is `G(i)[d, :]`.
    pub fn trajectory(&self, d: usize) -> Mat {
        let coords = self.taps.first().map_or(0, Mat::cols);
        Mat::from_fn(self.taps.len(), coords, |i, c| self.taps[i][(d, c)])
    }

    /// `X̂(:, τ) = Σ_i G(i)ᵀ·H(:, τ−i)`, 2p×t.
    pub fn reconstruct(&self, h: &Mat) -> Result<Mat> {
        let (d, t) = h.shape();
        let first = self
            .taps
            .first()
            .ok_or_else(|| NcmfError::Argument("empty gesture".into()))?;
        if first.rows() != d {
            return Err(NcmfError::Dimension(format!(
                "{} gestures for {d} score rows",
                first.rows()
            )));
        }
        let coords = first.cols();
        let mut out = Mat::zeros(coords, t);
        for (lag, g) in self.taps.iter().enumerate() {
            for tau in lag..t {
                for gi in 0..d {
                    let a = h[(gi, tau - lag)];
                    if a == 0.0 {
                        continue;
                    }
                    for (c, &gv) in g.row(gi).iter().enumerate() {
                        out[(c, tau)] += a * gv;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// `G(i) = W(i)·Fᵀ` for every lag.
pub fn compose_gestures(model: &NcmfModel, f: &FactorSet) -> Result<Gesture> {
    if f.matrix().cols() != FACTORS {
        return Err(NcmfError::Dimension(format!(
            "{} factors for {FACTORS} decoder channels",
            f.matrix().cols()
        )));
    }
    let ft = f.matrix().transpose();
    let taps = (0..model.window())
        .map(|lag| model.kernel_at(lag).matmul(&ft))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Gesture { taps })
}

/// Factor `s` such that `s·Y` has mean squared entry 1. Raw factor scores
/// have unit energy per column, so their scale shrinks with `t`; training on
/// `s·Y` keeps the reconstruction and sparsity terms comparable.
pub fn unit_power_scale(y: &Mat) -> Result<f64> {
    let n = y.data().len();
    let power = y.data().iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
    if n == 0 || !(power > 0.0) || !power.is_finite() {
        return Err(NcmfError::Argument("scores have no energy".into()));
    }
    Ok(power.sqrt().recip())
}

/// Hoyer sparsity `(√t − ‖v‖₁/‖v‖₂)/(√t − 1)`; the zero vector scores 1.
pub fn hoyer_sparsity(v: &[f64]) -> Result<f64> {
    if v.len() < 2 {
        return Err(NcmfError::Argument(format!(
            "sparsity needs at least 2 samples, got {}",
            v.len()
        )));
    }
    Ok(crate::autograd::hoyer_row(v).0)
}

/// Mean row sparsity of a D×t matrix (time runs along rows).
pub fn mean_sparsity(h: &Mat) -> Result<f64> {
    if h.rows() == 0 {
        return Err(NcmfError::Argument("no rows".into()));
    }
    let mut total = 0.0;
    for d in 0..h.rows() {
        total += hoyer_sparsity(h.row(d))?;
    }
    Ok(total / h.rows() as f64)
}

/// `‖Y − Ŷ‖²_F / (t·5) − λ₁·S(H) + λ₂·L_CTC`.
pub fn total_loss(y: &Mat, y_hat: &Mat, h: &Mat, ctc_term: f64, cfg: &TrainConfig) -> Result<f64> {
    if y.shape() != y_hat.shape() {
        return Err(NcmfError::Dimension(format!(
            "scores {:?} vs reconstruction {:?}",
            y.shape(),
            y_hat.shape()
        )));
    }
    if h.cols() != y.rows() {
        return Err(NcmfError::Dimension(format!(
            "{} score frames for {} gestural frames",
            y.rows(),
            h.cols()
        )));
    }
    if !(ctc_term >= 0.0) {
        return Err(NcmfError::Argument(format!(
            "CTC term must be ≥ 0, got {ctc_term}"
        )));
    }
    let n = y.rows() * y.cols();
    let mse = y.sub(y_hat)?.data().iter().map(|v| v * v).sum::<f64>() / n as f64;
    Ok(mse - cfg.lambda1 * mean_sparsity(h)? + cfg.lambda2 * ctc_term)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_mat(r: usize, c: usize, seed: u64, nonneg: bool) -> Mat {
        let mut rng = Pcg64::seed_from_u64(seed);
        Mat::from_fn(r, c, |_, _| {
            if nonneg {
                rng.gen_range(0.0..1.0)
            } else {
                rng.gen_range(-1.0..1.0)
            }
        })
    }

    #[test]
    fn sparsity_examples() {
        let mut onehot = vec![0.0; 9];
        onehot[4] = 2.0;
        assert_eq!(hoyer_sparsity(&onehot).unwrap(), 1.0);
        assert!(hoyer_sparsity(&[0.7; 6]).unwrap().abs() < 1e-15);
        assert!(
            (hoyer_sparsity(&[1.0, 1.0, 0.0, 0.0]).unwrap() - 0.585_786_437_626_905).abs() < 1e-12
        );
        assert!(hoyer_sparsity(&[1.0]).is_err());

        let hot = Mat::from_fn(3, 5, |r, c| if c == r { 1.0 } else { 0.0 });
        assert_eq!(mean_sparsity(&hot).unwrap(), 1.0);
        assert!(
            mean_sparsity(&Mat::from_fn(3, 5, |_, _| 1.0))
                .unwrap()
                .abs()
                < 1e-15
        );
        let mixed = Mat::from_rows(&[[0.0, 1.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]]).unwrap();
        assert!((mean_sparsity(&mixed).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn encode_zero_input_gives_zero_scores() {
        let mut model = NcmfModel::new(4, 5, 1).unwrap();
        model.enc1_bias.data_mut().fill(0.0);
        model.enc2_bias.data_mut().fill(0.0);
        let h = model.encode_mat(&Mat::zeros(12, 5)).unwrap();
        assert_eq!(h.matrix(), &Mat::zeros(4, 12));
    }

    #[test]
    fn encode_is_nonnegative_and_length_preserving() {
        let model = NcmfModel::new(6, 7, 2).unwrap();
        for t in [1, 2, 3, 17] {
            let h = model
                .encode_mat(&random_mat(t, 5, t as u64, false))
                .unwrap();
            assert_eq!(h.matrix().shape(), (6, t));
            assert!(h.matrix().data().iter().all(|&v| v >= 0.0));
        }
        assert!(matches!(
            model.encode_mat(&Mat::zeros(5, 4)),
            Err(NcmfError::Dimension(_))
        ));
    }

    #[test]
    fn single_lag_decoder_is_matmul() {
        let model = NcmfModel::new(3, 1, 3).unwrap();
        let h = random_mat(3, 8, 4, true);
        let y = model
            .decode(&GesturalScores::new(h.clone()).unwrap())
            .unwrap();
        let expect = h.transpose().matmul(&model.kernel_at(0)).unwrap();
        assert!(y.matrix().sub(&expect).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn impulse_traces_out_the_kernel() {
        let model = NcmfModel::new(3, 4, 5).unwrap();
        let (d, tau0, t) = (1, 2, 10);
        let mut h = Mat::zeros(3, t);
        h[(d, tau0)] = 1.0;
        let y = model.decode(&GesturalScores::new(h).unwrap()).unwrap();
        for tau in 0..t {
            for c in 0..FACTORS {
                let expect = if (tau0..tau0 + 4).contains(&tau) {
                    model.kernel_at(tau - tau0)[(d, c)]
                } else {
                    0.0
                };
                assert_eq!(y.matrix()[(tau, c)], expect);
            }
        }
    }

    #[test]
    fn decoder_is_shift_equivariant() {
        let model = NcmfModel::new(3, 4, 6).unwrap();
        let h = random_mat(3, 12, 7, true);
        let mut shifted = Mat::zeros(3, 12);
        for d in 0..3 {
            for tau in 1..12 {
                shifted[(d, tau)] = h[(d, tau - 1)];
            }
        }
        let y = model.decode_linear(&h).unwrap();
        let ys = model.decode_linear(&shifted).unwrap();
        for tau in 1..12 {
            for c in 0..FACTORS {
                assert!((ys[(tau, c)] - y[(tau - 1, c)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn decoder_is_linear() {
        let model = NcmfModel::new(4, 5, 8).unwrap();
        let h1 = random_mat(4, 9, 9, true);
        let h2 = random_mat(4, 9, 10, true);
        let (a, b) = (0.7, -1.3);
        let lhs = model
            .decode_linear(&h1.scale(a).add(&h2.scale(b)).unwrap())
            .unwrap();
        let rhs = model
            .decode_linear(&h1)
            .unwrap()
            .scale(a)
            .add(&model.decode_linear(&h2).unwrap().scale(b))
            .unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-10);
    }

    fn onehot_factors(p: usize) -> FactorSet {
        let mut f = Mat::zeros(2 * p, 5);
        for c in 0..5 {
            f[(2 * c + 1, c)] = 1.0;
        }
        FactorSet::new(f).unwrap()
    }

    #[test]
    fn gestures_with_onehot_factors_reindex_w() {
        let model = NcmfModel::new(3, 2, 11).unwrap();
        let g = compose_gestures(&model, &onehot_factors(6)).unwrap();
        for lag in 0..2 {
            let w = model.kernel_at(lag);
            for d in 0..3 {
                for c in 0..5 {
                    assert_eq!(g.taps()[lag][(d, 2 * c + 1)], w[(d, c)]);
                    assert_eq!(g.taps()[lag][(d, 2 * c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_decoder_gives_zero_gestures() {
        let mut model = NcmfModel::new(3, 2, 12).unwrap();
        model.dec.data_mut().fill(0.0);
        let g = compose_gestures(&model, &onehot_factors(6)).unwrap();
        assert!(g.taps().iter().all(|m| m.max_abs() == 0.0));
    }

    #[test]
    fn gesture_reconstruction_commutes_with_factors() {
        let model = NcmfModel::new(4, 5, 13).unwrap();
        let f = FactorSet::new(random_mat(12, 5, 14, false)).unwrap();
        let h = random_mat(4, 20, 15, true);
        let via_g = compose_gestures(&model, &f)
            .unwrap()
            .reconstruct(&h)
            .unwrap();
        let y = model.decode_linear(&h).unwrap();
        let via_f = f.matrix().matmul(&y.transpose()).unwrap();
        assert!(via_g.sub(&via_f).unwrap().max_abs() <= 1e-10);
        assert_eq!(
            compose_gestures(&model, &f).unwrap().trajectory(2).shape(),
            (5, 12)
        );
    }

    #[test]
    fn total_loss_examples() {
        let y = random_mat(6, 5, 16, false);
        let h = Mat::from_fn(3, 6, |r, c| if c == r { 1.0 } else { 0.0 });
        let zero = TrainConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(total_loss(&y, &y, &h, 0.0, &zero).unwrap(), 0.0);
        let half = TrainConfig {
            lambda1: 0.5,
            lambda2: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(total_loss(&y, &y, &h, 0.0, &half).unwrap(), -0.5);

        // Sparser H at equal reconstruction lowers the loss.
        let dense = Mat::from_fn(3, 6, |_, _| 1.0);
        assert!(
            total_loss(&y, &y, &h, 0.0, &half).unwrap()
                < total_loss(&y, &y, &dense, 0.0, &half).unwrap()
        );
        assert!(total_loss(&y, &Mat::zeros(6, 4), &h, 0.0, &half).is_err());
    }
}
