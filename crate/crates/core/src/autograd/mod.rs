//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation as it executes (define-by-run). Each
//! recorded node owns its forward value; [`Tape::backward`] walks the nodes in
//! exact reverse order and accumulates gradients additively, so a value used
//! twice receives the sum of both contributions.
//!
//! The op set is what the convolutional autoencoder needs: 1-D convolution
//! with same or causal padding, bias add, ReLU, elementwise arithmetic,
//! reductions, the mean Hoyer sparsity of matrix rows, and an escape hatch
//! ([`Tape::external`]) for scalar losses whose gradient is computed outside
//! the tape, such as CTC. Shapes never broadcast.
//!
//! ```
//! use artic::autograd::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::from_vec(vec![3], vec![1.0, -2.0, 3.0]).unwrap());
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[2.0, -4.0, 6.0]);
//! ```

mod adam;
mod gradcheck;

use thiserror::Error;

use crate::numkit::Mat;

pub use adam::{AdamConfig, AdamState, LrSchedule};
pub use gradcheck::grad_check;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutogradError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("tape state: {0}")]
    State(String),
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, AutogradError>;

/// Dense tensor of up to three dimensions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        assert!(shape.len() <= 3, "tensors have at most three dimensions");
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > 3 {
            return Err(AutogradError::Dimension(format!(
                "{}-d tensor",
                shape.len()
            )));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(AutogradError::Dimension(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    pub fn from_mat(m: &Mat) -> Self {
        Self {
            shape: vec![m.rows(), m.cols()],
            data: m.data().to_vec(),
        }
    }

    pub fn to_mat(&self) -> Result<Mat> {
        match self.shape[..] {
            [r, c] => Ok(Mat::from_vec(r, c, self.data.clone()).expect("shape checked")),
            _ => Err(AutogradError::Dimension(format!(
                "shape {:?} is not a matrix",
                self.shape
            ))),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(AutogradError::Argument(format!(
                "item() on shape {:?}",
                self.shape
            )))
        }
    }

    fn add_assign(&mut self, other: &[f64]) {
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// `out(τ) = Σ_i k(i)ᵀ·x(τ + i − ⌊(K−1)/2⌋)`, zero outside `[0, t)`.
    Same,
    /// `out(τ) = Σ_i k(i)ᵀ·x(τ − i)`, zero for `τ − i < 0`.
    Causal,
}

impl Padding {
    /// Input offset that tap `i` reads relative to the output frame.
    fn shift(self, i: usize, k: usize) -> isize {
        match self {
            Padding::Same => i as isize - ((k - 1) / 2) as isize,
            Padding::Causal => -(i as isize),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        padding: Padding,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    MeanHoyer(Var),
    External {
        input: Var,
        grad: Tensor,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Option<Vec<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last [`Tape::backward`] loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Result<&Tensor> {
        self.grads
            .as_ref()
            .map(|g| &g[v.0])
            .ok_or_else(|| AutogradError::State("no backward pass has run".into()))
    }

    /// Clears gradients so that `backward` may run again.
    pub fn zero_grad(&mut self) {
        self.grads = None;
    }

    fn shape_of(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(AutogradError::Dimension(format!(
                "{op} of shapes {:?} and {:?}",
                self.shape_of(a),
                self.shape_of(b)
            )));
        }
        Ok(())
    }

    /// Input `C_in×t`, kernel `K×C_in×C_out`, output `C_out×t`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, padding: Padding) -> Result<Var> {
        let (c_in, t) = match self.shape_of(input) {
            &[c, t] => (c, t),
            s => return Err(AutogradError::Dimension(format!("conv input shape {s:?}"))),
        };
        let (k, kc_in, c_out) = match self.shape_of(kernel) {
            &[k, ci, co] => (k, ci, co),
            s => return Err(AutogradError::Dimension(format!("conv kernel shape {s:?}"))),
        };
        if kc_in != c_in {
            return Err(AutogradError::Dimension(format!(
                "kernel expects {kc_in} input channels, input has {c_in}"
            )));
        }
        if t == 0 || k == 0 {
            return Err(AutogradError::Argument("empty convolution".into()));
        }
        let mut out = Tensor::zeros(&[c_out, t]);
        conv_forward(
            self.value(input).data(),
            self.value(kernel).data(),
            out.data_mut(),
            ConvDims {
                c_in,
                c_out,
                k,
                t,
                padding,
            },
        );
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                kernel,
                padding,
            },
        ))
    }

    /// Adds `bias[c]` to every frame of channel `c` of a `C×t` input.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (c, t) = match self.shape_of(x) {
            &[c, t] => (c, t),
            s => return Err(AutogradError::Dimension(format!("bias input shape {s:?}"))),
        };
        if self.shape_of(bias) != [c] {
            return Err(AutogradError::Dimension(format!(
                "bias shape {:?} for {c} channels",
                self.shape_of(bias)
            )));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data().to_vec();
        for (ch, row) in out.data_mut().chunks_mut(t).enumerate() {
            row.iter_mut().for_each(|v| *v += b[ch]);
        }
        Ok(self.push(out, Op::AddBias { x, bias }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        self.same_shape(a, b, name)?;
        let va = self.value(a);
        let data = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(Tensor {
            shape: va.shape.clone(),
            data,
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Mean squared difference over all elements.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Mean over rows of the Hoyer sparsity `(√t − ‖h‖₁/‖h‖₂)/(√t − 1)` of a
    /// `D×t` matrix. All-zero rows count as 1 and pass no gradient.
    pub fn mean_hoyer(&mut self, h: Var) -> Result<Var> {
        let (d, t) = match self.shape_of(h) {
            &[d, t] => (d, t),
            s => return Err(AutogradError::Dimension(format!("hoyer input shape {s:?}"))),
        };
        if t < 2 || d == 0 {
            return Err(AutogradError::Argument(format!(
                "hoyer sparsity needs D ≥ 1, t ≥ 2; got {d}×{t}"
            )));
        }
        let data = self.value(h).data();
        let total: f64 = data.chunks(t).map(|row| hoyer_row(row).0).sum();
        Ok(self.push(Tensor::scalar(total / d as f64), Op::MeanHoyer(h)))
    }

    /// Scalar node with value `value` whose gradient with respect to `input`
    /// is the precomputed `grad`.
    pub fn external(&mut self, input: Var, value: f64, grad: Tensor) -> Result<Var> {
        if grad.shape() != self.shape_of(input) {
            return Err(AutogradError::Dimension(format!(
                "external gradient shape {:?} for input {:?}",
                grad.shape(),
                self.shape_of(input)
            )));
        }
        if !value.is_finite() || !grad.is_finite() {
            return Err(AutogradError::Domain("external node is not finite".into()));
        }
        Ok(self.push(Tensor::scalar(value), Op::External { input, grad }))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.grads.is_some() {
            return Err(AutogradError::State(
                "backward already ran; call zero_grad first".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(AutogradError::Argument(format!(
                "loss must be scalar, got shape {:?}",
                self.shape_of(loss)
            )));
        }
        if !self.value(loss).is_finite() {
            return Err(AutogradError::Domain("loss is not finite".into()));
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape()))
            .collect();
        grads[loss.0].data[0] = 1.0;

        for idx in (0..=loss.0).rev() {
            let g = std::mem::replace(&mut grads[idx], Tensor::zeros(&[]));
            if g.data.iter().all(|&v| v == 0.0) {
                grads[idx] = g;
                continue;
            }
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv1d {
                    input,
                    kernel,
                    padding,
                } => {
                    let xin = &self.nodes[input.0].value;
                    let ker = &self.nodes[kernel.0].value;
                    let (c_in, t) = (xin.shape[0], xin.shape[1]);
                    let (k, c_out) = (ker.shape[0], ker.shape[2]);
                    let dims = ConvDims {
                        c_in,
                        c_out,
                        k,
                        t,
                        padding: *padding,
                    };
                    let mut gx = vec![0.0; xin.len()];
                    let mut gk = vec![0.0; ker.len()];
                    conv_backward(xin.data(), ker.data(), g.data(), &mut gx, &mut gk, dims);
                    grads[input.0].add_assign(&gx);
                    grads[kernel.0].add_assign(&gk);
                }
                Op::AddBias { x, bias } => {
                    let c = grads[bias.0].len();
                    let t = g.len() / c.max(1);
                    grads[x.0].add_assign(g.data());
                    for (ch, row) in g.data().chunks(t).enumerate() {
                        grads[bias.0].data[ch] += row.iter().sum::<f64>();
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    for ((dst, &gv), &inp) in
                        grads[x.0].data.iter_mut().zip(g.data()).zip(xv.data())
                    {
                        if inp > 0.0 {
                            *dst += gv;
                        }
                    }
                }
                Op::Add(a, b) => {
                    grads[a.0].add_assign(g.data());
                    grads[b.0].add_assign(g.data());
                }
                Op::Sub(a, b) => {
                    grads[a.0].add_assign(g.data());
                    for (dst, &gv) in grads[b.0].data.iter_mut().zip(g.data()) {
                        *dst -= gv;
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    let ga: Vec<f64> = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    let gb: Vec<f64> = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    grads[a.0].add_assign(&ga);
                    grads[b.0].add_assign(&gb);
                }
                Op::Scale(x, s) => {
                    for (dst, &gv) in grads[x.0].data.iter_mut().zip(g.data()) {
                        *dst += s * gv;
                    }
                }
                Op::Sum(x) => {
                    let gv = g.data[0];
                    grads[x.0].data.iter_mut().for_each(|d| *d += gv);
                }
                Op::Mean(x) => {
                    let n = grads[x.0].len().max(1) as f64;
                    let gv = g.data[0] / n;
                    grads[x.0].data.iter_mut().for_each(|d| *d += gv);
                }
                Op::MeanHoyer(h) => {
                    let hv = &self.nodes[h.0].value;
                    let (d, t) = (hv.shape[0], hv.shape[1]);
                    let gv = g.data[0] / d as f64;
                    let dst = &mut grads[h.0].data;
                    for (row, out) in hv.data().chunks(t).zip(dst.chunks_mut(t)) {
                        hoyer_row_grad(row, gv, out);
                    }
                }
                Op::External { input, grad } => {
                    let gv = g.data[0];
                    for (dst, &e) in grads[input.0].data.iter_mut().zip(grad.data()) {
                        *dst += gv * e;
                    }
                }
            }
            grads[idx] = g;
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(AutogradError::Domain("non-finite gradient".into()));
        }
        self.grads = Some(grads);
        Ok(())
    }
}

/// `(s, L1, L2)` for one row.
pub(crate) fn hoyer_row(row: &[f64]) -> (f64, f64, f64) {
    let l1: f64 = row.iter().map(|v| v.abs()).sum();
    let l2 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if l2 == 0.0 {
        return (1.0, 0.0, 0.0);
    }
    let rt = (row.len() as f64).sqrt();
    ((rt - l1 / l2) / (rt - 1.0), l1, l2)
}

/// Accumulates `scale · ∂s/∂row` into `out`.
fn hoyer_row_grad(row: &[f64], scale: f64, out: &mut [f64]) {
    let (_, l1, l2) = hoyer_row(row);
    if l2 == 0.0 {
        return;
    }
    let rt = (row.len() as f64).sqrt();
    let c = -scale / (rt - 1.0);
    let l2_3 = l2 * l2 * l2;
    for (o, &v) in out.iter_mut().zip(row) {
        let sign = if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        };
        *o += c * (sign / l2 - l1 * v / l2_3);
    }
}

#[derive(Clone, Copy)]
struct ConvDims {
    c_in: usize,
    c_out: usize,
    k: usize,
    t: usize,
    padding: Padding,
}

/// Output frames `τ` for which `τ + shift` lies inside `[0, t)`.
fn valid_range(shift: isize, t: usize) -> std::ops::Range<usize> {
    let lo = (-shift).max(0) as usize;
    let hi = (t as isize - shift).clamp(0, t as isize) as usize;
    lo.min(hi)..hi
}

fn conv_forward(x: &[f64], kernel: &[f64], out: &mut [f64], d: ConvDims) {
    let t = d.t;
    for i in 0..d.k {
        let shift = d.padding.shift(i, d.k);
        let range = valid_range(shift, t);
        if range.is_empty() {
            continue;
        }
        let src_lo = (range.start as isize + shift) as usize;
        let n = range.len();
        for ci in 0..d.c_in {
            let src = &x[ci * t + src_lo..ci * t + src_lo + n];
            let taps = &kernel[(i * d.c_in + ci) * d.c_out..(i * d.c_in + ci + 1) * d.c_out];
            for (co, &w) in taps.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let dst = &mut out[co * t + range.start..co * t + range.end];
                for (o, &s) in dst.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
    }
}

fn conv_backward(
    x: &[f64],
    kernel: &[f64],
    g_out: &[f64],
    gx: &mut [f64],
    gk: &mut [f64],
    d: ConvDims,
) {
    let t = d.t;
    for i in 0..d.k {
        let shift = d.padding.shift(i, d.k);
        let range = valid_range(shift, t);
        if range.is_empty() {
            continue;
        }
        let src_lo = (range.start as isize + shift) as usize;
        let n = range.len();
        for ci in 0..d.c_in {
            let src = &x[ci * t + src_lo..ci * t + src_lo + n];
            let base = (i * d.c_in + ci) * d.c_out;
            let gsrc = &mut gx[ci * t + src_lo..ci * t + src_lo + n];
            for co in 0..d.c_out {
                let go = &g_out[co * t + range.start..co * t + range.end];
                let w = kernel[base + co];
                let mut acc = 0.0;
                for ((gs, &s), &gv) in gsrc.iter_mut().zip(src).zip(go) {
                    acc += gv * s;
                    *gs += w * gv;
                }
                gk[base + co] += acc;
            }
        }
    }
}
