//! Layers, parameter bookkeeping and the Adam optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{sigmoid, Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// Anything that owns trainable tensors.
///
/// `params` and `params_mut` must list tensors in the same order in which the
/// type's `bind` registers them on a [`Tape`], so that
/// [`super::Gradients::params`] lines up with `params_mut`.
pub trait Parameterized {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// All parameters flattened in registration order.
    fn flat(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }
}

/// Uniform `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::from_vec(rows, cols, data)
}

/// `y = x W + b` with `W: in x out`, `b: 1 x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

pub struct BoundLinear<'t> {
    weight: Var<'t>,
    bias: Var<'t>,
}

impl Linear {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot(input, output, rng),
            bias: Tensor::zeros(1, output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add_row(&self.bias)
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundLinear<'t> {
        BoundLinear {
            weight: tape.param(&self.weight),
            bias: tape.param(&self.bias),
        }
    }
}

impl<'t> BoundLinear<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.weight.tape()
    }

    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        x.matmul(self.weight)?.add_row(self.bias)
    }
}

impl Parameterized for Linear {
    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Linear-ReLU-linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

pub struct BoundMlp<'t> {
    hidden: BoundLinear<'t>,
    output: BoundLinear<'t>,
}

impl Mlp {
    pub fn new<R: Rng>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Self {
            hidden: Linear::new(input, hidden, rng),
            output: Linear::new(hidden, output, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.hidden.forward(x)?.map(|v| v.max(0.0));
        self.output.forward(&h)
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            hidden: self.hidden.bind(tape),
            output: self.output.bind(tape),
        }
    }
}

impl<'t> BoundMlp<'t> {
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let h = self.hidden.forward(x)?.relu();
        self.output.forward(h)
    }
}

impl Parameterized for Mlp {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.hidden.params();
        p.extend(self.output.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.hidden.params_mut();
        p.extend(self.output.params_mut());
        p
    }
}

/// Gated recurrent update `h' = (1 - z) * h + z * tanh(W_h x + U_h (r * h))`
/// with update gate `z` and reset gate `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub input_update: Linear,
    pub input_reset: Linear,
    pub input_candidate: Linear,
    pub state_update: Tensor,
    pub state_reset: Tensor,
    pub state_candidate: Tensor,
}

pub struct BoundGru<'t> {
    input_update: BoundLinear<'t>,
    input_reset: BoundLinear<'t>,
    input_candidate: BoundLinear<'t>,
    state_update: Var<'t>,
    state_reset: Var<'t>,
    state_candidate: Var<'t>,
}

impl GruCell {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            input_update: Linear::new(input, hidden, rng),
            input_reset: Linear::new(input, hidden, rng),
            input_candidate: Linear::new(input, hidden, rng),
            state_update: glorot(hidden, hidden, rng),
            state_reset: glorot(hidden, hidden, rng),
            state_candidate: glorot(hidden, hidden, rng),
        }
    }

    /// One step over a batch: `x: b x input`, `h: b x hidden`.
    pub fn forward(&self, x: &Tensor, h: &Tensor) -> Result<Tensor> {
        let gate = |lin: &Linear, u: &Tensor, s: &Tensor| -> Result<Tensor> {
            lin.forward(x)?.zip_map(&s.matmul(u)?, "gru", |a, b| sigmoid(a + b))
        };
        let z = gate(&self.input_update, &self.state_update, h)?;
        let r = gate(&self.input_reset, &self.state_reset, h)?;
        let rh = r.zip_map(h, "gru", |a, b| a * b)?;
        let cand = self
            .input_candidate
            .forward(x)?
            .zip_map(&rh.matmul(&self.state_candidate)?, "gru", |a, b| (a + b).tanh())?;
        let mut out = h.clone();
        for ((o, &zv), &cv) in out.data_mut().iter_mut().zip(z.data()).zip(cand.data()) {
            *o = (1.0 - zv) * *o + zv * cv;
        }
        Ok(out)
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundGru<'t> {
        BoundGru {
            input_update: self.input_update.bind(tape),
            input_reset: self.input_reset.bind(tape),
            input_candidate: self.input_candidate.bind(tape),
            state_update: tape.param(&self.state_update),
            state_reset: tape.param(&self.state_reset),
            state_candidate: tape.param(&self.state_candidate),
        }
    }
}

impl<'t> BoundGru<'t> {
    pub fn forward(&self, x: Var<'t>, h: Var<'t>) -> Result<Var<'t>> {
        let z = self.input_update.forward(x)?.add(h.matmul(self.state_update)?)?.sigmoid();
        let r = self.input_reset.forward(x)?.add(h.matmul(self.state_reset)?)?.sigmoid();
        let cand = self
            .input_candidate
            .forward(x)?
            .add(r.mul(h)?.matmul(self.state_candidate)?)?
            .tanh();
        z.one_minus().mul(h)?.add(z.mul(cand)?)
    }
}

impl Parameterized for GruCell {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.input_update.params();
        p.extend(self.input_reset.params());
        p.extend(self.input_candidate.params());
        p.extend([&self.state_update, &self.state_reset, &self.state_candidate]);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.input_update.params_mut();
        p.extend(self.input_reset.params_mut());
        p.extend(self.input_candidate.params_mut());
        p.extend([
            &mut self.state_update,
            &mut self.state_reset,
            &mut self.state_candidate,
        ]);
        p
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (j, (w, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gv;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gv * gv;
                *w -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}
