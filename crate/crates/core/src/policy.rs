//! Feedforward feedback policy with analytic Jacobians.
//!
//! Parameters are one flat vector, layer by layer: the weight matrix in
//! row-major order (`n_out × n_in`) followed by the bias vector.

use crate::controller::Squash;
use crate::rollout::Controller;
use crate::{Error, Matrix, Result, Vector};

/// Layout version of the flat parameter vector, stored in parameter files.
pub const PARAM_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// How raw states are turned into network inputs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum InputEncoding {
    #[default]
    Identity,
    /// Listed state indices are angles, each replaced by `(sin, cos)`.
    SinCos { angles: Vec<usize> },
}

impl InputEncoding {
    pub fn input_dim(&self, state_dim: usize) -> usize {
        match self {
            InputEncoding::Identity => state_dim,
            InputEncoding::SinCos { angles } => state_dim + angles.len(),
        }
    }

    fn encode(&self, x: &Vector) -> Vec<f64> {
        match self {
            InputEncoding::Identity => x.as_slice().to_vec(),
            InputEncoding::SinCos { angles } => {
                let mut out = Vec::with_capacity(x.len() + angles.len());
                for (i, &v) in x.iter().enumerate() {
                    if angles.contains(&i) {
                        out.push(v.sin());
                        out.push(v.cos());
                    } else {
                        out.push(v);
                    }
                }
                out
            }
        }
    }

    /// Jacobian of the encoding, `n_in × n`.
    fn jacobian(&self, x: &Vector) -> Matrix {
        match self {
            InputEncoding::Identity => Matrix::identity(x.len(), x.len()),
            InputEncoding::SinCos { angles } => {
                let mut jac = Matrix::zeros(self.input_dim(x.len()), x.len());
                let mut row = 0;
                for (i, &v) in x.iter().enumerate() {
                    if angles.contains(&i) {
                        jac[(row, i)] = v.cos();
                        jac[(row + 1, i)] = -v.sin();
                        row += 2;
                    } else {
                        jac[(row, i)] = 1.0;
                        row += 1;
                    }
                }
                jac
            }
        }
    }
}

/// `u = squash(u_max · (W_L · σ(… σ(W_1 φ(x) + b_1) …) + b_L))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    /// `[n_in, hidden…, m]`.
    pub layer_sizes: Vec<usize>,
    pub state_dim: usize,
    pub activation: Activation,
    /// Saturation of the last layer. Its input is the last layer scaled by
    /// the limit, so `Tanh` gives `u_max · tanh(z)` and `Clip` gives
    /// `clamp(u_max · z, −u_max, u_max)`; both have slope `u_max` at zero.
    pub output: Squash,
    pub encoding: InputEncoding,
}

/// Unflattened weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayers {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl MlpLayers {
    pub fn flatten(&self) -> Vector {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for i in 0..w.nrows() {
                out.extend(w.row(i).iter());
            }
            out.extend(b.iter());
        }
        Vector::from_vec(out)
    }
}

struct ForwardPass {
    /// Activations per layer; `acts[0]` is the encoded input.
    acts: Vec<Vec<f64>>,
    /// Scaled last-layer values before saturation.
    pre_output: Vec<f64>,
    output: Vec<f64>,
}

impl MlpPolicy {
    /// Hidden widths `[32, 32]`, tanh activations, `u_max·tanh` output.
    pub fn standard(state_dim: usize, control_dim: usize, encoding: InputEncoding, u_max: f64) -> Self {
        let n_in = encoding.input_dim(state_dim);
        Self {
            layer_sizes: vec![n_in, 32, 32, control_dim],
            state_dim,
            activation: Activation::Tanh,
            output: Squash::Tanh { limit: u_max },
            encoding,
        }
    }

    fn output_gain(&self) -> f64 {
        self.output.limit().unwrap_or(1.0)
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        // (n_in, n_out, weight offset, bias offset)
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let entry = (n_in, n_out, off, off + n_in * n_out);
                off += n_in * n_out + n_out;
                entry
            })
            .collect()
    }

    fn check(&self, theta: &Vector) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "mlp parameters",
                expected: self.param_count(),
                actual: theta.len(),
            });
        }
        Ok(())
    }

    pub fn unflatten(&self, theta: &Vector) -> Result<MlpLayers> {
        self.check(theta)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (n_in, n_out, w_off, b_off) in self.layer_offsets() {
            weights.push(Matrix::from_row_slice(n_out, n_in, &theta.as_slice()[w_off..w_off + n_in * n_out]));
            biases.push(Vector::from_row_slice(&theta.as_slice()[b_off..b_off + n_out]));
        }
        Ok(MlpLayers { weights, biases })
    }

    fn forward_pass(&self, theta: &[f64], x: &Vector) -> ForwardPass {
        let layers = self.layer_offsets();
        let last = layers.len() - 1;
        let mut acts = vec![self.encoding.encode(x)];
        let (mut pre_output, mut output) = (Vec::new(), Vec::new());
        for (l, &(n_in, n_out, w_off, b_off)) in layers.iter().enumerate() {
            let input = &acts[l];
            let z: Vec<f64> = (0..n_out)
                .map(|i| {
                    let row = &theta[w_off + i * n_in..w_off + (i + 1) * n_in];
                    row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>() + theta[b_off + i]
                })
                .collect();
            if l == last {
                let gain = self.output_gain();
                pre_output = z.into_iter().map(|v| gain * v).collect::<Vec<f64>>();
                output = pre_output.iter().map(|&v| self.output.apply(v)).collect();
            } else {
                acts.push(z.into_iter().map(|v| self.activation.apply(v)).collect());
            }
        }
        ForwardPass { acts, pre_output, output }
    }

    pub fn forward(&self, theta: &Vector, x: &Vector) -> Result<Vector> {
        self.check(theta)?;
        Ok(Vector::from_vec(self.forward_pass(theta.as_slice(), x).output))
    }

    /// Backpropagates the output cotangent `g` (length m). Adds `Gᵀg` into
    /// `param_grad` when given and returns `Lᵀg` (length n).
    fn backward(&self, theta: &[f64], x: &Vector, pass: &ForwardPass, g: &[f64], mut param_grad: Option<&mut [f64]>) -> Vector {
        let layers = self.layer_offsets();
        let last = layers.len() - 1;
        let gain = self.output_gain();
        let mut delta: Vec<f64> = pass.pre_output.iter().zip(g).map(|(&z, gi)| gi * gain * self.output.derivative(z)).collect();
        for l in (0..=last).rev() {
            let (n_in, n_out, w_off, b_off) = layers[l];
            let input = &pass.acts[l];
            if let Some(pg) = param_grad.as_deref_mut() {
                for i in 0..n_out {
                    let d = delta[i];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut pg[w_off + i * n_in..w_off + (i + 1) * n_in];
                    for (slot, a) in row.iter_mut().zip(input) {
                        *slot += d * a;
                    }
                    pg[b_off + i] += d;
                }
            }
            let mut back = vec![0.0; n_in];
            for i in 0..n_out {
                let d = delta[i];
                if d == 0.0 {
                    continue;
                }
                let row = &theta[w_off + i * n_in..w_off + (i + 1) * n_in];
                for (b, w) in back.iter_mut().zip(row) {
                    *b += w * d;
                }
            }
            if l > 0 {
                for (b, a) in back.iter_mut().zip(&pass.acts[l]) {
                    *b *= self.activation.derivative_from_output(*a);
                }
            }
            delta = back;
        }
        // delta is now the cotangent of the encoded input.
        let enc_jac = self.encoding.jacobian(x);
        enc_jac.tr_mul(&Vector::from_vec(delta))
    }

    /// `(L, G) = (∂π/∂x, ∂π/∂θ)` by reverse accumulation, one output at a time.
    pub fn policy_jacobians(&self, theta: &Vector, x: &Vector) -> Result<(Matrix, Matrix)> {
        self.check(theta)?;
        let m = *self.layer_sizes.last().expect("non-empty layer list");
        let pass = self.forward_pass(theta.as_slice(), x);
        let mut l = Matrix::zeros(m, self.state_dim);
        let mut g = Matrix::zeros(m, theta.len());
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            let mut row = vec![0.0; theta.len()];
            let lx = self.backward(theta.as_slice(), x, &pass, &e, Some(&mut row));
            l.set_row(i, &lx.transpose());
            g.set_row(i, &Vector::from_vec(row).transpose());
        }
        Ok((l, g))
    }
}

impl Controller for MlpPolicy {
    fn param_dim(&self) -> usize {
        self.param_count()
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn control_dim(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty layer list")
    }

    fn act(&self, theta: &Vector, _t: usize, x: &Vector) -> Vector {
        self.forward(theta, x).expect("policy parameter length checked by the problem")
    }

    fn jacobians(&self, theta: &Vector, _t: usize, x: &Vector) -> (Matrix, Matrix) {
        self.policy_jacobians(theta, x)
            .expect("policy parameter length checked by the problem")
    }

    fn accumulate_param_gradient(&self, theta: &Vector, _t: usize, x: &Vector, g: &Vector, out: &mut Vector) {
        let pass = self.forward_pass(theta.as_slice(), x);
        self.backward(theta.as_slice(), x, &pass, g.as_slice(), Some(out.as_mut_slice()));
    }
}
