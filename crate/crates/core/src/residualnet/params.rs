use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetConfig;

/// Same-padded 1-D convolution over the single residual channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBranch {
    pub kernel: usize,
    pub filters: usize,
    /// `filters × kernel`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// LSTM cell with gate blocks ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub input: usize,
    pub hidden: usize,
    /// `4·hidden × input`
    pub w_ih: Vec<f64>,
    /// `4·hidden × hidden`
    pub w_hh: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmLayer {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

/// Volatility-gated attention: `score_t = w · tanh(W_h h_t + W_v v_t + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    pub dim: usize,
    /// Width of `h_t` (twice the LSTM units).
    pub hidden: usize,
    /// `dim × hidden`
    pub w_h: Vec<f64>,
    /// Column vector lifting the scalar volatility into `dim`.
    pub w_v: Vec<f64>,
    pub bias: Vec<f64>,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseHead {
    pub weight: Vec<f64>,
    /// Single output bias, stored as a one-element tensor.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub branches: Vec<ConvBranch>,
    pub layers: Vec<BiLstmLayer>,
    pub attention: Attention,
    pub head: DenseHead,
}

fn glorot(rng: &mut ChaCha8Rng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

impl LstmCell {
    fn init(rng: &mut ChaCha8Rng, input: usize, hidden: usize) -> Self {
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
        LstmCell {
            input,
            hidden,
            w_ih: glorot(rng, 4 * hidden * input, input, 4 * hidden),
            w_hh: glorot(rng, 4 * hidden * hidden, hidden, 4 * hidden),
            bias,
        }
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            input,
            hidden,
            w_ih: vec![0.0; 4 * hidden * input],
            w_hh: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }
}

impl NetParams {
    /// Glorot-uniform weights, zero biases except the LSTM forget gates (1.0).
    pub fn init(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let branches = cfg
            .kernel_sizes
            .iter()
            .zip(&cfg.filters_per_branch)
            .map(|(&k, &f)| ConvBranch {
                kernel: k,
                filters: f,
                weight: glorot(rng, f * k, k, f * k),
                bias: vec![0.0; f],
            })
            .collect();
        let u = cfg.bilstm_units;
        let mut input = cfg.channels();
        let mut layers = Vec::with_capacity(cfg.bilstm_layers);
        for _ in 0..cfg.bilstm_layers {
            layers.push(BiLstmLayer {
                forward: LstmCell::init(rng, input, u),
                backward: LstmCell::init(rng, input, u),
            });
            input = 2 * u;
        }
        let a = cfg.attention_dim();
        let hidden = 2 * u;
        let attention = Attention {
            dim: a,
            hidden,
            w_h: glorot(rng, a * hidden, hidden, a),
            w_v: glorot(rng, a, 1, a),
            bias: vec![0.0; a],
            w: glorot(rng, a, a, 1),
        };
        let head = DenseHead {
            weight: glorot(rng, hidden, hidden, 1),
            bias: vec![0.0],
        };
        NetParams {
            branches,
            layers,
            attention,
            head,
        }
    }

    /// All-zero tensors with the same shapes.
    pub fn zeros_like(&self) -> Self {
        NetParams {
            branches: self
                .branches
                .iter()
                .map(|b| ConvBranch {
                    kernel: b.kernel,
                    filters: b.filters,
                    weight: vec![0.0; b.weight.len()],
                    bias: vec![0.0; b.bias.len()],
                })
                .collect(),
            layers: self
                .layers
                .iter()
                .map(|l| BiLstmLayer {
                    forward: LstmCell::zeros(l.forward.input, l.forward.hidden),
                    backward: LstmCell::zeros(l.backward.input, l.backward.hidden),
                })
                .collect(),
            attention: Attention {
                dim: self.attention.dim,
                hidden: self.attention.hidden,
                w_h: vec![0.0; self.attention.w_h.len()],
                w_v: vec![0.0; self.attention.w_v.len()],
                bias: vec![0.0; self.attention.bias.len()],
                w: vec![0.0; self.attention.w.len()],
            },
            head: DenseHead {
                weight: vec![0.0; self.head.weight.len()],
                bias: vec![0.0],
            },
        }
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, _) in self.branches.iter().enumerate() {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
        }
        for (l, _) in self.layers.iter().enumerate() {
            for dir in ["fwd", "bwd"] {
                for t in ["w_ih", "w_hh", "bias"] {
                    names.push(format!("lstm{l}.{dir}.{t}"));
                }
            }
        }
        for t in ["w_h", "w_v", "bias", "w"] {
            names.push(format!("attention.{t}"));
        }
        names.push("dense.weight".into());
        names.push("dense.bias".into());
        names
    }

    /// Tensors in the order of [`NetParams::tensor_names`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in &self.branches {
            out.push(&b.weight);
            out.push(&b.bias);
        }
        for l in &self.layers {
            for c in [&l.forward, &l.backward] {
                out.push(&c.w_ih);
                out.push(&c.w_hh);
                out.push(&c.bias);
            }
        }
        let a = &self.attention;
        out.extend([&a.w_h[..], &a.w_v[..], &a.bias[..], &a.w[..]]);
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.branches {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
        }
        for l in &mut self.layers {
            for c in [&mut l.forward, &mut l.backward] {
                out.push(&mut c.w_ih);
                out.push(&mut c.w_hh);
                out.push(&mut c.bias);
            }
        }
        let a = &mut self.attention;
        out.push(&mut a.w_h);
        out.push(&mut a.w_v);
        out.push(&mut a.bias);
        out.push(&mut a.w);
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = value);
        }
    }

    /// Input channel count of the first LSTM layer.
    pub fn channels(&self) -> usize {
        self.branches.iter().map(|b| b.filters).sum()
    }

    pub fn units(&self) -> usize {
        self.attention.hidden / 2
    }

    /// Shape consistency between consecutive blocks.
    pub fn check_shapes(&self) -> bool {
        let branches_ok = self
            .branches
            .iter()
            .all(|b| b.kernel % 2 == 1 && b.weight.len() == b.kernel * b.filters && b.bias.len() == b.filters);
        let u = self.units();
        let mut input = self.channels();
        let mut layers_ok = !self.layers.is_empty();
        for l in &self.layers {
            for c in [&l.forward, &l.backward] {
                layers_ok &= c.input == input
                    && c.hidden == u
                    && c.w_ih.len() == 4 * u * input
                    && c.w_hh.len() == 4 * u * u
                    && c.bias.len() == 4 * u;
            }
            input = 2 * u;
        }
        let a = &self.attention;
        let att_ok =
            a.w_h.len() == a.dim * a.hidden && a.w_v.len() == a.dim && a.bias.len() == a.dim && a.w.len() == a.dim;
        branches_ok && layers_ok && att_ok && self.head.weight.len() == a.hidden && self.head.bias.len() == 1
    }
}
