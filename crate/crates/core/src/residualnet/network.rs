//! Forward pass with activation cache, and exact reverse-mode gradients.
//!
//! Shapes for a window of length `W`: the concatenated encoder output is
//! `W × C` (`C = Σ filters`), each BiLSTM layer emits `W × 2u`, attention
//! scores are `W`, the context is `2u` and the head emits one scalar.

use super::params::{LstmCell, NetParams};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `v_t = |r_t - r_{t-1}|` with `v_1 = 0`.
pub fn volatility(window: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(window.len());
    if !window.is_empty() {
        v.push(0.0);
    }
    v.extend(window.windows(2).map(|p| (p[1] - p[0]).abs()));
    v
}

/// Min-max scale to `[0, 1]`; a flat sequence maps to zeros.
pub fn normalize_unit(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x - lo) / (hi - lo)).collect()
}

/// Gate input to the attention layer: volatility min-max normalized within
/// the window. Invariant to affine rescaling of the window, so scaled and
/// raw residuals give the same gate.
pub fn gate_signal(window: &[f64]) -> Vec<f64> {
    normalize_unit(&volatility(window))
}

struct DirCache {
    /// Activated gates per time index, `W × 4u`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    hs: Vec<f64>,
}

struct LayerCache {
    input: Vec<f64>,
    in_width: usize,
    fwd: DirCache,
    bwd: DirCache,
    /// `W × 2u`, forward half then backward half.
    output: Vec<f64>,
}

/// Activations retained for backpropagation.
pub struct Cache {
    window: Vec<f64>,
    gate: Vec<f64>,
    /// Pre-activation conv outputs per branch, `filters × W`.
    conv_pre: Vec<Vec<f64>>,
    layers: Vec<LayerCache>,
    /// `tanh(W_h h_t + W_v v_t + b)`, `W × dim`.
    att_hidden: Vec<f64>,
    pub attention: Vec<f64>,
    context: Vec<f64>,
    pub prediction: f64,
}

fn lstm_forward(cell: &LstmCell, input: &[f64], in_width: usize, steps: usize, reverse: bool) -> DirCache {
    let u = cell.hidden;
    let mut gates = vec![0.0; steps * 4 * u];
    let mut cells = vec![0.0; steps * u];
    let mut hs = vec![0.0; steps * u];
    let mut h_prev = vec![0.0; u];
    let mut c_prev = vec![0.0; u];
    let mut z = vec![0.0; 4 * u];
    for s in 0..steps {
        let t = if reverse { steps - 1 - s } else { s };
        let x = &input[t * in_width..(t + 1) * in_width];
        z.copy_from_slice(&cell.bias);
        for r in 0..4 * u {
            let wi = &cell.w_ih[r * in_width..(r + 1) * in_width];
            let wh = &cell.w_hh[r * u..(r + 1) * u];
            let mut acc = 0.0;
            for k in 0..in_width {
                acc += wi[k] * x[k];
            }
            for k in 0..u {
                acc += wh[k] * h_prev[k];
            }
            z[r] += acc;
        }
        let g = &mut gates[t * 4 * u..(t + 1) * 4 * u];
        for j in 0..u {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[u + j]);
            let c_g = z[2 * u + j].tanh();
            let o_g = sigmoid(z[3 * u + j]);
            g[j] = i_g;
            g[u + j] = f_g;
            g[2 * u + j] = c_g;
            g[3 * u + j] = o_g;
            let c = f_g * c_prev[j] + i_g * c_g;
            cells[t * u + j] = c;
            hs[t * u + j] = o_g * c.tanh();
        }
        h_prev.copy_from_slice(&hs[t * u..(t + 1) * u]);
        c_prev.copy_from_slice(&cells[t * u..(t + 1) * u]);
    }
    DirCache { gates, cells, hs }
}

/// Backpropagate through one direction. `dh_out` is `W × u` (gradient
/// w.r.t. this direction's hidden outputs); input gradients are added into
/// `d_input` (`W × in_width`).
#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    cell: &LstmCell,
    grad: &mut LstmCell,
    cache: &DirCache,
    input: &[f64],
    in_width: usize,
    dh_out: &[f64],
    d_input: &mut [f64],
    reverse: bool,
) {
    let u = cell.hidden;
    let steps = dh_out.len() / u;
    let mut dh_next = vec![0.0; u];
    let mut dc_next = vec![0.0; u];
    let mut dz = vec![0.0; 4 * u];
    let zeros = vec![0.0; u];
    for s in (0..steps).rev() {
        let t = if reverse { steps - 1 - s } else { s };
        let (h_prev, c_prev) = if s == 0 {
            (&zeros[..], &zeros[..])
        } else {
            let tp = if reverse { t + 1 } else { t - 1 };
            (&cache.hs[tp * u..(tp + 1) * u], &cache.cells[tp * u..(tp + 1) * u])
        };
        let g = &cache.gates[t * 4 * u..(t + 1) * 4 * u];
        for j in 0..u {
            let dh = dh_out[t * u + j] + dh_next[j];
            let c = cache.cells[t * u + j];
            let tc = c.tanh();
            let (i_g, f_g, c_g, o_g) = (g[j], g[u + j], g[2 * u + j], g[3 * u + j]);
            let d_o = dh * tc;
            let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
            let d_i = dc * c_g;
            let d_g = dc * i_g;
            let d_f = dc * c_prev[j];
            dc_next[j] = dc * f_g;
            dz[j] = d_i * i_g * (1.0 - i_g);
            dz[u + j] = d_f * f_g * (1.0 - f_g);
            dz[2 * u + j] = d_g * (1.0 - c_g * c_g);
            dz[3 * u + j] = d_o * o_g * (1.0 - o_g);
        }
        let x = &input[t * in_width..(t + 1) * in_width];
        let dx = &mut d_input[t * in_width..(t + 1) * in_width];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..4 * u {
            let d = dz[r];
            if d == 0.0 {
                continue;
            }
            grad.bias[r] += d;
            let wi = &cell.w_ih[r * in_width..(r + 1) * in_width];
            let gwi = &mut grad.w_ih[r * in_width..(r + 1) * in_width];
            for k in 0..in_width {
                gwi[k] += d * x[k];
                dx[k] += d * wi[k];
            }
            let wh = &cell.w_hh[r * u..(r + 1) * u];
            let gwh = &mut grad.w_hh[r * u..(r + 1) * u];
            for k in 0..u {
                gwh[k] += d * h_prev[k];
                dh_next[k] += d * wh[k];
            }
        }
    }
}

impl NetParams {
    /// Forward pass over one scaled window, keeping every activation.
    pub fn forward_cached(&self, window: &[f64]) -> Cache {
        let w_len = window.len();
        let gate = gate_signal(window);

        // Multi-scale encoder, concatenated channel-wise.
        let c_total = self.channels();
        let mut encoded = vec![0.0; w_len * c_total];
        let mut conv_pre = Vec::with_capacity(self.branches.len());
        let mut offset = 0;
        for b in &self.branches {
            let pad = (b.kernel - 1) / 2;
            let mut pre = vec![0.0; b.filters * w_len];
            for f in 0..b.filters {
                let k = &b.weight[f * b.kernel..(f + 1) * b.kernel];
                for t in 0..w_len {
                    let mut acc = b.bias[f];
                    for (j, kj) in k.iter().enumerate() {
                        let src = t as isize + j as isize - pad as isize;
                        if src >= 0 && (src as usize) < w_len {
                            acc += kj * window[src as usize];
                        }
                    }
                    pre[f * w_len + t] = acc;
                    encoded[t * c_total + offset + f] = acc.max(0.0);
                }
            }
            offset += b.filters;
            conv_pre.push(pre);
        }

        // Stacked BiLSTM.
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut input = encoded;
        let mut in_width = c_total;
        for layer in &self.layers {
            let u = layer.forward.hidden;
            let fwd = lstm_forward(&layer.forward, &input, in_width, w_len, false);
            let bwd = lstm_forward(&layer.backward, &input, in_width, w_len, true);
            let mut output = vec![0.0; w_len * 2 * u];
            for t in 0..w_len {
                output[t * 2 * u..t * 2 * u + u].copy_from_slice(&fwd.hs[t * u..(t + 1) * u]);
                output[t * 2 * u + u..(t + 1) * 2 * u].copy_from_slice(&bwd.hs[t * u..(t + 1) * u]);
            }
            let next = output.clone();
            layers.push(LayerCache {
                input,
                in_width,
                fwd,
                bwd,
                output,
            });
            input = next;
            in_width = 2 * u;
        }
        let hidden_seq = &layers.last().expect("at least one BiLSTM layer").output;

        // Volatility-gated attention.
        let att = &self.attention;
        let (dim, hid) = (att.dim, att.hidden);
        let mut att_hidden = vec![0.0; w_len * dim];
        let mut scores = vec![0.0; w_len];
        for t in 0..w_len {
            let h = &hidden_seq[t * hid..(t + 1) * hid];
            let mut score = 0.0;
            for a in 0..dim {
                let row = &att.w_h[a * hid..(a + 1) * hid];
                let mut acc = att.bias[a] + att.w_v[a] * gate[t];
                for k in 0..hid {
                    acc += row[k] * h[k];
                }
                let th = acc.tanh();
                att_hidden[t * dim + a] = th;
                score += att.w[a] * th;
            }
            scores[t] = score;
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut attention: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = attention.iter().sum();
        attention.iter_mut().for_each(|a| *a /= z);

        let mut context = vec![0.0; hid];
        for t in 0..w_len {
            let h = &hidden_seq[t * hid..(t + 1) * hid];
            for k in 0..hid {
                context[k] += attention[t] * h[k];
            }
        }
        let prediction = self.head.bias[0] + self.head.weight.iter().zip(&context).map(|(w, c)| w * c).sum::<f64>();

        Cache {
            window: window.to_vec(),
            gate,
            conv_pre,
            layers,
            att_hidden,
            attention,
            context,
            prediction,
        }
    }

    /// Prediction and attention weights for one scaled window.
    pub fn forward(&self, window: &[f64]) -> (f64, Vec<f64>) {
        let c = self.forward_cached(window);
        (c.prediction, c.attention)
    }

    pub fn predict(&self, window: &[f64]) -> f64 {
        self.forward_cached(window).prediction
    }

    /// Accumulate `d_out · ∂prediction/∂θ` into `grad`.
    pub fn backward(&self, cache: &Cache, d_out: f64, grad: &mut NetParams) {
        let w_len = cache.window.len();
        let att = &self.attention;
        let (dim, hid) = (att.dim, att.hidden);

        // Dense head.
        grad.head.bias[0] += d_out;
        let mut d_context = vec![0.0; hid];
        for k in 0..hid {
            grad.head.weight[k] += d_out * cache.context[k];
            d_context[k] = d_out * self.head.weight[k];
        }

        // Attention pooling and softmax.
        let hidden_seq = &cache.layers.last().unwrap().output;
        let mut d_hidden = vec![0.0; w_len * hid];
        let mut d_alpha = vec![0.0; w_len];
        for t in 0..w_len {
            let h = &hidden_seq[t * hid..(t + 1) * hid];
            let dh = &mut d_hidden[t * hid..(t + 1) * hid];
            let mut s = 0.0;
            for k in 0..hid {
                dh[k] += cache.attention[t] * d_context[k];
                s += d_context[k] * h[k];
            }
            d_alpha[t] = s;
        }
        let mean_d: f64 = cache.attention.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        for t in 0..w_len {
            let d_score = cache.attention[t] * (d_alpha[t] - mean_d);
            if d_score == 0.0 {
                continue;
            }
            let h = &hidden_seq[t * hid..(t + 1) * hid];
            for a in 0..dim {
                let th = cache.att_hidden[t * dim + a];
                grad.attention.w[a] += d_score * th;
                let du = d_score * att.w[a] * (1.0 - th * th);
                grad.attention.bias[a] += du;
                grad.attention.w_v[a] += du * cache.gate[t];
                let row = &att.w_h[a * hid..(a + 1) * hid];
                let grow = &mut grad.attention.w_h[a * hid..(a + 1) * hid];
                let dh = &mut d_hidden[t * hid..(t + 1) * hid];
                for k in 0..hid {
                    grow[k] += du * h[k];
                    dh[k] += du * row[k];
                }
            }
        }

        // BiLSTM stack, top to bottom.
        let mut d_upper = d_hidden;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            let u = layer.forward.hidden;
            let mut d_fwd = vec![0.0; w_len * u];
            let mut d_bwd = vec![0.0; w_len * u];
            for t in 0..w_len {
                d_fwd[t * u..(t + 1) * u].copy_from_slice(&d_upper[t * 2 * u..t * 2 * u + u]);
                d_bwd[t * u..(t + 1) * u].copy_from_slice(&d_upper[t * 2 * u + u..(t + 1) * 2 * u]);
            }
            let mut d_input = vec![0.0; w_len * lc.in_width];
            let gl = &mut grad.layers[l];
            lstm_backward(
                &layer.forward,
                &mut gl.forward,
                &lc.fwd,
                &lc.input,
                lc.in_width,
                &d_fwd,
                &mut d_input,
                false,
            );
            lstm_backward(
                &layer.backward,
                &mut gl.backward,
                &lc.bwd,
                &lc.input,
                lc.in_width,
                &d_bwd,
                &mut d_input,
                true,
            );
            d_upper = d_input;
        }

        // Convolution branches through ReLU.
        let c_total = self.channels();
        let mut offset = 0;
        for (bi, b) in self.branches.iter().enumerate() {
            let pad = (b.kernel - 1) / 2;
            let pre = &cache.conv_pre[bi];
            let gb = &mut grad.branches[bi];
            for f in 0..b.filters {
                for t in 0..w_len {
                    if pre[f * w_len + t] <= 0.0 {
                        continue;
                    }
                    let dz = d_upper[t * c_total + offset + f];
                    gb.bias[f] += dz;
                    for j in 0..b.kernel {
                        let src = t as isize + j as isize - pad as isize;
                        if src >= 0 && (src as usize) < w_len {
                            gb.weight[f * b.kernel + j] += dz * cache.window[src as usize];
                        }
                    }
                }
            }
            offset += b.filters;
        }
    }

    /// Mean squared error over `(window, target)` pairs and its gradient.
    pub fn loss_and_gradients<'a, I>(&self, batch: I) -> (f64, NetParams)
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
        I::IntoIter: ExactSizeIterator,
    {
        let batch = batch.into_iter();
        let n = batch.len().max(1) as f64;
        let mut grad = self.zeros_like();
        let mut sse = 0.0;
        for (x, y) in batch {
            let cache = self.forward_cached(x);
            let err = cache.prediction - y;
            sse += err * err;
            self.backward(&cache, 2.0 * err / n, &mut grad);
        }
        (sse / n, grad)
    }

    /// Mean squared error only.
    pub fn mse<'a, I>(&self, batch: I) -> f64
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        let mut sse = 0.0;
        let mut n = 0usize;
        for (x, y) in batch {
            let e = self.predict(x) - y;
            sse += e * e;
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            sse / n as f64
        }
    }
}
