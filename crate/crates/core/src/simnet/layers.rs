//! Layer primitives with hand-written backward passes: 1-D convolution with
//! same-length padding and ReLU, a unidirectional LSTM pass, and a per-frame
//! linear map. Everything is double precision; correctness is pinned by
//! finite-difference checks in the module tests.

use ndarray::{Array1, Array2, Array3, Axis};

/// Weights of one conv layer: `w[out_channel][in_channel][tap]` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub w: Array3<f64>,
    pub b: Array1<f64>,
}

impl ConvLayer {
    pub fn zeros(out_ch: usize, in_ch: usize, kernel: usize) -> Self {
        ConvLayer { w: Array3::zeros((out_ch, in_ch, kernel)), b: Array1::zeros(out_ch) }
    }

    /// Same-length convolution followed by ReLU. Returns `(activation, pre)`;
    /// the pre-activation is needed by [`ConvLayer::backward`].
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (out_ch, in_ch, kernel) = self.w.dim();
        let frames = x.nrows();
        debug_assert_eq!(x.ncols(), in_ch);
        let pad = (kernel - 1) / 2;
        let mut pre = Array2::zeros((frames, out_ch));
        for t in 0..frames {
            for oc in 0..out_ch {
                let mut acc = self.b[oc];
                for k in 0..kernel {
                    let src = t + k;
                    if src < pad || src - pad >= frames {
                        continue;
                    }
                    let src = src - pad;
                    for ic in 0..in_ch {
                        acc += self.w[[oc, ic, k]] * x[[src, ic]];
                    }
                }
                pre[[t, oc]] = acc;
            }
        }
        let act = pre.mapv(|v| v.max(0.0));
        (act, pre)
    }

    /// Backward through ReLU and the convolution. Accumulates into `grad`
    /// and returns the gradient w.r.t. the layer input.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        pre: &Array2<f64>,
        d_out: &Array2<f64>,
        grad: &mut ConvLayer,
    ) -> Array2<f64> {
        let (out_ch, in_ch, kernel) = self.w.dim();
        let frames = x.nrows();
        let pad = (kernel - 1) / 2;
        let mut dx = Array2::zeros((frames, in_ch));
        for t in 0..frames {
            for oc in 0..out_ch {
                let d_pre = if pre[[t, oc]] > 0.0 { d_out[[t, oc]] } else { 0.0 };
                if d_pre == 0.0 {
                    continue;
                }
                grad.b[oc] += d_pre;
                for k in 0..kernel {
                    let src = t + k;
                    if src < pad || src - pad >= frames {
                        continue;
                    }
                    let src = src - pad;
                    for ic in 0..in_ch {
                        grad.w[[oc, ic, k]] += d_pre * x[[src, ic]];
                        dx[[src, ic]] += d_pre * self.w[[oc, ic, k]];
                    }
                }
            }
        }
        dx
    }
}

/// Weights of one LSTM direction. Gate rows are ordered `i, f, g, o` within
/// the leading `4H` dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDir {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub b: Array1<f64>,
}

/// Intermediates of one LSTM pass, kept for backpropagation through time.
pub struct LstmCache {
    /// Post-activation gates per step: `i, f, g, o`, each length `H`.
    gates: Vec<[Array1<f64>; 4]>,
    cells: Vec<Array1<f64>>,
    hidden: Vec<Array1<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmDir {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmDir {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.ncols()
    }

    /// Runs the recurrence over `x` rows in order, zero initial state.
    /// Returns the per-step hidden states `[T, H]` and the cache.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LstmCache) {
        let frames = x.nrows();
        let hidden = self.hidden_size();
        let mut cache = LstmCache {
            gates: Vec::with_capacity(frames),
            cells: Vec::with_capacity(frames),
            hidden: Vec::with_capacity(frames),
        };
        let mut out = Array2::zeros((frames, hidden));
        let mut h = Array1::zeros(hidden);
        let mut c: Array1<f64> = Array1::zeros(hidden);
        for t in 0..frames {
            let x_t = x.row(t);
            let z = self.w_ih.dot(&x_t) + self.w_hh.dot(&h) + &self.b;
            let i = z.slice(ndarray::s![0..hidden]).mapv(sigmoid);
            let f = z.slice(ndarray::s![hidden..2 * hidden]).mapv(sigmoid);
            let g = z.slice(ndarray::s![2 * hidden..3 * hidden]).mapv(f64::tanh);
            let o = z.slice(ndarray::s![3 * hidden..4 * hidden]).mapv(sigmoid);
            c = &f * &c + &i * &g;
            h = &o * &c.mapv(f64::tanh);
            out.row_mut(t).assign(&h);
            cache.gates.push([i, f, g, o]);
            cache.cells.push(c.clone());
            cache.hidden.push(h.clone());
        }
        (out, cache)
    }

    /// Backpropagation through time. `d_out` holds the gradient w.r.t. every
    /// hidden state row. Accumulates into `grad`; returns the gradient
    /// w.r.t. the input rows.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        cache: &LstmCache,
        d_out: &Array2<f64>,
        grad: &mut LstmDir,
    ) -> Array2<f64> {
        let frames = x.nrows();
        let hidden = self.hidden_size();
        let mut dx = Array2::zeros((frames, x.ncols()));
        let mut dh_next: Array1<f64> = Array1::zeros(hidden);
        let mut dc_next: Array1<f64> = Array1::zeros(hidden);
        for t in (0..frames).rev() {
            let [i, f, g, o] = &cache.gates[t];
            let c = &cache.cells[t];
            let c_prev = if t == 0 { None } else { Some(&cache.cells[t - 1]) };
            let h_prev = if t == 0 { None } else { Some(&cache.hidden[t - 1]) };
            let tc = c.mapv(f64::tanh);

            let dh = &d_out.row(t).to_owned() + &dh_next;
            let mut dc = dc_next;
            dc = dc + &dh * o * tc.mapv(|v| 1.0 - v * v);

            let d_o = &dh * &tc;
            let d_i = &dc * g;
            let d_g = &dc * i;
            let d_f = match c_prev {
                Some(cp) => &dc * cp,
                None => Array1::zeros(hidden),
            };
            dc_next = &dc * f;

            let mut d_z = Array1::zeros(4 * hidden);
            d_z.slice_mut(ndarray::s![0..hidden])
                .assign(&(&d_i * i * &i.mapv(|v| 1.0 - v)));
            d_z.slice_mut(ndarray::s![hidden..2 * hidden])
                .assign(&(&d_f * f * &f.mapv(|v| 1.0 - v)));
            d_z.slice_mut(ndarray::s![2 * hidden..3 * hidden])
                .assign(&(&d_g * &g.mapv(|v| 1.0 - v * v)));
            d_z.slice_mut(ndarray::s![3 * hidden..4 * hidden])
                .assign(&(&d_o * o * &o.mapv(|v| 1.0 - v)));

            let x_t = x.row(t).to_owned();
            grad.w_ih = &grad.w_ih
                + &d_z
                    .view()
                    .insert_axis(Axis(1))
                    .dot(&x_t.view().insert_axis(Axis(0)));
            if let Some(hp) = h_prev {
                grad.w_hh = &grad.w_hh
                    + &d_z
                        .view()
                        .insert_axis(Axis(1))
                        .dot(&hp.view().insert_axis(Axis(0)));
            }
            grad.b = &grad.b + &d_z;

            dx.row_mut(t).assign(&self.w_ih.t().dot(&d_z));
            dh_next = self.w_hh.t().dot(&d_z);
        }
        dx
    }
}

/// One bidirectional LSTM layer: a forward and a backward direction whose
/// per-step outputs are concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmLayer {
    pub fwd: LstmDir,
    pub bwd: LstmDir,
}

pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
    x_rev: Array2<f64>,
}

fn reverse_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    let frames = x.nrows();
    for t in 0..frames {
        out.row_mut(t).assign(&x.row(frames - 1 - t));
    }
    out
}

impl BiLstmLayer {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        BiLstmLayer { fwd: LstmDir::zeros(input, hidden), bwd: LstmDir::zeros(input, hidden) }
    }

    /// Output is `[T, 2H]`: forward hidden states then backward hidden
    /// states (re-reversed into natural time order).
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, BiLstmCache) {
        let hidden = self.fwd.hidden_size();
        let (h_fwd, fwd) = self.fwd.forward(x);
        let x_rev = reverse_rows(x);
        let (h_bwd_rev, bwd) = self.bwd.forward(&x_rev);
        let h_bwd = reverse_rows(&h_bwd_rev);
        let mut out = Array2::zeros((x.nrows(), 2 * hidden));
        out.slice_mut(ndarray::s![.., 0..hidden]).assign(&h_fwd);
        out.slice_mut(ndarray::s![.., hidden..2 * hidden]).assign(&h_bwd);
        (out, BiLstmCache { fwd, bwd, x_rev })
    }

    pub fn backward(
        &self,
        x: &Array2<f64>,
        cache: &BiLstmCache,
        d_out: &Array2<f64>,
        grad: &mut BiLstmLayer,
    ) -> Array2<f64> {
        let hidden = self.fwd.hidden_size();
        let d_fwd = d_out.slice(ndarray::s![.., 0..hidden]).to_owned();
        let d_bwd = d_out.slice(ndarray::s![.., hidden..2 * hidden]).to_owned();
        let dx_fwd = self.fwd.backward(x, &cache.fwd, &d_fwd, &mut grad.fwd);
        let d_bwd_rev = reverse_rows(&d_bwd);
        let dx_bwd_rev = self.bwd.backward(&cache.x_rev, &cache.bwd, &d_bwd_rev, &mut grad.bwd);
        &dx_fwd + &reverse_rows(&dx_bwd_rev)
    }
}

/// Per-frame linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear { w: Array2::zeros((output, input)), b: Array1::zeros(output) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    pub fn backward(&self, x: &Array2<f64>, d_out: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w = &grad.w + &d_out.t().dot(x);
        grad.b = &grad.b + &d_out.sum_axis(Axis(0));
        d_out.dot(&self.w)
    }
}
