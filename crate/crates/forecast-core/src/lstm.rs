//! A from-scratch two-hidden-layer LSTM regressor for lag-window inputs:
//! deterministic initialization, mini-batch forward and backpropagation
//! through time over both layers, Adam with gradient-norm clipping, inverted
//! dropout on layer outputs, and recursive multi-step forecasting.
//!
//! Each input window is consumed one scalar per time step. Gate order in the
//! packed weight blocks is input, forget, cell candidate, output. Weights for
//! a layer live in a single `(input + hidden) x 4*hidden` matrix so a whole
//! mini-batch advances one time step with one GEMM.

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use alloc::string::ToString;
use alloc::{vec, vec::Vec};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::bo::HyperParams;
use crate::linalg::{gemm, Mat};
use crate::rng::{rng_from, ChaCha20Rng};
use crate::series::LagDataset;
use crate::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const GRAD_CLIP: f64 = 5.0;
/// An epoch improves only if the loss drops by at least this much.
const MIN_DELTA: f64 = 1e-6;
const FORGET_BIAS: f64 = 1.0;

const INIT_TAG: u64 = 0x11;
const SHUFFLE_TAG: u64 = 0x22;

/// Everything a training run needs to be reproducible.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LstmConfig {
    /// Input window length (lag count).
    pub m: usize,
    pub hu1: usize,
    pub hu2: usize,
    /// Dropout rate on layer outputs, in `[0, 0.9]`.
    pub dr: f64,
    pub lr: f64,
    pub b: usize,
    pub epochs: usize,
    /// Stop after this many consecutive epochs without improvement.
    pub patience: usize,
    pub seed: u64,
}

impl LstmConfig {
    pub fn from_hyper_params(hp: &HyperParams, epochs: usize, patience: usize, seed: u64) -> Self {
        LstmConfig {
            m: hp.m,
            hu1: hp.hu1,
            hu2: hp.hu2,
            dr: hp.dr,
            lr: hp.lr,
            b: hp.b,
            epochs,
            patience,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.hu1 == 0 || self.hu2 == 0 || self.b == 0 {
            return Err(Error::DomainError("lstm sizes must be at least 1"));
        }
        if !(0.0..=0.9).contains(&self.dr) {
            return Err(Error::DomainError("dropout rate must be in [0, 0.9]"));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::DomainError("learning rate must be positive"));
        }
        Ok(())
    }
}

/// One LSTM layer: packed gate weights over the concatenated
/// `[input, recurrent]` vector, plus the gate biases.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden: usize,
    /// `(input_size + hidden) x 4*hidden`, gate blocks `[i | f | g | o]`.
    pub w: Mat,
    /// Length `4*hidden`.
    pub b: Vec<f64>,
}

impl LstmLayer {
    fn init(input_size: usize, hidden: usize, rng: &mut ChaCha20Rng) -> Self {
        let fan_in = input_size + hidden;
        let k = 1.0 / (fan_in as f64).sqrt();
        let w = Mat::from_fn(fan_in, 4 * hidden, |_, _| rng.gen_range(-k..k));
        let mut b = vec![0.0; 4 * hidden];
        // forget-gate bias starts open so early training can carry state
        b[hidden..2 * hidden]
            .iter_mut()
            .for_each(|v| *v = FORGET_BIAS);
        LstmLayer {
            input_size,
            hidden,
            w,
            b,
        }
    }

    pub fn n_params(&self) -> usize {
        self.w.rows() * self.w.cols() + self.b.len()
    }
}

/// A trained (or freshly initialized) two-layer LSTM regressor.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub layer1: LstmLayer,
    pub layer2: LstmLayer,
    /// Dense readout `hu2 -> 1`.
    pub dense_w: Vec<f64>,
    pub dense_b: f64,
}

/// Per-epoch training losses (mean squared error on the normalized scale).
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    /// Total sample evaluations across all epochs.
    pub samples_processed: usize,
    pub stopped_early: bool,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LstmModel {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights, zero biases except
    /// the forget gates at 1.0. Bitwise deterministic for a given seed.
    pub fn init(config: &LstmConfig) -> Result<LstmModel> {
        config.validate()?;
        let mut rng = rng_from(config.seed, &[INIT_TAG]);
        let layer1 = LstmLayer::init(1, config.hu1, &mut rng);
        let layer2 = LstmLayer::init(config.hu1, config.hu2, &mut rng);
        let k = 1.0 / (config.hu2 as f64).sqrt();
        let dense_w: Vec<f64> = (0..config.hu2).map(|_| rng.gen_range(-k..k)).collect();
        Ok(LstmModel {
            config: *config,
            layer1,
            layer2,
            dense_w,
            dense_b: 0.0,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layer1.n_params() + self.layer2.n_params() + self.dense_w.len() + 1
    }

    /// Single-window prediction with dropout disabled.
    pub fn predict(&self, window: &[f64]) -> Result<f64> {
        if window.len() != self.config.m {
            return Err(Error::DimensionMismatch {
                expected: self.config.m,
                got: window.len(),
            });
        }
        let win = Mat::from_fn(1, window.len(), |_, j| window[j]);
        let mut ws = Workspace::new(self, 1);
        let mut no_rng = rng_from(0, &[]);
        forward_batch(self, &win, false, &mut no_rng, &mut ws);
        Ok(ws.preds[0])
    }

    /// Serializes shapes and row-major weights as a flat JSON record. The
    /// float encoding round-trips exactly.
    pub fn to_json(&self) -> alloc::string::String {
        serde_json::to_string(self).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<LstmModel> {
        let model: LstmModel =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let c = &model.config;
        let shapes_ok = model.layer1.input_size == 1
            && model.layer1.hidden == c.hu1
            && model.layer2.input_size == c.hu1
            && model.layer2.hidden == c.hu2
            && model.layer1.w.rows() == 1 + c.hu1
            && model.layer1.w.cols() == 4 * c.hu1
            && model.layer2.w.rows() == c.hu1 + c.hu2
            && model.layer2.w.cols() == 4 * c.hu2
            && model.layer1.b.len() == 4 * c.hu1
            && model.layer2.b.len() == 4 * c.hu2
            && model.dense_w.len() == c.hu2;
        if !shapes_ok {
            return Err(Error::ModelFormat(
                "weight shapes inconsistent with config".to_string(),
            ));
        }
        Ok(model)
    }

    /// Parameter tensors in a fixed order, for the optimizer and tests.
    fn param_tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.layer1.w.as_mut_slice(),
            &mut self.layer1.b,
            self.layer2.w.as_mut_slice(),
            &mut self.layer2.b,
            &mut self.dense_w,
            core::slice::from_mut(&mut self.dense_b),
        ]
    }

    fn param_tensors(&self) -> [&[f64]; 6] {
        [
            self.layer1.w.as_slice(),
            &self.layer1.b,
            self.layer2.w.as_slice(),
            &self.layer2.b,
            &self.dense_w,
            core::slice::from_ref(&self.dense_b),
        ]
    }

    pub fn params_finite(&self) -> bool {
        self.param_tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub dense_w: Vec<f64>,
    pub dense_b: f64,
}

impl Grads {
    fn zeros(model: &LstmModel) -> Grads {
        Grads {
            w1: Mat::zeros(model.layer1.w.rows(), model.layer1.w.cols()),
            b1: vec![0.0; model.layer1.b.len()],
            w2: Mat::zeros(model.layer2.w.rows(), model.layer2.w.cols()),
            b2: vec![0.0; model.layer2.b.len()],
            dense_w: vec![0.0; model.dense_w.len()],
            dense_b: 0.0,
        }
    }

    fn reset(&mut self) {
        self.w1.fill(0.0);
        self.b1.iter_mut().for_each(|v| *v = 0.0);
        self.w2.fill(0.0);
        self.b2.iter_mut().for_each(|v| *v = 0.0);
        self.dense_w.iter_mut().for_each(|v| *v = 0.0);
        self.dense_b = 0.0;
    }

    fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice(),
            &self.b1,
            self.w2.as_slice(),
            &self.b2,
            &self.dense_w,
            core::slice::from_ref(&self.dense_b),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
            &mut self.dense_w,
            core::slice::from_mut(&mut self.dense_b),
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// All gradient entries in the fixed tensor order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter().copied())
            .collect()
    }
}

/// Forward caches for one layer across all steps of a mini-batch.
struct LayerCache {
    /// Hidden state; plane `t` holds the state entering step `t`.
    h: Vec<Mat>,
    /// Cell state, same indexing as `h`.
    c: Vec<Mat>,
    /// `tanh` of the new cell state at each step.
    tc: Vec<Mat>,
    /// Post-activation gates `[i | f | g | o]` at each step.
    gates: Vec<Mat>,
    /// Inverted-dropout multipliers (0 or 1/keep) per step.
    mask: Vec<Mat>,
    /// Dropped output per step (the next layer's input).
    out: Vec<Mat>,
}

impl LayerCache {
    fn new(steps: usize, b: usize, hidden: usize, with_step_outputs: bool) -> LayerCache {
        let planes = |n: usize, cols: usize| {
            (0..n)
                .map(|_| Mat::zeros(b, cols))
                .collect::<Vec<_>>()
        };
        LayerCache {
            h: planes(steps + 1, hidden),
            c: planes(steps + 1, hidden),
            tc: planes(steps, hidden),
            gates: planes(steps, 4 * hidden),
            mask: planes(if with_step_outputs { steps } else { 0 }, hidden),
            out: planes(if with_step_outputs { steps } else { 0 }, hidden),
        }
    }
}

/// Per-layer backward scratch, sized exactly for the layer.
struct BackwardScratch {
    d_gates: Mat,
    d_in: Mat,
    dh: Mat,
    dc: Mat,
    in_step: Mat,
    in_step_t: Mat,
    w_tr: Mat,
}

impl BackwardScratch {
    fn new(b: usize, input_size: usize, hidden: usize) -> BackwardScratch {
        let k = input_size + hidden;
        BackwardScratch {
            d_gates: Mat::zeros(b, 4 * hidden),
            d_in: Mat::zeros(b, k),
            dh: Mat::zeros(b, hidden),
            dc: Mat::zeros(b, hidden),
            in_step: Mat::zeros(b, k),
            in_step_t: Mat::zeros(k, b),
            w_tr: Mat::zeros(4 * hidden, k),
        }
    }
}

/// All buffers for one mini-batch size; allocated once per training run.
struct Workspace {
    b: usize,
    l1: LayerCache,
    l2: LayerCache,
    /// Final-step dropout for layer 2's output into the dense readout.
    mask2: Mat,
    out2: Mat,
    preds: Vec<f64>,
    dpred: Vec<f64>,
    in1: Mat,
    in2: Mat,
    s1: BackwardScratch,
    s2: BackwardScratch,
    dh1_above: Vec<Mat>,
    grads: Grads,
}

impl Workspace {
    fn new(model: &LstmModel, b: usize) -> Workspace {
        let m = model.config.m;
        let h1 = model.config.hu1;
        let h2 = model.config.hu2;
        Workspace {
            b,
            l1: LayerCache::new(m, b, h1, true),
            l2: LayerCache::new(m, b, h2, false),
            mask2: Mat::zeros(b, h2),
            out2: Mat::zeros(b, h2),
            preds: vec![0.0; b],
            dpred: vec![0.0; b],
            in1: Mat::zeros(b, 1 + h1),
            in2: Mat::zeros(b, h1 + h2),
            s1: BackwardScratch::new(b, 1, h1),
            s2: BackwardScratch::new(b, h1, h2),
            dh1_above: (0..m).map(|_| Mat::zeros(b, h1)).collect(),
            grads: Grads::zeros(model),
        }
    }
}

fn fill_dropout_mask(mask: &mut Mat, keep: f64, rng: &mut ChaCha20Rng) {
    let inv = 1.0 / keep;
    for v in mask.as_mut_slice() {
        *v = if rng.gen::<f64>() < keep { inv } else { 0.0 };
    }
}

/// Advances one layer by one step for the whole batch. `input` holds the
/// concatenated `[x_t, h_t]` rows; results land in the caches at index `t`.
fn layer_step(layer: &LstmLayer, input: &Mat, t: usize, cache: &mut LayerCache) {
    let h = layer.hidden;
    let b = input.rows();
    {
        let gates = &mut cache.gates[t];
        for r in 0..b {
            gates.row_mut(r).copy_from_slice(&layer.b);
        }
        gemm(
            gates.as_mut_slice(),
            input.as_slice(),
            layer.w.as_slice(),
            b,
            layer.input_size + h,
            4 * h,
        );
        for r in 0..b {
            let grow = gates.row_mut(r);
            for v in &mut grow[..2 * h] {
                *v = sigmoid(*v); // input and forget gates
            }
            for v in &mut grow[2 * h..3 * h] {
                *v = v.tanh(); // cell candidate
            }
            for v in &mut grow[3 * h..4 * h] {
                *v = sigmoid(*v); // output gate
            }
        }
    }
    for r in 0..b {
        let gates = cache.gates[t].row(r);
        let (i_g, rest) = gates.split_at(h);
        let (f_g, rest) = rest.split_at(h);
        let (g_g, o_g) = rest.split_at(h);
        let c_prev = cache.c[t].row(r).to_vec();
        {
            let c_next = cache.c[t + 1].row_mut(r);
            for j in 0..h {
                c_next[j] = f_g[j] * c_prev[j] + i_g[j] * g_g[j];
            }
        }
        let c_next = cache.c[t + 1].row(r).to_vec();
        {
            let tc = cache.tc[t].row_mut(r);
            for j in 0..h {
                tc[j] = c_next[j].tanh();
            }
        }
        let tc = cache.tc[t].row(r);
        let h_next = cache.h[t + 1].row_mut(r);
        for j in 0..h {
            h_next[j] = o_g[j] * tc[j];
        }
    }
}

/// Forward pass over the mini-batch in `win` (one window per row), filling
/// the workspace caches and predictions. When `training` is set, inverted
/// dropout masks are sampled for the layer outputs; otherwise they are unit.
fn forward_batch(
    model: &LstmModel,
    win: &Mat,
    training: bool,
    rng: &mut ChaCha20Rng,
    ws: &mut Workspace,
) {
    let m = model.config.m;
    let h1 = model.config.hu1;
    let h2 = model.config.hu2;
    let b = ws.b;
    debug_assert_eq!(win.rows(), b);
    let dropout = training && model.config.dr > 0.0;
    let keep = 1.0 - model.config.dr;

    ws.l1.h[0].fill(0.0);
    ws.l1.c[0].fill(0.0);
    ws.l2.h[0].fill(0.0);
    ws.l2.c[0].fill(0.0);

    for t in 0..m {
        // layer 1 input: [x_t | h1_t]
        for r in 0..b {
            let row = ws.in1.row_mut(r);
            row[0] = win.get(r, t);
            row[1..1 + h1].copy_from_slice(ws.l1.h[t].row(r));
        }
        layer_step(&model.layer1, &ws.in1, t, &mut ws.l1);

        // dropout on layer 1's output, which is layer 2's input
        if dropout {
            fill_dropout_mask(&mut ws.l1.mask[t], keep, rng);
        } else {
            ws.l1.mask[t].fill(1.0);
        }
        for r in 0..b {
            let hrow = ws.l1.h[t + 1].row(r).to_vec();
            let mrow = ws.l1.mask[t].row(r).to_vec();
            let orow = ws.l1.out[t].row_mut(r);
            for j in 0..h1 {
                orow[j] = hrow[j] * mrow[j];
            }
        }

        // layer 2 input: [dropped h1 | h2_t]
        for r in 0..b {
            let row = ws.in2.row_mut(r);
            row[..h1].copy_from_slice(ws.l1.out[t].row(r));
            row[h1..h1 + h2].copy_from_slice(ws.l2.h[t].row(r));
        }
        layer_step(&model.layer2, &ws.in2, t, &mut ws.l2);
    }

    // dropout on layer 2's final output into the dense readout
    if dropout {
        fill_dropout_mask(&mut ws.mask2, keep, rng);
    } else {
        ws.mask2.fill(1.0);
    }
    for r in 0..b {
        let hrow = ws.l2.h[m].row(r).to_vec();
        let mrow = ws.mask2.row(r).to_vec();
        let orow = ws.out2.row_mut(r);
        let mut acc = model.dense_b;
        for j in 0..h2 {
            orow[j] = hrow[j] * mrow[j];
            acc += orow[j] * model.dense_w[j];
        }
        ws.preds[r] = acc;
    }
}

/// BPTT for one layer across all steps; weight and bias gradients accumulate
/// into `gw` and `gb`.
///
/// `dh_into_step(t, dh)` adds the loss gradient flowing into the hidden state
/// produced at step `t` (post-dropout paths already folded in by the caller).
/// `input_of_step(t, buf)` rebuilds the step input rows. `route_input(t, din)`
/// receives the gradient with respect to the step input so the caller can
/// push it down to the layer below.
fn layer_backward(
    layer: &LstmLayer,
    m: usize,
    cache: &LayerCache,
    scratch: &mut BackwardScratch,
    input_of_step: &mut dyn FnMut(usize, &mut Mat),
    dh_into_step: &mut dyn FnMut(usize, &mut Mat),
    route_input: &mut dyn FnMut(usize, &Mat),
    gw: &mut Mat,
    gb: &mut [f64],
) {
    let h = layer.hidden;
    let k = layer.input_size + h;
    let b = scratch.dh.rows();
    layer.w.transpose_into(&mut scratch.w_tr);
    scratch.dh.fill(0.0);
    scratch.dc.fill(0.0);

    for t in (0..m).rev() {
        dh_into_step(t, &mut scratch.dh);

        for r in 0..b {
            let gates = cache.gates[t].row(r);
            let (i_g, rest) = gates.split_at(h);
            let (f_g, rest) = rest.split_at(h);
            let (g_g, o_g) = rest.split_at(h);
            let tc = cache.tc[t].row(r);
            let c_prev = cache.c[t].row(r);
            let dh_row = scratch.dh.row(r).to_vec();
            let dgrow = scratch.d_gates.row_mut(r);
            let dc_row = scratch.dc.row_mut(r);
            for j in 0..h {
                let d_o = dh_row[j] * tc[j];
                dgrow[3 * h + j] = d_o * o_g[j] * (1.0 - o_g[j]);
                dc_row[j] += dh_row[j] * o_g[j] * (1.0 - tc[j] * tc[j]);
                let dcj = dc_row[j];
                dgrow[j] = dcj * g_g[j] * i_g[j] * (1.0 - i_g[j]);
                dgrow[h + j] = dcj * c_prev[j] * f_g[j] * (1.0 - f_g[j]);
                dgrow[2 * h + j] = dcj * i_g[j] * (1.0 - g_g[j] * g_g[j]);
                // cell gradient carried to the previous step
                dc_row[j] = dcj * f_g[j];
            }
        }

        // gw += input_t^T * d_gates
        input_of_step(t, &mut scratch.in_step);
        scratch.in_step.transpose_into(&mut scratch.in_step_t);
        gemm(
            gw.as_mut_slice(),
            scratch.in_step_t.as_slice(),
            scratch.d_gates.as_slice(),
            k,
            b,
            4 * h,
        );
        for r in 0..b {
            let dgrow = scratch.d_gates.row(r);
            for (g, d) in gb.iter_mut().zip(dgrow) {
                *g += d;
            }
        }

        // d_in = d_gates * w^T; recurrent part becomes the next dh
        scratch.d_in.fill(0.0);
        gemm(
            scratch.d_in.as_mut_slice(),
            scratch.d_gates.as_slice(),
            scratch.w_tr.as_slice(),
            b,
            4 * h,
            k,
        );
        for r in 0..b {
            let din = scratch.d_in.row(r).to_vec();
            let dh = scratch.dh.row_mut(r);
            dh.copy_from_slice(&din[layer.input_size..k]);
        }
        route_input(t, &scratch.d_in);
    }
}

/// Mean squared error over the batch plus gradients for every parameter.
/// Caches in `ws` must come from a matching [`forward_batch`] call.
fn backward_batch(model: &LstmModel, win: &Mat, targets: &[f64], ws: &mut Workspace) -> f64 {
    let m = model.config.m;
    let h1 = model.config.hu1;
    let h2 = model.config.hu2;
    let b = ws.b;

    let mut loss = 0.0;
    for r in 0..b {
        let e = ws.preds[r] - targets[r];
        loss += e * e;
        ws.dpred[r] = 2.0 * e / b as f64;
    }
    loss /= b as f64;

    ws.grads.reset();
    for r in 0..b {
        let d = ws.dpred[r];
        let orow = ws.out2.row(r);
        for j in 0..h2 {
            ws.grads.dense_w[j] += d * orow[j];
        }
        ws.grads.dense_b += d;
    }
    for t in 0..m {
        ws.dh1_above[t].fill(0.0);
    }

    // layer 2: the external gradient enters only at the last step, through
    // the final dropout mask
    {
        let Workspace {
            l1,
            l2,
            mask2,
            dpred,
            grads,
            s2,
            dh1_above,
            ..
        } = ws;
        let dense_w = &model.dense_w;
        layer_backward(
            &model.layer2,
            m,
            l2,
            s2,
            &mut |t, input| {
                for r in 0..b {
                    let row = input.row_mut(r);
                    row[..h1].copy_from_slice(l1.out[t].row(r));
                    row[h1..h1 + h2].copy_from_slice(l2.h[t].row(r));
                }
            },
            &mut |t, dh_mat| {
                if t == m - 1 {
                    for r in 0..b {
                        let mrow = mask2.row(r);
                        let dh_row = dh_mat.row_mut(r);
                        for j in 0..h2 {
                            dh_row[j] += dpred[r] * dense_w[j] * mrow[j];
                        }
                    }
                }
            },
            &mut |t, din| {
                // gradient into layer 1's dropped output, through its mask
                for r in 0..b {
                    let din_row = din.row(r);
                    let mrow = l1.mask[t].row(r);
                    let above = dh1_above[t].row_mut(r);
                    for j in 0..h1 {
                        above[j] += din_row[j] * mrow[j];
                    }
                }
            },
            &mut grads.w2,
            &mut grads.b2,
        );
    }

    // layer 1: external gradient enters at every step from layer 2
    {
        let Workspace {
            l1,
            grads,
            s1,
            dh1_above,
            ..
        } = ws;
        layer_backward(
            &model.layer1,
            m,
            l1,
            s1,
            &mut |t, input| {
                for r in 0..b {
                    let row = input.row_mut(r);
                    row[0] = win.get(r, t);
                    row[1..1 + h1].copy_from_slice(l1.h[t].row(r));
                }
            },
            &mut |t, dh_mat| {
                for r in 0..b {
                    let above = dh1_above[t].row(r);
                    let dh_row = dh_mat.row_mut(r);
                    for j in 0..h1 {
                        dh_row[j] += above[j];
                    }
                }
            },
            &mut |_t, _din| {
                // scalar window inputs need no gradient
            },
            &mut grads.w1,
            &mut grads.b1,
        );
    }

    loss
}

/// Loss and gradients of the batch mean squared error, dropout disabled.
/// This is the hook for gradient checking.
pub fn batch_gradients(model: &LstmModel, windows: &Mat, targets: &[f64]) -> Result<(f64, Grads)> {
    if windows.rows() != targets.len() {
        return Err(Error::LengthMismatch {
            left: windows.rows(),
            right: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    if windows.cols() != model.config.m {
        return Err(Error::DimensionMismatch {
            expected: model.config.m,
            got: windows.cols(),
        });
    }
    let mut ws = Workspace::new(model, windows.rows());
    let mut no_rng = rng_from(0, &[]);
    forward_batch(model, windows, false, &mut no_rng, &mut ws);
    if ws.preds.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFiniteLoss);
    }
    let loss = backward_batch(model, windows, targets, &mut ws);
    Ok((loss, ws.grads))
}

/// Batch mean squared error with dropout disabled, no gradients.
pub fn batch_loss(model: &LstmModel, windows: &Mat, targets: &[f64]) -> Result<f64> {
    if windows.rows() != targets.len() {
        return Err(Error::LengthMismatch {
            left: windows.rows(),
            right: targets.len(),
        });
    }
    let mut ws = Workspace::new(model, windows.rows());
    let mut no_rng = rng_from(0, &[]);
    forward_batch(model, windows, false, &mut no_rng, &mut ws);
    let mut loss = 0.0;
    for r in 0..ws.b {
        let e = ws.preds[r] - targets[r];
        loss += e * e;
    }
    Ok(loss / ws.b as f64)
}

struct Adam {
    m: Grads,
    v: Grads,
    t: u64,
}

impl Adam {
    fn new(model: &LstmModel) -> Adam {
        Adam {
            m: Grads::zeros(model),
            v: Grads::zeros(model),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut LstmModel, grads: &Grads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let params = model.param_tensors_mut();
        let gs = grads.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), mt), vt) in params.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                mt[i] = ADAM_BETA1 * mt[i] + (1.0 - ADAM_BETA1) * g[i];
                vt[i] = ADAM_BETA2 * vt[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = mt[i] / bc1;
                let v_hat = vt[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Trains a fresh LSTM on the lag dataset.
///
/// Mini-batch Adam with gradient-norm clipping at 5.0, per-epoch seeded
/// shuffling, the final short batch kept, and early stopping when the epoch
/// loss fails to improve by 1e-6 for `patience` consecutive epochs. A batch
/// size above the sample count is clamped. Bitwise deterministic for a fixed
/// config.
pub fn train(config: &LstmConfig, dataset: &LagDataset) -> Result<(LstmModel, TrainReport)> {
    config.validate()?;
    if dataset.n_samples() == 0 {
        return Err(Error::EmptyInput);
    }
    if dataset.m != config.m {
        return Err(Error::DimensionMismatch {
            expected: config.m,
            got: dataset.m,
        });
    }
    let mut model = LstmModel::init(config)?;
    let mut report = TrainReport::default();
    if config.epochs == 0 {
        return Ok((model, report));
    }

    let n = dataset.n_samples();
    let b_full = config.b.min(n);
    let b_rem = n % b_full;
    let mut ws_full = Workspace::new(&model, b_full);
    let mut ws_rem = (b_rem > 0).then(|| Workspace::new(&model, b_rem));
    let mut adam = Adam::new(&model);
    let mut rng = rng_from(config.seed, &[SHUFFLE_TAG]);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut win_full = Mat::zeros(b_full, config.m);
    let mut win_rem = Mat::zeros(b_rem.max(1), config.m);
    let mut targets = vec![0.0; b_full];

    let mut best_loss = f64::INFINITY;
    let mut stale = 0usize;

    for _epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_sse = 0.0;
        for chunk in indices.chunks(b_full) {
            let b = chunk.len();
            let (ws, win) = if b == b_full {
                (&mut ws_full, &mut win_full)
            } else {
                (ws_rem.as_mut().expect("remainder workspace"), &mut win_rem)
            };
            for (r, &idx) in chunk.iter().enumerate() {
                win.row_mut(r).copy_from_slice(dataset.inputs.row(idx));
                targets[r] = dataset.targets[idx];
            }
            forward_batch(&model, win, true, &mut rng, ws);
            let loss = backward_batch(&model, win, &targets[..b], ws);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            let norm = ws.grads.global_norm();
            if norm > GRAD_CLIP {
                ws.grads.scale(GRAD_CLIP / norm);
            }
            adam.step(&mut model, &ws.grads, config.lr);
            epoch_sse += loss * b as f64;
            report.samples_processed += b;
        }
        if !model.params_finite() {
            return Err(Error::NonFiniteLoss);
        }
        let epoch_loss = epoch_sse / n as f64;
        report.epoch_losses.push(epoch_loss);
        report.final_loss = epoch_loss;

        if epoch_loss < best_loss - MIN_DELTA {
            best_loss = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok((model, report))
}

/// Anything that can map a fixed-length window to a one-step-ahead forecast.
pub trait OneStepForecaster {
    fn window_len(&self) -> usize;
    fn one_step(&self, window: &[f64]) -> f64;
}

impl OneStepForecaster for LstmModel {
    fn window_len(&self) -> usize {
        self.config.m
    }

    fn one_step(&self, window: &[f64]) -> f64 {
        self.predict(window)
            .expect("window length checked by caller")
    }
}

/// Recursive multi-step forecasting: the first step reads the last `m`
/// observations; each later step slides the window forward, substituting
/// earlier forecasts for observations that do not exist yet.
pub fn predict_recursive<M: OneStepForecaster + ?Sized>(
    model: &M,
    history: &[f64],
    horizon: usize,
) -> Result<Vec<f64>> {
    let m = model.window_len();
    if history.len() < m {
        return Err(Error::HistoryTooShort {
            have: history.len(),
            lag: m,
        });
    }
    let mut window: Vec<f64> = history[history.len() - m..].to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let pred = model.one_step(&window);
        out.push(pred);
        window.rotate_left(1);
        window[m - 1] = pred;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> LstmConfig {
        LstmConfig {
            m: 4,
            hu1: 5,
            hu2: 5,
            dr: 0.0,
            lr: 0.01,
            b: 3,
            epochs: 10,
            patience: 20,
            seed: 7,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = tiny_config();
        let a = LstmModel::init(&cfg).unwrap();
        let b = LstmModel::init(&cfg).unwrap();
        assert_eq!(a, b);
        let mut cfg2 = cfg;
        cfg2.seed = 8;
        assert_ne!(LstmModel::init(&cfg2).unwrap(), a);
    }

    #[test]
    fn smallest_model_parameter_count() {
        let cfg = LstmConfig {
            m: 1,
            hu1: 1,
            hu2: 1,
            dr: 0.0,
            lr: 0.01,
            b: 1,
            epochs: 0,
            patience: 1,
            seed: 1,
        };
        let model = LstmModel::init(&cfg).unwrap();
        // 4(1*2+1) per layer plus the hu2+1 dense readout
        assert_eq!(model.n_params(), 26);
    }

    #[test]
    fn forget_gate_bias_starts_at_one() {
        let model = LstmModel::init(&tiny_config()).unwrap();
        for layer in [&model.layer1, &model.layer2] {
            let h = layer.hidden;
            for j in 0..h {
                assert_eq!(layer.b[j], 0.0); // input gate
                assert_eq!(layer.b[h + j], FORGET_BIAS);
                assert_eq!(layer.b[2 * h + j], 0.0);
                assert_eq!(layer.b[3 * h + j], 0.0);
            }
        }
    }

    #[test]
    fn zero_weights_produce_zero_output() {
        let mut model = LstmModel::init(&tiny_config()).unwrap();
        for t in model.param_tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        // gates sit at 0.5, candidate at 0, so cell and hidden stay 0
        let pred = model.predict(&[0.3, -0.4, 1.0, 0.0]).unwrap();
        assert_eq!(pred, 0.0);
    }

    #[test]
    fn training_and_inference_agree_without_dropout() {
        let model = LstmModel::init(&tiny_config()).unwrap();
        let win = Mat::from_fn(3, 4, |i, j| ((i * 4 + j) as f64 * 0.17).sin());
        let mut ws_t = Workspace::new(&model, 3);
        let mut ws_i = Workspace::new(&model, 3);
        let mut rng = rng_from(5, &[]);
        forward_batch(&model, &win, true, &mut rng, &mut ws_t);
        forward_batch(&model, &win, false, &mut rng, &mut ws_i);
        assert_eq!(ws_t.preds, ws_i.preds);
    }

    #[test]
    fn dropout_scales_by_keep_probability() {
        let mut cfg = tiny_config();
        cfg.dr = 0.4;
        let model = LstmModel::init(&cfg).unwrap();
        let win = Mat::from_fn(64, 4, |i, j| ((i + j) as f64 * 0.05).sin());
        let mut ws = Workspace::new(&model, 64);
        let mut rng = rng_from(6, &[]);
        forward_batch(&model, &win, true, &mut rng, &mut ws);
        // inverted dropout: non-zero mask entries are exactly 1/keep
        let inv = 1.0 / 0.6;
        let mut zeros = 0usize;
        let mut total = 0usize;
        for t in 0..4 {
            for v in ws.l1.mask[t].as_slice() {
                assert!(*v == 0.0 || (*v - inv).abs() < 1e-15);
                zeros += (*v == 0.0) as usize;
                total += 1;
            }
        }
        let rate = zeros as f64 / total as f64;
        assert!((rate - 0.4).abs() < 0.06, "empirical drop rate {rate}");
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // one unit per layer, one time step, hand-set weights
        let cfg = LstmConfig {
            m: 1,
            hu1: 1,
            hu2: 1,
            dr: 0.0,
            lr: 0.01,
            b: 1,
            epochs: 0,
            patience: 1,
            seed: 3,
        };
        let mut model = LstmModel::init(&cfg).unwrap();
        // rows [x; h], cols [i f g o]
        model.layer1.w = Mat::from_vec(2, 4, vec![0.5, -0.3, 0.8, 0.2, 0.1, 0.4, -0.6, 0.7]);
        model.layer1.b = vec![0.05, -0.1, 0.2, 0.0];
        model.layer2.w = Mat::from_vec(2, 4, vec![-0.4, 0.6, 0.3, -0.2, 0.9, -0.5, 0.1, 0.3]);
        model.layer2.b = vec![0.0, 0.1, -0.05, 0.2];
        model.dense_w = vec![1.5];
        model.dense_b = -0.25;

        let x = 0.7;
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        // layer 1 from zero state
        let i1 = sig(0.5 * x + 0.05);
        let g1 = (0.8 * x + 0.2_f64).tanh();
        let o1 = sig(0.2 * x);
        let c1 = i1 * g1;
        let h1 = o1 * c1.tanh();
        // layer 2 consumes h1
        let i2 = sig(-0.4 * h1);
        let g2 = (0.3 * h1 - 0.05_f64).tanh();
        let o2 = sig(-0.2 * h1 + 0.2);
        let c2 = i2 * g2;
        let h2 = o2 * c2.tanh();
        let want = 1.5 * h2 - 0.25;

        let got = model.predict(&[x]).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    fn finite_difference_check(cfg: &LstmConfig, tol: f64) {
        let model = LstmModel::init(cfg).unwrap();
        let bsz = cfg.b;
        let win = Mat::from_fn(bsz, cfg.m, |i, j| ((i * 7 + j * 3) as f64 * 0.23).sin());
        let targets: Vec<f64> = (0..bsz).map(|i| ((i as f64) * 0.7).cos() * 0.5).collect();
        let (_, grads) = batch_gradients(&model, &win, &targets).unwrap();
        let flat = grads.flat();

        let eps = 1e-5;
        let n = model.n_params();
        assert_eq!(flat.len(), n);
        let mut max_rel = 0.0f64;
        for p in 0..n {
            let mut plus = model.clone();
            let mut minus = model.clone();
            {
                let mut idx = p;
                for t in plus.param_tensors_mut() {
                    if idx < t.len() {
                        t[idx] += eps;
                        break;
                    }
                    idx -= t.len();
                }
            }
            {
                let mut idx = p;
                for t in minus.param_tensors_mut() {
                    if idx < t.len() {
                        t[idx] -= eps;
                        break;
                    }
                    idx -= t.len();
                }
            }
            let lp = batch_loss(&plus, &win, &targets).unwrap();
            let lm = batch_loss(&minus, &win, &targets).unwrap();
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = flat[p];
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < tol, "max relative gradient error {max_rel}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(&tiny_config(), 1e-4);
    }

    #[test]
    fn zero_model_zero_targets_zero_gradients() {
        let mut model = LstmModel::init(&tiny_config()).unwrap();
        for t in model.param_tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        let win = Mat::from_fn(2, 4, |i, j| (i + j) as f64 * 0.1);
        let (loss, grads) = batch_gradients(&model, &win, &[0.0, 0.0]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.flat().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn duplicating_batch_leaves_gradients_unchanged() {
        let model = LstmModel::init(&tiny_config()).unwrap();
        let win = Mat::from_fn(2, 4, |i, j| ((i * 4 + j) as f64 * 0.31).cos());
        let targets = [0.2, -0.4];
        let (loss1, g1) = batch_gradients(&model, &win, &targets).unwrap();
        let win2 = Mat::from_fn(4, 4, |i, j| win.get(i % 2, j));
        let targets2 = [0.2, -0.4, 0.2, -0.4];
        let (loss2, g2) = batch_gradients(&model, &win2, &targets2).unwrap();
        assert!((loss1 - loss2).abs() < 1e-12);
        for (a, b) in g1.flat().iter().zip(g2.flat()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn sine_dataset(m: usize) -> LagDataset {
        let z: Vec<f64> = (0..200)
            .map(|t| 0.5 + 0.5 * (core::f64::consts::TAU * t as f64 / 12.0).sin())
            .collect();
        crate::series::make_lag_dataset(&z, m).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialized_model() {
        let mut cfg = tiny_config();
        cfg.epochs = 0;
        let data = sine_dataset(cfg.m);
        let (model, report) = train(&cfg, &data).unwrap();
        assert_eq!(model, LstmModel::init(&cfg).unwrap());
        assert!(report.epoch_losses.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = LstmConfig {
            m: 6,
            hu1: 8,
            hu2: 8,
            dr: 0.2,
            lr: 0.01,
            b: 16,
            epochs: 5,
            patience: 20,
            seed: 11,
        };
        let data = sine_dataset(cfg.m);
        let (m1, r1) = train(&cfg, &data).unwrap();
        let (m2, r2) = train(&cfg, &data).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn training_learns_sine() {
        let cfg = LstmConfig {
            m: 12,
            hu1: 16,
            hu2: 16,
            dr: 0.0,
            lr: 0.01,
            b: 16,
            epochs: 150,
            patience: 150,
            seed: 5,
        };
        let data = sine_dataset(cfg.m);
        let (model, report) = train(&cfg, &data).unwrap();
        assert!(
            report.final_loss < 1e-3,
            "final training mse {}",
            report.final_loss
        );
        assert!(report.epoch_losses[0] > report.final_loss);
        assert!(model.params_finite());
    }

    #[test]
    fn batch_size_clamped_to_sample_count() {
        let mut cfg = tiny_config();
        cfg.b = 1000;
        cfg.epochs = 2;
        let data = sine_dataset(cfg.m);
        let (_, report) = train(&cfg, &data).unwrap();
        assert_eq!(report.samples_processed, 2 * data.n_samples());
    }

    #[test]
    fn predict_recursive_windows_follow_substitution_scheme() {
        // a stub that records every window it sees
        struct Recorder {
            m: usize,
            seen: core::cell::RefCell<Vec<Vec<f64>>>,
        }
        impl OneStepForecaster for Recorder {
            fn window_len(&self) -> usize {
                self.m
            }
            fn one_step(&self, window: &[f64]) -> f64 {
                self.seen.borrow_mut().push(window.to_vec());
                1000.0 + self.seen.borrow().len() as f64
            }
        }
        let rec = Recorder {
            m: 3,
            seen: Default::default(),
        };
        let history = [1.0, 2.0, 3.0, 8.0, 9.0, 10.0];
        let out = predict_recursive(&rec, &history, 4).unwrap();
        assert_eq!(out, vec![1001.0, 1002.0, 1003.0, 1004.0]);
        let seen = rec.seen.borrow();
        assert_eq!(seen[0], vec![8.0, 9.0, 10.0]);
        assert_eq!(seen[1], vec![9.0, 10.0, 1001.0]);
        assert_eq!(seen[2], vec![10.0, 1001.0, 1002.0]);
        assert_eq!(seen[3], vec![1001.0, 1002.0, 1003.0]);
    }

    #[test]
    fn predict_recursive_constant_model_is_fixed_point() {
        struct Constant;
        impl OneStepForecaster for Constant {
            fn window_len(&self) -> usize {
                2
            }
            fn one_step(&self, _: &[f64]) -> f64 {
                0.42
            }
        }
        let out = predict_recursive(&Constant, &[0.0, 0.0], 7).unwrap();
        assert!(out.iter().all(|v| *v == 0.42));
    }

    #[test]
    fn predict_recursive_truncation_equivalence() {
        let cfg = tiny_config();
        let data = sine_dataset(cfg.m);
        let (model, _) = train(&LstmConfig { epochs: 20, ..cfg }, &data).unwrap();
        let history: Vec<f64> = (0..20)
            .map(|t| 0.5 + 0.5 * (core::f64::consts::TAU * t as f64 / 12.0).sin())
            .collect();
        let long = predict_recursive(&model, &history, 15).unwrap();
        for h in [1usize, 4, 9, 15] {
            let short = predict_recursive(&model, &history, h).unwrap();
            assert_eq!(short, long[..h]);
        }
    }

    #[test]
    fn predict_recursive_requires_enough_history() {
        let model = LstmModel::init(&tiny_config()).unwrap();
        assert!(matches!(
            predict_recursive(&model, &[1.0, 2.0], 3),
            Err(Error::HistoryTooShort { have: 2, lag: 4 })
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let cfg = tiny_config();
        let data = sine_dataset(cfg.m);
        let (model, _) = train(&cfg, &data).unwrap();
        let text = model.to_json();
        let back = LstmModel::from_json(&text).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn json_rejects_inconsistent_shapes() {
        let model = LstmModel::init(&tiny_config()).unwrap();
        let text = model.to_json().replace("\"hu1\":5", "\"hu1\":6");
        assert!(matches!(
            LstmModel::from_json(&text),
            Err(Error::ModelFormat(_))
        ));
    }
}
