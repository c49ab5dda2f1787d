//! Causal temporal convolutional network with hand-derived gradients.
//!
//! One stack of residual blocks, one per dilation. Each block applies two
//! causal dilated convolutions with ReLU (and optional dropout) after each,
//! plus a skip connection with a 1x1 projection when channel counts differ.
//! A linear head reads the last timestep's features and a sigmoid squashes
//! the output, so both the classification score and the regression output
//! live in (0, 1). Training is plain minibatch Adam on the mean batch loss;
//! there is no autograd, gradients are derived for exactly this
//! architecture and checked against finite differences in the tests.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::Task;
use crate::model::Window;

pub const TCN_FORMAT: &str = "wellevent-tcn";
pub const TCN_VERSION: u32 = 1;

/// Causal convolutions per residual block.
pub const CONVS_PER_BLOCK: usize = 2;

#[derive(Debug, Error)]
pub enum TcnError {
    #[error("shape mismatch: expected {expected} channels, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training and validation sets must both be non-empty")]
    EmptySplit,
    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub channels: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub task: Task,
    pub seed: u64,
}

impl TcnConfig {
    /// Stock settings: one stack, filter size 3, dilations [1, 2, 4],
    /// 30 epochs, Adam.
    pub fn default_for(task: Task) -> TcnConfig {
        TcnConfig {
            kernel_size: 3,
            dilations: vec![1, 2, 4],
            channels: 32,
            dropout: 0.0,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            task,
            seed: 0,
        }
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.kernel_size, &self.dilations, CONVS_PER_BLOCK)
    }
}

/// Number of trailing input steps that can influence the current output:
/// 1 + convs_per_block * (k - 1) * sum(dilations).
pub fn receptive_field(kernel_size: usize, dilations: &[usize], convs_per_block: usize) -> usize {
    1 + convs_per_block * (kernel_size - 1) * dilations.iter().sum::<usize>()
}

/// Time-major sequence buffer: `data[t * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq {
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Seq {
    pub fn zeros(t_len: usize, channels: usize) -> Seq {
        Seq { channels, data: vec![0.0; t_len * channels] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Seq {
        let channels = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * channels);
        for r in rows {
            data.extend_from_slice(r);
        }
        Seq { channels, data }
    }

    pub fn t_len(&self) -> usize {
        self.data.len().checked_div(self.channels).unwrap_or(0)
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }
}

/// One causal dilated convolution. Tap `j` of the kernel reads the input
/// at `t - (k-1-j)*dilation`, so tap `k-1` is the current timestep and the
/// output never looks ahead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    /// Weights, flattened as `[out][in][tap]`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv1d {
    fn new_zero(in_ch: usize, out_ch: usize, kernel: usize, dilation: usize) -> Conv1d {
        Conv1d {
            in_ch,
            out_ch,
            kernel,
            dilation,
            w: vec![0.0; out_ch * in_ch * kernel],
            b: vec![0.0; out_ch],
        }
    }

    fn init(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> Conv1d {
        let mut conv = Conv1d::new_zero(in_ch, out_ch, kernel, dilation);
        let bound = (1.0 / (in_ch * kernel) as f64).sqrt();
        for w in &mut conv.w {
            *w = rng.gen_range(-bound..bound);
        }
        conv
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, j: usize) -> usize {
        (o * self.in_ch + i) * self.kernel + j
    }

    pub fn forward(&self, x: &Seq) -> Seq {
        debug_assert_eq!(x.channels, self.in_ch);
        let t_len = x.t_len();
        let mut out = Seq::zeros(t_len, self.out_ch);
        for t in 0..t_len {
            for o in 0..self.out_ch {
                let mut acc = self.b[o];
                for j in 0..self.kernel {
                    let offset = (self.kernel - 1 - j) * self.dilation;
                    if offset > t {
                        continue;
                    }
                    let src = x.row(t - offset);
                    for (i, &xv) in src.iter().enumerate() {
                        acc += self.w[self.widx(o, i, j)] * xv;
                    }
                }
                out.data[t * self.out_ch + o] = acc;
            }
        }
        out
    }

    /// Accumulate weight and bias gradients given the upstream gradient
    /// `dout` and the forward input `x`.
    fn accumulate_grads(&self, x: &Seq, dout: &Seq, dw: &mut [f64], db: &mut [f64]) {
        let t_len = x.t_len();
        for t in 0..t_len {
            let drow = dout.row(t);
            for (o, &d) in drow.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                db[o] += d;
                for j in 0..self.kernel {
                    let offset = (self.kernel - 1 - j) * self.dilation;
                    if offset > t {
                        continue;
                    }
                    let src = x.row(t - offset);
                    for (i, &xv) in src.iter().enumerate() {
                        dw[self.widx(o, i, j)] += d * xv;
                    }
                }
            }
        }
    }

    /// Gradient with respect to the convolution input.
    fn input_grad(&self, dout: &Seq) -> Seq {
        let t_len = dout.t_len();
        let mut dx = Seq::zeros(t_len, self.in_ch);
        for t in 0..t_len {
            let drow = dout.row(t);
            for (o, &d) in drow.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for j in 0..self.kernel {
                    let offset = (self.kernel - 1 - j) * self.dilation;
                    if offset > t {
                        continue;
                    }
                    let u = t - offset;
                    for i in 0..self.in_ch {
                        dx.data[u * self.in_ch + i] += self.w[self.widx(o, i, j)] * d;
                    }
                }
            }
        }
        dx
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Free-function form of the causal convolution for row-major windows.
pub fn causal_conv1d(input: &[Vec<f64>], conv: &Conv1d) -> Result<Vec<Vec<f64>>, TcnError> {
    let x = Seq::from_rows(input);
    if x.channels != conv.in_ch {
        return Err(TcnError::ShapeMismatch { expected: conv.in_ch, got: x.channels });
    }
    let out = conv.forward(&x);
    Ok((0..out.t_len()).map(|t| out.row(t).to_vec()).collect())
}

/// Residual block: two causal convolutions with ReLU after each, plus a
/// skip connection (1x1 projection when channel counts differ); the output
/// is ReLU(conv path + skip).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualBlock {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub proj: Option<Conv1d>,
}

struct BlockCache {
    x: Seq,
    z1: Seq,
    a1: Seq,
    m1: Option<Vec<f64>>,
    z2: Seq,
    m2: Option<Vec<f64>>,
    y_pre: Seq,
}

fn relu(x: &Seq) -> Seq {
    Seq { channels: x.channels, data: x.data.iter().map(|&v| v.max(0.0)).collect() }
}

fn dropout_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let keep = 1.0 - p;
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { 1.0 / keep })
        .collect()
}

impl ResidualBlock {
    fn init(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut ChaCha8Rng,
    ) -> ResidualBlock {
        let conv1 = Conv1d::init(in_ch, out_ch, kernel, dilation, rng);
        let conv2 = Conv1d::init(out_ch, out_ch, kernel, dilation, rng);
        let proj = if in_ch != out_ch {
            Some(Conv1d::init(in_ch, out_ch, 1, 1, rng))
        } else {
            None
        };
        ResidualBlock { conv1, conv2, proj }
    }

    pub fn forward(&self, x: &Seq) -> Seq {
        self.forward_cached(x, 0.0, None).1.remove(0)
    }

    /// Forward pass keeping everything backward needs. Returns the cache
    /// and a one-element vec holding the output (avoids a clone).
    fn forward_cached(
        &self,
        x: &Seq,
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (BlockCache, Vec<Seq>) {
        let z1 = self.conv1.forward(x);
        let mut a1 = relu(&z1);
        let m1 = if dropout > 0.0 {
            let mask = dropout_mask(a1.data.len(), dropout, rng.as_deref_mut().unwrap());
            for (v, &m) in a1.data.iter_mut().zip(&mask) {
                *v *= m;
            }
            Some(mask)
        } else {
            None
        };
        let z2 = self.conv2.forward(&a1);
        let mut a2 = relu(&z2);
        let m2 = if dropout > 0.0 {
            let mask = dropout_mask(a2.data.len(), dropout, rng.unwrap());
            for (v, &m) in a2.data.iter_mut().zip(&mask) {
                *v *= m;
            }
            Some(mask)
        } else {
            None
        };
        let skip = match &self.proj {
            Some(p) => p.forward(x),
            None => x.clone(),
        };
        let mut y_pre = a2;
        for (v, &s) in y_pre.data.iter_mut().zip(&skip.data) {
            *v += s;
        }
        let y = relu(&y_pre);
        let cache = BlockCache { x: x.clone(), z1, a1, m1, z2, m2, y_pre };
        (cache, vec![y])
    }

    fn param_count(&self) -> usize {
        self.conv1.param_count()
            + self.conv2.param_count()
            + self.proj.as_ref().map(|p| p.param_count()).unwrap_or(0)
    }
}

/// Per-channel z-score fitted on the raw training windows. Channels with
/// zero training spread map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub channel_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(windows: &[Window], channel_names: &[String]) -> Standardizer {
        let channels = channel_names.len();
        let mut count = 0usize;
        let mut mean = vec![0.0; channels];
        for w in windows {
            for row in &w.values {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
                count += 1;
            }
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = vec![0.0; channels];
        for w in windows {
            for row in &w.values {
                for (s, (&v, &m)) in var.iter_mut().zip(row.iter().zip(&mean)) {
                    let d = v - m;
                    *s += d * d;
                }
            }
        }
        let std = var.iter().map(|&s| (s / count as f64).sqrt()).collect();
        Standardizer { channel_names: channel_names.to_vec(), mean, std }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &[Vec<f64>]) -> Result<Seq, TcnError> {
        let channels = self.channels();
        if values.first().map(|r| r.len()).unwrap_or(0) != channels {
            return Err(TcnError::ShapeMismatch {
                expected: channels,
                got: values.first().map(|r| r.len()).unwrap_or(0),
            });
        }
        let mut out = Seq::zeros(values.len(), channels);
        for (t, row) in values.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let s = self.std[c];
                out.data[t * channels + c] =
                    if s == 0.0 { 0.0 } else { (v - self.mean[c]) / s };
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnModel {
    pub config: TcnConfig,
    pub standardizer: Standardizer,
    pub blocks: Vec<ResidualBlock>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

/// Gradients mirroring the model's parameters, in flatten order.
#[derive(Debug, Clone)]
pub struct TcnGradients {
    pub flat: Vec<f64>,
}

struct ForwardCache {
    block_caches: Vec<BlockCache>,
    features: Seq,
    score: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Per-sample loss on a score in (0, 1): binary cross-entropy for
/// classification, squared error for regression. Batch loss is the mean.
pub fn loss(score: f64, target: f64, task: Task) -> f64 {
    match task {
        Task::Classify => {
            let s = score.clamp(1e-12, 1.0 - 1e-12);
            -(target * s.ln() + (1.0 - target) * (1.0 - s).ln())
        }
        Task::Regress => {
            let e = score - target;
            e * e
        }
    }
}

/// d(loss)/d(head pre-activation) for one sample.
fn loss_grad_z(score: f64, target: f64, task: Task) -> f64 {
    match task {
        Task::Classify => score - target,
        Task::Regress => 2.0 * (score - target) * score * (1.0 - score),
    }
}

impl TcnModel {
    /// Seeded fan-in initialization: each tensor uniform in
    /// +-sqrt(1/(fan_in)), biases zero.
    pub fn init(config: TcnConfig, standardizer: Standardizer) -> TcnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut blocks = Vec::with_capacity(config.dilations.len());
        let mut in_ch = standardizer.channels();
        for &d in &config.dilations {
            blocks.push(ResidualBlock::init(in_ch, config.channels, config.kernel_size, d, &mut rng));
            in_ch = config.channels;
        }
        let bound = (1.0 / config.channels as f64).sqrt();
        let head_w = (0..config.channels).map(|_| rng.gen_range(-bound..bound)).collect();
        TcnModel { config, standardizer, blocks, head_w, head_b: 0.0 }
    }

    /// All-zero parameters; useful as a fixed point in tests.
    pub fn zeroed(config: TcnConfig, standardizer: Standardizer) -> TcnModel {
        let mut model = TcnModel::init(config, standardizer);
        let zeros = vec![0.0; model.param_count()];
        model.assign_flat(&zeros);
        model
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.param_count()).sum::<usize>() + self.head_w.len() + 1
    }

    /// Parameters flattened in a fixed order: per block conv1.w, conv1.b,
    /// conv2.w, conv2.b, proj.w, proj.b; then head weights and bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in &self.blocks {
            out.extend_from_slice(&b.conv1.w);
            out.extend_from_slice(&b.conv1.b);
            out.extend_from_slice(&b.conv2.w);
            out.extend_from_slice(&b.conv2.b);
            if let Some(p) = &b.proj {
                out.extend_from_slice(&p.w);
                out.extend_from_slice(&p.b);
            }
        }
        out.extend_from_slice(&self.head_w);
        out.push(self.head_b);
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut pos = 0;
        let take = |dst: &mut [f64], pos: &mut usize| {
            dst.copy_from_slice(&flat[*pos..*pos + dst.len()]);
            *pos += dst.len();
        };
        for b in &mut self.blocks {
            take(&mut b.conv1.w, &mut pos);
            take(&mut b.conv1.b, &mut pos);
            take(&mut b.conv2.w, &mut pos);
            take(&mut b.conv2.b, &mut pos);
            if let Some(p) = &mut b.proj {
                take(&mut p.w, &mut pos);
                take(&mut p.b, &mut pos);
            }
        }
        take(&mut self.head_w, &mut pos);
        self.head_b = flat[pos];
    }

    /// Feature sequence after the last residual block, on an already
    /// standardized input.
    pub fn forward_features(&self, input: &Seq) -> Seq {
        let mut cur = input.clone();
        for b in &self.blocks {
            cur = b.forward(&cur);
        }
        cur
    }

    /// Score on an already standardized window: sigmoid of the head read at
    /// the last timestep.
    pub fn forward(&self, input: &Seq) -> Result<f64, TcnError> {
        if input.channels != self.standardizer.channels() {
            return Err(TcnError::ShapeMismatch {
                expected: self.standardizer.channels(),
                got: input.channels,
            });
        }
        let features = self.forward_features(input);
        let last = features.row(features.t_len() - 1);
        let z =
            self.head_b + self.head_w.iter().zip(last).map(|(w, f)| w * f).sum::<f64>();
        Ok(sigmoid(z))
    }

    /// Standardize a raw window and score it.
    pub fn score_window(&self, values: &[Vec<f64>]) -> Result<f64, TcnError> {
        let std = self.standardizer.apply(values)?;
        self.forward(&std)
    }

    fn forward_cached(
        &self,
        input: &Seq,
        dropout: f64,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> ForwardCache {
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut cur = input.clone();
        for b in &self.blocks {
            let (cache, mut out) = b.forward_cached(&cur, dropout, rng.as_deref_mut());
            cur = out.remove(0);
            caches.push(cache);
        }
        let last = cur.row(cur.t_len() - 1);
        let z =
            self.head_b + self.head_w.iter().zip(last).map(|(w, f)| w * f).sum::<f64>();
        ForwardCache { block_caches: caches, features: cur, score: sigmoid(z) }
    }

    fn backward_window(&self, cache: &ForwardCache, dz: f64, grads: &mut [f64]) {
        let t_len = cache.features.t_len();
        let channels = self.head_w.len();
        // head gradients live at the end of the flat layout
        let head_start = grads.len() - channels - 1;
        let last = cache.features.row(t_len - 1);
        for c in 0..channels {
            grads[head_start + c] += dz * last[c];
        }
        grads[head_start + channels] += dz;

        let mut d_out = Seq::zeros(t_len, channels);
        for c in 0..channels {
            d_out.data[(t_len - 1) * channels + c] = dz * self.head_w[c];
        }

        // walk blocks in reverse, keeping a running offset into the flat
        // gradient layout
        let mut offsets = Vec::with_capacity(self.blocks.len());
        let mut pos = 0;
        for b in &self.blocks {
            offsets.push(pos);
            pos += b.param_count();
        }
        for (bi, block) in self.blocks.iter().enumerate().rev() {
            let c = &cache.block_caches[bi];
            let base = offsets[bi];
            // through the output relu
            let mut dy_pre = d_out;
            for (g, &pre) in dy_pre.data.iter_mut().zip(&c.y_pre.data) {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            }
            // conv path
            let mut da2 = dy_pre.clone();
            if let Some(mask) = &c.m2 {
                for (g, &m) in da2.data.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            let mut dz2 = da2;
            for (g, &z) in dz2.data.iter_mut().zip(&c.z2.data) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            let w1_len = block.conv1.w.len();
            let b1_len = block.conv1.b.len();
            let w2_len = block.conv2.w.len();
            let b2_len = block.conv2.b.len();
            {
                let (w2_slice, rest) = grads[base + w1_len + b1_len..].split_at_mut(w2_len);
                block.conv2.accumulate_grads(&c.a1, &dz2, w2_slice, &mut rest[..b2_len]);
            }
            let mut da1 = block.conv2.input_grad(&dz2);
            if let Some(mask) = &c.m1 {
                for (g, &m) in da1.data.iter_mut().zip(mask) {
                    *g *= m;
                }
            }
            let mut dz1 = da1;
            for (g, &z) in dz1.data.iter_mut().zip(&c.z1.data) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            {
                let (w1_slice, rest) = grads[base..].split_at_mut(w1_len);
                block.conv1.accumulate_grads(&c.x, &dz1, w1_slice, &mut rest[..b1_len]);
            }
            let mut dx = block.conv1.input_grad(&dz1);
            // skip path
            match &block.proj {
                Some(p) => {
                    let pw_start = base + w1_len + b1_len + w2_len + b2_len;
                    let pw_len = p.w.len();
                    {
                        let (pw_slice, rest) = grads[pw_start..].split_at_mut(pw_len);
                        p.accumulate_grads(&c.x, &dy_pre, pw_slice, &mut rest[..p.b.len()]);
                    }
                    let dskip = p.input_grad(&dy_pre);
                    for (g, &s) in dx.data.iter_mut().zip(&dskip.data) {
                        *g += s;
                    }
                }
                None => {
                    for (g, &s) in dx.data.iter_mut().zip(&dy_pre.data) {
                        *g += s;
                    }
                }
            }
            d_out = dx;
        }
    }

    /// Mean loss and exact gradients of the mean loss over a batch of
    /// standardized windows with targets.
    pub fn backward(
        &self,
        batch: &[(&Seq, f64)],
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, TcnGradients) {
        let mut grads = vec![0.0; self.param_count()];
        let mut total_loss = 0.0;
        let task = self.config.task;
        let dropout = self.config.dropout;
        let mut rng = dropout_rng;
        for &(input, target) in batch {
            let cache = self.forward_cached(input, dropout, rng.as_deref_mut());
            total_loss += loss(cache.score, target, task);
            let dz = loss_grad_z(cache.score, target, task);
            self.backward_window(&cache, dz, &mut grads);
        }
        let n = batch.len() as f64;
        for g in &mut grads {
            *g /= n;
        }
        (total_loss / n, TcnGradients { flat: grads })
    }
}

/// Adam accumulator for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: usize,
}

impl AdamState {
    pub fn new(len: usize) -> AdamState {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    assert_eq!(params.len(), grads.len());
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// Per-epoch losses and the epoch whose parameters were kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// 1-based epoch with the minimum validation loss (first on ties).
    pub selected_epoch: usize,
}

fn mean_loss(model: &TcnModel, set: &[(Seq, f64)]) -> f64 {
    let total: f64 = set
        .iter()
        .map(|(input, target)| {
            let score = model.forward(input).expect("shape checked at split time");
            loss(score, *target, model.config.task)
        })
        .sum();
    total / set.len() as f64
}

fn targets_for(windows: &[Window], task: Task) -> Vec<f64> {
    windows
        .iter()
        .map(|w| match task {
            Task::Classify => {
                if w.class_label {
                    1.0
                } else {
                    0.0
                }
            }
            Task::Regress => w.prob_target,
        })
        .collect()
}

/// Train with seeded per-epoch shuffling and minibatch Adam, evaluating the
/// validation loss after every epoch and returning the parameters from the
/// best epoch.
pub fn train(
    mut model: TcnModel,
    train_windows: &[Window],
    val_windows: &[Window],
) -> Result<(TcnModel, TrainReport), TcnError> {
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(TcnError::EmptySplit);
    }
    let config = model.config.clone();
    let task = config.task;
    let std = &model.standardizer;
    let prep = |windows: &[Window]| -> Result<Vec<(Seq, f64)>, TcnError> {
        let targets = targets_for(windows, task);
        windows
            .iter()
            .zip(targets)
            .map(|(w, t)| Ok((std.apply(&w.values)?, t)))
            .collect()
    };
    let train_set = prep(train_windows)?;
    let val_set = prep(val_windows)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut params = model.flatten();
    let mut adam = AdamState::new(params.len());
    let mut report = TrainReport { train_loss: vec![], val_loss: vec![], selected_epoch: 0 };
    let mut best: Option<(f64, Vec<f64>)> = None;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, shuffle_rng.gen_range(0..=i));
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<(&Seq, f64)> =
                chunk.iter().map(|&i| (&train_set[i].0, train_set[i].1)).collect();
            let dropout_rng_ref =
                if config.dropout > 0.0 { Some(&mut dropout_rng) } else { None };
            let (batch_loss, grads) = model.backward(&batch, dropout_rng_ref);
            adam_step(
                &mut params,
                &grads.flat,
                &mut adam,
                config.learning_rate,
                config.beta1,
                config.beta2,
                config.epsilon,
            );
            model.assign_flat(&params);
            epoch_loss += batch_loss;
            batches += 1;
        }
        report.train_loss.push(epoch_loss / batches as f64);
        let val = mean_loss(&model, &val_set);
        report.val_loss.push(val);
        if best.as_ref().map(|(b, _)| val < *b).unwrap_or(true) {
            best = Some((val, params.clone()));
            report.selected_epoch = epoch;
        }
    }
    let (_, best_params) = best.expect("at least one epoch ran");
    model.assign_flat(&best_params);
    Ok((model, report))
}

#[derive(Serialize, Deserialize)]
struct TcnFile {
    format: String,
    version: u32,
    model: TcnModel,
}

pub fn save_model(model: &TcnModel, path: &Path) -> Result<(), TcnError> {
    let file = TcnFile {
        format: TCN_FORMAT.to_string(),
        version: TCN_VERSION,
        model: model.clone(),
    };
    let json =
        serde_json::to_string(&file).map_err(|e| TcnError::CorruptModelFile(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TcnModel, TcnError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| TcnError::CorruptModelFile(e.to_string()))?;
    let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != TCN_FORMAT {
        return Err(TcnError::CorruptModelFile(format!("format `{format}`")));
    }
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
    if version != TCN_VERSION as u64 {
        return Err(TcnError::CorruptModelFile(format!("version {version}")));
    }
    let file: TcnFile =
        serde_json::from_value(value).map_err(|e| TcnError::CorruptModelFile(e.to_string()))?;
    Ok(file.model)
}
