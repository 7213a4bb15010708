//! End-to-end training of the prototype network and the statistics the
//! precoder fit needs afterwards.

use std::path::Path;

use serde::Serialize;

use crate::dataset::{epoch_batches, Samples};
use crate::error::{Error, Result};
use crate::linalg::{mul_vec_hermitian_into, seeded_rng, ComplexMatrix, ComplexVector, SimRng, C64};
use crate::prototype_net::{
    forward_batch, received_power, ForwardTrace, NetParams, NetShape, PnMode, PnStats, PN_MOMENTUM,
};

/// Lower clamp on the true-class probability inside the log.
pub const LOG_FLOOR: f64 = 1e-12;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_EVAL: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LossKind {
    /// Penalises the Frobenius norm of the hop weights.
    L1,
    /// Penalises the received signal power of each hop.
    L2,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::L1 => "L1",
            LossKind::L2 => "L2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub lambda: f64,
}

impl LossConfig {
    pub fn new(kind: LossKind, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self { kind, lambda })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Channel noise injected at every hop during training.
    pub noise_variance: f64,
    pub seed: u64,
    /// Evaluate on the held-out set every this many epochs (the last epoch always).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            noise_variance: 0.1,
            seed: 0,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::InvalidArgument("noise variance must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("invalid Adam hyperparameters".into()));
        }
        Ok(())
    }
}

/// Gradients with the same layout as the trainable part of `NetParams`.
///
/// Complex entries hold `∂L/∂Re + i·∂L/∂Im`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub hops: Vec<Vec<ComplexMatrix>>,
    pub head_weights: Vec<f64>,
    pub head_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &NetParams) -> Self {
        Self {
            hops: params
                .hops
                .iter()
                .map(|h| {
                    h.blocks()
                        .iter()
                        .map(|b| ComplexMatrix::zeros(b.rows(), b.cols()))
                        .collect()
                })
                .collect(),
            head_weights: vec![0.0; params.head.weights.len()],
            head_bias: vec![0.0; params.head.bias.len()],
        }
    }

    /// Flattened in the order of [`trainable_values`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in self.hops.iter().flatten() {
            for z in b.as_slice() {
                out.push(z.re);
                out.push(z.im);
            }
        }
        out.extend_from_slice(&self.head_weights);
        out.extend_from_slice(&self.head_bias);
        out
    }
}

/// Every trainable real number: hop blocks (re, im interleaved), head weights, head bias.
pub fn trainable_values(params: &NetParams) -> Vec<f64> {
    let mut out = Vec::new();
    for h in &params.hops {
        for b in h.blocks() {
            for z in b.as_slice() {
                out.push(z.re);
                out.push(z.im);
            }
        }
    }
    out.extend_from_slice(&params.head.weights);
    out.extend_from_slice(&params.head.bias);
    out
}

/// Inverse of [`trainable_values`].
pub fn set_trainable_values(params: &mut NetParams, values: &[f64]) -> Result<()> {
    let expected = trainable_values(params).len();
    if values.len() != expected {
        return Err(Error::mismatch("set_trainable_values", (expected, 1), (values.len(), 1)));
    }
    let mut it = values.iter().copied();
    for h in &mut params.hops {
        for b in h.blocks_mut() {
            for z in b.as_mut_slice() {
                *z = C64::new(it.next().unwrap(), it.next().unwrap());
            }
        }
    }
    for w in params.head.weights.iter_mut().chain(params.head.bias.iter_mut()) {
        *w = it.next().unwrap();
    }
    Ok(())
}

fn cross_entropy(trace: &ForwardTrace, label: usize) -> f64 {
    -trace.probs[label].max(LOG_FLOOR).ln()
}

fn hop_power_sum(trace: &ForwardTrace) -> f64 {
    trace.z.iter().map(ComplexVector::norm_sq).sum()
}

/// Loss of a single sample, including the full weight penalty for `L1`.
pub fn loss_value(trace: &ForwardTrace, label: usize, params: &NetParams, cfg: &LossConfig) -> f64 {
    batch_loss(std::slice::from_ref(trace), &[label], params, cfg)
}

/// Mean cross-entropy over the batch plus the regulariser: `L1` adds
/// `(λ/N) Σ ‖W_j‖_F²` once, `L2` adds the batch mean of `(λ/N) Σ ‖z_j‖²`.
pub fn batch_loss(traces: &[ForwardTrace], labels: &[usize], params: &NetParams, cfg: &LossConfig) -> f64 {
    let b = traces.len() as f64;
    let n = params.shape.hops;
    let ce = traces
        .iter()
        .zip(labels)
        .map(|(t, &l)| cross_entropy(t, l))
        .sum::<f64>()
        / b;
    if n == 0 || cfg.lambda == 0.0 {
        return ce;
    }
    let scale = cfg.lambda / n as f64;
    let reg = match cfg.kind {
        LossKind::L1 => params.hops.iter().map(|h| h.frobenius_norm_sq()).sum::<f64>(),
        LossKind::L2 => traces.iter().map(hop_power_sum).sum::<f64>() / b,
    };
    ce + scale * reg
}

fn relu_mask(g: &mut [C64], y: &[C64]) {
    for (gi, yi) in g.iter_mut().zip(y) {
        if yi.re <= 0.0 {
            gi.re = 0.0;
        }
        if yi.im <= 0.0 {
            gi.im = 0.0;
        }
    }
}

/// Exact gradients of [`batch_loss`] for traces produced with the given
/// normaliser statistics, which are treated as constants.
pub fn backward(
    traces: &[ForwardTrace],
    labels: &[usize],
    stats: &[PnStats],
    params: &NetParams,
    cfg: &LossConfig,
) -> Result<Gradients> {
    if traces.is_empty() || traces.len() != labels.len() {
        return Err(Error::InvalidArgument("backward needs one label per trace".into()));
    }
    let n = params.shape.hops;
    let m = params.shape.block_width;
    let width = params.shape.width();
    if stats.len() != params.shape.pn_count() {
        return Err(Error::InvalidArgument("missing normaliser statistics".into()));
    }
    if traces
        .iter()
        .any(|t| t.z.len() != n || t.y.len() != n || t.s.len() != n.max(1) || t.features.len() != 2 * width)
    {
        return Err(Error::InvalidArgument("trace is missing intermediates".into()));
    }
    let b = traces.len() as f64;
    let classes = params.shape.classes;
    let inputs = params.head.inputs;
    let reg = if n == 0 { 0.0 } else { cfg.lambda / n as f64 };

    let mut grads = Gradients::zeros_like(params);
    let mut g = vec![C64::new(0.0, 0.0); width];
    let mut g_prev = vec![C64::new(0.0, 0.0); width];

    for (trace, &label) in traces.iter().zip(labels) {
        // Softmax cross-entropy and the dense head.
        let mut g_features = vec![0.0; inputs];
        for k in 0..classes {
            let gl = (trace.probs[k] - if k == label { 1.0 } else { 0.0 }) / b;
            grads.head_bias[k] += gl;
            let row = &params.head.weights[k * inputs..(k + 1) * inputs];
            let grow = &mut grads.head_weights[k * inputs..(k + 1) * inputs];
            for ((gw, &x), (&w, gf)) in grow
                .iter_mut()
                .zip(&trace.features)
                .zip(row.iter().zip(g_features.iter_mut()))
            {
                *gw += gl * x;
                *gf += gl * w;
            }
        }
        if n == 0 {
            continue;
        }

        for (i, gi) in g.iter_mut().enumerate() {
            *gi = C64::new(g_features[i], g_features[width + i]);
        }
        relu_mask(&mut g, trace.y[n - 1].as_slice());

        for hop in (0..n).rev() {
            // g now holds ∂L/∂y_hop = ∂L/∂z_hop before the power penalty.
            if cfg.kind == LossKind::L2 && reg != 0.0 {
                for (gi, zi) in g.iter_mut().zip(trace.z[hop].iter()) {
                    *gi += zi * (2.0 * reg / b);
                }
            }
            let s = trace.s[hop].as_slice();
            for (j, w) in params.hops[hop].blocks().iter().enumerate() {
                let gz = &g[j * m..(j + 1) * m];
                let sj = &s[j * m..(j + 1) * m];
                let gw = grads.hops[hop][j].as_mut_slice();
                for (r, &gzr) in gz.iter().enumerate() {
                    for (c, &sc) in sj.iter().enumerate() {
                        gw[r * m + c] += gzr * sc.conj();
                    }
                }
                if hop > 0 {
                    mul_vec_hermitian_into(w, gz, &mut g_prev[j * m..(j + 1) * m]);
                }
            }
            if hop > 0 {
                let inv = 1.0 / stats[hop].v;
                for (gi, gp) in g.iter_mut().zip(&g_prev) {
                    *gi = gp * inv;
                }
                relu_mask(&mut g, trace.y[hop - 1].as_slice());
            }
        }
    }

    if cfg.kind == LossKind::L1 && reg != 0.0 {
        for (gh, h) in grads.hops.iter_mut().zip(&params.hops) {
            for (gb, w) in gh.iter_mut().zip(h.blocks()) {
                gb.axpy(C64::new(2.0 * reg, 0.0), w)?;
            }
        }
    }
    Ok(grads)
}

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `values` in place.
pub fn adam_step(values: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if values.len() != grads.len() || values.len() != state.m.len() {
        return Err(Error::mismatch("adam_step", (values.len(), 1), (grads.len(), 1)));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((x, &g), m), v) in values
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *x -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    #[serde(rename = "Pr")]
    pub pr: Option<f64>,
}

pub fn write_training_log(path: &Path, rows: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    pub log: Vec<EpochLog>,
}

/// Trains a fresh network of the given shape.
///
/// Noise and shuffling come from streams derived from `cfg.seed`, so the
/// result is bitwise reproducible. When `held_out` is given, test accuracy
/// (at the training noise level) and the noiseless received power are logged.
pub fn train(
    train_set: &Samples,
    held_out: Option<&Samples>,
    shape: NetShape,
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = NetParams::init(shape, &mut seeded_rng(cfg.seed, &[STREAM_INIT]))?;
    let mut values = trainable_values(&params);
    let mut adam = AdamState::new(values.len());
    let mut stats_initialised = false;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(
            train_set.len(),
            cfg.batch_size,
            &mut seeded_rng(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]),
        )?;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in &batches {
            let inputs: Vec<&ComplexVector> = batch.iter().map(|&i| &train_set.inputs[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set.labels[i]).collect();
            let mut rngs: Vec<SimRng> = batch
                .iter()
                .map(|&i| seeded_rng(cfg.seed, &[STREAM_NOISE, epoch as u64, i as u64]))
                .collect();
            let (traces, stats) = forward_batch(&params, &inputs, cfg.noise_variance, PnMode::Batch, &mut rngs)?;
            for (running, batch_stats) in params.pn.iter_mut().zip(&stats) {
                if stats_initialised {
                    running.blend(batch_stats, PN_MOMENTUM);
                } else {
                    *running = *batch_stats;
                }
            }
            stats_initialised = true;

            let batch_loss = batch_loss(&traces, &labels, &params, loss);
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!("training diverged at epoch {epoch}: loss {batch_loss}")));
            }
            loss_sum += batch_loss * batch.len() as f64;
            correct += traces
                .iter()
                .zip(&labels)
                .filter(|(t, &l)| t.predicted() == l)
                .count();

            let grads = backward(&traces, &labels, &stats, &params, loss)?;
            adam_step(&mut values, &grads.to_flat(), &mut adam, cfg)?;
            set_trainable_values(&mut params, &values)?;
        }

        let last = epoch + 1 == cfg.epochs;
        let evaluate_now = last || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0);
        let (test_acc, pr) = match held_out {
            Some(test) if evaluate_now => (
                Some(net_accuracy(&params, test, cfg.noise_variance, cfg.seed ^ STREAM_EVAL, 1)?),
                Some(mean_received_power(&params, test)?),
            ),
            _ => (None, None),
        };
        log.push(EpochLog {
            epoch: epoch + 1,
            loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            test_acc,
            pr,
        });
    }
    params.validate()?;
    Ok(TrainOutcome { params, log })
}

const EVAL_CHUNK: usize = 256;

/// Runs frozen-statistics forward passes over `samples` in chunks, handing each trace to `visit`.
fn for_each_eval_trace(
    params: &NetParams,
    samples: &Samples,
    noise_variance: f64,
    seed: u64,
    draw: u64,
    mut visit: impl FnMut(usize, &ForwardTrace),
) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for start in (0..samples.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(samples.len());
        let inputs: Vec<&ComplexVector> = samples.inputs[start..end].iter().collect();
        let mut rngs: Vec<SimRng> = (start..end)
            .map(|i| seeded_rng(seed, &[STREAM_EVAL, draw, i as u64]))
            .collect();
        let (traces, _) = forward_batch(params, &inputs, noise_variance, PnMode::Frozen, &mut rngs)?;
        for (offset, t) in traces.iter().enumerate() {
            visit(start + offset, t);
        }
    }
    Ok(())
}

/// Classification accuracy of the network itself, averaged over `draws` noise realisations.
pub fn net_accuracy(params: &NetParams, samples: &Samples, noise_variance: f64, seed: u64, draws: usize) -> Result<f64> {
    let draws = draws.max(1);
    let mut correct = 0usize;
    for draw in 0..draws {
        for_each_eval_trace(params, samples, noise_variance, seed, draw as u64, |i, t| {
            if t.predicted() == samples.labels[i] {
                correct += 1;
            }
        })?;
    }
    Ok(correct as f64 / (samples.len() * draws) as f64)
}

/// Mean received power over `samples` with noiseless propagation.
pub fn mean_received_power(params: &NetParams, samples: &Samples) -> Result<f64> {
    let mut total = 0.0;
    for_each_eval_trace(params, samples, 0.0, 0, 0, |_, t| total += received_power(t))?;
    Ok(total / samples.len() as f64)
}

/// Noiseless frozen-statistics logits for every sample.
pub fn net_logits(params: &NetParams, samples: &Samples) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(samples.len());
    for_each_eval_trace(params, samples, 0.0, 0, 0, |_, t| out.push(t.logits.clone()))?;
    Ok(out)
}

/// `S̃ = (1/N_tr) Σ s sᴴ`, Hermitian positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCovariance {
    pub matrix: ComplexMatrix,
    pub count: usize,
}

impl SampleCovariance {
    pub fn from_vectors<'a>(vectors: impl IntoIterator<Item = &'a [C64]>) -> Result<Self> {
        let mut acc: Option<ComplexMatrix> = None;
        let mut count = 0usize;
        for v in vectors {
            let m = v.len();
            let a = acc.get_or_insert_with(|| ComplexMatrix::zeros(m, m));
            if a.rows() != m {
                return Err(Error::mismatch("covariance", (a.rows(), 1), (m, 1)));
            }
            accumulate_outer(a, v);
            count += 1;
        }
        let matrix = acc.ok_or(Error::EmptyDataset)?;
        Ok(Self::finish(matrix, count))
    }

    fn finish(mut matrix: ComplexMatrix, count: usize) -> Self {
        let m = matrix.rows();
        let inv = 1.0 / count as f64;
        for r in 0..m {
            for c in r..m {
                let avg = matrix[(r, c)] * inv;
                let avg = if r == c { C64::new(avg.re, 0.0) } else { avg };
                matrix.as_mut_slice()[r * m + c] = avg;
                matrix.as_mut_slice()[c * m + r] = avg.conj();
            }
        }
        Self { matrix, count }
    }

    pub fn trace(&self) -> f64 {
        (0..self.matrix.rows()).map(|i| self.matrix[(i, i)].re).sum()
    }
}

/// Adds `v vᴴ` to the upper triangle of `a`.
fn accumulate_outer(a: &mut ComplexMatrix, v: &[C64]) {
    let m = v.len();
    let data = a.as_mut_slice();
    for r in 0..m {
        let vr = v[r];
        for c in r..m {
            data[r * m + c] += vr * v[c].conj();
        }
    }
}

/// Per-hop, per-block covariances of the noiseless hop inputs `s_i` over `samples`.
///
/// The outer vector is indexed by hop, the inner one by block.
pub fn estimate_covariances(params: &NetParams, samples: &Samples) -> Result<Vec<Vec<SampleCovariance>>> {
    let n = params.shape.hops;
    let m = params.shape.block_width;
    let j_count = params.shape.blocks;
    let mut acc = vec![vec![ComplexMatrix::zeros(m, m); j_count]; n];
    for_each_eval_trace(params, samples, 0.0, 0, 0, |_, t| {
        for (hop, blocks) in acc.iter_mut().enumerate() {
            for (j, a) in blocks.iter_mut().enumerate() {
                accumulate_outer(a, &t.s[hop].as_slice()[j * m..(j + 1) * m]);
            }
        }
    })?;
    Ok(acc
        .into_iter()
        .map(|blocks| {
            blocks
                .into_iter()
                .map(|a| SampleCovariance::finish(a, samples.len()))
                .collect()
        })
        .collect())
}
