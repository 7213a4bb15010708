//! The complex-valued multi-hop classifier that the relay chain imitates.
//!
//! Each hop computes `z = W s`, adds `CN(0, σ²)` noise, applies the complex
//! ReLU and then power normalisation before feeding the next hop. The
//! destination applies the complex ReLU, concatenates real and imaginary
//! parts and runs a dense real classifier head followed by softmax.
//!
//! A hop layer is block-diagonal with `J` blocks of width `M`; the ordinary
//! dense network is the `J = 1` case.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{add_cn_noise, mul_vec_into, sample_cn, ComplexMatrix, ComplexVector, SimRng, C64};

/// Momentum of the running power-normalisation statistics.
pub const PN_MOMENTUM: f64 = 0.1;
/// Added to the mean square before the root so a batch whose activations are
/// all zero (every CReLU output dead) still gives a usable scale.
pub const PN_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    /// Number of over-the-air hops `N`.
    pub hops: usize,
    /// Antennas per node `M` (the block width).
    pub block_width: usize,
    /// Time slots per hop `J`; 1 for the single-block network.
    pub blocks: usize,
    pub classes: usize,
}

impl NetShape {
    pub fn dense(hops: usize, width: usize, classes: usize) -> Self {
        Self {
            hops,
            block_width: width,
            blocks: 1,
            classes,
        }
    }

    /// Logical signal width `L = J·M`.
    pub fn width(&self) -> usize {
        self.block_width * self.blocks
    }

    /// Learnable complex weights per hop, `J·M²`.
    pub fn hop_param_count(&self) -> usize {
        self.blocks * self.block_width * self.block_width
    }

    /// One normaliser at the source plus one per relay; the destination has none.
    pub fn pn_count(&self) -> usize {
        self.hops.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.block_width == 0 || self.blocks == 0 || self.classes == 0 {
            return Err(Error::InvalidArgument(format!("degenerate net shape {self:?}")));
        }
        Ok(())
    }
}

/// Scalar power-normalisation statistics: `s = (x − μ) / v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnStats {
    pub mu: C64,
    pub v: f64,
}

impl PnStats {
    pub const IDENTITY: PnStats = PnStats {
        mu: C64 { re: 0.0, im: 0.0 },
        v: 1.0,
    };

    /// Mean over every entry of every vector, and the RMS of the centred modulus.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a ComplexVector> + Clone) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = C64::new(0.0, 0.0);
        for v in samples.clone() {
            count += v.len();
            sum += v.iter().sum::<C64>();
        }
        if count == 0 {
            return Err(Error::EmptyDataset);
        }
        let mu = sum / count as f64;
        let sq: f64 = samples
            .into_iter()
            .flat_map(|v| v.iter())
            .map(|z| (z - mu).norm_sqr())
            .sum();
        Ok(Self {
            mu,
            v: (sq / count as f64 + PN_VARIANCE_FLOOR).sqrt(),
        })
    }

    /// Exponential moving average update towards `batch`.
    pub fn blend(&mut self, batch: &PnStats, momentum: f64) {
        self.mu = self.mu * (1.0 - momentum) + batch.mu * momentum;
        self.v = self.v * (1.0 - momentum) + batch.v * momentum;
    }

    fn check(&self) -> Result<()> {
        if !(self.v > 0.0) || !self.v.is_finite() {
            return Err(Error::Numeric(format!("power normalisation scale is {}", self.v)));
        }
        Ok(())
    }
}

pub fn pn_apply(x: &ComplexVector, stats: &PnStats) -> Result<ComplexVector> {
    stats.check()?;
    Ok(pn_unchecked(x, stats))
}

fn pn_unchecked(x: &ComplexVector, stats: &PnStats) -> ComplexVector {
    let inv = 1.0 / stats.v;
    x.iter().map(|&z| (z - stats.mu) * inv).collect()
}

/// ReLU on real and imaginary parts separately.
pub fn crelu(x: &ComplexVector) -> ComplexVector {
    x.iter()
        .map(|z| C64::new(z.re.max(0.0), z.im.max(0.0)))
        .collect()
}

/// Block-diagonal hop weights `diag(W^1, …, W^J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HopLayer {
    blocks: Vec<ComplexMatrix>,
}

impl HopLayer {
    pub fn dense(w: ComplexMatrix) -> Result<Self> {
        Self::from_blocks(vec![w])
    }

    pub fn from_blocks(blocks: Vec<ComplexMatrix>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::InvalidArgument("hop layer needs at least one block".into()))?;
        let m = first.rows();
        if blocks.iter().any(|b| b.shape() != (m, m)) {
            return Err(Error::InvalidArgument("hop blocks must be equal square matrices".into()));
        }
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ComplexMatrix] {
        &mut self.blocks
    }

    pub fn block_width(&self) -> usize {
        self.blocks[0].rows()
    }

    pub fn width(&self) -> usize {
        self.block_width() * self.blocks.len()
    }

    /// The single dense matrix when `J = 1`.
    pub fn as_dense(&self) -> Option<&ComplexMatrix> {
        match self.blocks.as_slice() {
            [w] => Some(w),
            _ => None,
        }
    }

    /// The full `L × L` block-diagonal matrix.
    pub fn to_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::block_diag(&self.blocks)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.blocks.iter().map(ComplexMatrix::frobenius_norm_sq).sum()
    }

    pub fn apply(&self, s: &ComplexVector) -> ComplexVector {
        let m = self.block_width();
        let mut out = ComplexVector::zeros(s.len());
        for (j, w) in self.blocks.iter().enumerate() {
            mul_vec_into(
                w,
                &s.as_slice()[j * m..(j + 1) * m],
                &mut out.as_mut_slice()[j * m..(j + 1) * m],
            );
        }
        out
    }
}

/// Dense real classifier `logits = A·r + b` over `r = [Re; Im]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    /// `classes × inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub inputs: usize,
}

impl Head {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        debug_assert_eq!(features.len(), self.inputs);
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(features).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

/// Every learned quantity of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub shape: NetShape,
    pub hops: Vec<HopLayer>,
    pub head: Head,
    /// Source normaliser followed by one per relay.
    pub pn: Vec<PnStats>,
}

impl NetParams {
    /// Complex Glorot initialisation: real and imaginary parts of hop weights are
    /// i.i.d. `N(0, 1/(2M))`; head weights `N(0, 1/(2L))`, zero bias.
    pub fn init<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Result<Self> {
        shape.validate()?;
        let m = shape.block_width;
        let hops = (0..shape.hops)
            .map(|_| {
                HopLayer::from_blocks(
                    (0..shape.blocks)
                        .map(|_| sample_cn(m, m, 1.0 / m as f64, rng))
                        .collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let inputs = 2 * shape.width();
        let sd = (1.0 / inputs as f64).sqrt();
        let weights = (0..shape.classes * inputs)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            shape,
            hops,
            head: Head {
                weights,
                bias: vec![0.0; shape.classes],
                inputs,
            },
            pn: vec![PnStats::IDENTITY; shape.pn_count()],
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let s = &self.shape;
        let ok = self.hops.len() == s.hops
            && self
                .hops
                .iter()
                .all(|h| h.blocks.len() == s.blocks && h.block_width() == s.block_width)
            && self.head.inputs == 2 * s.width()
            && self.head.weights.len() == s.classes * self.head.inputs
            && self.head.bias.len() == s.classes
            && self.pn.len() == s.pn_count();
        if !ok {
            return Err(Error::InvalidArgument("net params inconsistent with shape".into()));
        }
        if !self.is_finite() {
            return Err(Error::Numeric("net params contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.hops
            .iter()
            .all(|h| h.blocks.iter().all(ComplexMatrix::is_finite))
            && self.head.weights.iter().chain(&self.head.bias).all(|x| x.is_finite())
            && self
                .pn
                .iter()
                .all(|p| p.mu.re.is_finite() && p.mu.im.is_finite() && p.v.is_finite())
    }

    /// Destination processing: complex ReLU, real/imag concatenation, head, softmax.
    pub fn destination(&self, received: &ComplexVector) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let features = crelu(received).to_real_concat();
        let logits = self.head.logits(&features);
        let probs = softmax(&logits);
        (features, logits, probs)
    }

    /// Scales every hop by `alpha` while keeping the noiseless input-output map.
    ///
    /// Complex ReLU is positively homogeneous, so relay normalisers absorb the
    /// factor (`μ, v` scale with it) and the head compensates for the last hop.
    /// The received power `P_r` scales by `alpha²`.
    pub fn rescaled_power(&self, alpha: f64) -> Result<NetParams> {
        if !(alpha > 0.0) || !alpha.is_finite() || self.shape.hops == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot rescale by {alpha} with {} hops",
                self.shape.hops
            )));
        }
        let mut out = self.clone();
        for hop in &mut out.hops {
            for b in hop.blocks_mut() {
                *b = b.scale_real(alpha);
            }
        }
        for pn in out.pn.iter_mut().skip(1) {
            pn.mu *= alpha;
            pn.v *= alpha;
        }
        for w in &mut out.head.weights {
            *w /= alpha;
        }
        Ok(out)
    }
}

/// How normalisers obtain their statistics during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnMode {
    /// Statistics of the current batch (training).
    Batch,
    /// The recorded running statistics in `NetParams` (evaluation, deployment).
    Frozen,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Post-normalisation hop inputs `s_1 … s_N` (just `s_1` when there are no hops).
    pub s: Vec<ComplexVector>,
    /// Noiseless hop outputs `z_i = W_i s_i`.
    pub z: Vec<ComplexVector>,
    /// Received signals `y_i = z_i + n_i`.
    pub y: Vec<ComplexVector>,
    pub features: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn predicted(&self) -> usize {
        classify(&self.probs)
    }
}

/// Batch forward pass, returning traces and the normaliser statistics used.
///
/// `rngs[b]` supplies the channel noise of sample `b`; no draws happen when
/// `noise_variance == 0`.
pub fn forward_batch(
    params: &NetParams,
    inputs: &[&ComplexVector],
    noise_variance: f64,
    mode: PnMode,
    rngs: &mut [SimRng],
) -> Result<(Vec<ForwardTrace>, Vec<PnStats>)> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(noise_variance >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance {noise_variance}")));
    }
    let width = params.shape.width();
    if let Some(bad) = inputs.iter().find(|v| v.len() != width) {
        return Err(Error::mismatch("forward", (width, 1), (bad.len(), 1)));
    }
    assert_eq!(rngs.len(), inputs.len(), "one rng per sample");

    let n = params.shape.hops;
    let mut traces: Vec<ForwardTrace> = inputs
        .iter()
        .map(|_| ForwardTrace {
            s: Vec::with_capacity(n.max(1)),
            z: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            features: Vec::new(),
            logits: Vec::new(),
            probs: Vec::new(),
        })
        .collect();
    let mut stats_used = Vec::with_capacity(params.shape.pn_count());
    let mut current: Vec<ComplexVector> = inputs.iter().map(|v| (*v).clone()).collect();

    for layer in 0..params.shape.pn_count() {
        let stats = match mode {
            PnMode::Batch => PnStats::from_samples(current.iter())?,
            PnMode::Frozen => params.pn[layer],
        };
        stats.check()?;
        stats_used.push(stats);
        for ((trace, x), rng) in traces.iter_mut().zip(current.iter_mut()).zip(rngs.iter_mut()) {
            let s = pn_unchecked(x, &stats);
            if layer < n {
                let z = params.hops[layer].apply(&s);
                let mut y = z.clone();
                add_cn_noise(y.as_mut_slice(), noise_variance, rng);
                *x = crelu(&y);
                trace.z.push(z);
                trace.y.push(y);
            } else {
                *x = s.clone();
            }
            trace.s.push(s);
        }
    }

    for (trace, received) in traces.iter_mut().zip(&current) {
        // `received` is already φ(y_N) when N > 0; the destination ReLU is idempotent on it.
        let (features, logits, probs) = params.destination(received);
        trace.features = features;
        trace.logits = logits;
        trace.probs = probs;
    }
    Ok((traces, stats_used))
}

/// Single-sample forward pass using the recorded normaliser statistics.
pub fn forward(
    params: &NetParams,
    input: &ComplexVector,
    noise_variance: f64,
    rng: &mut SimRng,
) -> Result<ForwardTrace> {
    let (mut traces, _) = forward_batch(
        params,
        &[input],
        noise_variance,
        PnMode::Frozen,
        std::slice::from_mut(rng),
    )?;
    Ok(traces.pop().expect("one trace per input"))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest probability; ties go to the lowest index.
pub fn classify(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// `(1/N) Σ_j ‖z_j‖²` for one sample; zero without hops.
pub fn received_power(trace: &ForwardTrace) -> f64 {
    if trace.z.is_empty() {
        return 0.0;
    }
    trace.z.iter().map(ComplexVector::norm_sq).sum::<f64>() / trace.z.len() as f64
}
