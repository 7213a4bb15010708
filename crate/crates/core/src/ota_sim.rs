//! Simulation of the multi-hop MIMO relay chain running a trained network
//! over the air with fitted precoders.

use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::linalg::{sample_cn, seeded_rng, ComplexMatrix, ComplexVector, SimRng};
use crate::multiblock::block_forward_hop;
use crate::precoder::{expected_tx_power, naive_precoder, solve_gd, PrecoderProblem, PrecoderSolution};
use crate::prototype_net::{classify, crelu, pn_apply, NetParams};
use crate::training::SampleCovariance;

const STREAM_CHANNEL: u64 = 11;
const STREAM_INFERENCE: u64 = 12;

/// One realisation of the quasi-static multi-hop Rayleigh channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub hops: Vec<ComplexMatrix>,
    pub noise_variance: f64,
}

impl ChannelSet {
    pub fn new(hops: Vec<ComplexMatrix>, noise_variance: f64) -> Result<Self> {
        if !(noise_variance >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise variance {noise_variance}")));
        }
        if hops.iter().any(|h| !h.is_square() || !h.is_finite()) {
            return Err(Error::InvalidArgument("channel matrices must be square and finite".into()));
        }
        Ok(Self { hops, noise_variance })
    }

    pub fn with_noise(&self, noise_variance: f64) -> Self {
        Self {
            hops: self.hops.clone(),
            noise_variance,
        }
    }
}

/// `N` i.i.d. `CN(0, 1)` matrices of size `m × m`.
pub fn sample_channels<R: Rng + ?Sized>(n_hops: usize, m: usize, sigma2: f64, rng: &mut R) -> Result<ChannelSet> {
    if m == 0 {
        return Err(Error::InvalidArgument("antenna count must be positive".into()));
    }
    ChannelSet::new((0..n_hops).map(|_| sample_cn(m, m, 1.0, rng)).collect(), sigma2)
}

/// The channel set of realisation `r` for an experiment seed.
pub fn realization_channels(seed: u64, r: usize, n_hops: usize, m: usize, sigma2: f64) -> Result<ChannelSet> {
    sample_channels(n_hops, m, sigma2, &mut seeded_rng(seed, &[STREAM_CHANNEL, r as u64]))
}

/// Fitted precoders for every hop (and block) together with the network they imitate.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub net: NetParams,
    /// Indexed by hop, then block.
    pub precoders: Vec<Vec<ComplexMatrix>>,
    pub lambda1: f64,
    /// Solver runs in the same layout as `precoders`; empty for hand-built deployments.
    pub solutions: Vec<Vec<PrecoderSolution>>,
}

impl Deployment {
    pub fn from_precoders(net: NetParams, precoders: Vec<Vec<ComplexMatrix>>) -> Result<Self> {
        let s = net.shape;
        if s.hops == 0 {
            return Err(Error::InvalidArgument("a deployment needs at least one hop".into()));
        }
        let ok = precoders.len() == s.hops
            && precoders
                .iter()
                .all(|fs| fs.len() == s.blocks && fs.iter().all(|f| f.shape() == (s.block_width, s.block_width)));
        if !ok {
            return Err(Error::InvalidArgument("precoders do not match the network shape".into()));
        }
        Ok(Self {
            net,
            precoders,
            lambda1: 0.0,
            solutions: Vec::new(),
        })
    }

    /// `F = H⁻¹ W` for every hop and block.
    pub fn exact(net: &NetParams, ch: &ChannelSet) -> Result<Self> {
        check_channels(net, ch)?;
        let precoders = net
            .hops
            .iter()
            .zip(&ch.hops)
            .map(|(layer, h)| layer.blocks().iter().map(|w| naive_precoder(w, h)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        Self::from_precoders(net.clone(), precoders)
    }

    pub fn all_converged(&self) -> bool {
        self.solutions.iter().flatten().all(|s| s.converged)
    }

    /// `tr(S̃ Fᴴ F)` per hop, summed over blocks.
    pub fn expected_tx_power(&self, covariances: &[Vec<SampleCovariance>]) -> Result<Vec<f64>> {
        self.precoders
            .iter()
            .zip(covariances)
            .map(|(fs, covs)| {
                fs.iter()
                    .zip(covs)
                    .map(|(f, c)| expected_tx_power(f, &c.matrix))
                    .sum::<Result<f64>>()
            })
            .collect()
    }
}

fn check_channels(net: &NetParams, ch: &ChannelSet) -> Result<()> {
    if ch.hops.len() != net.shape.hops {
        return Err(Error::InvalidArgument(format!(
            "{} channel matrices for a {}-hop network",
            ch.hops.len(),
            net.shape.hops
        )));
    }
    if ch.hops.iter().any(|h| h.rows() != net.shape.block_width) {
        return Err(Error::InvalidArgument("channel size differs from the block width".into()));
    }
    Ok(())
}

/// Fits every precoder with gradient descent.
///
/// `covariances[i][j]` is the input covariance of block `j` at hop `i`.
pub fn deploy(net: &NetParams, ch: &ChannelSet, lambda1: f64, covariances: &[Vec<SampleCovariance>]) -> Result<Deployment> {
    check_channels(net, ch)?;
    if covariances.len() != net.shape.hops || covariances.iter().any(|c| c.len() != net.shape.blocks) {
        return Err(Error::InvalidArgument("one covariance per hop and block is required".into()));
    }
    let mut precoders = Vec::with_capacity(net.shape.hops);
    let mut solutions = Vec::with_capacity(net.shape.hops);
    for ((layer, h), covs) in net.hops.iter().zip(&ch.hops).zip(covariances) {
        let mut hop_f = Vec::new();
        let mut hop_sol = Vec::new();
        for (w, cov) in layer.blocks().iter().zip(covs) {
            let sol = solve_gd(&PrecoderProblem::new(w.clone(), h.clone(), cov.matrix.clone(), lambda1)?)?;
            hop_f.push(sol.f.clone());
            hop_sol.push(sol);
        }
        precoders.push(hop_f);
        solutions.push(hop_sol);
    }
    let mut dep = Deployment::from_precoders(net.clone(), precoders)?;
    dep.lambda1 = lambda1;
    dep.solutions = solutions;
    Ok(dep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub predicted: usize,
    pub logits: Vec<f64>,
    /// `‖F_i s_i‖²` per hop (summed over the slots of a block hop).
    pub tx_power: Vec<f64>,
}

/// Sends one source vector `g(image)` through the relay chain.
pub fn run_inference(dep: &Deployment, ch: &ChannelSet, input: &ComplexVector, rng: &mut SimRng) -> Result<Inference> {
    let net = &dep.net;
    check_channels(net, ch)?;
    let n = net.shape.hops;
    let mut s = pn_apply(input, &net.pn[0])?;
    let mut tx_power = Vec::with_capacity(n);
    let mut received = ComplexVector::zeros(0);
    for (i, (fs, h)) in dep.precoders.iter().zip(&ch.hops).enumerate() {
        let (y, energy) = block_forward_hop(&s, fs, h, ch.noise_variance, rng)?;
        tx_power.push(energy);
        if i + 1 < n {
            s = pn_apply(&crelu(&y), &net.pn[i + 1])?;
        } else {
            received = y;
        }
    }
    let (_, logits, probs) = net.destination(&received);
    Ok(Inference {
        predicted: classify(&probs),
        logits,
        tx_power,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    /// Mean over images of `(1/N) Σ_i ‖F_i s_i‖²`.
    pub tx_power: f64,
}

impl Evaluation {
    pub fn tx_power_db(&self) -> f64 {
        to_db(self.tx_power)
    }
}

/// Accuracy over `samples × draws` transmissions and the mean transmit power.
///
/// Draw `d` of image `k` uses the stream `(seed, realization, k, d)`, so
/// results do not depend on the order in which images are processed.
pub fn evaluate(
    dep: &Deployment,
    ch: &ChannelSet,
    samples: &Samples,
    draws: usize,
    seed: u64,
    realization: usize,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let draws = draws.max(1);
    let n = dep.net.shape.hops as f64;
    let mut correct = 0usize;
    let mut power = 0.0;
    for (k, (input, &label)) in samples.inputs.iter().zip(&samples.labels).enumerate() {
        for d in 0..draws {
            let mut rng = seeded_rng(seed, &[STREAM_INFERENCE, realization as u64, k as u64, d as u64]);
            let out = run_inference(dep, ch, input, &mut rng)?;
            if out.predicted == label {
                correct += 1;
            }
            power += out.tx_power.iter().sum::<f64>() / n;
        }
    }
    let total = (samples.len() * draws) as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / total,
        tx_power: power / total,
    })
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// One evaluated `(λ₁, realization)` cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lambda1: f64,
    pub realization: usize,
    pub evaluation: Evaluation,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub realizations: usize,
    pub noise_variance: f64,
    pub draws: usize,
    pub seed: u64,
}

/// Deploys and evaluates `net` for every `λ₁` on `settings.realizations` channel draws.
///
/// Channels depend only on `(seed, realization)`, so every `λ₁` sees the same channels.
pub fn sweep(
    net: &NetParams,
    covariances: &[Vec<SampleCovariance>],
    lambda1s: &[f64],
    test: &Samples,
    settings: &SweepSettings,
) -> Result<Vec<SweepPoint>> {
    if settings.realizations == 0 || lambda1s.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one realization and one lambda1".into()));
    }
    let mut out = Vec::new();
    for r in 0..settings.realizations {
        let ch = realization_channels(settings.seed, r, net.shape.hops, net.shape.block_width, settings.noise_variance)?;
        for &lambda1 in lambda1s {
            let dep = deploy(net, &ch, lambda1, covariances)?;
            let evaluation = evaluate(&dep, &ch, test, settings.draws, settings.seed, r)?;
            out.push(SweepPoint {
                lambda1,
                realization: r,
                evaluation,
                converged: dep.all_converged(),
            });
        }
    }
    Ok(out)
}

/// One row of the result table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub lambda: Option<f64>,
    pub lambda1: Option<f64>,
    pub realization: Option<usize>,
    pub sigma2: f64,
    pub accuracy: f64,
    #[serde(rename = "Pt_dB")]
    pub pt_db: Option<f64>,
    #[serde(rename = "Pr_dB")]
    pub pr_db: Option<f64>,
    /// `key=value` pairs separated by `;` (scheme, loss, provenance).
    pub notes: String,
}

pub const RESULT_HEADER: [&str; 8] = ["lambda", "lambda1", "realization", "sigma2", "accuracy", "Pt_dB", "Pr_dB", "notes"];

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(RESULT_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
