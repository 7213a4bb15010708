//! Direct-precoding baseline: the source vector is sent over each hop with
//! SVD precoding, recovered by MMSE equalisation at the relay, normalised and
//! forwarded. Only the destination runs a classifier (a network without hops).
//!
//! Transmit power is varied with a scale `ρ`: the relay sends `x = √ρ V s` and
//! the equaliser uses the effective noise-to-signal ratio `σ²/ρ`, so
//! `s̃ = (Σ² + σ²/ρ)⁻¹ Σ Uᴴ y / √ρ`. At `ρ = 1` this is the plain MMSE formula.

use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::linalg::{add_cn_noise, seeded_rng, ComplexMatrix, ComplexVector, SimRng, C64};
use crate::ota_sim::{ChannelSet, Evaluation};
use crate::prototype_net::{classify, pn_apply, NetParams, PnStats};

const STREAM_CALIBRATION: u64 = 21;
const STREAM_BASELINE: u64 = 22;

/// SVD of one hop channel, `H = U Σ Vᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineHopState {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl BaselineHopState {
    pub fn new(h: &ComplexMatrix) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::NotSquare {
                op: "baseline hop",
                rows: h.rows(),
                cols: h.cols(),
            });
        }
        let svd = h.svd()?;
        Ok(Self {
            u: svd.u,
            sigma: svd.sigma,
            v: svd.v,
        })
    }

    /// Diagonal of `(ΣᴴΣ + nsr·I)⁻¹ Σᴴ`; zero where both vanish.
    pub fn equalizer(&self, noise_to_signal: f64) -> Vec<f64> {
        self.sigma
            .iter()
            .map(|&s| {
                let d = s * s + noise_to_signal;
                if d > 0.0 {
                    s / d
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// One hop: `x = √ρ V s`, `y = H x + n`, `s̃ = (Σ² + σ²/ρ)⁻¹ Σ Uᴴ y / √ρ`.
///
/// Returns `s̃` (before any normalisation) and the transmitted energy `‖x‖²`.
pub fn baseline_hop(
    s_in: &ComplexVector,
    h: &ComplexMatrix,
    state: &BaselineHopState,
    noise_variance: f64,
    rho: f64,
    rng: &mut SimRng,
) -> Result<(ComplexVector, f64)> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("power scale must be positive, got {rho}")));
    }
    let root = rho.sqrt();
    let x = state.v.mul_vec(s_in)?.scale(root);
    let energy = x.norm_sq();
    let mut y = h.mul_vec(&x)?;
    add_cn_noise(y.as_mut_slice(), noise_variance, rng);
    let eq = state.equalizer(noise_variance / rho);
    let combined = state.u.hermitian().mul_vec(&y)?;
    let s_hat = combined
        .iter()
        .zip(&eq)
        .map(|(c, &e)| c * (e / root))
        .collect();
    Ok((s_hat, energy))
}

/// Normalisation statistics of `s̃` at every hop, measured through the baseline chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineCalibration {
    pub hop_stats: Vec<PnStats>,
}

struct Chain<'a> {
    net: &'a NetParams,
    ch: &'a ChannelSet,
    states: Vec<BaselineHopState>,
    rho: f64,
}

impl<'a> Chain<'a> {
    fn new(net: &'a NetParams, ch: &'a ChannelSet, rho: f64) -> Result<Self> {
        if net.shape.hops != 0 || net.shape.blocks != 1 {
            return Err(Error::InvalidArgument("the baseline classifier must be a dense network without hops".into()));
        }
        if ch.hops.is_empty() || ch.hops.iter().any(|h| h.rows() != net.shape.width()) {
            return Err(Error::InvalidArgument("baseline channels must match the classifier width".into()));
        }
        Ok(Self {
            net,
            ch,
            states: ch.hops.iter().map(BaselineHopState::new).collect::<Result<_>>()?,
            rho,
        })
    }

    /// Runs all hops; `calibration` supplies the stats for the normaliser after
    /// each hop, or `None` to record raw `s̃` through `observe`.
    fn run(
        &self,
        input: &ComplexVector,
        calibration: Option<&BaselineCalibration>,
        rng: &mut SimRng,
        mut observe: impl FnMut(usize, &ComplexVector),
    ) -> Result<(ComplexVector, f64)> {
        let mut s = pn_apply(input, &self.net.pn[0])?;
        let mut energy = 0.0;
        for (i, (h, state)) in self.ch.hops.iter().zip(&self.states).enumerate() {
            let (s_hat, e) = baseline_hop(&s, h, state, self.ch.noise_variance, self.rho, rng)?;
            energy += e;
            observe(i, &s_hat);
            s = match calibration {
                Some(c) => pn_apply(&s_hat, &c.hop_stats[i])?,
                None => s_hat,
            };
        }
        Ok((s, energy / self.ch.hops.len() as f64))
    }
}

/// Measures the statistics of `s̃` after each hop on `samples`.
///
/// Hop `i` is measured with the already-calibrated normalisers of hops `< i`
/// in place, so every hop sees exactly what it will see at evaluation time.
pub fn calibrate(net: &NetParams, ch: &ChannelSet, rho: f64, samples: &Samples, seed: u64) -> Result<BaselineCalibration> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let chain = Chain::new(net, ch, rho)?;
    let n = ch.hops.len();
    let mut calibration = BaselineCalibration {
        hop_stats: vec![PnStats::IDENTITY; n],
    };
    for hop in 0..n {
        let mut outputs = Vec::with_capacity(samples.len());
        for (k, input) in samples.inputs.iter().enumerate() {
            let mut rng = seeded_rng(seed, &[STREAM_CALIBRATION, k as u64]);
            chain.run(input, Some(&calibration), &mut rng, |i, s_hat| {
                if i == hop {
                    outputs.push(s_hat.clone());
                }
            })?;
        }
        calibration.hop_stats[hop] = PnStats::from_samples(outputs.iter())?;
    }
    Ok(calibration)
}

/// Classifies one source vector after the baseline chain.
pub fn baseline_inference(
    net: &NetParams,
    ch: &ChannelSet,
    rho: f64,
    calibration: &BaselineCalibration,
    input: &ComplexVector,
    rng: &mut SimRng,
) -> Result<(usize, f64)> {
    let chain = Chain::new(net, ch, rho)?;
    let (s, power) = chain.run(input, Some(calibration), rng, |_, _| {})?;
    let (_, _, probs) = net.destination(&s);
    Ok((classify(&probs), power))
}

/// Accuracy and mean transmit power `ρ · mean (1/N) Σ ‖s_i‖²` of the baseline.
pub fn run_baseline(
    net: &NetParams,
    ch: &ChannelSet,
    rho: f64,
    calibration: &BaselineCalibration,
    test: &Samples,
    draws: usize,
    seed: u64,
    realization: usize,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let chain = Chain::new(net, ch, rho)?;
    let draws = draws.max(1);
    let mut correct = 0usize;
    let mut power = 0.0;
    for (k, (input, &label)) in test.inputs.iter().zip(&test.labels).enumerate() {
        for d in 0..draws {
            let mut rng = seeded_rng(seed, &[STREAM_BASELINE, realization as u64, k as u64, d as u64]);
            let (s, p) = chain.run(input, Some(calibration), &mut rng, |_, _| {})?;
            let (_, _, probs) = net.destination(&s);
            if classify(&probs) == label {
                correct += 1;
            }
            power += p;
        }
    }
    let total = (test.len() * draws) as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / total,
        tx_power: power / total,
    })
}

/// The MMSE estimate for a single hop computed with explicit matrices, for cross-checks.
pub fn mmse_reference(h: &ComplexMatrix, y: &ComplexVector, noise_variance: f64) -> Result<ComplexVector> {
    let st = BaselineHopState::new(h)?;
    let m = h.rows();
    let sigma = ComplexMatrix::from_diag(&st.sigma.iter().map(|&s| C64::new(s, 0.0)).collect::<Vec<_>>());
    let mut gram = sigma.hermitian().matmul(&sigma)?;
    for i in 0..m {
        gram.as_mut_slice()[i * m + i] += noise_variance;
    }
    gram.solve(&sigma.hermitian())?.matmul(&st.u.hermitian())?.mul_vec(y)
}
