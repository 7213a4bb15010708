//! Acceptance checks. Every test prints exactly one `PASS`/`FAIL` line to
//! stderr (bypassing the test harness capture) and then asserts.
//!
//! The first eight are exact property checks on random instances. The rest
//! train networks on Fashion-MNIST (two hops, 49 antennas, σ² = 0.1, 20
//! epochs on the full training split) and check qualitative trends. Trained
//! networks are cached under the cargo target tmpdir, so a second run only
//! re-evaluates. Without the dataset those tests print `SKIP`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};

use mimo_ota::baseline::{baseline_hop, calibrate, run_baseline, BaselineHopState};
use mimo_ota::dataset::{Samples, NUM_CLASSES};
use mimo_ota::experiment::{parse_config, NetSpec, Runner};
use mimo_ota::linalg::{sample_cn, sample_cn_vector, seeded_rng, ComplexMatrix, ComplexVector, SimRng, C64};
use mimo_ota::multiblock::{block_forward_hop, stacked_hop_matrix, train_multiblock, BlockPartition};
use mimo_ota::ota_sim::{deploy, evaluate, from_db, realization_channels, run_inference, to_db, Deployment};
use mimo_ota::precoder::{
    expected_tx_power, gradient, objective, solve_closed_form, solve_gd, PrecoderProblem,
};
use mimo_ota::prototype_net::{forward_batch, NetParams, NetShape, PnMode, PnStats};
use mimo_ota::training::{
    backward, batch_loss, estimate_covariances, mean_received_power, net_accuracy, net_logits, set_trainable_values,
    train, trainable_values, LossConfig, LossKind, SampleCovariance, TrainConfig,
};

fn report(id: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    let line = format!(
        "acceptance {id:02} {} {name}: {}\n",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{}", line.trim_end());
}

fn skip(id: u32, name: &str, why: &str) {
    let _ = std::io::stderr().write_all(format!("acceptance {id:02} SKIP {name}: {why}\n").as_bytes());
}

// ---------------------------------------------------------------------------
// Random instances

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `W ~ CN(0, 1/M)`, `H ~ CN(0, 1)`, `S̃` from `n` vectors with unit-power entries.
fn instance(m: usize, n: usize, rng: &mut SimRng) -> (ComplexMatrix, ComplexMatrix, ComplexMatrix) {
    let w = sample_cn(m, m, 1.0 / m as f64, rng);
    let h = sample_cn(m, m, 1.0, rng);
    let vectors: Vec<ComplexVector> = (0..n).map(|_| sample_cn_vector(m, 1.0, rng)).collect();
    let s = SampleCovariance::from_vectors(vectors.iter().map(|v| v.as_slice())).unwrap();
    (w, h, s.matrix)
}

/// Solves `A x = b` by Gauss-Jordan elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<C64>>, mut b: Vec<C64>) -> Vec<C64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        let pivot = a[col][col];
        for k in col..n {
            a[col][k] /= pivot;
        }
        b[col] /= pivot;
        for r in 0..n {
            if r != col && a[r][col] != c(0.0, 0.0) {
                let f = a[r][col];
                for k in col..n {
                    let v = a[col][k];
                    a[r][k] -= f * v;
                }
                let v = b[col];
                b[r] -= f * v;
            }
        }
    }
    b
}

/// Minimiser of `‖W − HF‖² + λ₁ tr(S̃ F^H F)` from the vectorised normal
/// equations `(I ⊗ H^H H + λ₁ S̃ᵀ ⊗ I) vec F = vec(H^H W)`.
fn oracle_precoder(w: &ComplexMatrix, h: &ComplexMatrix, s: &ComplexMatrix, lambda1: f64) -> ComplexMatrix {
    let m = w.rows();
    let at = |a: &ComplexMatrix, i: usize, j: usize| a.as_slice()[i * a.cols() + j];
    let mut gram = vec![vec![c(0.0, 0.0); m]; m];
    let mut rhs_m = vec![vec![c(0.0, 0.0); m]; m];
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                gram[i][j] += at(h, k, i).conj() * at(h, k, j);
                rhs_m[i][j] += at(h, k, i).conj() * at(w, k, j);
            }
        }
    }
    // Column-major index of F[i][j] is j*m + i.
    let n = m * m;
    let mut a = vec![vec![c(0.0, 0.0); n]; n];
    let mut b = vec![c(0.0, 0.0); n];
    for j in 0..m {
        for i in 0..m {
            let row = j * m + i;
            b[row] = rhs_m[i][j];
            for k in 0..m {
                a[row][j * m + k] += gram[i][k];
                // (F S̃)[i][j] = Σ_l F[i][l] S̃[l][j]
                a[row][k * m + i] += at(s, k, j) * lambda1;
            }
        }
    }
    let x = dense_solve(a, b);
    ComplexMatrix::from_fn(m, m, |i, j| x[j * m + i])
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn precoder_gd_matches_closed_form() {
    let mut rng = seeded_rng(101, &[]);
    let lambdas = [0.0, 0.01, 0.1, 1.0];
    let (mut worst_lib, mut worst_oracle, mut worst_rise) = (0.0f64, 0.0f64, 0.0f64);
    let mut unconverged = 0;
    for k in 0..50 {
        let lambda1 = lambdas[k % lambdas.len()];
        let (w, h, s) = instance(8, 200, &mut rng);
        let p = PrecoderProblem::new(w.clone(), h.clone(), s.clone(), lambda1).unwrap();
        let sol = solve_gd(&p).unwrap();
        if !sol.converged {
            unconverged += 1;
        }
        let g = sol.objective();
        let g_lib = objective(&solve_closed_form(&p).unwrap(), &p).unwrap();
        let g_oracle = objective(&oracle_precoder(&w, &h, &s, lambda1), &p).unwrap();
        // The optimum is exactly 0 without a penalty; measure against ‖W‖² there.
        let gap = |opt: f64| {
            if lambda1 == 0.0 {
                (g - opt).abs() / w.frobenius_norm_sq()
            } else {
                rel(g, opt)
            }
        };
        worst_lib = worst_lib.max(gap(g_lib));
        worst_oracle = worst_oracle.max(gap(g_oracle));
        let scale = 1.0 + sol.objective_trace[0];
        for pair in sol.objective_trace.windows(2) {
            worst_rise = worst_rise.max((pair[1] - pair[0]) / scale);
        }
    }
    let pass = worst_lib < 1e-6 && worst_oracle < 1e-6 && worst_rise <= 1e-12 && unconverged == 0;
    report(
        1,
        "precoder gradient descent matches the closed form",
        pass,
        format!(
            "50 instances M=8: worst relative gap {worst_lib:.2e} (closed form), {worst_oracle:.2e} (vectorised oracle), tol 1e-6; largest objective rise {worst_rise:.1e} relative to 1+G0 (slack 1e-12); {unconverged} unconverged"
        ),
    );
}

#[test]
fn unpenalised_precoder_inverts_channel() {
    let mut rng = seeded_rng(102, &[]);
    let (mut worst_fit, mut worst_inv) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let (w, h, s) = instance(8, 200, &mut rng);
        let p = PrecoderProblem::new(w.clone(), h.clone(), s, 0.0).unwrap();
        let f = solve_gd(&p).unwrap().f;
        worst_fit = worst_fit.max(h.matmul(&f).unwrap().sub(&w).unwrap().frobenius_norm() / w.frobenius_norm());
        // H⁻¹W from an independent elimination with zero penalty.
        let inv = oracle_precoder(&w, &h, &ComplexMatrix::identity(8), 0.0);
        worst_inv = worst_inv.max(f.sub(&inv).unwrap().frobenius_norm() / inv.frobenius_norm());
    }
    report(
        2,
        "zero power penalty recovers H^-1 W",
        worst_fit < 1e-6 && worst_inv < 1e-6,
        format!("20 instances M=8: ‖HF−W‖/‖W‖ ≤ {worst_fit:.2e}, ‖F−H⁻¹W‖/‖H⁻¹W‖ ≤ {worst_inv:.2e}, tol 1e-6"),
    );
}

fn frozen_setup() -> (NetParams, Vec<ComplexVector>, Vec<usize>) {
    let shape = NetShape::dense(2, 4, 3);
    let mut rng = seeded_rng(103, &[]);
    let mut p = NetParams::init(shape, &mut rng).unwrap();
    for (i, pn) in p.pn.iter_mut().enumerate() {
        *pn = PnStats {
            mu: c(0.05 * i as f64, 0.02),
            v: 0.9 + 0.2 * i as f64,
        };
    }
    for (i, b) in p.head.bias.iter_mut().enumerate() {
        *b = 0.1 * i as f64;
    }
    let xs = (0..3).map(|_| sample_cn_vector(4, 1.0, &mut rng)).collect();
    (p, xs, vec![0, 1, 2])
}

fn frozen_loss(p: &NetParams, xs: &[ComplexVector], labels: &[usize], cfg: &LossConfig) -> f64 {
    let inputs: Vec<&ComplexVector> = xs.iter().collect();
    let mut rngs: Vec<SimRng> = (0..xs.len()).map(|i| seeded_rng(7, &[i as u64])).collect();
    let (traces, _) = forward_batch(p, &inputs, 0.1, PnMode::Frozen, &mut rngs).unwrap();
    batch_loss(&traces, labels, p, cfg)
}

fn central_difference(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

#[test]
fn gradients_match_finite_differences() {
    let (p, xs, labels) = frozen_setup();
    let mut worst_net = 0.0f64;
    for kind in [LossKind::L1, LossKind::L2] {
        let cfg = LossConfig::new(kind, 0.2).unwrap();
        let inputs: Vec<&ComplexVector> = xs.iter().collect();
        let mut rngs: Vec<SimRng> = (0..xs.len()).map(|i| seeded_rng(7, &[i as u64])).collect();
        let (traces, stats) = forward_batch(&p, &inputs, 0.1, PnMode::Frozen, &mut rngs).unwrap();
        let analytic = backward(&traces, &labels, &stats, &p, &cfg).unwrap().to_flat();
        let base = trainable_values(&p);
        for k in 0..base.len() {
            let numeric = central_difference(
                |d| {
                    let mut v = base.clone();
                    v[k] += d;
                    let mut q = p.clone();
                    set_trainable_values(&mut q, &v).unwrap();
                    frozen_loss(&q, &xs, &labels, &cfg)
                },
                1e-5,
            );
            let err = (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-3);
            worst_net = worst_net.max(err);
        }
    }

    // Precoder: the complex gradient is ∂G/∂Re F + i ∂G/∂Im F.
    let mut rng = seeded_rng(104, &[]);
    let (w, h, s) = instance(4, 50, &mut rng);
    let prob = PrecoderProblem::new(w, h, s, 0.3).unwrap();
    let f = sample_cn(4, 4, 1.0, &mut rng);
    let g = gradient(&f, &prob).unwrap();
    let mut worst_pre = 0.0f64;
    for idx in 0..16 {
        for (part, unit) in [(0, c(1.0, 0.0)), (1, c(0.0, 1.0))] {
            let numeric = central_difference(
                |d| {
                    let mut q = f.clone();
                    q.as_mut_slice()[idx] += unit * d;
                    objective(&q, &prob).unwrap()
                },
                1e-6,
            );
            let a = if part == 0 { g.as_slice()[idx].re } else { g.as_slice()[idx].im };
            worst_pre = worst_pre.max((numeric - a).abs() / numeric.abs().max(a.abs()).max(1e-3));
        }
    }
    report(
        3,
        "analytic gradients match central differences",
        worst_net < 1e-4 && worst_pre < 1e-4,
        format!("network N=2 M=4 K=3 worst rel err {worst_net:.2e}; precoder M=4 worst rel err {worst_pre:.2e}; tol 1e-4"),
    );
}

#[test]
fn kronecker_stacking_and_single_block() {
    let mut rng = seeded_rng(105, &[]);
    let (j, m) = (4, 5);
    let h = sample_cn(m, m, 1.0, &mut rng);
    let fs: Vec<ComplexMatrix> = (0..j).map(|_| sample_cn(m, m, 1.0, &mut rng)).collect();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let s = sample_cn_vector(j * m, 1.0, &mut rng);
        let (y, _) = block_forward_hop(&s, &fs, &h, 0.0, &mut rng).unwrap();
        let stacked = stacked_hop_matrix(&fs, &h).unwrap().mul_vec(&s).unwrap();
        worst = worst.max(y.max_abs_diff(&stacked));
    }

    // One block is the dense pipeline, bit for bit: training and a noisy hop.
    let mut drng = seeded_rng(106, &[]);
    let inputs: Vec<ComplexVector> = (0..64).map(|_| sample_cn_vector(6, 1.0, &mut drng)).collect();
    let labels: Vec<usize> = (0..64).map(|i| i % 3).collect();
    let set = Samples::new(inputs, labels).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let loss = LossConfig::new(LossKind::L2, 0.05).unwrap();
    let block = train_multiblock(&set, None, BlockPartition::new(1, 6).unwrap(), 2, 3, &cfg, &loss).unwrap();
    let dense = train(&set, None, NetShape::dense(2, 6, 3), &cfg, &loss).unwrap();
    let same_training = block.params == dense.params;
    let f = sample_cn(m, m, 1.0, &mut rng);
    let s = sample_cn_vector(m, 1.0, &mut rng);
    let (y_block, _) = block_forward_hop(&s, std::slice::from_ref(&f), &h, 0.3, &mut seeded_rng(9, &[])).unwrap();
    let mut y_dense = h.mul_vec(&f.mul_vec(&s).unwrap()).unwrap();
    mimo_ota::linalg::add_cn_noise(y_dense.as_mut_slice(), 0.3, &mut seeded_rng(9, &[]));
    let same_hop = y_block == y_dense;
    report(
        5,
        "block transmission equals the Kronecker-stacked hop; one block equals dense",
        worst < 1e-12 && same_training && same_hop,
        format!("J=4 M=5 max deviation {worst:.2e} (tol 1e-12); J=1 training bit-identical: {same_training}; J=1 noisy hop bit-identical: {same_hop}"),
    );
}

#[test]
fn baseline_chain_is_transparent_without_noise() {
    let mut rng = seeded_rng(107, &[]);
    let m = 16;
    let (mut worst_chain, mut worst_power) = (0.0f64, 0.0f64);
    for _ in 0..10 {
        let s0 = sample_cn_vector(m, 1.0, &mut rng);
        let mut s = s0.clone();
        for _hop in 0..3 {
            let h = sample_cn(m, m, 1.0, &mut rng);
            let state = BaselineHopState::new(&h).unwrap();
            let rho = 2.5;
            let (next, energy) = baseline_hop(&s, &h, &state, 0.0, rho, &mut rng).unwrap();
            worst_power = worst_power.max((energy - rho * s.norm_sq()).abs() / (rho * s.norm_sq()));
            let vs = state.v.mul_vec(&s).unwrap();
            worst_power = worst_power.max((vs.norm_sq() - s.norm_sq()).abs() / s.norm_sq());
            s = next;
        }
        worst_chain = worst_chain.max(s.max_abs_diff(&s0));
    }
    report(
        6,
        "SVD precoding with MMSE equalisation is lossless at zero noise",
        worst_chain < 1e-9 && worst_power < 1e-12,
        format!("3-hop chain M=16 max deviation {worst_chain:.2e} (tol 1e-9); unitary power deviation {worst_power:.2e} (tol 1e-12)"),
    );
}

#[test]
fn covariance_trace_equals_sample_power() {
    let mut rng = seeded_rng(108, &[]);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = 6;
        let vectors: Vec<ComplexVector> = (0..300)
            .map(|_| {
                let mut v = sample_cn_vector(m, 1.0, &mut rng);
                v.as_mut_slice()[0] += c(0.7, -0.2);
                v
            })
            .collect();
        let s = SampleCovariance::from_vectors(vectors.iter().map(|v| v.as_slice())).unwrap();
        let f = sample_cn(m, m, 1.0, &mut rng);
        let direct = vectors.iter().map(|v| f.mul_vec(v).unwrap().norm_sq()).sum::<f64>() / vectors.len() as f64;
        worst = worst.max(rel(expected_tx_power(&f, &s.matrix).unwrap(), direct));
    }
    report(
        7,
        "tr(S F^H F) equals the sample mean of ‖F s‖²",
        worst < 1e-10,
        format!("20 instances: worst relative deviation {worst:.2e} (tol 1e-10)"),
    );
}

#[test]
fn larger_power_penalty_trades_fit_for_power() {
    let mut rng = seeded_rng(109, &[]);
    let grid = [0.0, 0.001, 0.01, 0.1, 0.3, 1.0, 3.0, 10.0];
    let mut violations = 0;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (w, h, s) = instance(8, 200, &mut rng);
        let mut prev: Option<(f64, f64)> = None;
        for &lambda1 in &grid {
            let p = PrecoderProblem::new(w.clone(), h.clone(), s.clone(), lambda1).unwrap();
            let f = solve_closed_form(&p).unwrap();
            let power = expected_tx_power(&f, &s).unwrap();
            let residual = h.matmul(&f).unwrap().sub(&w).unwrap().frobenius_norm_sq();
            if let Some((pp, pr)) = prev {
                let up = (power - pp) / pp.max(1e-300);
                let down = (pr - residual) / pr.max(1e-300);
                worst = worst.max(up).max(down);
                if up > 1e-9 || down > 1e-9 {
                    violations += 1;
                }
            }
            prev = Some((power, residual));
        }
    }
    report(
        8,
        "raising the power penalty never raises power or lowers the fit error",
        violations == 0,
        format!("20 instances × 8 penalties: {violations} violations, worst relative move {worst:.2e} (slack 1e-9)"),
    );
}

// ---------------------------------------------------------------------------
// Fashion-MNIST experiments

const SIGMA2: f64 = 0.1;
const M: usize = 49;
const EVAL_SEED: u64 = 2024;

fn data_root() -> PathBuf {
    std::env::var_os("MIMO_OTA_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist"))
}

struct Lab {
    runner: Runner,
}

static LAB: OnceLock<Option<Mutex<Lab>>> = OnceLock::new();

fn lab() -> Option<MutexGuard<'static, Lab>> {
    LAB.get_or_init(|| {
        let root = data_root();
        let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        let text = format!(
            "kind = \"loss-compare\"\nseed = 0\noutput_dir = {:?}\n[data]\nroot = {:?}\n[training]\nepochs = 20\nbatch_size = 32\nlearning_rate = 5e-4\neval_every = 0\n",
            out.display().to_string(),
            root.display().to_string()
        );
        let cfg = parse_config(&text).unwrap();
        if !cfg.validate().is_empty() {
            return None;
        }
        Some(Mutex::new(Lab {
            runner: Runner::new(cfg).unwrap(),
        }))
    })
    .as_ref()
    .map(|m| m.lock().unwrap_or_else(|e| e.into_inner()))
}

fn spec(hops: usize, antennas: usize, blocks: usize, loss: LossKind, lambda: f64, train_noise: f64) -> NetSpec {
    NetSpec {
        hops,
        antennas,
        blocks,
        loss,
        lambda,
        train_noise_variance: train_noise,
    }
}

impl Lab {
    fn net(&mut self, s: &NetSpec) -> NetParams {
        self.runner.obtain_net(s).unwrap()
    }

    fn data(&mut self, width: usize) -> Arc<(Samples, Samples)> {
        self.runner.samples(width).unwrap()
    }

    fn accuracy(&mut self, net: &NetParams, sigma2: f64) -> f64 {
        let d = self.data(net.shape.width());
        net_accuracy(net, &d.1, sigma2, EVAL_SEED, 1).unwrap()
    }

    fn pr_db(&mut self, net: &NetParams) -> f64 {
        let d = self.data(net.shape.width());
        to_db(mean_received_power(net, &d.1).unwrap())
    }

    /// Searches λ (secant in log λ, falling back to bisection once bracketed)
    /// for a network whose received power is within `tol_db` of `target_db`.
    fn match_power(&mut self, base: NetSpec, target_db: f64, first: f64, tol_db: f64) -> Option<(f64, NetParams, f64)> {
        let mut tried: Vec<(f64, f64)> = Vec::new();
        let mut x = first.log10();
        for _ in 0..8 {
            let s = NetSpec {
                lambda: 10f64.powf(x),
                ..base.clone()
            };
            let net = self.net(&s);
            let y = self.pr_db(&net);
            if (y - target_db).abs() <= tol_db {
                return Some((s.lambda, net, y));
            }
            tried.push((x, y));
            let above = tried.iter().filter(|t| t.1 > target_db).min_by(|a, b| a.1.total_cmp(&b.1));
            let below = tried.iter().filter(|t| t.1 < target_db).max_by(|a, b| a.1.total_cmp(&b.1));
            x = match (above, below) {
                (Some(a), Some(b)) => {
                    let t = (a.1 - target_db) / (a.1 - b.1);
                    let guess = a.0 + t * (b.0 - a.0);
                    // Keep strictly inside the bracket.
                    guess.clamp(a.0.min(b.0) + 0.05 * (a.0 - b.0).abs(), a.0.max(b.0) - 0.05 * (a.0 - b.0).abs())
                }
                // Power falls by roughly 6 dB per decade of λ.
                _ => x + (y - target_db) / 6.0,
            };
        }
        None
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find(|w| w[0].0 <= x && x <= w[1].0).map(|w| {
        let t = if w[1].0 > w[0].0 { (x - w[0].0) / (w[1].0 - w[0].0) } else { 0.0 };
        w[0].1 + t * (w[1].1 - w[0].1)
    })
}

#[test]
fn l2_penalty_beats_l1_at_matched_power() {
    let name = "received-power penalty beats weight penalty at matched received power";
    let Some(mut lab) = lab() else { return skip(9, name, "dataset not found") };
    let mut pairs = Vec::new();
    let mut unmatched = Vec::new();
    for lambda in [0.01, 0.1, 1.0] {
        let l1 = lab.net(&spec(2, M, 1, LossKind::L1, lambda, SIGMA2));
        let p1 = lab.pr_db(&l1);
        let a1 = lab.accuracy(&l1, SIGMA2);
        match lab.match_power(spec(2, M, 1, LossKind::L2, 0.0, SIGMA2), p1, lambda / 10.0, 0.5) {
            Some((l2_lambda, l2, p2)) => {
                let a2 = lab.accuracy(&l2, SIGMA2);
                pairs.push((lambda, p1, a1, l2_lambda, p2, a2));
            }
            None => unmatched.push(lambda),
        }
    }
    drop(lab);
    let losses: Vec<f64> = pairs.iter().map(|p| p.5 - p.2).filter(|d| *d < 0.0).collect();
    let pass = unmatched.is_empty() && pairs.len() >= 3 && losses.len() <= 1 && losses.iter().all(|d| *d >= -0.003);
    let detail: Vec<String> = pairs
        .iter()
        .map(|(l1, p1, a1, l2, p2, a2)| {
            format!("L1 λ={l1} {p1:.2} dB {:.2}% vs L2 λ={l2:.4} {p2:.2} dB {:.2}%", 100.0 * a1, 100.0 * a2)
        })
        .collect();
    report(
        9,
        name,
        pass,
        format!("{}; unmatched L1 λ: {unmatched:?}", detail.join("; ")),
    );
}

#[test]
fn noise_aware_training_is_needed() {
    let name = "noiseless training degrades under channel noise";
    let Some(mut lab) = lab() else { return skip(10, name, "dataset not found") };
    let aware = lab.net(&spec(2, M, 1, LossKind::L2, 0.01, SIGMA2));
    let p_aware = lab.pr_db(&aware);
    let a_aware = lab.accuracy(&aware, SIGMA2);
    let matched = lab.match_power(spec(2, M, 1, LossKind::L2, 0.0, 0.0), p_aware, 0.003, 0.5);
    let Some((lambda, naive, p_naive)) = matched else {
        drop(lab);
        return report(10, name, false, format!("no noiseless network within 0.5 dB of {p_aware:.2} dB"));
    };
    let a_naive = lab.accuracy(&naive, SIGMA2);
    drop(lab);
    let gap = a_aware - a_naive;
    report(
        10,
        name,
        gap >= 0.05,
        format!(
            "noise-aware λ=0.01 {p_aware:.2} dB {:.2}% vs noiseless-trained λ={lambda:.4} {p_naive:.2} dB {:.2}% at σ²={SIGMA2}: gap {:.2} points (need ≥ 5)",
            100.0 * a_aware,
            100.0 * a_naive,
            100.0 * gap
        ),
    );
}

#[test]
fn more_slots_help_a_small_array() {
    let name = "seven slots of seven antennas beat one slot";
    let Some(mut lab) = lab() else { return skip(11, name, "dataset not found") };
    let lambdas = [0.001, 0.01, 0.1];
    let mut curves = Vec::new();
    for (antennas, blocks) in [(49, 1), (7, 7), (7, 1)] {
        let pts: Vec<(f64, f64)> = lambdas
            .iter()
            .map(|&l| {
                let net = lab.net(&spec(2, antennas, blocks, LossKind::L2, l, SIGMA2));
                (lab.pr_db(&net), lab.accuracy(&net, SIGMA2))
            })
            .collect();
        curves.push(pts);
    }
    drop(lab);
    // Compare at the received power of the dense network at λ = 0.01.
    let target = curves[0][1].0;
    let at: Vec<Option<f64>> = curves.iter().map(|c| interpolate(c, target)).collect();
    let detail = format!(
        "at Pr {target:.2} dB: M=49 J=1 {}, M=7 J=7 {}, M=7 J=1 {}",
        fmt_acc(at[0]),
        fmt_acc(at[1]),
        fmt_acc(at[2])
    );
    let pass = match (at[0], at[1], at[2]) {
        (Some(dense), Some(multi), Some(small)) => multi - small >= 0.03 && multi < dense,
        _ => false,
    };
    report(11, name, pass, detail);
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or("out of range".into(), |v| format!("{:.2}%", 100.0 * v))
}

#[test]
fn hop_count_trade_off() {
    let name = "more hops raise the noiseless ceiling but accumulate noise";
    let Some(mut lab) = lab() else { return skip(12, name, "dataset not found") };
    let mut bounds = Vec::new();
    for n in 1..=3 {
        let net = lab.net(&spec(n, M, 1, LossKind::L2, 0.0, 0.0));
        bounds.push(lab.accuracy(&net, 0.0));
    }
    // Lowest received power in the λ grid.
    let low1 = lab.net(&spec(1, M, 1, LossKind::L2, 0.1, SIGMA2));
    let low3 = lab.net(&spec(3, M, 1, LossKind::L2, 0.1, SIGMA2));
    let (a1, a3) = (lab.accuracy(&low1, SIGMA2), lab.accuracy(&low3, SIGMA2));
    let (p1, p3) = (lab.pr_db(&low1), lab.pr_db(&low3));
    drop(lab);
    let ceiling_ok = bounds[0] <= bounds[1] + 0.01 && bounds[1] <= bounds[2] + 0.01;
    report(
        12,
        name,
        ceiling_ok && a3 < a1,
        format!(
            "noiseless ceilings N=1,2,3: {:.2}%, {:.2}%, {:.2}% (1-point margin); λ=0.1 at σ²={SIGMA2}: N=1 {:.2}% ({p1:.2} dB) vs N=3 {:.2}% ({p3:.2} dB)",
            100.0 * bounds[0],
            100.0 * bounds[1],
            100.0 * bounds[2],
            100.0 * a1,
            100.0 * a3
        ),
    );
}

const REALIZATIONS: usize = 10;

/// Mean accuracy and mean `P_t` in dB over the channel realizations.
fn deployed_point(net: &NetParams, covs: &[Vec<SampleCovariance>], lambda1: f64, test: &Samples) -> (f64, f64) {
    let (mut acc, mut pt) = (0.0, 0.0);
    for r in 0..REALIZATIONS {
        let ch = realization_channels(0, r, net.shape.hops, net.shape.block_width, SIGMA2).unwrap();
        let dep = deploy(net, &ch, lambda1, covs).unwrap();
        let e = evaluate(&dep, &ch, test, 1, EVAL_SEED, r).unwrap();
        acc += e.accuracy;
        pt += e.tx_power_db();
    }
    (pt / REALIZATIONS as f64, acc / REALIZATIONS as f64)
}

#[test]
fn over_the_air_beats_svd_mmse_relaying() {
    let name = "fitted precoders beat SVD+MMSE relaying above 5 dB and the power penalty saves power";
    let Some(mut lab) = lab() else { return skip(13, name, "dataset not found") };
    let data = lab.data(M);
    let (train_set, test) = (&data.0, &data.1);
    let mut curve0 = Vec::new();
    let mut curve1 = Vec::new();
    for lambda in [0.001, 0.01, 0.1] {
        let net = lab.net(&spec(2, M, 1, LossKind::L2, lambda, SIGMA2));
        let covs = estimate_covariances(&net, train_set).unwrap();
        curve0.push(deployed_point(&net, &covs, 0.0, test));
        curve1.push(deployed_point(&net, &covs, 0.1, test));
    }
    let net0 = lab.net(&spec(0, M, 1, LossKind::L2, 0.0, 0.0));
    drop(lab);
    let calibration_set = train_set.head(2000);
    let mut baseline = Vec::new();
    for p_db in [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0] {
        let rho = from_db(p_db);
        let (mut acc, mut pt) = (0.0, 0.0);
        for r in 0..REALIZATIONS {
            let ch = realization_channels(0, r, 2, M, SIGMA2).unwrap();
            let cal = calibrate(&net0, &ch, rho, &calibration_set, 0).unwrap();
            let e = run_baseline(&net0, &ch, rho, &cal, test, 1, EVAL_SEED, r).unwrap();
            acc += e.accuracy;
            pt += e.tx_power_db();
        }
        baseline.push((pt / REALIZATIONS as f64, acc / REALIZATIONS as f64));
    }

    // Best accuracy the proposed scheme reaches within a power budget.
    let budget = |curve: &[(f64, f64)], pt: f64| -> Option<f64> {
        let max_pt = curve.iter().map(|p| p.0).fold(f64::MIN, f64::max);
        if pt >= max_pt {
            return curve.iter().filter(|p| p.0 <= pt).map(|p| p.1).reduce(f64::max);
        }
        interpolate(curve, pt).map(|v| curve.iter().filter(|p| p.0 <= pt).map(|p| p.1).fold(v, f64::max))
    };
    let mut beats = true;
    let mut compared = 0;
    let mut lines = Vec::new();
    for &(pt, acc) in baseline.iter().filter(|p| p.0 > 5.0) {
        compared += 1;
        let ours = budget(&curve1, pt);
        beats &= ours.is_some_and(|o| o > acc);
        lines.push(format!("Pt {pt:.1} dB: baseline {:.2}% vs {}", 100.0 * acc, fmt_acc(ours)));
    }

    // Power needed by the λ₁ = 0.1 curve to come within one point of each λ₁ = 0 point.
    let mut saves = true;
    let mut power_lines = Vec::new();
    for &(p0, a0) in &curve0 {
        let need = curve1
            .iter()
            .filter(|p| p.1 >= a0 - 0.01)
            .map(|p| p.0)
            .reduce(f64::min);
        saves &= need.is_some_and(|p1| p1 < p0);
        power_lines.push(format!(
            "{:.2}% at {p0:.2} dB vs {}",
            100.0 * a0,
            need.map_or("never".into(), |p| format!("{p:.2} dB"))
        ));
    }
    let fmt_curve = |c: &[(f64, f64)]| {
        c.iter()
            .map(|(p, a)| format!("({p:.1} dB, {:.1}%)", 100.0 * a))
            .collect::<Vec<_>>()
            .join(" ")
    };
    report(
        13,
        name,
        compared > 0 && beats && saves,
        format!(
            "R={REALIZATIONS}; λ₁=0.1 curve {}; λ₁=0 curve {}; baseline {}; above 5 dB: {}; matched accuracy: {}",
            fmt_curve(&curve1),
            fmt_curve(&curve0),
            fmt_curve(&baseline),
            lines.join(", "),
            power_lines.join(", ")
        ),
    );
}

#[test]
fn untrained_network_is_at_chance() {
    let name = "an untrained network classifies at chance";
    let Some(mut lab) = lab() else { return skip(14, name, "dataset not found") };
    let net = NetParams::init(NetShape::dense(2, M, NUM_CLASSES), &mut seeded_rng(110, &[])).unwrap();
    let acc = lab.accuracy(&net, SIGMA2);
    drop(lab);
    report(14, name, (acc - 0.1).abs() <= 0.02, format!("accuracy {:.2}% (10% ± 2%)", 100.0 * acc));
}

#[test]
fn noiseless_deployment_reproduces_the_network() {
    let name = "noiseless over-the-air inference equals the network";
    let Some(mut lab) = lab() else { return skip(4, name, "dataset not found") };
    let data = lab.data(M);
    drop(lab);
    let cfg = TrainConfig {
        epochs: 1,
        noise_variance: SIGMA2,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let net = train(&data.0.head(5000), None, NetShape::dense(2, M, NUM_CLASSES), &cfg, &LossConfig::new(LossKind::L2, 0.01).unwrap())
        .unwrap()
        .params;
    let test = data.1.head(1000);
    let reference = net_logits(&net, &test).unwrap();
    let ch = realization_channels(0, 0, 2, M, 0.0).unwrap();
    let dep = Deployment::exact(&net, &ch).unwrap();
    let mut rng = seeded_rng(0, &[]);
    let (mut agree, mut worst) = (0usize, 0.0f64);
    for (x, logits) in test.inputs.iter().zip(&reference) {
        let out = run_inference(&dep, &ch, x, &mut rng).unwrap();
        let argmax = logits.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        agree += usize::from(out.predicted == argmax);
        for (a, b) in out.logits.iter().zip(logits) {
            worst = worst.max((a - b).abs());
        }
    }
    report(
        4,
        name,
        agree == test.len() && worst < 1e-8,
        format!("argmax agreement {agree}/{}; max logit deviation {worst:.2e} (tol 1e-8)", test.len()),
    );
}
