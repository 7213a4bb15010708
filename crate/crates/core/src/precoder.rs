//! Fitting a precoding matrix `F` so that the channel composition `H F`
//! imitates a trained weight matrix `W` under a transmit-power penalty:
//!
//! `G(F) = ‖W − H F‖_F² + λ₁ tr(S̃ Fᴴ F)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_psd_eigen, matmul_into, ComplexMatrix, Lu, C64};

/// Safety factor applied to the inverse Lipschitz constant for the default step.
pub const STEP_SAFETY: f64 = 0.9;
/// Default relative stopping tolerance: `ε = 1e-12 · (1 + G₀)`.
pub const RELATIVE_TOLERANCE: f64 = 1e-12;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
/// Allowed increase of the objective between iterations, relative to `1 + G₀`.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderProblem {
    pub w: ComplexMatrix,
    pub h: ComplexMatrix,
    pub s_tilde: ComplexMatrix,
    pub lambda1: f64,
    /// Step size; `None` picks `0.9 / (2(σ_max(H)² + λ₁σ_max(S̃)))`.
    pub eta: Option<f64>,
    /// Absolute stopping tolerance; `None` uses `1e-12 · (1 + G₀)`.
    pub epsilon: Option<f64>,
    pub max_iters: usize,
}

impl PrecoderProblem {
    pub fn new(w: ComplexMatrix, h: ComplexMatrix, s_tilde: ComplexMatrix, lambda1: f64) -> Result<Self> {
        let m = w.rows();
        for (name, x) in [("W", &w), ("H", &h), ("S~", &s_tilde)] {
            if x.shape() != (m, m) {
                return Err(Error::InvalidArgument(format!(
                    "{name} is {}x{}, expected {m}x{m}",
                    x.rows(),
                    x.cols()
                )));
            }
        }
        if !(lambda1 >= 0.0) || !lambda1.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda1 must be >= 0, got {lambda1}")));
        }
        if s_tilde.max_abs_diff(&s_tilde.hermitian()) > 1e-10 * (1.0 + s_tilde.frobenius_norm()) {
            return Err(Error::InvalidArgument("S~ is not Hermitian".into()));
        }
        Ok(Self {
            w,
            h,
            s_tilde,
            lambda1,
            eta: None,
            epsilon: None,
            max_iters: DEFAULT_MAX_ITERS,
        })
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn size(&self) -> usize {
        self.w.rows()
    }

    /// The step size in use, computing the default from singular values if needed.
    pub fn step_size(&self) -> Result<f64> {
        if let Some(eta) = self.eta {
            return Ok(eta);
        }
        let h_max = self.h.svd()?.max_singular_value();
        let s_max = if self.lambda1 > 0.0 {
            self.s_tilde.svd()?.max_singular_value()
        } else {
            0.0
        };
        let lipschitz = 2.0 * (h_max * h_max + self.lambda1 * s_max);
        if lipschitz == 0.0 {
            return Err(Error::Numeric("precoder objective has zero curvature".into()));
        }
        Ok(STEP_SAFETY / lipschitz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSolution {
    pub f: ComplexMatrix,
    /// `G` at the initializer followed by `G` after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub eta: f64,
    pub epsilon: f64,
}

impl PrecoderSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds at least the initial value")
    }
}

/// Least-squares fit `F = H⁻¹ W`.
pub fn naive_precoder(w: &ComplexMatrix, h: &ComplexMatrix) -> Result<ComplexMatrix> {
    h.solve(w)
}

/// `tr(S̃ Fᴴ F)`, the expected transmit power `E‖F s‖²`.
pub fn expected_tx_power(f: &ComplexMatrix, s_tilde: &ComplexMatrix) -> Result<f64> {
    let fs = f.matmul(s_tilde)?;
    Ok(f.inner(&fs)?.re)
}

pub fn objective(f: &ComplexMatrix, p: &PrecoderProblem) -> Result<f64> {
    let residual = p.w.sub(&p.h.matmul(f)?)?;
    let penalty = if p.lambda1 == 0.0 {
        0.0
    } else {
        p.lambda1 * expected_tx_power(f, &p.s_tilde)?
    };
    Ok(residual.frobenius_norm_sq() + penalty)
}

/// `∇F = −2Hᴴ W + 2Hᴴ H F + 2λ₁ F S̃`.
///
/// This coincides with `∂G/∂Re F + i ∂G/∂Im F`; no rescaling is needed to use
/// it as a real-parameter descent direction.
pub fn gradient(f: &ComplexMatrix, p: &PrecoderProblem) -> Result<ComplexMatrix> {
    let residual = p.w.sub(&p.h.matmul(f)?)?;
    let mut g = p.h.hermitian().matmul(&residual)?.scale_real(-2.0);
    g.axpy(C64::new(2.0 * p.lambda1, 0.0), &f.matmul(&p.s_tilde)?)?;
    Ok(g)
}

/// `‖Hᴴ H F + λ₁ F S̃ − Hᴴ W‖_F`, zero exactly at the minimiser.
pub fn stationarity_residual(f: &ComplexMatrix, p: &PrecoderProblem) -> Result<f64> {
    Ok(gradient(f, p)?.frobenius_norm() / 2.0)
}

/// Gradient descent from `F = H⁻¹ W` until successive objectives differ by less than `ε`.
pub fn solve_gd(p: &PrecoderProblem) -> Result<PrecoderSolution> {
    let m = p.size();
    let eta = p.step_size()?;
    if !(eta > 0.0) || !eta.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    let h_herm = p.h.hermitian();
    let mut f = naive_precoder(&p.w, &p.h)?;

    let mut hf = ComplexMatrix::zeros(m, m);
    let mut fs = ComplexMatrix::zeros(m, m);
    let mut hr = ComplexMatrix::zeros(m, m);
    let mut residual = ComplexMatrix::zeros(m, m);

    // Evaluates G at `f`, leaving R = W − HF in `residual` and F S̃ in `fs`.
    let mut evaluate = |f: &ComplexMatrix, residual: &mut ComplexMatrix, fs: &mut ComplexMatrix| -> f64 {
        matmul_into(&p.h, f, &mut hf);
        for ((r, w), x) in residual.as_mut_slice().iter_mut().zip(p.w.as_slice()).zip(hf.as_slice()) {
            *r = w - x;
        }
        let mut g = residual.frobenius_norm_sq();
        if p.lambda1 != 0.0 {
            matmul_into(f, &p.s_tilde, fs);
            let power: f64 = f.as_slice().iter().zip(fs.as_slice()).map(|(a, b)| (a.conj() * b).re).sum();
            g += p.lambda1 * power;
        }
        g
    };

    let g0 = evaluate(&f, &mut residual, &mut fs);
    if !g0.is_finite() {
        return Err(Error::Numeric("precoder objective is not finite at the initializer".into()));
    }
    let epsilon = p.epsilon.unwrap_or(RELATIVE_TOLERANCE * (1.0 + g0));
    let slack = MONOTONE_SLACK * (1.0 + g0);
    let mut trace = vec![g0];
    let mut g_prev = g0;

    for iter in 1..=p.max_iters {
        matmul_into(&h_herm, &residual, &mut hr);
        let two_eta = 2.0 * eta;
        let lambda_term = two_eta * p.lambda1;
        let fsd = fs.as_slice();
        for (k, (x, r)) in f.as_mut_slice().iter_mut().zip(hr.as_slice()).enumerate() {
            // F ← F − η(−2HᴴR + 2λ₁FS̃)
            *x += r * two_eta;
            if p.lambda1 != 0.0 {
                *x -= fsd[k] * lambda_term;
            }
        }
        let g = evaluate(&f, &mut residual, &mut fs);
        if !g.is_finite() || g > g_prev + slack {
            return Err(Error::Numeric(format!(
                "precoder descent not monotone at iteration {iter}: {g_prev} -> {g} (step {eta})"
            )));
        }
        trace.push(g);
        if (g_prev - g).abs() < epsilon {
            return Ok(PrecoderSolution {
                f,
                objective_trace: trace,
                iterations: iter,
                converged: true,
                eta,
                epsilon,
            });
        }
        g_prev = g;
    }
    Ok(PrecoderSolution {
        f,
        objective_trace: trace,
        iterations: p.max_iters,
        converged: false,
        eta,
        epsilon,
    })
}

/// Exact minimiser from the first-order condition `HᴴH F + λ₁ F S̃ = Hᴴ W`.
///
/// With `S̃ = Q Λ Qᴴ` and `X = F Q`, column `k` of `X` solves
/// `(HᴴH + λ₁Λ_kk I) x_k = (Hᴴ W Q)_k`.
pub fn solve_closed_form(p: &PrecoderProblem) -> Result<ComplexMatrix> {
    if p.lambda1 == 0.0 {
        return naive_precoder(&p.w, &p.h);
    }
    let m = p.size();
    let (lambdas, q) = hermitian_psd_eigen(&p.s_tilde)?;
    let h_herm = p.h.hermitian();
    let gram = h_herm.matmul(&p.h)?;
    let rhs = h_herm.matmul(&p.w)?.matmul(&q)?;
    let mut x = ComplexMatrix::zeros(m, m);
    for (k, &l) in lambdas.iter().enumerate() {
        let shift = p.lambda1 * l.max(0.0);
        let mut a = gram.clone();
        for i in 0..m {
            a.as_mut_slice()[i * m + i] += shift;
        }
        let mut col = rhs.column(k).into_vec();
        Lu::factor(&a)?.solve_in_place(&mut col);
        for (i, v) in col.into_iter().enumerate() {
            x.as_mut_slice()[i * m + k] = v;
        }
    }
    x.matmul(&q.hermitian())
}

/// Writes the objective trace as CSV with header `iter,G`.
pub fn write_objective_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "G"])?;
    for (i, g) in trace.iter().enumerate() {
        w.write_record([i.to_string(), format!("{g:e}")])?;
    }
    w.flush()?;
    Ok(())
}
