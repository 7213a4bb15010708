//! LU-based inversion and a one-sided Jacobi SVD.

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};

/// Pivots smaller than this fraction of the largest entry are treated as singular.
pub const SINGULAR_PIVOT_GUARD: f64 = 1e-12;

/// Off-diagonal tolerance of the Jacobi sweeps.
pub const SVD_TOLERANCE: f64 = 1e-12;

/// LU factorisation with partial pivoting, `P·A = L·U` stored compactly.
#[derive(Debug, Clone)]
pub struct Lu {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &ComplexMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::NotSquare {
                op: "lu",
                rows: a.rows(),
                cols: a.cols(),
            });
        }
        let n = a.rows();
        let mut lu = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = lu.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if n > 0 && scale == 0.0 {
            return Err(Error::Singular {
                column: 0,
                relative_pivot: 0.0,
            });
        }
        for k in 0..n {
            let (p, pmag) = (k..n)
                .map(|i| (i, lu[i * n + k].norm()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let relative = pmag / scale;
            if !(relative >= SINGULAR_PIVOT_GUARD) {
                return Err(Error::Singular {
                    column: k,
                    relative_pivot: relative,
                });
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor.re == 0.0 && factor.im == 0.0 {
                    continue;
                }
                for j in (k + 1)..n {
                    let ukj = lu[k * n + j];
                    lu[i * n + j] -= factor * ukj;
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    /// Solves `A·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        b.copy_from_slice(&x);
    }

    /// Solves `A·X = B` column by column.
    pub fn solve(&self, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        if b.rows() != self.n {
            return Err(Error::mismatch("lu solve", (self.n, self.n), b.shape()));
        }
        let mut out = ComplexMatrix::zeros(b.rows(), b.cols());
        let mut col = vec![C64::new(0.0, 0.0); self.n];
        for j in 0..b.cols() {
            for i in 0..self.n {
                col[i] = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..self.n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }
}

impl ComplexMatrix {
    /// Inverse via LU with partial pivoting; fails loudly on (near-)singular input.
    pub fn inverse(&self) -> Result<ComplexMatrix> {
        Lu::factor(self)?.solve(&ComplexMatrix::identity(self.rows()))
    }

    /// Solves `self · X = rhs`.
    pub fn solve(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        Lu::factor(self)?.solve(rhs)
    }

    pub fn svd(&self) -> Result<Svd> {
        svd(self)
    }
}

/// Thin SVD `A = U·diag(sigma)·V†` with `sigma` sorted in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub sigma: Vec<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let k = self.sigma.len();
        let us = ComplexMatrix::from_fn(self.u.rows(), k, |i, j| self.u[(i, j)] * self.sigma[j]);
        us.matmul(&self.v.hermitian())
            .expect("svd factors are conformable")
    }

    pub fn max_singular_value(&self) -> f64 {
        self.sigma.first().copied().unwrap_or(0.0)
    }
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    if a.rows() < a.cols() {
        let t = svd(&a.hermitian())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let (m, n) = a.shape();
    let zero = C64::new(0.0, 0.0);
    let mut u: Vec<Vec<C64>> = (0..n).map(|j| (0..m).map(|i| a[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            let mut col = vec![zero; n];
            col[j] = C64::new(1.0, 0.0);
            col
        })
        .collect();

    let max_sweeps = (10 * n * n).max(10);
    let mut converged = n < 2;
    let mut sweeps = 0;
    let mut residual = 0.0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(Error::SvdNoConvergence { sweeps, residual });
        }
        sweeps += 1;
        residual = 0.0;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha: f64 = u[p].iter().map(|z| z.norm_sqr()).sum();
                let beta: f64 = u[q].iter().map(|z| z.norm_sqr()).sum();
                let gamma: C64 = u[p].iter().zip(&u[q]).map(|(x, y)| x.conj() * y).sum();
                let g = gamma.norm();
                if g == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = g / (alpha * beta).sqrt();
                residual = f64::max(residual, off);
                if off <= SVD_TOLERANCE {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut u, p, q, phase, c, s);
                rotate(&mut v, p, q, phase, c, s);
            }
        }
        converged = !rotated;
    }

    let mut sigma: Vec<f64> = u
        .iter()
        .map(|col| col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let smax = order.first().map_or(0.0, |&i| sigma[i]);

    let mut u_cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut v_cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    let mut sorted_sigma = Vec::with_capacity(n);
    let mut deficient = Vec::new();
    for &j in &order {
        let s = sigma[j];
        if s > smax * f64::EPSILON * (m as f64) && s > 0.0 {
            u_cols.push(u[j].iter().map(|z| z / s).collect());
        } else {
            sigma[j] = 0.0;
            deficient.push(u_cols.len());
            u_cols.push(vec![zero; m]);
        }
        v_cols.push(v[j].clone());
        sorted_sigma.push(sigma[j]);
    }
    complete_orthonormal(&mut u_cols, &deficient);

    let u_mat = ComplexMatrix::from_fn(m, n, |i, j| u_cols[j][i]);
    let v_mat = ComplexMatrix::from_fn(n, n, |i, j| v_cols[j][i]);
    Ok(Svd {
        u: u_mat,
        sigma: sorted_sigma,
        v: v_mat,
    })
}

fn rotate(cols: &mut [Vec<C64>], p: usize, q: usize, phase: C64, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *x;
        let b = *y * phase;
        *x = a * c - b * s;
        *y = a * s + b * c;
    }
}

/// Fills the columns listed in `slots` with unit vectors orthogonal to every other column.
fn complete_orthonormal(cols: &mut [Vec<C64>], slots: &[usize]) {
    if slots.is_empty() {
        return;
    }
    let m = cols[0].len();
    let mut candidate = 0;
    for &slot in slots {
        while candidate < m {
            let mut e = vec![C64::new(0.0, 0.0); m];
            e[candidate] = C64::new(1.0, 0.0);
            candidate += 1;
            // two Gram-Schmidt passes
            for _ in 0..2 {
                for (k, col) in cols.iter().enumerate() {
                    if k == slot {
                        continue;
                    }
                    let proj: C64 = col.iter().zip(&e).map(|(a, b)| a.conj() * b).sum();
                    for (ei, ci) in e.iter_mut().zip(col) {
                        *ei -= proj * ci;
                    }
                }
            }
            let norm = e.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-8 {
                cols[slot] = e.into_iter().map(|z| z / norm).collect();
                break;
            }
        }
    }
}

/// Eigendecomposition `S = Q·diag(λ)·Q†` of a Hermitian positive semidefinite matrix.
///
/// For such matrices the right singular vectors are eigenvectors and the singular
/// values are the eigenvalues, so this reuses the Jacobi SVD.
pub fn hermitian_psd_eigen(s: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !s.is_square() {
        return Err(Error::NotSquare {
            op: "hermitian_psd_eigen",
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    let d = svd(s)?;
    Ok((d.sigma, d.v))
}
