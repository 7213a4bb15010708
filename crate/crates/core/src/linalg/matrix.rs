use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::linalg::{ComplexVector, C64};

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    /// Block-diagonal matrix with `blocks` along the diagonal.
    pub fn block_diag(blocks: &[ComplexMatrix]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            for i in 0..b.rows {
                for j in 0..b.cols {
                    out[(r0 + i, c0 + j)] = b[(i, j)];
                }
            }
            r0 += b.rows;
            c0 += b.cols;
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        ComplexVector::from((0..self.rows).map(|i| self[(i, j)]).collect::<Vec<_>>())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Standard matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::mismatch("matmul", self.shape(), rhs.shape()));
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        matmul_into(self, rhs, &mut out);
        Ok(out)
    }

    pub fn mul_vec(&self, v: &ComplexVector) -> Result<ComplexVector> {
        if self.cols != v.len() {
            return Err(Error::mismatch("mul_vec", self.shape(), (v.len(), 1)));
        }
        let mut out = vec![C64::new(0.0, 0.0); self.rows];
        mul_vec_into(self, v.as_slice(), &mut out);
        Ok(ComplexVector::from(out))
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn trace(&self) -> Result<C64> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                op: "trace",
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok((0..self.rows).map(|i| self.data[i * self.cols + i]).sum())
    }

    /// Frobenius inner product `Σ conj(self_ij) · other_ij`, i.e. `tr(self† · other)`.
    pub fn inner(&self, other: &ComplexMatrix) -> Result<C64> {
        if self.shape() != other.shape() {
            return Err(Error::mismatch("inner", self.shape(), other.shape()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn scale(&self, k: C64) -> ComplexMatrix {
        self.map(|z| z * k)
    }

    pub fn scale_real(&self, k: f64) -> ComplexMatrix {
        self.map(|z| z * k)
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with("add", rhs, |a, b| a + b)
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.zip_with("sub", rhs, |a, b| a - b)
    }

    fn zip_with(
        &self,
        op: &'static str,
        rhs: &ComplexMatrix,
        f: impl Fn(C64, C64) -> C64,
    ) -> Result<ComplexMatrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::mismatch(op, self.shape(), rhs.shape()));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// `self += k · rhs`, shapes must agree.
    pub fn axpy(&mut self, k: C64, rhs: &ComplexMatrix) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::mismatch("axpy", self.shape(), rhs.shape()));
        }
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += k * b;
        }
        Ok(())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn kronecker(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let (r, c) = (self.rows * rhs.rows, self.cols * rhs.cols);
        let mut out = ComplexMatrix::zeros(r, c);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                for k in 0..rhs.rows {
                    for l in 0..rhs.cols {
                        out[(i * rhs.rows + k, j * rhs.cols + l)] = a * rhs[(k, l)];
                    }
                }
            }
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// `out = a · b`; shapes are checked by the caller.
///
/// `b` is split into real and imaginary planes so the inner loop runs over
/// plain `f64` slices, which the compiler vectorises.
pub(crate) fn matmul_into(a: &ComplexMatrix, b: &ComplexMatrix, out: &mut ComplexMatrix) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.shape(), (a.rows, b.cols));
    let n = b.cols;
    let b_re: Vec<f64> = b.data.iter().map(|z| z.re).collect();
    let b_im: Vec<f64> = b.data.iter().map(|z| z.im).collect();
    let mut acc_re = vec![0.0; n];
    let mut acc_im = vec![0.0; n];
    for i in 0..a.rows {
        acc_re.fill(0.0);
        acc_im.fill(0.0);
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            let br = &b_re[k * n..(k + 1) * n];
            let bi = &b_im[k * n..(k + 1) * n];
            for (((re, im), &x), &y) in acc_re.iter_mut().zip(acc_im.iter_mut()).zip(br).zip(bi) {
                *re += aik.re * x - aik.im * y;
                *im += aik.re * y + aik.im * x;
            }
        }
        for ((o, &re), &im) in out.data[i * n..(i + 1) * n].iter_mut().zip(&acc_re).zip(&acc_im) {
            *o = C64::new(re, im);
        }
    }
}

/// `out = a · v`; shapes are checked by the caller.
pub(crate) fn mul_vec_into(a: &ComplexMatrix, v: &[C64], out: &mut [C64]) {
    debug_assert_eq!(a.cols, v.len());
    for (i, o) in out.iter_mut().enumerate() {
        *o = a
            .row(i)
            .iter()
            .zip(v)
            .fold(C64::new(0.0, 0.0), |acc, (&w, &x)| acc + w * x);
    }
}

/// `out = a† · v`; shapes are checked by the caller.
pub(crate) fn mul_vec_hermitian_into(a: &ComplexMatrix, v: &[C64], out: &mut [C64]) {
    debug_assert_eq!(a.rows, v.len());
    debug_assert_eq!(a.cols, out.len());
    out.fill(C64::new(0.0, 0.0));
    for (i, &vi) in v.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(a.row(i)) {
            *o += w.conj() * vi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sample_cn, seeded_rng};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn naive_product(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            let mut acc = c(0.0, 0.0);
            for k in 0..a.cols() {
                acc += a[(i, k)] * b[(k, j)];
            }
            acc
        })
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = seeded_rng(1, &[]);
        let a = sample_cn(2, 2, 1.0, &mut rng);
        let p = ComplexMatrix::identity(2).matmul(&a).unwrap();
        assert_eq!(p, a);
    }

    #[test]
    fn i_squared_is_minus_one() {
        let d = ComplexMatrix::from_diag(&[c(0.0, 1.0), c(0.0, 1.0)]);
        let p = d.matmul(&d).unwrap();
        assert_eq!(p, ComplexMatrix::from_diag(&[c(-1.0, 0.0), c(-1.0, 0.0)]));
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = seeded_rng(2, &[]);
        let a = sample_cn(5, 4, 1.0, &mut rng);
        let b = sample_cn(4, 3, 1.0, &mut rng);
        let fast = a.matmul(&b).unwrap();
        assert!(fast.max_abs_diff(&naive_product(&a, &b)) < 1e-12);
    }

    #[test]
    fn matmul_rejects_bad_shapes() {
        let a = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            a.matmul(&a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hermitian_by_hand() {
        let a = ComplexMatrix::from_rows(&[vec![c(0.0, 0.0), c(0.0, 1.0)], vec![c(0.0, 0.0); 2]])
            .unwrap();
        let expected =
            ComplexMatrix::from_rows(&[vec![c(0.0, 0.0); 2], vec![c(0.0, -1.0), c(0.0, 0.0)]])
                .unwrap();
        assert_eq!(a.hermitian(), expected);

        let sym = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(2.0, 0.0), c(3.0, 0.0)]])
            .unwrap();
        assert_eq!(sym.hermitian(), sym);

        let mut rng = seeded_rng(3, &[]);
        let r = sample_cn(3, 5, 1.0, &mut rng);
        assert_eq!(r.hermitian().hermitian(), r);
    }

    #[test]
    fn frobenius_and_trace() {
        assert_eq!(ComplexMatrix::zeros(3, 3).frobenius_norm_sq(), 0.0);
        assert_eq!(ComplexMatrix::identity(7).frobenius_norm_sq(), 7.0);
        assert_eq!(ComplexMatrix::identity(7).trace().unwrap(), c(7.0, 0.0));
        let d = ComplexMatrix::from_diag(&[c(1.0, 1.0), c(2.0, 0.0)]);
        assert_eq!(d.trace().unwrap(), c(3.0, 1.0));
        assert!(matches!(
            ComplexMatrix::zeros(2, 3).trace(),
            Err(Error::NotSquare { .. })
        ));

        let mut rng = seeded_rng(4, &[]);
        let a = sample_cn(6, 4, 1.0, &mut rng);
        let via_trace = a.hermitian().matmul(&a).unwrap().trace().unwrap().re;
        assert!((a.frobenius_norm_sq() - via_trace).abs() < 1e-12 * via_trace);
    }

    #[test]
    fn kronecker_small_cases() {
        let mut rng = seeded_rng(5, &[]);
        let b = sample_cn(2, 3, 1.0, &mut rng);
        assert_eq!(ComplexMatrix::identity(1).kronecker(&b), b);
        assert_eq!(
            ComplexMatrix::identity(2).kronecker(&b),
            ComplexMatrix::block_diag(&[b.clone(), b.clone()])
        );
    }
}
