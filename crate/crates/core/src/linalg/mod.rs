//! Dense complex linear algebra in double precision.
//!
//! Sizes in this crate stay below a few hundred, so everything is plain
//! row-major `Vec<Complex64>` storage with straightforward loops.

mod decomp;
mod matrix;
mod random;
mod vector;

pub use num_complex::Complex64 as C64;

pub use decomp::{hermitian_psd_eigen, svd, Lu, Svd, SINGULAR_PIVOT_GUARD, SVD_TOLERANCE};
pub use matrix::ComplexMatrix;
pub use random::{add_cn_noise, cn_scalar, sample_cn, sample_cn_vector, seeded_rng, SimRng};
pub use vector::ComplexVector;

pub(crate) use matrix::{matmul_into, mul_vec_hermitian_into, mul_vec_into};
