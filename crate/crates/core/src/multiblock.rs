//! Multiple-block transmission: a length `L = J·M` signal is sent as `J`
//! consecutive slots of `M` antennas over a channel that stays fixed for the
//! whole window.
//!
//! Training and precoder fitting reuse the dense code paths: a network with
//! `NetShape::blocks = J` already has block-diagonal hop layers, and
//! [`crate::ota_sim::deploy`] fits one precoder per block.

use rand::Rng;

use crate::dataset::Samples;
use crate::error::{Error, Result};
use crate::linalg::{add_cn_noise, mul_vec_into, ComplexMatrix, ComplexVector, C64};
use crate::prototype_net::{NetParams, NetShape};
use crate::training::{train, LossConfig, TrainConfig, TrainOutcome};

/// Trained parameters of a block network; the hop layers hold `J` blocks each.
pub type BlockNetParams = NetParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPartition {
    pub blocks: usize,
    pub block_width: usize,
}

impl BlockPartition {
    pub fn new(blocks: usize, block_width: usize) -> Result<Self> {
        if blocks == 0 || block_width == 0 {
            return Err(Error::InvalidArgument("block count and width must be positive".into()));
        }
        Ok(Self { blocks, block_width })
    }

    /// Splits a logical width `L` into `J` blocks.
    pub fn for_width(width: usize, blocks: usize) -> Result<Self> {
        if blocks == 0 || width % blocks != 0 {
            return Err(Error::InvalidArgument(format!("width {width} is not divisible into {blocks} blocks")));
        }
        Self::new(blocks, width / blocks)
    }

    pub fn width(&self) -> usize {
        self.blocks * self.block_width
    }

    /// Learnable complex weights per hop, `J·M²`.
    pub fn hop_param_count(&self) -> usize {
        self.blocks * self.block_width * self.block_width
    }

    pub fn net_shape(&self, hops: usize, classes: usize) -> NetShape {
        NetShape {
            hops,
            block_width: self.block_width,
            blocks: self.blocks,
            classes,
        }
    }
}

/// Contiguous equal slices of `s`, in order.
pub fn partition(s: &ComplexVector, part: BlockPartition) -> Result<Vec<ComplexVector>> {
    if s.len() != part.width() {
        return Err(Error::mismatch("partition", (part.width(), 1), (s.len(), 1)));
    }
    Ok(s.as_slice()
        .chunks(part.block_width)
        .map(|c| c.to_vec().into())
        .collect())
}

pub fn concatenate(blocks: &[ComplexVector]) -> ComplexVector {
    ComplexVector::concat(blocks)
}

/// One hop of slot-wise transmission: for each block `j`,
/// `y^j = H F^j s^j + n^j` with independent noise per slot.
///
/// Returns the stacked received signal and the transmitted energy `Σ_j ‖F^j s^j‖²`.
pub fn block_forward_hop<R: Rng + ?Sized>(
    s: &ComplexVector,
    precoders: &[ComplexMatrix],
    h: &ComplexMatrix,
    noise_variance: f64,
    rng: &mut R,
) -> Result<(ComplexVector, f64)> {
    let m = h.rows();
    if !h.is_square() || precoders.iter().any(|f| f.cols() != m || f.rows() != h.cols()) {
        return Err(Error::InvalidArgument("precoders must match the channel size".into()));
    }
    if s.len() != m * precoders.len() {
        return Err(Error::mismatch("block_forward_hop", (m * precoders.len(), 1), (s.len(), 1)));
    }
    let mut y = ComplexVector::zeros(s.len());
    let mut x = vec![C64::new(0.0, 0.0); m];
    let mut energy = 0.0;
    for (j, f) in precoders.iter().enumerate() {
        let slot = j * m..(j + 1) * m;
        mul_vec_into(f, &s.as_slice()[slot.clone()], &mut x);
        energy += x.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let out = &mut y.as_mut_slice()[slot];
        mul_vec_into(h, &x, out);
        add_cn_noise(out, noise_variance, rng);
    }
    Ok((y, energy))
}

/// The stacked hop matrix `(I_J ⊗ H) · diag(F^1, …, F^J)`.
pub fn stacked_hop_matrix(precoders: &[ComplexMatrix], h: &ComplexMatrix) -> Result<ComplexMatrix> {
    ComplexMatrix::identity(precoders.len())
        .kronecker(h)
        .matmul(&ComplexMatrix::block_diag(precoders))
}

/// Trains a network whose hop layers are block-diagonal with `part.blocks` blocks.
pub fn train_multiblock(
    train_set: &Samples,
    held_out: Option<&Samples>,
    part: BlockPartition,
    hops: usize,
    classes: usize,
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<TrainOutcome> {
    train(train_set, held_out, part.net_shape(hops, classes), cfg, loss)
}
