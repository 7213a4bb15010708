//! Binary container for [`NetParams`].
//!
//! All integers are little-endian `u32`, all reals little-endian `f64`:
//!
//! | field | content |
//! |---|---|
//! | magic | the 4 bytes `OTAP` |
//! | version | `1` |
//! | `N, M, J, K` | hops, block width, blocks per hop, classes |
//! | hop weights | for each hop, each block, each entry in row-major order: `re, im` |
//! | head weights | `K × 2JM` row-major |
//! | head bias | `K` values |
//! | normalisers | `max(N, 1)` triples `μ.re, μ.im, v` |
//!
//! Reading back a written file reproduces the parameters bit for bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64};
use crate::prototype_net::{Head, HopLayer, NetParams, NetShape, PnStats};

pub const MAGIC: &[u8; 4] = b"OTAP";
pub const VERSION: u32 = 1;

pub fn to_bytes(params: &NetParams) -> Result<Vec<u8>> {
    params.validate()?;
    let s = params.shape;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [VERSION, s.hops as u32, s.block_width as u32, s.blocks as u32, s.classes as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut put = |x: f64| out.extend_from_slice(&x.to_le_bytes());
    for h in &params.hops {
        for b in h.blocks() {
            for z in b.as_slice() {
                put(z.re);
                put(z.im);
            }
        }
    }
    params.head.weights.iter().for_each(|&w| put(w));
    params.head.bias.iter().for_each(|&b| put(b));
    for pn in &params.pn {
        put(pn.mu.re);
        put(pn.mu.im);
        put(pn.v);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("parameter file truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<NetParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a network parameter file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported parameter file version {version}")));
    }
    let shape = NetShape {
        hops: r.u32()? as usize,
        block_width: r.u32()? as usize,
        blocks: r.u32()? as usize,
        classes: r.u32()? as usize,
    };
    shape.validate()?;
    let m = shape.block_width;
    let mut hops = Vec::with_capacity(shape.hops);
    for _ in 0..shape.hops {
        let mut blocks = Vec::with_capacity(shape.blocks);
        for _ in 0..shape.blocks {
            let mut data = Vec::with_capacity(m * m);
            for _ in 0..m * m {
                data.push(C64::new(r.f64()?, r.f64()?));
            }
            blocks.push(ComplexMatrix::from_vec(m, m, data)?);
        }
        hops.push(HopLayer::from_blocks(blocks)?);
    }
    let inputs = 2 * shape.width();
    let weights = (0..shape.classes * inputs).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let bias = (0..shape.classes).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let pn = (0..shape.pn_count())
        .map(|_| {
            Ok(PnStats {
                mu: C64::new(r.f64()?, r.f64()?),
                v: r.f64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes in parameter file", bytes.len() - r.pos)));
    }
    let params = NetParams {
        shape,
        hops,
        head: Head { weights, bias, inputs },
        pn,
    };
    params.validate()?;
    Ok(params)
}

pub fn save(params: &NetParams, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(params)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<NetParams> {
    from_bytes(&std::fs::read(path)?)
}
