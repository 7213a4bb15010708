//! Fashion-MNIST ingestion and the image-to-antenna transform.
//!
//! `transform_g` average-pools the 28×28 image onto a grid of `2m` real
//! values and pairs horizontally adjacent cells as (real, imaginary). For the
//! default `m = 49` that is a 4×2 window giving a 7×14 grid. The pairing is
//! our choice; any fixed linear complexification would serve the same role.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ComplexVector, C64};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn file_prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }

    /// Uncompressed IDX file names `(images, labels)`; a `.gz` suffix is also accepted.
    pub fn file_names(self) -> (String, String) {
        let p = self.file_prefix();
        (format!("{p}-images-idx3-ubyte"), format!("{p}-labels-idx1-ubyte"))
    }
}

/// One grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Vec<f64>,
    pub label: usize,
}

impl LabeledImage {
    pub fn new(pixels: Vec<f64>, label: usize) -> Result<Self> {
        if pixels.len() != IMAGE_PIXELS {
            return Err(Error::InvalidArgument(format!(
                "image needs {IMAGE_PIXELS} pixels, got {}",
                pixels.len()
            )));
        }
        if label >= NUM_CLASSES {
            return Err(Error::InvalidArgument(format!("label {label} out of range")));
        }
        Ok(Self { pixels, label })
    }
}

/// Images are kept as raw bytes and scaled to `[0, 1]` on access.
#[derive(Debug, Clone)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    split: Split,
}

impl Dataset {
    pub fn from_raw(pixels: Vec<u8>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if pixels.len() != labels.len() * IMAGE_PIXELS {
            return Err(Error::InvalidArgument(format!(
                "{} pixel bytes do not match {} labels",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range")));
        }
        Ok(Self {
            pixels,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn labels(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }

    pub fn image(&self, i: usize) -> LabeledImage {
        let raw = &self.pixels[i * IMAGE_PIXELS..(i + 1) * IMAGE_PIXELS];
        LabeledImage {
            pixels: raw.iter().map(|&b| f64::from(b) / 255.0).collect(),
            label: self.label(i),
        }
    }

    /// The first `n` items (or all of them if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            pixels: self.pixels[..n * IMAGE_PIXELS].to_vec(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    /// Applies `transform_g` to every image.
    pub fn transform_all(&self, m: usize) -> Result<Vec<ComplexVector>> {
        let layout = PoolingLayout::for_width(m)?;
        Ok((0..self.len())
            .map(|i| layout.apply(&self.image(i).pixels))
            .collect())
    }

    /// Source vectors paired with their labels.
    pub fn encode(&self, m: usize) -> Result<Samples> {
        Ok(Samples {
            inputs: self.transform_all(m)?,
            labels: self.labels(),
        })
    }
}

/// Transformed inputs ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub inputs: Vec<ComplexVector>,
    pub labels: Vec<usize>,
}

impl Samples {
    pub fn new(inputs: Vec<ComplexVector>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::mismatch("samples", (inputs.len(), 1), (labels.len(), 1)));
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn head(&self, n: usize) -> Samples {
        let n = n.min(self.len());
        Samples {
            inputs: self.inputs[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

/// Loads an IDX image/label pair. Paths ending in `.gz` are decompressed.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let image_bytes = read_maybe_gz(images_path)?;
    let label_bytes = read_maybe_gz(labels_path)?;

    let mut img = ByteCursor::new(&image_bytes, images_path);
    let magic = img.u32()?;
    if magic != IMAGES_MAGIC {
        return Err(img.error(format!("bad image magic 0x{magic:08x}")));
    }
    let count = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(img.error(format!("expected 28x28 images, got {rows}x{cols}")));
    }
    let pixels = img.take(count * IMAGE_PIXELS)?.to_vec();

    let mut lab = ByteCursor::new(&label_bytes, labels_path);
    let magic = lab.u32()?;
    if magic != LABELS_MAGIC {
        return Err(lab.error(format!("bad label magic 0x{magic:08x}")));
    }
    let label_count = lab.u32()? as usize;
    if label_count != count {
        return Err(lab.error(format!(
            "label count {label_count} does not match image count {count}"
        )));
    }
    let labels = lab.take(label_count)?.to_vec();

    Dataset::from_raw(pixels, labels, split).map_err(|e| Error::Dataset {
        path: labels_path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Loads `train-*` or `t10k-*` from a directory holding the standard file names,
/// gzipped or not.
pub fn load_fashion_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let find = |name: &str| -> Result<PathBuf> {
        let plain = dir.join(name);
        let gz = dir.join(format!("{name}.gz"));
        if gz.exists() {
            Ok(gz)
        } else if plain.exists() {
            Ok(plain)
        } else {
            Err(Error::Dataset {
                path: gz,
                message: "file not found".into(),
            })
        }
    };
    let (images, labels) = split.file_names();
    load_idx(&find(&images)?, &find(&labels)?, split)
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut reader: Box<dyn Read> = if path.extension().is_some_and(|ext| ext == "gz") {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(buf)
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteCursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn error(&self, message: String) -> Error {
        Error::Dataset {
            path: self.path.to_path_buf(),
            message,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(format!(
                "truncated file: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Average-pooling geometry for a given complex output width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolingLayout {
    pub window_rows: usize,
    pub window_cols: usize,
}

impl PoolingLayout {
    /// Picks non-overlapping windows that tile 28×28 into exactly `2m` cells with an
    /// even number of columns, preferring 4-row windows.
    pub fn for_width(m: usize) -> Result<Self> {
        const ROW_WINDOWS: [usize; 6] = [4, 2, 1, 7, 14, 28];
        if m == 0 {
            return Err(Error::InvalidArgument("width must be positive".into()));
        }
        for wr in ROW_WINDOWS {
            let grid_rows = IMAGE_SIDE / wr;
            if (2 * m) % grid_rows != 0 {
                continue;
            }
            let grid_cols = 2 * m / grid_rows;
            if grid_cols % 2 == 0 && grid_cols <= IMAGE_SIDE && IMAGE_SIDE % grid_cols == 0 {
                return Ok(Self {
                    window_rows: wr,
                    window_cols: IMAGE_SIDE / grid_cols,
                });
            }
        }
        Err(Error::InvalidArgument(format!(
            "width {m} cannot be produced by pooling a 28x28 image"
        )))
    }

    pub fn grid(&self) -> (usize, usize) {
        (IMAGE_SIDE / self.window_rows, IMAGE_SIDE / self.window_cols)
    }

    pub fn width(&self) -> usize {
        let (r, c) = self.grid();
        r * c / 2
    }

    pub fn apply(&self, pixels: &[f64]) -> ComplexVector {
        debug_assert_eq!(pixels.len(), IMAGE_PIXELS);
        let (gr, gc) = self.grid();
        let area = (self.window_rows * self.window_cols) as f64;
        let mut pooled = vec![0.0; gr * gc];
        for (y, row) in pixels.chunks_exact(IMAGE_SIDE).enumerate() {
            let out_row = &mut pooled[(y / self.window_rows) * gc..][..gc];
            for (x, &p) in row.iter().enumerate() {
                out_row[x / self.window_cols] += p;
            }
        }
        pooled
            .chunks_exact(2)
            .map(|pair| C64::new(pair[0] / area, pair[1] / area))
            .collect()
    }
}

/// The transformation from image to the length-`m` complex source vector.
pub fn transform_g(img: &LabeledImage, m: usize) -> Result<ComplexVector> {
    Ok(PoolingLayout::for_width(m)?.apply(&img.pixels))
}

/// Shuffled index batches covering `0..n` exactly once; the last batch may be short.
pub fn epoch_batches<R: Rng + ?Sized>(
    n: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[label] = 1.0;
    v
}
