//! Dataset ingestion and batching.
//!
//! Images and labels arrive in the classic IDX container: a big-endian magic
//! (2051 for images, 2049 for labels), big-endian dimension sizes, then the
//! unsigned-byte payload. Files ending in `.gz` are decompressed on the fly.
//! Pixels are normalized to `[0, 1]` by dividing by 255; `save_idx` undoes
//! that exactly, so parse -> serialize round-trips bit for bit.
//!
//! A synthetic Gaussian-blob generator provides ground-truth-labeled data
//! for metric and loss tests, with the true class centers returned alongside.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::bufread::GzDecoder;
use flate2::write::GzEncoder;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Matrix;

pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

/// A labeled dataset with pixel values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `n_samples x (rows * cols)`, row-major flattened images.
    pub images: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    /// Original 2-D extent of one sample, needed to re-serialize.
    pub image_shape: (usize, usize),
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// A new dataset holding only the first `n` samples.
    pub fn truncated(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        if n == 0 {
            return Err(Error::Parameter("cannot truncate to zero samples".into()));
        }
        let cols = self.images.cols();
        let data = self.images.as_slice()[..n * cols].to_vec();
        Ok(Dataset {
            images: Matrix::new(n, cols, data)?,
            labels: self.labels[..n].to_vec(),
            n_classes: self.n_classes,
            image_shape: self.image_shape,
        })
    }
}

fn open_reader(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let buffered = BufReader::new(file);
    if path.extension().is_some_and(|ext| ext == "gz") {
        Ok(Box::new(GzDecoder::new(buffered)))
    } else {
        Ok(Box::new(buffered))
    }
}

fn read_u32_be(reader: &mut dyn Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parses an IDX image/label file pair into a [`Dataset`].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    // Images: magic 2051, dims [N, rows, cols], pixel bytes.
    let mut reader = open_reader(images_path)?;
    let magic = read_u32_be(reader.as_mut(), images_path)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            images_path,
            format!("bad images magic: expected {IMAGES_MAGIC}, found {magic}"),
        ));
    }
    let n_images = read_u32_be(reader.as_mut(), images_path)? as usize;
    let rows = read_u32_be(reader.as_mut(), images_path)? as usize;
    let cols = read_u32_be(reader.as_mut(), images_path)? as usize;
    if n_images == 0 || rows == 0 || cols == 0 {
        return Err(Error::format(
            images_path,
            format!("degenerate image dimensions {n_images}x{rows}x{cols}"),
        ));
    }
    let mut pixel_bytes = vec![0u8; n_images * rows * cols];
    reader
        .read_exact(&mut pixel_bytes)
        .map_err(|e| Error::io(images_path, e))?;

    // Labels: magic 2049, dims [N], label bytes.
    let mut reader = open_reader(labels_path)?;
    let magic = read_u32_be(reader.as_mut(), labels_path)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            labels_path,
            format!("bad labels magic: expected {LABELS_MAGIC}, found {magic}"),
        ));
    }
    let n_labels = read_u32_be(reader.as_mut(), labels_path)? as usize;
    let mut label_bytes = vec![0u8; n_labels];
    reader
        .read_exact(&mut label_bytes)
        .map_err(|e| Error::io(labels_path, e))?;

    if n_images != n_labels {
        return Err(Error::Consistency {
            images: n_images,
            labels: n_labels,
        });
    }

    let data: Vec<f64> = pixel_bytes.iter().map(|&b| b as f64 / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let n_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Ok(Dataset {
        images: Matrix::new(n_images, rows * cols, data)?,
        labels,
        n_classes,
        image_shape: (rows, cols),
    })
}

fn open_writer(path: &Path) -> Result<Box<dyn Write>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let buffered = BufWriter::new(file);
    if path.extension().is_some_and(|ext| ext == "gz") {
        Ok(Box::new(GzEncoder::new(buffered, flate2::Compression::default())))
    } else {
        Ok(Box::new(buffered))
    }
}

/// Serializes a dataset back to the IDX pair. Pixel values must still be in
/// `[0, 1]`; they are rescaled to bytes, which inverts `load_idx` exactly.
pub fn save_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (rows, cols) = ds.image_shape;
    if rows * cols != ds.images.cols() {
        return Err(Error::Parameter(format!(
            "image shape {rows}x{cols} does not match {} columns",
            ds.images.cols()
        )));
    }
    let mut writer = open_writer(images_path)?;
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    header.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    header.extend_from_slice(&(rows as u32).to_be_bytes());
    header.extend_from_slice(&(cols as u32).to_be_bytes());
    writer
        .write_all(&header)
        .map_err(|e| Error::io(images_path, e))?;
    let mut bytes = Vec::with_capacity(ds.images.as_slice().len());
    for &p in ds.images.as_slice() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!(
                "pixel value {p} outside [0, 1] cannot be serialized"
            )));
        }
        bytes.push((p * 255.0).round() as u8);
    }
    writer
        .write_all(&bytes)
        .map_err(|e| Error::io(images_path, e))?;
    writer.flush().map_err(|e| Error::io(images_path, e))?;

    let mut writer = open_writer(labels_path)?;
    let mut header = Vec::with_capacity(8);
    header.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    header.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    writer
        .write_all(&header)
        .map_err(|e| Error::io(labels_path, e))?;
    let label_bytes: Vec<u8> = ds.labels.iter().map(|&l| l as u8).collect();
    writer
        .write_all(&label_bytes)
        .map_err(|e| Error::io(labels_path, e))?;
    writer.flush().map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

/// Convenience for tests and docs: resolves the conventional MNIST file
/// names under a directory, honoring an optional `.gz` suffix.
pub fn mnist_paths(dir: &Path, train: bool) -> (PathBuf, PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    let pick = |stem: String| {
        let plain = dir.join(&stem);
        if plain.exists() {
            plain
        } else {
            dir.join(format!("{stem}.gz"))
        }
    };
    (
        pick(format!("{prefix}-images-idx3-ubyte")),
        pick(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Synthetic Gaussian blobs: class centers drawn uniformly in a cube of side
/// `center_spread`, samples normal around their center. Returns the dataset
/// and the true centers (one row per class).
pub fn make_blobs(
    rng: &mut SeededRng,
    n_classes: usize,
    per_class: usize,
    dim: usize,
    center_spread: f64,
    noise_std: f64,
) -> Result<(Dataset, Matrix)> {
    if n_classes == 0 || per_class == 0 || dim == 0 {
        return Err(Error::Parameter(
            "blob counts and dimension must be at least 1".into(),
        ));
    }
    if noise_std < 0.0 {
        return Err(Error::Parameter(format!(
            "noise stddev must be nonnegative, got {noise_std}"
        )));
    }
    let half = center_spread / 2.0;
    let mut center_data = Vec::with_capacity(n_classes * dim);
    for _ in 0..n_classes * dim {
        center_data.push(rng.uniform(-half, half));
    }
    let centers = Matrix::new(n_classes, dim, center_data)?;

    let n = n_classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..n_classes {
        let c = centers.row(class);
        for _ in 0..per_class {
            for &ck in c {
                data.push(ck + noise_std * rng.standard_gaussian());
            }
            labels.push(class);
        }
    }
    let ds = Dataset {
        images: Matrix::new(n, dim, data)?,
        labels,
        n_classes,
        image_shape: (1, dim),
    };
    Ok((ds, centers))
}

/// Deterministic shuffled batching: one permutation per `(seed, epoch)`.
#[derive(Debug, Clone, Copy)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: u64,
}

/// Lazily yields `(images, labels)` batches; the last one may be short.
pub struct Batches<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    cursor: usize,
    batch_size: usize,
}

impl Iterator for Batches<'_> {
    type Item = (Matrix, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = &self.order[self.cursor..end];
        self.cursor = end;
        let cols = self.dataset.images.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.dataset.images.row(i));
            labels.push(self.dataset.labels[i]);
        }
        let images = Matrix::new(indices.len(), cols, data).expect("batch rows are finite");
        Some((images, labels))
    }
}

/// Splits the dataset into shuffled batches. The permutation is a pure
/// function of `(plan.seed, plan.epoch)`; the union of all batches is the
/// dataset, each sample exactly once.
pub fn batches<'a>(dataset: &'a Dataset, plan: &BatchPlan) -> Result<Batches<'a>> {
    if plan.batch_size == 0 {
        return Err(Error::Parameter("batch size must be at least 1".into()));
    }
    if plan.batch_size > dataset.len() {
        return Err(Error::Parameter(format!(
            "batch size {} exceeds dataset size {}",
            plan.batch_size,
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = SeededRng::new(plan.seed).derive(plan.epoch);
    rng.shuffle(&mut order);
    Ok(Batches {
        dataset,
        order,
        cursor: 0,
        batch_size: plan.batch_size,
    })
}
