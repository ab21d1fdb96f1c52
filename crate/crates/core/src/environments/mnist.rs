use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{EnvKind, Environment, RoundDraw};
use crate::bandit::ContextMatrix;
use crate::error::{BanditError, Result};
use crate::rng::SimRng;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

/// Labelled grayscale images. Pixels are kept as raw bytes and scaled by
/// 1/255 on access, so every returned value lies in [0, 1].
#[derive(Debug, Clone)]
pub struct MnistPool {
    source: String,
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
    by_digit: [Vec<usize>; 10],
}

pub fn parse_idx(images_path: &Path, labels_path: &Path) -> Result<MnistPool> {
    let images = std::fs::read(images_path).map_err(|e| BanditError::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| BanditError::io(labels_path, e))?;
    parse_idx_bytes(
        &images,
        &labels,
        &images_path.display().to_string(),
        &labels_path.display().to_string(),
    )
}

fn be_u32(bytes: &[u8], at: usize, path: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| BanditError::Format {
            path: path.to_string(),
            message: "truncated header".into(),
        })
}

pub fn parse_idx_bytes(
    images: &[u8],
    labels: &[u8],
    images_name: &str,
    labels_name: &str,
) -> Result<MnistPool> {
    let format = |path: &str, message: String| BanditError::Format {
        path: path.to_string(),
        message,
    };
    let magic = be_u32(images, 0, images_name)?;
    if magic != IMAGES_MAGIC {
        return Err(format(
            images_name,
            format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let magic = be_u32(labels, 0, labels_name)?;
    if magic != LABELS_MAGIC {
        return Err(format(
            labels_name,
            format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let count = be_u32(images, 4, images_name)? as usize;
    let rows = be_u32(images, 8, images_name)? as usize;
    let cols = be_u32(images, 12, images_name)? as usize;
    let label_count = be_u32(labels, 4, labels_name)? as usize;
    if count != label_count {
        return Err(BanditError::Consistency(format!(
            "{images_name} holds {count} images but {labels_name} holds {label_count} labels"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(format(images_name, "zero image dimension".into()));
    }
    let pixels = &images[16..];
    if pixels.len() != count * rows * cols {
        return Err(format(
            images_name,
            format!(
                "expected {} pixel bytes, found {}",
                count * rows * cols,
                pixels.len()
            ),
        ));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != count {
        return Err(format(
            labels_name,
            format!("expected {count} label bytes, found {}", label_bytes.len()),
        ));
    }
    let mut by_digit: [Vec<usize>; 10] = Default::default();
    for (i, &l) in label_bytes.iter().enumerate() {
        let slot = by_digit.get_mut(l as usize).ok_or_else(|| {
            format(
                labels_name,
                format!("label {l} at index {i} is not a digit"),
            )
        })?;
        slot.push(i);
    }
    Ok(MnistPool {
        source: images_name.to_string(),
        rows,
        cols,
        pixels: pixels.to_vec(),
        labels: label_bytes.to_vec(),
        by_digit,
    })
}

impl MnistPool {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn raw_image(&self, index: usize) -> &[u8] {
        let p = self.pixel_count();
        &self.pixels[index * p..(index + 1) * p]
    }

    pub fn image(&self, index: usize) -> Vec<f64> {
        self.raw_image(index)
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect()
    }

    pub fn digit_indices(&self, digit: u8) -> &[usize] {
        &self.by_digit[digit as usize]
    }
}

/// Each slot shows a uniformly chosen digit; the expected reward is the digit.
#[derive(Debug, Clone)]
pub struct MnistEnv {
    pool: Arc<MnistPool>,
    n: usize,
    noise_scale: f64,
}

impl MnistEnv {
    pub fn new(pool: Arc<MnistPool>, n: usize, noise_scale: f64) -> Result<Self> {
        if let Some(d) = (0..10).find(|&d| pool.by_digit[d].is_empty()) {
            return Err(BanditError::Consistency(format!(
                "{}: no images of digit {d}",
                pool.source
            )));
        }
        if n == 0 {
            return Err(BanditError::InvalidConfig("env.n must be >= 1".into()));
        }
        Ok(Self {
            pool,
            n,
            noise_scale,
        })
    }

    pub fn pool(&self) -> &MnistPool {
        &self.pool
    }
}

impl Environment for MnistEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Mnist
    }

    fn arm_count(&self) -> usize {
        self.n
    }

    fn context_dim(&self) -> usize {
        self.pool.pixel_count()
    }

    fn image_side(&self) -> Option<usize> {
        (self.pool.rows == self.pool.cols).then_some(self.pool.rows)
    }

    fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    fn draw_round(&mut self, t: usize, rng: &mut SimRng) -> Result<RoundDraw> {
        let p = self.pool.pixel_count();
        let mut data = Vec::with_capacity(self.n * p);
        let mut means = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let digit = rng.random_range(0..10u8);
            let index = *self.pool.by_digit[digit as usize]
                .choose(rng)
                .expect("every digit present");
            data.extend(self.pool.raw_image(index).iter().map(|&b| b as f64 / 255.0));
            means.push(digit as f64);
        }
        RoundDraw::new(
            ContextMatrix::from_flat(self.n, p, data, t)?,
            means,
            self.noise_scale,
        )
    }
}
