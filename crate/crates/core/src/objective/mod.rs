//! Training objectives and the linear adapter they fit.
//!
//! Frozen query (text) and gallery (image) embeddings pass through one
//! `d x d` projection per side and are re-normalized. Two losses are defined
//! on a mini-batch of `N` aligned pairs:
//!
//! - a symmetric in-batch contrastive loss: cross-entropy of the softmax over
//!   pairwise cosines against the diagonal, averaged over image-to-text and
//!   text-to-image directions;
//! - a match loss: binary cross-entropy of a logistic match head on the `N`
//!   positive pairs plus one hard negative per image and per text, drawn in
//!   proportion to the in-batch softmax.
//!
//! Both return analytical gradients for every adapter parameter.

mod adapter;
mod loss;
mod train;

pub use adapter::{apply_adapter, read_params, write_params, Precision, Side, PARAMS_MAGIC, PARAMS_VERSION};
pub use loss::{
    contrastive_loss, in_batch_probabilities, inbatch_softmax, match_loss, objective,
    sample_hard_negatives, Direction, HardNegatives,
};
pub use train::{read_trace, train_adapter, write_trace, EpochLoss, TrainConfig, TrainOutcome};

use crate::error::{Error, Result};
use crate::store::{EmbeddingMatrix, ZERO_NORM_THRESHOLD};

/// `N` aligned pairs: image row `i` and text row `i` match.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    n: usize,
    dim: usize,
    images: Vec<f64>,
    texts: Vec<f64>,
}

impl Batch {
    /// Builds a batch from row vectors, normalizing every row.
    pub fn from_rows(images: &[Vec<f64>], texts: &[Vec<f64>]) -> Result<Self> {
        if images.len() != texts.len() {
            return Err(Error::DimMismatch {
                left: images.len(),
                right: texts.len(),
            });
        }
        let dim = images.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidConfig("batch rows must be non-empty".into()));
        }
        let mut flat_images = Vec::with_capacity(images.len() * dim);
        let mut flat_texts = Vec::with_capacity(images.len() * dim);
        for (out, rows) in [(&mut flat_images, images), (&mut flat_texts, texts)] {
            for (row_idx, row) in rows.iter().enumerate() {
                if row.len() != dim {
                    return Err(Error::DimMismatch {
                        left: row.len(),
                        right: dim,
                    });
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("batch row {row_idx}")));
                }
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= ZERO_NORM_THRESHOLD {
                    return Err(Error::ZeroVector { row: row_idx, norm });
                }
                out.extend(row.iter().map(|v| v / norm));
            }
        }
        Ok(Self {
            n: images.len(),
            dim,
            images: flat_images,
            texts: flat_texts,
        })
    }

    /// Gathers `(query, gallery)` pairs: texts from `queries`, images from
    /// `gallery`.
    pub fn from_pairs(
        queries: &EmbeddingMatrix,
        gallery: &EmbeddingMatrix,
        pairs: &[(usize, usize)],
    ) -> Result<Self> {
        let widen = |r: &[f32]| r.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        let images: Vec<_> = pairs.iter().map(|&(_, g)| widen(gallery.row(g))).collect();
        let texts: Vec<_> = pairs.iter().map(|&(q, _)| widen(queries.row(q))).collect();
        Self::from_rows(&images, &texts)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    pub fn text(&self, i: usize) -> &[f64] {
        &self.texts[i * self.dim..(i + 1) * self.dim]
    }

    /// Reorders pairs; row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let gather = |src: &[f64]| {
            perm.iter()
                .flat_map(|&p| src[p * self.dim..(p + 1) * self.dim].iter().copied())
                .collect()
        };
        Self {
            n: perm.len(),
            dim: self.dim,
            images: gather(&self.images),
            texts: gather(&self.texts),
        }
    }
}

/// Trainable parameters. Projection matrices are row-major and map a
/// column vector `x` to `W x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub dim: usize,
    pub w_text: Vec<f64>,
    pub w_image: Vec<f64>,
    pub match_scale: f64,
    pub match_bias: f64,
    pub temperature: f64,
}

impl AdapterParams {
    pub const INIT_MATCH_SCALE: f64 = 10.0;

    /// Identity projections, match head at (scale 10, bias 0), temperature 1.
    pub fn identity(dim: usize) -> Self {
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        Self {
            dim,
            w_text: eye.clone(),
            w_image: eye,
            match_scale: Self::INIT_MATCH_SCALE,
            match_bias: 0.0,
            temperature: 1.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        let n = self.dim * self.dim;
        if self.w_text.len() != n || self.w_image.len() != n {
            return Err(Error::DimMismatch {
                left: self.w_text.len().max(self.w_image.len()),
                right: n,
            });
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        let finite = self
            .w_text
            .iter()
            .chain(&self.w_image)
            .chain([&self.match_scale, &self.match_bias, &self.temperature])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("adapter parameters".into()));
        }
        Ok(())
    }

    pub fn projection(&self, side: Side) -> &[f64] {
        match side {
            Side::Text => &self.w_text,
            Side::Image => &self.w_image,
        }
    }

    /// All parameters in a fixed order: `w_text`, `w_image`, `match_scale`,
    /// `match_bias`, `temperature`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.dim * self.dim + 3);
        v.extend_from_slice(&self.w_text);
        v.extend_from_slice(&self.w_image);
        v.extend([self.match_scale, self.match_bias, self.temperature]);
        v
    }

    pub fn unflatten(dim: usize, v: &[f64]) -> Result<Self> {
        let n = dim * dim;
        if v.len() != 2 * n + 3 {
            return Err(Error::DimMismatch {
                left: v.len(),
                right: 2 * n + 3,
            });
        }
        Ok(Self {
            dim,
            w_text: v[..n].to_vec(),
            w_image: v[n..2 * n].to_vec(),
            match_scale: v[2 * n],
            match_bias: v[2 * n + 1],
            temperature: v[2 * n + 2],
        })
    }
}

/// Gradient of a loss with respect to every [`AdapterParams`] field.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrads {
    pub w_text: Vec<f64>,
    pub w_image: Vec<f64>,
    pub match_scale: f64,
    pub match_bias: f64,
    pub temperature: f64,
}

impl AdapterGrads {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w_text: vec![0.0; dim * dim],
            w_image: vec![0.0; dim * dim],
            match_scale: 0.0,
            match_bias: 0.0,
            temperature: 0.0,
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &AdapterGrads, scale: f64) {
        for (a, b) in self.w_text.iter_mut().zip(&other.w_text) {
            *a += scale * b;
        }
        for (a, b) in self.w_image.iter_mut().zip(&other.w_image) {
            *a += scale * b;
        }
        self.match_scale += scale * other.match_scale;
        self.match_bias += scale * other.match_bias;
        self.temperature += scale * other.temperature;
    }

    /// Same order as [`AdapterParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w_text.len() * 2 + 3);
        v.extend_from_slice(&self.w_text);
        v.extend_from_slice(&self.w_image);
        v.extend([self.match_scale, self.match_bias, self.temperature]);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Loss values for one evaluation. `total = contrastive + lambda_match * match`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub contrastive: f64,
    pub matching: f64,
    pub total: f64,
    pub lambda_match: f64,
}

impl LossBreakdown {
    pub fn new(contrastive: f64, matching: f64, lambda_match: f64) -> Self {
        Self {
            contrastive,
            matching,
            total: contrastive + lambda_match * matching,
            lambda_match,
        }
    }
}
