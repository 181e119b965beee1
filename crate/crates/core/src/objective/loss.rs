use rand::Rng;

use super::{AdapterGrads, AdapterParams, Batch, LossBreakdown};
use crate::error::{Error, Result};
use crate::store::ZERO_NORM_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Row `i` normalizes image `i` over all texts.
    ImageToText,
    /// Row `j` normalizes text `j` over all images.
    TextToImage,
}

/// Row-stochastic in-batch softmax of an `n x n` similarity matrix whose
/// entry `(i, j)` compares image `i` with text `j`. The positive for row
/// `i` sits at column `i` in both directions.
pub fn inbatch_softmax(
    sims: &[f64],
    n: usize,
    direction: Direction,
    temperature: f64,
) -> Result<Vec<f64>> {
    if sims.len() != n * n {
        return Err(Error::DimMismatch {
            left: sims.len(),
            right: n * n,
        });
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be > 0, got {temperature}"
        )));
    }
    if sims.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("similarity matrix".into()));
    }
    let mut out = vec![0.0; n * n];
    let mut logits = vec![0.0; n];
    for r in 0..n {
        for (c, slot) in logits.iter_mut().enumerate() {
            let s = match direction {
                Direction::ImageToText => sims[r * n + c],
                Direction::TextToImage => sims[c * n + r],
            };
            *slot = s / temperature;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (c, &l) in logits.iter().enumerate() {
            let e = (l - max).exp();
            out[r * n + c] = e;
            sum += e;
        }
        for v in &mut out[r * n..(r + 1) * n] {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Normalized projections of one side of a batch.
struct Projection {
    hat: Vec<f64>,
    norms: Vec<f64>,
}

fn project(rows: &[f64], n: usize, d: usize, w: &[f64]) -> Result<Projection> {
    let mut hat = vec![0.0; n * d];
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let x = &rows[i * d..(i + 1) * d];
        let u = &mut hat[i * d..(i + 1) * d];
        for (a, ua) in u.iter_mut().enumerate() {
            *ua = w[a * d..(a + 1) * d].iter().zip(x).map(|(w, x)| w * x).sum();
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("projected batch row".into()));
        }
        if norm <= ZERO_NORM_THRESHOLD {
            return Err(Error::ZeroVector { row: i, norm });
        }
        for v in u.iter_mut() {
            *v /= norm;
        }
        norms[i] = norm;
    }
    Ok(Projection { hat, norms })
}

/// Chains `dL/d(u/|u|)` back through normalization and `u = W x`.
fn backprop(rows: &[f64], proj: &Projection, grad_hat: &[f64], d: usize) -> Vec<f64> {
    let mut grad_w = vec![0.0; d * d];
    for (i, &norm) in proj.norms.iter().enumerate() {
        let h = &proj.hat[i * d..(i + 1) * d];
        let g = &grad_hat[i * d..(i + 1) * d];
        let x = &rows[i * d..(i + 1) * d];
        let radial: f64 = h.iter().zip(g).map(|(a, b)| a * b).sum();
        for a in 0..d {
            let gu = (g[a] - h[a] * radial) / norm;
            for (gw, xb) in grad_w[a * d..(a + 1) * d].iter_mut().zip(x) {
                *gw += gu * xb;
            }
        }
    }
    grad_w
}

struct Forward {
    n: usize,
    d: usize,
    images: Projection,
    texts: Projection,
    /// `sims[i * n + j]` = cosine of adapted image `i` and adapted text `j`.
    sims: Vec<f64>,
}

impl Forward {
    fn new(batch: &Batch, params: &AdapterParams) -> Result<Self> {
        params.check()?;
        if params.dim != batch.dim {
            return Err(Error::DimMismatch {
                left: batch.dim,
                right: params.dim,
            });
        }
        let (n, d) = (batch.n, batch.dim);
        let images = project(&batch.images, n, d, &params.w_image)?;
        let texts = project(&batch.texts, n, d, &params.w_text)?;
        let mut sims = vec![0.0; n * n];
        for i in 0..n {
            let u = &images.hat[i * d..(i + 1) * d];
            for j in 0..n {
                let v = &texts.hat[j * d..(j + 1) * d];
                sims[i * n + j] = u.iter().zip(v).map(|(a, b)| a * b).sum();
            }
        }
        Ok(Self {
            n,
            d,
            images,
            texts,
            sims,
        })
    }

    fn image(&self, i: usize) -> &[f64] {
        &self.images.hat[i * self.d..(i + 1) * self.d]
    }

    fn text(&self, j: usize) -> &[f64] {
        &self.texts.hat[j * self.d..(j + 1) * self.d]
    }

    /// Gradients of the projection matrices from gradients w.r.t. the
    /// adapted similarity-space rows.
    fn finish(&self, batch: &Batch, grad_images: &[f64], grad_texts: &[f64], grads: &mut AdapterGrads) {
        grads.w_image = backprop(&batch.images, &self.images, grad_images, self.d);
        grads.w_text = backprop(&batch.texts, &self.texts, grad_texts, self.d);
    }
}

/// Image-to-text and text-to-image in-batch softmax under `params`.
pub fn in_batch_probabilities(batch: &Batch, params: &AdapterParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let fwd = Forward::new(batch, params)?;
    Ok((
        inbatch_softmax(&fwd.sims, fwd.n, Direction::ImageToText, params.temperature)?,
        inbatch_softmax(&fwd.sims, fwd.n, Direction::TextToImage, params.temperature)?,
    ))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Symmetric in-batch contrastive loss and its gradient.
pub fn contrastive_loss(batch: &Batch, params: &AdapterParams) -> Result<(f64, AdapterGrads)> {
    if batch.n < 2 {
        return Err(Error::BatchTooSmall(batch.n));
    }
    let fwd = Forward::new(batch, params)?;
    let (n, d, tau) = (fwd.n, fwd.d, params.temperature);
    let p_i2t = inbatch_softmax(&fwd.sims, n, Direction::ImageToText, tau)?;
    let p_t2i = inbatch_softmax(&fwd.sims, n, Direction::TextToImage, tau)?;

    let mut loss = 0.0;
    for r in 0..n {
        let row = (0..n).map(|c| fwd.sims[r * n + c] / tau);
        loss += log_sum_exp(row) - fwd.sims[r * n + r] / tau;
        let col = (0..n).map(|c| fwd.sims[c * n + r] / tau);
        loss += log_sum_exp(col) - fwd.sims[r * n + r] / tau;
    }
    loss /= 2.0 * n as f64;

    // dL/dlogit(i, j) = [(P_i2t[i][j] - δ) + (P_t2i[j][i] - δ)] / 2N
    let scale = 1.0 / (2.0 * n as f64);
    let mut grads = AdapterGrads::zeros(d);
    let mut grad_images = vec![0.0; n * d];
    let mut grad_texts = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 2.0 } else { 0.0 };
            let g_logit = scale * (p_i2t[i * n + j] + p_t2i[j * n + i] - target);
            let g_sim = g_logit / tau;
            grads.temperature -= g_logit * fwd.sims[i * n + j] / (tau * tau);
            for (k, (u, v)) in fwd.image(i).iter().zip(fwd.text(j)).enumerate() {
                grad_images[i * d + k] += g_sim * v;
                grad_texts[j * d + k] += g_sim * u;
            }
        }
    }
    fwd.finish(batch, &grad_images, &grad_texts, &mut grads);
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite("contrastive loss".into()));
    }
    Ok((loss, grads))
}

/// One sampled negative per anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardNegatives {
    /// For image `i`, the index of a non-matching text.
    pub text_for_image: Vec<usize>,
    /// For text `j`, the index of a non-matching image.
    pub image_for_text: Vec<usize>,
}

impl HardNegatives {
    fn check(&self, n: usize) -> Result<()> {
        let valid = |v: &[usize]| v.len() == n && v.iter().enumerate().all(|(i, &j)| j < n && j != i);
        if valid(&self.text_for_image) && valid(&self.image_for_text) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "hard negatives do not fit a batch of {n}"
            )))
        }
    }
}

fn draw_off_diagonal<R: Rng + ?Sized>(row: &[f64], anchor: usize, rng: &mut R) -> usize {
    let total: f64 = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != anchor)
        .map(|(_, &p)| p)
        .sum();
    let candidates = row.len() - 1;
    if !(total > 0.0) || !total.is_finite() {
        // All off-diagonal mass underflowed: fall back to uniform.
        let pick = rng.random_range(0..candidates);
        return if pick >= anchor { pick + 1 } else { pick };
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = anchor;
    for (j, &p) in row.iter().enumerate() {
        if j == anchor || p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if target < acc {
            return j;
        }
    }
    last
}

/// Draws one negative text per image and one negative image per text, each
/// with probability proportional to its in-batch softmax entry with the
/// positive excluded.
pub fn sample_hard_negatives<R: Rng + ?Sized>(
    image_to_text: &[f64],
    text_to_image: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<HardNegatives> {
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    if image_to_text.len() != n * n || text_to_image.len() != n * n {
        return Err(Error::DimMismatch {
            left: image_to_text.len().max(text_to_image.len()),
            right: n * n,
        });
    }
    let text_for_image = (0..n)
        .map(|i| draw_off_diagonal(&image_to_text[i * n..(i + 1) * n], i, rng))
        .collect();
    let image_for_text = (0..n)
        .map(|j| draw_off_diagonal(&text_to_image[j * n..(j + 1) * n], j, rng))
        .collect();
    Ok(HardNegatives {
        text_for_image,
        image_for_text,
    })
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of the match head over the `N` positive pairs and
/// the `2N` sampled negative pairs, averaged over all `3N` pairs.
pub fn match_loss(
    batch: &Batch,
    negatives: &HardNegatives,
    params: &AdapterParams,
) -> Result<(f64, AdapterGrads)> {
    if batch.n < 2 {
        return Err(Error::BatchTooSmall(batch.n));
    }
    negatives.check(batch.n)?;
    let fwd = Forward::new(batch, params)?;
    let (n, d) = (fwd.n, fwd.d);

    let pairs = (0..n)
        .map(|i| (i, i, 1.0))
        .chain(negatives.text_for_image.iter().enumerate().map(|(i, &t)| (i, t, 0.0)))
        .chain(negatives.image_for_text.iter().enumerate().map(|(t, &i)| (i, t, 0.0)));
    let count = 3.0 * n as f64;

    let mut loss = 0.0;
    let mut grads = AdapterGrads::zeros(d);
    let mut grad_images = vec![0.0; n * d];
    let mut grad_texts = vec![0.0; n * d];
    for (img, txt, label) in pairs {
        let cos = fwd.sims[img * n + txt];
        let z = params.match_scale * cos + params.match_bias;
        loss += if label == 1.0 { softplus(-z) } else { softplus(z) };
        let g_z = (sigmoid(z) - label) / count;
        grads.match_scale += g_z * cos;
        grads.match_bias += g_z;
        let g_cos = g_z * params.match_scale;
        for (k, (u, v)) in fwd.image(img).iter().zip(fwd.text(txt)).enumerate() {
            grad_images[img * d + k] += g_cos * v;
            grad_texts[txt * d + k] += g_cos * u;
        }
    }
    loss /= count;
    fwd.finish(batch, &grad_images, &grad_texts, &mut grads);
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::NonFinite("match loss".into()));
    }
    Ok((loss, grads))
}

/// Combined loss `contrastive + lambda_match * match` and its gradient.
pub fn objective(
    batch: &Batch,
    negatives: &HardNegatives,
    params: &AdapterParams,
    lambda_match: f64,
) -> Result<(LossBreakdown, AdapterGrads)> {
    let (lc, mut grads) = contrastive_loss(batch, params)?;
    let (lm, gm) = match_loss(batch, negatives, params)?;
    grads.add_scaled(&gm, lambda_match);
    Ok((LossBreakdown::new(lc, lm, lambda_match), grads))
}
