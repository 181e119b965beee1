//! Mini-batch gradient descent for the adapter.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{in_batch_probabilities, objective, sample_hard_negatives};
use super::{AdapterParams, Batch, LossBreakdown};
use crate::error::{Error, Result};
use crate::store::EmbeddingMatrix;
use crate::text::{parse_field, Header};

/// Mixed into the seed of the fixed-negative evaluation pass so that it
/// does not share a stream with training.
const EVAL_STREAM: u64 = 0x5eed_e7a1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial step size, decayed linearly to zero over all steps.
    pub step_size: f64,
    /// Decoupled weight decay on the projection matrices.
    pub weight_decay: f64,
    pub lambda_match: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            step_size: 3e-5,
            weight_decay: 0.01,
            lambda_match: 1.0,
            temperature: 1.0,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size < 2 {
            return fail(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return fail(format!("step_size must be > 0, got {}", self.step_size));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.lambda_match >= 0.0 && self.lambda_match.is_finite()) {
            return fail(format!("lambda_match must be >= 0, got {}", self.lambda_match));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn to_header(&self) -> Header {
        Header::new()
            .with("epochs", self.epochs)
            .with("batch_size", self.batch_size)
            .with("step_size", self.step_size)
            .with("weight_decay", self.weight_decay)
            .with("lambda_match", self.lambda_match)
            .with("temperature", self.temperature)
            .with("seed", self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    /// 0 is the untrained adapter; epoch `e` is the state after `e` epochs.
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: AdapterParams,
    pub trace: Vec<EpochLoss>,
}

fn chunks_of(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    // A trailing single pair has no in-batch negatives and is dropped.
    order.chunks(batch_size).filter(|c| c.len() >= 2)
}

/// Loss over every pair in canonical order with negatives drawn from a
/// fixed stream, so that successive evaluations are comparable.
fn evaluate(
    queries: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
    pairs: &[(usize, usize)],
    params: &AdapterParams,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ EVAL_STREAM);
    let order: Vec<usize> = (0..pairs.len()).collect();
    let (mut lc, mut lm, mut weight) = (0.0, 0.0, 0.0);
    for chunk in chunks_of(&order, cfg.batch_size) {
        let batch_pairs: Vec<_> = chunk.iter().map(|&i| pairs[i]).collect();
        let batch = Batch::from_pairs(queries, gallery, &batch_pairs)?;
        let (i2t, t2i) = in_batch_probabilities(&batch, params)?;
        let negatives = sample_hard_negatives(&i2t, &t2i, batch.len(), &mut rng)?;
        let (loss, _) = objective(&batch, &negatives, params, cfg.lambda_match)?;
        let w = batch.len() as f64;
        lc += w * loss.contrastive;
        lm += w * loss.matching;
        weight += w;
    }
    Ok(LossBreakdown::new(lc / weight, lm / weight, cfg.lambda_match))
}

/// Trains projections over frozen, normalized embeddings. `pairs` holds
/// `(query_id, gallery_id)` positives; texts come from `queries` and images
/// from `gallery`.
///
/// Projections start at the identity and the match head at scale 10, bias 0.
/// Each epoch shuffles the pairs with a seeded generator; each step samples
/// hard negatives from the current in-batch softmax, then takes a gradient
/// step with linearly decayed step size and decoupled weight decay. The
/// temperature stays fixed at the configured value.
pub fn train_adapter(
    queries: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
    pairs: &[(usize, usize)],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if queries.dim() != gallery.dim() {
        return Err(Error::DimMismatch {
            left: queries.dim(),
            right: gallery.dim(),
        });
    }
    if pairs.len() < 2 {
        return Err(Error::BatchTooSmall(pairs.len()));
    }
    if let Some(&(q, g)) = pairs.iter().find(|&&(q, g)| q >= queries.rows() || g >= gallery.rows()) {
        return Err(Error::InvalidConfig(format!("pair ({q}, {g}) out of range")));
    }

    let mut params = AdapterParams {
        temperature: cfg.temperature,
        ..AdapterParams::identity(queries.dim())
    };
    let mut trace = vec![EpochLoss {
        epoch: 0,
        loss: evaluate(queries, gallery, pairs, &params, cfg)?,
    }];

    let steps_per_epoch = chunks_of(&(0..pairs.len()).collect::<Vec<_>>(), cfg.batch_size).count();
    let total_steps = (cfg.epochs * steps_per_epoch) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut step = 0usize;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (batch_idx, chunk) in chunks_of(&order, cfg.batch_size).enumerate() {
            let at = || format!("epoch {epoch}, step {batch_idx}");
            let batch_pairs: Vec<_> = chunk.iter().map(|&i| pairs[i]).collect();
            let batch = Batch::from_pairs(queries, gallery, &batch_pairs)?;
            let (i2t, t2i) = in_batch_probabilities(&batch, &params)
                .map_err(|e| Error::NonFinite(format!("{} ({e})", at())))?;
            let negatives = sample_hard_negatives(&i2t, &t2i, batch.len(), &mut rng)?;
            let (loss, grads) = objective(&batch, &negatives, &params, cfg.lambda_match)
                .map_err(|e| Error::NonFinite(format!("{} ({e})", at())))?;
            if !loss.total.is_finite() {
                return Err(Error::NonFinite(at()));
            }

            let lr = cfg.step_size * (1.0 - step as f64 / total_steps);
            let decay = 1.0 - lr * cfg.weight_decay;
            for (w, g) in params.w_text.iter_mut().zip(&grads.w_text) {
                *w = *w * decay - lr * g;
            }
            for (w, g) in params.w_image.iter_mut().zip(&grads.w_image) {
                *w = *w * decay - lr * g;
            }
            params.match_scale -= lr * grads.match_scale;
            params.match_bias -= lr * grads.match_bias;
            params.check().map_err(|_| Error::NonFinite(at()))?;
            step += 1;
        }
        trace.push(EpochLoss {
            epoch,
            loss: evaluate(queries, gallery, pairs, &params, cfg)?,
        });
    }
    Ok(TrainOutcome { params, trace })
}

/// Writes `epoch contrastive match total` rows after the config header.
pub fn write_trace<W: Write>(mut w: W, header: &Header, trace: &[EpochLoss]) -> Result<()> {
    w.write_all(header.render().as_bytes())?;
    for e in trace {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            e.epoch, e.loss.contrastive, e.loss.matching, e.loss.total
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<(Header, Vec<EpochLoss>)> {
    let mut header = Header::new();
    let mut rows = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') {
            header.parse_line(&line);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let epoch = parse_field(cols.next(), idx + 1, "epoch")?;
        let contrastive = parse_field(cols.next(), idx + 1, "contrastive")?;
        let matching = parse_field(cols.next(), idx + 1, "match")?;
        let total: f64 = parse_field(cols.next(), idx + 1, "total")?;
        let lambda_match = header
            .get("lambda_match")
            .and_then(|v| v.parse().ok())
            .unwrap_or(1.0);
        rows.push(EpochLoss {
            epoch,
            loss: LossBreakdown {
                contrastive,
                matching,
                total,
                lambda_match,
            },
        });
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{l2_normalize, synthesize, SynthConfig};

    fn data() -> (EmbeddingMatrix, EmbeddingMatrix, Vec<(usize, usize)>) {
        let d = synthesize(&SynthConfig {
            n_identities: 20,
            dim: 8,
            ..SynthConfig::default()
        })
        .unwrap();
        let pairs = d.ground_truth.iter().copied().enumerate().collect();
        (
            l2_normalize(&d.queries).unwrap(),
            l2_normalize(&d.gallery).unwrap(),
            pairs,
        )
    }

    #[test]
    fn zero_epochs_returns_identity() {
        let (q, g, pairs) = data();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train_adapter(&q, &g, &pairs, &cfg).unwrap();
        assert_eq!(out.params, AdapterParams::identity(8));
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn same_seed_same_params() {
        let (q, g, pairs) = data();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 6,
            step_size: 0.05,
            ..TrainConfig::default()
        };
        let a = train_adapter(&q, &g, &pairs, &cfg).unwrap();
        let b = train_adapter(&q, &g, &pairs, &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params, AdapterParams::identity(8));
    }

    #[test]
    fn rejects_bad_config() {
        let (q, g, pairs) = data();
        for cfg in [
            TrainConfig { batch_size: 1, ..TrainConfig::default() },
            TrainConfig { step_size: 0.0, ..TrainConfig::default() },
            TrainConfig { temperature: 0.0, ..TrainConfig::default() },
        ] {
            assert!(matches!(train_adapter(&q, &g, &pairs, &cfg), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn diverging_step_reports_location() {
        let (q, g, pairs) = data();
        let cfg = TrainConfig {
            epochs: 2,
            step_size: 1e300,
            ..TrainConfig::default()
        };
        match train_adapter(&q, &g, &pairs, &cfg) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("epoch 1"), "{msg}"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn trace_round_trip() {
        let trace = vec![
            EpochLoss { epoch: 0, loss: LossBreakdown::new(0.7, 0.3, 0.5) },
            EpochLoss { epoch: 1, loss: LossBreakdown::new(0.6, 0.25, 0.5) },
        ];
        let header = TrainConfig { lambda_match: 0.5, ..TrainConfig::default() }.to_header();
        let mut buf = Vec::new();
        write_trace(&mut buf, &header, &trace).unwrap();
        let (h, back) = read_trace(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, trace);
    }
}
