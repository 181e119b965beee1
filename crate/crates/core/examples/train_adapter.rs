//! Train adapters on half of the benchmark and compare held-out Recall@1
//! against the untrained embeddings.

use std::collections::BTreeMap;

use tpas::eval::{recall_at_k, RunEcho};
use tpas::objective::{apply_adapter, train_adapter, write_trace, Side, TrainConfig};
use tpas::similarity::{similarity_matrix, top_k};
use tpas::store::{synthesize, EmbeddingMatrix, SynthConfig};

fn held_out_r1(queries: &EmbeddingMatrix, gallery: &EmbeddingMatrix, ids: &[usize], gt: &[usize]) -> tpas::Result<f64> {
    let sims = similarity_matrix(&queries.select_rows(ids), gallery)?;
    let lists = top_k(&sims, 1)?;
    let local: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &q)| (i, gt[q])).collect();
    Ok(recall_at_k(&lists, &local, &[1], "held-out", RunEcho::default())?.recall[0].recall)
}

fn main() -> tpas::Result<()> {
    let data = synthesize(&SynthConfig::default())?;
    let n = data.ground_truth.len();
    let train: Vec<(usize, usize)> = (0..n).step_by(2).map(|q| (q, data.ground_truth[q])).collect();
    let held_out: Vec<usize> = (1..n).step_by(2).collect();

    let cfg = TrainConfig {
        step_size: 0.05,
        epochs: 30,
        ..TrainConfig::default()
    };
    let outcome = train_adapter(&data.queries, &data.gallery, &train, &cfg)?;
    write_trace(std::io::stdout().lock(), &cfg.to_header(), &outcome.trace)?;

    let base = held_out_r1(&data.queries, &data.gallery, &held_out, &data.ground_truth)?;
    let q = apply_adapter(&data.queries, &outcome.params, Side::Text)?;
    let g = apply_adapter(&data.gallery, &outcome.params, Side::Image)?;
    let tuned = held_out_r1(&q, &g, &held_out, &data.ground_truth)?;
    println!("held-out R@1: identity {:.2}%, adapted {:.2}%", 100.0 * base, 100.0 * tuned);
    Ok(())
}
