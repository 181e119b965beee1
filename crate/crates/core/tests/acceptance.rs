//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    central_difference, full_sort_top_k, param_groups, random_batch, random_params, relative_error,
    rng, tied_scores,
};
use rand::Rng;
use tpas::assignment::{assignment_oracle, AssignmentMode};
use tpas::eval::{recall_at_k, RunEcho};
use tpas::objective::{
    apply_adapter, contrastive_loss, in_batch_probabilities, match_loss, sample_hard_negatives,
    train_adapter, AdapterParams, Batch, Side, TrainConfig,
};
use tpas::sca::{resolve, ResolutionPolicy};
use tpas::similarity::{similarity_matrix, top_k, RankedList, SimilarityMatrix};
use tpas::store::{synthesize, EmbeddingMatrix, SynthConfig};

/// Recall@1 gain of resolution on the seed-7 confusable benchmark,
/// measured once and kept as a regression value.
const FROZEN_SCA_GAIN: f64 = 1.0 / 64.0;
/// Share of the 30 small instances on which resolution does not lower
/// Recall@1, measured once and kept as a floor.
const FROZEN_SCA_MAJORITY: f64 = 20.0 / 30.0;

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64()))
    }
}

fn benchmark() -> SynthConfig {
    SynthConfig {
        n_identities: 64,
        dim: 32,
        noise_sigma: 0.4,
        confusable_fraction: 0.5,
        confusable_gap: 0.02,
        seed: 7,
        ..SynthConfig::default()
    }
}

fn gt_map(gt: &[usize]) -> BTreeMap<usize, usize> {
    gt.iter().copied().enumerate().collect()
}

fn recall1(lists: &[RankedList], gt: &BTreeMap<usize, usize>) -> f64 {
    recall_at_k(lists, gt, &[1], "acceptance", RunEcho::default())
        .unwrap()
        .recall_at(1)
        .unwrap()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut largest = 0;
    for i in 0..50 {
        let (rows, cols) = if i % 10 == 9 {
            (1000, 1000)
        } else {
            (r.random_range(1..300), r.random_range(1..300))
        };
        let levels = [4, 64, 1 << 20][i % 3];
        let k = r.random_range(1..=cols.min(50));
        let scores = tied_scores(&mut r, rows, cols, levels);
        let sims = SimilarityMatrix::from_raw(rows, cols, scores.clone()).map_err(|e| e.to_string())?;
        let lists = top_k(&sims, k).map_err(|e| e.to_string())?;
        for (q, list) in lists.iter().enumerate() {
            let expect = full_sort_top_k(&scores[q * cols..(q + 1) * cols], k);
            if list.ids() != expect {
                return Err(format!("instance {i} ({rows}x{cols}, k={k}) differs at query {q}"));
            }
        }
        largest = largest.max(rows * cols);
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "50 instances, largest {largest} cells, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let mut configs = 0;
    let mut worst: f64 = 0.0;
    for (case, &(n, d)) in [(2, 4), (4, 4), (16, 4), (2, 32), (4, 32), (16, 32)].iter().enumerate() {
        for rep in 0..2u64 {
            let mut r = rng(9000 + 10 * case as u64 + rep);
            let batch = random_batch(&mut r, n, d);
            let params = random_params(&mut r, d);
            let x = params.flatten();
            let unflat = |x: &[f64]| AdapterParams::unflatten(d, x).unwrap();

            let (_, g) = contrastive_loss(&batch, &params).map_err(|e| e.to_string())?;
            let num = central_difference(&x, 1e-4, |x| contrastive_loss(&batch, &unflat(x)).unwrap().0);
            let (i2t, t2i) = in_batch_probabilities(&batch, &params).map_err(|e| e.to_string())?;
            let neg = sample_hard_negatives(&i2t, &t2i, n, &mut r).map_err(|e| e.to_string())?;
            let (_, gm) = match_loss(&batch, &neg, &params).map_err(|e| e.to_string())?;
            let num_m = central_difference(&x, 1e-4, |x| match_loss(&batch, &neg, &unflat(x)).unwrap().0);

            for (label, analytic, numeric) in [("contrastive", g.flatten(), num), ("match", gm.flatten(), num_m)] {
                for (group, range) in param_groups(d) {
                    let err = relative_error(&analytic[range.clone()], &numeric[range], 1e-8);
                    worst = worst.max(err);
                    if err >= 1e-4 {
                        return Err(format!("{label} N={n} d={d} {group}: relative error {err:e}"));
                    }
                }
                configs += 1;
            }
        }
    }
    within(start.elapsed(), 10.0)?;
    check(
        configs >= 20,
        format!(
            "{configs} configurations, worst relative error {worst:.1e}, {:.2}s",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn closed_form_losses() -> Outcome {
    let batch = Batch::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]])
        .map_err(|e| e.to_string())?;
    let params = AdapterParams::identity(2);
    let (diag, _) = contrastive_loss(&batch, &params).map_err(|e| e.to_string())?;
    let e = std::f64::consts::E;
    let expect = -(e / (e + 1.0)).ln();
    if (diag - expect).abs() > 1e-6 {
        return Err(format!("diagonal batch {diag}, expected {expect}"));
    }
    for n in [2usize, 5, 16] {
        let rows = vec![vec![0.6, 0.8]; n];
        let flat = Batch::from_rows(&rows, &rows).map_err(|e| e.to_string())?;
        let (loss, _) = contrastive_loss(&flat, &params).map_err(|e| e.to_string())?;
        if (loss - (n as f64).ln()).abs() > 1e-6 {
            return Err(format!("all-equal batch N={n}: {loss}, expected ln N"));
        }
    }
    Ok(format!("diagonal {diag:.9}, all-equal = ln N for N in 2, 5, 16"))
}

fn sca_hand_trace() -> Outcome {
    let (a, b, c, d, e) = (0, 1, 2, 3, 4);
    let list = |q, entries: &[(usize, f32)]| RankedList::new(q, entries).unwrap();
    let policy = ResolutionPolicy::default();

    let two = resolve(&[list(0, &[(a, 0.9), (c, 0.6)]), list(1, &[(a, 0.8), (b, 0.7)])], &policy, None)
        .map_err(|e| e.to_string())?;
    let ids: Vec<usize> = two.assignments().map(|(_, h)| h.gallery_id).collect();
    let audit: Vec<_> = two.audit.iter().map(|x| (x.round, x.answer_id, x.winner, x.loser)).collect();
    if ids != [a, b] || audit != [(1, a, 0, 1)] || (two.audit[0].delta_s - 0.1).abs() > 1e-6 {
        return Err(format!("two-query fixture: assignments {ids:?}, audit {:?}", two.audit));
    }

    let cascade = resolve(
        &[
            list(1, &[(a, 0.9), (c, 0.4)]),
            list(2, &[(a, 0.8), (b, 0.7), (e, 0.6)]),
            list(3, &[(b, 0.75), (d, 0.5)]),
        ],
        &policy,
        None,
    )
    .map_err(|e| e.to_string())?;
    let ids: Vec<usize> = cascade.assignments().map(|(_, h)| h.gallery_id).collect();
    let audit: Vec<_> = cascade.audit.iter().map(|x| (x.round, x.answer_id, x.winner, x.loser)).collect();
    let deltas: Vec<f64> = cascade.audit.iter().map(|x| x.delta_s).collect();
    let ok = ids == [a, e, b]
        && audit == [(1, a, 1, 2), (2, b, 3, 2)]
        && (deltas[0] - 0.1).abs() < 1e-6
        && (deltas[1] - 0.05).abs() < 1e-6;
    check(
        ok,
        format!("two-query: q2 -> B (ds 0.1); cascade assignments {ids:?}, ds {deltas:.3?}"),
    )
}

/// Default policy (depth 1, round cap = list length) over 30 benchmark-style
/// runs; runs where some list ran out are excluded.
fn sca_uniqueness() -> Outcome {
    let mut distinct_runs = 0;
    let mut exhausted_runs = 0;
    let mut repeated = Vec::new();
    for seed in 1..=30u64 {
        let cfg = SynthConfig {
            seed,
            n_identities: 16 + (seed as usize % 5) * 12,
            ..benchmark()
        };
        let data = synthesize(&cfg).map_err(|e| e.to_string())?;
        let sims = similarity_matrix(&data.queries, &data.gallery).map_err(|e| e.to_string())?;
        let lists = top_k(&sims, 10).map_err(|e| e.to_string())?;
        let res = resolve(&lists, &ResolutionPolicy::default(), None).map_err(|e| e.to_string())?;
        if !res.unresolved.is_empty() {
            exhausted_runs += 1;
            continue;
        }
        let conflict = res.conflict_set();
        let answers: Vec<usize> = res
            .assignments()
            .filter(|(q, _)| conflict.contains(q))
            .map(|(_, h)| h.gallery_id)
            .collect();
        let mut distinct = answers.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() == answers.len() {
            distinct_runs += 1;
        } else {
            repeated.push(format!("seed {seed} (stopped at round cap {})", res.rounds));
        }
    }
    let detail = format!(
        "{distinct_runs} runs distinct, {exhausted_runs} with exhaustion excluded, {} with repeats{}{}",
        repeated.len(),
        if repeated.is_empty() { "" } else { ": " },
        repeated.join(", ")
    );
    check(repeated.is_empty() && distinct_runs > 0, detail)
}

fn sca_gain() -> Outcome {
    let start = Instant::now();
    let data = synthesize(&benchmark()).map_err(|e| e.to_string())?;
    let gt = gt_map(&data.ground_truth);
    let sims = similarity_matrix(&data.queries, &data.gallery).map_err(|e| e.to_string())?;
    let lists = top_k(&sims, 10).map_err(|e| e.to_string())?;
    let res = resolve(&lists, &ResolutionPolicy::default(), None).map_err(|e| e.to_string())?;
    let before = recall1(&lists, &gt);
    let after = recall1(&res.lists, &gt);
    let delta = after - before;
    within(start.elapsed(), 5.0)?;
    let detail = format!(
        "R@1 {:.2} -> {:.2} (delta {:+.4}, frozen {:+.4})",
        100.0 * before,
        100.0 * after,
        delta,
        FROZEN_SCA_GAIN
    );
    check(after > before && (delta - FROZEN_SCA_GAIN).abs() < 1e-12, detail)
}

fn sca_vs_optimal() -> Outcome {
    let mut not_worse = 0;
    let mut bounded = 0;
    for seed in 0..30u64 {
        let n = 4 + (seed as usize % 9);
        let cfg = SynthConfig {
            seed: 100 + seed,
            n_identities: n,
            dim: 8,
            ..benchmark()
        };
        let data = synthesize(&cfg).map_err(|e| e.to_string())?;
        let gt = gt_map(&data.ground_truth);
        let sims = similarity_matrix(&data.queries, &data.gallery).map_err(|e| e.to_string())?;
        let lists = top_k(&sims, n).map_err(|e| e.to_string())?;
        let res = resolve(&lists, &ResolutionPolicy::default(), None).map_err(|e| e.to_string())?;
        let best = assignment_oracle(&sims, AssignmentMode::Exhaustive).map_err(|e| e.to_string())?;
        if res.unresolved.is_empty() {
            let total: f64 = res.assignments().map(|(_, h)| f64::from(h.score)).sum();
            if total > best.total + 1e-6 {
                return Err(format!("seed {seed}: total {total} above optimum {}", best.total));
            }
            bounded += 1;
        }
        if recall1(&res.lists, &gt) >= recall1(&lists, &gt) {
            not_worse += 1;
        }
    }
    let fraction = not_worse as f64 / 30.0;
    check(
        bounded == 30 && fraction >= FROZEN_SCA_MAJORITY,
        format!(
            "{bounded}/30 within optimum, R@1 not lowered on {not_worse}/30 ({fraction:.3}, frozen floor {FROZEN_SCA_MAJORITY:.3})"
        ),
    )
}

fn held_out_recall(
    queries: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
    held_out: &[usize],
    gt: &[usize],
) -> f64 {
    let q = queries.select_rows(held_out);
    let sims = similarity_matrix(&q, gallery).unwrap();
    let lists = top_k(&sims, 1).unwrap();
    let local: BTreeMap<usize, usize> = held_out.iter().enumerate().map(|(i, &h)| (i, gt[h])).collect();
    recall1(&lists, &local)
}

fn adapter_training() -> Outcome {
    let data = synthesize(&benchmark()).map_err(|e| e.to_string())?;
    let n = data.ground_truth.len();
    let train: Vec<(usize, usize)> = (0..n).step_by(2).map(|q| (q, data.ground_truth[q])).collect();
    let held_out: Vec<usize> = (1..n).step_by(2).collect();
    let cfg = TrainConfig::default();
    let outcome = train_adapter(&data.queries, &data.gallery, &train, &cfg).map_err(|e| e.to_string())?;
    let first = outcome.trace.first().unwrap().loss.total;
    let last = outcome.trace.last().unwrap().loss.total;

    let identity = held_out_recall(&data.queries, &data.gallery, &held_out, &data.ground_truth);
    let q = apply_adapter(&data.queries, &outcome.params, Side::Text).map_err(|e| e.to_string())?;
    let g = apply_adapter(&data.gallery, &outcome.params, Side::Image).map_err(|e| e.to_string())?;
    let adapted = held_out_recall(&q, &g, &held_out, &data.ground_truth);
    check(
        last < first && adapted >= identity,
        format!(
            "total loss {first:.6} -> {last:.6}, held-out R@1 identity {:.2} adapted {:.2}",
            100.0 * identity,
            100.0 * adapted
        ),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let argv: Vec<String> = std::iter::once("tpas").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    match tpas::cli::run(&argv, &mut out, &mut err) {
        0 => Ok(()),
        code => Err(format!("{args:?} exited {code}: {}", String::from_utf8_lossy(&err))),
    }
}

fn pipeline(root: &Path) -> Result<(), String> {
    let p = |name: &str| root.join(name).to_string_lossy().into_owned();
    run_cli(&["gen-synth", "--seed", "7", "--out", &p("data")])?;
    run_cli(&["search", "--manifest", &p("data"), "--out", &p("ranked.tsv")])?;
    run_cli(&["resolve", "--input", &p("ranked.tsv"), "--out", &p("resolved.tsv"), "--audit", &p("audit.tsv")])?;
    run_cli(&["eval", "--ranked", &p("resolved.tsv"), "--manifest", &p("data"), "--out", &p("report.toml")])?;
    run_cli(&[
        "train-adapter", "--manifest", &p("data"), "--seed", "7", "--epochs", "2",
        "--out", &p("params.bin"), "--trace", &p("trace.tsv"),
    ])
}

fn metric_sanity() -> Outcome {
    let ks = [1, 2, 5, 10, 20];
    for seed in 0..10u64 {
        let data = synthesize(&SynthConfig { seed, ..benchmark() }).map_err(|e| e.to_string())?;
        let sims = similarity_matrix(&data.queries, &data.gallery).map_err(|e| e.to_string())?;
        let lists = top_k(&sims, 20).map_err(|e| e.to_string())?;
        let resolved = resolve(&lists, &ResolutionPolicy::default(), None).map_err(|e| e.to_string())?;
        for run in [&lists, &resolved.lists] {
            let report = recall_at_k(run, &gt_map(&data.ground_truth), &ks, "sanity", RunEcho::default())
                .map_err(|e| e.to_string())?;
            if report.recall.windows(2).any(|w| w[1].recall < w[0].recall) {
                return Err(format!("seed {seed}: recall decreases in k"));
            }
        }
    }

    let clean = synthesize(&SynthConfig { noise_sigma: 0.0, ..benchmark() }).map_err(|e| e.to_string())?;
    let sims = similarity_matrix(&clean.queries, &clean.gallery).map_err(|e| e.to_string())?;
    let r1 = recall1(&top_k(&sims, 1).map_err(|e| e.to_string())?, &gt_map(&clean.ground_truth));
    if r1 != 1.0 {
        return Err(format!("zero-noise R@1 {r1}"));
    }

    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let files = [
        "data/manifest.toml", "data/synth.toml", "data/queries.f32", "data/gallery.f32",
        "ranked.tsv", "resolved.tsv", "audit.tsv", "report.toml", "params.bin", "trace.tsv",
    ];
    for f in files {
        if std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok() {
            return Err(format!("{f} differs between identical runs"));
        }
    }
    Ok(format!(
        "recall monotone over 20 runs, zero-noise R@1 = 1.0, {} pipeline files byte-identical",
        files.len()
    ))
}

fn main() {
    let criteria: [(&str, Criterion); 9] = [
        ("oracle_equivalence", oracle_equivalence),
        ("gradient_suite", gradient_suite),
        ("closed_form_losses", closed_form_losses),
        ("sca_hand_trace", sca_hand_trace),
        ("sca_uniqueness", sca_uniqueness),
        ("sca_gain", sca_gain),
        ("sca_vs_optimal", sca_vs_optimal),
        ("adapter_training", adapter_training),
        ("metric_sanity", metric_sanity),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
