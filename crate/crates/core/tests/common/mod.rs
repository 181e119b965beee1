//! Independent oracles shared by the integration tests. None of these call
//! into the code path they check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tpas::objective::{AdapterParams, Batch};

/// Central finite difference of `f` at `x` for every coordinate.
pub fn central_difference<F>(x: &[f64], eps: f64, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let plus = f(&probe);
            probe[i] = orig - eps;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or the absolute difference when both
/// are below `floor`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < floor {
        diff
    } else {
        diff / scale
    }
}

/// Splits a flattened parameter vector into named groups.
pub fn param_groups(dim: usize) -> Vec<(&'static str, std::ops::Range<usize>)> {
    let n = dim * dim;
    vec![
        ("w_text", 0..n),
        ("w_image", n..2 * n),
        ("match_scale", 2 * n..2 * n + 1),
        ("match_bias", 2 * n + 1..2 * n + 2),
        ("temperature", 2 * n + 2..2 * n + 3),
    ]
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Batch {
    let mut rows = || -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect()
    };
    let images = rows();
    let texts = rows();
    Batch::from_rows(&images, &texts).unwrap()
}

/// Identity plus noise, with a random match head and temperature.
pub fn random_params(rng: &mut ChaCha8Rng, d: usize) -> AdapterParams {
    let mut p = AdapterParams::identity(d);
    for w in p.w_text.iter_mut().chain(p.w_image.iter_mut()) {
        *w += 0.3 * rng.sample::<f64, _>(StandardNormal);
    }
    p.match_scale = rng.random_range(1.0..8.0);
    p.match_bias = rng.random_range(-2.0..2.0);
    p.temperature = rng.random_range(0.3..1.5);
    p
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Top-k by sorting every gallery index: score descending, then id.
pub fn full_sort_top_k(scores: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Best one-to-one assignment of rows to distinct columns by enumerating
/// every injective map. Exponential; keep instances small.
pub fn brute_force_assignment(sims: &[Vec<f64>]) -> (Vec<usize>, f64) {
    fn go(
        row: usize,
        sims: &[Vec<f64>],
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        score: f64,
        best: &mut (Vec<usize>, f64),
    ) {
        if row == sims.len() {
            if score > best.1 {
                *best = (current.clone(), score);
            }
            return;
        }
        for col in 0..used.len() {
            if !used[col] {
                used[col] = true;
                current.push(col);
                go(row + 1, sims, used, current, score + sims[row][col], best);
                current.pop();
                used[col] = false;
            }
        }
    }
    let cols = sims.first().map_or(0, Vec::len);
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    go(0, sims, &mut vec![false; cols], &mut Vec::new(), 0.0, &mut best);
    best
}

/// Recall@k by rescanning raw scores: a query hits when fewer than `k`
/// gallery items outrank its relevant item (score, then lower id).
pub fn brute_force_recall(scores: &[Vec<f32>], ground_truth: &[usize], k: usize) -> f64 {
    let hits = scores
        .iter()
        .zip(ground_truth)
        .filter(|(row, &gt)| {
            let target = row[gt];
            let better = row
                .iter()
                .enumerate()
                .filter(|&(j, &s)| s > target || (s == target && j < gt))
                .count();
            better < k
        })
        .count();
    hits as f64 / scores.len() as f64
}

/// Rows drawn from a standard normal and scaled to unit length in f64.
pub fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| (x / norm) as f32).collect()
        })
        .collect()
}

/// Scores on a coarse grid so that many ties occur.
pub fn tied_scores(rng: &mut ChaCha8Rng, rows: usize, cols: usize, levels: u32) -> Vec<f32> {
    (0..rows * cols)
        .map(|_| rng.random_range(0..levels) as f32 / levels as f32)
        .collect()
}

/// Plain re-statement of the collision rule on depth-1 lists of
/// `(gallery_id, score)`: every round, each answer held by several queries
/// stays with the highest score (lower query index on ties) and the others
/// step to their next entry. Returns the final 0-based position per query
/// and whether any loser ran out of entries.
pub fn reference_collisions(lists: &[Vec<(usize, f32)>], max_rounds: usize) -> (Vec<usize>, bool) {
    let mut pos = vec![0usize; lists.len()];
    let mut stuck = vec![false; lists.len()];
    for _ in 0..max_rounds {
        let mut holders: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (q, list) in lists.iter().enumerate() {
            holders.entry(list[pos[q]].0).or_default().push(q);
        }
        let mut any_conflict = false;
        let mut moved = false;
        for qs in holders.values().filter(|qs| qs.len() > 1) {
            any_conflict = true;
            let mut best = qs[0];
            for &q in &qs[1..] {
                if lists[q][pos[q]].1 > lists[best][pos[best]].1 {
                    best = q;
                }
            }
            for &q in qs.iter().filter(|&&q| q != best) {
                if pos[q] + 1 < lists[q].len() {
                    pos[q] += 1;
                    moved = true;
                } else {
                    stuck[q] = true;
                }
            }
        }
        if !any_conflict || !moved {
            break;
        }
    }
    (pos, stuck.iter().any(|&s| s))
}
