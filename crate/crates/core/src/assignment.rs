//! Optimal one-to-one query-to-gallery assignment.
//!
//! Used as an upper bound for conflict resolution: any assignment with
//! distinct answers scores at most the optimum found here.

use crate::error::{Error, Result};
use crate::similarity::SimilarityMatrix;

/// Largest gallery size accepted by [`AssignmentMode::Exhaustive`].
pub const EXHAUSTIVE_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentMode {
    /// Exact search over every subset of gallery items (`O(n * 2^m)`).
    Exhaustive,
    /// Kuhn-Munkres with potentials (`O(n^2 m)`).
    Hungarian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalAssignment {
    /// Gallery id for every query, pairwise distinct.
    pub gallery_for_query: Vec<usize>,
    /// Sum of the assigned similarities.
    pub total: f64,
}

/// Assignment maximizing total similarity with each gallery item used at
/// most once. Requires `n_queries <= n_gallery`.
pub fn assignment_oracle(sims: &SimilarityMatrix, mode: AssignmentMode) -> Result<OptimalAssignment> {
    let (n, m) = (sims.n_queries(), sims.n_gallery());
    if n > m {
        return Err(Error::InvalidConfig(format!(
            "{n} queries cannot be assigned to {m} distinct gallery items"
        )));
    }
    let weight = |q: usize, g: usize| f64::from(sims.get(q, g));
    let gallery_for_query = match mode {
        AssignmentMode::Exhaustive => {
            if m > EXHAUSTIVE_LIMIT {
                return Err(Error::TooLarge {
                    rows: n,
                    cols: m,
                    limit: EXHAUSTIVE_LIMIT,
                });
            }
            subset_dp(n, m, weight)
        }
        AssignmentMode::Hungarian => hungarian(n, m, weight),
    };
    let total = gallery_for_query
        .iter()
        .enumerate()
        .map(|(q, &g)| weight(q, g))
        .sum();
    Ok(OptimalAssignment {
        gallery_for_query,
        total,
    })
}

/// `best[mask]`: best total for assigning the first `popcount(mask)` queries
/// to exactly the gallery items in `mask`.
fn subset_dp(n: usize, m: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let states = 1usize << m;
    let mut best = vec![f64::NEG_INFINITY; states];
    let mut choice = vec![usize::MAX; states];
    best[0] = 0.0;
    for mask in 0..states {
        let q = mask.count_ones() as usize;
        if q >= n || best[mask] == f64::NEG_INFINITY {
            continue;
        }
        for g in 0..m {
            if mask & (1 << g) != 0 {
                continue;
            }
            let next = mask | (1 << g);
            let value = best[mask] + weight(q, g);
            if value > best[next] {
                best[next] = value;
                choice[next] = g;
            }
        }
    }
    let mut end = (0..states)
        .filter(|s| s.count_ones() as usize == n)
        .max_by(|&a, &b| best[a].total_cmp(&best[b]).then(b.cmp(&a)))
        .expect("n <= m leaves at least one full state");
    let mut out = vec![0; n];
    for q in (0..n).rev() {
        let g = choice[end];
        out[q] = g;
        end &= !(1 << g);
    }
    out
}

/// Minimizes the negated weights with the shortest augmenting path form of
/// the Hungarian method. Rows are queries, columns gallery items.
fn hungarian(n: usize, m: usize, weight: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    // 1-based arrays; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut row_of_col = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[col0] = true;
            let r0 = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=m {
                if used[col] {
                    continue;
                }
                let cur = -weight(r0 - 1, col - 1) - u[r0] - v[col];
                if cur < minv[col] {
                    minv[col] = cur;
                    way[col] = col0;
                }
                if minv[col] < delta {
                    delta = minv[col];
                    col1 = col;
                }
            }
            for col in 0..=m {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            row_of_col[col0] = row_of_col[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for col in 1..=m {
        if row_of_col[col] != 0 {
            out[row_of_col[col] - 1] = col - 1;
        }
    }
    out
}
