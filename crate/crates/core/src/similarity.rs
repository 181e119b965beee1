//! Exact cosine similarity and deterministic top-k retrieval.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::EmbeddingMatrix;
use crate::text::{fmt_sig9, parse_field, Header};

/// Dense `n_queries x n_gallery` matrix of float32 scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl SimilarityMatrix {
    pub fn from_raw(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch {
                left: data.len(),
                right: rows * cols,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidConfig("ragged similarity rows".into()));
        }
        Self::from_raw(rows.len(), cols, rows.concat())
    }

    pub fn n_queries(&self) -> usize {
        self.rows
    }

    pub fn n_gallery(&self) -> usize {
        self.cols
    }

    pub fn get(&self, query: usize, gallery: usize) -> f32 {
        self.data[query * self.cols + gallery]
    }

    pub fn row(&self, query: usize) -> &[f32] {
        &self.data[query * self.cols..(query + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }
}

/// Dot product of two float32 rows, accumulated left to right in f64.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (&x, &y)| acc + f64::from(x) * f64::from(y))
}

/// Cosine similarity of every query against every gallery row. Both inputs
/// must already be L2-normalized, so each entry is a plain dot product.
pub fn similarity_matrix(
    queries: &EmbeddingMatrix,
    gallery: &EmbeddingMatrix,
) -> Result<SimilarityMatrix> {
    if queries.dim() != gallery.dim() {
        return Err(Error::DimMismatch {
            left: queries.dim(),
            right: gallery.dim(),
        });
    }
    if !queries.is_normalized() {
        return Err(Error::NotNormalized("query"));
    }
    if !gallery.is_normalized() {
        return Err(Error::NotNormalized("gallery"));
    }
    let cols = gallery.rows();
    let mut data = vec![0.0f32; queries.rows() * cols];
    if cols > 0 {
        data.par_chunks_mut(cols)
            .zip(queries.as_slice().par_chunks(queries.dim()))
            .for_each(|(out, q)| {
                for (slot, g) in out.iter_mut().zip(gallery.iter_rows()) {
                    *slot = dot(q, g) as f32;
                }
            });
    }
    Ok(SimilarityMatrix {
        rows: queries.rows(),
        cols,
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub gallery_id: usize,
    pub score: f32,
    /// 1-based rank of this hit in the original retrieval. Equal to the
    /// position for plain search output; differs after conflict resolution.
    pub source_rank: usize,
}

/// Retrieved gallery items for one query, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query_id: usize,
    pub entries: Vec<Hit>,
}

impl RankedList {
    /// Builds a list from `(gallery_id, score)` pairs in rank order.
    pub fn new(query_id: usize, entries: &[(usize, f32)]) -> Result<Self> {
        let list = Self {
            query_id,
            entries: entries
                .iter()
                .enumerate()
                .map(|(i, &(gallery_id, score))| Hit {
                    gallery_id,
                    score,
                    source_rank: i + 1,
                })
                .collect(),
        };
        list.check()?;
        Ok(list)
    }

    /// Non-empty with distinct gallery ids and finite scores.
    pub fn check(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::EmptyList(self.query_id));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for hit in &self.entries {
            if !seen.insert(hit.gallery_id) {
                return Err(Error::InvalidConfig(format!(
                    "query {} lists gallery {} twice",
                    self.query_id, hit.gallery_id
                )));
            }
            if !hit.score.is_finite() {
                return Err(Error::NonFinite(format!("score for query {}", self.query_id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.entries.iter().map(|h| h.gallery_id).collect()
    }

    pub fn is_score_sorted(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].score >= w[1].score)
    }

    /// 1-based position of `gallery_id`, if present.
    pub fn position_of(&self, gallery_id: usize) -> Option<usize> {
        self.entries
            .iter()
            .position(|h| h.gallery_id == gallery_id)
            .map(|p| p + 1)
    }
}

/// Ranking order: higher score first, then lower gallery id.
#[inline]
pub fn rank_order(scores: &[f32], a: usize, b: usize) -> Ordering {
    scores[b]
        .partial_cmp(&scores[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

fn top_k_row(scores: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(scores, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    idx
}

/// The `k` best gallery items for every query, ties broken by lower id.
pub fn top_k(sims: &SimilarityMatrix, k: usize) -> Result<Vec<RankedList>> {
    if k == 0 || k > sims.cols {
        return Err(Error::KOutOfRange { k, max: sims.cols });
    }
    Ok((0..sims.rows)
        .into_par_iter()
        .map(|q| {
            let scores = sims.row(q);
            let entries = top_k_row(scores, k)
                .into_iter()
                .enumerate()
                .map(|(i, g)| Hit {
                    gallery_id: g,
                    score: scores[g],
                    source_rank: i + 1,
                })
                .collect();
            RankedList { query_id: q, entries }
        })
        .collect())
}

/// Column layout of a ranked-list file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `query_id rank gallery_id score`
    Ranked,
    /// `query_id rank gallery_id score source_rank`
    Resolved,
}

/// Writes lists as tab-separated rows, ranks starting at 1, scores with 9
/// significant digits, preceded by the header's comment lines.
pub fn write_ranked_lists<W: Write>(
    mut w: W,
    header: &Header,
    lists: &[RankedList],
    layout: Layout,
) -> Result<()> {
    w.write_all(header.render().as_bytes())?;
    for list in lists {
        for (i, hit) in list.entries.iter().enumerate() {
            write!(
                w,
                "{}\t{}\t{}\t{}",
                list.query_id,
                i + 1,
                hit.gallery_id,
                fmt_sig9(f64::from(hit.score))
            )?;
            if layout == Layout::Resolved {
                write!(w, "\t{}", hit.source_rank)?;
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parses a ranked-list file with either layout. Rows for one query must be
/// contiguous with ranks 1, 2, ...; a missing `source_rank` column defaults
/// to the rank.
pub fn read_ranked_lists<R: BufRead>(r: R) -> Result<(Header, Vec<RankedList>)> {
    let mut header = Header::new();
    let mut lists: Vec<RankedList> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.starts_with('#') {
            header.parse_line(&line);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let query_id: usize = parse_field(cols.next(), lineno, "query_id")?;
        let rank: usize = parse_field(cols.next(), lineno, "rank")?;
        let gallery_id: usize = parse_field(cols.next(), lineno, "gallery_id")?;
        let score: f32 = parse_field(cols.next(), lineno, "score")?;
        let source_rank = match cols.next() {
            Some(raw) => parse_field(Some(raw), lineno, "source_rank")?,
            None => rank,
        };
        if cols.next().is_some() {
            return Err(Error::Format {
                line: lineno,
                message: "too many columns".into(),
            });
        }
        let hit = Hit {
            gallery_id,
            score,
            source_rank,
        };
        match lists.last_mut() {
            Some(list) if list.query_id == query_id => {
                if rank != list.entries.len() + 1 {
                    return Err(Error::Format {
                        line: lineno,
                        message: format!("expected rank {}, found {rank}", list.entries.len() + 1),
                    });
                }
                list.entries.push(hit);
            }
            _ => {
                if rank != 1 {
                    return Err(Error::Format {
                        line: lineno,
                        message: format!("list for query {query_id} must start at rank 1"),
                    });
                }
                if lists.iter().any(|l| l.query_id == query_id) {
                    return Err(Error::Format {
                        line: lineno,
                        message: format!("rows for query {query_id} are not contiguous"),
                    });
                }
                lists.push(RankedList {
                    query_id,
                    entries: vec![hit],
                });
            }
        }
    }
    for list in &lists {
        list.check()?;
    }
    Ok((header, lists))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(rows: &[Vec<f32>]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap().into_normalized().unwrap()
    }

    #[test]
    fn orthonormal_basis() {
        let q = unit(&[vec![1.0, 0.0]]);
        let g = unit(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let s = similarity_matrix(&q, &g).unwrap();
        assert_eq!(s.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn hand_dot_product() {
        let q = unit(&[vec![0.6, 0.8]]);
        let g = unit(&[vec![0.8, 0.6]]);
        let s = similarity_matrix(&q, &g).unwrap();
        assert!((s.get(0, 0) - 0.96).abs() < 1e-7);
    }

    #[test]
    fn rejects_unnormalized_and_mismatched() {
        let raw = EmbeddingMatrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let g = unit(&[vec![1.0, 0.0]]);
        assert!(matches!(similarity_matrix(&raw, &g), Err(Error::NotNormalized("query"))));
        assert!(matches!(similarity_matrix(&g, &raw), Err(Error::NotNormalized("gallery"))));
        let g3 = unit(&[vec![1.0, 0.0, 0.0]]);
        assert!(matches!(similarity_matrix(&g, &g3), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn tie_break_prefers_lower_id() {
        let s = SimilarityMatrix::from_rows(&[vec![0.2, 0.9, 0.9, 0.1]]).unwrap();
        let lists = top_k(&s, 2).unwrap();
        assert_eq!(lists[0].ids(), vec![1, 2]);
        let full = top_k(&s, 4).unwrap();
        assert_eq!(full[0].ids(), vec![1, 2, 0, 3]);
    }

    #[test]
    fn k_bounds() {
        let s = SimilarityMatrix::from_rows(&[vec![0.2, 0.9]]).unwrap();
        assert!(matches!(top_k(&s, 0), Err(Error::KOutOfRange { k: 0, max: 2 })));
        assert!(matches!(top_k(&s, 3), Err(Error::KOutOfRange { k: 3, max: 2 })));
    }

    #[test]
    fn file_round_trip() {
        let s = SimilarityMatrix::from_rows(&[vec![0.3, 0.7, 0.1], vec![0.96, -0.5, 0.2]]).unwrap();
        let lists = top_k(&s, 3).unwrap();
        let header = Header::new().with("k", 3);
        let mut buf = Vec::new();
        write_ranked_lists(&mut buf, &header, &lists, Layout::Ranked).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("1\t1\t0\t0.959999979\n"), "{text}");
        let (h, back) = read_ranked_lists(&buf[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, lists);
    }

    #[test]
    fn reader_rejects_gaps() {
        let bad = "0\t1\t3\t0.5\n0\t3\t4\t0.4\n";
        assert!(matches!(read_ranked_lists(bad.as_bytes()), Err(Error::Format { line: 2, .. })));
        let split = "0\t1\t3\t0.5\n1\t1\t4\t0.4\n0\t1\t5\t0.4\n";
        assert!(read_ranked_lists(split.as_bytes()).is_err());
    }
}
