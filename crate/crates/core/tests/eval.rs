mod common;

use std::collections::BTreeMap;

use common::{brute_force_recall, rng, tied_scores};
use tpas::eval::{compare_reports, recall_at_k, RunEcho};
use tpas::similarity::{top_k, SimilarityMatrix};

#[test]
fn recall_matches_brute_force_rescan() {
    let mut r = rng(21);
    for (rows, cols) in [(10, 10), (30, 50), (64, 64)] {
        let flat = tied_scores(&mut r, rows, cols, 8);
        let scores: Vec<Vec<f32>> = flat.chunks(cols).map(<[f32]>::to_vec).collect();
        let gt: Vec<usize> = (0..rows).map(|q| (q * 7 + 3) % cols).collect();
        let gt_map: BTreeMap<usize, usize> = gt.iter().copied().enumerate().collect();
        let sims = SimilarityMatrix::from_raw(rows, cols, flat).unwrap();
        let ks = [1, 5, 10];
        let lists = top_k(&sims, 10).unwrap();
        let report = recall_at_k(&lists, &gt_map, &ks, "grid", RunEcho::default()).unwrap();
        let mut last = 0.0;
        for k in ks {
            let got = report.recall_at(k).unwrap();
            assert_eq!(got, brute_force_recall(&scores, &gt, k), "k={k}");
            assert!(got >= last);
            last = got;
        }
    }
}

#[test]
fn unsorted_ks_are_reported_in_order() {
    let sims = SimilarityMatrix::from_rows(&[vec![0.9, 0.1, 0.5], vec![0.2, 0.3, 0.1]]).unwrap();
    let lists = top_k(&sims, 3).unwrap();
    let gt = BTreeMap::from([(0, 2), (1, 1)]);
    let report = recall_at_k(&lists, &gt, &[3, 1, 2, 1], "tiny", RunEcho::default()).unwrap();
    assert_eq!(report.k_values, vec![1, 2, 3]);
    assert_eq!(report.recall_at(1), Some(0.5));
    assert_eq!(report.recall_at(2), Some(1.0));
    let delta = compare_reports(&report, &report).unwrap();
    assert!(!delta.has_regression());
}
