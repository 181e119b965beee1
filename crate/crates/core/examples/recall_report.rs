//! Recall@k for hand-written ranked lists and a before/after table.

use std::collections::BTreeMap;

use tpas::eval::{compare_reports, recall_at_k, RunEcho};
use tpas::similarity::RankedList;

fn main() -> tpas::Result<()> {
    // The relevant item (id 9) sits at ranks 1, 3, 7 and 2.
    let place = |q: usize, rank: usize| {
        let entries: Vec<(usize, f32)> = (1..=10)
            .map(|r| (if r == rank { 9 } else { 10 + r }, 1.0 - r as f32 / 10.0))
            .collect();
        RankedList::new(q, &entries)
    };
    let lists = vec![place(0, 1)?, place(1, 3)?, place(2, 7)?, place(3, 2)?];
    let gt: BTreeMap<usize, usize> = (0..4).map(|q| (q, 9)).collect();
    let before = recall_at_k(&lists, &gt, &[1, 5, 10], "toy", RunEcho::default())?;
    print!("{before}");
    println!("{}", before.to_toml());

    let improved = vec![place(0, 1)?, place(1, 1)?, place(2, 7)?, place(3, 2)?];
    let after = recall_at_k(&improved, &gt, &[1, 5, 10], "toy", RunEcho::default())?;
    print!("{}", compare_reports(&before, &after)?.render_table());
    Ok(())
}
