//! Compare greedy collision resolution with the optimal one-to-one assignment.

use tpas::assignment::{assignment_oracle, AssignmentMode};
use tpas::sca::{resolve, ResolutionPolicy};
use tpas::similarity::{similarity_matrix, top_k};
use tpas::store::{synthesize, SynthConfig};

fn main() -> tpas::Result<()> {
    let cfg = SynthConfig {
        n_identities: 10,
        dim: 8,
        ..SynthConfig::default()
    };
    let data = synthesize(&cfg)?;
    let sims = similarity_matrix(&data.queries, &data.gallery)?;
    let res = resolve(&top_k(&sims, 10)?, &ResolutionPolicy::default(), None)?;
    let greedy: f64 = res.assignments().map(|(_, h)| f64::from(h.score)).sum();

    for mode in [AssignmentMode::Exhaustive, AssignmentMode::Hungarian] {
        let best = assignment_oracle(&sims, mode)?;
        println!("{mode:?}: total {:.6} {:?}", best.total, best.gallery_for_query);
    }
    let assigned: Vec<usize> = res.assignments().map(|(_, h)| h.gallery_id).collect();
    println!("resolved: total {greedy:.6} {assigned:?}");
    println!("ground truth:      {:?}", data.ground_truth);
    Ok(())
}
