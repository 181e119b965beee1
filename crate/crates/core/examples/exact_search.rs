//! Exact cosine top-k over a synthetic dataset, written as a ranked-list file.

use tpas::similarity::{similarity_matrix, top_k, write_ranked_lists, Layout};
use tpas::store::{synthesize, SynthConfig};
use tpas::text::Header;

fn main() -> tpas::Result<()> {
    let cfg = SynthConfig {
        n_identities: 8,
        dim: 16,
        ..SynthConfig::default()
    };
    let data = synthesize(&cfg)?;
    let sims = similarity_matrix(&data.queries, &data.gallery)?;
    let lists = top_k(&sims, 3)?;
    for list in &lists {
        let relevant = data.ground_truth[list.query_id];
        println!(
            "query {:>2}: relevant {:>2} at rank {:?}",
            list.query_id,
            relevant,
            list.position_of(relevant)
        );
    }
    let header = Header::new().with("dataset", &cfg.name).with("seed", cfg.seed).with("k", 3);
    write_ranked_lists(std::io::stdout().lock(), &header, &lists[..2], Layout::Ranked)?;
    Ok(())
}
