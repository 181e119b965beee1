//! Resolve answer collisions on the confusable benchmark and show the audit.

use tpas::eval::{compare_reports, recall_at_k, RunEcho};
use tpas::sca::{resolve, write_audit, ResolutionPolicy};
use tpas::similarity::{similarity_matrix, top_k};
use tpas::store::{synthesize, SynthConfig};

fn main() -> tpas::Result<()> {
    let data = synthesize(&SynthConfig::default())?;
    let gt = data.ground_truth.iter().copied().enumerate().collect();
    let sims = similarity_matrix(&data.queries, &data.gallery)?;
    let lists = top_k(&sims, 10)?;

    let policy = ResolutionPolicy::default();
    let res = resolve(&lists, &policy, None)?;
    println!(
        "policy {policy}: {} rounds, {} audit entries, {} unresolved, converged {}",
        res.rounds,
        res.audit.len(),
        res.unresolved.len(),
        res.converged
    );
    println!("first audit rows (round answer winner loser delta_s):");
    write_audit(std::io::stdout().lock(), &res.audit[..res.audit.len().min(5)])?;

    let ks = [1, 5, 10];
    let before = recall_at_k(&lists, &gt, &ks, "synthetic", RunEcho::default())?;
    let after = recall_at_k(&res.lists, &gt, &ks, "synthetic", RunEcho::default())?;
    print!("{}", compare_reports(&before, &after)?.with_labels("top-k", "resolved").render_table());
    Ok(())
}
