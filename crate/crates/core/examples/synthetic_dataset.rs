//! Generate the seeded confusable benchmark, write it to disk and validate it.
//!
//!     cargo run --example synthetic_dataset -- /tmp/tpas-data

use std::path::PathBuf;

use tpas::store::{generate_synthetic, validate_dataset, SynthConfig, MANIFEST_FILE};

fn main() -> tpas::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("tpas-synthetic"));
    let cfg = SynthConfig::default();
    let manifest = generate_synthetic(&cfg, &out)?;
    println!(
        "{}: {} queries, {} gallery items, dim {}, seed {}",
        manifest.name, manifest.query_count, manifest.gallery_count, manifest.dim, cfg.seed
    );
    println!("{} planted near-duplicate pairs", cfg.confusable_pairs());
    print!("{}", validate_dataset(&out.join(MANIFEST_FILE)));
    Ok(())
}
