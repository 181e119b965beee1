//! The `tpas` command line.
//!
//! Every stage reads and writes plain files, so each subcommand can be run
//! and checked on its own. Exit codes: 0 success, 1 usage error, 2 data
//! error.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::{compare_reports, recall_at_k, EvalReport, RunEcho};
use crate::objective::{
    apply_adapter, read_params, train_adapter, write_params, write_trace, Precision, Side,
    TrainConfig,
};
use crate::sca::{resolve, write_audit, ResolutionPolicy};
use crate::similarity::{read_ranked_lists, similarity_matrix, top_k, write_ranked_lists, Layout};
use crate::store::{
    generate_synthetic, load_manifest, load_normalized, validate_dataset, SynthConfig, MANIFEST_FILE,
};
use crate::text::Header;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tpas", version, about = "Cross-modal retrieval evaluation toolkit")]
pub struct Cli {
    /// Print progress details to stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic dataset directory.
    GenSynth(GenSynthArgs),
    /// Check a dataset manifest and its embedding files.
    Validate(ValidateArgs),
    /// Exact top-k retrieval for every query.
    Search(SearchArgs),
    /// Fit linear adapters on the dataset's ground-truth pairs.
    TrainAdapter(TrainArgs),
    /// Resolve answer collisions in a ranked-list file.
    Resolve(ResolveArgs),
    /// Recall@k of a ranked or resolved file.
    Eval(EvalArgs),
    /// Compare two eval reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long, default_value_t = 64)]
    pub identities: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.4)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub confusable: f64,
    #[arg(long, default_value_t = 0.02)]
    pub gap: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Manifest file or dataset directory.
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Params file from `train-adapter`.
    #[arg(long)]
    pub adapter: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Params file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss trace to write.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-5)]
    pub step_size: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_match: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Stored precision of the params file: 32 or 64.
    #[arg(long, default_value_t = 64)]
    pub precision: u8,
}

#[derive(Debug, Args)]
pub struct ResolveArgs {
    /// Ranked-list file from `search`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub audit: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Round cap per slot; defaults to the list length.
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Only treat a collision as a conflict when two member queries have
    /// text cosine above this value. Needs `--manifest`.
    #[arg(long, requires = "manifest")]
    pub gate: Option<f64>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ranked or resolved list file.
    #[arg(long)]
    pub ranked: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Recorded verbatim in the report; omitted when absent.
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub before: PathBuf,
    #[arg(long)]
    pub after: PathBuf,
    /// Also write the table to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "before")]
    pub before_label: String,
    #[arg(long, default_value = "after")]
    pub after_label: String,
}

/// Runs one command line and returns its exit code.
pub fn run<O: Write, E: Write>(argv: &[String], out: &mut O, err: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Entry point used by the `tpas` binary.
pub fn main_exit() -> i32 {
    let argv: Vec<String> = std::env::args().collect();
    run(&argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_) | Error::KOutOfRange { .. } | Error::KExceedsDepth { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn dispatch<O: Write, E: Write>(cli: &Cli, out: &mut O, err: &mut E) -> Result<()> {
    let log = |err: &mut E, msg: String| {
        if cli.verbose > 0 {
            let _ = writeln!(err, "{msg}");
        }
    };
    match &cli.command {
        Command::GenSynth(a) => {
            let cfg = SynthConfig {
                name: a.name.clone(),
                n_identities: a.identities,
                dim: a.dim,
                noise_sigma: a.sigma,
                confusable_fraction: a.confusable,
                confusable_gap: a.gap,
                seed: a.seed,
            };
            let manifest = generate_synthetic(&cfg, &a.out)?;
            let synth = toml::to_string(&cfg).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            fs::write(a.out.join("synth.toml"), synth)?;
            writeln!(
                out,
                "wrote {} ({} queries, {} gallery, dim {})",
                a.out.join(MANIFEST_FILE).display(),
                manifest.query_count,
                manifest.gallery_count,
                manifest.dim
            )?;
        }
        Command::Validate(a) => {
            let report = validate_dataset(&manifest_path(&a.manifest));
            write!(out, "{report}")?;
            if !report.passed() {
                return Err(Error::Parse {
                    path: a.manifest.clone(),
                    message: "dataset failed validation".into(),
                });
            }
        }
        Command::Search(a) => {
            let manifest = load_manifest(&manifest_path(&a.manifest))?;
            let (mut queries, mut gallery) = load_normalized(&manifest)?;
            let mut header = Header::new()
                .with("dataset", &manifest.name)
                .with("seed", seed_text(manifest.seed))
                .with("k", a.k);
            match &a.adapter {
                Some(path) => {
                    let (params, config) = read_params(path)?;
                    queries = apply_adapter(&queries, &params, Side::Text)?;
                    gallery = apply_adapter(&gallery, &params, Side::Image)?;
                    header.set("adapter", path.display());
                    if let Ok(train) = toml::from_str::<TrainConfig>(&config) {
                        header.set("temperature", train.temperature);
                        header.set("lambda_match", train.lambda_match);
                        header.set("train_seed", train.seed);
                    }
                }
                None => {
                    header.set("adapter", "none");
                }
            }
            log(err, format!("scoring {} x {}", queries.rows(), gallery.rows()));
            let sims = similarity_matrix(&queries, &gallery)?;
            let lists = top_k(&sims, a.k)?;
            let w = BufWriter::new(File::create(&a.out)?);
            write_ranked_lists(w, &header, &lists, Layout::Ranked)?;
            writeln!(out, "wrote {} ({} queries, k={})", a.out.display(), lists.len(), a.k)?;
        }
        Command::TrainAdapter(a) => {
            let manifest = load_manifest(&manifest_path(&a.manifest))?;
            let (queries, gallery) = load_normalized(&manifest)?;
            let cfg = TrainConfig {
                epochs: a.epochs,
                batch_size: a.batch_size,
                step_size: a.step_size,
                weight_decay: a.weight_decay,
                lambda_match: a.lambda_match,
                temperature: a.temperature,
                seed: a.seed,
            };
            let precision = match a.precision {
                32 => Precision::F32,
                64 => Precision::F64,
                p => return Err(Error::InvalidConfig(format!("precision must be 32 or 64, got {p}"))),
            };
            let pairs: Vec<(usize, usize)> = manifest.ground_truth.iter().map(|(&q, &g)| (q, g)).collect();
            log(err, format!("training on {} pairs", pairs.len()));
            let outcome = train_adapter(&queries, &gallery, &pairs, &cfg)?;
            write_params(&a.out, &outcome.params, precision, &cfg.to_toml())?;
            let mut header = Header::new().with("dataset", &manifest.name);
            header.extend(&cfg.to_header());
            write_trace(BufWriter::new(File::create(&a.trace)?), &header, &outcome.trace)?;
            let first = outcome.trace.first().map(|e| e.loss.total).unwrap_or(f64::NAN);
            let last = outcome.trace.last().map(|e| e.loss.total).unwrap_or(f64::NAN);
            writeln!(out, "wrote {} (total loss {first:.6} -> {last:.6})", a.out.display())?;
        }
        Command::Resolve(a) => {
            let (mut header, lists) = read_ranked_lists(BufReader::new(open(&a.input)?))?;
            let policy = ResolutionPolicy {
                depth: a.depth,
                max_rounds: a.max_rounds,
                similarity_gate: a.gate,
            };
            let texts = match (&a.manifest, a.gate) {
                (Some(m), Some(_)) => Some(load_normalized(&load_manifest(&manifest_path(m))?)?.0),
                _ => None,
            };
            let resolution = resolve(&lists, &policy, texts.as_ref())?;
            let depth = lists.iter().map(|l| l.len()).max().unwrap_or(0);
            header.extend(&policy.to_header(depth));
            write_ranked_lists(BufWriter::new(File::create(&a.out)?), &header, &resolution.lists, Layout::Resolved)?;
            write_audit(BufWriter::new(File::create(&a.audit)?), &resolution.audit)?;
            log(err, format!("{} rounds, converged={}", resolution.rounds, resolution.converged));
            writeln!(
                out,
                "wrote {} ({} audit entries, {} unresolved)",
                a.out.display(),
                resolution.audit.len(),
                resolution.unresolved.len()
            )?;
        }
        Command::Eval(a) => {
            let (header, lists) = read_ranked_lists(BufReader::new(open(&a.ranked)?))?;
            let manifest = load_manifest(&manifest_path(&a.manifest))?;
            let mut echo = RunEcho::from_header(&header);
            if echo.seed.is_none() {
                echo.seed = manifest.seed;
            }
            let mut report = recall_at_k(&lists, &manifest.ground_truth, &a.ks, &manifest.name, echo)?;
            report.timestamp = a.timestamp.clone();
            report.write(&a.out)?;
            write!(out, "{report}")?;
        }
        Command::Report(a) => {
            let before = EvalReport::read(&a.before)?;
            let after = EvalReport::read(&a.after)?;
            let delta = compare_reports(&before, &after)?.with_labels(&a.before_label, &a.after_label);
            let table = delta.render_table();
            if let Some(path) = &a.out {
                fs::write(path, &table)?;
            }
            write!(out, "{table}")?;
        }
    }
    Ok(())
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

fn open(path: &Path) -> Result<File> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(File::open(path)?)
}

fn seed_text(seed: Option<u64>) -> String {
    seed.map_or_else(|| "none".to_string(), |s| s.to_string())
}
