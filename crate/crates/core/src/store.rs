//! Embedding datasets: manifests, raw float32 matrices, normalization,
//! validation and seeded synthetic generation.
//!
//! A dataset is a manifest (TOML) next to two headerless little-endian
//! float32 files holding the query (text) and gallery (image) embeddings in
//! row-major order. All shape metadata lives in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows with an L2 norm at or below this are rejected by normalization.
pub const ZERO_NORM_THRESHOLD: f64 = 1e-12;

/// Allowed deviation of a row norm from 1.0 for a matrix flagged normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-5;

/// File name of the manifest written by [`generate_synthetic`].
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Query,
    Gallery,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Query => f.write_str("query"),
            Split::Gallery => f.write_str("gallery"),
        }
    }
}

/// Row-major matrix of float32 embeddings, one row per query or gallery item.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Wraps raw row-major data. The result is flagged as not normalized.
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dim must be >= 1".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::DimMismatch {
                left: data.len(),
                right: rows * dim,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self {
            rows,
            dim,
            data,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimMismatch {
                left: bad.len(),
                right: dim,
            });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    /// Flags the matrix as normalized after checking every row norm is
    /// within [`UNIT_NORM_TOLERANCE`] of one.
    pub fn into_normalized(mut self) -> Result<Self> {
        for (row, norm) in self.row_norms().into_iter().enumerate() {
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(if norm <= ZERO_NORM_THRESHOLD {
                    Error::ZeroVector { row, norm }
                } else {
                    Error::NotNormalized("embedding")
                });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// L2 norm of every row, accumulated in f64.
    pub fn row_norms(&self) -> Vec<f64> {
        self.iter_rows().map(norm_f64).collect()
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            data,
            normalized: self.normalized,
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Decodes headerless little-endian float32 bytes.
    pub fn from_le_bytes(rows: usize, dim: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != rows * dim * 4 {
            return Err(Error::DimMismatch {
                left: bytes.len(),
                right: rows * dim * 4,
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(rows, dim, data)
    }
}

fn norm_f64(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// Scales every row to unit L2 norm and flags the result as normalized.
/// Idempotent up to float32 rounding.
pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(m.data.len());
    for (row, values) in m.iter_rows().enumerate() {
        let norm = norm_f64(values);
        if norm <= ZERO_NORM_THRESHOLD {
            return Err(Error::ZeroVector { row, norm });
        }
        data.extend(values.iter().map(|&v| (f64::from(v) / norm) as f32));
    }
    Ok(EmbeddingMatrix {
        rows: m.rows,
        dim: m.dim,
        data,
        normalized: true,
    })
}

pub fn write_embeddings(path: &Path, m: &EmbeddingMatrix) -> Result<()> {
    fs::write(path, m.to_le_bytes())?;
    Ok(())
}

pub fn read_embeddings(path: &Path, rows: usize, dim: usize) -> Result<EmbeddingMatrix> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let expected = (rows * dim * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected,
            actual: bytes.len() as u64,
        });
    }
    EmbeddingMatrix::from_le_bytes(rows, dim, &bytes)
}

/// On-disk manifest layout. Field order here is the serialized order.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    name: String,
    dim: usize,
    query_count: usize,
    gallery_count: usize,
    query_path: PathBuf,
    gallery_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    ground_truth: Vec<[usize; 2]>,
}

/// Validated description of an embedding dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub dim: usize,
    pub query_count: usize,
    pub gallery_count: usize,
    /// Paths as written in the manifest; relative paths resolve against
    /// `base_dir`.
    pub query_path: PathBuf,
    pub gallery_path: PathBuf,
    /// Relevant gallery id for every query id.
    pub ground_truth: BTreeMap<usize, usize>,
    /// Generator seed, present iff the dataset is synthetic.
    pub seed: Option<u64>,
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn path_for(&self, split: Split) -> PathBuf {
        let p = match split {
            Split::Query => &self.query_path,
            Split::Gallery => &self.gallery_path,
        };
        self.base_dir.join(p)
    }

    pub fn rows_for(&self, split: Split) -> usize {
        match split {
            Split::Query => self.query_count,
            Split::Gallery => self.gallery_count,
        }
    }

    /// Ground truth as a dense vector indexed by query id.
    pub fn ground_truth_vec(&self) -> Vec<usize> {
        self.ground_truth.values().copied().collect()
    }

    /// Checks shape and ground-truth invariants, without touching the disk.
    pub fn check_invariants(&self) -> Result<()> {
        if self.dim == 0 || self.query_count == 0 || self.gallery_count == 0 {
            return Err(Error::InvalidConfig(format!(
                "dim, query_count and gallery_count must be >= 1 (got {}, {}, {})",
                self.dim, self.query_count, self.gallery_count
            )));
        }
        for (&query, &gallery) in &self.ground_truth {
            if gallery >= self.gallery_count {
                return Err(Error::GroundTruthOutOfRange {
                    query,
                    gallery,
                    gallery_count: self.gallery_count,
                });
            }
        }
        let covered = self.ground_truth.len() == self.query_count
            && self.ground_truth.keys().copied().eq(0..self.query_count);
        if !covered {
            return Err(Error::GroundTruthCoverage(format!(
                "{} entries for {} queries",
                self.ground_truth.len(),
                self.query_count
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        let file = ManifestFile {
            name: self.name.clone(),
            dim: self.dim,
            query_count: self.query_count,
            gallery_count: self.gallery_count,
            query_path: self.query_path.clone(),
            gallery_path: self.gallery_path.clone(),
            seed: self.seed,
            ground_truth: self.ground_truth.iter().map(|(&q, &g)| [q, g]).collect(),
        };
        toml::to_string(&file).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }
}

fn parse_manifest_file(path: &Path) -> Result<ManifestFile> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn base_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Parses a manifest and verifies all of its invariants, including that both
/// embedding files exist with exactly `rows * dim * 4` bytes.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = parse_manifest_file(path)?;
    let mut ground_truth = BTreeMap::new();
    for [q, g] in &file.ground_truth {
        if ground_truth.insert(*q, *g).is_some() {
            return Err(Error::GroundTruthCoverage(format!(
                "query {q} listed more than once"
            )));
        }
    }
    let manifest = DatasetManifest {
        name: file.name,
        dim: file.dim,
        query_count: file.query_count,
        gallery_count: file.gallery_count,
        query_path: file.query_path,
        gallery_path: file.gallery_path,
        ground_truth,
        seed: file.seed,
        base_dir: base_dir_of(path),
    };
    if manifest.dim == 0 || manifest.query_count == 0 || manifest.gallery_count == 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "dim, query_count and gallery_count must be >= 1".into(),
        });
    }
    manifest.check_invariants()?;
    for split in [Split::Query, Split::Gallery] {
        let data_path = manifest.path_for(split);
        let meta = fs::metadata(&data_path).map_err(|_| Error::MissingFile(data_path.clone()))?;
        let expected = (manifest.rows_for(split) * manifest.dim * 4) as u64;
        if meta.len() != expected {
            return Err(Error::DimensionMismatch {
                path: data_path,
                expected,
                actual: meta.len(),
            });
        }
    }
    Ok(manifest)
}

/// Reads one split of a validated dataset. The matrix is not normalized.
pub fn load_embeddings(manifest: &DatasetManifest, split: Split) -> Result<EmbeddingMatrix> {
    read_embeddings(
        &manifest.path_for(split),
        manifest.rows_for(split),
        manifest.dim,
    )
}

/// Loads both splits and L2-normalizes them.
pub fn load_normalized(manifest: &DatasetManifest) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    let queries = l2_normalize(&load_embeddings(manifest, Split::Query)?)?;
    let gallery = l2_normalize(&load_embeddings(manifest, Split::Gallery)?)?;
    Ok((queries, gallery))
}

/// Parameters of the seeded synthetic benchmark generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub name: String,
    pub n_identities: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    /// Fraction of identities that are planted in near-duplicate pairs.
    pub confusable_fraction: f64,
    /// Planted pairs have gallery cosine >= 1 - confusable_gap.
    pub confusable_gap: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            n_identities: 64,
            dim: 32,
            noise_sigma: 0.4,
            confusable_fraction: 0.5,
            confusable_gap: 0.02,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_identities == 0 {
            return fail("n_identities must be >= 1".into());
        }
        if self.dim < 2 {
            return fail(format!("dim must be >= 2, got {}", self.dim));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return fail(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.confusable_fraction) {
            return fail(format!(
                "confusable_fraction must be in [0, 1], got {}",
                self.confusable_fraction
            ));
        }
        if !(self.confusable_gap > 0.0 && self.confusable_gap < 1.0) {
            return fail(format!(
                "confusable_gap must be in (0, 1), got {}",
                self.confusable_gap
            ));
        }
        if self.confusable_fraction > 0.0 && self.n_identities < 2 {
            return fail("n_identities must be >= 2 when confusable_fraction > 0".into());
        }
        if i64::try_from(self.seed).is_err() {
            return fail(format!("seed {} does not fit a signed 64-bit integer", self.seed));
        }
        Ok(())
    }

    /// Number of planted near-duplicate gallery pairs.
    pub fn confusable_pairs(&self) -> usize {
        let pairs = (self.confusable_fraction * self.n_identities as f64 / 2.0).round() as usize;
        pairs.min(self.n_identities / 2)
    }
}

/// In-memory result of the synthetic generator.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub queries: EmbeddingMatrix,
    pub gallery: EmbeddingMatrix,
    /// Gallery id of every query.
    pub ground_truth: Vec<usize>,
    /// Planted near-duplicate gallery pairs.
    pub confusable: Vec<(usize, usize)>,
}

fn gaussian_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generates the dataset described by `cfg`. Pure function of the config.
pub fn synthesize(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let n = cfg.n_identities;
    let dim = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut gallery: Vec<Vec<f64>> = (0..n).map(|_| gaussian_unit(&mut rng, dim)).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut confusable = Vec::new();
    for p in 0..cfg.confusable_pairs() {
        let (anchor, twin) = (order[2 * p], order[2 * p + 1]);
        // Direction orthogonal to the anchor, then rotate towards it.
        let mut dir = gaussian_unit(&mut rng, dim);
        let proj: f64 = dir.iter().zip(&gallery[anchor]).map(|(a, b)| a * b).sum();
        for (d, a) in dir.iter_mut().zip(&gallery[anchor]) {
            *d -= proj * a;
        }
        let dn = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = 1.0 - cfg.confusable_gap * rng.random::<f64>();
        let sin = (1.0 - cos * cos).max(0.0).sqrt();
        gallery[twin] = gallery[anchor]
            .iter()
            .zip(&dir)
            .map(|(a, d)| cos * a + sin * d / dn)
            .collect();
        confusable.push((anchor.min(twin), anchor.max(twin)));
    }
    confusable.sort_unstable();

    let gallery_f32: Vec<Vec<f32>> = gallery
        .iter()
        .map(|row| row.iter().map(|&v| v as f32).collect())
        .collect();

    let mut ground_truth: Vec<usize> = (0..n).collect();
    ground_truth.shuffle(&mut rng);

    let mut queries = Vec::with_capacity(n);
    for &g in &ground_truth {
        if cfg.noise_sigma == 0.0 {
            queries.push(gallery_f32[g].clone());
            continue;
        }
        let noisy: Vec<f64> = gallery_f32[g]
            .iter()
            .map(|&v| f64::from(v) + cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = noisy.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= ZERO_NORM_THRESHOLD {
            return Err(Error::ZeroVector {
                row: queries.len(),
                norm,
            });
        }
        queries.push(noisy.iter().map(|&v| (v / norm) as f32).collect());
    }

    Ok(SyntheticData {
        queries: EmbeddingMatrix::from_rows(&queries)?.into_normalized()?,
        gallery: EmbeddingMatrix::from_rows(&gallery_f32)?.into_normalized()?,
        ground_truth,
        confusable,
    })
}

/// Writes a synthetic dataset (`manifest.toml`, `queries.f32`,
/// `gallery.f32`) into `out_dir` and returns its manifest.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let data = synthesize(cfg)?;
    fs::create_dir_all(out_dir)?;
    let manifest = DatasetManifest {
        name: cfg.name.clone(),
        dim: cfg.dim,
        query_count: data.queries.rows(),
        gallery_count: data.gallery.rows(),
        query_path: PathBuf::from("queries.f32"),
        gallery_path: PathBuf::from("gallery.f32"),
        ground_truth: data.ground_truth.iter().copied().enumerate().collect(),
        seed: Some(cfg.seed),
        base_dir: out_dir.to_path_buf(),
    };
    write_embeddings(&manifest.path_for(Split::Query), &data.queries)?;
    write_embeddings(&manifest.path_for(Split::Gallery), &data.gallery)?;
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "PASS",
            CheckStatus::Warn => "WARN",
            CheckStatus::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, status: CheckStatus, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            status,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn status_of(&self, name: &str) -> Option<CheckStatus> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{}\t{}\t{}", c.status, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs every dataset check and records the outcome of each. Never fails;
/// problems become `Fail` or `Warn` entries.
pub fn validate_dataset(manifest_path: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let file = match parse_manifest_file(manifest_path) {
        Ok(f) => {
            report.push("manifest", CheckStatus::Pass, manifest_path.display().to_string());
            f
        }
        Err(e) => {
            report.push("manifest", CheckStatus::Fail, e.to_string());
            return report;
        }
    };

    let shape_ok = file.dim >= 1 && file.query_count >= 1 && file.gallery_count >= 1;
    report.push(
        "shape",
        if shape_ok { CheckStatus::Pass } else { CheckStatus::Fail },
        format!(
            "dim={} queries={} gallery={}",
            file.dim, file.query_count, file.gallery_count
        ),
    );

    let out_of_range: Vec<_> = file
        .ground_truth
        .iter()
        .filter(|[_, g]| *g >= file.gallery_count)
        .collect();
    report.push(
        "ground_truth_range",
        if out_of_range.is_empty() { CheckStatus::Pass } else { CheckStatus::Fail },
        format!("{} entries out of range", out_of_range.len()),
    );

    let mut seen = BTreeSet::new();
    let duplicates = file.ground_truth.iter().filter(|[q, _]| !seen.insert(*q)).count();
    let coverage_ok = duplicates == 0 && seen.iter().copied().eq(0..file.query_count);
    report.push(
        "ground_truth_coverage",
        if coverage_ok { CheckStatus::Pass } else { CheckStatus::Fail },
        format!(
            "{} distinct queries of {}, {} duplicates",
            seen.len(),
            file.query_count,
            duplicates
        ),
    );

    let mut targets = BTreeMap::<usize, usize>::new();
    for [_, g] in &file.ground_truth {
        *targets.entry(*g).or_default() += 1;
    }
    let shared = targets.values().filter(|&&c| c > 1).count();
    report.push(
        "ground_truth_one_to_one",
        if shared == 0 { CheckStatus::Pass } else { CheckStatus::Fail },
        format!("{shared} gallery ids relevant to more than one query"),
    );

    let base = base_dir_of(manifest_path);
    for (split, rel, rows) in [
        (Split::Query, &file.query_path, file.query_count),
        (Split::Gallery, &file.gallery_path, file.gallery_count),
    ] {
        let path = base.join(rel);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) => {
                report.push(&format!("{split}_bytes"), CheckStatus::Fail, format!("{}: {e}", path.display()));
                continue;
            }
        };
        let expected = rows * file.dim.max(1) * 4;
        if bytes.len() != expected {
            report.push(
                &format!("{split}_bytes"),
                CheckStatus::Fail,
                format!("expected {expected} bytes, found {}", bytes.len()),
            );
            continue;
        }
        report.push(&format!("{split}_bytes"), CheckStatus::Pass, format!("{expected} bytes"));

        match EmbeddingMatrix::from_le_bytes(rows, file.dim.max(1), &bytes) {
            Err(e) => report.push(&format!("{split}_finite"), CheckStatus::Fail, e.to_string()),
            Ok(m) => {
                report.push(&format!("{split}_finite"), CheckStatus::Pass, "all values finite");
                let norms = m.row_norms();
                let min = norms.iter().copied().fold(f64::INFINITY, f64::min);
                let max = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mean = norms.iter().sum::<f64>() / norms.len() as f64;
                let zero = norms.iter().filter(|&&n| n <= ZERO_NORM_THRESHOLD).count();
                let unit = norms.iter().all(|n| (n - 1.0).abs() <= UNIT_NORM_TOLERANCE);
                let status = if zero > 0 {
                    CheckStatus::Fail
                } else if unit {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Warn
                };
                report.push(
                    &format!("{split}_norms"),
                    status,
                    format!("min={min:.6} max={max:.6} mean={mean:.6} zero_rows={zero}"),
                );
            }
        }
    }
    report
}
