//! On-disk embedding datasets: a small binary matrix format, JSON manifests
//! with mandatory SHA-256 checksums, plain-text labels/gold/splits, a CSV
//! import path, and deterministic synthetic fixtures.
//!
//! Binary matrix layout (all integers little-endian):
//!
//! | offset | size | field                                |
//! |--------|------|--------------------------------------|
//! | 0      | 4    | magic `EMB1`                         |
//! | 4      | 2    | format version (1)                   |
//! | 6      | 2    | dtype code (1 = f32, 2 = f64)        |
//! | 8      | 4    | rows                                 |
//! | 12     | 4    | columns                              |
//! | 16     | ..   | row-major payload                    |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::probes::{LabeledEmbeddingSet, Split};
use crate::sts::SentencePairSet;
use crate::whitening::{FitScope, WhiteningKind, WhiteningModel};

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u16 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u16) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(Error::Schema(format!("unknown dtype code {other}"))),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode_matrix(m: ArrayView2<'_, f64>, dtype: Dtype) -> Result<Vec<u8>> {
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "cannot store an empty {rows}x{cols} matrix"
        )));
    }
    let rows32 = u32::try_from(rows).map_err(|_| Error::invalid("too many rows"))?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::invalid("too many columns"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * dtype.width());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dtype.code().to_le_bytes());
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    for &v in m.iter() {
        match dtype {
            Dtype::F32 => {
                let f = v as f32;
                if !f.is_finite() {
                    return Err(Error::invalid(format!("{v} is not representable as f32")));
                }
                out.extend_from_slice(&f.to_le_bytes());
            }
            Dtype::F64 => {
                if !v.is_finite() {
                    return Err(Error::invalid("non-finite value"));
                }
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Schema("not an EMB1 matrix file".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    let version = u16_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::Schema(format!("unsupported format version {version}")));
    }
    let dtype = Dtype::from_code(u16_at(6))?;
    let rows = u32_at(8) as usize;
    let cols = u32_at(12) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Schema("matrix header declares zero rows or columns".into()));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.width()))
        .ok_or_else(|| Error::Schema("matrix header overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Schema(format!(
            "payload is {} bytes, header implies {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Schema("matrix payload contains non-finite values".into()));
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Internal(e.to_string()))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<String> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(bytes))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes a matrix and returns the SHA-256 of the file contents.
pub fn write_matrix(path: impl AsRef<Path>, m: ArrayView2<'_, f64>, dtype: Dtype) -> Result<String> {
    write_bytes(path.as_ref(), &encode_matrix(m, dtype)?)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    decode_matrix(&read_bytes(path.as_ref())?)
}

/// Stores embeddings as 32-bit floats; returns the file checksum.
pub fn save_embeddings(x: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<String> {
    write_matrix(path, x.view(), Dtype::F32)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::new(read_matrix(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Sts,
}

/// Provenance of a dataset produced by whitening another one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningProvenance {
    pub kind: WhiteningKind,
    pub fit_scope: FitScope,
    pub eps_used: f64,
    pub source: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub task: Task,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_classes: Option<usize>,
    /// Role (embeddings, labels, splits, left, right, gold) to path relative to the manifest.
    pub files: BTreeMap<String, String>,
    pub model_name: String,
    pub dim: usize,
    pub count: usize,
    pub checksums: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whitening: Option<WhiteningProvenance>,
}

impl DatasetManifest {
    fn required_roles(&self) -> &'static [&'static str] {
        match self.task {
            Task::Classification => &["embeddings", "labels"],
            Task::Sts => &["left", "right", "gold"],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for role in self.required_roles() {
            if !self.files.contains_key(*role) {
                return Err(Error::Schema(format!(
                    "{:?} manifest is missing the {role} file",
                    self.task
                )));
            }
        }
        for role in self.files.keys() {
            if !self.checksums.contains_key(role) {
                return Err(Error::Schema(format!("no checksum for {role}")));
            }
        }
        if self.dim == 0 || self.count == 0 {
            return Err(Error::Schema("dim and count must be positive".into()));
        }
        Ok(())
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_bytes(path.as_ref(), text.as_bytes()).map(|_| ())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Classification(LabeledEmbeddingSet),
    Sts(SentencePairSet),
}

/// Resolves a manifest-relative path.
pub fn resolve(manifest_path: &Path, rel: &str) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new(".")).join(rel)
}

fn verified_bytes(manifest_path: &Path, m: &DatasetManifest, role: &str) -> Result<Vec<u8>> {
    let rel = m
        .files
        .get(role)
        .ok_or_else(|| Error::Schema(format!("manifest has no {role} file")))?;
    let path = resolve(manifest_path, rel);
    let bytes = read_bytes(&path)?;
    let found = sha256_hex(&bytes);
    let expected = &m.checksums[role];
    if !found.eq_ignore_ascii_case(expected) {
        return Err(Error::Integrity {
            path,
            expected: expected.clone(),
            found,
        });
    }
    Ok(bytes)
}

fn matrix_role(manifest_path: &Path, m: &DatasetManifest, role: &str) -> Result<EmbeddingMatrix> {
    let x = decode_matrix(&verified_bytes(manifest_path, m, role)?)?;
    if x.dim() != (m.count, m.dim) {
        return Err(Error::Schema(format!(
            "{role} is {}x{} but the manifest declares {}x{}",
            x.nrows(),
            x.ncols(),
            m.count,
            m.dim
        )));
    }
    EmbeddingMatrix::new(x)
}

fn text_lines(bytes: &[u8], role: &str) -> Result<Vec<String>> {
    let text = std::str::from_utf8(bytes).map_err(|_| Error::Schema(format!("{role} is not UTF-8")))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

fn parse_lines<T: std::str::FromStr>(bytes: &[u8], role: &str, count: usize) -> Result<Vec<T>> {
    let lines = text_lines(bytes, role)?;
    if lines.len() != count {
        return Err(Error::Schema(format!(
            "{role} has {} entries, manifest declares {count}",
            lines.len()
        )));
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.parse::<T>()
                .map_err(|_| Error::Schema(format!("{role} line {}: cannot parse {l:?}", i + 1)))
        })
        .collect()
}

/// Loads and fully validates the dataset a manifest describes.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let m = read_manifest(manifest_path)?;
    load_with_manifest(manifest_path, &m)
}

pub fn load_with_manifest(manifest_path: &Path, m: &DatasetManifest) -> Result<Dataset> {
    match m.task {
        Task::Classification => {
            let embeddings = matrix_role(manifest_path, m, "embeddings")?;
            let labels: Vec<usize> =
                parse_lines(&verified_bytes(manifest_path, m, "labels")?, "labels", m.count)?;
            let splits = if m.files.contains_key("splits") {
                let tags: Vec<String> =
                    parse_lines(&verified_bytes(manifest_path, m, "splits")?, "splits", m.count)?;
                Some(tags.iter().map(|t| t.parse::<Split>()).collect::<Result<Vec<_>>>()?)
            } else {
                None
            };
            let set = LabeledEmbeddingSet::new(embeddings, labels, m.n_classes, splits)
                .map_err(|e| Error::Schema(e.to_string()))?;
            Ok(Dataset::Classification(set))
        }
        Task::Sts => {
            let left = matrix_role(manifest_path, m, "left")?;
            let right = matrix_role(manifest_path, m, "right")?;
            let gold: Vec<f64> = parse_lines(&verified_bytes(manifest_path, m, "gold")?, "gold", m.count)?;
            Ok(Dataset::Sts(SentencePairSet::new(left, right, Array1::from(gold))?))
        }
    }
}

fn lines_text<T: std::fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for v in values {
        s.push_str(&v.to_string());
        s.push('\n');
    }
    s
}

/// Writes a classification dataset (embeddings + labels [+ splits]) and its manifest.
pub fn save_classification(
    set: &LabeledEmbeddingSet,
    dir: impl AsRef<Path>,
    name: &str,
    model_name: &str,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let mut files = BTreeMap::new();
    let mut checksums = BTreeMap::new();
    checksums.insert("embeddings".into(), save_embeddings(&set.embeddings, dir.join("embeddings.emb"))?);
    files.insert("embeddings".into(), "embeddings.emb".into());
    checksums.insert(
        "labels".into(),
        write_bytes(&dir.join("labels.txt"), lines_text(&set.labels).as_bytes())?,
    );
    files.insert("labels".into(), "labels.txt".into());
    if let Some(splits) = &set.splits {
        let tags = splits.iter().map(|s| match s {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        });
        checksums.insert(
            "splits".into(),
            write_bytes(&dir.join("splits.txt"), lines_text(tags).as_bytes())?,
        );
        files.insert("splits".into(), "splits.txt".into());
    }
    let manifest = DatasetManifest {
        name: name.into(),
        task: Task::Classification,
        n_classes: Some(set.n_classes),
        files,
        model_name: model_name.into(),
        dim: set.dim(),
        count: set.len(),
        checksums,
        whitening: None,
    };
    write_manifest(&manifest, dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Writes an STS dataset (left, right, gold) and its manifest.
pub fn save_sts(
    pairs: &SentencePairSet,
    dir: impl AsRef<Path>,
    name: &str,
    model_name: &str,
) -> Result<DatasetManifest> {
    let dir = dir.as_ref();
    let mut files = BTreeMap::new();
    let mut checksums = BTreeMap::new();
    checksums.insert("left".into(), save_embeddings(&pairs.left, dir.join("left.emb"))?);
    files.insert("left".into(), "left.emb".into());
    checksums.insert("right".into(), save_embeddings(&pairs.right, dir.join("right.emb"))?);
    files.insert("right".into(), "right.emb".into());
    checksums.insert(
        "gold".into(),
        write_bytes(&dir.join("gold.txt"), lines_text(pairs.gold.iter()).as_bytes())?,
    );
    files.insert("gold".into(), "gold.txt".into());
    let manifest = DatasetManifest {
        name: name.into(),
        task: Task::Sts,
        n_classes: None,
        files,
        model_name: model_name.into(),
        dim: pairs.dim(),
        count: pairs.len(),
        checksums,
        whitening: None,
    };
    write_manifest(&manifest, dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Reads comma-separated embeddings, one per line. With `has_label`, the
/// final column is parsed as an integer class label.
pub fn import_csv(path: impl AsRef<Path>, has_label: bool) -> Result<(EmbeddingMatrix, Option<Vec<usize>>)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        let fields: Vec<&str> = record.iter().collect();
        let (feats, label) = if has_label {
            match fields.split_last() {
                Some((l, rest)) => (rest, Some(*l)),
                None => (&fields[..], None),
            }
        } else {
            (&fields[..], None)
        };
        if *width.get_or_insert(feats.len()) != feats.len() || feats.is_empty() {
            return Err(Error::Schema(format!(
                "{} line {}: inconsistent column count",
                path.display(),
                line + 1
            )));
        }
        for f in feats {
            values.push(f.parse::<f64>().map_err(|_| {
                Error::Schema(format!("{} line {}: bad number {f:?}", path.display(), line + 1))
            })?);
        }
        if let Some(l) = label {
            labels.push(l.parse::<usize>().map_err(|_| {
                Error::Schema(format!("{} line {}: bad label {l:?}", path.display(), line + 1))
            })?);
        }
    }
    let d = width.unwrap_or(0);
    let n = values.len().checked_div(d).unwrap_or(0);
    let data = Array2::from_shape_vec((n, d), values).map_err(|e| Error::Internal(e.to_string()))?;
    Ok((EmbeddingMatrix::new(data)?, has_label.then_some(labels)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteningModelManifest {
    pub kind: WhiteningKind,
    pub fit_scope: FitScope,
    pub eps_used: f64,
    pub fit_dims: [usize; 2],
    pub files: BTreeMap<String, String>,
    pub checksums: BTreeMap<String, String>,
}

/// Writes `mean` and `W` as f64 matrices next to a JSON model manifest.
pub fn save_whitening_model(
    model: &WhiteningModel,
    fit_scope: FitScope,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    let mean_file = format!("{stem}.mean.emb");
    let w_file = format!("{stem}.w.emb");
    let mean_sum = write_matrix(
        dir.join(&mean_file),
        model.mean.values.view().insert_axis(Axis(0)),
        Dtype::F64,
    )?;
    let w_sum = write_matrix(dir.join(&w_file), model.w.view(), Dtype::F64)?;
    let manifest = WhiteningModelManifest {
        kind: model.kind,
        fit_scope,
        eps_used: model.eps_used,
        fit_dims: [model.fit_dims.0, model.fit_dims.1],
        files: BTreeMap::from([("mean".into(), mean_file), ("w".into(), w_file)]),
        checksums: BTreeMap::from([("mean".into(), mean_sum), ("w".into(), w_sum)]),
    };
    let path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_bytes(&path, text.as_bytes())?;
    Ok(path)
}

pub fn load_whitening_model(path: impl AsRef<Path>) -> Result<(WhiteningModel, FitScope)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: WhiteningModelManifest =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    let load = |role: &str| -> Result<Array2<f64>> {
        let rel = m
            .files
            .get(role)
            .ok_or_else(|| Error::Schema(format!("model manifest has no {role} file")))?;
        let file = resolve(path, rel);
        let bytes = read_bytes(&file)?;
        let found = sha256_hex(&bytes);
        let expected = m
            .checksums
            .get(role)
            .ok_or_else(|| Error::Schema(format!("no checksum for {role}")))?;
        if !found.eq_ignore_ascii_case(expected) {
            return Err(Error::Integrity {
                path: file,
                expected: expected.clone(),
                found,
            });
        }
        decode_matrix(&bytes)
    };
    let mean = load("mean")?;
    if mean.nrows() != 1 {
        return Err(Error::Schema("mean must be a single row".into()));
    }
    let w = load("w")?;
    let model = WhiteningModel::from_parts(
        m.kind,
        mean.row(0).to_owned(),
        w,
        m.eps_used,
        (m.fit_dims[0], m.fit_dims[1]),
    )?;
    Ok((model, m.fit_scope))
}

/// Parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub task: Task,
    /// Rows (classification) or pairs (STS).
    pub n: usize,
    pub d: usize,
    pub n_classes: usize,
    /// Distance of each class mean from the overall centroid, in noise standard deviations.
    pub separation: f64,
    /// Strength of the shared dominant direction.
    pub anisotropy: f64,
    pub seed: u64,
    pub name: String,
    pub model_name: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            task: Task::Classification,
            n: 1000,
            d: 16,
            n_classes: 2,
            separation: 4.0,
            anisotropy: 0.0,
            seed: 0,
            name: "synthetic".into(),
            model_name: "synthetic".into(),
        }
    }
}

/// Upper bound on `n * d` for generated fixtures.
pub const SYNTH_MAX_ENTRIES: usize = 1 << 28;

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Array1<f64> {
    loop {
        let v = Array1::<f64>::from_shape_simple_fn(d, || StandardNormal.sample(&mut *rng));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Orthonormal directions by Gram-Schmidt on Gaussian draws.
fn orthonormal(k: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Array1<f64>> {
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v = random_unit(d, rng);
        for b in &basis {
            let proj = v.dot(b);
            v.scaled_add(-proj, b);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            basis.push(v / norm);
        }
    }
    basis
}

fn synth_classification(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<LabeledEmbeddingSet> {
    let (n, d, c) = (spec.n, spec.d, spec.n_classes);
    if c < 2 || c > n {
        return Err(Error::invalid(format!("cannot build {c} classes from {n} rows")));
    }
    if c > d {
        return Err(Error::invalid(format!("{c} classes need at least {c} dimensions")));
    }
    // Class means sit on a regular simplex around the origin.
    let dirs = orthonormal(c, d, rng);
    let centroid = dirs.iter().fold(Array1::<f64>::zeros(d), |acc, v| acc + v) / c as f64;
    let radius = ((c - 1) as f64 / c as f64).sqrt();
    let means: Vec<Array1<f64>> = (0..c)
        .map(|k| (&dirs[k] - &centroid) * (spec.separation / radius))
        .collect();
    let axis = random_unit(d, rng);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mut x = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut *rng));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        row += &means[labels[i]];
        let g: f64 = StandardNormal.sample(&mut *rng);
        row.scaled_add(spec.anisotropy * g, &axis);
    }
    LabeledEmbeddingSet::new(EmbeddingMatrix::new(x)?, labels, Some(c), None)
}

fn synth_sts(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<SentencePairSet> {
    let (n, d) = (spec.n, spec.d);
    if n < 2 {
        return Err(Error::invalid("need at least two pairs"));
    }
    let axis = random_unit(d, rng);
    let similarity = Uniform::new_inclusive(-0.2, 1.0).map_err(|e| Error::Internal(e.to_string()))?;
    let mut left = Array2::zeros((n, d));
    let mut right = Array2::zeros((n, d));
    let mut gold = Array1::zeros(n);
    for i in 0..n {
        let rho: f64 = similarity.sample(rng);
        let u = Array1::<f64>::from_shape_simple_fn(d, || StandardNormal.sample(&mut *rng));
        let v = Array1::<f64>::from_shape_simple_fn(d, || StandardNormal.sample(&mut *rng));
        let r = &u * rho + &v * (1.0 - rho * rho).sqrt();
        // a large common offset plus row-specific jitter along one axis
        let gl: f64 = StandardNormal.sample(&mut *rng);
        let gr: f64 = StandardNormal.sample(&mut *rng);
        let mut l_row = u;
        l_row.scaled_add(spec.anisotropy * (3.0 + gl), &axis);
        let mut r_row = r;
        r_row.scaled_add(spec.anisotropy * (3.0 + gr), &axis);
        left.row_mut(i).assign(&l_row);
        right.row_mut(i).assign(&r_row);
        gold[i] = rho;
    }
    SentencePairSet::new(EmbeddingMatrix::new(left)?, EmbeddingMatrix::new(right)?, gold)
}

/// Generates a synthetic dataset, deterministic per spec.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::invalid("n and d must be positive"));
    }
    if spec.n.saturating_mul(spec.d) > SYNTH_MAX_ENTRIES {
        return Err(Error::invalid("fixture exceeds the memory limit"));
    }
    if !spec.separation.is_finite() || !spec.anisotropy.is_finite() || spec.separation < 0.0 || spec.anisotropy < 0.0 {
        return Err(Error::invalid("separation and anisotropy must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.task {
        Task::Classification => Ok(Dataset::Classification(synth_classification(spec, &mut rng)?)),
        Task::Sts => Ok(Dataset::Sts(synth_sts(spec, &mut rng)?)),
    }
}

/// Generates a synthetic dataset and writes it with a manifest into `out_dir`.
pub fn synth_fixture(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    match synth_dataset(spec)? {
        Dataset::Classification(set) => save_classification(&set, out_dir, &spec.name, &spec.model_name),
        Dataset::Sts(pairs) => save_sts(&pairs, out_dir, &spec.name, &spec.model_name),
    }
}
