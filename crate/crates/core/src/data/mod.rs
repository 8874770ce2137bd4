//! Datasets: in-memory representation, loaders, generators and a registry
//! of named sources.

mod biased;
mod cache;
mod idx;
mod registry;
mod rotate;
mod shapes;
mod uci;

use std::path::PathBuf;

use forgetnet_tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use biased::{gen_biased_tabular, BiasedSpec};
pub use cache::{read_cache, write_cache};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, RawImages};
pub use registry::{lookup, registry, DatasetSource, LoadOptions};
pub use rotate::{make_rot, rotate_image, MnistRotSource, ROT_ANGLES, UNSEEN_ANGLES};
pub use shapes::{gen_shapes, ShapesSpec};
pub use uci::{load_adult, load_german, GermanSensitive};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("data file not found: {}", .0.display())]
    Missing(PathBuf),
    #[error("{}: {reason}", path.display())]
    Malformed { path: PathBuf, reason: String },
    #[error("{}: bad magic {got:#010x}, expected {expected:#010x}", path.display())]
    BadMagic {
        path: PathBuf,
        expected: u32,
        got: u32,
    },
    #[error("{}: truncated, expected {expected} bytes, found {got}", path.display())]
    Truncated {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("rotation needs square images, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("{0}")]
    Invalid(String),
}

/// Whether optimal invariance means chance level or the majority share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SKind {
    Nuisance,
    Bias,
}

/// One record; `y` and `s` hold one entry per task.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: Vec<usize>,
    pub s: Vec<usize>,
}

/// Column-major labels, row-major features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Tensor,
    y: Vec<Vec<usize>>,
    s: Vec<Vec<usize>>,
}

impl Dataset {
    /// `y[j]` and `s[j]` are the labels of task `j`, one per row of `x`.
    pub fn new(x: Tensor, y: Vec<Vec<usize>>, s: Vec<Vec<usize>>) -> Result<Self, DataError> {
        if x.rank() != 2 {
            return Err(DataError::Invalid("features must be a matrix".into()));
        }
        if y.is_empty() || y.len() != s.len() {
            return Err(DataError::Invalid(format!(
                "{} y tasks but {} s tasks",
                y.len(),
                s.len()
            )));
        }
        let n = x.rows();
        if y.iter().chain(&s).any(|c| c.len() != n) {
            return Err(DataError::Invalid(format!(
                "label columns do not match {n} rows"
            )));
        }
        Ok(Self { x, y, s })
    }

    pub fn from_examples(examples: &[LabeledExample]) -> Result<Self, DataError> {
        let first = examples
            .first()
            .ok_or_else(|| DataError::Invalid("no examples".into()))?;
        let (w, t) = (first.x.len(), first.y.len());
        let mut x = Vec::with_capacity(examples.len() * w);
        let mut y = vec![Vec::with_capacity(examples.len()); t];
        let mut s = vec![Vec::with_capacity(examples.len()); t];
        for e in examples {
            if e.x.len() != w || e.y.len() != t || e.s.len() != t {
                return Err(DataError::Invalid("inconsistent example widths".into()));
            }
            x.extend_from_slice(&e.x);
            for j in 0..t {
                y[j].push(e.y[j]);
                s[j].push(e.s[j]);
            }
        }
        let x = Tensor::new(vec![examples.len(), w], x)
            .map_err(|e| DataError::Invalid(e.to_string()))?;
        Self::new(x, y, s)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn width(&self) -> usize {
        self.x.cols()
    }

    pub fn tasks(&self) -> usize {
        self.y.len()
    }

    pub fn x(&self) -> &Tensor {
        &self.x
    }

    pub fn y(&self, task: usize) -> &[usize] {
        &self.y[task]
    }

    pub fn s(&self, task: usize) -> &[usize] {
        &self.s[task]
    }

    pub fn ys(&self) -> &[Vec<usize>] {
        &self.y
    }

    pub fn ss(&self) -> &[Vec<usize>] {
        &self.s
    }

    pub fn example(&self, i: usize) -> LabeledExample {
        LabeledExample {
            x: self.x.row(i).to_vec(),
            y: self.y.iter().map(|c| c[i]).collect(),
            s: self.s.iter().map(|c| c[i]).collect(),
        }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            y: self.y.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            s: self.s.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
        }
    }

    /// Row indices split `(rest, held)` with `fraction` of every (y, s)
    /// stratum of task 0 held out.
    pub fn stratified_indices(&self, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut strata: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
            Default::default();
        for i in 0..self.len() {
            strata.entry((self.y[0][i], self.s[0][i])).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut rest, mut held) = (Vec::new(), Vec::new());
        for (_, mut idx) in strata {
            idx.shuffle(&mut rng);
            let k = (idx.len() as f64 * fraction).round() as usize;
            held.extend_from_slice(&idx[..k]);
            rest.extend_from_slice(&idx[k..]);
        }
        rest.sort_unstable();
        held.sort_unstable();
        (rest, held)
    }

    pub fn stratified_split(&self, fraction: f64, seed: u64) -> (Self, Self) {
        let (rest, held) = self.stratified_indices(fraction, seed);
        (self.select(&rest), self.select(&held))
    }

    /// Stacks datasets with identical widths and task counts.
    pub fn concat(parts: &[&Dataset]) -> Result<Self, DataError> {
        let first = parts
            .first()
            .ok_or_else(|| DataError::Invalid("nothing to concatenate".into()))?;
        let mut x = Vec::new();
        let mut y = vec![Vec::new(); first.tasks()];
        let mut s = vec![Vec::new(); first.tasks()];
        for p in parts {
            if p.width() != first.width() || p.tasks() != first.tasks() {
                return Err(DataError::Invalid("incompatible datasets".into()));
            }
            x.extend_from_slice(p.x.data());
            for j in 0..p.tasks() {
                y[j].extend_from_slice(&p.y[j]);
                s[j].extend_from_slice(&p.s[j]);
            }
        }
        let n = x.len() / first.width();
        Self::new(Tensor::from_vec(&[n, first.width()], x), y, s)
    }

    /// SHA-256 over features and labels, for determinism checks.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.x.data() {
            h.update(v.to_le_bytes());
        }
        for col in self.y.iter().chain(&self.s) {
            for &v in col {
                h.update((v as u64).to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-class frequencies of `labels` over `classes` classes.
pub fn class_shares(labels: &[usize], classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; classes];
    for &l in labels {
        if l < classes {
            counts[l] += 1;
        }
    }
    let n = labels.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

pub fn majority_share(labels: &[usize]) -> f64 {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    class_shares(labels, classes)
        .into_iter()
        .fold(0.0, f64::max)
}

/// Declared shape of a dataset and the recipe that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub feature_width: usize,
    pub y_classes: Vec<usize>,
    pub s_classes: Vec<usize>,
    pub s_kind: Vec<SKind>,
    pub splits: Vec<(String, usize)>,
    pub recipe: String,
    pub recipe_hash: String,
    pub notes: Vec<String>,
}

impl DatasetManifest {
    pub fn new(
        name: &str,
        feature_width: usize,
        y_classes: Vec<usize>,
        s_classes: Vec<usize>,
        s_kind: Vec<SKind>,
        recipe: String,
    ) -> Self {
        let recipe_hash = hex(&Sha256::digest(recipe.as_bytes()));
        Self {
            name: name.to_string(),
            feature_width,
            y_classes,
            s_classes,
            s_kind,
            splits: Vec::new(),
            recipe,
            recipe_hash,
            notes: Vec::new(),
        }
    }

    /// Checks a dataset against the declared widths and cardinalities.
    pub fn check(&self, data: &Dataset) -> Result<(), DataError> {
        if data.width() != self.feature_width {
            return Err(DataError::Invalid(format!(
                "{}: width {} but manifest declares {}",
                self.name,
                data.width(),
                self.feature_width
            )));
        }
        if data.tasks() != self.y_classes.len() {
            return Err(DataError::Invalid(format!(
                "{}: {} tasks but manifest declares {}",
                self.name,
                data.tasks(),
                self.y_classes.len()
            )));
        }
        for j in 0..data.tasks() {
            let ybad = data.y(j).iter().any(|&v| v >= self.y_classes[j]);
            let sbad = data.s(j).iter().any(|&v| v >= self.s_classes[j]);
            if ybad || sbad {
                return Err(DataError::Invalid(format!(
                    "{}: task {j} label out of declared range",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Train/test splits plus any extra evaluation splits.
#[derive(Debug, Clone)]
pub struct DataBundle {
    pub manifest: DatasetManifest,
    pub train: Dataset,
    pub test: Dataset,
    pub extra: Vec<(String, Dataset)>,
}

impl DataBundle {
    pub fn new(
        mut manifest: DatasetManifest,
        train: Dataset,
        test: Dataset,
        extra: Vec<(String, Dataset)>,
    ) -> Result<Self, DataError> {
        manifest.splits = vec![("train".into(), train.len()), ("test".into(), test.len())];
        manifest
            .splits
            .extend(extra.iter().map(|(n, d)| (n.clone(), d.len())));
        manifest.check(&train)?;
        manifest.check(&test)?;
        for (_, d) in &extra {
            if d.width() != manifest.feature_width {
                return Err(DataError::Invalid("extra split width mismatch".into()));
            }
        }
        Ok(Self {
            manifest,
            train,
            test,
            extra,
        })
    }

    pub fn split(&self, name: &str) -> Option<&Dataset> {
        match name {
            "train" => Some(&self.train),
            "test" => Some(&self.test),
            _ => self.extra.iter().find(|(n, _)| n == name).map(|(_, d)| d),
        }
    }
}

/// Mean and standard deviation of each column, for z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits on the rows of `columns` (each inner vec is one column).
    pub fn fit(columns: &[Vec<f64>]) -> Self {
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        for c in columns {
            let n = c.len().max(1) as f64;
            let m = c.iter().sum::<f64>() / n;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            scale.push(if v > 0.0 { v.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn apply(&self, col: usize, v: f64) -> f64 {
        (v - self.mean[col]) / self.scale[col]
    }
}
