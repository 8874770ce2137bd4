//! UCI Adult and German credit parsers.

use std::fs;
use std::path::{Path, PathBuf};

use forgetnet_tensor::Tensor;
use log::{info, warn};
use sha2::{Digest, Sha256};

use super::{hex, DataBundle, DataError, Dataset, DatasetManifest, SKind, Standardizer};

/// Raw attribute values of one row, before encoding.
type RawRow = Vec<String>;

fn read(path: &Path) -> Result<String, DataError> {
    if !path.exists() {
        return Err(DataError::Missing(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| DataError::Malformed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn file_digest(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

/// Column layout: which raw attributes are numeric and which are categorical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Numeric,
    Categorical,
    Dropped,
}

/// One-hot / z-score encoder fitted on a training split.
struct Encoder {
    kinds: Vec<Kind>,
    categories: Vec<Vec<String>>,
    scaler: Standardizer,
    numeric_cols: Vec<usize>,
}

impl Encoder {
    fn fit(kinds: &[Kind], rows: &[RawRow]) -> Result<Self, String> {
        let mut categories = vec![Vec::new(); kinds.len()];
        let mut numeric_cols = Vec::new();
        let mut columns = Vec::new();
        for (c, kind) in kinds.iter().enumerate() {
            match kind {
                Kind::Categorical => {
                    let mut seen: Vec<String> = rows.iter().map(|r| r[c].clone()).collect();
                    seen.sort();
                    seen.dedup();
                    categories[c] = seen;
                }
                Kind::Numeric => {
                    numeric_cols.push(c);
                    columns.push(
                        rows.iter()
                            .map(|r| parse_num(&r[c]))
                            .collect::<Result<Vec<_>, _>>()?,
                    );
                }
                Kind::Dropped => {}
            }
        }
        Ok(Self {
            kinds: kinds.to_vec(),
            categories,
            scaler: Standardizer::fit(&columns),
            numeric_cols,
        })
    }

    fn width(&self) -> usize {
        self.numeric_cols.len() + self.categories.iter().map(Vec::len).sum::<usize>()
    }

    /// Numeric columns first (z-scored), then one-hot blocks in column order.
    /// Categories unseen at fit time encode as all zeros.
    fn encode(&self, row: &RawRow, out: &mut Vec<f64>) -> Result<(), String> {
        for (k, &c) in self.numeric_cols.iter().enumerate() {
            out.push(self.scaler.apply(k, parse_num(&row[c])?));
        }
        for (c, kind) in self.kinds.iter().enumerate() {
            if *kind == Kind::Categorical {
                let cats = &self.categories[c];
                let hit = cats.binary_search(&row[c]).ok();
                out.extend((0..cats.len()).map(|i| if Some(i) == hit { 1.0 } else { 0.0 }));
            }
        }
        Ok(())
    }

    fn matrix(&self, rows: &[RawRow], path: &Path) -> Result<Tensor, DataError> {
        let mut data = Vec::with_capacity(rows.len() * self.width());
        for r in rows {
            self.encode(r, &mut data).map_err(|reason| DataError::Malformed {
                path: path.to_path_buf(),
                reason,
            })?;
        }
        Tensor::new(vec![rows.len(), self.width()], data)
            .map_err(|e| DataError::Invalid(e.to_string()))
    }
}

fn parse_num(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("expected a number, found `{s}`"))
}

const ADULT_KINDS: [Kind; 14] = [
    Kind::Dropped, // age, used for s
    Kind::Categorical,
    Kind::Numeric,
    Kind::Categorical,
    Kind::Numeric,
    Kind::Categorical,
    Kind::Categorical,
    Kind::Categorical,
    Kind::Categorical,
    Kind::Categorical,
    Kind::Numeric,
    Kind::Numeric,
    Kind::Numeric,
    Kind::Categorical,
];

struct AdultRows {
    rows: Vec<RawRow>,
    y: Vec<usize>,
    skipped_missing: usize,
    skipped_malformed: usize,
}

fn parse_adult(text: &str) -> AdultRows {
    let mut out = AdultRows {
        rows: Vec::new(),
        y: Vec::new(),
        skipped_missing: 0,
        skipped_malformed: 0,
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        let mut fields: Vec<String> = line.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != 15 || fields[0].parse::<f64>().is_err() {
            out.skipped_malformed += 1;
            continue;
        }
        if fields.iter().any(|f| f == "?") {
            out.skipped_missing += 1;
            continue;
        }
        let label = fields.pop().unwrap();
        let y = match label.trim_end_matches('.') {
            ">50K" => 1,
            "<=50K" => 0,
            _ => {
                out.skipped_malformed += 1;
                continue;
            }
        };
        out.rows.push(fields);
        out.y.push(y);
    }
    out
}

/// Age threshold `t` (s = age > t) whose majority share is closest to `target`.
fn age_threshold(ages: &[f64], target: f64) -> (f64, f64) {
    let n = ages.len() as f64;
    let mut best = (0.0, f64::INFINITY, 0.0);
    for t in 17..90 {
        let above = ages.iter().filter(|&&a| a > t as f64).count() as f64 / n;
        let share = above.max(1.0 - above);
        let gap = (share - target).abs();
        if gap < best.1 {
            best = (t as f64, gap, share);
        }
    }
    (best.0, best.2)
}

pub const ADULT_MAJORITY_TARGET: f64 = 0.67;

/// Loads `adult.data` / `adult.test` from `dir`.
///
/// The age attribute becomes `s` (binarized on the training split) and is
/// removed from the features.
pub fn load_adult(dir: &Path) -> Result<DataBundle, DataError> {
    let train_path = dir.join("adult.data");
    let test_path = dir.join("adult.test");
    let train_text = read(&train_path)?;
    let test_text = read(&test_path)?;
    let train = parse_adult(&train_text);
    let test = parse_adult(&test_text);
    for (name, p) in [("adult.data", &train), ("adult.test", &test)] {
        if p.skipped_malformed > 0 {
            warn!("{name}: skipped {} malformed rows", p.skipped_malformed);
        }
        info!(
            "{name}: {} rows kept, {} dropped for missing values",
            p.rows.len(),
            p.skipped_missing
        );
    }
    if train.rows.is_empty() || test.rows.is_empty() {
        return Err(DataError::Invalid("adult: no usable rows".into()));
    }
    let age = |rows: &[RawRow]| -> Vec<f64> { rows.iter().map(|r| r[0].parse().unwrap()).collect() };
    let (threshold, share) = age_threshold(&age(&train.rows), ADULT_MAJORITY_TARGET);
    let s_of = |rows: &[RawRow]| -> Vec<usize> {
        age(rows).into_iter().map(|a| usize::from(a > threshold)).collect()
    };

    let enc = Encoder::fit(&ADULT_KINDS, &train.rows).map_err(|reason| DataError::Malformed {
        path: train_path.clone(),
        reason,
    })?;
    let train_x = enc.matrix(&train.rows, &train_path)?;
    let test_x = enc.matrix(&test.rows, &test_path)?;
    let train_ds = Dataset::new(train_x, vec![train.y], vec![s_of(&train.rows)])?;
    let test_ds = Dataset::new(test_x, vec![test.y], vec![s_of(&test.rows)])?;

    let recipe = format!(
        "adult v1; train {}; test {}; s = age > {threshold}; numeric z-scored on train; one-hot categorical",
        file_digest(&train_text),
        file_digest(&test_text)
    );
    let mut manifest = DatasetManifest::new("adult", enc.width(), vec![2], vec![2], vec![SKind::Bias], recipe);
    manifest.notes.push(format!(
        "age threshold {threshold}, training majority share {share:.4}"
    ));
    manifest.notes.push(format!(
        "dropped rows: train {} missing / {} malformed, test {} missing / {} malformed",
        train.skipped_missing, train.skipped_malformed, test.skipped_missing, test.skipped_malformed
    ));
    DataBundle::new(manifest, train_ds, test_ds, Vec::new())
}

/// Attribute used as the biasing factor for German credit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GermanSensitive {
    /// `age > 25`; majority share 0.81.
    Age,
    /// Female per the personal-status attribute; majority share 0.69.
    Gender,
}

impl GermanSensitive {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "age" => Some(Self::Age),
            "gender" => Some(Self::Gender),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Age => "age",
            Self::Gender => "gender",
        }
    }
}

const GERMAN_NUMERIC: [usize; 7] = [1, 4, 7, 10, 12, 15, 17];
const GERMAN_STATUS: usize = 8;
const GERMAN_AGE: usize = 12;

/// Loads `german.data` from `dir` and splits it 70/30, stratified on (y, s).
pub fn load_german(dir: &Path, sensitive: GermanSensitive, seed: u64) -> Result<DataBundle, DataError> {
    let path: PathBuf = dir.join("german.data");
    let text = read(&path)?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut malformed = 0usize;
    for line in text.lines() {
        let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 21 {
            malformed += 1;
            continue;
        }
        let label = match fields[20].as_str() {
            "1" => 1,
            "2" => 0,
            _ => {
                malformed += 1;
                continue;
            }
        };
        rows.push(fields[..20].to_vec());
        y.push(label);
    }
    if malformed > 0 {
        warn!("german.data: skipped {malformed} malformed rows");
    }
    if rows.is_empty() {
        return Err(DataError::Invalid("german: no usable rows".into()));
    }
    let mut s = Vec::with_capacity(rows.len());
    for r in &rows {
        let v = match sensitive {
            GermanSensitive::Age => {
                let age = parse_num(&r[GERMAN_AGE]).map_err(|reason| DataError::Malformed {
                    path: path.clone(),
                    reason,
                })?;
                usize::from(age > 25.0)
            }
            GermanSensitive::Gender => usize::from(matches!(r[GERMAN_STATUS].as_str(), "A92" | "A95")),
        };
        s.push(v);
    }
    let drop_col = match sensitive {
        GermanSensitive::Age => GERMAN_AGE,
        GermanSensitive::Gender => GERMAN_STATUS,
    };
    let kinds: Vec<Kind> = (0..20)
        .map(|c| {
            if c == drop_col {
                Kind::Dropped
            } else if GERMAN_NUMERIC.contains(&c) {
                Kind::Numeric
            } else {
                Kind::Categorical
            }
        })
        .collect();

    // Split on raw rows so that scaling statistics come from the training part only.
    let placeholder = Dataset::new(Tensor::zeros(&[rows.len(), 1]), vec![y.clone()], vec![s.clone()])?;
    let (train_idx, test_idx) = placeholder.stratified_indices(0.3, seed);
    let pick = |idx: &[usize]| -> (Vec<RawRow>, Vec<usize>, Vec<usize>) {
        (
            idx.iter().map(|&i| rows[i].clone()).collect(),
            idx.iter().map(|&i| y[i]).collect(),
            idx.iter().map(|&i| s[i]).collect(),
        )
    };
    let (tr_rows, tr_y, tr_s) = pick(&train_idx);
    let (te_rows, te_y, te_s) = pick(&test_idx);
    let enc = Encoder::fit(&kinds, &tr_rows).map_err(|reason| DataError::Malformed {
        path: path.clone(),
        reason,
    })?;
    let train = Dataset::new(enc.matrix(&tr_rows, &path)?, vec![tr_y], vec![tr_s])?;
    let test = Dataset::new(enc.matrix(&te_rows, &path)?, vec![te_y], vec![te_s])?;

    let recipe = format!(
        "german v1; file {}; s = {}; split 70/30 stratified seed {seed}; numeric z-scored on train; one-hot categorical",
        file_digest(&text),
        sensitive.name()
    );
    let mut manifest = DatasetManifest::new("german", enc.width(), vec![2], vec![2], vec![SKind::Bias], recipe);
    manifest.notes.push(format!("{} rows parsed, {malformed} malformed", rows.len()));
    DataBundle::new(manifest, train, test, Vec::new())
}
