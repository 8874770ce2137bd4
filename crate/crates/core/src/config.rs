//! Training configuration and its flat `key = value` file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ArchSpec, ObjectiveWeights};

/// Optional replacements for a dataset's default architecture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchOverrides {
    pub latent_dim: Option<usize>,
    pub hidden_width: Option<usize>,
    pub encoder_layers: Option<usize>,
    pub forget_gate_layers: Option<usize>,
    pub predictor_layers: Option<usize>,
    pub decoder_layers: Option<usize>,
    pub discriminator_layers: Option<usize>,
}

impl ArchOverrides {
    pub fn apply(&self, arch: &mut ArchSpec) {
        let set = |dst: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut arch.latent_dim, self.latent_dim);
        set(&mut arch.hidden_width, self.hidden_width);
        set(&mut arch.encoder_layers, self.encoder_layers);
        set(&mut arch.forget_gate_layers, self.forget_gate_layers);
        set(&mut arch.predictor_layers, self.predictor_layers);
        set(&mut arch.decoder_layers, self.decoder_layers);
        set(&mut arch.discriminator_layers, self.discriminator_layers);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dataset: String,
    pub dataset_options: BTreeMap<String, String>,
    pub weights: ObjectiveWeights,
    /// Discriminator updates per main-model update.
    pub k: usize,
    pub learning_rate: f64,
    pub decay: f64,
    /// `None` takes the dataset's default budget.
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub arch: ArchOverrides,
    /// Stratified share of the training split held out for validation.
    pub val_fraction: f64,
    /// Epochs without validation `A_y` improvement before early stopping.
    pub patience: usize,
    pub early_stop: bool,
    /// Epochs before early stopping may trigger.
    pub min_epochs: usize,
    /// Standard deviation of Gaussian noise added to `z̃`; 0 disables it.
    pub noise_sigma: f64,
    /// Validation probe cadence in epochs for the log; 0 disables it.
    pub val_probe_every: usize,
    pub val_probe_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset: "adult".into(),
            dataset_options: BTreeMap::new(),
            weights: ObjectiveWeights::default(),
            k: 10,
            learning_rate: 1e-4,
            decay: 1e-4,
            epochs: None,
            batch_size: None,
            seed: 0,
            arch: ArchOverrides::default(),
            val_fraction: 0.1,
            patience: 10,
            early_stop: true,
            min_epochs: 0,
            noise_sigma: 0.0,
            val_probe_every: 0,
            val_probe_epochs: 20,
        }
    }
}

/// Per-weight candidate values for grid search.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl Grid {
    pub fn is_empty(&self) -> bool {
        self.rho.is_empty() && self.delta.is_empty() && self.lambda.is_empty()
    }
}

/// A parsed config file: training settings plus an optional grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub train: TrainConfig,
    pub grid: Grid,
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("line {line}: `{key}` cannot take value `{v}`")))
}

fn parse_list(key: &str, v: &str, line: usize) -> Result<Vec<f64>> {
    v.split(',')
        .map(|p| parse_value::<f64>(key, p.trim(), line))
        .collect()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
            cfg.set(key.trim(), value.trim(), line)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies one `key = value` setting; `line` is used in diagnostics.
    pub fn set(&mut self, key: &str, v: &str, line: usize) -> Result<()> {
        let t = &mut self.train;
        match key {
            "dataset" => t.dataset = v.to_string(),
            "seed" => t.seed = parse_value(key, v, line)?,
            "rho" => t.weights.rho = parse_value(key, v, line)?,
            "delta" => t.weights.delta = parse_value(key, v, line)?,
            "lambda" => t.weights.lambda = parse_value(key, v, line)?,
            "k" => t.k = parse_value(key, v, line)?,
            "learning_rate" => t.learning_rate = parse_value(key, v, line)?,
            "decay" => t.decay = parse_value(key, v, line)?,
            "epochs" => t.epochs = Some(parse_value(key, v, line)?),
            "batch_size" => t.batch_size = Some(parse_value(key, v, line)?),
            "latent_dim" => t.arch.latent_dim = Some(parse_value(key, v, line)?),
            "hidden_width" => t.arch.hidden_width = Some(parse_value(key, v, line)?),
            "encoder_layers" => t.arch.encoder_layers = Some(parse_value(key, v, line)?),
            "forget_gate_layers" => t.arch.forget_gate_layers = Some(parse_value(key, v, line)?),
            "predictor_layers" => t.arch.predictor_layers = Some(parse_value(key, v, line)?),
            "decoder_layers" => t.arch.decoder_layers = Some(parse_value(key, v, line)?),
            "discriminator_layers" => {
                t.arch.discriminator_layers = Some(parse_value(key, v, line)?)
            }
            "val_fraction" => t.val_fraction = parse_value(key, v, line)?,
            "patience" => t.patience = parse_value(key, v, line)?,
            "early_stop" => t.early_stop = parse_value(key, v, line)?,
            "min_epochs" => t.min_epochs = parse_value(key, v, line)?,
            "noise_sigma" => t.noise_sigma = parse_value(key, v, line)?,
            "val_probe_every" => t.val_probe_every = parse_value(key, v, line)?,
            "val_probe_epochs" => t.val_probe_epochs = parse_value(key, v, line)?,
            "grid.rho" => self.grid.rho = parse_list(key, v, line)?,
            "grid.delta" => self.grid.delta = parse_list(key, v, line)?,
            "grid.lambda" => self.grid.lambda = parse_list(key, v, line)?,
            _ => match key.strip_prefix("data.") {
                Some(opt) if !opt.is_empty() => {
                    t.dataset_options.insert(opt.to_string(), v.to_string());
                }
                _ => return Err(Error::Config(format!("line {line}: unknown key `{key}`"))),
            },
        }
        Ok(())
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.weights;
        if [w.rho, w.delta, w.lambda].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and nonnegative".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.decay >= 0.0) {
            return Err(Error::Config("learning_rate > 0 and decay ≥ 0 required".into()));
        }
        if self.epochs == Some(0) || self.batch_size == Some(0) {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must lie in [0, 0.5)".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be nonnegative".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "dataset = {}", self.dataset);
        for (k, v) in &self.dataset_options {
            let _ = writeln!(s, "data.{k} = {v}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "rho = {:?}", self.weights.rho);
        let _ = writeln!(s, "delta = {:?}", self.weights.delta);
        let _ = writeln!(s, "lambda = {:?}", self.weights.lambda);
        let _ = writeln!(s, "k = {}", self.k);
        let _ = writeln!(s, "learning_rate = {:?}", self.learning_rate);
        let _ = writeln!(s, "decay = {:?}", self.decay);
        if let Some(e) = self.epochs {
            let _ = writeln!(s, "epochs = {e}");
        }
        if let Some(b) = self.batch_size {
            let _ = writeln!(s, "batch_size = {b}");
        }
        let a = &self.arch;
        for (k, v) in [
            ("latent_dim", a.latent_dim),
            ("hidden_width", a.hidden_width),
            ("encoder_layers", a.encoder_layers),
            ("forget_gate_layers", a.forget_gate_layers),
            ("predictor_layers", a.predictor_layers),
            ("decoder_layers", a.decoder_layers),
            ("discriminator_layers", a.discriminator_layers),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        let _ = writeln!(s, "val_fraction = {:?}", self.val_fraction);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "early_stop = {}", self.early_stop);
        let _ = writeln!(s, "min_epochs = {}", self.min_epochs);
        let _ = writeln!(s, "noise_sigma = {:?}", self.noise_sigma);
        let _ = writeln!(s, "val_probe_every = {}", self.val_probe_every);
        let _ = writeln!(s, "val_probe_epochs = {}", self.val_probe_epochs);
        s
    }

    pub fn hash(&self) -> String {
        crate::data::hex(&Sha256::digest(self.to_text().as_bytes()))[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_grid() {
        let text = "# adult run\ndataset = adult\nseed = 7 # trailing\nrho = 0.1\n\ngrid.delta = 1, 10\ndata.sensitive = gender\n";
        let cfg = ConfigFile::parse(text).unwrap();
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.weights.rho, 0.1);
        assert_eq!(cfg.grid.delta, vec![1.0, 10.0]);
        assert_eq!(cfg.train.dataset_options["sensitive"], "gender");
    }

    #[test]
    fn unknown_key_rejected() {
        let err = ConfigFile::parse("learning_rat = 1").unwrap_err();
        assert!(err.to_string().contains("learning_rat"));
        assert!(ConfigFile::parse("k = ten").is_err());
        assert!(ConfigFile::parse("just words").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut t = TrainConfig {
            epochs: Some(3),
            seed: 9,
            ..Default::default()
        };
        t.arch.latent_dim = Some(12);
        t.dataset_options.insert("train".into(), "100".into());
        let back = ConfigFile::parse(&t.to_text()).unwrap().train;
        assert_eq!(back, t);
        assert_eq!(back.hash(), t.hash());
    }

    #[test]
    fn defaults_match_schedule() {
        let t = TrainConfig::default();
        assert_eq!((t.k, t.learning_rate, t.decay), (10, 1e-4, 1e-4));
        t.validate().unwrap();
        assert!(TrainConfig { k: 0, ..t }.validate().is_err());
    }
}
