//! Named dataset sources with their default architectures and budgets.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::{
    gen_biased_tabular, gen_shapes, load_adult, load_german, BiasedSpec, DataBundle, DataError,
    DatasetManifest, GermanSensitive, MnistRotSource, ShapesSpec,
};
use crate::model::{ArchSpec, TaskArch};
use crate::nn::Activation;

/// Where and how to load a dataset. `options` holds source-specific
/// `key = value` settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub data_dir: PathBuf,
    pub seed: u64,
    pub options: BTreeMap<String, String>,
}

impl LoadOptions {
    pub fn new(data_dir: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            data_dir: data_dir.into(),
            seed,
            options: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.options.insert(key.to_string(), value.to_string());
        self
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, DataError> {
        match self.options.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| DataError::Invalid(format!("option `{key}`: cannot parse `{v}`"))),
        }
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<(), DataError> {
        match self.options.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(DataError::Invalid(format!(
                "unknown dataset option `{k}` (allowed: {})",
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

pub trait DatasetSource: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn load(&self, opts: &LoadOptions) -> Result<DataBundle, DataError>;
    /// Default network shapes for a bundle produced by this source.
    fn arch(&self, manifest: &DatasetManifest) -> ArchSpec;
    fn default_epochs(&self) -> usize;
    fn default_batch_size(&self) -> usize {
        128
    }
}

fn tasks(m: &DatasetManifest) -> Vec<TaskArch> {
    m.y_classes
        .iter()
        .zip(&m.s_classes)
        .map(|(&y, &s)| TaskArch {
            y_classes: y,
            s_classes: s,
        })
        .collect()
}

fn image_arch(m: &DatasetManifest) -> ArchSpec {
    ArchSpec {
        input_width: m.feature_width,
        latent_dim: 32,
        hidden_width: 64,
        encoder_layers: 2,
        forget_gate_layers: 2,
        predictor_layers: 2,
        decoder_layers: 2,
        discriminator_layers: 2,
        encoder_output: Activation::Relu,
        decoder_output: Activation::Sigmoid,
        tasks: tasks(m),
    }
}

struct Adult;

impl DatasetSource for Adult {
    fn name(&self) -> &'static str {
        "adult"
    }
    fn description(&self) -> &'static str {
        "UCI Adult income; s = binarized age"
    }
    fn load(&self, opts: &LoadOptions) -> Result<DataBundle, DataError> {
        opts.check_keys(&[])?;
        load_adult(&opts.data_dir)
    }
    fn arch(&self, m: &DatasetManifest) -> ArchSpec {
        ArchSpec::tabular(m.feature_width, tasks(m))
    }
    fn default_epochs(&self) -> usize {
        100
    }
}

struct German;

impl DatasetSource for German {
    fn name(&self) -> &'static str {
        "german"
    }
    fn description(&self) -> &'static str {
        "UCI German credit; s = age > 25 (option sensitive = gender)"
    }
    fn load(&self, opts: &LoadOptions) -> Result<DataBundle, DataError> {
        opts.check_keys(&["sensitive"])?;
        let key: String = opts.get("sensitive", "age".to_string())?;
        let sensitive = GermanSensitive::parse(&key)
            .ok_or_else(|| DataError::Invalid(format!("sensitive must be age or gender, got `{key}`")))?;
        load_german(&opts.data_dir, sensitive, opts.seed)
    }
    fn arch(&self, m: &DatasetManifest) -> ArchSpec {
        ArchSpec::tabular(m.feature_width, tasks(m))
    }
    fn default_epochs(&self) -> usize {
        100
    }
    fn default_batch_size(&self) -> usize {
        64
    }
}

struct MnistRot;

impl DatasetSource for MnistRot {
    fn name(&self) -> &'static str {
        "mnist-rot"
    }
    fn description(&self) -> &'static str {
        "rotated digits; s = rotation angle (5 classes)"
    }
    fn load(&self, opts: &LoadOptions) -> Result<DataBundle, DataError> {
        opts.check_keys(&["subsample", "test_fraction", "all_angles"])?;
        let d = MnistRotSource::default();
        MnistRotSource {
            subsample: opts.get("subsample", d.subsample)?,
            test_fraction: opts.get("test_fraction", d.test_fraction)?,
            all_angles: opts.get("all_angles", d.all_angles)?,
        }
        .load(&opts.data_dir, opts.seed)
    }
    fn arch(&self, m: &DatasetManifest) -> ArchSpec {
        image_arch(m)
    }
    fn default_epochs(&self) -> usize {
        50
    }
}

struct Shapes;

impl DatasetSource for Shapes {
    fn name(&self) -> &'static str {
        "shapes"
    }
    fn description(&self) -> &'static str {
        "synthetic sprites, two tasks: shape vs side, scale vs orientation"
    }
    fn load(&self, opts: &LoadOptions) -> Result<DataBundle, DataError> {
        opts.check_keys(&["train", "test", "size"])?;
        let d = ShapesSpec::default();
        let spec = ShapesSpec {
            train: opts.get("train", d.train)?,
            test: opts.get("test", d.test)?,
            size: opts.get("size", d.size)?,
            ..d
        };
        gen_shapes(&spec, opts.seed)
    }
    fn arch(&self, m: &DatasetManifest) -> ArchSpec {
        image_arch(m)
    }
    fn default_epochs(&self) -> usize {
        50
    }
}

struct Biased;

impl DatasetSource for Biased {
    fn name(&self) -> &'static str {
        "biased"
    }
    fn description(&self) -> &'static str {
        "Gaussian testbed with tunable y/s coupling"
    }
    fn load(&self, opts: &LoadOptions) -> Result<DataBundle, DataError> {
        opts.check_keys(&["correlation", "train", "test"])?;
        let d = BiasedSpec::default();
        let spec = BiasedSpec {
            correlation: opts.get("correlation", d.correlation)?,
            train: opts.get("train", d.train)?,
            test: opts.get("test", d.test)?,
            ..d
        };
        gen_biased_tabular(&spec, opts.seed)
    }
    fn arch(&self, m: &DatasetManifest) -> ArchSpec {
        let mut a = ArchSpec::tabular(m.feature_width, tasks(m));
        a.latent_dim = 8;
        a.hidden_width = 32;
        a
    }
    fn default_epochs(&self) -> usize {
        30
    }
}

/// All built-in sources.
pub fn registry() -> Vec<Box<dyn DatasetSource>> {
    vec![
        Box::new(Adult),
        Box::new(German),
        Box::new(MnistRot),
        Box::new(Shapes),
        Box::new(Biased),
    ]
}

pub fn lookup(name: &str) -> Result<Box<dyn DatasetSource>, DataError> {
    registry()
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| DataError::UnknownDataset(name.to_string()))
}
