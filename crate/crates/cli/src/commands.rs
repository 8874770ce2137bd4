use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use forgetnet_core::checkpoint;
use forgetnet_core::config::{ConfigFile, TrainConfig};
use forgetnet_core::data::{lookup, write_cache, DataBundle, DatasetManifest, LoadOptions};
use forgetnet_core::diagnostics::{channel_report, estimator, model_bound_trace, parse_channel_request, BoundReport};
use forgetnet_core::eval::{accuracy, evaluate, EvalReport, ProbeSpec};
use forgetnet_core::grid::grid_search;
use forgetnet_core::model::ForgettingModel;
use forgetnet_core::projection::{project_embeddings, projection_csv, silhouette, Which};
use forgetnet_core::trainer::{train, Status};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::{default_delta_method, for_dataset};
use crate::report::report_table;
use crate::{Cli, Command, Common};

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    args: &'a [String],
    version: &'static str,
    config: Option<String>,
    config_hash: Option<String>,
    dataset: Option<&'a DatasetManifest>,
    status: String,
    outputs: &'a BTreeMap<String, String>,
}

/// Output directory that remembers a digest of every file written.
struct Out {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Out {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.files.insert(name.to_string(), sha_hex(bytes));
        Ok(())
    }

    /// Records a file some other routine wrote into the directory.
    fn adopt(&mut self, name: &str) -> Result<()> {
        let p = self.path(name);
        let bytes = fs::read(&p).with_context(|| format!("reading {}", p.display()))?;
        self.files.insert(name.to_string(), sha_hex(&bytes));
        Ok(())
    }

    fn finish(
        mut self,
        command: &str,
        args: &[String],
        cfg: Option<&TrainConfig>,
        dataset: Option<&DatasetManifest>,
        status: &str,
    ) -> Result<()> {
        let m = RunManifest {
            command,
            args,
            version: env!("CARGO_PKG_VERSION"),
            config: cfg.map(TrainConfig::to_text),
            config_hash: cfg.map(TrainConfig::hash),
            dataset,
            status: status.to_string(),
            outputs: &self.files.clone(),
        };
        let json = serde_json::to_string_pretty(&m)?;
        self.write("manifest.json", json)
    }
}

/// Config file (if any), then command-line overrides.
fn resolve_config(common: &Common) -> Result<ConfigFile> {
    let mut cfg = match &common.config {
        Some(p) => ConfigFile::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ConfigFile::default(),
    };
    if let Some(s) = common.seed {
        cfg.train.seed = s;
    }
    if let Some(d) = &common.dataset {
        cfg.train.dataset = d.clone();
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn load_bundle(cfg: &TrainConfig, data_dir: &Path) -> Result<DataBundle> {
    let src = lookup(&cfg.dataset)?;
    let opts = LoadOptions {
        data_dir: data_dir.to_path_buf(),
        seed: cfg.seed,
        options: cfg.dataset_options.clone(),
    };
    src.load(&opts)
        .with_context(|| format!("loading dataset `{}` from {}", cfg.dataset, data_dir.display()))
}

pub fn dispatch(cli: &Cli, args: &[String]) -> Result<()> {
    match &cli.command {
        Command::Train { common } => cmd_train(common, args),
        Command::Gridsearch { common, jobs } => cmd_gridsearch(common, *jobs, args),
        Command::Eval { common, checkpoint } => cmd_eval(common, checkpoint, args),
        Command::Diagnose {
            common,
            checkpoint,
            channel_spec,
            sigma_eps,
            samples,
            estimator,
        } => cmd_diagnose(common, checkpoint.as_deref(), channel_spec.as_deref(), *sigma_eps, *samples, estimator, args),
        Command::Project {
            common,
            checkpoint,
            task,
            samples,
        } => cmd_project(common, checkpoint, *task, *samples, args),
        Command::Data { common } => cmd_data(common, args),
    }
}

fn probe_for(cfg: &TrainConfig) -> ProbeSpec {
    ProbeSpec {
        seed: cfg.seed,
        ..ProbeSpec::default()
    }
}

/// Evaluates `model` and writes the table, its CSV twin, per-split accuracy
/// and mask statistics. Returns the reports.
fn write_evaluation(out: &mut Out, model: &ForgettingModel, bundle: &DataBundle, cfg: &TrainConfig) -> Result<Vec<EvalReport>> {
    let mut reports = evaluate(model, &bundle.train, &bundle.test, &probe_for(cfg), &bundle.manifest.s_kind)?;
    for r in &mut reports {
        r.config_hash = cfg.hash();
        r.seed = cfg.seed;
    }
    let name = &bundle.manifest.name;
    let table = report_table(&reports, &for_dataset(name), default_delta_method(name))?;
    print!("{}", table.text);
    out.write("eval.txt", &table.text)?;
    out.write("eval.csv", &table.csv)?;
    out.write("eval.json", serde_json::to_string_pretty(&reports)?)?;

    let mut splits = String::from("split,task,a_y\n");
    let mut named: Vec<(&str, &forgetnet_core::data::Dataset)> = vec![("test", &bundle.test)];
    named.extend(bundle.extra.iter().map(|(n, d)| (n.as_str(), d)));
    for (n, d) in named {
        for j in 0..model.task_count() {
            let emb = model.embed(d.x(), j)?;
            let a = accuracy(&emb.y_logits.argmax_rows(), d.y(j));
            let _ = writeln!(splits, "{n},{j},{a}");
        }
    }
    out.write("splits.csv", splits)?;

    let mut masks = String::from("task,dimension,mean,variance,mid_fraction\n");
    for j in 0..model.task_count() {
        let s = model.mask_statistics(bundle.test.x(), j)?;
        for i in 0..s.mean.len() {
            let _ = writeln!(masks, "{j},{i},{},{},{}", s.mean[i], s.variance[i], s.mid_fraction[i]);
        }
        log::info!("task {j}: {:.3} of mask dimensions undecided", s.undecided_dims);
    }
    out.write("masks.csv", masks)?;
    Ok(reports)
}

fn cmd_train(common: &Common, args: &[String]) -> Result<()> {
    let cfg = resolve_config(common)?.train;
    let bundle = load_bundle(&cfg, &common.data_dir)?;
    let mut out = Out::new(&common.out)?;
    out.write("config.cfg", cfg.to_text())?;
    let outcome = train(&cfg, &bundle)?;
    out.write("train_log.csv", outcome.log.to_csv())?;
    let status = match &outcome.status {
        Status::Completed => "completed".to_string(),
        Status::EarlyStopped { epoch } => format!("early-stopped at epoch {epoch}"),
        Status::Diverged { cycle, reason } => format!("diverged at cycle {cycle}: {reason}"),
    };
    let model_path = out.path("model.frgt");
    checkpoint::save(&outcome.model, &model_path)?;
    out.adopt("model.frgt")?;
    if matches!(outcome.status, Status::Diverged { .. }) {
        out.finish("train", args, Some(&cfg), Some(&bundle.manifest), &status)?;
        outcome.into_result()?;
        unreachable!("divergence is an error");
    }
    write_evaluation(&mut out, &outcome.model, &bundle, &cfg)?;
    log::info!("{status} after {} epochs", outcome.epochs_run);
    out.finish("train", args, Some(&cfg), Some(&bundle.manifest), &status)
}

fn cmd_gridsearch(common: &Common, jobs: usize, args: &[String]) -> Result<()> {
    let cfg = resolve_config(common)?;
    if cfg.grid.is_empty() {
        bail!("gridsearch needs grid.rho, grid.delta or grid.lambda in the config");
    }
    let bundle = load_bundle(&cfg.train, &common.data_dir)?;
    let mut out = Out::new(&common.out)?;
    let results = grid_search(&cfg.train, &cfg.grid, &bundle, &probe_for(&cfg.train), jobs)?;
    let mut csv = String::from("rank,rho,delta,lambda,status,mean_a_y,mean_a_s_gap,config_hash\n");
    for (i, r) in results.iter().enumerate() {
        let w = r.config.weights;
        let status = match r.status {
            Status::Diverged { .. } => "diverged",
            Status::EarlyStopped { .. } => "early-stopped",
            Status::Completed => "completed",
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{status},{},{},{}",
            i + 1,
            w.rho,
            w.delta,
            w.lambda,
            r.mean_a_y(),
            r.mean_gap(),
            r.config.hash()
        );
    }
    print!("{csv}");
    out.write("grid.csv", csv)?;
    let best = &results[0];
    out.write("best.cfg", best.config.to_text())?;
    out.finish("gridsearch", args, Some(&cfg.train), Some(&bundle.manifest), "completed")
}

fn load_model(path: &Path, bundle: &DataBundle) -> Result<ForgettingModel> {
    let model = checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if model.arch().input_width != bundle.manifest.feature_width {
        bail!(
            "checkpoint expects {} input features but `{}` has {}",
            model.arch().input_width,
            bundle.manifest.name,
            bundle.manifest.feature_width
        );
    }
    Ok(model)
}

fn cmd_eval(common: &Common, ckpt: &Path, args: &[String]) -> Result<()> {
    let cfg = resolve_config(common)?.train;
    let bundle = load_bundle(&cfg, &common.data_dir)?;
    let model = load_model(ckpt, &bundle)?;
    let mut out = Out::new(&common.out)?;
    write_evaluation(&mut out, &model, &bundle, &cfg)?;
    out.finish("eval", args, Some(&cfg), Some(&bundle.manifest), "completed")
}

fn head(d: &forgetnet_core::data::Dataset, n: usize) -> forgetnet_core::data::Dataset {
    let rows: Vec<usize> = (0..d.len().min(n)).collect();
    d.select(&rows)
}

fn cmd_diagnose(
    common: &Common,
    ckpt: Option<&Path>,
    spec: Option<&Path>,
    sigma_eps: f64,
    samples: usize,
    estimator_name: &str,
    args: &[String],
) -> Result<()> {
    let (report, cfg, bundle): (BoundReport, Option<TrainConfig>, Option<DataBundle>) = match (spec, ckpt) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let req = parse_channel_request(&text)?;
            let est = estimator(&req.estimator)?;
            let mut rng = ChaCha8Rng::seed_from_u64(common.seed.unwrap_or(req.seed));
            (channel_report(&req.spec, req.samples, est.as_ref(), &mut rng)?, None, None)
        }
        (None, Some(path)) => {
            let cfg = resolve_config(common)?.train;
            let bundle = load_bundle(&cfg, &common.data_dir)?;
            let model = load_model(path, &bundle)?;
            let est = estimator(estimator_name)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let sample = head(&bundle.test, samples);
            let r = model_bound_trace(&model, sample.x(), 0, sigma_eps, est.as_ref(), &mut rng)?;
            (r, Some(cfg), Some(bundle))
        }
        _ => bail!("diagnose needs exactly one of --channel-spec or --checkpoint"),
    };
    let csv = report.to_csv();
    print!("{csv}");
    let mut out = Out::new(&common.out)?;
    out.write("bounds.csv", csv)?;
    out.finish("diagnose", args, cfg.as_ref(), bundle.as_ref().map(|b| &b.manifest), "completed")
}

fn cmd_project(common: &Common, ckpt: &Path, task: usize, samples: usize, args: &[String]) -> Result<()> {
    let cfg = resolve_config(common)?.train;
    let bundle = load_bundle(&cfg, &common.data_dir)?;
    let model = load_model(ckpt, &bundle)?;
    let sample = head(&bundle.test, samples);
    let mut out = Out::new(&common.out)?;
    let mut summary = String::from("embedding,silhouette_y,silhouette_s,explained_pc1,explained_pc2\n");
    for (which, name) in [(Which::Z, "z"), (Which::ZTilde, "z_tilde")] {
        let (p, y, s) = project_embeddings(&model, &sample, task, which)?;
        out.write(&format!("projection_{name}.csv"), projection_csv(&p, &y, &s))?;
        let _ = writeln!(
            summary,
            "{name},{},{},{},{}",
            silhouette(&p.coords, &y),
            silhouette(&p.coords, &s),
            p.explained[0],
            p.explained[1]
        );
    }
    print!("{summary}");
    out.write("projection_summary.csv", summary)?;
    out.finish("project", args, Some(&cfg), Some(&bundle.manifest), "completed")
}

fn cmd_data(common: &Common, args: &[String]) -> Result<()> {
    let cfg = resolve_config(common)?.train;
    let bundle = load_bundle(&cfg, &common.data_dir)?;
    let mut out = Out::new(&common.out)?;
    let (mpath, bpath) = write_cache(&bundle, &out.dir)?;
    for p in [mpath, bpath] {
        let name = p.file_name().and_then(|n| n.to_str()).context("cache file name")?.to_string();
        out.adopt(&name)?;
    }
    for (name, n) in &bundle.manifest.splits {
        println!("{name}: {n} rows");
    }
    out.finish("data", args, Some(&cfg), Some(&bundle.manifest), "completed")
}
