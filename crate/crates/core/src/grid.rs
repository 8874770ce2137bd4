//! Powers-of-ten grid search over the loss weights.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::{Grid, TrainConfig};
use crate::data::DataBundle;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, ProbeSpec};
use crate::trainer::{train, validation_split, Status, TrainOutcome};

#[derive(Debug, Clone)]
pub struct GridResult {
    pub config: TrainConfig,
    /// Validation reports, one per task; empty when training diverged.
    pub reports: Vec<EvalReport>,
    pub status: Status,
}

impl GridResult {
    pub fn mean_gap(&self) -> f64 {
        mean(self.reports.iter().map(EvalReport::a_s_gap))
    }

    pub fn mean_a_y(&self) -> f64 {
        mean(self.reports.iter().map(|r| r.a_y))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn is_power_of_ten(v: f64) -> bool {
    v > 0.0 && v.is_finite() && {
        let e = v.log10();
        (e - e.round()).abs() < 1e-9
    }
}

/// All weight combinations, in `rho`-major order. Axes left empty keep
/// the base value.
pub fn expand(base: &TrainConfig, grid: &Grid) -> Result<Vec<TrainConfig>> {
    if grid.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    for (name, axis) in [("rho", &grid.rho), ("delta", &grid.delta), ("lambda", &grid.lambda)] {
        if let Some(v) = axis.iter().find(|v| !is_power_of_ten(**v)) {
            return Err(Error::Config(format!("grid.{name}: {v} is not a power of 10")));
        }
    }
    let or_base = |axis: &[f64], b: f64| if axis.is_empty() { vec![b] } else { axis.to_vec() };
    let w = base.weights;
    let mut out = Vec::new();
    for &rho in &or_base(&grid.rho, w.rho) {
        for &delta in &or_base(&grid.delta, w.delta) {
            for &lambda in &or_base(&grid.lambda, w.lambda) {
                let mut c = base.clone();
                c.weights.rho = rho;
                c.weights.delta = delta;
                c.weights.lambda = lambda;
                out.push(c);
            }
        }
    }
    Ok(out)
}

fn run_point(config: &TrainConfig, data: &DataBundle, probe: &ProbeSpec) -> Result<GridResult> {
    let TrainOutcome { model, status, .. } = train(config, data)?;
    if matches!(status, Status::Diverged { .. }) {
        return Ok(GridResult {
            config: config.clone(),
            reports: Vec::new(),
            status,
        });
    }
    let (fit, val) = validation_split(config, &data.train);
    let val = val.unwrap_or_else(|| data.test.clone());
    let mut reports = evaluate(&model, &fit, &val, probe, &data.manifest.s_kind)?;
    let hash = config.hash();
    for r in &mut reports {
        r.config_hash = hash.clone();
    }
    Ok(GridResult {
        config: config.clone(),
        reports,
        status,
    })
}

/// Trains every grid point and ranks them by mean `A_s` gap to optimal
/// (ascending), then by mean `A_y` (descending). Diverged runs rank last.
pub fn grid_search(
    base: &TrainConfig,
    grid: &Grid,
    data: &DataBundle,
    probe: &ProbeSpec,
    jobs: usize,
) -> Result<Vec<GridResult>> {
    let configs = expand(base, grid)?;
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<GridResult>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, configs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(i) else { break };
                log::info!("grid point {}/{}: {:?}", i + 1, configs.len(), cfg.weights);
                let r = run_point(cfg, data, probe);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut results = slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every grid point ran"))
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| {
        let key = |r: &GridResult| {
            if r.reports.is_empty() {
                (f64::INFINITY, 0.0)
            } else {
                (r.mean_gap(), -r.mean_a_y())
            }
        };
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
    });
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn powers_of_ten() {
        for v in [1e-3, 0.01, 1.0, 10.0, 1e4] {
            assert!(is_power_of_ten(v), "{v}");
        }
        for v in [0.0, -1.0, 2.0, 0.5, f64::NAN] {
            assert!(!is_power_of_ten(v), "{v}");
        }
    }

    #[test]
    fn expansion_cardinality() {
        let grid = Grid {
            rho: vec![0.1, 1.0],
            delta: vec![1.0, 10.0],
            lambda: vec![0.01, 0.1],
        };
        assert_eq!(expand(&TrainConfig::default(), &grid).unwrap().len(), 8);
        let single = Grid {
            delta: vec![10.0],
            ..Default::default()
        };
        let one = expand(&TrainConfig::default(), &single).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].weights.delta, 10.0);
        assert!(expand(&TrainConfig::default(), &Grid::default()).is_err());
        let bad = Grid {
            rho: vec![3.0],
            ..Default::default()
        };
        assert!(expand(&TrainConfig::default(), &bad).is_err());
    }
}
