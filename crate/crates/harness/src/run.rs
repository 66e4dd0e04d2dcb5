//! Executing a configuration and writing its outputs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use stoch_acfgm::optimizer::write_records_csv;
use stoch_acfgm::problem::generators::{GeneratorSpec, QuadraticSpec};
use stoch_acfgm::{run, run_baseline, CompositeProblem, RunOutput};

use crate::config::{Emit, Method, RunConfig};
use crate::error::{HarnessError, Result};
use crate::plotdata::{emit_plotdata, Series};

pub const THREADS_ENV: &str = "STOCH_ACFGM_THREADS";

/// The problem used when no configuration names one: a 200-component,
/// 10-dimensional quadratic with condition number 100 and gradient noise 0.01.
pub fn bundled_problem() -> (GeneratorSpec, u64) {
    let spec = QuadraticSpec {
        dim: 10,
        components: 200,
        condition: 100.0,
        l_max: 1.0,
        heterogeneity: 0.0,
        noise: 0.01,
        distance: 1.0,
    };
    (GeneratorSpec::Quadratic(spec), 7)
}

/// Thread pool for independent cells, capped by `STOCH_ACFGM_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => b = b.num_threads(n),
            _ => return Err(HarnessError::config(format!("{THREADS_ENV}: expected a positive integer, got {v:?}"))),
        }
    }
    b.build()
        .map_err(|e| HarnessError::config(format!("{THREADS_ENV}: cannot build thread pool: {e}")))
}

pub fn run_seed(problem: &CompositeProblem, cfg: &RunConfig, seed: u64) -> Result<RunOutput> {
    let opts = cfg.run_options(seed);
    let out = match &cfg.method {
        Method::Acfgm => {
            let schedule = cfg
                .schedule
                .as_ref()
                .ok_or_else(|| HarnessError::config("schedule: required for method `acfgm`"))?;
            run(problem, schedule, &opts)?
        }
        Method::Baseline { baseline, params } => run_baseline(problem, *baseline, params, &opts)?,
    };
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub output: RunOutput,
}

/// Runs every seed of `cfg`, in parallel, returning results in seed-list order.
pub fn run_config(problem: &CompositeProblem, cfg: &RunConfig) -> Result<Vec<SeedRun>> {
    let pool = thread_pool()?;
    let results: Vec<Result<SeedRun>> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                log::info!("running seed {seed}");
                Ok(SeedRun {
                    seed,
                    output: run_seed(problem, cfg, seed)?,
                })
            })
            .collect()
    });
    results.into_iter().collect()
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))
}

/// Writes the emitted artifacts of a completed run into `dir`:
/// `records_seed<S>.csv`, `summary_seed<S>.json` and the plot files.
pub fn write_outputs(cfg: &RunConfig, runs: &[SeedRun], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    for r in runs {
        if cfg.emits(Emit::Csv) {
            let path = dir.join(format!("records_seed{}.csv", r.seed));
            write_records_csv(&r.output.records, create(&path)?)?;
            written.push(path);
        }
        if cfg.emits(Emit::Json) {
            let path = dir.join(format!("summary_seed{}.json", r.seed));
            let mut text = serde_json::to_string_pretty(&r.output.summary)?;
            text.push('\n');
            std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
            written.push(path);
        }
    }
    if cfg.emits(Emit::Plotdata) {
        let series: Vec<Series> = runs
            .iter()
            .map(|r| Series::new(format!("seed_{}", r.seed), vec![&r.output.records[..]]))
            .collect();
        written.extend(emit_plotdata(&series, dir)?);
    }
    Ok(written)
}
