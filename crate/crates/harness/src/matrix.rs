//! Experiment matrices: several labelled configurations on one problem and
//! one seed list, compared at a shared budget.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stoch_acfgm::optimizer::CSV_COLUMNS;
use stoch_acfgm::{CompositeProblem, RunOutput, TrajectoryRecord};

use crate::config::{parse_json, read_text, Emit, RunConfig};
use crate::error::{HarnessError, Result};
use crate::plotdata::{emit_plotdata, Series};
use crate::run::{run_seed, thread_pool};

pub const MERGED_FILE: &str = "comparison.csv";
pub const SUMMARY_FILE: &str = "comparison.json";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetAxis {
    #[default]
    Iterations,
    OracleCalls,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntry {
    pub label: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentMatrix {
    pub runs: Vec<MatrixEntry>,
    #[serde(default)]
    pub budget_axis: BudgetAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    /// `csv` writes the merged table; `plotdata` the per-label plot files.
    #[serde(default = "default_emit")]
    pub emit: Vec<Emit>,
}

fn default_emit() -> Vec<Emit> {
    vec![Emit::Csv, Emit::Json]
}

impl ExperimentMatrix {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: ExperimentMatrix = parse_json(text)?;
        for e in &mut m.runs {
            e.config.fill_defaults();
        }
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs.is_empty() {
            return Err(HarnessError::config("runs: at least one entry is required"));
        }
        let mut labels = BTreeSet::new();
        for (i, e) in self.runs.iter().enumerate() {
            if e.label.is_empty() || e.label.contains([',', '\t', '\n', '"']) {
                return Err(HarnessError::config(format!(
                    "runs[{i}].label: must be non-empty without commas, tabs, quotes or newlines"
                )));
            }
            if !labels.insert(e.label.as_str()) {
                return Err(HarnessError::config(format!("runs[{i}].label: duplicate label {:?}", e.label)));
            }
            e.config.validate().map_err(|err| match err {
                HarnessError::Config(m) => HarnessError::Config(format!("runs[{i}].config.{m}")),
                other => other,
            })?;
        }
        let first = &self.runs[0].config;
        for (i, e) in self.runs.iter().enumerate().skip(1) {
            if e.config.problem != first.problem {
                return Err(HarnessError::config(format!(
                    "runs[{i}].config.problem: comparisons require the same problem instance in every run"
                )));
            }
            if e.config.seeds != first.seeds {
                return Err(HarnessError::config(format!(
                    "runs[{i}].config.seeds: comparisons require the same seed list in every run"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Cell {
    pub label: String,
    pub seed: u64,
    pub output: RunOutput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelComparison {
    pub label: String,
    /// Mean over seeds of the last evaluated gap within the shared budget.
    pub mean_gap: Option<f64>,
    pub mean_total_calls: f64,
    pub mean_iterations: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub budget_axis: BudgetAxis,
    pub budget: u64,
    pub labels: Vec<LabelComparison>,
}

/// Runs every (label, seed) cell; the result is sorted by (label, seed).
pub fn run_matrix(problem: &CompositeProblem, m: &ExperimentMatrix) -> Result<Vec<Cell>> {
    let jobs: Vec<(&MatrixEntry, u64)> = m
        .runs
        .iter()
        .flat_map(|e| e.config.seeds.iter().map(move |&s| (e, s)))
        .collect();
    let pool = thread_pool()?;
    let results: Vec<Result<Cell>> = pool.install(|| {
        jobs.par_iter()
            .map(|(e, seed)| {
                log::info!("running {} seed {seed}", e.label);
                Ok(Cell {
                    label: e.label.clone(),
                    seed: *seed,
                    output: run_seed(problem, &e.config, *seed)?,
                })
            })
            .collect()
    });
    let mut cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    cells.sort_by(|a, b| (&a.label, a.seed).cmp(&(&b.label, b.seed)));
    Ok(cells)
}

/// Long-format CSV: `label,seed` followed by the record columns, one row per
/// (label, seed, k) in sorted order.
pub fn write_merged_csv<W: Write>(cells: &[Cell], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["label", "seed"];
    header.extend(CSV_COLUMNS);
    out.write_record(&header)?;
    for c in cells {
        let seed = c.seed.to_string();
        for r in &c.output.records {
            let mut row = vec![c.label.clone(), seed.clone()];
            row.extend(r.csv_fields());
            out.write_record(&row)?;
        }
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn position(r: &TrajectoryRecord, axis: BudgetAxis) -> u64 {
    match axis {
        BudgetAxis::Iterations => r.k as u64,
        BudgetAxis::OracleCalls => r.calls_total,
    }
}

/// Mean gaps at the largest budget every cell reached.
pub fn compare(cells: &[Cell], axis: BudgetAxis) -> Comparison {
    let budget = cells
        .iter()
        .map(|c| c.output.records.last().map_or(0, |r| position(r, axis)))
        .min()
        .unwrap_or(0);
    let mut labels: Vec<&str> = cells.iter().map(|c| c.label.as_str()).collect();
    labels.dedup();
    let labels = labels
        .into_iter()
        .map(|label| {
            let mine: Vec<&Cell> = cells.iter().filter(|c| c.label == label).collect();
            let n = mine.len() as f64;
            let gaps: Option<Vec<f64>> = mine
                .iter()
                .map(|c| {
                    c.output
                        .records
                        .iter()
                        .take_while(|r| position(r, axis) <= budget)
                        .filter_map(|r| r.gap)
                        .last()
                })
                .collect();
            LabelComparison {
                label: label.to_owned(),
                mean_gap: gaps.map(|g| g.iter().sum::<f64>() / n),
                mean_total_calls: mine.iter().map(|c| c.output.summary.total_calls as f64).sum::<f64>() / n,
                mean_iterations: mine.iter().map(|c| c.output.summary.iterations as f64).sum::<f64>() / n,
            }
        })
        .collect();
    Comparison {
        budget_axis: axis,
        budget,
        labels,
    }
}

pub fn write_matrix_outputs(m: &ExperimentMatrix, cells: &[Cell], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut written = Vec::new();
    if m.emit.contains(&Emit::Csv) {
        let path = dir.join(MERGED_FILE);
        let f = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
        write_merged_csv(cells, std::io::BufWriter::new(f))?;
        written.push(path);
    }
    if m.emit.contains(&Emit::Json) {
        let path = dir.join(SUMMARY_FILE);
        let mut text = serde_json::to_string_pretty(&compare(cells, m.budget_axis))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    if m.emit.contains(&Emit::Plotdata) {
        let series: Vec<Series> = m
            .runs
            .iter()
            .map(|e| {
                let runs = cells
                    .iter()
                    .filter(|c| c.label == e.label)
                    .map(|c| &c.output.records[..])
                    .collect();
                Series::new(e.label.clone(), runs)
            })
            .collect();
        written.extend(emit_plotdata(&series, dir)?);
    }
    Ok(written)
}
