//! Tab-separated plot data: one file per plot, one header line naming the
//! columns, rows keyed by iteration. Values are averaged over the runs of a
//! series; a value missing from any run prints as `nan`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use stoch_acfgm::optimizer::fmt_f64;
use stoch_acfgm::TrajectoryRecord;

use crate::error::{HarnessError, Result};

pub const GAP_FILE: &str = "gap_vs_k.tsv";
pub const ETA_FILE: &str = "eta_vs_k.tsv";
pub const BATCH_FILE: &str = "batches_vs_k.tsv";
pub const CALLS_FILE: &str = "calls_vs_gap.tsv";

/// A named curve: the runs (typically one per seed) it averages over.
#[derive(Clone, Debug)]
pub struct Series<'a> {
    pub name: String,
    pub runs: Vec<&'a [TrajectoryRecord]>,
}

impl<'a> Series<'a> {
    pub fn new(name: impl Into<String>, runs: Vec<&'a [TrajectoryRecord]>) -> Self {
        Self {
            name: name.into(),
            runs,
        }
    }

    fn mean(&self, k: usize, field: impl Fn(&TrajectoryRecord) -> Option<f64>) -> f64 {
        let mut sum = 0.0;
        for run in &self.runs {
            let v = run
                .binary_search_by_key(&k, |r| r.k)
                .ok()
                .and_then(|i| field(&run[i]));
            match v {
                Some(v) => sum += v,
                None => return f64::NAN,
            }
        }
        if self.runs.is_empty() {
            f64::NAN
        } else {
            sum / self.runs.len() as f64
        }
    }
}

fn iterations(series: &[Series]) -> Vec<usize> {
    let mut ks: Vec<usize> = series
        .iter()
        .flat_map(|s| s.runs.iter().flat_map(|r| r.iter().map(|x| x.k)))
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn cell(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        fmt_f64(v)
    }
}

type Field = fn(&TrajectoryRecord) -> Option<f64>;

fn table(series: &[Series], ks: &[usize], columns: &[(&str, Field)]) -> String {
    let mut out = String::from("k");
    for s in series {
        for (name, _) in columns {
            write!(out, "\t{name}:{}", s.name).unwrap();
        }
    }
    out.push('\n');
    for &k in ks {
        out.push_str(&k.to_string());
        for s in series {
            for (_, f) in columns {
                out.push('\t');
                out.push_str(&cell(s.mean(k, f)));
            }
        }
        out.push('\n');
    }
    out
}

/// Writes the four plot files into `dir` and returns their paths.
pub fn emit_plotdata(series: &[Series], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let ks = iterations(series);
    let files: [(&str, Vec<(&str, Field)>); 4] = [
        (GAP_FILE, vec![("gap", |r| r.gap)]),
        (ETA_FILE, vec![("eta", |r| Some(r.eta))]),
        (BATCH_FILE, vec![("m", |r| Some(r.m as f64)), ("n", |r| Some(r.n as f64))]),
        (
            CALLS_FILE,
            vec![("calls", |r| Some(r.calls_total as f64)), ("gap", |r| r.gap)],
        ),
    ];
    let mut written = Vec::new();
    for (name, columns) in files {
        let path = dir.join(name);
        std::fs::write(&path, table(series, &ks, &columns)).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Parses a plot file back into its header and numeric rows.
pub fn read_plotdata(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").split('\t').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split('\t').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    Ok((header, rows))
}
