//! JSON run configuration.
//!
//! ```json
//! {
//!   "problem": { "generate": { "generator": "quadratic", "dim": 10 }, "seed": 7 },
//!   "schedule": { "variant": { "kind": "a" }, "beta": 0.125, "eta1": 0.5, "d_tilde": 1.0 },
//!   "stop": { "iterations": 60 },
//!   "seeds": [1, 2, 3],
//!   "outputs": "out",
//!   "emit": ["csv", "json", "plotdata"]
//! }
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use stoch_acfgm::problem::generators::GeneratorSpec;
use stoch_acfgm::{BaselineKind, BaselineParams, CompositeProblem, RunOptions, ScheduleConfig, Stop, Variant};

use crate::error::{HarnessError, Result};

/// Where the problem comes from: a saved JSON document or a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GeneratorSpec>,
    /// Generator seed; ignored for `path`.
    #[serde(default)]
    pub seed: u64,
}

impl ProblemSource {
    pub fn load(&self) -> Result<CompositeProblem> {
        match (&self.path, &self.generate) {
            (Some(p), None) => Ok(CompositeProblem::load(p)?),
            (None, Some(g)) => Ok(g.build(self.seed)?),
            _ => Err(HarnessError::config("problem: exactly one of `path` or `generate` must be given")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    #[default]
    Acfgm,
    Baseline {
        baseline: BaselineKind,
        #[serde(default)]
        params: BaselineParams,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Csv,
    Json,
    Plotdata,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunFlags {
    pub gap_every: usize,
    pub record_every: usize,
    pub reduced_gradient: bool,
    pub track_exact: bool,
    pub wall_time: bool,
}

impl Default for RunFlags {
    fn default() -> Self {
        Self {
            gap_every: 1,
            record_every: 1,
            reduced_gradient: false,
            track_exact: false,
            wall_time: false,
        }
    }
}

fn default_emit() -> Vec<Emit> {
    vec![Emit::Csv]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSource,
    #[serde(default)]
    pub method: Method,
    /// Required for `acfgm`; unused by baselines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleConfig>,
    pub stop: Stop,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    #[serde(default = "default_emit")]
    pub emit: Vec<Emit>,
    #[serde(default)]
    pub options: RunFlags,
}

/// Deserializes with the failing field path in the message.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            HarnessError::config(inner.to_string())
        } else {
            HarnessError::config(format!("{path}: {inner}"))
        }
    })
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

const SCHEDULE_FIELDS: [&str; 11] = [
    "beta",
    "eta1",
    "d_tilde",
    "horizon",
    "lambda",
    "v0",
    "constants",
    "inflation",
    "p_n",
    "batch_cap",
    "proxy_factor",
];

/// Prefixes a schedule validation message with the field it names.
fn schedule_path(msg: &str) -> String {
    let first = msg.split_whitespace().next().unwrap_or("");
    let field = if msg.contains("horizon") {
        "horizon"
    } else if first == "lambda" {
        "variant.lambda"
    } else if SCHEDULE_FIELDS.contains(&first) {
        first
    } else {
        return format!("schedule: {msg}");
    };
    format!("schedule.{field}: {msg}")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = parse_json(text)?;
        cfg.fill_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }

    /// Variant A's horizon defaults to the iteration budget of `stop`.
    pub fn fill_defaults(&mut self) {
        if let Some(s) = &mut self.schedule {
            if s.variant == Variant::A && s.horizon.is_none() {
                s.horizon = Some(self.stop.max_iterations());
            }
        }
        self.emit.sort();
        self.emit.dedup();
    }

    /// Checks every field before any computation.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(HarnessError::Config(m));
        match (&self.problem.path, &self.problem.generate) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return err("problem: exactly one of `path` or `generate` must be given".into()),
        }
        match self.stop {
            Stop::Iterations(0) => return err("stop.iterations: must be at least 1".into()),
            Stop::TargetGap {
                epsilon,
                max_iterations,
            } => {
                if !(epsilon.is_finite() && epsilon > 0.0) {
                    return err(format!("stop.target_gap.epsilon: must be positive, got {epsilon}"));
                }
                if max_iterations == 0 {
                    return err("stop.target_gap.max_iterations: must be at least 1".into());
                }
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return err("seeds: at least one seed is required".into());
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return err("seeds: seeds must be unique".into());
        }
        match &self.method {
            Method::Acfgm => {
                let Some(s) = &self.schedule else {
                    return err("schedule: required for method `acfgm`".into());
                };
                if let Err(e) = s.validate() {
                    let msg = match e {
                        stoch_acfgm::Error::Contract(m) => m,
                        other => other.to_string(),
                    };
                    return err(schedule_path(&msg));
                }
                if let (Variant::A, Some(h)) = (s.variant, s.horizon) {
                    if h < self.stop.max_iterations() {
                        return err(format!(
                            "schedule.horizon: variant A horizon {h} is shorter than the iteration budget {}",
                            self.stop.max_iterations()
                        ));
                    }
                }
            }
            Method::Baseline { params, .. } => {
                let positive = |name: &str, v: f64| {
                    if v.is_finite() && v > 0.0 {
                        Ok(())
                    } else {
                        err(format!("method.params.{name}: must be positive, got {v}"))
                    }
                };
                positive("beta", params.beta)?;
                positive("eta1", params.eta1)?;
                positive("d_tilde", params.d_tilde)?;
                if let Some(t) = params.theta {
                    positive("theta", t)?;
                }
                if let Some(l) = params.l {
                    positive("l", l)?;
                }
                if params.batch_cap == 0 {
                    return err("method.params.batch_cap: must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn run_options(&self, seed: u64) -> RunOptions {
        let mut o = RunOptions::new(seed, self.stop);
        o.gap_every = self.options.gap_every;
        o.record_every = self.options.record_every;
        o.reduced_gradient = self.options.reduced_gradient;
        o.track_exact = self.options.track_exact;
        o.wall_time = self.options.wall_time;
        o
    }

    pub fn emits(&self, e: Emit) -> bool {
        self.emit.contains(&e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "problem": { "generate": { "generator": "quadratic", "dim": 3, "components": 5 } },
            "schedule": { "variant": { "kind": "a" }, "beta": 0.125, "eta1": 1.0, "d_tilde": 1.0 },
            "stop": { "iterations": 7 },
            "seeds": [1, 2]
        })
    }

    fn parse(v: serde_json::Value) -> Result<RunConfig> {
        RunConfig::from_json(&v.to_string())
    }

    #[test]
    fn horizon_defaults_to_iteration_budget() {
        let cfg = parse(base()).unwrap();
        assert_eq!(cfg.schedule.unwrap().horizon, Some(7));
        assert_eq!(cfg.emit, vec![Emit::Csv]);
        assert_eq!(cfg.options.gap_every, 1);
    }

    #[test]
    fn invalid_beta_names_the_field() {
        let mut v = base();
        v["schedule"]["beta"] = serde_json::json!(0.5);
        let e = parse(v).unwrap_err().to_string();
        assert!(e.contains("schedule.beta") && e.contains("(0, 1/8]"), "{e}");
    }

    #[test]
    fn unknown_fields_are_reported_with_their_path() {
        let mut v = base();
        v["schedule"]["betta"] = serde_json::json!(0.1);
        let e = parse(v).unwrap_err().to_string();
        assert!(e.contains("schedule") && e.contains("betta"), "{e}");
        let mut v = base();
        v["problem"]["generate"]["dimm"] = serde_json::json!(3);
        let e = parse(v).unwrap_err().to_string();
        assert!(e.contains("problem.generate") && e.contains("dimm"), "{e}");
    }

    #[test]
    fn structural_errors() {
        let mut v = base();
        v["seeds"] = serde_json::json!([]);
        assert!(parse(v).unwrap_err().to_string().contains("seeds"));
        let mut v = base();
        v["seeds"] = serde_json::json!([3, 3]);
        assert!(parse(v).unwrap_err().to_string().contains("unique"));
        let mut v = base();
        v["problem"]["path"] = serde_json::json!("p.json");
        assert!(parse(v).unwrap_err().to_string().contains("exactly one"));
        let mut v = base();
        v["schedule"]["horizon"] = serde_json::json!(3);
        assert!(parse(v).unwrap_err().to_string().contains("schedule.horizon"));
        let mut v = base();
        v["schedule"]["variant"] = serde_json::json!({ "kind": "hp", "lambda": -1.0 });
        v["schedule"]["beta"] = serde_json::json!(0.1);
        assert!(parse(v).unwrap_err().to_string().contains("schedule.variant.lambda"));
        let mut v = base();
        v["stop"] = serde_json::json!({ "iterations": 0 });
        assert!(parse(v).unwrap_err().to_string().contains("stop.iterations"));
    }

    #[test]
    fn baselines_need_no_schedule() {
        let mut v = base();
        v.as_object_mut().unwrap().remove("schedule");
        v["method"] = serde_json::json!({ "kind": "baseline", "baseline": "plain_sgd", "params": { "theta": 0.5 } });
        let cfg = parse(v).unwrap();
        assert!(matches!(cfg.method, Method::Baseline { baseline: BaselineKind::PlainSgd, .. }));
        let mut v = base();
        v.as_object_mut().unwrap().remove("schedule");
        assert!(parse(v).unwrap_err().to_string().contains("schedule"));
    }
}
