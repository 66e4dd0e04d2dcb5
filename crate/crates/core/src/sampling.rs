//! Keyed sampling streams and the filtration log.
//!
//! Every batch is drawn from its own ChaCha8 stream whose 256-bit key packs
//! `(master_seed, iteration, kind)`. Batch sizes are data dependent, so a
//! single sequential generator would let one stream's size shift another
//! stream's draws; keyed streams keep every `(kind, iteration)` pair
//! independent of all others and make any draw reproducible in isolation.
//! Indices are i.i.d. uniform over the components (with replacement).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StreamKind {
    MainUpdate,
    StepGradDiff,
    StepTaylor,
    VarMain,
    VarGradDiff,
    VarTaylor,
}

impl StreamKind {
    pub const ALL: [StreamKind; 6] = [
        StreamKind::MainUpdate,
        StreamKind::StepGradDiff,
        StreamKind::StepTaylor,
        StreamKind::VarMain,
        StreamKind::VarGradDiff,
        StreamKind::VarTaylor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Position within an iteration: the main batch comes first, then the
    /// gradient-difference batch, then the Taylor batch. Variance batches share
    /// the phase of their counterpart.
    pub fn phase(self) -> u8 {
        match self {
            StreamKind::MainUpdate | StreamKind::VarMain => 0,
            StreamKind::StepGradDiff | StreamKind::VarGradDiff => 1,
            StreamKind::StepTaylor | StreamKind::VarTaylor => 2,
        }
    }

    pub fn is_variance(self) -> bool {
        matches!(
            self,
            StreamKind::VarMain | StreamKind::VarGradDiff | StreamKind::VarTaylor
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            StreamKind::MainUpdate => "MainUpdate",
            StreamKind::StepGradDiff => "StepGradDiff",
            StreamKind::StepTaylor => "StepTaylor",
            StreamKind::VarMain => "VarMain",
            StreamKind::VarGradDiff => "VarGradDiff",
            StreamKind::VarTaylor => "VarTaylor",
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StreamKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown stream kind {s:?}")))
    }
}

/// A batch of component indices belonging to exactly one stream.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchDraw {
    pub kind: StreamKind,
    pub iteration: usize,
    pub indices: Vec<usize>,
}

impl BatchDraw {
    /// A batch with caller-chosen indices (tests, full-gradient baselines).
    pub fn forced(kind: StreamKind, iteration: usize, indices: Vec<usize>) -> Self {
        Self {
            kind,
            iteration,
            indices,
        }
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }
}

fn stream_key(seed: u64, kind: StreamKind, iteration: usize) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(iteration as u64).to_le_bytes());
    key[16] = kind as u8 + 1;
    key
}

/// Draws `size` i.i.d. uniform indices in `[0, m)` from the stream keyed by
/// `(seed, kind, iteration)`. The `p`-th index depends only on the key and `p`.
pub fn draw_batch(seed: u64, kind: StreamKind, iteration: usize, size: usize, m: usize) -> Result<BatchDraw> {
    if size == 0 {
        return contract("batch size must be at least 1");
    }
    if m == 0 {
        return contract("cannot sample from zero components");
    }
    let mut rng = ChaCha8Rng::from_seed(stream_key(seed, kind, iteration));
    let indices = (0..size).map(|_| rng.random_range(0..m)).collect();
    Ok(BatchDraw {
        kind,
        iteration,
        indices,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub kind: StreamKind,
    pub size: usize,
    pub cumulative_calls: u64,
}

/// Ordered record of every batch drawn in a run, with running call counters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FiltrationLog {
    pub entries: Vec<LogEntry>,
    pub calls_by_kind: [u64; 6],
    pub total_calls: u64,
}

impl FiltrationLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a batch of `size` oracle calls.
    pub fn record(&mut self, iteration: usize, kind: StreamKind, size: usize) {
        self.total_calls += size as u64;
        self.calls_by_kind[kind.index()] += size as u64;
        self.entries.push(LogEntry {
            iteration,
            kind,
            size,
            cumulative_calls: self.total_calls,
        });
    }

    pub fn calls(&self, kind: StreamKind) -> u64 {
        self.calls_by_kind[kind.index()]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "kind", "size", "cumulative_calls"])?;
        for e in &self.entries {
            out.write_record([
                e.iteration.to_string(),
                e.kind.name().to_string(),
                e.size.to_string(),
                e.cumulative_calls.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is ascii"))
    }

    /// Rebuilds a log from its CSV form. Counters are taken from the rows as
    /// written, so a tampered file is caught by [`audit_filtration`].
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut log = FiltrationLog::new();
        for row in rdr.records() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or("");
            let parse = |i: usize| -> Result<u64> {
                field(i)
                    .parse::<u64>()
                    .map_err(|e| Error::Contract(format!("bad filtration row: {e}")))
            };
            let entry = LogEntry {
                iteration: parse(0)? as usize,
                kind: field(1).parse()?,
                size: parse(2)? as usize,
                cumulative_calls: parse(3)?,
            };
            log.calls_by_kind[entry.kind.index()] += entry.size as u64;
            log.total_calls = entry.cumulative_calls;
            log.entries.push(entry);
        }
        Ok(log)
    }
}

/// Draws batches for one run and logs them.
#[derive(Clone, Debug)]
pub struct Sampler {
    seed: u64,
    components: usize,
    log: FiltrationLog,
}

impl Sampler {
    pub fn new(seed: u64, components: usize) -> Self {
        Self {
            seed,
            components,
            log: FiltrationLog::new(),
        }
    }

    pub fn draw(&mut self, kind: StreamKind, iteration: usize, size: usize) -> Result<BatchDraw> {
        let b = draw_batch(self.seed, kind, iteration, size, self.components)?;
        self.log.record(iteration, kind, size);
        Ok(b)
    }

    /// Logs oracle calls that were not sampled (full-gradient baselines).
    pub fn charge(&mut self, kind: StreamKind, iteration: usize, size: usize) {
        self.log.record(iteration, kind, size);
    }

    pub fn log(&self) -> &FiltrationLog {
        &self.log
    }

    pub fn into_log(self) -> FiltrationLog {
        self.log
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub iteration: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the per-iteration ordering (main, then gradient difference, then
/// Taylor), that no stream is drawn twice in one iteration, that paired
/// batches agree in size, and that every counter equals the sum of sizes.
pub fn audit_filtration(log: &FiltrationLog) -> AuditReport {
    let mut report = AuditReport::default();
    let mut flag = |iteration: usize, message: String| report.violations.push(Violation { iteration, message });

    let mut running = 0u64;
    let mut by_kind = [0u64; 6];
    let mut i = 0;
    let entries = &log.entries;
    let mut last_iteration: Option<usize> = None;
    while i < entries.len() {
        let k = entries[i].iteration;
        if let Some(prev) = last_iteration {
            if k <= prev {
                flag(k, format!("iteration {k} appears after iteration {prev}"));
            }
        }
        last_iteration = Some(k);
        let mut sizes: [Option<usize>; 6] = [None; 6];
        let mut phase = 0u8;
        while i < entries.len() && entries[i].iteration == k {
            let e = &entries[i];
            if e.size == 0 {
                flag(k, format!("{} batch is empty", e.kind));
            }
            if e.kind.phase() < phase {
                flag(k, format!("{} drawn after a later-phase batch", e.kind));
            }
            phase = phase.max(e.kind.phase());
            if sizes[e.kind.index()].replace(e.size).is_some() {
                flag(k, format!("{} drawn twice", e.kind));
            }
            running += e.size as u64;
            by_kind[e.kind.index()] += e.size as u64;
            if e.cumulative_calls != running {
                flag(
                    k,
                    format!(
                        "cumulative calls {} after {} but sizes sum to {running}",
                        e.cumulative_calls, e.kind
                    ),
                );
            }
            i += 1;
        }
        let size = |kind: StreamKind| sizes[kind.index()];
        match (size(StreamKind::StepGradDiff), size(StreamKind::StepTaylor)) {
            (Some(a), Some(b)) if a != b => flag(k, format!("gradient-difference batch {a} vs Taylor batch {b}")),
            (None, Some(_)) => flag(k, "Taylor batch without a gradient-difference batch".into()),
            _ => {}
        }
        let var: Vec<usize> = [StreamKind::VarMain, StreamKind::VarGradDiff, StreamKind::VarTaylor]
            .into_iter()
            .filter_map(size)
            .collect();
        if var.iter().any(|s| s % 2 == 1) {
            flag(k, "variance batch of odd size".into());
        }
        if var.windows(2).any(|w| w[0] != w[1]) {
            flag(k, "variance batches of unequal size".into());
        }
    }
    if running != log.total_calls {
        flag(
            last_iteration.unwrap_or(0),
            format!("total counter {} but sizes sum to {running}", log.total_calls),
        );
    }
    if by_kind != log.calls_by_kind {
        flag(last_iteration.unwrap_or(0), "per-stream counters disagree with sizes".into());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_deterministic_and_prefix_stable() {
        let a = draw_batch(7, StreamKind::MainUpdate, 3, 50, 13).unwrap();
        let b = draw_batch(7, StreamKind::MainUpdate, 3, 50, 13).unwrap();
        let c = draw_batch(7, StreamKind::MainUpdate, 3, 20, 13).unwrap();
        assert_eq!(a, b);
        assert_eq!(&a.indices[..20], &c.indices[..]);
        assert!(a.indices.iter().all(|&i| i < 13));
    }

    #[test]
    fn single_component_and_empty_batches() {
        let b = draw_batch(1, StreamKind::StepTaylor, 1, 30, 1).unwrap();
        assert!(b.indices.iter().all(|&i| i == 0));
        assert!(draw_batch(1, StreamKind::StepTaylor, 1, 0, 5).is_err());
    }

    #[test]
    fn kinds_and_iterations_give_different_streams() {
        let a = draw_batch(9, StreamKind::StepGradDiff, 4, 10_000, 1000).unwrap();
        let b = draw_batch(9, StreamKind::StepTaylor, 4, 10_000, 1000).unwrap();
        let c = draw_batch(9, StreamKind::StepGradDiff, 5, 10_000, 1000).unwrap();
        let same = |x: &BatchDraw, y: &BatchDraw| x.indices.iter().zip(&y.indices).filter(|(p, q)| p == q).count();
        // about 10 coincidences expected by chance
        assert!(same(&a, &b) < 40);
        assert!(same(&a, &c) < 40);
    }

    fn well_formed(n: usize) -> FiltrationLog {
        let mut s = Sampler::new(3, 10);
        for k in 1..=n {
            s.draw(StreamKind::MainUpdate, k, k).unwrap();
            s.draw(StreamKind::StepGradDiff, k, 2 * k).unwrap();
            s.draw(StreamKind::StepTaylor, k, 2 * k).unwrap();
        }
        s.into_log()
    }

    #[test]
    fn audit_accepts_well_formed_log() {
        let log = well_formed(10);
        assert!(audit_filtration(&log).passed());
        assert_eq!(log.total_calls, (1..=10).map(|k| k + 4 * k).sum::<usize>() as u64);
    }

    #[test]
    fn audit_rejects_out_of_order_batches() {
        let mut log = FiltrationLog::new();
        log.record(1, StreamKind::MainUpdate, 1);
        log.record(1, StreamKind::StepTaylor, 2);
        log.record(1, StreamKind::StepGradDiff, 2);
        let r = audit_filtration(&log);
        assert!(!r.passed());
        assert_eq!(r.violations[0].iteration, 1);
    }

    #[test]
    fn audit_rejects_counter_mismatch_and_reuse() {
        let mut log = well_formed(3);
        log.total_calls += 1;
        assert!(!audit_filtration(&log).passed());

        let mut log = well_formed(3);
        log.entries[4].cumulative_calls += 2;
        assert!(!audit_filtration(&log).passed());

        let mut log = FiltrationLog::new();
        log.record(1, StreamKind::MainUpdate, 1);
        log.record(1, StreamKind::MainUpdate, 1);
        assert!(!audit_filtration(&log).passed());
    }

    #[test]
    fn csv_round_trip() {
        let log = well_formed(4);
        let text = log.to_csv_string().unwrap();
        assert!(text.starts_with("iteration,kind,size,cumulative_calls\n"));
        let back = FiltrationLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, log);
    }
}
