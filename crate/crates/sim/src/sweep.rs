//! Running sweeps and summarising cells.

use std::io::Write;

use rayon::prelude::*;
use rename_core::byz::{CommitteeStats, FailureCause};
use rename_core::monitor::MonitorReport;
use rename_core::net::{LogLevel, MessageKind};
use rename_core::trial::{run_trial, Detail, SummaryRow, Transcript};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::spec::{Cell, SweepSpec};
use crate::SimError;

/// What a sweep keeps of one trial.
#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: u64,
    pub row: SummaryRow,
    pub monitors: MonitorReport,
    pub messages_by_kind: Vec<(MessageKind, u64)>,
    pub iterations: Option<u64>,
    pub committee: Option<CommitteeStats>,
    pub failure: Option<FailureCause>,
    pub ever_elected: Option<u32>,
    /// Kept for trials that failed or tripped a deterministic monitor.
    pub transcript: Option<Box<Transcript>>,
}

impl TrialRecord {
    fn from_transcript(cell: usize, trial: u64, t: Transcript) -> Self {
        let row = t.summary();
        let (iterations, committee, failure, ever_elected) = match &t.detail {
            Detail::Byzantine { iterations, committee, failure, .. } => (Some(*iterations), Some(*committee), *failure, None),
            Detail::Crash { ever_elected, .. } => (None, None, None, Some(*ever_elected)),
        };
        let keep = !row.success || row.monitor_failures > 0;
        TrialRecord {
            cell,
            trial,
            monitors: t.monitors.clone(),
            messages_by_kind: t.metrics.messages_by_kind.iter().map(|(k, v)| (*k, *v)).collect(),
            iterations,
            committee,
            failure,
            ever_elected,
            row,
            transcript: keep.then(|| Box::new(t)),
        }
    }

    pub fn kind_total(&self, kinds: &[MessageKind]) -> u64 {
        self.messages_by_kind.iter().filter(|(k, _)| kinds.contains(k)).map(|(_, v)| v).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub n: u32,
    pub f_budget: usize,
    pub f_actual_mean: f64,
    pub adversary: String,
    pub trials: u64,
    pub rounds_mean: f64,
    pub rounds_max: u64,
    pub messages_mean: f64,
    pub messages_p99: u64,
    pub messages_max: u64,
    pub bits_mean: f64,
    pub bits_max: u64,
    pub success_rate: f64,
    pub monitor_failure_count: u64,
}

/// Nearest-rank percentile of a non-empty sample.
pub fn percentile(values: &[u64], pct: f64) -> u64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let rank = ((pct / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0u64), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

pub fn summarize(cell: &Cell, records: &[TrialRecord]) -> CellSummary {
    let rows: Vec<&SummaryRow> = records.iter().filter(|r| r.cell == cell.index).map(|r| &r.row).collect();
    let messages: Vec<u64> = rows.iter().map(|r| r.messages).collect();
    CellSummary {
        n: cell.n,
        f_budget: cell.f_budget,
        f_actual_mean: mean(rows.iter().map(|r| r.f_actual as f64)),
        adversary: cell.adversary.clone(),
        trials: rows.len() as u64,
        rounds_mean: mean(rows.iter().map(|r| r.rounds as f64)),
        rounds_max: rows.iter().map(|r| r.rounds).max().unwrap_or(0),
        messages_mean: mean(messages.iter().map(|m| *m as f64)),
        messages_p99: if messages.is_empty() { 0 } else { percentile(&messages, 99.0) },
        messages_max: messages.iter().copied().max().unwrap_or(0),
        bits_mean: mean(rows.iter().map(|r| r.bits as f64)),
        bits_max: rows.iter().map(|r| r.bits).max().unwrap_or(0),
        success_rate: mean(rows.iter().map(|r| r.success as u8 as f64)),
        monitor_failure_count: rows.iter().map(|r| r.monitor_failures).sum(),
    }
}

pub struct SweepResult {
    pub cells: Vec<Cell>,
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<CellSummary>,
}

impl SweepResult {
    pub fn deterministic_failures(&self) -> u64 {
        self.records.iter().map(|r| r.row.monitor_failures).sum()
    }

    pub fn raw_csv(&self) -> Result<Vec<u8>, SimError> {
        let mut buf = Vec::new();
        write_rows(&mut buf, self.records.iter().map(|r| &r.row))?;
        Ok(buf)
    }

    /// SHA-256 of the raw CSV, hex.
    pub fn digest(&self) -> Result<String, SimError> {
        Ok(Sha256::digest(self.raw_csv()?).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn cell_records(&self, cell: usize) -> impl Iterator<Item = &TrialRecord> {
        self.records.iter().filter(move |r| r.cell == cell)
    }
}

pub fn write_rows<'a, W: Write>(w: W, rows: impl Iterator<Item = &'a SummaryRow>) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summaries<W: Write>(w: W, cells: &[CellSummary]) -> Result<(), SimError> {
    let mut out = csv::Writer::from_writer(w);
    for c in cells {
        out.serialize(c)?;
    }
    out.flush()?;
    Ok(())
}

/// Runs every trial of every cell, on `jobs` threads when `jobs > 1`.
/// Records come back ordered by `(cell, trial)` either way.
pub fn run_sweep(spec: &SweepSpec, jobs: usize, log_level: LogLevel) -> Result<SweepResult, SimError> {
    let cells = spec.cells()?;
    let work: Vec<(usize, u64)> =
        cells.iter().flat_map(|c| (0..spec.trials_per_cell).map(move |t| (c.index, t))).collect();
    let one = |&(c, t): &(usize, u64)| -> Result<TrialRecord, SimError> {
        let cfg = spec.trial(&cells[c], t);
        Ok(TrialRecord::from_transcript(c, t, run_trial(&cfg, log_level)?))
    };
    let records: Vec<TrialRecord> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| SimError::Spec(format!("thread pool: {e}")))?;
        pool.install(|| work.par_iter().map(one).collect::<Result<_, _>>())?
    } else {
        work.iter().map(one).collect::<Result<_, _>>()?
    };
    let summaries = cells.iter().map(|c| summarize(c, &records)).collect();
    Ok(SweepResult { cells, records, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 99.0), 99);
        assert_eq!(percentile(&[5], 99.0), 5);
        assert_eq!(percentile(&[3, 1, 2], 50.0), 2);
    }

    #[test]
    fn parallel_matches_serial() {
        let spec = SweepSpec::from_json(
            r#"{"protocol":"crash","n_values":[8,16],"f_values":[0,"n/2"],"adversaries":["uniform_random","committee_assassin"],"trials_per_cell":3}"#,
        )
        .unwrap();
        let a = run_sweep(&spec, 1, LogLevel::Off).unwrap();
        let b = run_sweep(&spec, 3, LogLevel::Off).unwrap();
        assert_eq!(a.raw_csv().unwrap(), b.raw_csv().unwrap());
        assert_eq!(a.summaries, b.summaries);
        for s in &a.summaries {
            assert!(s.messages_max >= s.messages_p99);
            assert!((0.0..=1.0).contains(&s.success_rate));
        }
    }
}
