//! Simulation output: row types for every metric family, CSV export with
//! stable headers, and the headline metrics derived from the rows.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::SimError;
use crate::ric::{ConflictRecord, RicMessage};
use crate::scenario::UeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AttemptOutcome {
    Accepted,
    RejectedBlacklist,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttemptRow {
    pub time_s: f64,
    pub ue_id: String,
    pub ue_kind: UeKind,
    pub cell_id: String,
    pub ta: u32,
    pub outcome: AttemptOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct HandoverRow {
    pub time_s: f64,
    pub ue_id: String,
    pub from_cell: String,
    pub to_cell: String,
    pub xapp: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BeamEventKind {
    Switch,
    Recovery,
}

#[derive(Debug, Clone, Serialize)]
pub struct BeamEventRow {
    pub time_s: f64,
    pub ue_id: String,
    pub cell_id: String,
    pub beam_id: u32,
    pub kind: BeamEventKind,
    pub xapp: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BeamFailureRow {
    pub time_s: f64,
    pub ue_id: String,
    pub cell_id: String,
    pub beam_id: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrbRow {
    pub time_s: f64,
    pub cell_id: String,
    pub five_qi: u32,
    pub share_num: i64,
    pub share_den: i64,
    pub share_pct: f64,
    pub prbs: u32,
    pub ue_count: usize,
    pub per_ue_share_pct: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ServingRow {
    pub ue_id: String,
    pub cell_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SsdWindowRow {
    pub cell_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub request_count: u32,
    pub z_count: f64,
    pub z_ta_peak: f64,
    pub storm: bool,
    /// Space-separated blacklisted TA indices emitted this window, if any.
    pub blacklist: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RejectedControlRow {
    pub time_s: f64,
    pub xapp: String,
    pub reason: String,
}

/// Complete output of one simulation run.
#[derive(Debug, Default)]
pub struct SimulationTrace {
    pub attempts: Vec<AttemptRow>,
    pub handovers: Vec<HandoverRow>,
    pub beam_events: Vec<BeamEventRow>,
    pub beam_failures: Vec<BeamFailureRow>,
    pub prb_alloc: Vec<PrbRow>,
    pub serving: Vec<ServingRow>,
    pub ssd_windows: Vec<SsdWindowRow>,
    pub conflicts: Vec<ConflictRecord>,
    pub rejected_controls: Vec<RejectedControlRow>,
    pub messages: Option<Vec<RicMessage>>,
}

impl SimulationTrace {
    /// Write every metric family as a CSV (plus `messages.ndjson` when the
    /// message log was kept). Headers and column order are stable.
    pub fn write_csvs(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir)?;
        // serde skips headers on empty input, so write them explicitly
        let headers: &[(&str, &str)] = &[
            ("attempts.csv", "time_s,ue_id,ue_kind,cell_id,ta,outcome"),
            ("handovers.csv", "time_s,ue_id,from_cell,to_cell,xapp"),
            ("beam_events.csv", "time_s,ue_id,cell_id,beam_id,kind,xapp"),
            ("beam_failures.csv", "time_s,ue_id,cell_id,beam_id"),
            (
                "prb_alloc.csv",
                "time_s,cell_id,five_qi,share_num,share_den,share_pct,prbs,ue_count,per_ue_share_pct",
            ),
            ("serving.csv", "ue_id,cell_id,start_s,end_s"),
            (
                "ssd_windows.csv",
                "cell_id,start_s,end_s,request_count,z_count,z_ta_peak,storm,blacklist",
            ),
            ("conflicts.csv", "time_s,entity,winning_xapp,losing_xapps,msg_ids"),
            ("rejected_controls.csv", "time_s,xapp,reason"),
        ];
        for (name, header) in headers {
            let mut f = std::fs::File::create(dir.join(name))?;
            writeln!(f, "{header}")?;
        }
        append_rows(dir, "attempts.csv", &self.attempts)?;
        append_rows(dir, "handovers.csv", &self.handovers)?;
        append_rows(dir, "beam_events.csv", &self.beam_events)?;
        append_rows(dir, "beam_failures.csv", &self.beam_failures)?;
        append_rows(dir, "prb_alloc.csv", &self.prb_alloc)?;
        append_rows(dir, "serving.csv", &self.serving)?;
        append_rows(dir, "ssd_windows.csv", &self.ssd_windows)?;

        let conflict_rows: Vec<FlatConflict> = self
            .conflicts
            .iter()
            .map(|c| FlatConflict {
                time_s: c.time_s,
                entity: c.entity.clone(),
                winning_xapp: c.winning_xapp.clone(),
                losing_xapps: c.losing_xapps.join(" "),
                msg_ids: c
                    .msg_ids
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(" "),
            })
            .collect();
        append_rows(dir, "conflicts.csv", &conflict_rows)?;
        append_rows(dir, "rejected_controls.csv", &self.rejected_controls)?;

        if let Some(messages) = &self.messages {
            let mut f = std::fs::File::create(dir.join("messages.ndjson"))?;
            for m in messages {
                let line = serde_json::to_string(m)
                    .map_err(|e| SimError::Io(std::io::Error::other(e)))?;
                writeln!(f, "{line}")?;
            }
        }
        Ok(())
    }

    /// Fraction of legitimate IoT connection attempts rejected by the TA
    /// blacklist; `None` when there were no legitimate attempts.
    pub fn rejected_legit_ratio(&self) -> Option<f64> {
        let legit: Vec<_> = self
            .attempts
            .iter()
            .filter(|a| a.ue_kind == UeKind::IotLegit)
            .collect();
        if legit.is_empty() {
            return None;
        }
        let rejected = legit
            .iter()
            .filter(|a| a.outcome == AttemptOutcome::RejectedBlacklist)
            .count();
        Some(rejected as f64 / legit.len() as f64)
    }

    /// Beam failures per user per second.
    pub fn beam_failures_per_ue_s(&self, n_ues: usize, duration_s: f64) -> f64 {
        if n_ues == 0 || duration_s <= 0.0 {
            return 0.0;
        }
        self.beam_failures.len() as f64 / (n_ues as f64 * duration_s)
    }

    /// Fraction of total serving time each UE spent on each cell.
    /// Returns ue_id -> (cell_id -> fraction of the UE's attached time).
    pub fn serving_shares(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut per_ue: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for row in &self.serving {
            *per_ue
                .entry(row.ue_id.clone())
                .or_default()
                .entry(row.cell_id.clone())
                .or_default() += row.end_s - row.start_s;
        }
        for cells in per_ue.values_mut() {
            let total: f64 = cells.values().sum();
            if total > 0.0 {
                for v in cells.values_mut() {
                    *v /= total;
                }
            }
        }
        per_ue
    }
}

#[derive(Serialize)]
struct FlatConflict {
    time_s: f64,
    entity: String,
    winning_xapp: String,
    losing_xapps: String,
    msg_ids: String,
}

fn append_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<(), SimError> {
    if rows.is_empty() {
        return Ok(());
    }
    let file = std::fs::OpenOptions::new()
        .append(true)
        .open(dir.join(name))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(SimError::Io)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_writes_headers_only() {
        let dir = std::env::temp_dir().join(format!("trace_test_{}", std::process::id()));
        let trace = SimulationTrace::default();
        trace.write_csvs(&dir).unwrap();
        let attempts = std::fs::read_to_string(dir.join("attempts.csv")).unwrap();
        assert_eq!(attempts.trim(), "time_s,ue_id,ue_kind,cell_id,ta,outcome");
        let serving = std::fs::read_to_string(dir.join("serving.csv")).unwrap();
        assert_eq!(serving.trim(), "ue_id,cell_id,start_s,end_s");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn serving_shares_normalize() {
        let trace = SimulationTrace {
            serving: vec![
                ServingRow {
                    ue_id: "u1".into(),
                    cell_id: "c1".into(),
                    start_s: 0.0,
                    end_s: 75.0,
                },
                ServingRow {
                    ue_id: "u1".into(),
                    cell_id: "c2".into(),
                    start_s: 75.0,
                    end_s: 100.0,
                },
            ],
            ..SimulationTrace::default()
        };
        let shares = trace.serving_shares();
        assert!((shares["u1"]["c1"] - 0.75).abs() < 1e-12);
        assert!((shares["u1"]["c2"] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejected_ratio_counts_only_legit() {
        let mk = |kind, outcome| AttemptRow {
            time_s: 0.0,
            ue_id: "u".into(),
            ue_kind: kind,
            cell_id: "c".into(),
            ta: 1,
            outcome,
        };
        let trace = SimulationTrace {
            attempts: vec![
                mk(UeKind::IotLegit, AttemptOutcome::Accepted),
                mk(UeKind::IotLegit, AttemptOutcome::RejectedBlacklist),
                mk(UeKind::IotAdversary, AttemptOutcome::RejectedBlacklist),
            ],
            ..SimulationTrace::default()
        };
        assert_eq!(trace.rejected_legit_ratio(), Some(0.5));
    }
}
