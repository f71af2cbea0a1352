//! Deterministic discrete-event RAN simulator: cells, UEs, mobility,
//! connection-request traffic, slice-aware PRB pool and E2-agent behavior.
//! The trace is a pure function of (ScenarioConfig, seed).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{DomainError, SimError};
use crate::policy::PolicyBody;
use crate::ric::{
    ControlPayload, QueuedControl, ReportKind, ReportPayload, Ric, RsrpEntry, SliceLoadReport,
};
use crate::scenario::{
    BmmXappConfig, MotionModel, Placement, ScenarioConfig, SsdXappConfig, UeKind,
};
use crate::trace::{
    AttemptOutcome, AttemptRow, BeamEventKind, BeamEventRow, BeamFailureRow, HandoverRow, PrbRow,
    RejectedControlRow, ServingRow, SimulationTrace, SsdWindowRow,
};
use crate::wireless::{
    noisy_position, rsrp_dbm, ta_index, Beam, Position, TaConfig,
};
use crate::xapp::bmm::{
    self, control_for, emergency_select, select_beam, BeamDecision, BeamFailureMonitor,
    DecisionReason, RemGrid, RemSample,
};
use crate::xapp::qra::QraXapp;
use crate::xapp::ssd::{anomaly_point, build_profile, SsdXapp, WindowStats};
use crate::xapp::ts::{calibration_offset, TsXapp};

// Independent ChaCha streams, one per purpose, so changing one traffic knob
// never perturbs the draws of another.
const STREAM_PLACEMENT: u64 = 1;
const STREAM_SHADOW: u64 = 2;
const STREAM_LEGIT: u64 = 3;
const STREAM_ADVERSARY: u64 = 4;
const STREAM_SSD_TRAINING: u64 = 5;
const STREAM_REM: u64 = 6;
const STREAM_ONLINE: u64 = 7;

fn stream(seed: u64, n: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(n);
    r
}

/// Legitimate connection-request times: i.i.d. exponential gaps with mean
/// 3600/rate seconds, truncated to [0, duration).
pub fn legit_traffic<R: Rng + ?Sized>(
    rate_per_hour: f64,
    duration_s: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut times = Vec::new();
    if rate_per_hour <= 0.0 || duration_s <= 0.0 {
        return times;
    }
    let exp = Exp::new(rate_per_hour / 3600.0).expect("rate checked > 0");
    let mut t = exp.sample(rng);
    while t < duration_s {
        times.push(t);
        t += exp.sample(rng);
    }
    times
}

/// Adversarial request times: Poisson attack starts at the given daily rate,
/// each contributing `burst_len` requests spaced `burst_gap_s` apart.
pub fn adversary_traffic<R: Rng + ?Sized>(
    attacks_per_day: f64,
    burst_len: u32,
    burst_gap_s: f64,
    duration_s: f64,
    rng: &mut R,
) -> Vec<f64> {
    assert!(burst_len >= 1, "burst_len must be >= 1");
    assert!(burst_gap_s > 0.0, "burst_gap_s must be > 0");
    let mut times = Vec::new();
    if attacks_per_day <= 0.0 || duration_s <= 0.0 {
        return times;
    }
    let exp = Exp::new(attacks_per_day / 86_400.0).expect("rate checked > 0");
    let mut start = exp.sample(rng);
    while start < duration_s {
        for i in 0..burst_len {
            let t = start + f64::from(i) * burst_gap_s;
            if t < duration_s {
                times.push(t);
            }
        }
        start += exp.sample(rng);
    }
    times.sort_by(f64::total_cmp);
    times
}

/// Reflect `x` into [min, max] (triangle-wave fold).
fn fold_bounce(x: f64, min: f64, max: f64) -> f64 {
    let w = max - min;
    let m = (x - min).rem_euclid(2.0 * w);
    if m <= w {
        min + m
    } else {
        min + 2.0 * w - m
    }
}

/// Wrap `x` into [min, max) (torus fold).
fn fold_wrap(x: f64, min: f64, max: f64) -> f64 {
    min + (x - min).rem_euclid(max - min)
}

struct CellState {
    id: String,
    pos: Position,
    prb_count: u32,
    per_prb_rate_bps: f64,
    prop: crate::wireless::PropagationParams,
    ta: TaConfig,
    beams: Vec<Beam>,
    blacklist: BTreeSet<u32>,
    blacklist_expiry: f64,
}

struct UeState {
    id: String,
    kind: UeKind,
    five_qi: u32,
    pos0: Position,
    speed: f64,
    bearing_deg: f64,
    serving_cell: Option<usize>,
    serving_beam: Option<u32>,
    serving_since: f64,
    monitor: Option<BeamFailureMonitor>,
    /// Fixed per-(ue, cell) shadowing draw, dB.
    shadow: Vec<f64>,
    /// Nearest cell, the target of IoT connection attempts.
    home_cell: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    MeasurementTick,
    ConnectionRequest { ue: usize },
    SliceLoadReport,
    SsdWindowClose,
}

impl EventKind {
    // MOVE < MEASUREMENT < CONNECTION_REQUEST < ATTACK_BURST < REPORT_DUE
    // < POLICY_EXPIRY; motion is analytic and expiry is lazy, so only three
    // ranks are ever scheduled.
    fn order(&self) -> (u8, u64) {
        match self {
            EventKind::MeasurementTick => (1, 0),
            EventKind::ConnectionRequest { ue } => (2, *ue as u64),
            EventKind::SliceLoadReport => (4, 0),
            EventKind::SsdWindowClose => (4, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    kind: EventKind,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.kind.order().cmp(&other.kind.order()))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Default)]
struct WindowAcc {
    count: u32,
    hist: BTreeMap<u32, u32>,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    cells: Vec<CellState>,
    ues: Vec<UeState>,
    ric: Ric,
    ts: Option<TsXapp>,
    qra: Option<QraXapp>,
    ssd: Vec<Option<SsdXapp>>, // per cell
    ssd_cfg: Option<SsdXappConfig>,
    bmm_cfg: Option<BmmXappConfig>,
    rems: Vec<Option<RemGrid>>, // per cell
    ts_sub: Option<u64>,
    qra_subs: Vec<u64>,
    ssd_subs: Vec<Option<u64>>,
    windows: Vec<WindowAcc>, // per cell
    online_rng: ChaCha8Rng,
    trace: SimulationTrace,
}

impl<'a> Sim<'a> {
    fn pos_at(&self, ue: &UeState, t: f64) -> Position {
        if ue.speed == 0.0 {
            return ue.pos0;
        }
        let rad = ue.bearing_deg.to_radians();
        let raw = Position {
            x: ue.pos0.x + ue.speed * rad.cos() * t,
            y: ue.pos0.y + ue.speed * rad.sin() * t,
        };
        let b = &self.cfg.bounds;
        match self.cfg.motion {
            MotionModel::Bounce => Position {
                x: fold_bounce(raw.x, b.x_min, b.x_max),
                y: fold_bounce(raw.y, b.y_min, b.y_max),
            },
            MotionModel::Wrap => Position {
                x: fold_wrap(raw.x, b.x_min, b.x_max),
                y: fold_wrap(raw.y, b.y_min, b.y_max),
            },
        }
    }

    /// Best-beam (or omni) RSRP of `cell` at `pos`, with the fixed
    /// per-(ue, cell) shadowing applied.
    fn cell_rsrp(&self, ue_idx: usize, cell_idx: usize, pos: &Position) -> Result<f64, DomainError> {
        let cell = &self.cells[cell_idx];
        let shadow = self.ues[ue_idx].shadow[cell_idx];
        if cell.beams.is_empty() {
            return rsrp_dbm(pos, &cell.pos, None, &cell.prop, shadow);
        }
        let mut best = f64::NEG_INFINITY;
        for b in &cell.beams {
            let r = rsrp_dbm(pos, &cell.pos, Some(b), &cell.prop, shadow)?;
            if r > best {
                best = r;
            }
        }
        Ok(best)
    }

    fn per_beam_rsrp(
        &self,
        ue_idx: usize,
        cell_idx: usize,
        pos: &Position,
    ) -> Result<Vec<f64>, DomainError> {
        let cell = &self.cells[cell_idx];
        let shadow = self.ues[ue_idx].shadow[cell_idx];
        cell.beams
            .iter()
            .map(|b| rsrp_dbm(pos, &cell.pos, Some(b), &cell.prop, shadow))
            .collect()
    }

    fn close_serving_interval(&mut self, ue_idx: usize, t: f64) {
        let ue = &self.ues[ue_idx];
        if let Some(c) = ue.serving_cell {
            if t > ue.serving_since {
                self.trace.serving.push(ServingRow {
                    ue_id: ue.id.clone(),
                    cell_id: self.cells[c].id.clone(),
                    start_s: ue.serving_since,
                    end_s: t,
                });
            }
        }
    }

    fn on_measurement_tick(&mut self, t: f64) -> Result<(), SimError> {
        // Traffic steering: one RSRP report covering all mobile UEs.
        if let Some(ts) = &mut self.ts {
            let mut entries = Vec::new();
            let mut decisions = Vec::new();
            for ue in &self.ues {
                if ue.kind != UeKind::Mobile {
                    continue;
                }
                let pos = if ue.speed == 0.0 {
                    ue.pos0
                } else {
                    // inline pos_at to sidestep the &mut self borrow
                    let rad = ue.bearing_deg.to_radians();
                    let raw = Position {
                        x: ue.pos0.x + ue.speed * rad.cos() * t,
                        y: ue.pos0.y + ue.speed * rad.sin() * t,
                    };
                    let b = &self.cfg.bounds;
                    match self.cfg.motion {
                        MotionModel::Bounce => Position {
                            x: fold_bounce(raw.x, b.x_min, b.x_max),
                            y: fold_bounce(raw.y, b.y_min, b.y_max),
                        },
                        MotionModel::Wrap => Position {
                            x: fold_wrap(raw.x, b.x_min, b.x_max),
                            y: fold_wrap(raw.y, b.y_min, b.y_max),
                        },
                    }
                };
                let mut report = BTreeMap::new();
                for (ci, cell) in self.cells.iter().enumerate() {
                    let shadow = ue.shadow[ci];
                    let r = if cell.beams.is_empty() {
                        rsrp_dbm(&pos, &cell.pos, None, &cell.prop, shadow)?
                    } else {
                        let mut best = f64::NEG_INFINITY;
                        for b in &cell.beams {
                            best = best.max(rsrp_dbm(&pos, &cell.pos, Some(b), &cell.prop, shadow)?);
                        }
                        best
                    };
                    entries.push(RsrpEntry {
                        ue_id: ue.id.clone(),
                        cell_id: cell.id.clone(),
                        rsrp_dbm: r,
                        per_beam_dbm: Vec::new(),
                        serving_beam_dbm: None,
                    });
                    report.insert(cell.id.clone(), r);
                }
                let serving = ue.serving_cell.map(|c| self.cells[c].id.clone());
                if let Some(ctrl) = ts.on_measurements(&ue.id, &report, serving.as_deref())? {
                    decisions.push(ctrl);
                }
            }
            if let Some(sub) = self.ts_sub {
                self.ric.publish_report(sub, ReportPayload::RsrpMeas(entries));
            }
            for ctrl in decisions {
                self.ric.submit_control("ts", ctrl).expect("queueing is infallible");
            }
        }

        // Beam mobility management.
        if let Some(bcfg) = self.bmm_cfg.clone() {
            for i in 0..self.ues.len() {
                if self.ues[i].kind != UeKind::Mobile {
                    continue;
                }
                let Some(ci) = self.ues[i].serving_cell else { continue };
                if self.cells[ci].beams.is_empty() {
                    continue;
                }
                let pos = self.pos_at(&self.ues[i], t);
                let per_beam = self.per_beam_rsrp(i, ci, &pos)?;
                if self.ues[i].serving_beam.is_none() {
                    // RAN-level attach to the measured best beam
                    let beam = emergency_select(&per_beam).expect("cell has beams");
                    self.ues[i].serving_beam = Some(beam);
                    self.trace.beam_events.push(BeamEventRow {
                        time_s: t,
                        ue_id: self.ues[i].id.clone(),
                        cell_id: self.cells[ci].id.clone(),
                        beam_id: beam,
                        kind: BeamEventKind::Recovery,
                        xapp: "ran".to_string(),
                    });
                }
                let serving_beam = self.ues[i].serving_beam.expect("assigned above");
                let mut serving_rsrp = per_beam[serving_beam as usize];
                if bcfg.fading_sigma_db > 0.0 {
                    let n = Normal::new(0.0, bcfg.fading_sigma_db).expect("sigma > 0");
                    serving_rsrp += n.sample(&mut self.online_rng);
                }
                if let Some(monitor) = &mut self.ues[i].monitor {
                    if monitor.observe(serving_rsrp) {
                        self.trace.beam_failures.push(BeamFailureRow {
                            time_s: t,
                            ue_id: self.ues[i].id.clone(),
                            cell_id: self.cells[ci].id.clone(),
                            beam_id: serving_beam,
                        });
                        // beam recovery: re-attach to the measured best beam
                        let beam = emergency_select(&per_beam).expect("cell has beams");
                        self.ues[i].serving_beam = Some(beam);
                        self.trace.beam_events.push(BeamEventRow {
                            time_s: t,
                            ue_id: self.ues[i].id.clone(),
                            cell_id: self.cells[ci].id.clone(),
                            beam_id: beam,
                            kind: BeamEventKind::Recovery,
                            xapp: "ran".to_string(),
                        });
                    }
                }
                let current = self.ues[i].serving_beam;
                let decision = if bcfg.emergency_only {
                    BeamDecision {
                        beam_id: emergency_select(&per_beam),
                        reason: DecisionReason::EmergencyRsrp,
                    }
                } else {
                    let rem = self.rems[ci].as_ref().expect("REM built for beamed cells");
                    let reported = noisy_position(pos, bcfg.localization, &mut self.online_rng);
                    let d = select_beam(
                        reported,
                        current,
                        rem,
                        bcfg.horizon_ticks,
                        self.cfg.measurement_tick_s,
                        bcfg.failure_threshold_dbm,
                        bcfg.margin_db,
                    );
                    if d.reason == DecisionReason::EmergencyRsrp {
                        // off-map fallback: act on live measurements
                        BeamDecision {
                            beam_id: emergency_select(&per_beam),
                            reason: DecisionReason::EmergencyRsrp,
                        }
                    } else {
                        d
                    }
                };
                if let Some(ctrl) = control_for(&self.ues[i].id, &decision, current) {
                    self.ric.submit_control("bmm", ctrl).expect("queueing is infallible");
                }
            }
        }

        self.apply_controls(t);
        Ok(())
    }

    fn on_connection_request(&mut self, ue_idx: usize, t: f64) -> Result<(), SimError> {
        let pos = self.pos_at(&self.ues[ue_idx], t);
        let ci = self.ues[ue_idx].home_cell;
        let d = pos.distance(&self.cells[ci].pos);
        let ta = ta_index(d, &self.cells[ci].ta)?;
        let blacklisted =
            self.cells[ci].blacklist.contains(&ta) && t < self.cells[ci].blacklist_expiry;
        let outcome = if blacklisted {
            AttemptOutcome::RejectedBlacklist
        } else {
            AttemptOutcome::Accepted
        };
        self.trace.attempts.push(AttemptRow {
            time_s: t,
            ue_id: self.ues[ue_idx].id.clone(),
            ue_kind: self.ues[ue_idx].kind,
            cell_id: self.cells[ci].id.clone(),
            ta,
            outcome,
        });
        if self.ssd[ci].is_some() {
            let acc = &mut self.windows[ci];
            acc.count += 1;
            *acc.hist.entry(ta).or_insert(0) += 1;
        }
        Ok(())
    }

    fn on_slice_load_report(&mut self, t: f64) {
        for ci in 0..self.cells.len() {
            let mut slices: BTreeMap<u32, Vec<String>> = BTreeMap::new();
            for ue in &self.ues {
                if ue.serving_cell == Some(ci) {
                    slices.entry(ue.five_qi).or_default().push(ue.id.clone());
                }
            }
            if slices.is_empty() {
                continue;
            }
            let report = SliceLoadReport {
                cell_id: self.cells[ci].id.clone(),
                slices,
            };
            if let Some(sub) = self.qra_subs.get(ci).copied() {
                self.ric
                    .publish_report(sub, ReportPayload::SliceLoad(report.clone()));
            }
            let capacity =
                f64::from(self.cells[ci].prb_count) * self.cells[ci].per_prb_rate_bps;
            let qra = self.qra.as_mut().expect("slice reports only with qra enabled");
            if let Some(ctrl) = qra.on_slice_load(&report, capacity) {
                self.ric.submit_control("qra", ctrl).expect("queueing is infallible");
            }
        }
        self.apply_controls(t);
    }

    fn on_ssd_window_close(&mut self, t: f64) -> Result<(), SimError> {
        let window_s = self.ssd_cfg.as_ref().expect("ssd scheduled").window_s;
        for ci in 0..self.cells.len() {
            let Some(ssd) = self.ssd[ci].as_mut() else { continue };
            let acc = std::mem::take(&mut self.windows[ci]);
            let w = WindowStats {
                start_s: t - window_s,
                end_s: t,
                request_count: acc.count,
                ta_histogram: acc.hist,
            };
            if let Some(sub) = self.ssd_subs.get(ci).copied().flatten() {
                self.ric.publish_report(
                    sub,
                    ReportPayload::ConnStats(crate::ric::ConnStatsReport {
                        cell_id: self.cells[ci].id.clone(),
                        window_start_s: w.start_s,
                        window_end_s: w.end_s,
                        request_count: w.request_count,
                        ta_histogram: w.ta_histogram.clone(),
                    }),
                );
            }
            let cell_id = self.cells[ci].id.clone();
            let policy = ssd.on_window(&cell_id, &w)?;
            let rec = ssd.windows.last().expect("on_window pushed a record");
            let mut blacklist_str = String::new();
            if let Some(body) = &policy {
                blacklist_str = body
                    .ta_indices
                    .iter()
                    .map(u32::to_string)
                    .collect::<Vec<_>>()
                    .join(" ");
            }
            self.trace.ssd_windows.push(SsdWindowRow {
                cell_id: cell_id.clone(),
                start_s: rec.start_s,
                end_s: rec.end_s,
                request_count: rec.request_count,
                z_count: rec.z_count,
                z_ta_peak: rec.z_ta_peak,
                storm: rec.storm,
                blacklist: blacklist_str,
            });
            if let Some(body) = policy {
                self.ric.deliver_e2_policy("ssd", body.clone());
                self.cells[ci].blacklist = body.ta_indices.iter().copied().collect();
                self.cells[ci].blacklist_expiry = t + body.ttl_s;
            }
        }
        Ok(())
    }

    fn apply_controls(&mut self, t: f64) {
        let winners = self.ric.arbitrate();
        for q in winners {
            self.apply_one(q, t);
        }
    }

    fn apply_one(&mut self, q: QueuedControl, t: f64) {
        let reject = |trace: &mut SimulationTrace, xapp: &str, reason: String| {
            trace.rejected_controls.push(RejectedControlRow {
                time_s: t,
                xapp: xapp.to_string(),
                reason,
            });
        };
        match q.payload {
            ControlPayload::Handover { ue_id, target_cell } => {
                let Some(ue_idx) = self.ues.iter().position(|u| u.id == ue_id) else {
                    return reject(&mut self.trace, &q.xapp_id, format!("unknown ue {ue_id}"));
                };
                let Some(ci) = self.cells.iter().position(|c| c.id == target_cell) else {
                    return reject(
                        &mut self.trace,
                        &q.xapp_id,
                        format!("unknown target cell {target_cell}"),
                    );
                };
                if self.ues[ue_idx].serving_cell == Some(ci) {
                    return;
                }
                let from = self.ues[ue_idx]
                    .serving_cell
                    .map(|c| self.cells[c].id.clone())
                    .unwrap_or_default();
                self.close_serving_interval(ue_idx, t);
                let ue = &mut self.ues[ue_idx];
                ue.serving_cell = Some(ci);
                ue.serving_beam = None;
                ue.serving_since = t;
                if let Some(m) = &mut ue.monitor {
                    m.reset();
                }
                self.trace.handovers.push(HandoverRow {
                    time_s: t,
                    ue_id,
                    from_cell: from,
                    to_cell: target_cell,
                    xapp: q.xapp_id,
                });
            }
            ControlPayload::BeamSwitch { ue_id, beam_id } => {
                let Some(ue_idx) = self.ues.iter().position(|u| u.id == ue_id) else {
                    return reject(&mut self.trace, &q.xapp_id, format!("unknown ue {ue_id}"));
                };
                let Some(ci) = self.ues[ue_idx].serving_cell else {
                    return reject(
                        &mut self.trace,
                        &q.xapp_id,
                        format!("ue {ue_id} has no serving cell"),
                    );
                };
                if !self.cells[ci].beams.iter().any(|b| b.beam_id == beam_id) {
                    return reject(
                        &mut self.trace,
                        &q.xapp_id,
                        format!("unknown beam {beam_id} on cell {}", self.cells[ci].id),
                    );
                }
                if self.ues[ue_idx].serving_beam == Some(beam_id) {
                    return;
                }
                self.ues[ue_idx].serving_beam = Some(beam_id);
                if let Some(m) = &mut self.ues[ue_idx].monitor {
                    m.reset();
                }
                self.trace.beam_events.push(BeamEventRow {
                    time_s: t,
                    ue_id,
                    cell_id: self.cells[ci].id.clone(),
                    beam_id,
                    kind: BeamEventKind::Switch,
                    xapp: q.xapp_id,
                });
            }
            ControlPayload::PrbSplit { cell_id, shares } => {
                let Some(ci) = self.cells.iter().position(|c| c.id == cell_id) else {
                    return reject(
                        &mut self.trace,
                        &q.xapp_id,
                        format!("unknown cell {cell_id}"),
                    );
                };
                let prbs = crate::xapp::qra::shares_to_prbs(&shares, self.cells[ci].prb_count);
                for (five_qi, share) in &shares {
                    let ue_count = self
                        .ues
                        .iter()
                        .filter(|u| u.serving_cell == Some(ci) && u.five_qi == *five_qi)
                        .count();
                    let share_pct =
                        100.0 * (*share.numer() as f64) / (*share.denom() as f64);
                    self.trace.prb_alloc.push(PrbRow {
                        time_s: t,
                        cell_id: cell_id.clone(),
                        five_qi: *five_qi,
                        share_num: *share.numer(),
                        share_den: *share.denom(),
                        share_pct,
                        prbs: prbs[five_qi],
                        ue_count,
                        per_ue_share_pct: if ue_count > 0 {
                            share_pct / ue_count as f64
                        } else {
                            0.0
                        },
                    });
                }
            }
        }
    }
}

/// Run one simulation to completion. The returned trace is bit-identical for
/// identical (config, seed) pairs.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationTrace, SimError> {
    cfg.validate()?;
    let seed = cfg.seed;

    // --- entities -----------------------------------------------------
    let cells: Vec<CellState> = cfg
        .cells
        .iter()
        .map(|c| CellState {
            id: c.cell_id.clone(),
            pos: Position::new(c.x, c.y),
            prb_count: c.prb_count,
            per_prb_rate_bps: c.per_prb_rate_bps,
            prop: c.prop,
            ta: TaConfig::new(c.scs_khz).expect("validated"),
            beams: c.beams.clone(),
            blacklist: BTreeSet::new(),
            blacklist_expiry: 0.0,
        })
        .collect();

    let mut placement_rng = stream(seed, STREAM_PLACEMENT);
    let mut ues: Vec<UeState> = Vec::new();
    for u in &cfg.ues {
        ues.push(UeState {
            id: u.ue_id.clone(),
            kind: u.kind,
            five_qi: u.five_qi,
            pos0: Position::new(u.x, u.y),
            speed: u.speed_mps,
            bearing_deg: u.bearing_deg,
            serving_cell: None,
            serving_beam: None,
            serving_since: 0.0,
            monitor: None,
            shadow: Vec::new(),
            home_cell: 0,
        });
    }
    for g in &cfg.ue_generators {
        for i in 0..g.count {
            let pos = sample_placement(&g.placement, &mut placement_rng);
            let bearing = match g.bearing_deg {
                Some(b) => b,
                None => placement_rng.gen_range(0.0..360.0),
            };
            ues.push(UeState {
                id: format!("{}_{i}", g.prefix),
                kind: g.kind,
                five_qi: g.five_qi,
                pos0: pos,
                speed: g.speed_mps,
                bearing_deg: bearing,
                serving_cell: None,
                serving_beam: None,
                serving_since: 0.0,
                monitor: None,
                shadow: Vec::new(),
                home_cell: 0,
            });
        }
    }

    let mut shadow_rng = stream(seed, STREAM_SHADOW);
    for ue in &mut ues {
        for c in &cells {
            let sigma = c.prop.shadowing_sigma_db;
            let s = if sigma > 0.0 {
                Normal::new(0.0, sigma).expect("sigma > 0").sample(&mut shadow_rng)
            } else {
                0.0
            };
            ue.shadow.push(s);
        }
        ue.home_cell = cells
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                ue.pos0
                    .distance(&a.pos)
                    .total_cmp(&ue.pos0.distance(&b.pos))
            })
            .map(|(i, _)| i)
            .expect("at least one cell");
    }

    // --- RIC and xApps -------------------------------------------------
    let mut ric = Ric::new(
        cells.iter().map(|c| c.id.clone()).collect(),
        cfg.xapps.priority.clone(),
        cfg.message_log,
    );

    let mut ts = None;
    let mut ts_sub = None;
    if let Some(tcfg) = cfg.xapps.ts.as_ref().filter(|t| t.enabled) {
        let offset = match tcfg.preference_offset_db {
            Some(o) => o,
            None => calibration_offset(cfg.cells[0].prop.exponent)?,
        };
        ts = Some(TsXapp::new(offset, tcfg.hysteresis_db));
        ts_sub = Some(
            ric.subscribe(
                "ts",
                cells.iter().map(|c| c.id.clone()).collect(),
                ReportKind::RsrpMeas,
                cfg.measurement_tick_s,
            )
            .expect("cells exist"),
        );
    }

    let mut qra = None;
    let mut qra_subs = Vec::new();
    if let Some(qcfg) = cfg.xapps.qra.as_ref().filter(|q| q.enabled) {
        qra = Some(QraXapp::new(crate::policy::AllocationSchema::Equal));
        for c in &cells {
            qra_subs.push(
                ric.subscribe(
                    "qra",
                    vec![c.id.clone()],
                    ReportKind::SliceLoad,
                    qcfg.report_period_s,
                )
                .expect("cell exists"),
            );
        }
    }

    // Install inline A1 policies and route them to their consumers.
    let mut pending_blacklists = Vec::new();
    for p in cfg.parsed_policies()? {
        ric.ingest_a1(p.clone());
        match &p.body {
            PolicyBody::TsPreferences(body) => {
                if let Some(ts) = &mut ts {
                    ts.state.install(p.scope.id(), body);
                }
            }
            PolicyBody::SlaTarget(body) => {
                if let Some(qra) = &mut qra {
                    qra.on_sla_policy(p.scope.key(), p.scope.id(), body.clone());
                }
            }
            PolicyBody::TaBlacklist(body) => pending_blacklists.push(body.clone()),
        }
    }

    // --- SSD: training pre-pass ----------------------------------------
    let ssd_cfg = cfg.xapps.ssd.as_ref().filter(|s| s.enabled).cloned();
    let mut ssd: Vec<Option<SsdXapp>> = (0..cells.len()).map(|_| None).collect();
    let mut ssd_subs: Vec<Option<u64>> = vec![None; cells.len()];
    if let Some(scfg) = &ssd_cfg {
        let mut train_rng = stream(seed, STREAM_SSD_TRAINING);
        let train_dur = f64::from(scfg.training_days) * 86_400.0;
        let n_windows = (train_dur / scfg.window_s).floor() as usize;
        for (ci, cell) in cells.iter().enumerate() {
            let mut counts = vec![0u32; n_windows];
            let mut hists: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); n_windows];
            let mut has_devices = false;
            for ue in &ues {
                if ue.kind != UeKind::IotLegit || ue.home_cell != ci {
                    continue;
                }
                has_devices = true;
                let ta = ta_index(ue.pos0.distance(&cell.pos), &cell.ta)?;
                for t in legit_traffic(cfg.traffic.legit_rate_per_hour, train_dur, &mut train_rng)
                {
                    let w = (t / scfg.window_s) as usize;
                    if w < n_windows {
                        counts[w] += 1;
                        *hists[w].entry(ta).or_insert(0) += 1;
                    }
                }
            }
            if !has_devices {
                continue;
            }
            let windows: Vec<WindowStats> = counts
                .iter()
                .zip(hists)
                .enumerate()
                .map(|(w, (count, hist))| WindowStats {
                    start_s: w as f64 * scfg.window_s,
                    end_s: (w + 1) as f64 * scfg.window_s,
                    request_count: *count,
                    ta_histogram: hist,
                })
                .collect();
            let profile =
                build_profile(&windows, scfg.bucket_len_s, scfg.min_training_windows)?;
            let history: Result<Vec<_>, _> = windows
                .iter()
                .map(|w| anomaly_point(w, &profile, scfg.std_floor))
                .collect();
            ssd[ci] = Some(SsdXapp::new(
                profile,
                history?,
                scfg.eps,
                scfg.min_pts,
                scfg.k_sigma,
                scfg.std_floor,
                scfg.blacklist_ttl_s,
            ));
            ssd_subs[ci] = Some(
                ric.subscribe("ssd", vec![cell.id.clone()], ReportKind::ConnStats, scfg.window_s)
                    .expect("cell exists"),
            );
        }
    }

    // --- BMM: REM pre-pass ----------------------------------------------
    let bmm_cfg = cfg.xapps.bmm.as_ref().filter(|b| b.enabled).cloned();
    let mut rems: Vec<Option<RemGrid>> = (0..cells.len()).map(|_| None).collect();
    if let Some(bcfg) = &bmm_cfg {
        let mut rem_rng = stream(seed, STREAM_REM);
        let b = &cfg.bounds;
        let nx = ((b.x_max - b.x_min) / bcfg.grid_cell_m).ceil() as usize;
        let ny = ((b.y_max - b.y_min) / bcfg.grid_cell_m).ceil() as usize;
        let sources: Vec<&crate::scenario::UeGenerator> = cfg
            .ue_generators
            .iter()
            .filter(|g| g.kind == UeKind::Mobile)
            .collect();
        for (ci, cell) in cells.iter().enumerate() {
            if cell.beams.is_empty() || bcfg.emergency_only {
                continue;
            }
            let mut samples = Vec::with_capacity(bcfg.rem_training_samples as usize);
            for _ in 0..bcfg.rem_training_samples {
                let (pos, motion) = if sources.is_empty() {
                    let x = rem_rng.gen_range(b.x_min..b.x_max);
                    let y = rem_rng.gen_range(b.y_min..b.y_max);
                    (Position::new(x, y), None)
                } else {
                    let total: u32 = sources.iter().map(|g| g.count).sum();
                    let mut pick = rem_rng.gen_range(0..total);
                    let g = sources
                        .iter()
                        .find(|g| {
                            if pick < g.count {
                                true
                            } else {
                                pick -= g.count;
                                false
                            }
                        })
                        .expect("pick < total");
                    let pos = sample_placement(&g.placement, &mut rem_rng);
                    let bearing = g
                        .bearing_deg
                        .unwrap_or_else(|| rem_rng.gen_range(0.0..360.0));
                    (pos, Some((g.speed_mps, bearing)))
                };
                let mut per_beam = Vec::with_capacity(cell.beams.len());
                for beam in &cell.beams {
                    let mut r = rsrp_dbm(&pos, &cell.pos, Some(beam), &cell.prop, 0.0)?;
                    if bcfg.fading_sigma_db > 0.0 {
                        r += Normal::new(0.0, bcfg.fading_sigma_db)
                            .expect("sigma > 0")
                            .sample(&mut rem_rng);
                    }
                    per_beam.push(r);
                }
                samples.push(RemSample {
                    true_pos: pos,
                    per_beam_rsrp_dbm: per_beam,
                    motion,
                });
            }
            rems[ci] = Some(bmm::build_rem(
                &samples,
                bcfg.localization,
                Position::new(b.x_min, b.y_min),
                bcfg.grid_cell_m,
                nx,
                ny,
                cell.beams.len(),
                &mut rem_rng,
            ));
        }
        for ue in &mut ues {
            if ue.kind == UeKind::Mobile {
                ue.monitor = Some(BeamFailureMonitor::new(
                    bcfg.failure_threshold_dbm,
                    bcfg.n_consecutive,
                ));
            }
        }
    }

    let mut sim = Sim {
        cfg,
        cells,
        ues,
        ric,
        ts,
        qra,
        ssd,
        ssd_cfg: ssd_cfg.clone(),
        bmm_cfg,
        rems,
        ts_sub,
        qra_subs,
        ssd_subs,
        windows: Vec::new(),
        online_rng: stream(seed, STREAM_ONLINE),
        trace: SimulationTrace::default(),
    };
    sim.windows = (0..sim.cells.len()).map(|_| WindowAcc::default()).collect();
    sim.trace.messages = cfg.message_log.then(Vec::new);

    // pre-run blacklists from inline policies
    for body in pending_blacklists {
        if let Some(ci) = sim.cells.iter().position(|c| c.id == body.cell_id) {
            sim.cells[ci].blacklist = body.ta_indices.iter().copied().collect();
            sim.cells[ci].blacklist_expiry = body.ttl_s;
        } else {
            sim.trace.rejected_controls.push(RejectedControlRow {
                time_s: 0.0,
                xapp: "non-rt-ric".to_string(),
                reason: format!("TA blacklist for unknown cell {}", body.cell_id),
            });
        }
    }

    // --- initial attachment ---------------------------------------------
    for i in 0..sim.ues.len() {
        if sim.ues[i].kind != UeKind::Mobile {
            continue;
        }
        let pos = sim.ues[i].pos0;
        let mut report = BTreeMap::new();
        for ci in 0..sim.cells.len() {
            report.insert(sim.cells[ci].id.clone(), sim.cell_rsrp(i, ci, &pos)?);
        }
        let target = match &sim.ts {
            Some(ts) => crate::xapp::ts::decide(&sim.ues[i].id, &report, None, &ts.state)?,
            None => report
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(c, _)| c.clone()),
        };
        if let Some(cell_id) = target {
            let ci = sim
                .cells
                .iter()
                .position(|c| c.id == cell_id)
                .expect("decide returns a reported cell");
            sim.ues[i].serving_cell = Some(ci);
            sim.ues[i].serving_since = 0.0;
            if !sim.cells[ci].beams.is_empty() {
                let per_beam = sim.per_beam_rsrp(i, ci, &pos)?;
                sim.ues[i].serving_beam = emergency_select(&per_beam);
            }
        }
    }

    // --- event schedule ---------------------------------------------------
    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let duration = cfg.duration_s;

    let ticks_needed = (sim.ts.is_some() || sim.bmm_cfg.is_some())
        && sim.ues.iter().any(|u| u.kind == UeKind::Mobile);
    if ticks_needed {
        let n = (duration / cfg.measurement_tick_s + 1e-9).floor() as u64;
        for k in 1..=n {
            heap.push(Reverse(Event {
                time: k as f64 * cfg.measurement_tick_s,
                kind: EventKind::MeasurementTick,
            }));
        }
    }

    let mut legit_rng = stream(seed, STREAM_LEGIT);
    let mut adv_rng = stream(seed, STREAM_ADVERSARY);
    for (i, ue) in sim.ues.iter().enumerate() {
        match ue.kind {
            UeKind::IotLegit => {
                for t in legit_traffic(cfg.traffic.legit_rate_per_hour, duration, &mut legit_rng)
                {
                    heap.push(Reverse(Event {
                        time: t,
                        kind: EventKind::ConnectionRequest { ue: i },
                    }));
                }
            }
            UeKind::IotAdversary => {
                if let Some(a) = &cfg.traffic.adversary {
                    for t in adversary_traffic(
                        a.attacks_per_day,
                        a.burst_len,
                        a.burst_gap_s,
                        duration,
                        &mut adv_rng,
                    ) {
                        heap.push(Reverse(Event {
                            time: t,
                            kind: EventKind::ConnectionRequest { ue: i },
                        }));
                    }
                }
            }
            UeKind::Mobile => {}
        }
    }

    if let Some(qcfg) = cfg.xapps.qra.as_ref().filter(|q| q.enabled) {
        let n = (duration / qcfg.report_period_s + 1e-9).floor() as u64;
        for k in 1..=n {
            heap.push(Reverse(Event {
                time: k as f64 * qcfg.report_period_s,
                kind: EventKind::SliceLoadReport,
            }));
        }
    }
    if let Some(scfg) = &ssd_cfg {
        if sim.ssd.iter().any(Option::is_some) {
            let n = (duration / scfg.window_s + 1e-9).floor() as u64;
            for k in 1..=n {
                heap.push(Reverse(Event {
                    time: k as f64 * scfg.window_s,
                    kind: EventKind::SsdWindowClose,
                }));
            }
        }
    }

    // --- event loop --------------------------------------------------------
    let mut last_time = 0.0_f64;
    while let Some(Reverse(ev)) = heap.pop() {
        assert!(ev.time >= last_time, "event processed out of time order");
        last_time = ev.time;
        sim.ric.set_time(ev.time);
        match ev.kind {
            EventKind::MeasurementTick => sim.on_measurement_tick(ev.time)?,
            EventKind::ConnectionRequest { ue } => sim.on_connection_request(ue, ev.time)?,
            EventKind::SliceLoadReport => sim.on_slice_load_report(ev.time),
            EventKind::SsdWindowClose => sim.on_ssd_window_close(ev.time)?,
        }
    }

    // close open serving intervals
    for i in 0..sim.ues.len() {
        sim.close_serving_interval(i, duration);
    }

    sim.trace.conflicts = sim.ric.conflicts().to_vec();
    if let Some(log) = sim.ric.message_log() {
        sim.trace.messages = Some(log.to_vec());
    }
    Ok(sim.trace)
}

fn sample_placement<R: Rng + ?Sized>(p: &Placement, rng: &mut R) -> Position {
    match *p {
        Placement::Annulus {
            cx,
            cy,
            r_min,
            r_max,
        } => {
            // radius via inverse CDF for uniform area density
            let u: f64 = rng.gen_range(0.0..1.0);
            let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            Position::new(cx + r * theta.cos(), cy + r * theta.sin())
        }
        Placement::Disk { cx, cy, r } => {
            let u: f64 = rng.gen_range(0.0..1.0);
            let rad = r * u.sqrt();
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            Position::new(cx + rad * theta.cos(), cy + rad * theta.sin())
        }
        Placement::Rect {
            x_min,
            y_min,
            x_max,
            y_max,
        } => Position::new(rng.gen_range(x_min..x_max), rng.gen_range(y_min..y_max)),
    }
}
