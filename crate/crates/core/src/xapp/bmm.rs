//! Beam mobility management xApp: an offline-built radio environment map
//! (per-beam mean RSRP on a spatial grid plus local motion histograms) and
//! an online lookahead beam selector that minimizes reselections while
//! steering clear of beam failures. Falls back to measurement-driven
//! emergency selection when the map cannot be trusted.

use rand::Rng;

use crate::ric::ControlPayload;
use crate::wireless::{noisy_position, LocalizationTechnique, Position};

const SPEED_BIN_MPS: f64 = 10.0;
const BEARING_BIN_DEG: f64 = 45.0;
const BEARING_BINS: usize = 8;
const SPEED_BINS: usize = 8;

/// One training observation: where the UE truly was and what every beam
/// measured there.
#[derive(Debug, Clone)]
pub struct RemSample {
    pub true_pos: Position,
    pub per_beam_rsrp_dbm: Vec<f64>,
    /// Motion at the sample, if known: (speed m/s, bearing deg).
    pub motion: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
struct BinStats {
    /// per-beam (sum of dB values, sample count)
    beams: Vec<(f64, u32)>,
    motion_counts: [[u32; BEARING_BINS]; SPEED_BINS],
    motion_total: u32,
}

/// Spatial grid of per-beam mean RSRP and motion-pattern histograms.
#[derive(Debug, Clone)]
pub struct RemGrid {
    pub origin: Position,
    pub cell_size_m: f64,
    pub nx: usize,
    pub ny: usize,
    pub n_beams: usize,
    bins: Vec<BinStats>,
}

fn motion_bins(speed: f64, bearing_deg: f64) -> (usize, usize) {
    let si = ((speed / SPEED_BIN_MPS) as usize).min(SPEED_BINS - 1);
    let bi = ((bearing_deg.rem_euclid(360.0) / BEARING_BIN_DEG + 0.5) as usize) % BEARING_BINS;
    (si, bi)
}

impl RemGrid {
    pub fn bin_index(&self, pos: &Position) -> Option<usize> {
        let ix = (pos.x - self.origin.x) / self.cell_size_m;
        let iy = (pos.y - self.origin.y) / self.cell_size_m;
        if ix < 0.0 || iy < 0.0 {
            return None;
        }
        let (ix, iy) = (ix as usize, iy as usize);
        if ix >= self.nx || iy >= self.ny {
            return None;
        }
        Some(iy * self.nx + ix)
    }

    /// Mean RSRP of a beam in the grid cell containing `pos`; `None` when
    /// the position is off-grid or the bin has no samples for that beam.
    pub fn rsrp(&self, pos: &Position, beam_id: usize) -> Option<f64> {
        let bin = &self.bins[self.bin_index(pos)?];
        let (sum, count) = *bin.beams.get(beam_id)?;
        (count > 0).then(|| sum / f64::from(count))
    }

    /// Modal (speed, bearing) of the motion histogram at `pos`, as bin
    /// centers. `None` when no motion was observed there.
    pub fn modal_motion(&self, pos: &Position) -> Option<(f64, f64)> {
        let bin = &self.bins[self.bin_index(pos)?];
        if bin.motion_total == 0 {
            return None;
        }
        let mut best = (0u32, 0usize, 0usize);
        for si in 0..SPEED_BINS {
            for bi in 0..BEARING_BINS {
                let c = bin.motion_counts[si][bi];
                if c > best.0 {
                    best = (c, si, bi);
                }
            }
        }
        let speed = (best.1 as f64 + 0.5) * SPEED_BIN_MPS;
        let bearing = best.2 as f64 * BEARING_BIN_DEG;
        Some((speed, bearing))
    }

    /// Motion-histogram probability mass at `pos` (1.0 where data exists).
    pub fn motion_mass(&self, pos: &Position) -> f64 {
        match self.bin_index(pos) {
            Some(i) if self.bins[i].motion_total > 0 => 1.0,
            _ => 0.0,
        }
    }
}

/// Build the REM from training samples. Each sample's position is first
/// perturbed by the localization error of the configured technique, so map
/// quality degrades exactly as the location source does. RSRP is averaged
/// in the dB domain.
pub fn build_rem<R: Rng + ?Sized>(
    samples: &[RemSample],
    tech: LocalizationTechnique,
    origin: Position,
    cell_size_m: f64,
    nx: usize,
    ny: usize,
    n_beams: usize,
    rng: &mut R,
) -> RemGrid {
    let mut grid = RemGrid {
        origin,
        cell_size_m,
        nx,
        ny,
        n_beams,
        bins: vec![
            BinStats {
                beams: vec![(0.0, 0); n_beams],
                ..BinStats::default()
            };
            nx * ny
        ],
    };
    for s in samples {
        let reported = noisy_position(s.true_pos, tech, rng);
        let Some(ix) = grid.bin_index(&reported) else {
            continue; // noise pushed the sample off-grid
        };
        let bin = &mut grid.bins[ix];
        for (b, rsrp) in s.per_beam_rsrp_dbm.iter().enumerate().take(n_beams) {
            bin.beams[b].0 += rsrp;
            bin.beams[b].1 += 1;
        }
        if let Some((speed, bearing)) = s.motion {
            let (si, bi) = motion_bins(speed, bearing);
            bin.motion_counts[si][bi] += 1;
            bin.motion_total += 1;
        }
    }
    grid
}

/// Expected future positions: advance by the modal motion of the local
/// histogram for `horizon` steps of `tick_s`. Truncates at the grid edge;
/// with no motion data the position repeats.
pub fn predict_path(
    pos: Position,
    rem: &RemGrid,
    horizon: usize,
    tick_s: f64,
) -> Vec<Position> {
    let mut path = Vec::with_capacity(horizon);
    let mut cur = pos;
    for _ in 0..horizon {
        match rem.modal_motion(&cur) {
            Some((speed, bearing)) => {
                let rad = bearing.to_radians();
                let next = Position {
                    x: cur.x + speed * rad.cos() * tick_s,
                    y: cur.y + speed * rad.sin() * tick_s,
                };
                if rem.bin_index(&next).is_none() {
                    break; // truncate at the boundary
                }
                cur = next;
            }
            None => {} // no motion info: stay put
        }
        path.push(cur);
    }
    path
}

/// Why a beam decision was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionReason {
    Stay,
    LookaheadSwitch,
    EmergencyRsrp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamDecision {
    pub beam_id: Option<u32>,
    pub reason: DecisionReason,
}

/// Lookahead beam choice from a reported (noisy) position.
///
/// Keeps the current beam when its REM RSRP clears threshold + margin over
/// the whole predicted path; otherwise switches to the beam covering the
/// longest consecutive prefix of the path, ties broken by REM RSRP at the
/// reported position, then lowest beam id. Off-grid positions, and positions
/// whose map bin has no training data for any beam, fall back to emergency
/// measurement-driven selection.
pub fn select_beam(
    reported_pos: Position,
    current_beam: Option<u32>,
    rem: &RemGrid,
    horizon: usize,
    tick_s: f64,
    failure_threshold_dbm: f64,
    margin_db: f64,
) -> BeamDecision {
    let untrained =
        (0..rem.n_beams).all(|b| rem.rsrp(&reported_pos, b).is_none());
    if rem.bin_index(&reported_pos).is_none() || untrained {
        return BeamDecision {
            beam_id: None,
            reason: DecisionReason::EmergencyRsrp,
        };
    }
    let bar = failure_threshold_dbm + margin_db;
    let mut path = vec![reported_pos];
    path.extend(predict_path(reported_pos, rem, horizon, tick_s));

    let covers = |beam: usize| -> usize {
        path.iter()
            .take_while(|p| rem.rsrp(p, beam).is_some_and(|r| r >= bar))
            .count()
    };

    if let Some(cur) = current_beam {
        if covers(cur as usize) == path.len() {
            return BeamDecision {
                beam_id: Some(cur),
                reason: DecisionReason::Stay,
            };
        }
    }

    let mut best: Option<(usize, f64, u32)> = None; // (run, rsrp_here, beam)
    for b in 0..rem.n_beams {
        let run = covers(b);
        let here = rem.rsrp(&reported_pos, b).unwrap_or(f64::NEG_INFINITY);
        let better = match &best {
            None => true,
            Some((brun, bhere, bid)) => {
                run > *brun
                    || (run == *brun && here > *bhere)
                    || (run == *brun && here == *bhere && (b as u32) < *bid)
            }
        };
        if better {
            best = Some((run, here, b as u32));
        }
    }
    let chosen = best.map(|(_, _, b)| b);
    let reason = if chosen == current_beam {
        DecisionReason::Stay
    } else {
        DecisionReason::LookaheadSwitch
    };
    BeamDecision {
        beam_id: chosen,
        reason,
    }
}

/// Measurement-driven fallback: the strongest reported beam, lowest id on
/// ties.
pub fn emergency_select(per_beam_rsrp_dbm: &[f64]) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for (b, &r) in per_beam_rsrp_dbm.iter().enumerate() {
        if best.map_or(true, |(br, _)| r > br) {
            best = Some((r, b as u32));
        }
    }
    best.map(|(_, b)| b)
}

/// Consecutive below-threshold tick counter; fires a failure event each time
/// the streak reaches `n_consecutive`, then resets.
#[derive(Debug, Clone)]
pub struct BeamFailureMonitor {
    pub failure_threshold_dbm: f64,
    pub n_consecutive: u32,
    streak: u32,
}

impl BeamFailureMonitor {
    pub fn new(failure_threshold_dbm: f64, n_consecutive: u32) -> Self {
        assert!(n_consecutive >= 1);
        BeamFailureMonitor {
            failure_threshold_dbm,
            n_consecutive,
            streak: 0,
        }
    }

    /// Observe one tick's serving RSRP; returns true when a failure fires.
    pub fn observe(&mut self, serving_rsrp_dbm: f64) -> bool {
        if serving_rsrp_dbm < self.failure_threshold_dbm {
            self.streak += 1;
            if self.streak >= self.n_consecutive {
                self.streak = 0;
                return true;
            }
        } else {
            self.streak = 0;
        }
        false
    }

    pub fn reset(&mut self) {
        self.streak = 0;
    }
}

/// Window-based emergency mode switch: enter when a window's failure total
/// exceeds the limit, leave after enough clean windows.
#[derive(Debug, Clone)]
pub struct EmergencyMode {
    pub enter_limit: u32,
    pub exit_clean_windows: u32,
    active: bool,
    clean_streak: u32,
}

impl EmergencyMode {
    pub fn new(enter_limit: u32, exit_clean_windows: u32) -> Self {
        EmergencyMode {
            enter_limit,
            exit_clean_windows,
            active: false,
            clean_streak: 0,
        }
    }

    pub fn active(&self) -> bool {
        self.active
    }

    pub fn on_window(&mut self, failures_in_window: u32) {
        if failures_in_window > self.enter_limit {
            self.active = true;
            self.clean_streak = 0;
        } else if self.active {
            if failures_in_window == 0 {
                self.clean_streak += 1;
                if self.clean_streak >= self.exit_clean_windows {
                    self.active = false;
                    self.clean_streak = 0;
                }
            } else {
                self.clean_streak = 0;
            }
        }
    }
}

/// Build a BEAM_SWITCH control for a decision, or `None` when nothing should
/// be emitted. STAY decisions never emit; emergency decisions always re-assert
/// the measured best beam so downstream state converges even after an
/// arbitration loss.
pub fn control_for(
    ue_id: &str,
    decision: &BeamDecision,
    current_beam: Option<u32>,
) -> Option<ControlPayload> {
    match decision.reason {
        DecisionReason::Stay => None,
        DecisionReason::LookaheadSwitch => {
            let beam_id = decision.beam_id?;
            (Some(beam_id) != current_beam).then(|| ControlPayload::BeamSwitch {
                ue_id: ue_id.to_string(),
                beam_id,
            })
        }
        DecisionReason::EmergencyRsrp => decision.beam_id.map(|beam_id| {
            ControlPayload::BeamSwitch {
                ue_id: ue_id.to_string(),
                beam_id,
            }
        }),
    }
}
