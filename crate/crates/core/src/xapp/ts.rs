//! Traffic steering xApp: picks a serving cell per UE from RSRP reports,
//! modified by PREFER/AVOID score offsets and hard FORBID exclusions.

use std::collections::BTreeMap;

use crate::error::DomainError;
use crate::policy::{TsLabel, TsPreferenceBody};
use crate::ric::ControlPayload;

/// Steering state: active per-UE label maps plus tuning knobs.
#[derive(Debug, Clone)]
pub struct TsState {
    /// ue_id -> (cell_id -> label)
    pub policies: BTreeMap<String, BTreeMap<String, TsLabel>>,
    pub preference_offset_db: f64,
    pub hysteresis_db: f64,
}

impl TsState {
    pub fn new(preference_offset_db: f64, hysteresis_db: f64) -> Self {
        TsState {
            policies: BTreeMap::new(),
            preference_offset_db,
            hysteresis_db,
        }
    }

    pub fn install(&mut self, ue_id: &str, body: &TsPreferenceBody) {
        self.policies
            .insert(ue_id.to_string(), body.cells.clone());
    }

    fn label(&self, ue_id: &str, cell_id: &str) -> Option<TsLabel> {
        self.policies.get(ue_id)?.get(cell_id).copied()
    }
}

/// Pick the serving cell for one UE.
///
/// FORBIDden cells are excluded outright; PREFER/AVOID shift the RSRP score
/// by the symmetric preference offset. The current serving cell is kept
/// unless a candidate beats it by more than the hysteresis. Returns `None`
/// iff every reported cell is forbidden.
pub fn decide(
    ue_id: &str,
    rsrp_report: &BTreeMap<String, f64>,
    serving: Option<&str>,
    state: &TsState,
) -> Result<Option<String>, DomainError> {
    if rsrp_report.is_empty() {
        return Err(DomainError::new("empty RSRP report"));
    }
    let score = |cell: &str, rsrp: f64| -> Option<f64> {
        match state.label(ue_id, cell) {
            Some(TsLabel::Forbid) => None,
            Some(TsLabel::Prefer) => Some(rsrp + state.preference_offset_db),
            Some(TsLabel::Avoid) => Some(rsrp - state.preference_offset_db),
            None => Some(rsrp),
        }
    };

    let mut best: Option<(&str, f64)> = None;
    for (cell, rsrp) in rsrp_report {
        let Some(s) = score(cell, *rsrp) else { continue };
        match best {
            // ties resolved toward the lexicographically smaller cell id,
            // which BTreeMap iteration order already gives us
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((cell.as_str(), s)),
        }
    }
    let Some((best_cell, best_score)) = best else {
        return Ok(None);
    };

    if let Some(cur) = serving {
        if let Some(cur_rsrp) = rsrp_report.get(cur) {
            if let Some(cur_score) = score(cur, *cur_rsrp) {
                if best_score <= cur_score + state.hysteresis_db {
                    return Ok(Some(cur.to_string()));
                }
            }
        }
    }
    Ok(Some(best_cell.to_string()))
}

/// Preference offset that puts the two-cell handover boundary at the 3/4
/// point of the inter-cell segment under log-distance pathloss with the
/// given exponent: 10 * n * log10(3).
pub fn calibration_offset(exponent: f64) -> Result<f64, DomainError> {
    if !(exponent > 0.0) {
        return Err(DomainError::new("exponent must be > 0"));
    }
    Ok(10.0 * exponent * 3f64.log10())
}

/// Runtime wrapper used by the simulator.
pub struct TsXapp {
    pub state: TsState,
}

impl TsXapp {
    pub fn new(preference_offset_db: f64, hysteresis_db: f64) -> Self {
        TsXapp {
            state: TsState::new(preference_offset_db, hysteresis_db),
        }
    }

    /// Returns a handover control when the decision differs from the
    /// current serving cell.
    pub fn on_measurements(
        &mut self,
        ue_id: &str,
        rsrp_by_cell: &BTreeMap<String, f64>,
        serving: Option<&str>,
    ) -> Result<Option<ControlPayload>, DomainError> {
        let target = decide(ue_id, rsrp_by_cell, serving, &self.state)?;
        match target {
            Some(cell) if Some(cell.as_str()) != serving => Ok(Some(ControlPayload::Handover {
                ue_id: ue_id.to_string(),
                target_cell: cell,
            })),
            _ => Ok(None),
        }
    }
}
