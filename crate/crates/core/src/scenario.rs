//! Scenario configuration: the JSON document the CLI loads, with strict
//! (unknown-key-rejecting) deserialization and field-level validation.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::policy::{self, A1Policy};
use crate::wireless::{Beam, LocalizationTechnique, PropagationParams, TaConfig};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Bounds {
    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if !(self.x_max > self.x_min && self.y_max > self.y_min) {
            return Err(ConfigError::new(field, "bounds must have positive extent"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub cell_id: String,
    pub x: f64,
    pub y: f64,
    pub prb_count: u32,
    /// Throughput one PRB carries, for SLA feasibility checks.
    #[serde(default = "default_per_prb_rate")]
    pub per_prb_rate_bps: f64,
    pub prop: PropagationParams,
    #[serde(default = "default_scs")]
    pub scs_khz: u32,
    #[serde(default)]
    pub beams: Vec<Beam>,
}

fn default_per_prb_rate() -> f64 {
    1.0e6
}

fn default_scs() -> u32 {
    15
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum UeKind {
    Mobile,
    IotLegit,
    IotAdversary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub ue_id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub speed_mps: f64,
    #[serde(default)]
    pub bearing_deg: f64,
    #[serde(default = "default_five_qi")]
    pub five_qi: u32,
    #[serde(default = "default_ue_kind")]
    pub kind: UeKind,
}

fn default_five_qi() -> u32 {
    1
}

fn default_ue_kind() -> UeKind {
    UeKind::Mobile
}

/// Random placement region for generated UEs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum Placement {
    /// Uniform over an annulus centered at (cx, cy).
    Annulus {
        cx: f64,
        cy: f64,
        r_min: f64,
        r_max: f64,
    },
    /// Uniform over a disk.
    Disk { cx: f64, cy: f64, r: f64 },
    /// Uniform over an axis-aligned rectangle.
    Rect {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeGenerator {
    pub prefix: String,
    pub count: u32,
    pub kind: UeKind,
    #[serde(default = "default_five_qi")]
    pub five_qi: u32,
    pub placement: Placement,
    #[serde(default)]
    pub speed_mps: f64,
    /// Fixed bearing in degrees; omitted means a uniform random bearing
    /// per UE.
    #[serde(default)]
    pub bearing_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryTraffic {
    pub attacks_per_day: f64,
    pub burst_len: u32,
    pub burst_gap_s: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    /// Per-device legitimate connection-request rate.
    #[serde(default)]
    pub legit_rate_per_hour: f64,
    #[serde(default)]
    pub adversary: Option<AdversaryTraffic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MotionModel {
    Bounce,
    Wrap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TsXappConfig {
    #[serde(default)]
    pub enabled: bool,
    /// PREFER/AVOID score offset in dB; omitted means the calibrated
    /// default 10 * n * log10(3) from the first cell's pathloss exponent.
    #[serde(default)]
    pub preference_offset_db: Option<f64>,
    #[serde(default)]
    pub hysteresis_db: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QraXappConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_report_period")]
    pub report_period_s: f64,
}

fn default_report_period() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsdXappConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default = "default_bucket")]
    pub bucket_len_s: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_min_pts")]
    pub min_pts: usize,
    #[serde(default = "default_k_sigma")]
    pub k_sigma: f64,
    #[serde(default = "default_std_floor")]
    pub std_floor: f64,
    #[serde(default = "default_ttl")]
    pub blacklist_ttl_s: f64,
    /// Storm-free days simulated before t=0 to learn the KPI profile.
    #[serde(default = "default_training_days")]
    pub training_days: u32,
    #[serde(default = "default_min_training")]
    pub min_training_windows: usize,
}

fn default_window() -> f64 {
    300.0
}
fn default_bucket() -> f64 {
    3600.0
}
fn default_eps() -> f64 {
    3.0
}
fn default_min_pts() -> usize {
    4
}
fn default_k_sigma() -> f64 {
    8.0
}
fn default_std_floor() -> f64 {
    0.5
}
fn default_ttl() -> f64 {
    300.0
}
fn default_training_days() -> u32 {
    3
}
fn default_min_training() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BmmXappConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_localization")]
    pub localization: LocalizationTechnique,
    #[serde(default = "default_grid_cell")]
    pub grid_cell_m: f64,
    #[serde(default = "default_horizon")]
    pub horizon_ticks: usize,
    #[serde(default = "default_margin")]
    pub margin_db: f64,
    #[serde(default = "default_fail_threshold")]
    pub failure_threshold_dbm: f64,
    #[serde(default = "default_n_consecutive")]
    pub n_consecutive: u32,
    /// Per-tick measurement noise on the serving beam, in dB.
    #[serde(default)]
    pub fading_sigma_db: f64,
    /// Training samples drawn along generated-UE trajectories to build the
    /// radio environment map before t=0.
    #[serde(default = "default_rem_samples")]
    pub rem_training_samples: u32,
    /// Skip the map entirely: always pick the measured best beam and emit a
    /// control every tick. Used for arbitration stress scenarios.
    #[serde(default)]
    pub emergency_only: bool,
}

fn default_localization() -> LocalizationTechnique {
    LocalizationTechnique::Gps
}
fn default_grid_cell() -> f64 {
    5.0
}
fn default_horizon() -> usize {
    25
}
fn default_margin() -> f64 {
    3.0
}
fn default_fail_threshold() -> f64 {
    -100.0
}
fn default_n_consecutive() -> u32 {
    3
}
fn default_rem_samples() -> u32 {
    20_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XappsConfig {
    /// Arbitration priority, highest first.
    #[serde(default)]
    pub priority: Vec<String>,
    #[serde(default)]
    pub ts: Option<TsXappConfig>,
    #[serde(default)]
    pub qra: Option<QraXappConfig>,
    #[serde(default)]
    pub ssd: Option<SsdXappConfig>,
    #[serde(default)]
    pub bmm: Option<BmmXappConfig>,
}

impl Default for XappsConfig {
    fn default() -> Self {
        XappsConfig {
            priority: Vec::new(),
            ts: None,
            qra: None,
            ssd: None,
            bmm: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    /// Dotted-path overrides applied to the base document, same syntax as
    /// the CLI `--set` flag.
    pub overrides: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub duration_s: f64,
    pub bounds: Bounds,
    #[serde(default = "default_tick")]
    pub measurement_tick_s: f64,
    pub cells: Vec<CellConfig>,
    #[serde(default)]
    pub ues: Vec<UeConfig>,
    #[serde(default)]
    pub ue_generators: Vec<UeGenerator>,
    #[serde(default)]
    pub traffic: TrafficConfig,
    #[serde(default = "default_motion")]
    pub motion: MotionModel,
    #[serde(default)]
    pub xapps: XappsConfig,
    /// Inline A1 policy documents installed at t=0.
    #[serde(default)]
    pub policies: Vec<serde_json::Value>,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub message_log: bool,
}

fn default_tick() -> f64 {
    0.02
}

fn default_motion() -> MotionModel {
    MotionModel::Bounce
}

impl ScenarioConfig {
    pub fn from_json(doc: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            serde_json::from_str(doc).map_err(|e| ConfigError::new("$", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse the inline policy documents with their JSON paths attached.
    pub fn parsed_policies(&self) -> Result<Vec<A1Policy>, ConfigError> {
        self.policies
            .iter()
            .enumerate()
            .map(|(i, v)| {
                policy::parse_value(v).map_err(|e| {
                    ConfigError::new(format!("policies[{i}]{}", &e.path[1..]), e.msg)
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.duration_s >= 0.0) {
            return Err(ConfigError::new("duration_s", "must be >= 0"));
        }
        if !(self.measurement_tick_s > 0.0) {
            return Err(ConfigError::new("measurement_tick_s", "must be > 0"));
        }
        self.bounds.validate("bounds")?;
        if self.cells.is_empty() {
            return Err(ConfigError::new("cells", "at least one cell required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, c) in self.cells.iter().enumerate() {
            let at = |f: &str| format!("cells[{i}].{f}");
            if !seen.insert(&c.cell_id) {
                return Err(ConfigError::new(at("cell_id"), "duplicate cell_id"));
            }
            if c.prb_count == 0 {
                return Err(ConfigError::new(at("prb_count"), "must be > 0"));
            }
            if !(c.per_prb_rate_bps > 0.0) {
                return Err(ConfigError::new(at("per_prb_rate_bps"), "must be > 0"));
            }
            c.prop
                .validate()
                .map_err(|e| ConfigError::new(at("prop"), e.to_string()))?;
            TaConfig::new(c.scs_khz)
                .map_err(|e| ConfigError::new(at("scs_khz"), e.to_string()))?;
            let mut beam_ids = std::collections::BTreeSet::new();
            for (j, b) in c.beams.iter().enumerate() {
                if !beam_ids.insert(b.beam_id) {
                    return Err(ConfigError::new(
                        format!("cells[{i}].beams[{j}].beam_id"),
                        "duplicate beam_id",
                    ));
                }
                if !(b.beamwidth_3db_deg > 0.0) {
                    return Err(ConfigError::new(
                        format!("cells[{i}].beams[{j}].beamwidth_3db_deg"),
                        "must be > 0",
                    ));
                }
            }
        }
        let mut ue_ids = std::collections::BTreeSet::new();
        for (i, u) in self.ues.iter().enumerate() {
            if !ue_ids.insert(u.ue_id.clone()) {
                return Err(ConfigError::new(format!("ues[{i}].ue_id"), "duplicate ue_id"));
            }
            if u.five_qi == 0 {
                return Err(ConfigError::new(format!("ues[{i}].five_qi"), "must be >= 1"));
            }
            if u.speed_mps < 0.0 {
                return Err(ConfigError::new(format!("ues[{i}].speed_mps"), "must be >= 0"));
            }
        }
        for (i, g) in self.ue_generators.iter().enumerate() {
            let at = |f: &str| format!("ue_generators[{i}].{f}");
            if g.count == 0 {
                return Err(ConfigError::new(at("count"), "must be > 0"));
            }
            if g.five_qi == 0 {
                return Err(ConfigError::new(at("five_qi"), "must be >= 1"));
            }
            match g.placement {
                Placement::Annulus { r_min, r_max, .. } => {
                    if !(r_max > r_min && r_min >= 0.0) {
                        return Err(ConfigError::new(
                            at("placement"),
                            "annulus requires 0 <= r_min < r_max",
                        ));
                    }
                }
                Placement::Disk { r, .. } => {
                    if !(r > 0.0) {
                        return Err(ConfigError::new(at("placement"), "disk radius must be > 0"));
                    }
                }
                Placement::Rect {
                    x_min,
                    y_min,
                    x_max,
                    y_max,
                } => {
                    if !(x_max > x_min && y_max > y_min) {
                        return Err(ConfigError::new(
                            at("placement"),
                            "rect must have positive extent",
                        ));
                    }
                }
            }
        }
        if self.traffic.legit_rate_per_hour < 0.0 {
            return Err(ConfigError::new("traffic.legit_rate_per_hour", "must be >= 0"));
        }
        if let Some(a) = &self.traffic.adversary {
            if a.burst_len == 0 {
                return Err(ConfigError::new("traffic.adversary.burst_len", "must be >= 1"));
            }
            if !(a.burst_gap_s > 0.0) {
                return Err(ConfigError::new("traffic.adversary.burst_gap_s", "must be > 0"));
            }
            if a.attacks_per_day < 0.0 {
                return Err(ConfigError::new(
                    "traffic.adversary.attacks_per_day",
                    "must be >= 0",
                ));
            }
        }
        if let Some(q) = &self.xapps.qra {
            if !(q.report_period_s > 0.0) {
                return Err(ConfigError::new("xapps.qra.report_period_s", "must be > 0"));
            }
        }
        if let Some(s) = &self.xapps.ssd {
            if !(s.window_s > 0.0) {
                return Err(ConfigError::new("xapps.ssd.window_s", "must be > 0"));
            }
            if !(s.bucket_len_s > 0.0) {
                return Err(ConfigError::new("xapps.ssd.bucket_len_s", "must be > 0"));
            }
            if !(s.eps > 0.0) {
                return Err(ConfigError::new("xapps.ssd.eps", "must be > 0"));
            }
            if !(s.blacklist_ttl_s > 0.0) {
                return Err(ConfigError::new("xapps.ssd.blacklist_ttl_s", "must be > 0"));
            }
        }
        if let Some(b) = &self.xapps.bmm {
            if !(b.grid_cell_m > 0.0) {
                return Err(ConfigError::new("xapps.bmm.grid_cell_m", "must be > 0"));
            }
            if b.n_consecutive == 0 {
                return Err(ConfigError::new("xapps.bmm.n_consecutive", "must be >= 1"));
            }
            if b.fading_sigma_db < 0.0 {
                return Err(ConfigError::new("xapps.bmm.fading_sigma_db", "must be >= 0"));
            }
        }
        self.parsed_policies()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{
            "name": "t",
            "duration_s": 1.0,
            "bounds": {"x_min": 0, "y_min": 0, "x_max": 100, "y_max": 100},
            "cells": [{
                "cell_id": "c1", "x": 0, "y": 0, "prb_count": 100,
                "prop": {"ref_loss_db": 40, "exponent": 2,
                         "tx_power_dbm": 30, "shadowing_sigma_db": 0}
            }]
        }"#
        .to_string()
    }

    #[test]
    fn minimal_config_parses() {
        let cfg = ScenarioConfig::from_json(&minimal()).unwrap();
        assert_eq!(cfg.measurement_tick_s, 0.02);
        assert_eq!(cfg.cells[0].scs_khz, 15);
    }

    #[test]
    fn unknown_key_rejected() {
        let doc = minimal().replace("\"name\": \"t\"", "\"name\": \"t\", \"bogus\": 1");
        assert!(ScenarioConfig::from_json(&doc).is_err());
    }

    #[test]
    fn negative_duration_names_field() {
        let doc = minimal().replace("\"duration_s\": 1.0", "\"duration_s\": -1.0");
        let err = ScenarioConfig::from_json(&doc).unwrap_err();
        assert_eq!(err.field, "duration_s");
    }

    #[test]
    fn duplicate_cell_id_rejected() {
        let mut cfg = ScenarioConfig::from_json(&minimal()).unwrap();
        cfg.cells.push(cfg.cells[0].clone());
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.field, "cells[1].cell_id");
    }

    #[test]
    fn bad_inline_policy_names_index() {
        let mut cfg = ScenarioConfig::from_json(&minimal()).unwrap();
        cfg.policies.push(serde_json::json!({"policy_id": "p"}));
        let err = cfg.validate().unwrap_err();
        assert!(err.field.starts_with("policies[0]"), "{}", err.field);
    }

    #[test]
    fn bad_scs_rejected() {
        let doc = minimal().replace(
            "\"prb_count\": 100,",
            "\"prb_count\": 100, \"scs_khz\": 17,",
        );
        let err = ScenarioConfig::from_json(&doc).unwrap_err();
        assert_eq!(err.field, "cells[0].scs_khz");
    }
}
