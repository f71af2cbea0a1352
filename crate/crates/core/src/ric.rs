//! Near-RT RIC core: typed message envelopes, subscription management,
//! A1 policy ingestion and a static-priority control-conflict arbiter.
//!
//! The bus is a synchronous in-process dispatcher; the simulator drives it
//! from inside the event loop. All payloads are immutable values.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::DomainError;
use crate::policy::{A1Policy, PolicyBody, TaBlacklistBody};

pub type MsgId = u64;

/// E2/A1 service kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Subscription,
    Report,
    Control,
    Policy,
    Insert,
    A1Policy,
    A1Ei,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ServiceModel {
    Kpm,
    Rc,
}

/// What a subscription delivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportKind {
    RsrpMeas,
    ConnStats,
    BeamStats,
    SliceLoad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscription {
    pub sub_id: u64,
    pub xapp_id: String,
    pub cell_ids: Vec<String>,
    pub report_kind: ReportKind,
    pub period_s: f64,
}

/// Per-UE measurement row inside an RSRP report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsrpEntry {
    pub ue_id: String,
    pub cell_id: String,
    /// Wide-beam (no beamforming) RSRP toward this cell.
    pub rsrp_dbm: f64,
    /// Per-beam RSRP, indexed by beam id; empty for beamless cells.
    pub per_beam_dbm: Vec<f64>,
    /// RSRP on the currently serving beam, if this cell serves the UE on one.
    pub serving_beam_dbm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnStatsReport {
    pub cell_id: String,
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub request_count: u32,
    pub ta_histogram: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamStatsReport {
    pub cell_id: String,
    pub window_start_s: f64,
    pub window_end_s: f64,
    /// Beam-failure events observed in the window, per UE.
    pub failures_per_ue: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceLoadReport {
    pub cell_id: String,
    /// five_qi -> connected UE ids.
    pub slices: BTreeMap<u32, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportPayload {
    RsrpMeas(Vec<RsrpEntry>),
    ConnStats(ConnStatsReport),
    BeamStats(BeamStatsReport),
    SliceLoad(SliceLoadReport),
}

impl ReportPayload {
    pub fn kind(&self) -> ReportKind {
        match self {
            ReportPayload::RsrpMeas(_) => ReportKind::RsrpMeas,
            ReportPayload::ConnStats(_) => ReportKind::ConnStats,
            ReportPayload::BeamStats(_) => ReportKind::BeamStats,
            ReportPayload::SliceLoad(_) => ReportKind::SliceLoad,
        }
    }
}

/// Control actions xApps may request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlPayload {
    Handover {
        ue_id: String,
        target_cell: String,
    },
    BeamSwitch {
        ue_id: String,
        beam_id: u32,
    },
    PrbSplit {
        cell_id: String,
        /// five_qi -> share of the cell's PRB pool; shares sum to 1.
        shares: BTreeMap<u32, Ratio<i64>>,
    },
}

/// The (entity, parameter) a control acts on. Handover and beam switch both
/// touch the UE's attachment (a handover clears the serving beam), so they
/// arbitrate against each other.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum ControlTarget {
    UeAttachment(String),
    CellPrb(String),
}

impl ControlPayload {
    pub fn target(&self) -> ControlTarget {
        match self {
            ControlPayload::Handover { ue_id, .. } | ControlPayload::BeamSwitch { ue_id, .. } => {
                ControlTarget::UeAttachment(ue_id.clone())
            }
            ControlPayload::PrbSplit { cell_id, .. } => ControlTarget::CellPrb(cell_id.clone()),
        }
    }
}

/// Per-UE enrichment information (location) delivered over A1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EiLocation {
    pub ue_id: String,
    pub x: f64,
    pub y: f64,
    /// Time the fix was taken (message time minus the configured EI delay).
    pub fix_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Payload {
    Subscription(Subscription),
    Report(ReportPayload),
    Control(ControlPayload),
    Policy(TaBlacklistBody),
    A1Policy(A1Policy),
    A1Ei(Vec<EiLocation>),
}

/// Typed envelope for everything that crosses the bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RicMessage {
    pub msg_id: MsgId,
    pub time_s: f64,
    pub kind: MessageKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service_model: Option<ServiceModel>,
    pub source: String,
    pub target: String,
    pub payload: Payload,
}

/// Record of a control conflict resolved by the arbiter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictRecord {
    pub time_s: f64,
    pub msg_ids: Vec<MsgId>,
    pub entity: String,
    pub winning_xapp: String,
    pub losing_xapps: Vec<String>,
}

/// A control queued for end-of-tick arbitration.
#[derive(Debug, Clone)]
pub struct QueuedControl {
    pub msg_id: MsgId,
    pub xapp_id: String,
    pub payload: ControlPayload,
}

#[derive(Debug, thiserror::Error)]
pub enum RicError {
    #[error("unknown cell {0}")]
    UnknownCell(String),
    #[error("xapp {0} is not registered")]
    UnregisteredXapp(String),
    #[error("E2 INSERT service is accepted in the message model but not implemented")]
    InsertNotSupported,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Near-RT RIC state: registered xApps, subscriptions, the active A1 policy
/// set and the conflict log.
pub struct Ric {
    next_msg_id: MsgId,
    next_sub_id: u64,
    time_s: f64,
    cell_ids: Vec<String>,
    xapp_priority: Vec<String>,
    subscriptions: Vec<Subscription>,
    pending_controls: Vec<QueuedControl>,
    conflicts: Vec<ConflictRecord>,
    /// (policy type, scope key, scope id) -> active policy.
    active_policies: BTreeMap<(String, String, String), A1Policy>,
    message_log: Option<Vec<RicMessage>>,
}

impl Ric {
    /// `xapp_priority` is ordered highest priority first; xApps not listed
    /// rank below all listed ones.
    pub fn new(cell_ids: Vec<String>, xapp_priority: Vec<String>, keep_log: bool) -> Self {
        Ric {
            next_msg_id: 0,
            next_sub_id: 0,
            time_s: 0.0,
            cell_ids,
            xapp_priority,
            subscriptions: Vec::new(),
            pending_controls: Vec::new(),
            conflicts: Vec::new(),
            active_policies: BTreeMap::new(),
            message_log: keep_log.then(Vec::new),
        }
    }

    pub fn set_time(&mut self, t: f64) {
        self.time_s = t;
    }

    fn next_id(&mut self) -> MsgId {
        let id = self.next_msg_id;
        self.next_msg_id += 1;
        id
    }

    fn log(&mut self, msg: &RicMessage) {
        if let Some(log) = &mut self.message_log {
            log.push(msg.clone());
        }
    }

    pub fn message_log(&self) -> Option<&[RicMessage]> {
        self.message_log.as_deref()
    }

    pub fn conflicts(&self) -> &[ConflictRecord] {
        &self.conflicts
    }

    pub fn subscriptions(&self) -> &[Subscription] {
        &self.subscriptions
    }

    /// Register a periodic report stream. Duplicate identical subscriptions
    /// are idempotent and return the original sub_id.
    pub fn subscribe(
        &mut self,
        xapp_id: &str,
        cell_ids: Vec<String>,
        report_kind: ReportKind,
        period_s: f64,
    ) -> Result<u64, RicError> {
        if !(period_s > 0.0) {
            return Err(DomainError::new("subscription period must be > 0").into());
        }
        for c in &cell_ids {
            if !self.cell_ids.contains(c) {
                return Err(RicError::UnknownCell(c.clone()));
            }
        }
        if let Some(existing) = self.subscriptions.iter().find(|s| {
            s.xapp_id == xapp_id
                && s.cell_ids == cell_ids
                && s.report_kind == report_kind
                && s.period_s == period_s
        }) {
            return Ok(existing.sub_id);
        }
        let sub_id = self.next_sub_id;
        self.next_sub_id += 1;
        let sub = Subscription {
            sub_id,
            xapp_id: xapp_id.to_string(),
            cell_ids,
            report_kind,
            period_s,
        };
        let msg = RicMessage {
            msg_id: self.next_id(),
            time_s: self.time_s,
            kind: MessageKind::Subscription,
            service_model: Some(match report_kind {
                ReportKind::RsrpMeas | ReportKind::ConnStats | ReportKind::BeamStats => {
                    ServiceModel::Kpm
                }
                ReportKind::SliceLoad => ServiceModel::Kpm,
            }),
            source: format!("xapp:{xapp_id}"),
            target: "ric".to_string(),
            payload: Payload::Subscription(sub.clone()),
        };
        self.log(&msg);
        self.subscriptions.push(sub);
        Ok(sub_id)
    }

    /// Wrap window data into a REPORT message for the owning xApp.
    /// Panics if the subscription is not active (caller schedules reports
    /// only for registered subscriptions).
    pub fn publish_report(&mut self, sub_id: u64, data: ReportPayload) -> RicMessage {
        let sub = self
            .subscriptions
            .iter()
            .find(|s| s.sub_id == sub_id)
            .expect("report published for an inactive subscription");
        assert_eq!(sub.report_kind, data.kind(), "payload schema mismatch");
        let target = format!("xapp:{}", sub.xapp_id);
        let msg = RicMessage {
            msg_id: self.next_msg_id,
            time_s: self.time_s,
            kind: MessageKind::Report,
            service_model: Some(ServiceModel::Kpm),
            source: "ric".to_string(),
            target,
            payload: Payload::Report(data),
        };
        self.next_msg_id += 1;
        self.log(&msg);
        msg
    }

    /// Queue a control for end-of-tick arbitration.
    pub fn submit_control(
        &mut self,
        xapp_id: &str,
        payload: ControlPayload,
    ) -> Result<MsgId, RicError> {
        let msg_id = self.next_id();
        let msg = RicMessage {
            msg_id,
            time_s: self.time_s,
            kind: MessageKind::Control,
            service_model: Some(ServiceModel::Rc),
            source: format!("xapp:{xapp_id}"),
            target: "ric".to_string(),
            payload: Payload::Control(payload.clone()),
        };
        self.log(&msg);
        self.pending_controls.push(QueuedControl {
            msg_id,
            xapp_id: xapp_id.to_string(),
            payload,
        });
        Ok(msg_id)
    }

    /// Rejected explicitly: the INSERT service is part of the message model
    /// but no xApp here uses it.
    pub fn submit_insert(&mut self) -> Result<(), RicError> {
        Err(RicError::InsertNotSupported)
    }

    fn priority_rank(&self, xapp_id: &str) -> usize {
        self.xapp_priority
            .iter()
            .position(|x| x == xapp_id)
            .unwrap_or(self.xapp_priority.len())
    }

    /// Resolve this tick's queued controls: group by (entity, parameter),
    /// apply the highest-priority xApp's control per group, log the losers.
    pub fn arbitrate(&mut self) -> Vec<QueuedControl> {
        let queued = std::mem::take(&mut self.pending_controls);
        let mut groups: BTreeMap<ControlTarget, Vec<QueuedControl>> = BTreeMap::new();
        for q in queued {
            groups.entry(q.payload.target()).or_default().push(q);
        }
        let mut applied = Vec::new();
        for (target, mut group) in groups {
            group.sort_by(|a, b| {
                self.priority_rank(&a.xapp_id)
                    .cmp(&self.priority_rank(&b.xapp_id))
                    .then_with(|| a.xapp_id.cmp(&b.xapp_id))
                    .then_with(|| a.msg_id.cmp(&b.msg_id))
            });
            if group.len() > 1 {
                let entity = match &target {
                    ControlTarget::UeAttachment(ue) => format!("ue:{ue}"),
                    ControlTarget::CellPrb(cell) => format!("cell:{cell}"),
                };
                self.conflicts.push(ConflictRecord {
                    time_s: self.time_s,
                    msg_ids: group.iter().map(|q| q.msg_id).collect(),
                    entity,
                    winning_xapp: group[0].xapp_id.clone(),
                    losing_xapps: group[1..].iter().map(|q| q.xapp_id.clone()).collect(),
                });
            }
            applied.push(group.swap_remove(0));
        }
        applied
    }

    /// Install a validated A1 policy. Replaces any prior policy with the same
    /// (type, scope). Returns the logged message.
    pub fn ingest_a1(&mut self, policy: A1Policy) -> RicMessage {
        let key = (
            policy.body.type_name().to_string(),
            policy.scope.key().to_string(),
            policy.scope.id().to_string(),
        );
        let target = match &policy.body {
            PolicyBody::TsPreferences(_) => "xapp:ts".to_string(),
            PolicyBody::SlaTarget(_) => "xapp:qra".to_string(),
            PolicyBody::TaBlacklist(b) => format!("cell:{}", b.cell_id),
        };
        let msg = RicMessage {
            msg_id: self.next_msg_id,
            time_s: self.time_s,
            kind: MessageKind::A1Policy,
            service_model: None,
            source: "non-rt-ric".to_string(),
            target,
            payload: Payload::A1Policy(policy.clone()),
        };
        self.next_msg_id += 1;
        self.log(&msg);
        self.active_policies.insert(key, policy);
        msg
    }

    pub fn active_policies(&self) -> impl Iterator<Item = &A1Policy> {
        self.active_policies.values()
    }

    /// Log an enrichment-information delivery (UE locations).
    pub fn deliver_ei(&mut self, target_xapp: &str, locations: Vec<EiLocation>) -> RicMessage {
        let msg = RicMessage {
            msg_id: self.next_msg_id,
            time_s: self.time_s,
            kind: MessageKind::A1Ei,
            service_model: None,
            source: "non-rt-ric".to_string(),
            target: format!("xapp:{target_xapp}"),
            payload: Payload::A1Ei(locations),
        };
        self.next_msg_id += 1;
        self.log(&msg);
        msg
    }

    /// Log an E2 POLICY message (TA blacklist toward a cell).
    pub fn deliver_e2_policy(&mut self, xapp_id: &str, body: TaBlacklistBody) -> RicMessage {
        let msg = RicMessage {
            msg_id: self.next_msg_id,
            time_s: self.time_s,
            kind: MessageKind::Policy,
            service_model: Some(ServiceModel::Rc),
            source: format!("xapp:{xapp_id}"),
            target: format!("cell:{}", body.cell_id),
            payload: Payload::Policy(body),
        };
        self.next_msg_id += 1;
        self.log(&msg);
        msg
    }
}
