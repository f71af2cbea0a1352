//! A1 policy documents: parsing, validation and cross-checking.
//!
//! Three document types are supported: traffic-steering preferences,
//! SLA targets for slice resource allocation, and TA blacklists. Validation
//! is total: any byte string yields either a policy or a structured error
//! carrying the JSON path of the offending field.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Where a policy applies. Exactly one scope key is set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyScope {
    UeId(String),
    SliceId(String),
    CellId(String),
}

impl PolicyScope {
    pub fn key(&self) -> &'static str {
        match self {
            PolicyScope::UeId(_) => "ue_id",
            PolicyScope::SliceId(_) => "slice_id",
            PolicyScope::CellId(_) => "cell_id",
        }
    }

    pub fn id(&self) -> &str {
        match self {
            PolicyScope::UeId(s) | PolicyScope::SliceId(s) | PolicyScope::CellId(s) => s,
        }
    }
}

/// Per-cell steering label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TsLabel {
    #[serde(rename = "PREFER")]
    Prefer,
    #[serde(rename = "AVOID")]
    Avoid,
    #[serde(rename = "FORBID")]
    Forbid,
}

impl fmt::Display for TsLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TsLabel::Prefer => "PREFER",
            TsLabel::Avoid => "AVOID",
            TsLabel::Forbid => "FORBID",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TsPreferenceBody {
    /// cell_id -> label; at least one entry.
    pub cells: BTreeMap<String, TsLabel>,
}

/// How PRBs are split among slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocationSchema {
    #[serde(rename = "EQUAL")]
    Equal,
    #[serde(rename = "PREFER_X")]
    PreferX { five_qi: u32 },
    #[serde(rename = "RESERVE")]
    Reserve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SlaTargetBody {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guaranteed_throughput_bps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_throughput_bps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ue_throughput_bps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_ues: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allocation_schema: Option<AllocationSchema>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaBlacklistBody {
    pub cell_id: String,
    /// Non-empty, sorted, deduplicated.
    pub ta_indices: Vec<u32>,
    pub ttl_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyBody {
    TsPreferences(TsPreferenceBody),
    SlaTarget(SlaTargetBody),
    TaBlacklist(TaBlacklistBody),
}

impl PolicyBody {
    pub fn type_name(&self) -> &'static str {
        match self {
            PolicyBody::TsPreferences(_) => "TS_PREFERENCES",
            PolicyBody::SlaTarget(_) => "SLA_TARGET",
            PolicyBody::TaBlacklist(_) => "TA_BLACKLIST",
        }
    }
}

/// Parsed and validated A1 policy document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Policy {
    pub policy_id: String,
    pub scope: PolicyScope,
    pub body: PolicyBody,
}

/// Validation error with the JSON path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("policy error at {path}: {msg}")]
pub struct PolicyError {
    pub path: String,
    pub msg: String,
}

impl PolicyError {
    fn at(path: impl Into<String>, msg: impl Into<String>) -> Self {
        PolicyError {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

fn obj<'a>(v: &'a Value, path: &str) -> Result<&'a serde_json::Map<String, Value>, PolicyError> {
    v.as_object()
        .ok_or_else(|| PolicyError::at(path, "expected a JSON object"))
}

fn str_field<'a>(
    m: &'a serde_json::Map<String, Value>,
    parent: &str,
    key: &str,
) -> Result<&'a str, PolicyError> {
    let path = format!("{parent}.{key}");
    m.get(key)
        .ok_or_else(|| PolicyError::at(&path, "missing required field"))?
        .as_str()
        .ok_or_else(|| PolicyError::at(&path, "expected a string"))
}

fn check_no_extra_keys(
    m: &serde_json::Map<String, Value>,
    parent: &str,
    allowed: &[&str],
) -> Result<(), PolicyError> {
    for key in m.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(PolicyError::at(
                format!("{parent}.{key}"),
                "unknown field",
            ));
        }
    }
    Ok(())
}

fn finite_pos_number(v: &Value, path: &str) -> Result<f64, PolicyError> {
    let x = v
        .as_f64()
        .ok_or_else(|| PolicyError::at(path, "expected a number"))?;
    if !x.is_finite() || x <= 0.0 {
        return Err(PolicyError::at(path, format!("must be a finite positive number, got {x}")));
    }
    Ok(x)
}

/// Parse and validate a JSON policy document.
pub fn parse(doc: &str) -> Result<A1Policy, PolicyError> {
    let value: Value = serde_json::from_str(doc)
        .map_err(|e| PolicyError::at("$", format!("invalid JSON: {e}")))?;
    parse_value(&value)
}

/// Same as [`parse`] but starting from an already-decoded JSON value.
pub fn parse_value(value: &Value) -> Result<A1Policy, PolicyError> {
    let root = obj(value, "$")?;
    check_no_extra_keys(root, "$", &["policy_id", "policy_type", "scope", "body"])?;

    let policy_id = str_field(root, "$", "policy_id")?.to_string();
    if policy_id.is_empty() {
        return Err(PolicyError::at("$.policy_id", "must be non-empty"));
    }
    let policy_type = str_field(root, "$", "policy_type")?;

    let scope_val = root
        .get("scope")
        .ok_or_else(|| PolicyError::at("$.scope", "missing required field"))?;
    let scope_obj = obj(scope_val, "$.scope")?;
    if scope_obj.len() != 1 {
        return Err(PolicyError::at(
            "$.scope",
            format!("exactly one scope key required, got {}", scope_obj.len()),
        ));
    }
    let (skey, sval) = scope_obj.iter().next().expect("len checked");
    let sid = sval
        .as_str()
        .ok_or_else(|| PolicyError::at(format!("$.scope.{skey}"), "expected a string"))?
        .to_string();
    let scope = match skey.as_str() {
        "ue_id" => PolicyScope::UeId(sid),
        "slice_id" => PolicyScope::SliceId(sid),
        "cell_id" => PolicyScope::CellId(sid),
        other => {
            return Err(PolicyError::at(
                format!("$.scope.{other}"),
                "unknown scope key (expected ue_id, slice_id or cell_id)",
            ))
        }
    };

    let body_val = root
        .get("body")
        .ok_or_else(|| PolicyError::at("$.body", "missing required field"))?;
    let body_obj = obj(body_val, "$.body")?;

    let body = match policy_type {
        "TS_PREFERENCES" => PolicyBody::TsPreferences(parse_ts_body(body_obj)?),
        "SLA_TARGET" => PolicyBody::SlaTarget(parse_sla_body(body_obj)?),
        "TA_BLACKLIST" => PolicyBody::TaBlacklist(parse_blacklist_body(body_obj)?),
        other => {
            return Err(PolicyError::at(
                "$.policy_type",
                format!("unknown policy type: {other}"),
            ))
        }
    };

    Ok(A1Policy {
        policy_id,
        scope,
        body,
    })
}

fn parse_ts_body(m: &serde_json::Map<String, Value>) -> Result<TsPreferenceBody, PolicyError> {
    check_no_extra_keys(m, "$.body", &["cells"])?;
    let cells_val = m
        .get("cells")
        .ok_or_else(|| PolicyError::at("$.body.cells", "missing required field"))?;
    let cells_obj = obj(cells_val, "$.body.cells")?;
    if cells_obj.is_empty() {
        return Err(PolicyError::at("$.body.cells", "at least one cell required"));
    }
    let mut cells = BTreeMap::new();
    for (cell, label_val) in cells_obj {
        let path = format!("$.body.cells.{cell}");
        let label_str = label_val
            .as_str()
            .ok_or_else(|| PolicyError::at(&path, "expected a string label"))?;
        let label = match label_str {
            "PREFER" => TsLabel::Prefer,
            "AVOID" => TsLabel::Avoid,
            "FORBID" => TsLabel::Forbid,
            other => {
                return Err(PolicyError::at(
                    &path,
                    format!("unknown label {other} (expected PREFER, AVOID or FORBID)"),
                ))
            }
        };
        cells.insert(cell.clone(), label);
    }
    Ok(TsPreferenceBody { cells })
}

fn parse_sla_body(m: &serde_json::Map<String, Value>) -> Result<SlaTargetBody, PolicyError> {
    check_no_extra_keys(
        m,
        "$.body",
        &[
            "guaranteed_throughput_bps",
            "max_throughput_bps",
            "max_ue_throughput_bps",
            "max_ues",
            "allocation_schema",
        ],
    )?;
    let mut body = SlaTargetBody::default();
    for key in [
        "guaranteed_throughput_bps",
        "max_throughput_bps",
        "max_ue_throughput_bps",
    ] {
        if let Some(v) = m.get(key) {
            let x = finite_pos_number(v, &format!("$.body.{key}"))?;
            match key {
                "guaranteed_throughput_bps" => body.guaranteed_throughput_bps = Some(x),
                "max_throughput_bps" => body.max_throughput_bps = Some(x),
                _ => body.max_ue_throughput_bps = Some(x),
            }
        }
    }
    if let Some(v) = m.get("max_ues") {
        let n = v
            .as_u64()
            .ok_or_else(|| PolicyError::at("$.body.max_ues", "expected a non-negative integer"))?;
        body.max_ues = Some(u32::try_from(n).map_err(|_| {
            PolicyError::at("$.body.max_ues", "value too large")
        })?);
    }
    if let Some(v) = m.get("allocation_schema") {
        body.allocation_schema = Some(parse_schema(v)?);
    }
    if let (Some(g), Some(mx)) = (body.guaranteed_throughput_bps, body.max_throughput_bps) {
        if g > mx {
            return Err(PolicyError::at(
                "$.body.guaranteed_throughput_bps",
                format!("guaranteed ({g}) must be <= max ({mx})"),
            ));
        }
    }
    Ok(body)
}

fn parse_schema(v: &Value) -> Result<AllocationSchema, PolicyError> {
    let path = "$.body.allocation_schema";
    if let Some(s) = v.as_str() {
        return match s {
            "EQUAL" => Ok(AllocationSchema::Equal),
            "RESERVE" => Ok(AllocationSchema::Reserve),
            other => Err(PolicyError::at(
                path,
                format!("unknown schema {other} (expected EQUAL, RESERVE or {{\"PREFER_X\":{{\"five_qi\":N}}}})"),
            )),
        };
    }
    if let Some(m) = v.as_object() {
        if let Some(inner) = m.get("PREFER_X") {
            let im = obj(inner, &format!("{path}.PREFER_X"))?;
            check_no_extra_keys(im, &format!("{path}.PREFER_X"), &["five_qi"])?;
            let q = im
                .get("five_qi")
                .and_then(Value::as_u64)
                .ok_or_else(|| {
                    PolicyError::at(
                        format!("{path}.PREFER_X.five_qi"),
                        "expected a positive integer",
                    )
                })?;
            if q == 0 || q > u64::from(u32::MAX) {
                return Err(PolicyError::at(
                    format!("{path}.PREFER_X.five_qi"),
                    "5QI must be >= 1",
                ));
            }
            return Ok(AllocationSchema::PreferX {
                five_qi: q as u32,
            });
        }
    }
    Err(PolicyError::at(path, "expected a schema string or PREFER_X object"))
}

fn parse_blacklist_body(
    m: &serde_json::Map<String, Value>,
) -> Result<TaBlacklistBody, PolicyError> {
    check_no_extra_keys(m, "$.body", &["cell_id", "ta_indices", "ttl_s"])?;
    let cell_id = str_field(m, "$.body", "cell_id")?.to_string();
    let arr = m
        .get("ta_indices")
        .ok_or_else(|| PolicyError::at("$.body.ta_indices", "missing required field"))?
        .as_array()
        .ok_or_else(|| PolicyError::at("$.body.ta_indices", "expected an array"))?;
    if arr.is_empty() {
        return Err(PolicyError::at("$.body.ta_indices", "must be non-empty"));
    }
    let mut ta_indices = Vec::with_capacity(arr.len());
    for (i, v) in arr.iter().enumerate() {
        let n = v.as_u64().ok_or_else(|| {
            PolicyError::at(
                format!("$.body.ta_indices[{i}]"),
                "expected a non-negative integer",
            )
        })?;
        ta_indices.push(u32::try_from(n).map_err(|_| {
            PolicyError::at(format!("$.body.ta_indices[{i}]"), "value too large")
        })?);
    }
    ta_indices.sort_unstable();
    ta_indices.dedup();
    let ttl_s = finite_pos_number(
        m.get("ttl_s")
            .ok_or_else(|| PolicyError::at("$.body.ttl_s", "missing required field"))?,
        "$.body.ttl_s",
    )?;
    Ok(TaBlacklistBody {
        cell_id,
        ta_indices,
        ttl_s,
    })
}

/// Serialize back to the canonical JSON document shape accepted by [`parse`].
pub fn serialize(policy: &A1Policy) -> String {
    let scope = serde_json::json!({ policy.scope.key(): policy.scope.id() });
    let body = match &policy.body {
        PolicyBody::TsPreferences(b) => serde_json::to_value(b),
        PolicyBody::SlaTarget(b) => serde_json::to_value(b),
        PolicyBody::TaBlacklist(b) => serde_json::to_value(b),
    }
    .expect("policy bodies serialize infallibly");
    serde_json::to_string_pretty(&serde_json::json!({
        "policy_id": policy.policy_id,
        "policy_type": policy.body.type_name(),
        "scope": scope,
        "body": body,
    }))
    .expect("json serialization of a value cannot fail")
}

/// One detected inconsistency between policies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyConflict {
    pub candidate_id: String,
    pub other_id: Option<String>,
    pub reason: String,
}

/// Cross-verify a candidate policy against the active set.
///
/// Flags duplicate ids on the same (type, scope), contradictory traffic
/// steering labels for the same (ue, cell), and steering documents that leave
/// a UE with no serviceable cell.
pub fn cross_check(active: &[A1Policy], candidate: &A1Policy) -> Vec<PolicyConflict> {
    let mut conflicts = Vec::new();

    for a in active {
        if a.body.type_name() == candidate.body.type_name()
            && a.scope == candidate.scope
            && a.policy_id != candidate.policy_id
        {
            conflicts.push(PolicyConflict {
                candidate_id: candidate.policy_id.clone(),
                other_id: Some(a.policy_id.clone()),
                reason: format!(
                    "duplicate {} policy for scope {}={}",
                    candidate.body.type_name(),
                    candidate.scope.key(),
                    candidate.scope.id()
                ),
            });
        }
    }

    if let (PolicyBody::TsPreferences(body), PolicyScope::UeId(ue)) =
        (&candidate.body, &candidate.scope)
    {
        if body.cells.values().all(|l| *l == TsLabel::Forbid) {
            conflicts.push(PolicyConflict {
                candidate_id: candidate.policy_id.clone(),
                other_id: None,
                reason: format!("no serviceable cell: every cell FORBIDden for ue {ue}"),
            });
        }
        for a in active {
            let (PolicyBody::TsPreferences(abody), PolicyScope::UeId(aue)) = (&a.body, &a.scope)
            else {
                continue;
            };
            if aue != ue || a.policy_id == candidate.policy_id {
                continue;
            }
            for (cell, label) in &body.cells {
                if let Some(alabel) = abody.cells.get(cell) {
                    if alabel != label {
                        conflicts.push(PolicyConflict {
                            candidate_id: candidate.policy_id.clone(),
                            other_id: Some(a.policy_id.clone()),
                            reason: format!(
                                "contradictory labels for (ue {ue}, cell {cell}): {label} vs {alabel}"
                            ),
                        });
                    }
                }
            }
        }
    }

    // deterministic output regardless of active-set ordering
    conflicts.sort_by(|x, y| {
        (&x.reason, &x.other_id).cmp(&(&y.reason, &y.other_id))
    });
    conflicts
}
