//! QoS-based resource allocation xApp: splits a cell's PRB pool among
//! (cell, 5QI) slices under one of three schemas, then adjusts for SLA
//! throughput targets. All share arithmetic is exact rational.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::{One, Zero};

use crate::error::DomainError;
use crate::policy::{AllocationSchema, SlaTargetBody};
use crate::ric::{ControlPayload, SliceLoadReport};

pub type Share = Ratio<i64>;

/// UEs of one slice: all UEs on one cell sharing a 5QI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceView {
    pub five_qi: u32,
    pub ue_ids: Vec<String>,
}

/// Split the PRB pool among slices.
///
/// EQUAL gives every slice 1/S. PREFER_X weights the preferred 5QI 5:1
/// against each other slice. RESERVE weights each slice by its 5QI.
/// Shares always sum to exactly 1.
pub fn allocate(
    slices: &[SliceView],
    schema: AllocationSchema,
) -> Result<BTreeMap<u32, Share>, DomainError> {
    if slices.is_empty() {
        return Err(DomainError::new("cannot allocate over zero slices"));
    }
    let mut weights: BTreeMap<u32, Share> = BTreeMap::new();
    for s in slices {
        let w = match schema {
            AllocationSchema::Equal => Share::one(),
            AllocationSchema::PreferX { five_qi } => {
                if s.five_qi == five_qi {
                    Share::from_integer(5)
                } else {
                    Share::one()
                }
            }
            AllocationSchema::Reserve => Share::from_integer(i64::from(s.five_qi)),
        };
        if weights.insert(s.five_qi, w).is_some() {
            return Err(DomainError::new(format!(
                "duplicate slice for 5QI {}",
                s.five_qi
            )));
        }
    }
    if let AllocationSchema::PreferX { five_qi } = schema {
        if !weights.contains_key(&five_qi) {
            return Err(DomainError::new(format!(
                "PREFER_X references 5QI {five_qi} but no such slice exists"
            )));
        }
    }
    let total: Share = weights.values().sum();
    Ok(weights.into_iter().map(|(q, w)| (q, w / total)).collect())
}

/// A slice's share divided equally among its UEs.
pub fn per_ue_share(slice_share: Share, ue_count: usize) -> Result<Share, DomainError> {
    if ue_count == 0 {
        return Err(DomainError::new("slice has no UEs"));
    }
    Ok(slice_share / Share::from_integer(ue_count as i64))
}

/// SLA targets resolved against the linear throughput model
/// throughput(slice) = share * prb_count * per_prb_rate_bps.
#[derive(Debug, Clone, Copy, Default)]
pub struct SliceSla {
    pub guaranteed_bps: Option<f64>,
    pub max_bps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlaAdjustment {
    pub shares: BTreeMap<u32, Share>,
    /// False when the guarantees exceed cell capacity and were scaled down.
    pub feasible: bool,
}

fn bps_to_share(bps: f64, cell_capacity_bps: f64) -> Share {
    // Quantize the target to a rational with a fixed denominator so share
    // arithmetic stays exact.
    const DEN: i64 = 1_000_000;
    let frac = (bps / cell_capacity_bps).clamp(0.0, 1.0);
    Ratio::new((frac * DEN as f64).round() as i64, DEN)
}

/// Cap slices above their max throughput, lift slices below their guarantee,
/// re-normalize to 1. Infeasible guarantee sets are scaled proportionally
/// and flagged.
pub fn sla_adjust(
    shares: &BTreeMap<u32, Share>,
    slas: &BTreeMap<u32, SliceSla>,
    cell_capacity_bps: f64,
) -> SlaAdjustment {
    let mut out = shares.clone();
    let mut feasible = true;

    let caps: BTreeMap<u32, Share> = slas
        .iter()
        .filter_map(|(q, s)| s.max_bps.map(|b| (*q, bps_to_share(b, cell_capacity_bps))))
        .collect();
    let mut floors: BTreeMap<u32, Share> = slas
        .iter()
        .filter_map(|(q, s)| {
            s.guaranteed_bps
                .map(|b| (*q, bps_to_share(b, cell_capacity_bps)))
        })
        .collect();

    // Infeasible guarantees: scale all of them down proportionally.
    let floor_sum: Share = floors.values().sum();
    if floor_sum > Share::one() {
        feasible = false;
        for f in floors.values_mut() {
            *f /= floor_sum;
        }
    }

    // Iterate: pin violated caps/floors, share the remainder pro-rata among
    // the unpinned slices. Terminates because each pass pins at least one
    // slice or changes nothing.
    let mut pinned: BTreeMap<u32, Share> = BTreeMap::new();
    loop {
        let mut changed = false;
        let pinned_sum: Share = pinned.values().sum();
        let free_sum: Share = out
            .iter()
            .filter(|(q, _)| !pinned.contains_key(q))
            .map(|(_, s)| *s)
            .sum();
        let remaining = Share::one() - pinned_sum;
        for (q, base) in shares.iter() {
            if pinned.contains_key(q) {
                continue;
            }
            let scaled = if free_sum.is_zero() {
                Share::zero()
            } else {
                *base / free_sum * remaining
            };
            let capped = caps.get(q).copied();
            let floored = floors.get(q).copied();
            if let Some(c) = capped {
                if scaled > c {
                    pinned.insert(*q, c);
                    changed = true;
                    continue;
                }
            }
            if let Some(f) = floored {
                if scaled < f {
                    pinned.insert(*q, f);
                    changed = true;
                    continue;
                }
            }
            out.insert(*q, scaled);
        }
        if !changed {
            break;
        }
    }
    for (q, s) in pinned {
        out.insert(q, s);
    }

    // Re-normalize leftover mass onto unpinned slices already happened via
    // `remaining`; if everything is pinned the sum may be < 1, in which case
    // the pinned caps simply leave capacity idle. Normalize defensively only
    // when the sum exceeds 1 (overlapping floors).
    let total: Share = out.values().sum();
    if total > Share::one() {
        for s in out.values_mut() {
            *s /= total;
        }
    }

    SlaAdjustment {
        shares: out,
        feasible,
    }
}

/// Largest-remainder rounding of shares to integer PRBs; allocations sum to
/// exactly `prb_count` when shares sum to 1.
pub fn shares_to_prbs(shares: &BTreeMap<u32, Share>, prb_count: u32) -> BTreeMap<u32, u32> {
    let prb = Share::from_integer(i64::from(prb_count));
    let mut floors: Vec<(u32, i64, Share)> = shares
        .iter()
        .map(|(q, s)| {
            let exact = *s * prb;
            (*q, exact.floor().to_integer(), exact.fract())
        })
        .collect();
    let assigned: i64 = floors.iter().map(|(_, f, _)| f).sum();
    let mut leftover = i64::from(prb_count) - assigned;
    // largest fractional part first; 5QI ascending breaks ties
    floors.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    let mut out = BTreeMap::new();
    for (q, f, _) in floors {
        let bonus = if leftover > 0 { 1 } else { 0 };
        leftover -= bonus;
        out.insert(q, (f + bonus) as u32);
    }
    out
}

/// Runtime state of the QRA xApp.
pub struct QraXapp {
    pub default_schema: AllocationSchema,
    /// Active SLA targets keyed by slice id string "cell/5qi".
    pub slice_slas: BTreeMap<String, SlaTargetBody>,
    /// Cell-scoped SLA (may carry the allocation schema).
    pub cell_slas: BTreeMap<String, SlaTargetBody>,
    last_split: BTreeMap<String, BTreeMap<u32, Share>>,
}

impl QraXapp {
    pub fn new(default_schema: AllocationSchema) -> Self {
        QraXapp {
            default_schema,
            slice_slas: BTreeMap::new(),
            cell_slas: BTreeMap::new(),
            last_split: BTreeMap::new(),
        }
    }

    pub fn on_sla_policy(&mut self, scope_key: &str, scope_id: &str, body: SlaTargetBody) {
        match scope_key {
            "slice_id" => {
                self.slice_slas.insert(scope_id.to_string(), body);
            }
            _ => {
                self.cell_slas.insert(scope_id.to_string(), body);
            }
        }
    }

    fn schema_for(&self, cell_id: &str) -> AllocationSchema {
        self.cell_slas
            .get(cell_id)
            .and_then(|s| s.allocation_schema)
            .unwrap_or(self.default_schema)
    }

    /// Compute a PRB split for the reported slice load; emits a control only
    /// when the split changed.
    pub fn on_slice_load(
        &mut self,
        report: &SliceLoadReport,
        cell_capacity_bps: f64,
    ) -> Option<ControlPayload> {
        if report.slices.is_empty() {
            return None;
        }
        let slices: Vec<SliceView> = report
            .slices
            .iter()
            .map(|(q, ues)| SliceView {
                five_qi: *q,
                ue_ids: ues.clone(),
            })
            .collect();
        let mut schema = self.schema_for(&report.cell_id);
        if let AllocationSchema::PreferX { five_qi } = schema {
            if !report.slices.contains_key(&five_qi) {
                schema = AllocationSchema::Equal;
            }
        }
        let base = allocate(&slices, schema).ok()?;
        let slas: BTreeMap<u32, SliceSla> = report
            .slices
            .keys()
            .map(|q| {
                let key = format!("{}/{}", report.cell_id, q);
                let sla = self.slice_slas.get(&key);
                (
                    *q,
                    SliceSla {
                        guaranteed_bps: sla.and_then(|s| s.guaranteed_throughput_bps),
                        max_bps: sla.and_then(|s| s.max_throughput_bps),
                    },
                )
            })
            .collect();
        let adjusted = sla_adjust(&base, &slas, cell_capacity_bps);
        if self.last_split.get(&report.cell_id) == Some(&adjusted.shares) {
            return None;
        }
        self.last_split
            .insert(report.cell_id.clone(), adjusted.shares.clone());
        Some(ControlPayload::PrbSplit {
            cell_id: report.cell_id.clone(),
            shares: adjusted.shares,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slice(q: u32, ues: &[&str]) -> SliceView {
        SliceView {
            five_qi: q,
            ue_ids: ues.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn four_slices() -> Vec<SliceView> {
        vec![
            slice(1, &["u1", "u6"]),
            slice(2, &["u2", "u4"]),
            slice(3, &["u5"]),
            slice(4, &["u3"]),
        ]
    }

    #[test]
    fn equal_allocation() {
        let shares = allocate(&four_slices(), AllocationSchema::Equal).unwrap();
        for q in 1..=4 {
            assert_eq!(shares[&q], Ratio::new(1, 4));
        }
    }

    #[test]
    fn prefer_3_allocation() {
        let shares =
            allocate(&four_slices(), AllocationSchema::PreferX { five_qi: 3 }).unwrap();
        assert_eq!(shares[&3], Ratio::new(5, 8)); // 62.5%
        for q in [1, 2, 4] {
            assert_eq!(shares[&q], Ratio::new(1, 8)); // 12.5%
        }
    }

    #[test]
    fn reserve_allocation() {
        let shares = allocate(&four_slices(), AllocationSchema::Reserve).unwrap();
        assert_eq!(shares[&1], Ratio::new(1, 10));
        assert_eq!(shares[&2], Ratio::new(2, 10));
        assert_eq!(shares[&3], Ratio::new(3, 10));
        assert_eq!(shares[&4], Ratio::new(4, 10));
    }

    #[test]
    fn single_slice_gets_everything() {
        for schema in [
            AllocationSchema::Equal,
            AllocationSchema::PreferX { five_qi: 2 },
            AllocationSchema::Reserve,
        ] {
            let shares = allocate(&[slice(2, &["u1"])], schema).unwrap();
            assert_eq!(shares[&2], Ratio::one());
        }
    }

    #[test]
    fn prefer_absent_qi_is_error() {
        assert!(allocate(&[slice(1, &["u1"])], AllocationSchema::PreferX { five_qi: 3 }).is_err());
    }

    #[test]
    fn per_ue_share_examples() {
        assert_eq!(
            per_ue_share(Ratio::new(1, 4), 2).unwrap(),
            Ratio::new(1, 8) // 12.5%
        );
        assert_eq!(per_ue_share(Ratio::new(5, 8), 1).unwrap(), Ratio::new(5, 8));
        assert_eq!(per_ue_share(Ratio::new(4, 10), 1).unwrap(), Ratio::new(2, 5));
    }

    #[test]
    fn shares_sum_to_one_exactly() {
        for schema in [
            AllocationSchema::Equal,
            AllocationSchema::PreferX { five_qi: 3 },
            AllocationSchema::Reserve,
        ] {
            let shares = allocate(&four_slices(), schema).unwrap();
            let total: Share = shares.values().sum();
            assert_eq!(total, Share::one());
        }
    }

    #[test]
    fn allocation_is_permutation_equivariant() {
        let mut reversed = four_slices();
        reversed.reverse();
        for schema in [
            AllocationSchema::Equal,
            AllocationSchema::PreferX { five_qi: 3 },
            AllocationSchema::Reserve,
        ] {
            assert_eq!(
                allocate(&four_slices(), schema).unwrap(),
                allocate(&reversed, schema).unwrap()
            );
        }
    }

    #[test]
    fn reserve_strictly_increasing_in_qi() {
        let shares = allocate(&four_slices(), AllocationSchema::Reserve).unwrap();
        let v: Vec<Share> = shares.values().copied().collect();
        for w in v.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn sla_adjust_identity_without_targets() {
        let shares = allocate(&four_slices(), AllocationSchema::Equal).unwrap();
        let adj = sla_adjust(&shares, &BTreeMap::new(), 1e8);
        assert_eq!(adj.shares, shares);
        assert!(adj.feasible);
    }

    #[test]
    fn sla_adjust_caps_and_redistributes() {
        // two slices at 50/50, capacity 100 Mbps; cap slice 1 at 25 Mbps
        let shares: BTreeMap<u32, Share> =
            [(1, Ratio::new(1, 2)), (2, Ratio::new(1, 2))].into();
        let slas: BTreeMap<u32, SliceSla> = [(
            1,
            SliceSla {
                guaranteed_bps: None,
                max_bps: Some(25e6),
            },
        )]
        .into();
        let adj = sla_adjust(&shares, &slas, 100e6);
        assert_eq!(adj.shares[&1], Ratio::new(1, 4));
        assert_eq!(adj.shares[&2], Ratio::new(3, 4));
        assert!(adj.feasible);
    }

    #[test]
    fn sla_adjust_infeasible_guarantees_scaled() {
        let shares: BTreeMap<u32, Share> =
            [(1, Ratio::new(1, 2)), (2, Ratio::new(1, 2))].into();
        let slas: BTreeMap<u32, SliceSla> = [
            (
                1,
                SliceSla {
                    guaranteed_bps: Some(80e6),
                    max_bps: None,
                },
            ),
            (
                2,
                SliceSla {
                    guaranteed_bps: Some(80e6),
                    max_bps: None,
                },
            ),
        ]
        .into();
        let adj = sla_adjust(&shares, &slas, 100e6);
        assert!(!adj.feasible);
        let total: Share = adj.shares.values().sum();
        assert!(total <= Share::one());
        assert_eq!(adj.shares[&1], adj.shares[&2]);
    }

    #[test]
    fn sla_adjust_idempotent_on_feasible_input() {
        let shares: BTreeMap<u32, Share> =
            [(1, Ratio::new(1, 2)), (2, Ratio::new(1, 2))].into();
        let slas: BTreeMap<u32, SliceSla> = [(
            1,
            SliceSla {
                guaranteed_bps: None,
                max_bps: Some(25e6),
            },
        )]
        .into();
        let once = sla_adjust(&shares, &slas, 100e6);
        let twice = sla_adjust(&once.shares, &slas, 100e6);
        assert_eq!(once.shares, twice.shares);
    }

    #[test]
    fn largest_remainder_rounding() {
        let shares: BTreeMap<u32, Share> =
            [(1, Ratio::new(1, 4)), (2, Ratio::new(3, 4))].into();
        let prbs = shares_to_prbs(&shares, 100);
        assert_eq!(prbs[&1], 25);
        assert_eq!(prbs[&2], 75);

        // 3-way split of 100 PRBs: 34/33/33
        let shares: BTreeMap<u32, Share> = [
            (1, Ratio::new(1, 3)),
            (2, Ratio::new(1, 3)),
            (3, Ratio::new(1, 3)),
        ]
        .into();
        let prbs = shares_to_prbs(&shares, 100);
        assert_eq!(prbs.values().sum::<u32>(), 100);
        assert_eq!(prbs[&1], 34);
    }

    #[test]
    fn paper_table_all_18_cells() {
        // (ue, 5qi) rows; expected per-UE bandwidth parts in percent
        let ue_qi = [(1u32, 1u32), (2, 2), (3, 4), (4, 2), (5, 3), (6, 1)];
        let expected: [(AllocationSchema, [Share; 6]); 3] = [
            (
                AllocationSchema::Equal,
                [
                    Ratio::new(125, 10),
                    Ratio::new(125, 10),
                    Ratio::new(25, 1),
                    Ratio::new(125, 10),
                    Ratio::new(25, 1),
                    Ratio::new(125, 10),
                ],
            ),
            (
                AllocationSchema::PreferX { five_qi: 3 },
                [
                    Ratio::new(625, 100),
                    Ratio::new(625, 100),
                    Ratio::new(125, 10),
                    Ratio::new(625, 100),
                    Ratio::new(625, 10),
                    Ratio::new(625, 100),
                ],
            ),
            (
                AllocationSchema::Reserve,
                [
                    Ratio::new(5, 1),
                    Ratio::new(10, 1),
                    Ratio::new(40, 1),
                    Ratio::new(10, 1),
                    Ratio::new(30, 1),
                    Ratio::new(5, 1),
                ],
            ),
        ];
        let slices = four_slices();
        for (schema, per_ue_pct) in expected {
            let shares = allocate(&slices, schema).unwrap();
            for (i, (_, qi)) in ue_qi.iter().enumerate() {
                let count = slices.iter().find(|s| s.five_qi == *qi).unwrap().ue_ids.len();
                let got = per_ue_share(shares[qi], count).unwrap() * Share::from_integer(100);
                assert_eq!(got, per_ue_pct[i], "schema {schema:?} ue {}", i + 1);
            }
        }
    }
}
