//! Signaling-storm detection xApp: long-term KPI profiles, per-window
//! anomaly scoring, DBSCAN-based storm detection, and TA blacklisting.

use std::collections::BTreeMap;

use crate::error::DomainError;
use crate::policy::TaBlacklistBody;

/// Connection statistics for one report window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub start_s: f64,
    pub end_s: f64,
    pub request_count: u32,
    pub ta_histogram: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketStats {
    pub mean: f64,
    pub std: f64,
}

/// Long-term per-time-of-day statistics of connection-request counts, plus
/// a per-TA-bin profile of counts per window.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiProfile {
    pub bucket_len_s: f64,
    /// time-of-day bucket index -> (mean, sample std) of window counts
    pub buckets: BTreeMap<u32, BucketStats>,
    /// ta_index -> (mean, sample std) of per-window counts for that bin
    pub ta_bins: BTreeMap<u32, BucketStats>,
}

impl KpiProfile {
    pub fn bucket_of(&self, window_start_s: f64) -> u32 {
        ((window_start_s.rem_euclid(86_400.0)) / self.bucket_len_s) as u32
    }
}

/// 2-D anomaly feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalyPoint {
    pub z_count: f64,
    pub z_ta_peak: f64,
}

impl AnomalyPoint {
    fn dist(&self, other: &AnomalyPoint) -> f64 {
        (self.z_count - other.z_count).hypot(self.z_ta_peak - other.z_ta_peak)
    }
}

fn sample_stats(values: &[f64]) -> BucketStats {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    BucketStats { mean, std }
}

/// Build the long-term profile from training windows.
///
/// Every time-of-day bucket touched by the training data must hold at least
/// `min_training_windows` windows.
pub fn build_profile(
    windows: &[WindowStats],
    bucket_len_s: f64,
    min_training_windows: usize,
) -> Result<KpiProfile, DomainError> {
    if !(bucket_len_s > 0.0) {
        return Err(DomainError::new("bucket_len_s must be > 0"));
    }
    if windows.is_empty() {
        return Err(DomainError::new("no training windows"));
    }
    let mut per_bucket: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    let mut per_bin: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for w in windows {
        let bucket = ((w.start_s.rem_euclid(86_400.0)) / bucket_len_s) as u32;
        per_bucket
            .entry(bucket)
            .or_default()
            .push(f64::from(w.request_count));
        for (bin, count) in &w.ta_histogram {
            per_bin.entry(*bin).or_default().push(f64::from(*count));
        }
    }
    for (bucket, counts) in &per_bucket {
        if counts.len() < min_training_windows {
            return Err(DomainError::new(format!(
                "time-of-day bucket {bucket} has only {} training windows (need {min_training_windows})",
                counts.len()
            )));
        }
    }
    // Bins absent from a window contributed zero requests; pad so per-bin
    // stats are over all windows, not only the ones where the bin appeared.
    let total = windows.len();
    let buckets = per_bucket
        .into_iter()
        .map(|(b, v)| (b, sample_stats(&v)))
        .collect();
    let ta_bins = per_bin
        .into_iter()
        .map(|(bin, mut v)| {
            v.resize(total, 0.0);
            (bin, sample_stats(&v))
        })
        .collect();
    Ok(KpiProfile {
        bucket_len_s,
        buckets,
        ta_bins,
    })
}

/// Score a window against the profile. `std_floor` guards quiet buckets.
pub fn anomaly_point(
    w: &WindowStats,
    profile: &KpiProfile,
    std_floor: f64,
) -> Result<AnomalyPoint, DomainError> {
    let bucket = profile.bucket_of(w.start_s);
    let stats = profile.buckets.get(&bucket).ok_or_else(|| {
        DomainError::new(format!("profile does not cover time-of-day bucket {bucket}"))
    })?;
    let z_count = (f64::from(w.request_count) - stats.mean) / stats.std.max(std_floor);
    let z_ta_peak = match w.ta_histogram.iter().max_by_key(|(bin, c)| (**c, std::cmp::Reverse(**bin))) {
        None => 0.0,
        Some((bin, count)) => {
            let bin_stats = profile
                .ta_bins
                .get(bin)
                .copied()
                .unwrap_or(BucketStats { mean: 0.0, std: 0.0 });
            (f64::from(*count) - bin_stats.mean) / bin_stats.std.max(std_floor)
        }
    };
    Ok(AnomalyPoint { z_count, z_ta_peak })
}

/// DBSCAN label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Cluster(usize),
    Noise,
}

/// Standard DBSCAN over 2-D points with Euclidean distance and an inclusive
/// radius. A point is core iff its eps-neighborhood (self included) holds at
/// least `min_pts` points. Border points are assigned to the cluster of
/// their nearest core point (ties toward the lower index), which makes the
/// labeling independent of input order up to cluster renaming.
pub fn dbscan(points: &[AnomalyPoint], eps: f64, min_pts: usize) -> Vec<Label> {
    let n = points.len();
    let mut labels = vec![Label::Noise; n];
    if n == 0 {
        return labels;
    }

    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| points[i].dist(&points[j]) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|ns| ns.len() >= min_pts).collect();

    // Expand clusters over core points in index order.
    let mut cluster = 0usize;
    let mut visited = vec![false; n];
    for i in 0..n {
        if !core[i] || visited[i] {
            continue;
        }
        let mut stack = vec![i];
        visited[i] = true;
        while let Some(p) = stack.pop() {
            labels[p] = Label::Cluster(cluster);
            for &q in &neighbors[p] {
                if core[q] && !visited[q] {
                    visited[q] = true;
                    stack.push(q);
                }
            }
        }
        cluster += 1;
    }

    // Border points: nearest core neighbor within eps decides the cluster.
    for i in 0..n {
        if core[i] {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &j in &neighbors[i] {
            if !core[j] {
                continue;
            }
            let d = points[i].dist(&points[j]);
            if best.map_or(true, |(bd, bj)| d < bd || (d == bd && j < bj)) {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            labels[i] = labels[j];
        }
    }
    labels
}

/// Storm test: the window is a storm iff its anomaly point is labeled NOISE
/// when clustered together with the normal-history points.
///
/// Evaluated incrementally: the candidate is noise iff it is not core in the
/// augmented set and no augmented-core history point lies within eps.
pub fn detect(
    candidate: AnomalyPoint,
    history: &[AnomalyPoint],
    history_neighbor_counts: &[usize],
    eps: f64,
    min_pts: usize,
) -> bool {
    assert!(!history.is_empty(), "normal history must be non-empty");
    let mut cand_neighbors = 1usize; // self
    let mut border_of_core = false;
    for (h, &count) in history.iter().zip(history_neighbor_counts) {
        if candidate.dist(h) <= eps {
            cand_neighbors += 1;
            // +1: the candidate joins h's neighborhood
            if count + 1 >= min_pts {
                border_of_core = true;
            }
        }
    }
    let cand_core = cand_neighbors >= min_pts;
    !(cand_core || border_of_core)
}

/// Self-neighborhood sizes of the history set (self included), precomputed
/// once so per-window detection is linear.
pub fn history_neighbor_counts(history: &[AnomalyPoint], eps: f64) -> Vec<usize> {
    history
        .iter()
        .map(|p| history.iter().filter(|q| p.dist(q) <= eps).count())
        .collect()
}

/// After a detected storm, blacklist every TA bin whose window count exceeds
/// its profile mean + k_sigma * std (floored). Returns `None` when no bin
/// exceeds its threshold.
pub fn blacklist_from_ta(
    w: &WindowStats,
    profile: &KpiProfile,
    cell_id: &str,
    k_sigma: f64,
    std_floor: f64,
    ttl_s: f64,
) -> Option<TaBlacklistBody> {
    let mut ta_indices = Vec::new();
    for (bin, count) in &w.ta_histogram {
        let stats = profile
            .ta_bins
            .get(bin)
            .copied()
            .unwrap_or(BucketStats { mean: 0.0, std: 0.0 });
        let threshold = stats.mean + k_sigma * stats.std.max(std_floor);
        if f64::from(*count) > threshold {
            ta_indices.push(*bin);
        }
    }
    if ta_indices.is_empty() {
        return None;
    }
    Some(TaBlacklistBody {
        cell_id: cell_id.to_string(),
        ta_indices,
        ttl_s,
    })
}

/// Per-window record exported to `ssd_windows.csv`.
#[derive(Debug, Clone)]
pub struct SsdWindowRecord {
    pub start_s: f64,
    pub end_s: f64,
    pub request_count: u32,
    pub z_count: f64,
    pub z_ta_peak: f64,
    pub storm: bool,
}

/// Runtime state of the SSD xApp for one cell.
pub struct SsdXapp {
    pub profile: KpiProfile,
    history: Vec<AnomalyPoint>,
    history_counts: Vec<usize>,
    pub eps: f64,
    pub min_pts: usize,
    pub k_sigma: f64,
    pub std_floor: f64,
    pub blacklist_ttl_s: f64,
    /// Accumulated blacklist: ta_index -> expiry time. Re-emitted as a whole
    /// on every renewal so earlier detections stay enforced.
    active_bins: BTreeMap<u32, f64>,
    pub windows: Vec<SsdWindowRecord>,
}

impl SsdXapp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        profile: KpiProfile,
        history: Vec<AnomalyPoint>,
        eps: f64,
        min_pts: usize,
        k_sigma: f64,
        std_floor: f64,
        blacklist_ttl_s: f64,
    ) -> Self {
        let history_counts = history_neighbor_counts(&history, eps);
        SsdXapp {
            profile,
            history,
            history_counts,
            eps,
            min_pts,
            k_sigma,
            std_floor,
            blacklist_ttl_s,
            active_bins: BTreeMap::new(),
            windows: Vec::new(),
        }
    }

    /// Process one connection-statistics window; returns a blacklist policy
    /// when a storm with attributable TA bins is detected.
    pub fn on_window(
        &mut self,
        cell_id: &str,
        w: &WindowStats,
    ) -> Result<Option<TaBlacklistBody>, DomainError> {
        let point = anomaly_point(w, &self.profile, self.std_floor)?;
        let storm = detect(
            point,
            &self.history,
            &self.history_counts,
            self.eps,
            self.min_pts,
        );
        self.windows.push(SsdWindowRecord {
            start_s: w.start_s,
            end_s: w.end_s,
            request_count: w.request_count,
            z_count: point.z_count,
            z_ta_peak: point.z_ta_peak,
            storm,
        });
        if !storm {
            return Ok(None);
        }
        let fresh = blacklist_from_ta(
            w,
            &self.profile,
            cell_id,
            self.k_sigma,
            self.std_floor,
            self.blacklist_ttl_s,
        );
        self.active_bins.retain(|_, expiry| *expiry > w.end_s);
        if let Some(body) = &fresh {
            for bin in &body.ta_indices {
                self.active_bins.insert(*bin, w.end_s + self.blacklist_ttl_s);
            }
        }
        if self.active_bins.is_empty() {
            return Ok(None);
        }
        Ok(Some(TaBlacklistBody {
            cell_id: cell_id.to_string(),
            ta_indices: self.active_bins.keys().copied().collect(),
            ttl_s: self.blacklist_ttl_s,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn window(start: f64, count: u32, hist: &[(u32, u32)]) -> WindowStats {
        WindowStats {
            start_s: start,
            end_s: start + 300.0,
            request_count: count,
            ta_histogram: hist.iter().copied().collect(),
        }
    }

    #[test]
    fn profile_constant_counts() {
        let windows: Vec<_> = (0..10).map(|i| window(i as f64 * 300.0, 3, &[])).collect();
        let p = build_profile(&windows, 3600.0, 5).unwrap();
        let s = p.buckets[&0];
        assert_relative_eq!(s.mean, 3.0);
        assert_relative_eq!(s.std, 0.0);
        assert!(p.ta_bins.is_empty());
    }

    #[test]
    fn profile_sample_std() {
        let windows = vec![window(0.0, 2, &[]), window(300.0, 4, &[])];
        let p = build_profile(&windows, 3600.0, 2).unwrap();
        let s = p.buckets[&0];
        assert_relative_eq!(s.mean, 3.0);
        assert_relative_eq!(s.std, 2f64.sqrt());
    }

    #[test]
    fn profile_starving_bucket_named() {
        let windows = vec![window(0.0, 1, &[]), window(3600.0, 1, &[])];
        let err = build_profile(&windows, 3600.0, 2).unwrap_err();
        assert!(err.to_string().contains("bucket 0") || err.to_string().contains("bucket 1"));
    }

    #[test]
    fn anomaly_point_examples() {
        let windows = vec![window(0.0, 2, &[]), window(300.0, 4, &[])];
        let p = build_profile(&windows, 3600.0, 2).unwrap();
        let z = anomaly_point(&window(600.0, 3, &[]), &p, 0.5).unwrap();
        assert_relative_eq!(z.z_count, 0.0);
        let z = anomaly_point(&window(600.0, 10, &[]), &p, 0.5).unwrap();
        assert_relative_eq!(z.z_count, 7.0 / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn anomaly_point_std_floor() {
        let windows: Vec<_> = (0..5).map(|i| window(i as f64 * 300.0, 3, &[])).collect();
        let p = build_profile(&windows, 3600.0, 5).unwrap();
        let z = anomaly_point(&window(1500.0, 4, &[]), &p, 0.5).unwrap();
        assert_relative_eq!(z.z_count, 2.0);
    }

    #[test]
    fn dbscan_empty_and_coincident() {
        assert!(dbscan(&[], 1.0, 3).is_empty());
        let pts = vec![AnomalyPoint { z_count: 1.0, z_ta_peak: 1.0 }; 5];
        let labels = dbscan(&pts, 0.1, 3);
        assert!(labels.iter().all(|l| *l == Label::Cluster(0)));
    }

    #[test]
    fn dbscan_line_plus_outlier() {
        let pts = vec![
            AnomalyPoint { z_count: 0.0, z_ta_peak: 0.0 },
            AnomalyPoint { z_count: 0.1, z_ta_peak: 0.0 },
            AnomalyPoint { z_count: 0.2, z_ta_peak: 0.0 },
            AnomalyPoint { z_count: 10.0, z_ta_peak: 10.0 },
        ];
        let labels = dbscan(&pts, 0.3, 3);
        assert_eq!(labels[0], Label::Cluster(0));
        assert_eq!(labels[1], Label::Cluster(0));
        assert_eq!(labels[2], Label::Cluster(0));
        assert_eq!(labels[3], Label::Noise);
    }

    #[test]
    fn detect_boundary_point_inclusive() {
        // 4 coincident core points; candidate exactly eps away is a border
        // point, not noise.
        let history = vec![AnomalyPoint { z_count: 0.0, z_ta_peak: 0.0 }; 4];
        let counts = history_neighbor_counts(&history, 1.0);
        let candidate = AnomalyPoint { z_count: 1.0, z_ta_peak: 0.0 };
        assert!(!detect(candidate, &history, &counts, 1.0, 4));
        let far = AnomalyPoint { z_count: 2.5, z_ta_peak: 0.0 };
        assert!(detect(far, &history, &counts, 1.0, 4));
    }

    #[test]
    fn detect_matches_full_dbscan() {
        // incremental detection must agree with clustering candidate+history
        let mut rng_state = 12345u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 33) as f64 / (1u64 << 31) as f64) * 6.0 - 3.0
        };
        for _ in 0..50 {
            let history: Vec<AnomalyPoint> = (0..30)
                .map(|_| AnomalyPoint { z_count: next(), z_ta_peak: next() })
                .collect();
            let candidate = AnomalyPoint { z_count: next() * 2.0, z_ta_peak: next() * 2.0 };
            let counts = history_neighbor_counts(&history, 1.0);
            let incremental = detect(candidate, &history, &counts, 1.0, 4);
            let mut all = history.clone();
            all.push(candidate);
            let full = dbscan(&all, 1.0, 4);
            assert_eq!(incremental, full[all.len() - 1] == Label::Noise);
        }
    }

    #[test]
    fn blacklist_single_and_multiple_bins() {
        let windows: Vec<_> = (0..5)
            .map(|i| window(i as f64 * 300.0, 3, &[(4, 1), (5, 2)]))
            .collect();
        let p = build_profile(&windows, 3600.0, 5).unwrap();

        let storm = window(1500.0, 103, &[(4, 100), (5, 2)]);
        let b = blacklist_from_ta(&storm, &p, "c1", 3.0, 0.5, 300.0).unwrap();
        assert_eq!(b.ta_indices, vec![4]);

        let storm2 = window(1800.0, 103, &[(4, 50), (5, 53)]);
        let b = blacklist_from_ta(&storm2, &p, "c1", 3.0, 0.5, 300.0).unwrap();
        assert_eq!(b.ta_indices, vec![4, 5]);

        let quiet = window(2100.0, 3, &[(4, 1), (5, 2)]);
        assert!(blacklist_from_ta(&quiet, &p, "c1", 3.0, 0.5, 300.0).is_none());
    }

    proptest! {
        // NOISE set is invariant under input permutation; clusters match up
        // to relabeling.
        #[test]
        fn dbscan_order_invariant(
            coords in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..40),
            seed in any::<u64>(),
        ) {
            let pts: Vec<AnomalyPoint> = coords
                .iter()
                .map(|(a, b)| AnomalyPoint { z_count: *a, z_ta_peak: *b })
                .collect();
            let n = pts.len();
            // deterministic shuffle from the seed
            let mut perm: Vec<usize> = (0..n).collect();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }
            let shuffled: Vec<AnomalyPoint> = perm.iter().map(|&i| pts[i]).collect();

            let base = dbscan(&pts, 1.0, 3);
            let other = dbscan(&shuffled, 1.0, 3);

            // noise set identical
            for (k, &orig_ix) in perm.iter().enumerate() {
                prop_assert_eq!(
                    matches!(base[orig_ix], Label::Noise),
                    matches!(other[k], Label::Noise)
                );
            }
            // same-cluster relation preserved
            for a in 0..n {
                for b in (a + 1)..n {
                    let same_base = base[perm[a]] == base[perm[b]]
                        && base[perm[a]] != Label::Noise;
                    let same_other = other[a] == other[b] && other[a] != Label::Noise;
                    prop_assert_eq!(same_base, same_other);
                }
            }
        }
    }
}
