//! Command implementations behind the `oransim` binary: scenario runs with
//! variant expansion, parameter sweeps, policy linting and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::Value;

use oransim_core::scenario::{ScenarioConfig, UeKind};
use oransim_core::sim;
use oransim_core::trace::SimulationTrace;

/// Failure modes mapped to process exit codes: config errors exit 2,
/// runtime errors exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

/// Set a dotted-path key (array indices allowed: `cells.0.scs_khz`) in a
/// JSON document. The raw value is parsed as JSON when possible, otherwise
/// taken as a string.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> Result<(), String> {
    let value: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        if let Ok(idx) = part.parse::<usize>() {
            let arr = cur
                .as_array_mut()
                .ok_or_else(|| format!("{key}: '{part}' indexes a non-array"))?;
            let slot = arr
                .get_mut(idx)
                .ok_or_else(|| format!("{key}: index {idx} out of bounds"))?;
            if last {
                *slot = value;
                return Ok(());
            }
            cur = slot;
        } else {
            let obj = cur
                .as_object_mut()
                .ok_or_else(|| format!("{key}: '{part}' addresses a non-object"))?;
            if last {
                obj.insert((*part).to_string(), value);
                return Ok(());
            }
            cur = obj
                .get_mut(*part)
                .ok_or_else(|| format!("{key}: unknown key '{part}'"))?;
        }
    }
    unreachable!("loop returns on the last component")
}

fn load_doc(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: invalid JSON: {e}", path.display())))
}

fn parse_config(doc: &Value) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = serde_json::from_value(doc.clone())
        .map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// Per-run headline metrics, derived from the trace.
pub fn run_metrics(cfg: &ScenarioConfig, trace: &SimulationTrace) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    m.insert("handover_count".to_string(), trace.handovers.len() as f64);
    m.insert("conflict_count".to_string(), trace.conflicts.len() as f64);
    if let Some(r) = trace.rejected_legit_ratio() {
        m.insert("rejected_legit_ratio".to_string(), r);
    }
    let n_mobile = count_mobile(cfg);
    if n_mobile > 0 && cfg.xapps.bmm.as_ref().is_some_and(|b| b.enabled) {
        m.insert(
            "beam_failures_per_ue_s".to_string(),
            trace.beam_failures_per_ue_s(n_mobile, cfg.duration_s),
        );
    }
    m
}

fn count_mobile(cfg: &ScenarioConfig) -> usize {
    cfg.ues.iter().filter(|u| u.kind == UeKind::Mobile).count()
        + cfg
            .ue_generators
            .iter()
            .filter(|g| g.kind == UeKind::Mobile)
            .map(|g| g.count as usize)
            .sum::<usize>()
}

/// Run a scenario (plus all its variants) and write CSVs and `report.md`
/// under `out`. Variant outputs land in `out/<variant_name>/`.
pub fn run_scenario(
    path: &Path,
    seed: Option<u64>,
    out: &Path,
    sets: &[(String, String)],
) -> Result<(), CliError> {
    let mut doc = load_doc(path)?;
    for (k, v) in sets {
        apply_override(&mut doc, k, v).map_err(CliError::Config)?;
    }
    if let Some(s) = seed {
        apply_override(&mut doc, "seed", &s.to_string()).map_err(CliError::Config)?;
    }
    let base_cfg = parse_config(&doc)?;

    let mut runs: Vec<(String, PathBuf, ScenarioConfig)> =
        vec![(base_cfg.name.clone(), out.to_path_buf(), base_cfg.clone())];
    for variant in &base_cfg.variants {
        let mut vdoc = doc.clone();
        for (k, v) in &variant.overrides {
            let raw = serde_json::to_string(v).expect("json value serializes");
            apply_override(&mut vdoc, k, &raw).map_err(CliError::Config)?;
        }
        // a variant is a complete scenario of its own; it never re-expands
        apply_override(&mut vdoc, "variants", "[]").map_err(CliError::Config)?;
        let vcfg = parse_config(&vdoc)
            .map_err(|e| CliError::Config(format!("variant {}: {}", variant.name, e.message())))?;
        runs.push((variant.name.clone(), out.join(&variant.name), vcfg));
    }

    let mut summaries = Vec::new();
    for (name, dir, cfg) in &runs {
        let trace = sim::run(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
        trace
            .write_csvs(dir)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        summaries.push((name.clone(), dir.clone(), cfg.clone()));
    }

    let report = build_report(&summaries)?;
    std::fs::write(out.join("report.md"), report)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(())
}

/// Compose `report.md` strictly from the CSVs written by the runs.
fn build_report(runs: &[(String, PathBuf, ScenarioConfig)]) -> Result<String, CliError> {
    let mut md = String::new();
    let title = &runs[0].2.name;
    writeln!(md, "# {title}\n").unwrap();

    // Serving-time association table (one row per run, one column per cell).
    let mut assoc: Vec<(String, BTreeMap<String, f64>)> = Vec::new();
    let mut cells = std::collections::BTreeSet::new();
    for (name, dir, _) in runs {
        let shares = serving_shares_from_csv(&dir.join("serving.csv"))?;
        if shares.is_empty() {
            continue;
        }
        for c in shares.keys() {
            cells.insert(c.clone());
        }
        assoc.push((name.clone(), shares));
    }
    if !assoc.is_empty() {
        writeln!(md, "## Serving-time association (% of attached time)\n").unwrap();
        write!(md, "| scenario |").unwrap();
        for c in &cells {
            write!(md, " {c} |").unwrap();
        }
        writeln!(md).unwrap();
        write!(md, "|---|").unwrap();
        for _ in &cells {
            write!(md, "---|").unwrap();
        }
        writeln!(md).unwrap();
        for (name, shares) in &assoc {
            write!(md, "| {name} |").unwrap();
            for c in &cells {
                let pct = shares.get(c).copied().unwrap_or(0.0) * 100.0;
                write!(md, " {pct:.1} |").unwrap();
            }
            writeln!(md).unwrap();
        }
        writeln!(md).unwrap();
    }

    // Final PRB allocation table per run.
    for (name, dir, _) in runs {
        let rows = read_csv(&dir.join("prb_alloc.csv"))?;
        if rows.is_empty() {
            continue;
        }
        let last_t = &rows.last().unwrap()["time_s"];
        writeln!(md, "## PRB allocation — {name}\n").unwrap();
        writeln!(md, "| 5QI | slice share % | PRBs | UEs | per-UE share % |").unwrap();
        writeln!(md, "|---|---|---|---|---|").unwrap();
        for r in rows.iter().filter(|r| &r["time_s"] == last_t) {
            writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                r["five_qi"], r["share_pct"], r["prbs"], r["ue_count"], r["per_ue_share_pct"]
            )
            .unwrap();
        }
        writeln!(md).unwrap();
    }

    // Connection-attempt summary per run.
    for (name, dir, _) in runs {
        let rows = read_csv(&dir.join("attempts.csv"))?;
        let legit: Vec<_> = rows.iter().filter(|r| r["ue_kind"] == "IOT_LEGIT").collect();
        if legit.is_empty() {
            continue;
        }
        let rejected = legit
            .iter()
            .filter(|r| r["outcome"] == "REJECTED_BLACKLIST")
            .count();
        writeln!(md, "## Connection attempts — {name}\n").unwrap();
        writeln!(
            md,
            "{} legitimate attempts, {} rejected by TA blacklist ({:.1}%)\n",
            legit.len(),
            rejected,
            100.0 * rejected as f64 / legit.len() as f64
        )
        .unwrap();
    }

    // Beam failure summary per run.
    for (name, dir, cfg) in runs {
        let rows = read_csv(&dir.join("beam_failures.csv"))?;
        let n_mobile = count_mobile(cfg);
        if rows.is_empty() && !cfg.xapps.bmm.as_ref().is_some_and(|b| b.enabled) {
            continue;
        }
        if n_mobile == 0 || cfg.duration_s <= 0.0 {
            continue;
        }
        writeln!(md, "## Beam failures — {name}\n").unwrap();
        writeln!(
            md,
            "{} failures over {} UEs and {} s: {:.6} per UE per second\n",
            rows.len(),
            n_mobile,
            cfg.duration_s,
            rows.len() as f64 / (n_mobile as f64 * cfg.duration_s)
        )
        .unwrap();
    }

    Ok(md)
}

fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Runtime(e.to_string()))?
        .clone();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Runtime(e.to_string()))?;
        rows.push(
            headers
                .iter()
                .zip(rec.iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect(),
        );
    }
    Ok(rows)
}

fn serving_shares_from_csv(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let rows = read_csv(path)?;
    let mut per_cell: BTreeMap<String, f64> = BTreeMap::new();
    let mut total = 0.0;
    for r in rows {
        let dur: f64 = r["end_s"].parse::<f64>().unwrap_or(0.0)
            - r["start_s"].parse::<f64>().unwrap_or(0.0);
        *per_cell.entry(r["cell_id"].clone()).or_default() += dur;
        total += dur;
    }
    if total > 0.0 {
        for v in per_cell.values_mut() {
            *v /= total;
        }
    }
    Ok(per_cell)
}

/// One sweep cell: all seeds of one parameter value, aggregated.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

/// Run `seeds` runs per value of the swept parameter and aggregate every
/// headline metric. Individual runs execute in parallel; each is
/// single-threaded and independent.
pub fn sweep(
    path: &Path,
    param: &str,
    values: &[String],
    seeds: u64,
    out: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    if values.is_empty() {
        return Err(CliError::Config("at least one sweep value required".into()));
    }
    if seeds == 0 {
        return Err(CliError::Config("--seeds must be >= 1".into()));
    }
    let doc = load_doc(path)?;

    // validate the key and every value up front so errors exit 2
    let mut configs: Vec<(String, u64, ScenarioConfig)> = Vec::new();
    for v in values {
        for s in 0..seeds {
            let mut d = doc.clone();
            apply_override(&mut d, param, v).map_err(CliError::Config)?;
            apply_override(&mut d, "seed", &s.to_string()).map_err(CliError::Config)?;
            configs.push((v.clone(), s, parse_config(&d)?));
        }
    }

    let results: Result<Vec<(String, BTreeMap<String, f64>)>, CliError> = configs
        .par_iter()
        .map(|(v, _, cfg)| {
            let trace = sim::run(cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok((v.clone(), run_metrics(cfg, &trace)))
        })
        .collect();
    let results = results?;

    // aggregate preserving the given value order
    let mut rows = Vec::new();
    for v in values {
        let runs: Vec<&BTreeMap<String, f64>> = results
            .iter()
            .filter(|(rv, _)| rv == v)
            .map(|(_, m)| m)
            .collect();
        let mut metrics = std::collections::BTreeSet::new();
        for m in &runs {
            metrics.extend(m.keys().cloned());
        }
        for metric in metrics {
            let xs: Vec<f64> = runs.iter().filter_map(|m| m.get(&metric)).copied().collect();
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            rows.push(SweepRow {
                value: v.clone(),
                metric,
                mean,
                std,
                n_seeds: n,
            });
        }
    }

    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    w.write_record(["param", "value", "metric", "mean", "std", "n_seeds"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for r in &rows {
        w.write_record([
            param,
            &r.value,
            &r.metric,
            &r.mean.to_string(),
            &r.std.to_string(),
            &r.n_seeds.to_string(),
        ])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;

    // regenerate the sweep report from the CSV just written
    let csv_rows = read_csv(&out.join("sweep.csv"))?;
    let mut md = String::new();
    writeln!(md, "# Sweep over `{param}`\n").unwrap();
    writeln!(md, "| {param} | metric | mean | std | seeds |").unwrap();
    writeln!(md, "|---|---|---|---|---|").unwrap();
    for r in &csv_rows {
        writeln!(
            md,
            "| {} | {} | {} | {} | {} |",
            r["value"], r["metric"], r["mean"], r["std"], r["n_seeds"]
        )
        .unwrap();
    }
    std::fs::write(out.join("report.md"), md).map_err(|e| CliError::Runtime(e.to_string()))?;

    Ok(rows)
}

/// Lint one A1 policy document. Returns diagnostics for standard error on
/// failure.
pub fn policy_lint(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    oransim_core::policy::parse(&text)
        .map(|_| ())
        .map_err(|e| CliError::Config(e.to_string()))
}
