use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::svg::bar_chart;
use super::{HarnessError, RunRecord};
use crate::metrics::REFERENCE;

/// Mean, min and max over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Option<Spread> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Spread { mean, min, max })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    /// Run directory relative to the report root.
    pub label: String,
    pub workload: String,
    pub seeds: usize,
    pub requests: u64,
    pub baseline_cas_per_act: Option<f64>,
    pub mars_cas_per_act: Option<f64>,
    pub cas_per_act_ratio: Option<Spread>,
    pub cas_per_act_delta_pct: Option<Spread>,
    pub bandwidth_delta_pct: Option<Spread>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub rows: Vec<ReportRow>,
    /// Arithmetic mean over rows of each row's seed-mean improvement.
    pub aggregate_cas_per_act_delta_pct: Option<f64>,
    pub aggregate_bandwidth_delta_pct: Option<f64>,
    pub out_dir: PathBuf,
}

fn find_records(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    let rd = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut entries: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if p.is_dir() && name != "report" && name != "traces" && !name.ends_with(".partial") {
            find_records(&p, found)?;
        } else if name == "record.json" {
            found.push(p);
        }
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn row(label: String, r: &RunRecord) -> ReportRow {
    let improvements: Vec<_> = r.seeds.iter().filter_map(|s| s.improvement.as_ref()).collect();
    let collect = |f: &dyn Fn(&crate::metrics::ImprovementReport) -> Option<f64>| {
        Spread::of(&improvements.iter().filter_map(|i| f(i)).collect::<Vec<_>>())
    };
    ReportRow {
        label,
        workload: r.name.clone(),
        seeds: r.seeds.len(),
        requests: r.seeds.iter().map(|s| s.requests).sum::<u64>() / r.seeds.len().max(1) as u64,
        baseline_cas_per_act: mean(r.seeds.iter().filter_map(|s| s.baseline.as_ref()?.cas_per_act)),
        mars_cas_per_act: mean(r.seeds.iter().filter_map(|s| s.mars.as_ref()?.cas_per_act)),
        cas_per_act_ratio: collect(&|i| i.cas_per_act_ratio),
        cas_per_act_delta_pct: collect(&|i| i.cas_per_act_delta_pct),
        bandwidth_delta_pct: collect(&|i| Some(i.bandwidth_delta_pct)),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

fn spread_cells(s: Option<Spread>) -> String {
    match s {
        Some(s) => format!("{:.4},{:.4},{:.4}", s.mean, s.min, s.max),
        None => ",,".into(),
    }
}

fn write(dir: &Path, file: &str, text: &str) -> Result<(), HarnessError> {
    let p = dir.join(file);
    fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))
}

/// Summarise every `record.json` under `dir` into `dir/report/`.
pub fn report(dir: &Path) -> Result<ReportSummary, HarnessError> {
    let mut paths = Vec::new();
    find_records(dir, &mut paths)?;
    if paths.is_empty() {
        return Err(HarnessError::NoRecords(dir.to_path_buf()));
    }
    let mut rows = Vec::new();
    let mut locality: BTreeMap<(String, &'static str, usize), Vec<f64>> = BTreeMap::new();
    let mut records = Vec::new();
    for p in &paths {
        let text = fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
        let rec: RunRecord =
            serde_json::from_str(&text).map_err(|e| HarnessError::Parse(format!("{}: {e}", p.display())))?;
        let run_dir = p.parent().unwrap_or(dir);
        let label = match run_dir.strip_prefix(dir) {
            Ok(rel) if !rel.as_os_str().is_empty() => rel.to_string_lossy().replace('\\', "/"),
            _ => rec.name.clone(),
        };
        records.push((label, rec));
    }
    for (label, rec) in &records {
        for s in &rec.seeds {
            for l in &s.locality {
                if let Some(m) = l.mean {
                    locality.entry((label.clone(), l.tap.as_str(), l.window_size)).or_default().push(m);
                }
            }
        }
        rows.push(row(label.clone(), rec));
    }

    let out = dir.join("report");
    fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;

    let mut summary = String::from(
        "label,workload,seeds,requests,baseline_cas_per_act,mars_cas_per_act,\
         cas_per_act_ratio_mean,cas_per_act_ratio_min,cas_per_act_ratio_max,\
         cas_per_act_delta_pct_mean,cas_per_act_delta_pct_min,cas_per_act_delta_pct_max,\
         bandwidth_delta_pct_mean,bandwidth_delta_pct_min,bandwidth_delta_pct_max\n",
    );
    let mut fig_bw = String::from("workload,mean,min,max\n");
    let mut fig_cpa = String::from("workload,mean,min,max\n");
    for r in &rows {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{}",
            r.label,
            r.workload,
            r.seeds,
            r.requests,
            cell(r.baseline_cas_per_act),
            cell(r.mars_cas_per_act),
            spread_cells(r.cas_per_act_ratio),
            spread_cells(r.cas_per_act_delta_pct),
            spread_cells(r.bandwidth_delta_pct)
        );
        let _ = writeln!(fig_bw, "{},{}", r.label, spread_cells(r.bandwidth_delta_pct));
        let _ = writeln!(fig_cpa, "{},{}", r.label, spread_cells(r.cas_per_act_delta_pct));
    }
    let mut fig_loc = String::from("workload,tap,window_size,mean\n");
    for ((label, tap, w), v) in &locality {
        let _ = writeln!(fig_loc, "{label},{tap},{w},{:.4}", v.iter().sum::<f64>() / v.len() as f64);
    }

    let agg_cpa = mean(rows.iter().filter_map(|r| r.cas_per_act_delta_pct.map(|s| s.mean)));
    let agg_bw = mean(rows.iter().filter_map(|r| r.bandwidth_delta_pct.map(|s| s.mean)));

    let mut text = format!(
        "{:<24} {:>6} {:>9} {:>10} {:>10} {:>8} {:>11} {:>11}\n",
        "workload", "seeds", "requests", "base c/a", "mars c/a", "ratio", "c/a delta%", "bw delta%"
    );
    let f = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into());
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<24} {:>6} {:>9} {:>10} {:>10} {:>8} {:>11} {:>11}",
            r.label,
            r.seeds,
            r.requests,
            f(r.baseline_cas_per_act),
            f(r.mars_cas_per_act),
            f(r.cas_per_act_ratio.map(|s| s.mean)),
            f(r.cas_per_act_delta_pct.map(|s| s.mean)),
            f(r.bandwidth_delta_pct.map(|s| s.mean)),
        );
    }
    let _ = writeln!(text, "\naggregate CAS/ACT improvement: {}%", f(agg_cpa));
    let _ = writeln!(text, "aggregate bandwidth improvement: {}%", f(agg_bw));
    let _ = writeln!(
        text,
        "reference: bandwidth +{}%, CAS/ACT +{}%, WL1/WL5 CAS/ACT > {}x",
        REFERENCE.bandwidth_gain_pct, REFERENCE.cas_per_act_gain_pct, REFERENCE.wl1_wl5_cas_per_act_ratio
    );

    write(&out, "summary.csv", &summary)?;
    write(&out, "fig_bandwidth.csv", &fig_bw)?;
    write(&out, "fig_cas_per_act.csv", &fig_cpa)?;
    write(&out, "fig_locality.csv", &fig_loc)?;
    write(&out, "summary.txt", &text)?;
    let bars = |g: fn(&ReportRow) -> Option<Spread>| -> Vec<(String, f64)> {
        rows.iter().map(|r| (r.label.clone(), g(r).map_or(f64::NAN, |s| s.mean))).collect()
    };
    write(&out, "fig_bandwidth.svg", &bar_chart("Bandwidth improvement", "%", &bars(|r| r.bandwidth_delta_pct)))?;
    write(&out, "fig_cas_per_act.svg", &bar_chart("CAS/ACT improvement", "%", &bars(|r| r.cas_per_act_delta_pct)))?;

    Ok(ReportSummary {
        rows,
        aggregate_cas_per_act_delta_pct: agg_cpa,
        aggregate_bandwidth_delta_pct: agg_bw,
        out_dir: out,
    })
}
