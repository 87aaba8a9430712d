use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use super::run::{execute, metrics_rows, persist};
use super::{ExperimentConfig, HarnessError, RunRecord, METRICS_HEADER};
use crate::traffic::MergeTreeSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    WindowSize,
    Leaves,
    Capacity,
    PendingQueueDepth,
    SetsWays,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::WindowSize => "window_size",
            SweepParam::Leaves => "leaves",
            SweepParam::Capacity => "Q",
            SweepParam::PendingQueueDepth => "pending_queue_depth",
            SweepParam::SetsWays => "sets_ways",
        }
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        Ok(match s {
            "window_size" | "window" => SweepParam::WindowSize,
            "leaves" => SweepParam::Leaves,
            "Q" | "q" | "capacity" => SweepParam::Capacity,
            "pending_queue_depth" => SweepParam::PendingQueueDepth,
            "sets_ways" | "sets×ways" | "setsxways" | "sets-ways" => SweepParam::SetsWays,
            _ => return Err(HarnessError::UnknownParameter(s.to_string())),
        })
    }
}

fn apply(cfg: &mut ExperimentConfig, param: SweepParam, value: &str) -> Result<(), HarnessError> {
    let bad = || HarnessError::BadValue { param: param.as_str().to_string(), value: value.to_string() };
    let num = || value.trim().parse::<u64>().map_err(|_| bad());
    match param {
        SweepParam::WindowSize => cfg.windows = vec![num()? as usize],
        SweepParam::Leaves => {
            let arbitration = cfg.workload()?.tree.arbitration;
            let leaves = u32::try_from(num()?).map_err(|_| bad())?;
            cfg.merge_tree = Some(MergeTreeSpec { arbitration, ..MergeTreeSpec::with_leaves(leaves) });
        }
        SweepParam::Capacity => cfg.mars.capacity = num()? as usize,
        SweepParam::PendingQueueDepth => cfg.dram.pending_queue_depth = num()? as usize,
        SweepParam::SetsWays => {
            let (s, w) = value.split_once(['x', '×', '*']).ok_or_else(bad)?;
            cfg.mars.sets = s.trim().parse().map_err(|_| bad())?;
            cfg.mars.ways = w.trim().parse().map_err(|_| bad())?;
        }
    }
    Ok(())
}

/// One config per sweep value, validated. Values for `sets_ways` are
/// written `SETSxWAYS`.
pub fn sweep_configs(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[String],
) -> Result<Vec<(String, ExperimentConfig)>, HarnessError> {
    let param: SweepParam = param.parse()?;
    values
        .iter()
        .map(|v| {
            let mut point = cfg.clone();
            apply(&mut point, param, v)?;
            point.validate()?;
            Ok((v.trim().to_string(), point))
        })
        .collect()
}

pub const SWEEP_HEADER_PREFIX: &str = "param,value,";

/// Run every sweep point and persist it under
/// `<output_dir>/<name>/<param>-<value>`, plus a combined `sweep.csv`.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[String],
) -> Result<(Vec<RunRecord>, PathBuf), HarnessError> {
    let points = sweep_configs(cfg, param, values)?;
    let name: SweepParam = param.parse()?;
    let root = cfg.resolved_output_dir().join(&cfg.name);
    fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
    let mut csv = format!("{SWEEP_HEADER_PREFIX}{METRICS_HEADER}\n");
    let mut records = Vec::with_capacity(points.len());
    for (value, point) in points {
        let exp = execute(&point)?;
        let safe = value.replace(['×', '*'], "x");
        persist(&exp, &root.join(format!("{}-{safe}", name.as_str())))?;
        let mut rows = String::new();
        metrics_rows(&exp.record, &mut rows);
        for line in rows.lines() {
            csv.push_str(&format!("{},{value},{line}\n", name.as_str()));
        }
        records.push(exp.record);
    }
    let path = root.join("sweep.csv");
    fs::write(&path, csv).map_err(|e| HarnessError::io(&path, e))?;
    Ok((records, path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn points_apply_the_parameter() {
        let base = ExperimentConfig::preset("WL1");
        let p = sweep_configs(&base, "Q", &values(&["1", "512"])).unwrap();
        assert_eq!(p.iter().map(|(_, c)| c.mars.capacity).collect::<Vec<_>>(), vec![1, 512]);
        let p = sweep_configs(&base, "sets×ways", &values(&["32x4"])).unwrap();
        assert_eq!((p[0].1.mars.sets, p[0].1.mars.ways), (32, 4));
        let p = sweep_configs(&base, "leaves", &values(&["24", "40"])).unwrap();
        assert_eq!(p[0].1.merge_tree.as_ref().unwrap().fanouts, vec![3, 8]);
        assert_eq!(p[1].1.merge_tree.as_ref().unwrap().leaves, 40);
        let p = sweep_configs(&base, "pending_queue_depth", &values(&["4"])).unwrap();
        assert_eq!(p[0].1.dram.pending_queue_depth, 4);
        let p = sweep_configs(&base, "window_size", &values(&["2048"])).unwrap();
        assert_eq!(p[0].1.windows, vec![2048]);
    }

    #[test]
    fn errors() {
        let base = ExperimentConfig::preset("WL1");
        assert!(matches!(sweep_configs(&base, "depth", &values(&["1"])), Err(HarnessError::UnknownParameter(_))));
        assert!(matches!(sweep_configs(&base, "Q", &values(&["many"])), Err(HarnessError::BadValue { .. })));
        assert!(matches!(sweep_configs(&base, "Q", &values(&["0"])), Err(HarnessError::Invalid { .. })));
        assert!(matches!(sweep_configs(&base, "sets_ways", &values(&["64"])), Err(HarnessError::BadValue { .. })));
    }

    #[test]
    fn q_sweep_writes_combined_csv() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::preset("WL5");
        cfg.workload.scale = 2;
        cfg.seeds = vec![1];
        cfg.output_dir = tmp.path().to_path_buf();
        let (records, csv) = run_sweep(&cfg, "Q", &values(&["1", "512"])).unwrap();
        let cpa = |r: &RunRecord| r.seeds[0].mars.as_ref().unwrap().cas_per_act.unwrap();
        assert!(cpa(&records[1]) >= cpa(&records[0]));
        let text = fs::read_to_string(csv).unwrap();
        assert!(text.starts_with("param,value,workload,pipeline"));
        assert!(text.contains("\nQ,512,wl5,mars,1,cas_per_act,,"));
        assert!(tmp.path().join("wl5/Q-1/record.json").is_file());
    }
}
