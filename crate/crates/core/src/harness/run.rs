use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, HarnessError, Tap};
use crate::dram::{self, DramCommand};
use crate::mars::{run_reorder, MarsState, MarsStats, Passthrough, Unlimited};
use crate::metrics::{compare, locality, ImprovementReport, LocalitySeries, RunMetrics};
use crate::traffic::{self, generate_workload, merge, MemoryRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapLocality {
    pub tap: Tap,
    pub window_size: usize,
    pub mean: Option<f64>,
    /// Source tap only: the lowest per-source mean.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_source: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub requests: u64,
    /// SHA-256 of the merged stream each pipeline consumed.
    pub baseline_stream_digest: String,
    pub mars_stream_digest: String,
    pub baseline: Option<RunMetrics>,
    pub mars: Option<RunMetrics>,
    pub improvement: Option<ImprovementReport>,
    pub mars_stats: MarsStats,
    pub locality: Vec<TapLocality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedRecord>,
    /// Kept out of record.json so that file stays reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn simulations(&self) -> usize {
        self.seeds.iter().map(|s| s.baseline.is_some() as usize + s.mars.is_some() as usize).sum()
    }
}

/// Everything one seed produced, including traces not kept in the record.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub sources: Vec<Vec<MemoryRequest>>,
    pub merged: Vec<MemoryRequest>,
    pub mars_output: Vec<MemoryRequest>,
    pub baseline_trace: Vec<DramCommand>,
    pub mars_trace: Vec<DramCommand>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub record: RunRecord,
    pub artifacts: Vec<SeedArtifacts>,
}

pub fn stream_digest(stream: &[MemoryRequest]) -> String {
    let mut h = Sha256::new();
    for r in stream {
        h.update(r.seq.to_le_bytes());
        h.update(r.addr.0.to_le_bytes());
        h.update([r.is_write as u8, r.stream_kind as u8]);
        h.update(r.source_id.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn comparison_key(cfg: &ExperimentConfig, stream: &str) -> String {
    let memory = serde_json::to_vec(&(&cfg.dram, &cfg.memory_map)).expect("config serializes");
    format!("{stream}/{}", hex::encode(Sha256::digest(memory)))
}

fn tap_series(cfg: &ExperimentConfig, tap: Tap, window: usize, a: &SeedArtifacts) -> TapLocality {
    let bits = cfg.mars.page_offset_bits;
    match tap {
        Tap::Source => {
            let per: Vec<LocalitySeries> = a.sources.iter().map(|s| locality(s, window, bits)).collect();
            TapLocality {
                tap,
                window_size: window,
                mean: LocalitySeries::pooled_mean(&per),
                min_source: per.iter().filter_map(|s| s.mean).reduce(f64::min),
            }
        }
        Tap::Merge | Tap::Mars => {
            let stream = if tap == Tap::Merge { &a.merged } else { &a.mars_output };
            TapLocality { tap, window_size: window, mean: locality(stream, window, bits).mean, min_source: None }
        }
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(SeedRecord, SeedArtifacts), HarnessError> {
    let workload = cfg.workload()?;
    let map = cfg.memory_map.resolve()?;
    let sim_err = |e: dram::DramError| HarnessError::Simulation(format!("seed {seed}: {e}"));
    let sources = generate_workload(&workload.streams, &workload.tree, seed)
        .map_err(|e: traffic::TrafficError| HarnessError::invalid("workload", e))?;
    let merged = merge(&workload.tree, &sources).map_err(|e| HarnessError::invalid("merge_tree", e))?;
    let digest = stream_digest(&merged);
    let rates = cfg.mars.rates();
    let mut mars = MarsState::new(cfg.mars.clone()).map_err(|e| HarnessError::invalid("mars", e))?;

    let (mut baseline, mut mars_metrics) = (None, None);
    let (mut baseline_trace, mut mars_trace) = (Vec::new(), Vec::new());
    let mut mars_output = Vec::new();
    if cfg.simulate_dram {
        let (b, m) = rayon::join(
            || dram::simulate(&cfg.dram, &map, &mut Passthrough::default(), rates, &merged, true),
            || {
                let mut out = Vec::with_capacity(merged.len());
                let sim = dram::simulate_observed(&cfg.dram, &map, &mut mars, rates, &merged, true, |r| out.push(*r));
                sim.map(|s| (s, out))
            },
        );
        let b = b.map_err(sim_err)?;
        let (m, out) = m.map_err(sim_err)?;
        let key = comparison_key(cfg, &digest);
        baseline = Some(RunMetrics { comparison_key: key.clone(), ..b.metrics });
        mars_metrics = Some(RunMetrics { comparison_key: key, ..m.metrics });
        baseline_trace = b.trace;
        mars_trace = m.trace;
        mars_output = out;
    } else if cfg.taps.contains(&Tap::Mars) {
        mars_output = run_reorder(&mut mars, &merged, &mut Unlimited, rates, u64::MAX).output;
    }

    let improvement = match (&baseline, &mars_metrics) {
        (Some(b), Some(m)) => Some(compare(b, m).map_err(|e| HarnessError::Simulation(e.to_string()))?),
        _ => None,
    };
    let artifacts = SeedArtifacts { seed, sources, merged, mars_output, baseline_trace, mars_trace };
    let mut taps = cfg.taps.clone();
    taps.sort();
    taps.dedup();
    let locality = taps
        .iter()
        .flat_map(|&tap| cfg.windows.iter().map(move |&w| (tap, w)))
        .map(|(tap, w)| tap_series(cfg, tap, w, &artifacts))
        .collect();
    let record = SeedRecord {
        seed,
        requests: artifacts.merged.len() as u64,
        baseline_stream_digest: digest.clone(),
        mars_stream_digest: digest,
        baseline,
        mars: mars_metrics,
        improvement,
        mars_stats: mars.stats().clone(),
        locality,
    };
    Ok((record, artifacts))
}

/// Run every seed of `cfg` in memory (seeds in parallel). Nothing is
/// written to disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    cfg.validate()?;
    let start = Instant::now();
    let results: Vec<(SeedRecord, SeedArtifacts)> =
        cfg.seeds.par_iter().map(|&seed| run_seed(cfg, seed)).collect::<Result<_, _>>()?;
    let (seeds, artifacts) = results.into_iter().unzip();
    let record = RunRecord {
        name: cfg.name.clone(),
        config_digest: cfg.digest(),
        config: cfg.clone(),
        seeds,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    Ok(Experiment { record, artifacts })
}

pub const METRICS_HEADER: &str = "workload,pipeline,seed,metric,window_size,value";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub(crate) fn metrics_rows(record: &RunRecord, out: &mut String) {
    let name = &record.name;
    for s in &record.seeds {
        for l in &s.locality {
            let _ = writeln!(out, "{name},{},{},locality,{},{}", l.tap.as_str(), s.seed, l.window_size, opt(l.mean));
            if l.tap == Tap::Source {
                let _ = writeln!(out, "{name},source,{},locality_min,{},{}", s.seed, l.window_size, opt(l.min_source));
            }
        }
        for (pipeline, m) in [("baseline", &s.baseline), ("mars", &s.mars)] {
            let Some(m) = m else { continue };
            let rows: [(&str, String); 8] = [
                ("act_count", m.act_count.to_string()),
                ("cas_count", m.cas_count.to_string()),
                ("pre_count", m.pre_count.to_string()),
                ("total_cycles", m.total_cycles.to_string()),
                ("achieved_bytes", m.achieved_bytes.to_string()),
                ("cas_per_act", opt(m.cas_per_act)),
                ("bandwidth_bytes_per_cycle", m.bandwidth_bytes_per_cycle().to_string()),
                ("bandwidth_efficiency", m.bandwidth_efficiency.to_string()),
            ];
            for (metric, v) in rows {
                let _ = writeln!(out, "{name},{pipeline},{},{metric},,{v}", s.seed);
            }
        }
        if let Some(i) = &s.improvement {
            for (metric, v) in [
                ("bandwidth_delta_pct", Some(i.bandwidth_delta_pct)),
                ("cas_per_act_delta_pct", i.cas_per_act_delta_pct),
                ("cas_per_act_ratio", i.cas_per_act_ratio),
                ("efficiency_delta_pct", Some(i.efficiency_delta_pct)),
            ] {
                let _ = writeln!(out, "{name},mars_vs_baseline,{},{metric},,{}", s.seed, opt(v));
            }
        }
    }
}

pub fn metrics_csv(record: &RunRecord) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    metrics_rows(record, &mut out);
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn partial_path(dir: &Path) -> PathBuf {
    let mut name = dir.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    dir.with_file_name(name)
}

fn write_all(exp: &Experiment, dir: &Path) -> Result<(), HarnessError> {
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| HarnessError::io(p, e));
    mkdir(dir)?;
    let record = &exp.record;
    write_file(&dir.join("config.toml"), record.config.to_toml().as_bytes())?;
    let json = serde_json::to_string_pretty(record).expect("record serializes");
    write_file(&dir.join("record.json"), json.as_bytes())?;
    write_file(&dir.join("metrics.csv"), metrics_csv(record).as_bytes())?;
    write_file(&dir.join("timing.txt"), format!("{:.3}\n", record.wall_clock_secs).as_bytes())?;
    if record.config.write_traces {
        for a in &exp.artifacts {
            let t = dir.join("traces").join(format!("seed{}", a.seed));
            mkdir(&t)?;
            let ioe = |p: PathBuf| move |e| HarnessError::io(&p, e);
            let p = t.join("merged_requests.csv");
            let mut buf = Vec::new();
            traffic::trace::write_requests(&mut buf, &a.merged).map_err(ioe(p.clone()))?;
            write_file(&p, &buf)?;
            for (file, trace) in [("baseline_commands.csv", &a.baseline_trace), ("mars_commands.csv", &a.mars_trace)] {
                let p = t.join(file);
                let mut f = io::BufWriter::new(fs::File::create(&p).map_err(ioe(p.clone()))?);
                dram::trace::write_commands(&mut f, trace).map_err(ioe(p.clone()))?;
                f.flush().map_err(ioe(p.clone()))?;
            }
        }
    }
    Ok(())
}

/// Write `exp` to `dir` atomically: everything goes to `<dir>.partial`,
/// which is renamed over `dir` on success and removed on failure. An
/// existing `dir` is replaced only if it holds a previous `record.json`.
pub fn persist(exp: &Experiment, dir: &Path) -> Result<(), HarnessError> {
    if dir.exists() && !dir.join("record.json").is_file() {
        return Err(HarnessError::OutputExists(dir.to_path_buf()));
    }
    let partial = partial_path(dir);
    if partial.exists() {
        fs::remove_dir_all(&partial).map_err(|e| HarnessError::io(&partial, e))?;
    }
    let result = write_all(exp, &partial).and_then(|()| {
        if dir.exists() {
            fs::remove_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        fs::rename(&partial, dir).map_err(|e| HarnessError::io(dir, e))
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&partial);
    }
    result
}

/// Execute `cfg` and persist it under `<output_dir>/<name>`. Returns the
/// record and the directory written.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(RunRecord, PathBuf), HarnessError> {
    let exp = execute(cfg)?;
    let dir = cfg.resolved_output_dir().join(&cfg.name);
    persist(&exp, &dir)?;
    Ok((exp.record, dir))
}
