//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! real stdout (not the captured test output) before asserting.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use marsim_core::addressing::{MemoryMap, PhysicalAddress};
use marsim_core::dram::protocol::check_trace;
use marsim_core::dram::trace::write_commands;
use marsim_core::dram::{self, DramConfig};
use marsim_core::harness::{execute, persist, Experiment, ExperimentConfig, Tap};
use marsim_core::mars::{run_reorder, MarsConfig, MarsState, Passthrough, RandomCredits, Rates};
use marsim_core::metrics::locality;
use marsim_core::traffic::{MemoryRequest, MergeTreeSpec, StreamKind, PRESET_NAMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(criterion: u32, title: &str, ok: bool, detail: String) {
    let line = format!("acceptance {criterion} [{}] {title}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "{}", line.trim_end());
}

fn preset(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(
        &Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{}.toml", name.to_lowercase())),
    )
    .unwrap()
}

struct Suite {
    runs: Vec<(String, Experiment)>,
    secs: f64,
}

/// The full WL1-WL5 A/B suite at default sizes, run once and shared.
fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let t = Instant::now();
        let runs = PRESET_NAMES.iter().map(|n| (n.to_string(), execute(&preset(n)).unwrap())).collect();
        Suite { runs, secs: t.elapsed().as_secs_f64() }
    })
}

#[test]
fn c1_locality_trend() {
    let mut cfg = preset("locality");
    assert_eq!(cfg.windows, vec![128, 512, 2048, 8192, 16384]);
    let t = Instant::now();
    let at = |leaves: u32, cfg: &mut ExperimentConfig| {
        cfg.merge_tree = Some(MergeTreeSpec::with_leaves(leaves));
        execute(cfg).unwrap()
    };
    let e24 = at(24, &mut cfg);
    let e40 = at(40, &mut cfg);
    let secs = t.elapsed().as_secs_f64();

    let a24 = &e24.artifacts[0];
    let a40 = &e40.artifacts[0];
    assert_eq!(a24.sources.len(), 24);
    let windows = cfg.windows.clone();
    let mean = |s: &[MemoryRequest], w| locality(s, w, 12).mean.unwrap();

    let mut problems = Vec::new();
    for (i, src) in a24.sources.iter().enumerate() {
        let curve: Vec<f64> = windows.iter().map(|&w| mean(src, w)).collect();
        if !curve.windows(2).all(|p| p[0] < p[1]) {
            problems.push(format!("source {i} not increasing: {curve:?}"));
        }
    }
    let mut detail = String::new();
    for &w in &windows {
        let min_src = a24.sources.iter().map(|s| mean(s, w)).fold(f64::INFINITY, f64::min);
        let m24 = mean(&a24.merged, w);
        let m40 = mean(&a40.merged, w);
        if m24 >= min_src {
            problems.push(format!("w={w}: merged {m24:.2} >= source min {min_src:.2}"));
        }
        if m40 >= m24 {
            problems.push(format!("w={w}: 40-source {m40:.2} >= 24-source {m24:.2}"));
        }
        let _ = write!(detail, "w{w} src>={min_src:.1} m24={m24:.1} m40={m40:.1}; ");
    }
    // The harness's own source tap agrees with the direct computation.
    let tap_min = e24.record.seeds[0].locality.iter().find(|l| l.tap == Tap::Source && l.window_size == 128).unwrap();
    let direct = a24.sources.iter().map(|s| mean(s, 128)).fold(f64::INFINITY, f64::min);
    if (tap_min.min_source.unwrap() - direct).abs() > 1e-9 {
        problems.push("source tap disagrees".into());
    }
    if secs >= 30.0 {
        problems.push(format!("took {secs:.1}s"));
    }
    let ok = problems.is_empty();
    let _ = write!(detail, "{secs:.2}s");
    verdict(1, "locality trend", ok, if ok { detail } else { problems[0].clone() });
}

#[test]
fn c2_mars_improvement() {
    let s = suite();
    let mut problems = Vec::new();
    let (mut cpa_pcts, mut bw_pcts) = (Vec::new(), Vec::new());
    let mut ratio = BTreeMap::new();
    let mut detail = String::new();
    for (name, exp) in &s.runs {
        assert_eq!(exp.record.seeds.len(), 3);
        let (mut c, mut b, mut r) = (0.0, 0.0, 0.0);
        for seed in &exp.record.seeds {
            let base = seed.baseline.as_ref().unwrap();
            let mars = seed.mars.as_ref().unwrap();
            let (bc, mc) = (base.cas_per_act.unwrap(), mars.cas_per_act.unwrap());
            if mc < bc {
                problems.push(format!("{name} seed {}: CAS/ACT {mc:.3} < {bc:.3}", seed.seed));
            }
            let imp = seed.improvement.as_ref().unwrap();
            c += imp.cas_per_act_delta_pct.unwrap();
            b += imp.bandwidth_delta_pct;
            r += imp.cas_per_act_ratio.unwrap();
        }
        let n = exp.record.seeds.len() as f64;
        cpa_pcts.push(c / n);
        bw_pcts.push(b / n);
        ratio.insert(name.clone(), r / n);
        let _ = write!(detail, "{name} cas/act {:+.0}% bw {:+.1}%; ", c / n, b / n);
    }
    let agg_cpa = cpa_pcts.iter().sum::<f64>() / cpa_pcts.len() as f64;
    let agg_bw = bw_pcts.iter().sum::<f64>() / bw_pcts.len() as f64;
    if agg_cpa < 50.0 {
        problems.push(format!("aggregate CAS/ACT {agg_cpa:+.1}% < 50%"));
    }
    if agg_bw < 5.0 {
        problems.push(format!("aggregate bandwidth {agg_bw:+.1}% < 5%"));
    }
    for wl in ["WL1", "WL5"] {
        if ratio[wl] < 1.5 {
            problems.push(format!("{wl} CAS/ACT ratio {:.2}x < 1.5x", ratio[wl]));
        }
    }
    let _ = write!(
        detail,
        "aggregate cas/act {agg_cpa:+.0}% bw {agg_bw:+.1}%, WL1 {:.2}x WL5 {:.2}x",
        ratio["WL1"], ratio["WL5"]
    );
    let ok = problems.is_empty();
    verdict(2, "MARS improvement", ok, if ok { detail } else { problems.join("; ") });
}

fn random_stream(rng: &mut ChaCha8Rng, n: usize, pages: u64) -> Vec<MemoryRequest> {
    // Page runs of random length make the stream bursty, like merged traffic.
    let mut out = Vec::with_capacity(n);
    let mut page = 0;
    while out.len() < n {
        if out.is_empty() || rng.gen_bool(0.3) {
            page = rng.gen_range(0..pages);
        }
        out.push(MemoryRequest {
            seq: out.len() as u64,
            addr: PhysicalAddress(page << 12 | rng.gen_range(0..64u64) << 6),
            is_write: rng.gen_bool(0.4),
            stream_kind: StreamKind::Texture,
            source_id: rng.gen_range(0..64),
        });
    }
    out
}

fn group_by_page(stream: &[MemoryRequest]) -> Vec<MemoryRequest> {
    let mut order = Vec::new();
    let mut groups: HashMap<u64, Vec<MemoryRequest>> = HashMap::new();
    for r in stream {
        let g = groups.entry(r.page(12).0).or_insert_with(|| {
            order.push(r.page(12).0);
            Vec::new()
        });
        g.push(*r);
    }
    order.into_iter().flat_map(|p| groups.remove(&p).unwrap()).collect()
}

#[test]
fn c3_ideal_grouping_oracle() {
    let dcfg = DramConfig::default();
    let map = MemoryMap::page_per_channel();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut problems = Vec::new();
    let cases = [(10_000, 1000), (10_000, 64), (5_000, 512), (2_000, 16), (1, 1)];
    let mut detail = String::new();
    for (i, &(n, pages)) in cases.iter().enumerate() {
        let stream = random_stream(&mut rng, n, pages);
        let cfg = MarsConfig { capacity: n, sets: 1024, ways: 4, insert_rate: n as u32, ..MarsConfig::default() };
        let rates = cfg.rates();
        let mut mars = MarsState::new(cfg).unwrap();
        let mut emitted = Vec::new();
        let m = dram::simulate_observed(&dcfg, &map, &mut mars, rates, &stream, false, |r| emitted.push(*r)).unwrap();
        let oracle = group_by_page(&stream);
        let o = dram::simulate(&dcfg, &map, &mut Passthrough::default(), rates, &oracle, false).unwrap();
        let (mc, oc) = (m.metrics.cas_per_act, o.metrics.cas_per_act);
        if emitted != oracle {
            problems.push(format!("case {i}: output order differs from the oracle"));
        }
        if mc != oc {
            problems.push(format!("case {i}: CAS/ACT {mc:?} != oracle {oc:?}"));
        }
        let _ = write!(detail, "n={n} pages<={pages} cas/act {:.3}; ", mc.unwrap_or(0.0));
    }
    let ok = problems.is_empty();
    verdict(
        3,
        "ideal-grouping oracle",
        ok,
        if ok { detail.trim_end_matches("; ").to_string() } else { problems.join("; ") },
    );
}

#[test]
fn c4_conservation_fuzz() {
    const N: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let stream = random_stream(&mut rng, N, 4096);
    let mut mars = MarsState::new(MarsConfig::default()).unwrap();
    let mut credits = RandomCredits::new(44, 0.6);
    let run = run_reorder(&mut mars, &stream, &mut credits, Rates { insert: 1, forward: 1 }, u64::MAX);

    let mut problems = Vec::new();
    if run.output.len() != N || run.accepted != N || !mars.is_empty() {
        problems.push(format!("{} of {N} requests came out", run.output.len()));
    }
    let mut seen = vec![false; N];
    for r in &run.output {
        let i = r.seq as usize;
        if i >= N || seen[i] || stream[i] != *r {
            problems.push(format!("request {} duplicated or altered", r.seq));
            break;
        }
        seen[i] = true;
    }
    let mut last: HashMap<u64, u64> = HashMap::new();
    for r in &run.output {
        if let Some(prev) = last.insert(r.page(12).0, r.seq) {
            if prev > r.seq {
                problems.push(format!("page {} reordered: {} after {prev}", r.page(12).0, r.seq));
                break;
            }
        }
    }
    if let Err(e) = mars.check_invariants() {
        problems.push(e);
    }
    let ok = problems.is_empty();
    let detail = format!("{N} requests, {} ticks, conserved and page-ordered", run.ticks);
    verdict(4, "conservation and ordering fuzz", ok, if ok { detail } else { problems.join("; ") });
}

#[test]
fn c5_protocol_legality() {
    let s = suite();
    let mut commands = 0;
    let mut problems = Vec::new();
    for (name, exp) in &s.runs {
        let dcfg = &exp.record.config.dram;
        for a in &exp.artifacts {
            for (pipeline, trace) in [("baseline", &a.baseline_trace), ("mars", &a.mars_trace)] {
                assert!(!trace.is_empty());
                commands += trace.len();
                let v = check_trace(trace, dcfg);
                if let Some(first) = v.first() {
                    problems.push(format!(
                        "{name} seed {} {pipeline}: {} violations, first {first:?}",
                        a.seed,
                        v.len()
                    ));
                }
            }
        }
    }
    let ok = problems.is_empty();
    let detail = format!("{commands} commands across 30 traces, 0 violations");
    verdict(5, "DRAM protocol legality", ok, if ok { detail } else { problems.join("; ") });
}

fn trace_bytes(trace: &[marsim_core::dram::DramCommand]) -> Vec<u8> {
    let mut out = Vec::new();
    write_commands(&mut out, trace).unwrap();
    out
}

#[test]
fn c6_q1_equals_baseline() {
    let mut problems = Vec::new();
    let mut bytes = 0;
    for name in PRESET_NAMES {
        let mut cfg = preset(name);
        cfg.mars.capacity = 1;
        let exp = execute(&cfg).unwrap();
        for a in &exp.artifacts {
            let (b, m) = (trace_bytes(&a.baseline_trace), trace_bytes(&a.mars_trace));
            bytes += b.len();
            if b != m {
                problems.push(format!("{name} seed {}", a.seed));
            }
        }
    }
    let ok = problems.is_empty();
    let detail = format!("15 trace pairs identical, {bytes} bytes compared");
    verdict(6, "Q=1 equals baseline", ok, if ok { detail } else { format!("traces differ: {}", problems.join(", ")) });
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn c7_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();
    let mut compared = 0;
    for name in ["WL2", "WL5", "locality"] {
        let mut cfg = preset(name);
        cfg.write_traces = true;
        let trees: Vec<_> = (0..2)
            .map(|i| {
                let dir = tmp.path().join(format!("{name}-{i}"));
                persist(&execute(&cfg).unwrap(), &dir).unwrap();
                read_tree(&dir)
            })
            .collect();
        // Wall-clock timing is the one output that is not a function of the config.
        let strip = |t: &BTreeMap<String, Vec<u8>>| {
            t.iter()
                .filter(|(k, _)| k.as_str() != "timing.txt")
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect::<BTreeMap<_, _>>()
        };
        let (a, b) = (strip(&trees[0]), strip(&trees[1]));
        if !a.keys().any(|k| k.ends_with("commands.csv")) && cfg.simulate_dram {
            problems.push(format!("{name}: no traces written"));
        }
        compared += a.len();
        if a != b {
            let diff: Vec<_> = a.keys().filter(|k| a.get(*k) != b.get(*k)).cloned().collect();
            problems.push(format!("{name}: {diff:?} differ"));
        }
    }
    let ok = problems.is_empty();
    let detail = format!("{compared} files byte-identical across two runs");
    verdict(7, "determinism", ok, if ok { detail } else { problems.join("; ") });
}

#[test]
fn c8_desk_scale_performance() {
    let s = suite();
    let requests: u64 = s.runs.iter().flat_map(|(_, e)| &e.record.seeds).map(|seed| seed.requests).sum();
    let sims: usize = s.runs.iter().map(|(_, e)| e.record.simulations()).sum();
    let ok = s.secs < 60.0 && sims == 30 && requests >= 900_000;
    let detail = format!("{sims} simulations, {requests} requests in {:.2}s", s.secs);
    verdict(8, "desk-scale performance", ok, detail);
}
