use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use marsim_core::harness::{self, ExperimentConfig, HarnessError, RunRecord};
use marsim_core::metrics::locality;
use marsim_core::traffic::trace::{read_requests, TraceError};

/// Page-grouping reorder buffer and DRAM controller simulator.
#[derive(Parser)]
#[command(name = "marsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the baseline and MARS pipelines for every seed of a config.
    Run {
        config: PathBuf,
        /// Override the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run one experiment per value of a parameter.
    Sweep {
        config: PathBuf,
        /// window_size, leaves, Q, pending_queue_depth or sets_ways.
        #[arg(long)]
        param: String,
        /// Comma-separated values; sets_ways values are written SETSxWAYS.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Window locality of a request trace.
    Locality {
        trace: PathBuf,
        /// Window size; repeat or comma-separate for several.
        #[arg(long, value_delimiter = ',', required = true)]
        window: Vec<usize>,
        #[arg(long, default_value_t = 12)]
        page_offset_bits: u32,
    },
    /// Summarise every run under a directory.
    Report { dir: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn load(path: &Path, output_dir: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn print_record(r: &RunRecord) {
    println!("{} ({})", r.name, &r.config_digest[..12]);
    for s in &r.seeds {
        match (&s.baseline, &s.mars, &s.improvement) {
            (Some(b), Some(m), Some(i)) => println!(
                "  seed {:>3}: {} requests, CAS/ACT {:.2} -> {:.2} ({:+.1}%), bandwidth {:.2} -> {:.2} B/cycle ({:+.1}%)",
                s.seed,
                s.requests,
                b.cas_per_act.unwrap_or(0.0),
                m.cas_per_act.unwrap_or(0.0),
                i.cas_per_act_delta_pct.unwrap_or(0.0),
                b.bandwidth_bytes_per_cycle(),
                m.bandwidth_bytes_per_cycle(),
                i.bandwidth_delta_pct
            ),
            _ => println!("  seed {:>3}: {} requests (DRAM not simulated)", s.seed, s.requests),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let cfg = load(&config, output_dir)?;
            let (record, dir) = harness::run_experiment(&cfg)?;
            print_record(&record);
            println!("wrote {} in {:.2}s", dir.display(), record.wall_clock_secs);
        }
        Command::Sweep { config, param, values, output_dir } => {
            let cfg = load(&config, output_dir)?;
            let (records, csv) = harness::run_sweep(&cfg, &param, &values)?;
            for (v, r) in values.iter().zip(&records) {
                println!("{param} = {v}");
                print_record(r);
            }
            println!("wrote {}", csv.display());
        }
        Command::Locality { trace, window, page_offset_bits } => {
            let f = File::open(&trace).map_err(TraceError::Io).with_context(|| trace.display().to_string())?;
            let reqs = read_requests(BufReader::new(f)).with_context(|| trace.display().to_string())?;
            println!("window_size,windows,mean");
            for w in window {
                anyhow::ensure!(w >= 1, "window size must be >= 1");
                let s = locality(&reqs, w, page_offset_bits);
                let mean = s.mean.map(|m| format!("{m:.4}")).unwrap_or_default();
                println!("{w},{},{mean}", s.values.len());
            }
        }
        Command::Report { dir } => {
            let s = harness::report(&dir)?;
            print!("{}", std::fs::read_to_string(s.out_dir.join("summary.txt"))?);
            println!("wrote {}", s.out_dir.display());
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            let w = cfg.workload()?;
            println!(
                "{}: ok ({} leaves, {} requests per seed, {} seeds, digest {})",
                config.display(),
                w.tree.leaves,
                w.total_requests(),
                cfg.seeds.len(),
                &cfg.digest()[..12]
            );
        }
    }
    Ok(())
}

/// Error class and exit code.
fn classify(err: &anyhow::Error) -> (&'static str, u8) {
    if let Some(h) = err.downcast_ref::<HarnessError>() {
        let code = match h {
            HarnessError::Parse(_) | HarnessError::Invalid { .. } => 2,
            HarnessError::Simulation(_) => 3,
            HarnessError::Io { .. } | HarnessError::OutputExists(_) => 4,
            HarnessError::UnknownParameter(_) | HarnessError::BadValue { .. } | HarnessError::NoRecords(_) => 5,
        };
        return (h.class(), code);
    }
    if let Some(t) = err.downcast_ref::<TraceError>() {
        return match t {
            TraceError::Io(_) => ("IoError", 4),
            TraceError::Parse { .. } => ("TraceParseError", 6),
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return ("IoError", 4);
    }
    ("UsageError", 2)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (class, code) = classify(&err);
            eprintln!("error[{class}]: {err:#}");
            ExitCode::from(code)
        }
    }
}
