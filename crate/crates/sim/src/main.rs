use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rename_core::monitor::oracle::{exhaustive_crash_oracle, OracleConfig};
use rename_core::net::LogLevel;
use rename_core::trial::{run_trial, TrialConfig};
use rename_sim::sweep::{write_rows, write_summaries};
use rename_sim::{fit_scaling, log_level_from_env, run_sweep, Model, SimError, SweepSpec};

#[derive(Parser)]
#[command(name = "rename-sim", about = "Seeded trials and sweeps of the crash and Byzantine renaming protocols")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a sweep spec, or a single trial config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// off, summary or trace; overrides RENAME_SIM_LOG.
        #[arg(long)]
        log: Option<String>,
    },
    /// Fit the messages column of a raw CSV against a model.
    Fit {
        #[arg(long)]
        raw: PathBuf,
        /// n_log2n, f_plus_logn or byz
        #[arg(long)]
        model: String,
    },
    /// Exhaustive crash-schedule check on ids 1..=n.
    Oracle {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        election_constant: Option<f64>,
        #[arg(long)]
        state_cap: Option<usize>,
    },
}

enum Outcome {
    Ok,
    MonitorFailure,
}

fn log_level(flag: Option<String>) -> Result<LogLevel, SimError> {
    match flag {
        Some(s) => LogLevel::parse(&s).ok_or_else(|| SimError::Spec(format!("--log {s:?}: expected off, summary or trace"))),
        None => log_level_from_env(),
    }
}

fn run(config: &Path, out_dir: &Path, jobs: usize, level: LogLevel) -> Result<Outcome, SimError> {
    let text = fs::read_to_string(config)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| SimError::Spec(e.to_string()))?;
    fs::create_dir_all(out_dir)?;
    if value.get("n_values").is_none() {
        let cfg: TrialConfig = serde_json::from_value(value).map_err(|e| SimError::Spec(e.to_string()))?;
        let t = run_trial(&cfg, level)?;
        fs::write(out_dir.join("transcript.json"), serde_json::to_vec_pretty(&t)?)?;
        let row = t.summary();
        write_rows(fs::File::create(out_dir.join("raw.csv"))?, std::iter::once(&row))?;
        println!(
            "{} n={} f={} seed={}: success={} rounds={} messages={} bits={} monitor_failures={}",
            cfg.protocol.name(),
            row.n,
            row.f_budget,
            row.seed,
            row.success,
            row.rounds,
            row.messages,
            row.bits,
            row.monitor_failures
        );
        return Ok(if row.monitor_failures > 0 { Outcome::MonitorFailure } else { Outcome::Ok });
    }
    let spec: SweepSpec = SweepSpec::from_json(&text)?;
    let result = run_sweep(&spec, jobs, level)?;
    fs::write(out_dir.join(&spec.output.raw), result.raw_csv()?)?;
    write_summaries(fs::File::create(out_dir.join(&spec.output.summary))?, &result.summaries)?;
    let kept: Vec<_> = result.records.iter().filter_map(|r| r.transcript.as_ref().map(|t| (r.cell, r.trial, t))).collect();
    if !kept.is_empty() {
        let dir = out_dir.join("failures");
        fs::create_dir_all(&dir)?;
        for (c, t, tr) in kept {
            fs::write(dir.join(format!("cell{c}_trial{t}.json")), serde_json::to_vec_pretty(tr)?)?;
        }
    }
    for s in &result.summaries {
        println!(
            "n={} f={} {}: success {:.3}, messages mean {:.0} max {}, rounds max {}, monitor failures {}",
            s.n, s.f_budget, s.adversary, s.success_rate, s.messages_mean, s.messages_max, s.rounds_max, s.monitor_failure_count
        );
    }
    println!("raw csv sha256 {}", result.digest()?);
    Ok(if result.deterministic_failures() > 0 { Outcome::MonitorFailure } else { Outcome::Ok })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run { config, out_dir, jobs, log } => log_level(log).and_then(|l| run(&config, &out_dir, jobs, l)),
        Cmd::Fit { raw, model } => (|| {
            let m = Model::parse(&model).ok_or_else(|| SimError::Spec(format!("unknown model {model:?}")))?;
            let report = fit_scaling(fs::File::open(&raw)?, m)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(Outcome::Ok)
        })(),
        Cmd::Oracle { n, election_constant, state_cap } => {
            let mut cfg = OracleConfig::new(n);
            if let Some(c) = election_constant {
                cfg.election_constant = c;
            }
            if let Some(c) = state_cap {
                cfg.state_cap = c;
            }
            match exhaustive_crash_oracle(&cfg) {
                Ok(r) => {
                    println!("{}", serde_json::to_string_pretty(&r).expect("serializable"));
                    Ok(if r.holds() { Outcome::Ok } else { Outcome::MonitorFailure })
                }
                Err(e) => {
                    eprintln!("oracle: {e}");
                    Ok(Outcome::MonitorFailure)
                }
            }
        }
    };
    match res {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::MonitorFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("rename-sim: {e}");
            ExitCode::from(2)
        }
    }
}
