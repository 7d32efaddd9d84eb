use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use clab_core::fluid::{integrate, IntegratorConfig, MIN_TRUNC_DIM};
use clab_core::harness::{finite_horizon_deviation, run_sweep_to_dir, SweepSpec};
use clab_core::invariant::{invariant_profile, invariant_profile_truncated};
use clab_core::sim::{
    compare_policies, steady_state_estimate, steady_state_estimate_traced, SimConfig, SimMode,
    TraceWriter, DEFAULT_BURN_IN, DEFAULT_SAMPLES, DEFAULT_SPACING,
};
use clab_core::{AggregateProfile, Params};

#[derive(Parser)]
#[command(
    name = "clab",
    version,
    about = "Partially centralized queues: invariant state, fluid model, simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    QueueLevel,
    AggregateCoupled,
}

impl From<Mode> for SimMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::QueueLevel => SimMode::QueueLevel,
            Mode::AggregateCoupled => SimMode::AggregateCoupled,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Invariant state of the fluid model.
    Invariant {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Stored length when p = 0 (the tail is infinite).
        #[arg(long, default_value_t = MIN_TRUNC_DIM)]
        len: usize,
    },
    /// Integrate the fluid model and print a JSON summary.
    Fluid {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// `empty`, `invariant`, or a path to a JSON array holding v.
        #[arg(long, default_value = "empty")]
        init: String,
        #[arg(long)]
        trunc_dim: Option<usize>,
        /// Keep every k-th step in the trajectory.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Write the trajectory as `t,i,v_i` CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Steady-state estimate from one simulated run.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: u64,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u64,
        #[arg(long, default_value_t = DEFAULT_SPACING)]
        spacing: u64,
        #[arg(long, value_enum, default_value = "queue-level")]
        mode: Mode,
        /// Write every event as `step,event_type,station,v1` CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Grid sweep from a JSON spec; writes results.csv and manifest.json.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimates at p and at p = 0.
    Compare {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sup distance between the chain and the fluid path from empty.
    Deviation {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Invariant {
            p,
            lambda,
            format,
            len,
        } => {
            let params = Params::new(lambda, p)?;
            let inv = if p == 0.0 {
                invariant_profile_truncated(&params, len)?
            } else {
                invariant_profile(&params)?
            };
            match format {
                Format::Json => print_json(&inv)?,
                Format::Csv => inv.s_inv.write_csv(io::stdout().lock())?,
            }
        }
        Command::Fluid {
            p,
            lambda,
            horizon,
            dt,
            init,
            trunc_dim,
            stride,
            trajectory,
        } => {
            let params = Params::new(lambda, p)?;
            let trunc_dim = trunc_dim.or((p == 0.0).then_some(MIN_TRUNC_DIM));
            let v0 = match init.as_str() {
                "empty" => AggregateProfile::empty_system(),
                "invariant" => match trunc_dim {
                    Some(d) if p == 0.0 => invariant_profile_truncated(&params, d)?.v_inv,
                    _ => invariant_profile(&params)?.v_inv,
                },
                path => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading initial profile {path}"))?;
                    serde_json::from_str(&text).context("initial profile must be a JSON array")?
                }
            };
            let cfg = IntegratorConfig {
                dt,
                horizon,
                trunc_dim,
                record_stride: stride,
                ..IntegratorConfig::default()
            };
            let traj = integrate(&v0, &params, &cfg)?;
            if let Some(path) = trajectory {
                traj.write_csv(BufWriter::new(File::create(&path)?))?;
            }
            let (t, v) = traj.last().context("empty trajectory")?;
            let dist = clab_core::fluid::distance_to_invariant(v, &params).ok();
            print_json(&json!({
                "t": t,
                "mean_queue_length": v.mean_queue_length(),
                "support": v.support(),
                "distance_to_invariant": dist,
                "v": v,
            }))?;
        }
        Command::Simulate {
            n,
            p,
            lambda,
            seed,
            burn_in,
            samples,
            spacing,
            mode,
            trace,
        } => {
            let cfg = SimConfig::new(Params::new(lambda, p)?, n, seed)
                .with_protocol(burn_in, samples, spacing)
                .with_mode(mode.into());
            let est = match trace {
                Some(path) => {
                    let mut w = TraceWriter::new(BufWriter::new(File::create(&path)?))?;
                    let est = steady_state_estimate_traced(&cfg, &mut w)?;
                    w.finish()?;
                    est
                }
                None => steady_state_estimate(&cfg)?,
            };
            print_json(&est)?;
        }
        Command::Sweep { spec, out } => {
            let spec = SweepSpec::from_json_file(&spec)
                .with_context(|| format!("loading sweep spec {}", spec.display()))?;
            let res = run_sweep_to_dir(&spec, &out)?;
            eprintln!(
                "{} records, {} failures -> {}",
                res.records.len(),
                res.failures.len(),
                out.display()
            );
        }
        Command::Compare { n, p, lambda, seed } => {
            if p <= 0.0 {
                bail!("compare needs p > 0");
            }
            let cfg = SimConfig::new(Params::new(lambda, p)?, n, seed);
            let (at_p, at_zero) = compare_policies(&cfg)?;
            print_json(&json!({ "p": at_p, "p_zero": at_zero }))?;
        }
        Command::Deviation {
            n,
            p,
            lambda,
            horizon,
            seed,
        } => {
            let d = finite_horizon_deviation(&Params::new(lambda, p)?, n, horizon, seed)?;
            print_json(&json!({ "deviation": d, "n": n, "seed": seed }))?;
        }
    }
    Ok(())
}
