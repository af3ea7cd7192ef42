use clap::{Parser, Subcommand};
use nr_latency::experiment::{emit_figure_data, parse_spec, run_sweep, ExperimentSpec, ResultTable, SweepOptions};
use nr_latency::sim_engine::{check_requirement, replication_scenario, run_replication, PointContext};
use nr_latency::{run, Service};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nr-latency", version, about = "5G NR V2N2V radio latency simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration point and print its metrics as JSON.
    Run {
        /// Experiment spec; its base configuration is used (axes ignored).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override a configuration key, e.g. --set density=40.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Write per-packet breakdowns of replication 0 as CSV.
        #[arg(long)]
        packets: Option<PathBuf>,
    },
    /// Run every point of a spec's axes, resuming from earlier output.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write per-series (x, y) files for one figure from a results CSV.
    Figure {
        results: PathBuf,
        id: u32,
        #[arg(long, default_value = "figures")]
        output: PathBuf,
    },
    /// Dump the world of one replication as JSON.
    Scenario {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replication: u32,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn load(spec: Option<&PathBuf>, overrides: &[String]) -> nr_latency::Result<ExperimentSpec> {
    let mut s = match spec {
        Some(p) => parse_spec(p)?,
        None => ExperimentSpec::default(),
    };
    for o in overrides {
        s.set_override(o)?;
    }
    s.validate()?;
    Ok(s)
}

fn write_packets(path: &PathBuf, ctx: &PointContext, seed: u64) -> nr_latency::Result<()> {
    let out = run_replication(ctx, seed, 0, true)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "packet", "vehicle", "direction", "leg", "t_sch", "t_p_tx", "t_fa", "t_w", "t_tt", "t_p_rx", "t_retx_total",
        "attempts", "total", "disposition",
    ])?;
    for r in &out.records {
        let legs = r.ul.iter().map(|b| (0, b)).chain(r.dl.iter().enumerate());
        for (i, b) in legs {
            let ms = |t: nr_latency::Ticks| format!("{:.6}", t.as_ms());
            w.write_record([
                r.packet.to_string(),
                r.vehicle.to_string(),
                b.direction.to_string(),
                i.to_string(),
                ms(b.t_sch),
                ms(b.t_p_tx),
                ms(b.t_fa),
                ms(b.t_w),
                ms(b.t_tt),
                ms(b.t_p_rx),
                ms(b.t_retx_total),
                b.n_attempts.to_string(),
                ms(b.total()),
                format!("{:?}", r.disposition),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn main_inner(cli: Cli) -> nr_latency::Result<bool> {
    match cli.command {
        Command::Run { spec, seed, overrides, packets } => {
            let s = load(spec.as_ref(), &overrides)?;
            let seed = seed.unwrap_or(s.seed);
            let report = run(&s.base, seed)?;
            let checks = [check_requirement(&report, Service::Lloa), check_requirement(&report, Service::Hloa)];
            let out = serde_json::json!({ "config": s.base, "seed": seed, "report": report, "requirements": checks });
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            if let Some(p) = packets {
                write_packets(&p, &PointContext::new(&s.base)?, seed)?;
            }
            Ok(true)
        }
        Command::Sweep { spec, output, seed, workers, overrides } => {
            let s = load(Some(&spec), &overrides)?;
            let summary = run_sweep(&s, &SweepOptions { output_dir: output, seed, workers })?;
            eprintln!(
                "{} points run, {} skipped, {} failed; results in {}",
                summary.ran,
                summary.skipped,
                summary.failed,
                summary.output_dir.display()
            );
            for r in summary.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("failed: {}: {}", nr_latency::experiment::describe(&r.config), r.error.as_deref().unwrap_or(""));
            }
            Ok(summary.failed == 0)
        }
        Command::Figure { results, id, output } => {
            let table = ResultTable::read(&results)?;
            for p in emit_figure_data(&table, id, &output)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Scenario { spec, seed, replication, overrides } => {
            let s = load(spec.as_ref(), &overrides)?;
            let ctx = PointContext::new(&s.base)?;
            println!("{}", replication_scenario(&ctx, seed, replication)?.to_json()?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
