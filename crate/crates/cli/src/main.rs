// SPDX-License-Identifier: Apache-2.0

//! `vbm`: run, sweep and report view-batch continual-learning experiments.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for data
//! errors (unreadable or malformed inputs, unpaired reports).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vbm_core::io::{
    curves_csv, load_records, output_dir, output_root, report, run, sweep, write_records,
    write_report, Aggregate,
};
use vbm_core::spacing::{generate_curves, optimal_interval, SpacingParams};
use vbm_core::{Error, ExperimentConfig, SweepAxis};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vbm",
    version,
    about = "View-batch continual-learning experiments"
)]
#[command(after_help = "Outputs go under $VBM_OUTPUT_ROOT (default ./runs).")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every seed of a configuration.
    Run { config: PathBuf },
    /// Run a configuration once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// Parameter and values, e.g. `V=1..5` or `lr=0.05,0.1`.
        #[arg(long)]
        axis: String,
    },
    /// Emit spacing-effect forgetting curves as CSV (t, R, interval).
    Curve {
        /// Comma-separated overrides of the curve parameters, e.g. `a=0.9,d=1.2`.
        #[arg(long, default_value = "")]
        params: String,
        /// Recall intervals, one curve each.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 3.0, 20.0])]
        intervals: Vec<f64>,
        #[arg(long, default_value_t = 30.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise every run record under a directory into CSV tables.
    Report {
        dir: PathBuf,
        /// Where to write the tables; defaults to `dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_params(spec: &str) -> Result<SpacingParams, Error> {
    let mut p = SpacingParams::default();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("parameter `{part}` is not KEY=VALUE")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("parameter {k}: `{v}` is not a number")))?;
        match k.trim() {
            "a" | "A" => p.a = v,
            "b" => p.b = v,
            "c" => p.c = v,
            "d" => p.d = v,
            other => return Err(Error::Config(format!("unknown curve parameter `{other}`"))),
        }
    }
    p.validate()?;
    Ok(p)
}

fn print_aggregates(aggs: &[Aggregate]) {
    let opt = |m: &Option<vbm_core::MeanStd>, sci: bool| {
        m.map(|m| {
            if sci {
                format!("{:.3e}±{:.3e}", m.mean, m.std)
            } else {
                format!("{:.4}±{:.4}", m.mean, m.std)
            }
        })
        .unwrap_or_else(|| "-".into())
    };
    for a in aggs {
        println!(
            "{} {:<8} vbm={:<5} V={} seeds={} avg={:.4}±{:.4} last={:.4}±{:.4} forgetting={} dof={}",
            &a.config_hash[..12],
            a.method.as_str(),
            a.vbm,
            a.views,
            a.seeds.len(),
            a.avg.mean,
            a.avg.std,
            a.last.mean,
            a.last.std,
            opt(&a.forgetting, false),
            opt(&a.degree_of_forgetting, true),
        );
    }
}

fn save(cfg: &ExperimentConfig, records: &[vbm_core::RunRecord]) -> Result<(), Error> {
    let dir = output_dir(&output_root(), cfg);
    write_records(&dir, records)?;
    print_aggregates(&vbm_core::io::aggregate(records));
    eprintln!("wrote {} records to {}", records.len(), dir.display());
    Ok(())
}

fn write_out(out: Option<&Path>, body: &str) -> Result<(), Error> {
    match out {
        Some(p) => Ok(std::fs::write(p, body)?),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let records = run(&cfg)?;
            save(&cfg, &records)
        }
        Command::Sweep { config, axis } => {
            let cfg = ExperimentConfig::load(&config)?;
            let axis = SweepAxis::parse(&axis)?;
            let records = sweep(&cfg, &axis)?;
            save(&cfg, &records)
        }
        Command::Curve {
            params,
            intervals,
            horizon,
            repetitions,
            out,
        } => {
            let p = parse_params(&params)?;
            let curves = generate_curves(&p, &intervals, horizon, repetitions)?;
            eprintln!("optimal recall interval: {}", optimal_interval(p.c, p.d));
            write_out(out.as_deref(), &curves_csv(&curves)?)
        }
        Command::Report { dir, out } => {
            let records = load_records(&dir)?;
            let rep = report(&records)?;
            let target = out.unwrap_or(dir);
            for p in write_report(&target, &rep)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}
