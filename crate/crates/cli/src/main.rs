//! `nlhj`: assumption checks, transport distances, solves, comparison runs and
//! parameter sweeps driven by a TOML config.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Sink;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "nlhj", version, about = "Nonlocal Hamilton-Jacobi experiments")]
struct Cli {
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to the config's `output`, then `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replaces `plan.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// `key=value` with a dotted key, applied before validation. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check assumptions; ids default to `check.ids`.
    Check { ids: Vec<String> },
    /// Restricted transport distance between the measures at two points.
    Distance {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
    },
    Solve,
    /// Comparison run between a candidate sub- and supersolution.
    Compare {
        #[arg(long, allow_hyphen_values = true)]
        sub: Option<String>,
        #[arg(long = "super", allow_hyphen_values = true)]
        sup: Option<String>,
    },
    /// Runs `sweep.command` over the product of `sweep.axes`.
    Sweep,
}

fn floats(v: &[f64]) -> toml::Value {
    toml::Value::Array(v.iter().map(|x| toml::Value::Float(*x)).collect())
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let mut tree = config::read_tree(path)?;
    for o in &cli.overrides {
        let (k, v) = config::parse_override(o)?;
        config::apply_override(&mut tree, &k, v)?;
    }
    if let Some(seed) = cli.seed {
        let seed = i64::try_from(seed).map_err(|_| CliError::Usage("--seed must fit in 63 bits".into()))?;
        config::apply_override(&mut tree, "plan.seed", toml::Value::Integer(seed))?;
    }
    let flag = |key: &str, v: Option<toml::Value>, tree: &mut toml::Table| match v {
        Some(v) => config::apply_override(tree, key, v),
        None => Ok(()),
    };
    match &cli.command {
        Command::Distance { x, y, r, p } => {
            flag("distance.x", x.as_deref().map(floats), &mut tree)?;
            flag("distance.y", y.as_deref().map(floats), &mut tree)?;
            flag("distance.r", r.map(toml::Value::Float), &mut tree)?;
            flag("distance.p", p.map(toml::Value::Float), &mut tree)?;
        }
        Command::Compare { sub, sup } => {
            flag("compare.sub", sub.clone().map(toml::Value::String), &mut tree)?;
            flag("compare.super", sup.clone().map(toml::Value::String), &mut tree)?;
        }
        _ => {}
    }
    let loaded = config::load(tree)?;
    let out_dir = cli.out.clone().or_else(|| loaded.config.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let sink = Sink::new(&out_dir, &loaded)?;
    match &cli.command {
        Command::Check { ids } => commands::check(&loaded, &sink, ids),
        Command::Distance { .. } => commands::distance(&loaded, &sink),
        Command::Solve => commands::solve(&loaded, &sink),
        Command::Compare { .. } => commands::compare(&loaded, &sink),
        Command::Sweep => commands::sweep(&loaded, &sink, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            match out.failure {
                None => ExitCode::SUCCESS,
                Some(f) => {
                    eprintln!("nlhj: {f}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("nlhj: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
