use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use style_timing::report::{parse_window, run, RunConfig};
use style_timing::Error;

/// Runs growth-vs-defensive style timing experiments and writes tables,
/// equity curves and a run manifest.
#[derive(Debug, Parser)]
#[command(name = "stl", version)]
struct Args {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    /// attribution|tilt|grid|benchmarks|volmatch|walkforward|post2022|credit|diagnostics|all
    #[arg(long)]
    experiment: Option<String>,

    /// Directory with <SYMBOL>.csv files and the factor file.
    #[arg(long, env = "STL_DATA_DIR")]
    data_dir: Option<PathBuf>,

    #[arg(long)]
    out_dir: Option<PathBuf>,

    #[arg(long)]
    cost_bps: Option<f64>,

    /// Generate seeded synthetic data instead of reading --data-dir.
    #[arg(long)]
    synthetic: bool,

    #[arg(long)]
    seed: Option<u64>,

    /// Main policy window as start:end (YYYY-MM-DD:YYYY-MM-DD).
    #[arg(long)]
    window: Option<String>,
}

fn build_config(args: Args) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(e) = args.experiment {
        cfg.experiment = e;
    }
    if args.synthetic {
        cfg.synthetic = true;
    }
    if let Some(d) = args.data_dir {
        cfg.data_dir = Some(d);
    }
    if let Some(o) = args.out_dir {
        cfg.out_dir = o;
    }
    if let Some(c) = args.cost_bps {
        cfg.cost_bps = c;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.window {
        parse_window(&w)?;
        cfg.window = Some(w);
    }
    cfg.experiment()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = build_config(args).and_then(|cfg| run(&cfg).map(|m| (cfg, m)));
    match result {
        Ok((cfg, m)) => {
            println!(
                "ran {} -> {} ({} files)",
                m.experiments_run.join(","),
                cfg.out_dir.display(),
                m.outputs.len()
            );
            for (e, why) in &m.skipped {
                eprintln!("skipped {e}: {why}");
            }
            ExitCode::SUCCESS
        }
        Err(e @ Error::Usage(_)) => {
            eprintln!("stl: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("stl: {e}");
            ExitCode::FAILURE
        }
    }
}
