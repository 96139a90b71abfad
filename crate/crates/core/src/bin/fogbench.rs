use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fogbench::campaign::{exit_code, run_campaign, CampaignConfig, Mode, SyncMode};
use fogbench::Result;

/// Closed-loop LiDAR-in-fog testbed: episodes, corner-case discovery,
/// algorithm comparison, point-cloud snapshots and the lockstep demo.
///
/// Flags override the values in the config file. Log verbosity is read from
/// FOGBENCH_LOG (error, warn, info, debug, trace).
#[derive(Debug, Parser)]
#[command(name = "fogbench", version)]
struct Cli {
    /// Campaign config (JSON).
    #[arg(long, env = "FOGBENCH_CONFIG")]
    config: Option<PathBuf>,
    /// episode, discover, compare, scan-only or sync-demo.
    #[arg(long)]
    mode: Option<Mode>,
    /// Episode budget per search.
    #[arg(long)]
    budget: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run episodes through the lockstep middleware: off, inproc or socket.
    #[arg(long)]
    sync: Option<SyncMode>,
    /// Fog visibility override (m).
    #[arg(long, allow_negative_numbers = true)]
    mor: Option<f64>,
}

fn load(cli: &Cli) -> Result<CampaignConfig> {
    let mut cfg = match &cli.config {
        Some(path) => CampaignConfig::load(path)?,
        None => CampaignConfig::default(),
    };
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(b) = cli.budget {
        cfg.budget = b;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.sync {
        cfg.sync = s;
    }
    if cli.mor.is_some() {
        cfg.mor = cli.mor;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FOGBENCH_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Usage errors share the configuration exit code.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = load(&cli).and_then(|cfg| {
        log::info!("mode {} seed {} out {}", cfg.mode, cfg.seed, cfg.out.display());
        run_campaign(&cfg)
    });
    match &result {
        Ok(o) => {
            log::info!("wrote {} files to {}", o.manifest.files.len(), o.dir.display());
            if o.incomplete {
                log::warn!("campaign incomplete");
            }
        }
        Err(e) => log::error!("{e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
