use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use msktap::config::{Mode, SystemConfig};
use msktap::pipeline::run_to_dir;
use msktap::scenarios::{preset_config, preset_parameters, PRESETS};
use msktap::verify::{run_suite, VerifyOptions};

/// Kinetic simulator for active particles at two scales.
#[derive(Debug, Parser)]
#[command(name = "msktap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a system and write moments.csv, manifest.toml and snapshots.
    Run {
        /// TOML system or preset file.
        config: Option<PathBuf>,
        /// Use a built-in preset instead of a file.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Override a preset parameter, e.g. --set kill_rate=2.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Integrate the spatially homogeneous (activity-only) system.
        #[arg(long)]
        homogeneous: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Cap on worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the self-verification suites and print a pass/fail table.
    Verify {
        #[arg(long, value_enum, default_value_t = VerifyScale::Tiny)]
        scale: VerifyScale,
        #[arg(long, hide = true)]
        inject_unnormalized: bool,
        #[arg(long, hide = true, value_name = "DELTA")]
        tamper_operator: Option<f64>,
    },
    /// Check a configuration without running it.
    Validate {
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        homogeneous: bool,
    },
    /// List presets and their parameters with defaults.
    Presets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VerifyScale {
    Tiny,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MSKTAP_LOG", "info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            preset,
            set,
            homogeneous,
            out,
            threads,
        } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global()
                    .context("configuring the thread pool")?;
            }
            let cfg = load(config, preset, &set)?;
            let summary = run_to_dir::<f64>(&cfg, &out, homogeneous)?;
            println!(
                "{} run: {} steps to t = {}, {} frames, {} snapshots -> {}",
                match summary.mode {
                    Mode::Spatial => "spatial",
                    Mode::Homogeneous => "homogeneous",
                },
                summary.steps,
                summary.t,
                summary.frames,
                summary.snapshots,
                summary.out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            scale: VerifyScale::Tiny,
            inject_unnormalized,
            tamper_operator,
        } => {
            let opts = VerifyOptions {
                inject_unnormalized,
                tamper: tamper_operator,
                ..VerifyOptions::tiny()
            };
            let results = run_suite(&opts);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} checks, {failed} failed", results.len());
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Validate {
            config,
            preset,
            set,
            homogeneous,
        } => {
            let mut cfg = load(config, preset, &set)?;
            if homogeneous {
                cfg.system.mode = Mode::Homogeneous;
            }
            cfg.validate()?;
            println!(
                "ok: n = {}, m = {}, {} kernel entries",
                cfg.system.n,
                cfg.system.m,
                cfg.kernels.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets => {
            let mut out = std::io::stdout().lock();
            let listed = PRESETS.iter().try_for_each(|name| {
                writeln!(out, "{name}")?;
                for (k, v) in preset_parameters(name)? {
                    writeln!(out, "  {k} = {v}")?;
                }
                anyhow::Ok(())
            });
            match listed {
                // a closed pipe (e.g. `| head`) is not an error
                Err(e)
                    if e.downcast_ref::<std::io::Error>()
                        .is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) => {}
                other => other?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load(config: Option<PathBuf>, preset: Option<String>, set: &[String]) -> anyhow::Result<SystemConfig> {
    let overrides = parse_overrides(set)?;
    match (config, preset) {
        (Some(path), None) => {
            if !overrides.is_empty() {
                bail!("--set only applies to --preset");
            }
            SystemConfig::from_file(&path).with_context(|| format!("invalid config {}", path.display()))
        }
        (None, Some(name)) => Ok(preset_config(&name, &overrides)?),
        _ => Err(anyhow!("give a config file or --preset NAME")),
    }
}

fn parse_overrides(set: &[String]) -> anyhow::Result<BTreeMap<String, f64>> {
    set.iter()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{kv}'"))?;
            let v: f64 = v
                .trim()
                .parse()
                .with_context(|| format!("--set {k}: '{v}' is not a number"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}
