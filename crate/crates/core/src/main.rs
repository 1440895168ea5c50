use std::path::{Path, PathBuf};
use std::process::ExitCode as ProcessExit;

use clap::{Parser, Subcommand};

use multiwell::cli::{
    cmd_check, cmd_concentrate, cmd_solve, exit_code, load_constants, parse_suites, Eta0Source, ExitCode, ExperimentConfig, RunManifest,
    CONSTANTS_FILE, MANIFEST_FILE,
};
use multiwell::{Error, Result};

#[derive(Parser)]
#[command(name = "multiwell", version, about = "Vector Allen-Cahn solver and concentration diagnostics")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the configured epsilon family and write a run directory.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Run directory (default: the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run checker suites on a run directory.
    Check {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated suites (default: the config's `checks`, else all).
        #[arg(long, value_delimiter = ',')]
        suite: Vec<String>,
        /// Concentration threshold: scan, manifest or a value.
        #[arg(long, default_value = "scan")]
        eta0: String,
    },
    /// Extract the concentration set and Hopf tables of a run.
    Concentrate {
        #[arg(long)]
        out: PathBuf,
        /// Concentration threshold: scan, manifest or a value.
        #[arg(long, default_value = "manifest")]
        eta0: String,
    },
    /// Print the fitted constants manifest.
    Constants {
        #[arg(long, conflicts_with = "out")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn constants_path(config: Option<&Path>, out: Option<&Path>) -> Result<PathBuf> {
    if let Some(c) = config {
        let cfg = ExperimentConfig::load(c)?;
        return cfg
            .constants_manifest
            .or_else(|| cfg.output.map(|o| o.join(CONSTANTS_FILE)))
            .ok_or_else(|| Error::InvalidConfig(format!("{}: neither constants_manifest nor output is set", c.display())));
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    let manifest = dir.join(MANIFEST_FILE);
    if manifest.is_file() {
        let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(&manifest)?)?;
        if let Some(p) = m.config.constants_manifest {
            return Ok(p);
        }
    }
    Ok(dir.join(CONSTANTS_FILE))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Solve { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::InvalidConfig(format!("{}: no --out and no output key", config.display())))?;
            let m = cmd_solve(&cfg, &out)?;
            for r in &m.members {
                match (r.energy, &r.error) {
                    (Some(e), _) => eprintln!("eps={} h={} energy={e:.6} converged={}", r.epsilon, r.h, r.converged),
                    (None, Some(err)) => eprintln!("eps={} h={} failed: {err}", r.epsilon, r.h),
                    (None, None) => eprintln!("eps={} h={} no result", r.epsilon, r.h),
                }
            }
            eprintln!("M0={:.6} run written to {}", m.m0, out.display());
            Ok(if m.all_converged() { ExitCode::Pass } else { ExitCode::NonConvergence })
        }
        Cmd::Check { out, suite, eta0 } => {
            let suites = parse_suites(&suite)?;
            let (report, path) = cmd_check(&out, &suites, eta0.parse::<Eta0Source>()?)?;
            for s in &report.suites {
                for r in s.records.iter().filter(|r| !r.pass && !r.vacuous) {
                    eprintln!("FAIL {}/{} [{}] value={} tolerance={}", s.suite, r.name, r.region, r.value, r.tolerance);
                }
            }
            eprintln!("{} checks, {} failed, {} vacuous; report {}", report.checks, report.failed, report.vacuous, path.display());
            Ok(if report.pass { ExitCode::Pass } else { ExitCode::CheckFailure })
        }
        Cmd::Concentrate { out, eta0 } => {
            let s = cmd_concentrate(&out, eta0.parse::<Eta0Source>()?)?;
            println!("{}", serde_json::to_string_pretty(&s.set)?);
            Ok(ExitCode::Pass)
        }
        Cmd::Constants { config, out } => {
            let path = constants_path(config.as_deref(), out.as_deref())?;
            if !path.is_file() {
                return Err(Error::MissingArtifacts(format!("{} not found", path.display())));
            }
            println!("{}", serde_json::to_string_pretty(&load_constants(&path)?)?);
            Ok(ExitCode::Pass)
        }
        Cmd::Version => {
            println!("multiwell {}", env!("CARGO_PKG_VERSION"));
            Ok(ExitCode::Pass)
        }
    }
}

fn main() -> ProcessExit {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ProcessExit::from(ExitCode::Usage as u8);
        }
    }
    match run(cli) {
        Ok(code) => ProcessExit::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ProcessExit::from(exit_code(&e) as u8)
        }
    }
}
