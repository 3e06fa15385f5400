use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spectral_ergo_cli::run::{self, MANIFEST_FILE};
use spectral_ergo_cli::{emit_report, replay, run_suite, ExperimentConfig, HarnessResult, RunManifest, Suite};

#[derive(Parser)]
#[command(name = "spectral-ergo", version, about = "Simulate the Galerkin SPDE and verify its ergodic properties")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one path and write its coefficients.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record every `stride`-th step.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Sample the invariant measure by time averaging.
    Ergodic {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run check suites; exits nonzero if any check is violated.
    Verify(VerifyArgs),
    /// Print the verdict table of a finished run.
    Report {
        dir: PathBuf,
        /// Exit nonzero on violated or inconclusive checks.
        #[arg(long)]
        strict: bool,
    },
    /// Re-run a manifest and compare artifact hashes.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    kernel: bool,
    #[arg(long = "mittag-leffler")]
    mittag_leffler: bool,
    #[arg(long)]
    ed3: bool,
    #[arg(long)]
    ed4: bool,
    #[arg(long)]
    galerkin: bool,
    #[arg(long)]
    energy: bool,
    #[arg(long)]
    bismut: bool,
    #[arg(long)]
    feller: bool,
    #[arg(long)]
    irreducible: bool,
    #[arg(long)]
    moments: bool,
    #[arg(long)]
    invariance: bool,
    #[arg(long)]
    ibpf: bool,
    #[arg(long)]
    poincare: bool,
    #[arg(long)]
    gap: bool,
    #[arg(long)]
    pf2: bool,
    #[arg(long)]
    logsob: bool,
    /// Every suite.
    #[arg(long)]
    all: bool,
}

impl VerifyArgs {
    /// Suites picked by flags; none picked means the config's list.
    fn selected(&self) -> Vec<Suite> {
        let flags = [
            (self.kernel, Suite::KernelBound),
            (self.mittag_leffler, Suite::MittagLeffler),
            (self.ed3, Suite::Ed3),
            (self.ed4, Suite::Ed4),
            (self.galerkin, Suite::Galerkin),
            (self.energy, Suite::Energy),
            (self.bismut, Suite::BismutElworthy),
            (self.feller, Suite::Feller),
            (self.irreducible, Suite::Irreducible),
            (self.moments, Suite::Moments),
            (self.invariance, Suite::Invariance),
            (self.ibpf, Suite::Ibpf),
            (self.poincare, Suite::Poincare),
            (self.gap, Suite::Gap),
            (self.pf2, Suite::Pf2),
            (self.logsob, Suite::Logsob),
        ];
        if self.all {
            return Suite::ALL.to_vec();
        }
        flags.iter().filter(|(on, _)| *on).map(|&(_, s)| s).collect()
    }
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output_root().join(&cfg.hash()[..12]))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Command) -> HarnessResult<ExitCode> {
    match cmd {
        Command::Simulate { config, out, stride } => {
            let cfg = ExperimentConfig::load(&config)?;
            let path = run::simulate(&cfg, &out_dir(&cfg, out), stride.max(1))?;
            println!("{}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Ergodic { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out_dir(&cfg, out);
            let (nu, warnings) = run::ergodic(&cfg, &dir)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            println!("{} samples written to {}", nu.len(), dir.join(run::MEASURE_FILE).display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let mut cfg = ExperimentConfig::load(&args.config)?;
            let picked = args.selected();
            if !picked.is_empty() {
                cfg.suites = picked;
            }
            if let Some(w) = args.workers {
                cfg.workers = w;
            }
            let dir = out_dir(&cfg, args.out.clone());
            let manifest = run_suite(&cfg, &dir)?;
            print!("{}", emit_report(&manifest, &dir));
            Ok(if manifest.violated() > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Report { dir, strict } => {
            let manifest = RunManifest::load(&dir.join(MANIFEST_FILE))?;
            print!("{}", emit_report(&manifest, &dir));
            let undecided = manifest.checks.iter().any(|c| c.verdict != spectral_ergo::Verdict::Holds);
            Ok(if manifest.violated() > 0 || (strict && undecided) {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Replay { manifest, out, workers } => {
            let m = RunManifest::load(&manifest)?;
            let dir = out.unwrap_or_else(|| sibling(&manifest));
            let r = replay(&m, &dir, workers)?;
            if r.mismatches.is_empty() {
                println!("{} artifacts reproduced byte for byte", m.artifacts.len());
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &r.mismatches {
                    println!("mismatch: {f}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn sibling(manifest: &Path) -> PathBuf {
    let parent = manifest.parent().unwrap_or(Path::new("."));
    let name = parent.file_name().map_or("run".into(), |n| n.to_string_lossy().into_owned());
    parent.with_file_name(format!("{name}-replay"))
}
