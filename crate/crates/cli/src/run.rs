//! Orchestration: measure construction, suite execution, ledgers and the
//! run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spectral_ergo::dynamics::simulate_path_every;
use spectral_ergo::ergodics::{default_burn_in, krylov_bogoliubov, mode_variances, moment_estimate};
use spectral_ergo::exec::with_workers;
use spectral_ergo::{EmpiricalMeasure, FourierState, Verdict};

use crate::config::{hex, ExperimentConfig, Suite};
use crate::error::{HarnessError, HarnessResult};
use crate::suites::{self, CheckRow, Context};

pub const MEASURE_FILE: &str = "measure.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Round-trip decimal with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub suite: Suite,
    pub check: String,
    pub property: String,
    #[serde(deserialize_with = "nan_or_f64")]
    pub lhs: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub rhs: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub stderr: f64,
    pub verdict: Verdict,
}

// JSON has no NaN; serde_json writes it as null.
fn nan_or_f64<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

/// Record of one run; replaying its `config` reproduces every artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub config: ExperimentConfig,
    /// Master seed of each suite.
    pub seeds: BTreeMap<String, u64>,
    pub checks: Vec<CheckSummary>,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn violated(&self) -> usize {
        self.checks.iter().filter(|c| c.verdict == Verdict::Violated).count()
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn file_hash(path: &Path) -> HarnessResult<String> {
    Ok(hex(&Sha256::digest(fs::read(path)?)))
}

/// Writes the rows of one suite as `<suite>.csv`.
pub fn write_ledger(dir: &Path, suite: Suite, rows: &[CheckRow]) -> HarnessResult<PathBuf> {
    let path = dir.join(format!("{}.csv", suite.name()));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["suite", "check", "property", "param", "lhs", "rhs", "stderr", "verdict"])?;
    for r in rows {
        w.write_record([
            suite.name(),
            &r.check,
            &r.property,
            &r.param,
            &fmt17(r.lhs),
            &fmt17(r.rhs),
            &fmt17(r.stderr),
            r.verdict.label(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// Samples the invariant measure described by the config, or loads it.
pub fn build_measure(cfg: &ExperimentConfig, warnings: &mut Vec<String>) -> HarnessResult<EmpiricalMeasure> {
    let m = &cfg.measure;
    let traj = cfg.trajectory();
    if let Some(path) = &m.load {
        let nu = EmpiricalMeasure::load(path)?;
        if nu.cutoff() != traj.n {
            return Err(HarnessError::Config(format!(
                "measure {} has cutoff {}, run uses n = {}",
                path.display(),
                nu.cutoff(),
                traj.n
            )));
        }
        return Ok(nu);
    }
    let spec = cfg.spec();
    let (default, warn) = default_burn_in(&spec);
    warnings.extend(warn);
    let dt = m.dt.unwrap_or(traj.dt);
    // round the default burn-in up to the thinning grid
    let burn_in = m.burn_in.unwrap_or_else(|| (default / m.thinning).ceil() * m.thinning);
    let step_cfg = spectral_ergo::TrajectoryConfig::new(traj.n, dt, m.t_final)?;
    Ok(krylov_bogoliubov(
        &FourierState::zeros(traj.n),
        &step_cfg,
        &spec,
        m.t_final,
        burn_in,
        m.thinning,
        m.chains,
        &cfg.measure_seed(),
    )?)
}

/// Writes moments and mode variances of a measure.
pub fn write_measure_summary(dir: &Path, nu: &EmpiricalMeasure) -> HarnessResult<PathBuf> {
    let path = dir.join("measure_summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["quantity", "value", "stderr"])?;
    for order in [2u32, 4, 6, 8] {
        let m = moment_estimate(nu, order)?;
        w.write_record([format!("moment_{order}"), fmt17(m.value), fmt17(m.stderr)])?;
    }
    for r in mode_variances(nu, nu.cutoff()) {
        w.write_record([format!("variance_k={}", r.k), fmt17(r.variance), fmt17(r.stderr)])?;
    }
    w.flush()?;
    Ok(path)
}

fn artifact(dir: &Path, path: &Path) -> HarnessResult<Artifact> {
    Ok(Artifact {
        file: path.strip_prefix(dir).unwrap_or(path).display().to_string(),
        sha256: file_hash(path)?,
    })
}

/// Runs the selected suites (in their canonical order) into `dir` and
/// writes the manifest.
pub fn run_suite(cfg: &ExperimentConfig, dir: &Path) -> HarnessResult<RunManifest> {
    cfg.validate()?;
    fs::create_dir_all(dir)?;
    let started = now();
    let mut suites = cfg.suites.clone();
    suites.sort();
    suites.dedup();
    let mut warnings = Vec::new();
    let mut artifacts = Vec::new();
    let mut checks = Vec::new();
    let (ledgers, measure) = with_workers(cfg.workers, || -> HarnessResult<_> {
        let nu = if suites.iter().any(|s| s.needs_measure()) {
            Some(build_measure(cfg, &mut warnings)?)
        } else {
            None
        };
        let ctx = Context {
            cfg,
            spec: cfg.spec(),
            traj: cfg.trajectory(),
            nu,
        };
        let mut out = Vec::new();
        for &s in &suites {
            out.push((s, suites::run(s, &ctx)?));
        }
        Ok((out, ctx.nu))
    })??;
    if let Some(nu) = &measure {
        if cfg.measure.load.is_none() {
            let p = dir.join(MEASURE_FILE);
            nu.save(&p)?;
            artifacts.push(artifact(dir, &p)?);
        }
        artifacts.push(artifact(dir, &write_measure_summary(dir, nu)?)?);
    }
    for (s, rows) in &ledgers {
        artifacts.push(artifact(dir, &write_ledger(dir, *s, rows)?)?);
        checks.extend(rows.iter().map(|r| CheckSummary {
            suite: r.suite,
            check: r.check.clone(),
            property: r.property.clone(),
            lhs: r.lhs,
            rhs: r.rhs,
            stderr: r.stderr,
            verdict: r.verdict,
        }));
    }
    let mut seeds: BTreeMap<String, u64> = suites.iter().map(|&s| (s.name().to_string(), cfg.seed_for(s).master_seed)).collect();
    if measure.is_some() {
        seeds.insert("measure".into(), cfg.measure_seed().master_seed);
    }
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        started_unix: started,
        finished_unix: now(),
        config: cfg.clone(),
        seeds,
        checks,
        artifacts,
        warnings,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Samples one path and writes `path.csv` (time, `|X|₂²`, `|Y|₂²`,
/// coefficients `k = -n..n`).
pub fn simulate(cfg: &ExperimentConfig, dir: &Path, stride: usize) -> HarnessResult<PathBuf> {
    fs::create_dir_all(dir)?;
    let traj = cfg.trajectory();
    let ctx = Context {
        cfg,
        spec: cfg.spec(),
        traj: traj.clone(),
        nu: None,
    };
    let rec = with_workers(cfg.workers, || {
        simulate_path_every(&ctx.initial_state(), &traj, &ctx.spec, &cfg.seed_for(Suite::Ed4), stride)
    })??;
    let path = dir.join("path.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let n = traj.n as i64;
    let mut head = vec!["t".to_string(), "norm_sq".into(), "y_norm_sq".into()];
    head.extend((-n..=n).map(|k| format!("x_{k}")));
    w.write_record(&head)?;
    for s in &rec.states {
        let mut row = vec![fmt17(s.t), fmt17(s.x.norm_sq()), fmt17(s.y.norm_sq())];
        row.extend(s.x.coeffs().iter().map(|&c| fmt17(c)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Samples the invariant measure into `dir` (binary file plus summary).
pub fn ergodic(cfg: &ExperimentConfig, dir: &Path) -> HarnessResult<(EmpiricalMeasure, Vec<String>)> {
    fs::create_dir_all(dir)?;
    let mut warnings = Vec::new();
    let nu = with_workers(cfg.workers, || build_measure(cfg, &mut warnings))??;
    nu.save(&dir.join(MEASURE_FILE))?;
    write_measure_summary(dir, &nu)?;
    Ok((nu, warnings))
}

/// Human-readable table of a manifest, checking each artifact against its
/// recorded hash. Missing or altered artifacts are reported per row.
pub fn emit_report(manifest: &RunManifest, dir: &Path) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:<34} {:<22} {:>14} {:>14} {:>11}  verdict\n",
        "suite", "check", "property", "lhs", "rhs", "stderr"
    ));
    for c in &manifest.checks {
        out.push_str(&format!(
            "{:<16} {:<34} {:<22} {:>14.6e} {:>14.6e} {:>11.3e}  {}\n",
            c.suite.name(),
            c.check,
            c.property,
            c.lhs,
            c.rhs,
            c.stderr,
            c.verdict.label()
        ));
    }
    for a in &manifest.artifacts {
        match file_hash(&dir.join(&a.file)) {
            Ok(h) if h == a.sha256 => {}
            Ok(_) => out.push_str(&format!("artifact {} differs from its recorded hash\n", a.file)),
            Err(_) => out.push_str(&format!("artifact {} is missing\n", a.file)),
        }
    }
    for w in &manifest.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    let holds = manifest.checks.iter().filter(|c| c.verdict == Verdict::Holds).count();
    let inconclusive = manifest.checks.iter().filter(|c| c.verdict == Verdict::Inconclusive).count();
    let decided = manifest.checks.len() - inconclusive;
    out.push_str(&format!("{holds}/{decided} checks hold"));
    if inconclusive > 0 {
        out.push_str(&format!(", {inconclusive} inconclusive"));
    }
    out.push('\n');
    out
}

/// Outcome of re-running a manifest's configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    pub manifest: RunManifest,
    /// Artifacts whose bytes differ from the original run.
    pub mismatches: Vec<String>,
}

/// Re-runs the configuration recorded in `manifest` into `dir` and compares
/// every artifact hash.
pub fn replay(manifest: &RunManifest, dir: &Path, workers: Option<usize>) -> HarnessResult<ReplayOutcome> {
    let mut cfg = manifest.config.clone();
    if let Some(w) = workers {
        cfg.workers = w;
    }
    let again = run_suite(&cfg, dir)?;
    let fresh: BTreeMap<&str, &str> = again.artifacts.iter().map(|a| (a.file.as_str(), a.sha256.as_str())).collect();
    let mismatches = manifest
        .artifacts
        .iter()
        .filter(|a| fresh.get(a.file.as_str()) != Some(&a.sha256.as_str()))
        .map(|a| a.file.clone())
        .collect();
    Ok(ReplayOutcome {
        manifest: again,
        mismatches,
    })
}
