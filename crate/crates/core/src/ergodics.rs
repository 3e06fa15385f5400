//! Time-averaged empirical measures, invariance residuals, moments and
//! tightness diagnostics.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{Integrator, PathRecord, PathState, TrajectoryConfig};
use crate::error::{Error, Result};
use crate::exec::replicate;
use crate::noise::{SeedSpec, StreamTag};
use crate::nonlinearity::NonlinearitySpec;
use crate::semigroup_mc::{steps_to, Observable};
use crate::spectral::{operator_sobolev_norm, FourierState, SobolevIndex};
use crate::stats::{batch_means_stderr, integrated_autocorr_time, mean_stderr, quantile};

const MAGIC: &[u8; 8] = b"SPERGNU1";

/// How an [`EmpiricalMeasure`] was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureMeta {
    pub spec: NonlinearitySpec,
    pub cfg: TrajectoryConfig,
    /// Length of each chain.
    pub t_final: f64,
    pub burn_in: f64,
    /// Time between retained samples.
    pub thinning: f64,
    pub seed: SeedSpec,
    pub chains: usize,
    /// Samples are independent draws rather than time averages.
    pub independent: bool,
}

impl MeasureMeta {
    pub fn hash(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("metadata serializes");
        Sha256::digest(&json).into()
    }
}

/// Uniformly weighted samples, stored chain by chain.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    n: usize,
    samples: Vec<FourierState>,
    pub meta: MeasureMeta,
}

impl EmpiricalMeasure {
    pub fn new(samples: Vec<FourierState>, meta: MeasureMeta) -> Result<Self> {
        if samples.len() < 100 {
            return Err(Error::InvalidArgument(format!(
                "an empirical measure needs at least 100 samples, got {}",
                samples.len()
            )));
        }
        let n = samples[0].cutoff();
        if let Some(s) = samples.iter().find(|s| s.cutoff() != n) {
            return Err(Error::CutoffMismatch { left: s.cutoff(), right: n });
        }
        Ok(Self { n, samples, meta })
    }

    /// Wraps independent draws, e.g. exact samples of a Gaussian law.
    pub fn from_iid(samples: Vec<FourierState>, spec: &NonlinearitySpec) -> Result<Self> {
        let n = samples.first().map_or(0, |s| s.cutoff());
        let meta = MeasureMeta {
            spec: *spec,
            cfg: TrajectoryConfig::new(n, 1.0, 1.0)?,
            t_final: 0.0,
            burn_in: 0.0,
            thinning: 0.0,
            seed: SeedSpec::path(0, 0),
            chains: samples.len(),
            independent: true,
        };
        Self::new(samples, meta)
    }

    pub fn cutoff(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[FourierState] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples of chain `c`.
    pub fn chain(&self, c: usize) -> &[FourierState] {
        let per = self.samples.len() / self.meta.chains.max(1);
        &self.samples[c * per..(c + 1) * per]
    }

    /// Mean of per-sample values and its standard error: plain for
    /// independent samples, from 8 batch means per chain otherwise.
    pub fn mean_stderr(&self, values: &[f64]) -> (f64, f64) {
        if self.meta.independent {
            return mean_stderr(values);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        (mean, batch_means_stderr(values, 8 * self.meta.chains))
    }

    /// Effective sample size of `f` from the integrated autocorrelation
    /// time averaged over chains.
    pub fn effective_sample_size(&self, f: impl Fn(&FourierState) -> f64) -> f64 {
        if self.meta.independent {
            return self.len() as f64;
        }
        let taus: Vec<f64> = (0..self.meta.chains)
            .map(|c| integrated_autocorr_time(&self.chain(c).iter().map(&f).collect::<Vec<_>>()))
            .collect();
        self.len() as f64 / (taus.iter().sum::<f64>() / taus.len() as f64)
    }

    /// Writes the binary layout: magic `SPERGNU1`, `n`, `count` and the
    /// metadata length as little-endian `u64`, the SHA-256 of the metadata
    /// JSON, the JSON itself, then `count × (2n+1)` little-endian `f64`
    /// coefficients row by row in the order `k = -n, ..., n`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(&self.meta).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(MAGIC)?;
        for v in [self.n as u64, self.samples.len() as u64, json.len() as u64] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.meta.hash())?;
        out.write_all(&json)?;
        for s in &self.samples {
            for c in s.coeffs() {
                out.write_all(&c.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let n = next(&mut r)? as usize;
        let count = next(&mut r)? as usize;
        let len = next(&mut r)? as usize;
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let meta: MeasureMeta = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        if meta.hash() != hash {
            return Err(Error::Format("metadata hash mismatch".into()));
        }
        let mut samples = Vec::with_capacity(count);
        let mut buf = vec![0u8; 8 * (2 * n + 1)];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            let coeffs = buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            samples.push(FourierState::from_coeffs(n, coeffs)?);
        }
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(Error::Format("trailing bytes".into()));
        }
        Self::new(samples, meta)
    }
}

/// Burn-in of five relaxation times `10 / (2(1 - ‖DF‖₀²/4))`, or 10 with
/// a warning when the gap bound does not apply.
pub fn default_burn_in(spec: &NonlinearitySpec) -> (f64, Option<String>) {
    let d = spec.df_sup;
    if d < 2.0 {
        (10.0 / (2.0 * (1.0 - d * d / 4.0)), None)
    } else {
        (
            10.0,
            Some(format!("sup|f'| = {d} >= 2: no gap bound, burn-in set to 10")),
        )
    }
}

fn grid_steps(t: f64, cfg: &TrajectoryConfig, what: &str) -> Result<u64> {
    steps_to(t, cfg).map_err(|_| Error::InvalidArgument(format!("{what} {t} is not a multiple of dt = {}", cfg.dt)))
}

/// Krylov-Bogoliubov sampling: `chains` independent paths from `x0`, each
/// run to `t_final`, retaining the state every `thinning` time units after
/// `burn_in`.
#[allow(clippy::too_many_arguments)]
pub fn krylov_bogoliubov(
    x0: &FourierState,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    t_final: f64,
    burn_in: f64,
    thinning: f64,
    chains: usize,
    seed: &SeedSpec,
) -> Result<EmpiricalMeasure> {
    if !spec.hyp.any() {
        return Err(Error::Inapplicable(
            "time averaging is run only for nonlinearities satisfying one of the growth hypotheses".into(),
        ));
    }
    if !(burn_in >= 0.0 && burn_in < t_final) || !(thinning > 0.0) || chains == 0 {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= burn_in < T, thinning > 0 and chains > 0; got burn_in = {burn_in}, T = {t_final}, thinning = {thinning}, chains = {chains}"
        )));
    }
    let total = grid_steps(t_final, cfg, "horizon")?;
    let burn = grid_steps(burn_in, cfg, "burn-in")?;
    let thin = grid_steps(thinning, cfg, "thinning")?;
    let per_chain = replicate(chains, |c| {
        let mut it = Integrator::new(cfg, spec)?;
        let gen = seed.with_replica(c).generator();
        let mut s = PathState::initial(x0.clone());
        let mut out = Vec::new();
        for m in 0..total {
            it.step(&mut s, &gen, m)?;
            let done = m + 1;
            if done > burn && (done - burn) % thin == 0 {
                out.push(s.x.clone());
            }
        }
        Ok(out)
    })?;
    let meta = MeasureMeta {
        spec: *spec,
        cfg: cfg.clone(),
        t_final,
        burn_in,
        thinning,
        seed: *seed,
        chains,
        independent: false,
    };
    EmpiricalMeasure::new(per_chain.into_iter().flatten().collect(), meta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    /// `|mean φ(X(t, x_i)) - mean φ(x_i)|` over samples `x_i` of ν.
    pub residual: f64,
    pub stderr: f64,
    pub samples: usize,
    pub within: bool,
}

/// `∫ P_tφ dν - ∫ φ dν` with one continuation path per sample (at most
/// `replicas` samples, evenly spaced), on the subsampling stream.
pub fn invariance_residual(
    nu: &EmpiricalMeasure,
    phi: &Observable,
    t: f64,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<InvarianceReport> {
    let steps = steps_to(t, cfg)?;
    let len = nu.len();
    let count = replicas.clamp(2, len);
    let seed = seed.with_tag(StreamTag::Subsampling);
    let d = replicate(count, |i| {
        let x = &nu.samples()[i as usize * len / count];
        let mut it = Integrator::new(cfg, spec)?;
        let gen = seed.with_replica(i).generator();
        let mut s = PathState::initial(x.clone());
        for m in 0..steps {
            it.step(&mut s, &gen, m)?;
        }
        Ok(phi.eval(&s.x) - phi.eval(x))
    })?;
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let stderr = if nu.meta.independent || count < len {
        mean_stderr(&d).1
    } else {
        nu.mean_stderr(&d).1
    };
    Ok(InvarianceReport {
        residual: mean.abs(),
        stderr,
        samples: count,
        within: mean.abs() <= 3.0 * stderr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub order: u32,
    pub value: f64,
    pub stderr: f64,
    pub first_half: f64,
    pub second_half: f64,
    pub halves_stderr: f64,
    /// Halves agree within 3 joint standard errors.
    pub stable: bool,
}

/// `∫ |x|₂^order dν` for `order ∈ {2, 4, 6, 8}` with a split-half check.
pub fn moment_estimate(nu: &EmpiricalMeasure, order: u32) -> Result<MomentReport> {
    if ![2, 4, 6, 8].contains(&order) {
        return Err(Error::InvalidArgument(format!("moment order must be 2, 4, 6 or 8, got {order}")));
    }
    let v: Vec<f64> = nu.samples().iter().map(|x| x.norm_sq().powi(order as i32 / 2)).collect();
    let (value, stderr) = nu.mean_stderr(&v);
    let mid = v.len() / 2;
    let chains = (nu.meta.chains / 2).max(1);
    let half = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let se = if nu.meta.independent {
            mean_stderr(xs).1
        } else {
            batch_means_stderr(xs, 8 * chains)
        };
        (m, se)
    };
    let (a, sa) = half(&v[..mid]);
    let (b, sb) = half(&v[mid..]);
    let joint = sa.hypot(sb);
    Ok(MomentReport {
        order,
        value,
        stderr,
        first_half: a,
        second_half: b,
        halves_stderr: joint,
        stable: (a - b).abs() <= 3.0 * joint,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeVariance {
    pub k: i64,
    pub variance: f64,
    pub stderr: f64,
}

/// Per-mode variances `∫ x_k² dν - (∫ x_k dν)²` for `|k| <= max_mode`.
pub fn mode_variances(nu: &EmpiricalMeasure, max_mode: usize) -> Vec<ModeVariance> {
    let m = max_mode.min(nu.cutoff()) as i64;
    (-m..=m)
        .map(|k| {
            let c: Vec<f64> = nu.samples().iter().map(|x| x.get(k)).collect();
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            let sq: Vec<f64> = c.iter().map(|v| (v - mean).powi(2)).collect();
            let (variance, stderr) = nu.mean_stderr(&sq);
            ModeVariance { k, variance, stderr }
        })
        .collect()
}

/// Sample covariance of modes `j` and `k` with its standard error.
pub fn mode_covariance(nu: &EmpiricalMeasure, j: i64, k: i64) -> (f64, f64) {
    let mean = |m: i64| nu.samples().iter().map(|x| x.get(m)).sum::<f64>() / nu.len() as f64;
    let (mj, mk) = (mean(j), mean(k));
    let p: Vec<f64> = nu.samples().iter().map(|x| (x.get(j) - mj) * (x.get(k) - mk)).collect();
    nu.mean_stderr(&p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    /// `(T', (1/T') ∫_0^{T'} |D_ξ Y|₂² dt)` for `T' ∈ {T/4, T/2, T}`.
    pub time_averages: Vec<(f64, f64)>,
    /// Largest ratio of consecutive time averages.
    pub max_doubling_growth: f64,
    pub bounded: bool,
    /// `(R, P(|X|²_{2,1/4} > R), E|X|²_{2,1/4} / R)` at the 0.5, 0.9 and
    /// 0.99 quantiles.
    pub tails: Vec<(f64, f64, f64)>,
    pub tails_decreasing: bool,
    pub chebyshev_holds: bool,
}

/// Regularity diagnostics along one stored path (`y` is retained in every
/// [`PathState`]).
pub fn tightness_diagnostic(record: &PathRecord) -> Result<TightnessReport> {
    let states = &record.states;
    if states.len() < 5 {
        return Err(Error::InvalidArgument("tightness needs at least 5 stored states".into()));
    }
    let h = record.dt * record.stride as f64;
    let dy: Vec<f64> = states
        .iter()
        .map(|s| s.y.modes().map(|(k, c)| (k * k) as f64 * c * c).sum())
        .collect();
    let last = states.len() - 1;
    let average = |j: usize| {
        let integral = h * (dy[..=j].iter().sum::<f64>() - 0.5 * (dy[0] + dy[j]));
        let t = states[j].t - states[0].t;
        (t, integral / t)
    };
    let marks = [last / 4, last / 2, last];
    let time_averages: Vec<(f64, f64)> = marks.iter().map(|&j| average(j.max(1))).collect();
    let max_doubling_growth = time_averages
        .windows(2)
        .map(|w| if w[0].1 > 0.0 { w[1].1 / w[0].1 } else { 1.0 })
        .fold(0.0, f64::max);
    let q = SobolevIndex::new(0.25)?;
    let r: Vec<f64> = states.iter().map(|s| operator_sobolev_norm(&s.x, q).powi(2)).collect();
    let mean_r = r.iter().sum::<f64>() / r.len() as f64;
    let tails: Vec<(f64, f64, f64)> = [0.5, 0.9, 0.99]
        .iter()
        .map(|&p| {
            let big = quantile(&r, p);
            let frac = r.iter().filter(|&&v| v > big).count() as f64 / r.len() as f64;
            (big, frac, mean_r / big)
        })
        .collect();
    Ok(TightnessReport {
        bounded: max_doubling_growth <= 1.05,
        max_doubling_growth,
        tails_decreasing: tails.windows(2).all(|w| w[1].1 <= w[0].1),
        chebyshev_holds: tails.iter().all(|t| t.1 <= t.2),
        time_averages,
        tails,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate_path_every;
    use crate::noise::{stationary_energy, stationary_variance};

    fn ou_nu() -> EmpiricalMeasure {
        let cfg = TrajectoryConfig::new(8, 0.1, 1.0).unwrap();
        krylov_bogoliubov(&FourierState::zeros(8), &cfg, &NonlinearitySpec::zero(), 1005.0, 5.0, 0.5, 4, &SeedSpec::path(5, 0)).unwrap()
    }

    #[test]
    fn linear_mode_variances_and_covariances() {
        let nu = ou_nu();
        assert_eq!(nu.len(), 4 * 2000);
        for r in mode_variances(&nu, 8) {
            let want = stationary_variance(r.k);
            assert!((r.variance - want).abs() <= 3.5 * r.stderr, "{r:?} vs {want}");
        }
        let (c, se) = mode_covariance(&nu, 0, 1);
        assert!(c.abs() <= 3.5 * se);
        assert!(nu.effective_sample_size(|x| x.get(0)) > 1000.0);
    }

    #[test]
    fn linear_moments_against_wick() {
        let nu = ou_nu();
        let v: Vec<f64> = (-8i64..=8).map(stationary_variance).collect();
        let s: f64 = v.iter().sum();
        let m2 = moment_estimate(&nu, 2).unwrap();
        assert!((m2.value - stationary_energy(8)).abs() <= 3.0 * m2.stderr, "{m2:?}");
        let m4 = moment_estimate(&nu, 4).unwrap();
        let wick = s * s + 2.0 * v.iter().map(|x| x * x).sum::<f64>();
        assert!((m4.value - wick).abs() <= 3.0 * m4.stderr, "{m4:?} vs {wick}");
        assert!(m2.stable && m4.stable);
        assert!(m2.value <= m4.value.sqrt());
        assert!(moment_estimate(&nu, 3).is_err());
    }

    #[test]
    fn uniqueness_proxy_from_distinct_starts() {
        let cfg = TrajectoryConfig::new(8, 0.1, 1.0).unwrap();
        let spec = NonlinearitySpec::zero();
        let far = FourierState::from_modes(8, &[(0, 5.0), (1, -4.0)]);
        let a = krylov_bogoliubov(&FourierState::zeros(8), &cfg, &spec, 505.0, 5.0, 0.5, 4, &SeedSpec::path(1, 0)).unwrap();
        let b = krylov_bogoliubov(&far, &cfg, &spec, 505.0, 5.0, 0.5, 4, &SeedSpec::path(2, 0)).unwrap();
        for (p, q) in mode_variances(&a, 4).iter().zip(mode_variances(&b, 4)) {
            assert!((p.variance - q.variance).abs() <= 3.5 * p.stderr.hypot(q.stderr), "{p:?} {q:?}");
        }
    }

    #[test]
    fn preconditions() {
        let cfg = TrajectoryConfig::new(8, 0.1, 1.0).unwrap();
        let x = FourierState::zeros(8);
        let mut inert = NonlinearitySpec::linear(0.3).unwrap();
        inert.hyp = Default::default();
        assert!(matches!(
            krylov_bogoliubov(&x, &cfg, &inert, 10.0, 1.0, 0.5, 1, &SeedSpec::path(1, 0)),
            Err(Error::Inapplicable(_))
        ));
        let spec = NonlinearitySpec::zero();
        assert!(krylov_bogoliubov(&x, &cfg, &spec, 10.0, 10.0, 0.5, 1, &SeedSpec::path(1, 0)).is_err());
        assert!(krylov_bogoliubov(&x, &cfg, &spec, 10.0, 1.0, 0.55, 1, &SeedSpec::path(1, 0)).is_err());
        // too few samples
        assert!(krylov_bogoliubov(&x, &cfg, &spec, 10.0, 1.0, 0.5, 1, &SeedSpec::path(1, 0)).is_err());
        assert_eq!(default_burn_in(&NonlinearitySpec::eps_sin(1.0)).0, 10.0 / 1.5);
        assert!(default_burn_in(&NonlinearitySpec::eps_sin(2.5)).1.is_some());
    }

    #[test]
    fn invariance_residuals() {
        let cfg = TrajectoryConfig::new(8, 0.1, 1.0).unwrap();
        let nu = ou_nu();
        let one = invariance_residual(&nu, &Observable::constant(1.0), 0.5, &cfg, &NonlinearitySpec::zero(), 500, &SeedSpec::path(3, 0)).unwrap();
        assert_eq!(one.residual, 0.0);
        let sq = invariance_residual(&nu, &Observable::norm_squared(), 0.5, &cfg, &NonlinearitySpec::zero(), 4000, &SeedSpec::path(3, 0)).unwrap();
        assert!(sq.within, "{sq:?}");
    }

    #[test]
    fn binary_round_trip_and_corruption() {
        let nu = ou_nu();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nu.bin");
        nu.save(&p).unwrap();
        let back = EmpiricalMeasure::load(&p).unwrap();
        assert_eq!(back, nu);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[40] ^= 1;
        std::fs::write(&p, &bytes).unwrap();
        assert!(EmpiricalMeasure::load(&p).is_err());
    }

    #[test]
    fn tightness_linear_decay_and_tails() {
        let x0 = FourierState::from_modes(8, &[(1, 3.0), (2, -2.0)]);
        let cfg = TrajectoryConfig::new(8, 0.05, 100.0).unwrap();
        let rec = simulate_path_every(&x0, &cfg, &NonlinearitySpec::zero(), &SeedSpec::path(4, 0), 2).unwrap();
        let t = tightness_diagnostic(&rec).unwrap();
        assert!(t.bounded && t.tails_decreasing && t.chebyshev_holds, "{t:?}");
        assert!(t.time_averages[2].1 < t.time_averages[0].1);
    }
}
