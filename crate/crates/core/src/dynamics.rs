//! Exponential-Euler stepping of the Galerkin system, its variational flow,
//! and the pathwise checks that run on simulated trajectories.
//!
//! Per mode, one step of length `dt` reads
//!
//! ```text
//! x_k <- e^{-λ_k dt} x_k + φ_k [D_ξ P_n F(x)]_k + sqrt(q_k) z_k
//! φ_k = (1 - e^{-λ_k dt}) / λ_k,   q_k = (1 - e^{-2 λ_k dt}) / (2 λ_k)
//! ```
//!
//! with `λ_k = 1 + k²`. The linear part and the noise are exact, so the only
//! discretization error sits in the nonlinear term. The variational flow is
//! the exact derivative of this map: `η <- e^{-λ dt} η + φ D_ξ P_n[f'(x) η]`,
//! evaluated at the pre-step `x`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::exec::replicate;
use crate::noise::{innovation_variance, Philox, SeedSpec};
use crate::nonlinearity::{NemytskiiWorkspace, NonlinearitySpec, ScalarMap};
use crate::spectral::{apply_dxi, check_grid, dxi_into, lambda, min_grid_size, FourierState, KAPPA};
use crate::stats::mean_stderr;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ExponentialEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub grid_m: usize,
    pub scheme: Scheme,
}

impl TrajectoryConfig {
    /// Config on the smallest dealiasing grid for `n`.
    pub fn new(n: usize, dt: f64, t_final: f64) -> Result<Self> {
        let cfg = Self {
            n,
            dt,
            t_final,
            grid_m: min_grid_size(n),
            scheme: Scheme::ExponentialEuler,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_grid(mut self, m: usize) -> Result<Self> {
        self.grid_m = m;
        self.validate()?;
        Ok(self)
    }

    pub fn with_horizon(mut self, t_final: f64) -> Result<Self> {
        self.t_final = t_final;
        self.validate()?;
        Ok(self)
    }

    /// Same time grid at cutoff `n`, on the smallest grid for `n`.
    pub fn with_cutoff(mut self, n: usize) -> Result<Self> {
        self.n = n;
        self.grid_m = min_grid_size(n);
        self.validate()?;
        Ok(self)
    }

    pub fn steps(&self) -> u64 {
        (self.t_final / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "horizon must be finite and >= 0, got {}",
                self.t_final
            )));
        }
        if self.t_final > 0.0 && self.dt > self.t_final * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} exceeds the horizon {}",
                self.dt, self.t_final
            )));
        }
        let r = self.t_final / self.dt;
        if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon {} is not a whole number of steps of {}",
                self.t_final, self.dt
            )));
        }
        check_grid(self.n, self.grid_m)
    }
}

/// `X_n(t)` together with its split `X = Y + W_A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub t: f64,
    pub x: FourierState,
    pub w_conv: FourierState,
    pub y: FourierState,
}

impl PathState {
    pub fn initial(x0: FourierState) -> Self {
        let n = x0.cutoff();
        Self {
            t: 0.0,
            y: x0.clone(),
            x: x0,
            w_conv: FourierState::zeros(n),
        }
    }

    /// `max_k |x_k - y_k - w_k|`.
    pub fn decomposition_gap(&self) -> f64 {
        self.x
            .coeffs()
            .iter()
            .zip(self.y.coeffs())
            .zip(self.w_conv.coeffs())
            .map(|((x, y), w)| (x - y - w).abs())
            .fold(0.0, f64::max)
    }
}

/// `η^h(t)` along a path, with the direction it started from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    pub t: f64,
    pub eta: FourierState,
    pub h0: FourierState,
}

impl VariationalState {
    pub fn initial(h: FourierState) -> Self {
        Self {
            t: 0.0,
            eta: h.clone(),
            h0: h,
        }
    }
}

/// Stepper with cached per-mode factors, FFT plans and scratch buffers.
#[derive(Clone, Debug)]
pub struct Integrator {
    cfg: TrajectoryConfig,
    map: Option<ScalarMap>,
    ws: NemytskiiWorkspace,
    decay: Vec<f64>,
    phi: Vec<f64>,
    sqrt_q: Vec<f64>,
    z: Vec<f64>,
    fbuf: Vec<f64>,
    dbuf: Vec<f64>,
}

impl Integrator {
    pub fn new(cfg: &TrajectoryConfig, spec: &NonlinearitySpec) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n as i64;
        let dt = cfg.dt;
        let modes = -n..=n;
        let decay = modes.clone().map(|k| (-lambda(k) * dt).exp()).collect();
        let phi = modes.clone().map(|k| -(-lambda(k) * dt).exp_m1() / lambda(k)).collect();
        let sqrt_q = modes.map(|k| innovation_variance(k, dt).sqrt()).collect();
        let len = 2 * cfg.n + 1;
        Ok(Self {
            cfg: cfg.clone(),
            map: spec.scalar_map(),
            ws: NemytskiiWorkspace::new(cfg.n, cfg.grid_m)?,
            decay,
            phi,
            sqrt_q,
            z: vec![0.0; len],
            fbuf: vec![0.0; len],
            dbuf: vec![0.0; len],
        })
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.cfg
    }

    /// Loads the standard normals of step `step_index` from `gen`.
    pub fn draw(&mut self, gen: &Philox, step_index: u64) {
        gen.fill_normals(step_index, &mut self.z);
    }

    /// Replaces the held normals, e.g. with a slice of a finer level's draw
    /// or with their negation for antithetic pairs.
    pub fn set_normals(&mut self, z: &[f64]) {
        self.z.copy_from_slice(z);
    }

    /// Normals used by the most recent step.
    pub fn normals(&self) -> &[f64] {
        &self.z
    }

    /// `sqrt(q_k)`: the innovation is `g_k = sqrt(q_k) z_k`.
    pub fn innovation_sd(&self) -> &[f64] {
        &self.sqrt_q
    }

    pub fn step(&mut self, s: &mut PathState, gen: &Philox, step_index: u64) -> Result<()> {
        self.draw(gen, step_index);
        self.advance(s, &mut [], step_index)
    }

    /// Advances the path and every `η` in `etas` by one step on one draw.
    pub fn step_coupled(
        &mut self,
        s: &mut PathState,
        etas: &mut [FourierState],
        gen: &Philox,
        step_index: u64,
    ) -> Result<()> {
        self.draw(gen, step_index);
        self.advance(s, etas, step_index)
    }

    /// One step with the normals currently held.
    pub fn advance(&mut self, s: &mut PathState, etas: &mut [FourierState], step_index: u64) -> Result<()> {
        self.check(&s.x)?;
        for e in etas.iter() {
            self.check(e)?;
        }
        if let Some(map) = self.map {
            self.ws.load(s.x.coeffs());
            for e in etas.iter_mut() {
                self.ws.df_loaded(&map, e.coeffs(), &mut self.fbuf);
                dxi_into(&self.fbuf, &mut self.dbuf);
                for ((v, &a), (&p, &d)) in e.coeffs_mut().iter_mut().zip(&self.decay).zip(self.phi.iter().zip(&self.dbuf)) {
                    *v = a * *v + p * d;
                }
            }
            self.ws.eval_loaded(&map, &mut self.fbuf);
            dxi_into(&self.fbuf, &mut self.dbuf);
        } else {
            for e in etas.iter_mut() {
                for (v, &a) in e.coeffs_mut().iter_mut().zip(&self.decay) {
                    *v *= a;
                }
            }
            self.dbuf.fill(0.0);
        }
        let (x, y, w) = (s.x.coeffs_mut(), s.y.coeffs_mut(), s.w_conv.coeffs_mut());
        for i in 0..x.len() {
            let a = self.decay[i];
            w[i] = a * w[i] + self.sqrt_q[i] * self.z[i];
            y[i] = a * y[i] + self.phi[i] * self.dbuf[i];
            x[i] = y[i] + w[i];
        }
        s.t = (step_index + 1) as f64 * self.cfg.dt;
        if !s.x.is_finite() {
            return Err(Error::NonFinite { step: step_index, t: s.t });
        }
        Ok(())
    }

    /// Variational step alone, driven by the frozen pre-step state `x`.
    pub fn advance_variational(&mut self, eta: &mut FourierState, x: &FourierState) -> Result<()> {
        self.check(eta)?;
        self.check(x)?;
        match self.map {
            Some(map) => {
                self.ws.load(x.coeffs());
                self.ws.df_loaded(&map, eta.coeffs(), &mut self.fbuf);
                dxi_into(&self.fbuf, &mut self.dbuf);
            }
            None => self.dbuf.fill(0.0),
        }
        for ((v, &a), (&p, &d)) in eta.coeffs_mut().iter_mut().zip(&self.decay).zip(self.phi.iter().zip(&self.dbuf)) {
            *v = a * *v + p * d;
        }
        if !eta.is_finite() {
            return Err(Error::NonFinite { step: 0, t: f64::NAN });
        }
        Ok(())
    }

    fn check(&self, x: &FourierState) -> Result<()> {
        if x.cutoff() != self.cfg.n {
            return Err(Error::CutoffMismatch {
                left: x.cutoff(),
                right: self.cfg.n,
            });
        }
        Ok(())
    }
}

/// One exponential-Euler step of the path. Builds a fresh [`Integrator`];
/// loops should hold one instead.
pub fn step_mild(
    s: &PathState,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    seed: &SeedSpec,
    step_index: u64,
) -> Result<PathState> {
    let mut it = Integrator::new(cfg, spec)?;
    let mut out = s.clone();
    it.step(&mut out, &seed.generator(), step_index)?;
    Ok(out)
}

/// One step of the variational flow along the path state `s`.
pub fn step_variational(
    v: &VariationalState,
    s: &PathState,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
) -> Result<VariationalState> {
    if (v.t - s.t).abs() > 1e-9 * cfg.dt {
        return Err(Error::InvalidArgument(format!(
            "variational state at t = {} but path at t = {}",
            v.t, s.t
        )));
    }
    let mut it = Integrator::new(cfg, spec)?;
    let mut out = v.clone();
    it.advance_variational(&mut out.eta, &s.x)?;
    out.t = v.t + cfg.dt;
    Ok(out)
}

/// States at `t = 0, stride·dt, 2 stride·dt, …` (the endpoint is always kept).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub dt: f64,
    pub stride: usize,
    pub states: Vec<PathState>,
}

impl PathRecord {
    pub fn initial(&self) -> &PathState {
        &self.states[0]
    }

    pub fn last(&self) -> &PathState {
        self.states.last().expect("record holds the initial state")
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

pub fn simulate_path(
    x0: &FourierState,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    seed: &SeedSpec,
) -> Result<PathRecord> {
    simulate_path_every(x0, cfg, spec, seed, 1)
}

/// [`simulate_path`] keeping every `stride`-th state.
pub fn simulate_path_every(
    x0: &FourierState,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    seed: &SeedSpec,
    stride: usize,
) -> Result<PathRecord> {
    let stride = stride.max(1);
    let mut it = Integrator::new(cfg, spec)?;
    let gen = seed.generator();
    let mut s = PathState::initial(x0.clone());
    it.check(&s.x)?;
    let steps = cfg.steps();
    let mut states = Vec::with_capacity(steps as usize / stride + 2);
    states.push(s.clone());
    for m in 0..steps {
        it.step(&mut s, &gen, m)?;
        if (m + 1) % stride as u64 == 0 || m + 1 == steps {
            states.push(s.clone());
        }
    }
    Ok(PathRecord {
        dt: cfg.dt,
        stride,
        states,
    })
}

/// A path and the variational flows of several directions on the same tape.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledRecord {
    pub path: PathRecord,
    pub directions: Vec<FourierState>,
    /// `eta[j][i]`: flow of direction `i` at the `j`-th recorded time.
    pub eta: Vec<Vec<FourierState>>,
}

impl CoupledRecord {
    pub fn variational(&self, i: usize) -> Vec<VariationalState> {
        self.path
            .states
            .iter()
            .zip(&self.eta)
            .map(|(s, e)| VariationalState {
                t: s.t,
                eta: e[i].clone(),
                h0: self.directions[i].clone(),
            })
            .collect()
    }
}

pub fn simulate_coupled(
    x0: &FourierState,
    h: &FourierState,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    seed: &SeedSpec,
) -> Result<(PathRecord, Vec<VariationalState>)> {
    let rec = simulate_coupled_many(x0, std::slice::from_ref(h), cfg, spec, seed, 1)?;
    let v = rec.variational(0);
    Ok((rec.path, v))
}

pub fn simulate_coupled_many(
    x0: &FourierState,
    hs: &[FourierState],
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    seed: &SeedSpec,
    stride: usize,
) -> Result<CoupledRecord> {
    let stride = stride.max(1);
    let mut it = Integrator::new(cfg, spec)?;
    let gen = seed.generator();
    let mut s = PathState::initial(x0.clone());
    let mut etas = hs.to_vec();
    let steps = cfg.steps();
    let mut states = vec![s.clone()];
    let mut eta = vec![etas.clone()];
    it.check(&s.x)?;
    for m in 0..steps {
        it.step_coupled(&mut s, &mut etas, &gen, m)?;
        if (m + 1) % stride as u64 == 0 || m + 1 == steps {
            states.push(s.clone());
            eta.push(etas.clone());
        }
    }
    Ok(CoupledRecord {
        path: PathRecord {
            dt: cfg.dt,
            stride,
            states,
        },
        directions: hs.to_vec(),
        eta,
    })
}

/// Mean residual `|X(T, x+εh) - X(T, x) - ε η^h(T)|₂ / ε` for one `ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDifferenceRow {
    pub eps: f64,
    pub residual: f64,
    pub stderr: f64,
}

/// Compares finite differences of the solution map with the variational
/// flow on common noise. For a `C²` map the residual is linear in `ε`.
pub fn differentiability_check(
    x0: &FourierState,
    h: &FourierState,
    eps: &[f64],
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<Vec<FiniteDifferenceRow>> {
    let per_replica = replicate(replicas, |r| {
        let sd = seed.with_replica(r);
        let base = simulate_coupled_many(x0, std::slice::from_ref(h), cfg, spec, &sd, usize::MAX)?;
        let x_t = &base.path.last().x;
        let eta_t = &base.eta.last().expect("endpoint recorded")[0];
        eps.iter()
            .map(|&e| {
                let mut xp = x0.clone();
                xp.axpy(e, h);
                let pert = simulate_path_every(&xp, cfg, spec, &sd, usize::MAX)?;
                let mut d = pert.last().x.sub(x_t);
                d.axpy(-e, eta_t);
                Ok(d.norm() / e)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(eps
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let v: Vec<f64> = per_replica.iter().map(|r| r[i]).collect();
            let (residual, stderr) = mean_stderr(&v);
            FiniteDifferenceRow { eps: e, residual, stderr }
        })
        .collect())
}

/// Outcome of `|η^h(t)|₂ <= e^{(‖DF‖₀²/4 - 1)t} |h|₂` along sampled paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub rate: f64,
    pub max_ratio: f64,
    pub violations: usize,
    pub checked: usize,
    pub slack: f64,
}

/// Checks the derivative-flow envelope at every step, every replica and
/// every direction in `hs`. A violation is a ratio above `1 + slack`.
pub fn derivative_envelope_check(
    x0: &FourierState,
    hs: &[FourierState],
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
    slack: f64,
) -> Result<EnvelopeReport> {
    let rate = spec.df_sup * spec.df_sup / 4.0 - 1.0;
    let norms: Vec<f64> = hs.iter().map(FourierState::norm).collect();
    let per = replicate(replicas, |r| {
        let mut it = Integrator::new(cfg, spec)?;
        let gen = seed.with_replica(r).generator();
        let mut s = PathState::initial(x0.clone());
        let mut etas = hs.to_vec();
        let (mut worst, mut bad, mut count) = (0.0f64, 0usize, 0usize);
        for m in 0..cfg.steps() {
            it.step_coupled(&mut s, &mut etas, &gen, m)?;
            let env = (rate * s.t).exp();
            for (e, &hn) in etas.iter().zip(&norms) {
                if hn == 0.0 {
                    continue;
                }
                let ratio = e.norm() / (env * hn);
                worst = worst.max(ratio);
                bad += usize::from(ratio > 1.0 + slack);
                count += 1;
            }
        }
        Ok((worst, bad, count))
    })?;
    Ok(EnvelopeReport {
        rate,
        max_ratio: per.iter().map(|p| p.0).fold(0.0, f64::max),
        violations: per.iter().map(|p| p.1).sum(),
        checked: per.iter().map(|p| p.2).sum(),
        slack,
    })
}

/// Row of a Galerkin self-convergence study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalerkinRow {
    pub n: usize,
    /// `sup_t E|X_n(t) - X_ref(t)|₂²` with the noise restricted to shared modes.
    pub sup_mean_sq_err: f64,
    /// Standard error of the mean at the maximising time.
    pub stderr: f64,
    pub t_at_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalerkinTable {
    pub n_ref: usize,
    pub rows: Vec<GalerkinRow>,
}

impl GalerkinTable {
    /// Every consecutive drop exceeds `k` combined standard errors.
    pub fn strictly_decreasing(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let se = w[0].stderr.hypot(w[1].stderr);
            w[0].sup_mean_sq_err - w[1].sup_mean_sq_err > k * se
        })
    }

    /// No consecutive increase beyond `k` combined standard errors.
    pub fn nonincreasing(&self, k: f64) -> bool {
        self.rows.windows(2).all(|w| {
            let se = w[0].stderr.hypot(w[1].stderr);
            w[1].sup_mean_sq_err - w[0].sup_mean_sq_err <= k * se
        })
    }
}

/// Runs every cutoff in `n_list` and a reference at `2 max(n_list)` on one
/// noise tape. Mode `k` receives the same normals at every level, so the
/// error `|X_n - X_ref|₂²` is measured after removing the reference noise
/// on modes `|k| > n`, i.e. as `|Y_n - Y_ref|₂²` with `Y = X - W_A`. For
/// `F = 0` this is exactly the projection tail of `e^{tA} x₀`.
pub fn galerkin_convergence(
    x0: &FourierState,
    n_list: &[usize],
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<GalerkinTable> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::InvalidArgument(
            "cutoff list must be nonempty, positive and strictly ascending".into(),
        ));
    }
    if replicas < 2 {
        return Err(Error::InvalidArgument("need at least two replicas".into()));
    }
    let n_ref = 2 * n_list[n_list.len() - 1];
    let ref_cfg = cfg.clone().with_cutoff(n_ref)?;
    let cfgs = n_list
        .iter()
        .map(|&n| cfg.clone().with_cutoff(n))
        .collect::<Result<Vec<_>>>()?;
    let steps = cfg.steps() as usize;
    let levels = n_list.len();

    let per = replicate(replicas, |r| {
        let gen = seed.with_replica(r).generator();
        let mut it_ref = Integrator::new(&ref_cfg, spec)?;
        let mut its = cfgs.iter().map(|c| Integrator::new(c, spec)).collect::<Result<Vec<_>>>()?;
        let mut s_ref = PathState::initial(x0.with_cutoff(n_ref));
        let mut ss: Vec<PathState> = n_list.iter().map(|&n| PathState::initial(x0.with_cutoff(n))).collect();
        let mut err = vec![0.0; (steps + 1) * levels];
        let record = |err: &mut [f64], j: usize, s_ref: &PathState, ss: &[PathState]| {
            for (l, s) in ss.iter().enumerate() {
                err[j * levels + l] = y_gap_sq(&s.y, &s_ref.y);
            }
        };
        record(&mut err, 0, &s_ref, &ss);
        for m in 0..steps {
            it_ref.draw(&gen, m as u64);
            let z = it_ref.normals().to_vec();
            it_ref.advance(&mut s_ref, &mut [], m as u64)?;
            for ((it, s), &n) in its.iter_mut().zip(ss.iter_mut()).zip(n_list) {
                it.set_normals(&z[n_ref - n..=n_ref + n]);
                it.advance(s, &mut [], m as u64)?;
            }
            record(&mut err, m + 1, &s_ref, &ss);
        }
        Ok(err)
    })?;

    let mut rows = Vec::with_capacity(levels);
    for (l, &n) in n_list.iter().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for j in 0..=steps {
            let v: Vec<f64> = per.iter().map(|e| e[j * levels + l]).collect();
            let (mean, se) = mean_stderr(&v);
            if mean > best.0 {
                best = (mean, se, j as f64 * cfg.dt);
            }
        }
        rows.push(GalerkinRow {
            n,
            sup_mean_sq_err: best.0,
            stderr: best.1,
            t_at_sup: best.2,
        });
    }
    Ok(GalerkinTable { n_ref, rows })
}

/// `|a - b|₂²` with `a` zero-padded to the cutoff of `b`.
fn y_gap_sq(a: &FourierState, b: &FourierState) -> f64 {
    let (na, nb) = (a.cutoff(), b.cutoff());
    let (ac, bc) = (a.coeffs(), b.coeffs());
    let off = nb - na;
    let mut s = 0.0;
    for (i, &v) in bc.iter().enumerate() {
        let d = if i >= off && i < off + ac.len() { v - ac[i - off] } else { v };
        s += d * d;
    }
    s
}

/// Outcome of the singular variational bound for directions `D_ξ h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularBoundReport {
    /// `θ = (κ ‖DF‖₀ Γ(1/2))²`.
    pub theta: f64,
    /// `max_t |η^{D_ξ h}(t)|₂ / ((t^{-1/2} + e^{θt}) |h|₂)` over all replicas.
    pub max_ratio: f64,
    pub t_at_max: f64,
    /// Admissible ceiling `2κ` for the ratio.
    pub ceiling: f64,
    pub holds: bool,
}

/// Simulates `η` started from `D_ξ h` and tracks the ratio against
/// `(t^{-1/2} + e^{θt}) |h|₂` on `t ∈ [dt, T]`.
pub fn variational_singular_bound_check(
    x: &FourierState,
    h: &FourierState,
    cfg: &TrajectoryConfig,
    spec: &NonlinearitySpec,
    replicas: usize,
    seed: &SeedSpec,
) -> Result<SingularBoundReport> {
    let theta = (KAPPA * spec.df_sup * gamma(0.5)).powi(2);
    let hn = h.norm();
    let d0 = apply_dxi(h);
    let per = replicate(replicas, |r| {
        let mut it = Integrator::new(cfg, spec)?;
        let gen = seed.with_replica(r).generator();
        let mut s = PathState::initial(x.clone());
        let mut eta = [d0.clone()];
        let mut best = (0.0f64, 0.0f64);
        if hn == 0.0 {
            return Ok(best);
        }
        for m in 0..cfg.steps() {
            it.step_coupled(&mut s, &mut eta, &gen, m)?;
            let t = s.t;
            let ratio = eta[0].norm() / ((t.powf(-0.5) + (theta * t).exp()) * hn);
            if ratio > best.0 {
                best = (ratio, t);
            }
        }
        Ok(best)
    })?;
    let (max_ratio, t_at_max) = per
        .iter()
        .copied()
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let ceiling = 2.0 * KAPPA;
    Ok(SingularBoundReport {
        theta,
        max_ratio,
        t_at_max,
        ceiling,
        holds: max_ratio <= ceiling,
    })
}

/// Energy estimate variants for `Y = X - W_A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyForm {
    /// Bounded `F`: forcing term `‖F‖₀² ∫ e^{-2(1-ε)(t-s)} ds`.
    BoundedF,
    /// `‖DF‖₀ < 2`, `ε ∈ (‖DF‖₀²/4, 1]`: rate `1 - ε`, forcing through `|W_A|₂²`.
    SmallLipschitz,
    /// Pointwise `F`: forcing `‖DF‖₀² ∫ e^{-2(1-ε)(t-s)} |W_A(s)|₂² ds`.
    Pointwise,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub form: EnergyForm,
    pub max_ratio: f64,
    pub t_at_max: f64,
    pub violations: usize,
    pub checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub epsilon: f64,
    pub slack: f64,
    pub rows: Vec<EnergyRow>,
}

impl EnergyReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }
}

/// Relative slack budgeted for quadrature and scheme bias.
pub const ENERGY_SLACK: f64 = 0.05;

/// Evaluates, for every hypothesis flagged on `spec`, the energy inequality
/// at each recorded time. Time integrals use the left-endpoint rule on the
/// record's own grid, so the record should be dense (`stride = 1`) and the
/// initial state should not put weight on modes with `(1+k²) dt ≳ 1`.
pub fn apriori_energy_check(record: &PathRecord, spec: &NonlinearitySpec, epsilon: f64) -> Result<EnergyReport> {
    if !spec.hyp.any() {
        return Err(Error::Inapplicable("spec declares no energy hypothesis".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("ε must lie in [0, 1], got {epsilon}")));
    }
    let d2 = spec.df_sup * spec.df_sup;
    if spec.hyp.h2 && !(epsilon > d2 / 4.0) {
        return Err(Error::InvalidArgument(format!(
            "the small-Lipschitz estimate needs ε in ({}, 1], got {epsilon}",
            d2 / 4.0
        )));
    }
    let mut forms = Vec::new();
    if spec.hyp.h1 {
        forms.push(EnergyForm::BoundedF);
    }
    if spec.hyp.h2 {
        forms.push(EnergyForm::SmallLipschitz);
    }
    if spec.hyp.h3 {
        forms.push(EnergyForm::Pointwise);
    }
    let h = record.dt * record.stride as f64;
    let x0_sq = record.initial().x.norm_sq();
    let dy: Vec<f64> = record.states.iter().map(|s| apply_dxi(&s.y).norm_sq()).collect();
    let w2: Vec<f64> = record.states.iter().map(|s| s.w_conv.norm_sq()).collect();

    let rows = forms
        .into_iter()
        .map(|form| {
            let (rate, c_lhs, forcing) = match form {
                EnergyForm::BoundedF | EnergyForm::Pointwise => (2.0 * (1.0 - epsilon), 1.0, d2),
                EnergyForm::SmallLipschitz => {
                    let c = 1.0 - d2 / (4.0 * epsilon);
                    (1.0 - epsilon, c, d2 / c)
                }
            };
            let decay = (-rate * h).exp();
            let (mut i_dy, mut i_w) = (0.0, 0.0);
            let mut row = EnergyRow {
                form,
                max_ratio: 0.0,
                t_at_max: 0.0,
                violations: 0,
                checked: 0,
            };
            for (j, s) in record.states.iter().enumerate() {
                if j > 0 {
                    i_dy = decay * (i_dy + dy[j - 1] * h);
                    i_w = decay * (i_w + w2[j - 1] * h);
                }
                let t = s.t;
                let lhs = s.y.norm_sq() + c_lhs * i_dy;
                let rhs = (-rate * t).exp() * x0_sq
                    + match form {
                        EnergyForm::BoundedF => spec.f_sup * spec.f_sup * exp_integral(rate, t),
                        _ => forcing * i_w,
                    };
                row.checked += 1;
                if lhs == 0.0 {
                    continue;
                }
                let ratio = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };
                if ratio > row.max_ratio {
                    row.max_ratio = ratio;
                    row.t_at_max = t;
                }
                row.violations += usize::from(ratio > 1.0 + ENERGY_SLACK);
            }
            row
        })
        .collect();
    Ok(EnergyReport {
        epsilon,
        slack: ENERGY_SLACK,
        rows,
    })
}

/// `∫_0^t e^{-r(t-s)} ds`.
fn exp_integral(r: f64, t: f64) -> f64 {
    if r == 0.0 {
        t
    } else {
        -(-r * t).exp_m1() / r
    }
}
