//! Cylindrical Wiener increments and exact sampling of the stochastic
//! convolution `W_A(t) = ∫_0^t e^{(t-s)A} dW(s)`.
//!
//! Every Gaussian draw is a pure function of
//! `(master_seed, replica_id, stream_tag, step_index, mode)`: the key is
//! hashed from the first three, the counter holds the last two, and a
//! Philox4x32-10 block is mapped to a normal by Box-Muller. Results are
//! therefore independent of evaluation order and worker count, and the
//! draw for mode `k` is shared by every Galerkin cutoff `n >= |k|`.

use serde::{Deserialize, Serialize};

use crate::spectral::{lambda, FourierState};

/// Disjoint random streams used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamTag {
    PathNoise,
    InitialCondition,
    Subsampling,
}

impl StreamTag {
    fn code(self) -> u64 {
        match self {
            StreamTag::PathNoise => 0x7061_7468,
            StreamTag::InitialCondition => 0x696e_6974,
            StreamTag::Subsampling => 0x7375_6273,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StreamTag::PathNoise => "path_noise",
            StreamTag::InitialCondition => "initial_condition",
            StreamTag::Subsampling => "subsampling",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replica_id: u64,
    pub stream_tag: StreamTag,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replica_id: u64, stream_tag: StreamTag) -> Self {
        Self {
            master_seed,
            replica_id,
            stream_tag,
        }
    }

    pub fn path(master_seed: u64, replica_id: u64) -> Self {
        Self::new(master_seed, replica_id, StreamTag::PathNoise)
    }

    pub fn with_replica(self, replica_id: u64) -> Self {
        Self { replica_id, ..self }
    }

    pub fn with_tag(self, stream_tag: StreamTag) -> Self {
        Self { stream_tag, ..self }
    }

    /// Derives a fresh master seed, used to give nested estimates their own streams.
    pub fn derive(self, salt: u64) -> u64 {
        splitmix64(splitmix64(self.master_seed ^ salt.rotate_left(17)) ^ self.replica_id)
    }

    pub fn generator(&self) -> Philox {
        let k = splitmix64(
            splitmix64(self.master_seed)
                ^ splitmix64(self.replica_id.wrapping_add(0x5851_f42d_4c95_7f2d))
                ^ self.stream_tag.code().wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        Philox {
            key: [k as u32, (k >> 32) as u32],
        }
    }
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds, keyed per `(master_seed, replica, stream)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Philox {
    key: [u32; 2],
}

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

impl Philox {
    pub fn from_key(key: [u32; 2]) -> Self {
        Self { key }
    }

    #[inline]
    pub fn block(&self, ctr: [u32; 4]) -> [u32; 4] {
        let mut c = ctr;
        let mut k = self.key;
        for round in 0..10 {
            if round > 0 {
                k[0] = k[0].wrapping_add(PHILOX_W0);
                k[1] = k[1].wrapping_add(PHILOX_W1);
            }
            let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
            let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
            c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
        }
        c
    }

    /// Uniform on the open interval (0, 1) with 53 random bits.
    #[inline]
    pub fn uniform(&self, step: u64, mode: i64, lane: u32) -> f64 {
        self.uniform_pair(step, mode, lane).0
    }

    /// Both 53-bit uniforms carried by one block.
    #[inline]
    fn uniform_pair(&self, step: u64, mode: i64, lane: u32) -> (f64, f64) {
        let b = self.block([step as u32, (step >> 32) as u32, mode as i32 as u32, lane]);
        let to_unit = |hi: u32, lo: u32| {
            let bits = ((hi as u64) << 32 | lo as u64) >> 11;
            (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
        };
        (to_unit(b[0], b[1]), to_unit(b[2], b[3]))
    }

    /// Standard normal for `(step, mode, lane)`. Modes `k` and `-k` share the
    /// Box-Muller pair of the block at `|k|`: the cosine branch goes to
    /// `k >= 0`, the sine branch to `k < 0`.
    #[inline]
    pub fn normal(&self, step: u64, mode: i64, lane: u32) -> f64 {
        let (c, s) = self.normal_pair(step, mode.unsigned_abs() as i64, lane);
        if mode >= 0 {
            c
        } else {
            s
        }
    }

    #[inline]
    fn normal_pair(&self, step: u64, k: i64, lane: u32) -> (f64, f64) {
        let (u1, u2) = self.uniform_pair(step, k, lane);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        (r * c, r * s)
    }

    /// Fills `out` (indexed `k + n`) with the standard normals of one step.
    pub fn fill_normals(&self, step: u64, out: &mut [f64]) {
        let n = out.len() / 2;
        out[n] = self.normal_pair(step, 0, 0).0;
        for k in 1..=n {
            let (c, s) = self.normal_pair(step, k as i64, 0);
            out[n + k] = c;
            out[n - k] = s;
        }
    }
}

/// One increment of the cylindrical Wiener process over `dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub dt: f64,
    pub coeffs: FourierState,
}

/// Independent `N(0, dt)` increments `β_k(t + dt) - β_k(t)` for `|k| <= n`.
///
/// # Panics
/// If `dt <= 0`.
pub fn wiener_increment(dt: f64, n: usize, seed: &SeedSpec, step_index: u64) -> NoiseIncrement {
    assert!(dt > 0.0, "increment length must be positive");
    let g = seed.generator();
    let mut coeffs = FourierState::zeros(n);
    g.fill_normals(step_index, coeffs.coeffs_mut());
    coeffs.scale(dt.sqrt());
    NoiseIncrement { dt, coeffs }
}

/// Variance of the exact OU innovation of mode `k` over `dt`:
/// `(1 - e^{-2(1+k²)dt}) / (2(1+k²))`.
pub fn innovation_variance(k: i64, dt: f64) -> f64 {
    let l = lambda(k);
    -(-2.0 * l * dt).exp_m1() / (2.0 * l)
}

/// Stationary variance `1/(2(1+k²))` of mode `k` of `W_A`.
pub fn stationary_variance(k: i64) -> f64 {
    0.5 / lambda(k)
}

/// `Σ_{|k|<=n} 1/(2(1+k²))`, the stationary value of `E|W_A|₂²`.
pub fn stationary_energy(n: usize) -> f64 {
    let n = n as i64;
    (-n..=n).map(stationary_variance).sum()
}

/// Advances `W_A` by `dt` with the distribution-exact OU recursion
/// `w_k <- e^{-(1+k²)dt} w_k + g_k`.
///
/// # Panics
/// If `dt <= 0`.
pub fn stoch_conv_step(w: &FourierState, dt: f64, seed: &SeedSpec, step_index: u64) -> FourierState {
    assert!(dt > 0.0, "time step must be positive");
    let g = seed.generator();
    let mut out = w.clone();
    for (k, c) in w.modes() {
        let z = g.normal(step_index, k, 0);
        let decay = (-lambda(k) * dt).exp();
        out.set(k, decay * c + innovation_variance(k, dt).sqrt() * z);
    }
    out
}

/// A draw from the stationary law of `W_A`: independent `N(0, 1/(2(1+k²)))`.
pub fn stationary_conv_sample(n: usize, seed: &SeedSpec) -> FourierState {
    let g = seed.generator();
    let mut out = FourierState::zeros(n);
    let nn = n as i64;
    for k in -nn..=nn {
        out.set(k, stationary_variance(k).sqrt() * g.normal(0, k, 0));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn var_and_stderr(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m2: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let mean = m2.iter().sum::<f64>() / n;
        let sd = (m2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (mean, sd / n.sqrt())
    }

    #[test]
    fn philox_known_answers() {
        let zero = Philox::from_key([0, 0]).block([0, 0, 0, 0]);
        assert_eq!(zero, [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]);
        let ones = Philox::from_key([u32::MAX, u32::MAX]).block([u32::MAX; 4]);
        assert_eq!(ones, [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]);
        let pi = Philox::from_key([0xa409_3822, 0x299f_31d0])
            .block([0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344]);
        assert_eq!(pi, [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]);
    }

    #[test]
    fn increments_are_deterministic() {
        let s = SeedSpec::path(42, 7);
        assert_eq!(wiener_increment(0.1, 5, &s, 3), wiener_increment(0.1, 5, &s, 3));
        assert_ne!(wiener_increment(0.1, 5, &s, 3), wiener_increment(0.1, 5, &s, 4));
        assert_ne!(
            wiener_increment(0.1, 5, &s, 3),
            wiener_increment(0.1, 5, &s.with_tag(StreamTag::Subsampling), 3)
        );
        // mode draws do not depend on the cutoff
        let small = wiener_increment(0.1, 2, &s, 9);
        let large = wiener_increment(0.1, 6, &s, 9);
        for k in -2..=2 {
            assert_eq!(small.coeffs.get(k), large.coeffs.get(k));
        }
    }

    #[test]
    fn increment_variance_and_independence() {
        let reps = 100_000u64;
        let draws: Vec<NoiseIncrement> = (0..reps)
            .map(|r| wiener_increment(1.0, 1, &SeedSpec::path(11, r), 0))
            .collect();
        let m0: Vec<f64> = draws.iter().map(|d| d.coeffs.get(0)).collect();
        let (v, se) = var_and_stderr(&m0);
        assert!((v - 1.0).abs() <= 3.0 * se, "variance {v} ± {se}");
        let prod: Vec<f64> = draws.iter().map(|d| d.coeffs.get(1) * d.coeffs.get(-1)).collect();
        let mean = prod.iter().sum::<f64>() / reps as f64;
        let sd = (prod.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        assert!(mean.abs() <= 3.0 * sd / (reps as f64).sqrt(), "covariance {mean}");
    }

    #[test]
    fn ou_recursion_constants() {
        let ln2 = std::f64::consts::LN_2;
        assert_relative_eq!((-lambda(0) * ln2).exp(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(innovation_variance(0, ln2), 3.0 / 8.0, epsilon = 1e-15);
        assert_relative_eq!(stationary_variance(2), 0.1, epsilon = 1e-15);
        // large dt: one step is a stationary draw
        assert_relative_eq!(innovation_variance(3, 50.0), stationary_variance(3), epsilon = 1e-15);
    }

    #[test]
    fn stationary_sample_variances() {
        let reps = 100_000u64;
        let samples: Vec<FourierState> = (0..reps)
            .map(|r| stationary_conv_sample(64, &SeedSpec::new(5, r, StreamTag::InitialCondition)))
            .collect();
        for (k, want) in [(0i64, 0.5), (2, 0.1)] {
            let xs: Vec<f64> = samples.iter().map(|s| s.get(k)).collect();
            let (v, se) = var_and_stderr(&xs);
            assert!((v - want).abs() <= 3.0 * se, "mode {k}: {v} vs {want} ± {se}");
        }
        let energies: Vec<f64> = samples.iter().map(|s| s.norm_sq()).collect();
        let mean = energies.iter().sum::<f64>() / reps as f64;
        let sd = (energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        let want: f64 = (-64i64..=64).map(|k| 1.0 / (2.0 * (1.0 + (k * k) as f64))).sum();
        assert_relative_eq!(stationary_energy(64), want, max_relative = 1e-14);
        assert!((mean - want).abs() <= 3.0 * sd / (reps as f64).sqrt());
    }

    #[test]
    fn recursion_converges_to_stationary_law() {
        let reps = 20_000u64;
        let dt = 0.05;
        let finals: Vec<FourierState> = (0..reps)
            .map(|r| {
                let seed = SeedSpec::path(99, r);
                let mut w = FourierState::zeros(3);
                for step in 0..200 {
                    w = stoch_conv_step(&w, dt, &seed, step);
                }
                w
            })
            .collect();
        for k in -3..=3i64 {
            let xs: Vec<f64> = finals.iter().map(|s| s.get(k)).collect();
            let (v, se) = var_and_stderr(&xs);
            assert!((v - stationary_variance(k)).abs() <= 3.0 * se, "mode {k}");
        }
    }
}
