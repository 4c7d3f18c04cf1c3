//! Synthetic single-detector homodyne records of the six selectable modes.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{StandardFormCM, TwoModeGaussian, VACUUM_VARIANCE};

/// Field mode sent to the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelector {
    /// Signal.
    A,
    /// Idler.
    B,
    /// `(a + b)/√2`.
    C,
    /// `(a - b)/√2`.
    D,
    /// `(ia + b)/√2`.
    E,
    /// `(ia - b)/√2`.
    F,
}

impl ModeSelector {
    pub const ALL: [ModeSelector; 6] = [
        ModeSelector::A,
        ModeSelector::B,
        ModeSelector::C,
        ModeSelector::D,
        ModeSelector::E,
        ModeSelector::F,
    ];

    pub fn label(&self) -> char {
        match self {
            ModeSelector::A => 'a',
            ModeSelector::B => 'b',
            ModeSelector::C => 'c',
            ModeSelector::D => 'd',
            ModeSelector::E => 'e',
            ModeSelector::F => 'f',
        }
    }

    /// Coefficient vectors `(u, v)` with `X = u·K` and `Y = v·K` for
    /// `K = (X1, Y1, X2, Y2)`.
    pub fn quadrature_weights(&self) -> (Vector4<f64>, Vector4<f64>) {
        let h = FRAC_1_SQRT_2;
        match self {
            ModeSelector::A => (Vector4::new(1.0, 0.0, 0.0, 0.0), Vector4::new(0.0, 1.0, 0.0, 0.0)),
            ModeSelector::B => (Vector4::new(0.0, 0.0, 1.0, 0.0), Vector4::new(0.0, 0.0, 0.0, 1.0)),
            ModeSelector::C => (Vector4::new(h, 0.0, h, 0.0), Vector4::new(0.0, h, 0.0, h)),
            ModeSelector::D => (Vector4::new(h, 0.0, -h, 0.0), Vector4::new(0.0, h, 0.0, -h)),
            ModeSelector::E => (Vector4::new(0.0, -h, h, 0.0), Vector4::new(h, 0.0, 0.0, h)),
            ModeSelector::F => (Vector4::new(0.0, -h, -h, 0.0), Vector4::new(h, 0.0, 0.0, -h)),
        }
    }
}

impl fmt::Display for ModeSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl FromStr for ModeSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "a" | "A" => Ok(ModeSelector::A),
            "b" | "B" => Ok(ModeSelector::B),
            "c" | "C" => Ok(ModeSelector::C),
            "d" | "D" => Ok(ModeSelector::D),
            "e" | "E" => Ok(ModeSelector::E),
            "f" | "F" => Ok(ModeSelector::F),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// What a trace recorded: the blocked-input reference or one mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceKind {
    Shot,
    Mode(ModeSelector),
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceKind::Shot => f.write_str("shot"),
            TraceKind::Mode(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "shot" {
            Ok(TraceKind::Shot)
        } else {
            s.parse().map(TraceKind::Mode)
        }
    }
}

/// Second moments of one mode's quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureMoments {
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
}

impl QuadratureMoments {
    pub const VACUUM: QuadratureMoments = QuadratureMoments {
        var_x: VACUUM_VARIANCE,
        var_y: VACUUM_VARIANCE,
        cov_xy: 0.0,
    };
}

/// Quadrature moments of `mode` for the given state.
pub fn mode_moments<G: TwoModeGaussian + ?Sized>(state: &G, mode: ModeSelector) -> QuadratureMoments {
    let s = *state.covariance().matrix();
    let (u, v) = mode.quadrature_weights();
    QuadratureMoments {
        var_x: (u.transpose() * s * u)[(0, 0)],
        var_y: (v.transpose() * s * v)[(0, 0)],
        cov_xy: (u.transpose() * s * v)[(0, 0)],
    }
}

/// Variance of the quadrature measured at local-oscillator phase `theta`.
pub fn quadrature_variance(m: &QuadratureMoments, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * c * m.var_x + s * s * m.var_y + 2.0 * s * c * m.cov_xy
}

/// Detector and acquisition settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub samples_per_trace: usize,
    /// Interferometer visibility; the homodyne efficiency is its square.
    pub visibility: f64,
    /// Electronic noise level in dB below the shot noise. `None` disables it.
    pub electronic_noise_db_below_shot: Option<f64>,
    /// Raw amplitude gain of the acquisition chain.
    pub gain: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            samples_per_trace: 1_000_000,
            visibility: 0.98,
            electronic_noise_db_below_shot: Some(16.0),
            gain: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Unit visibility, no electronic noise, unit gain.
    pub fn ideal(samples_per_trace: usize, seed: u64) -> Self {
        Self {
            samples_per_trace,
            visibility: 1.0,
            electronic_noise_db_below_shot: None,
            gain: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_trace == 0 {
            return Err(Error::InvalidConfig("samples_per_trace must be positive".into()));
        }
        if !(self.visibility > 0.0 && self.visibility <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "visibility {} outside (0, 1]",
                self.visibility
            )));
        }
        if let Some(db) = self.electronic_noise_db_below_shot {
            if !db.is_finite() {
                return Err(Error::InvalidConfig("electronic noise level must be finite".into()));
            }
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::InvalidConfig(format!("gain {} must be positive", self.gain)));
        }
        Ok(())
    }

    /// `η = visibility²`.
    pub fn efficiency(&self) -> f64 {
        self.visibility * self.visibility
    }

    /// Electronic noise variance in shot-noise units.
    pub fn noise_floor(&self) -> f64 {
        self.electronic_noise_db_below_shot
            .map(|db| VACUUM_VARIANCE * 10f64.powf(-db / 10.0))
            .unwrap_or(0.0)
    }

    /// Transmission equivalent to the detector imperfections once traces are
    /// calibrated against a shot reference that includes the electronic noise.
    pub fn effective_transmission(&self) -> f64 {
        let floor = self.noise_floor();
        self.efficiency() * VACUUM_VARIANCE / (VACUUM_VARIANCE + floor)
    }
}

/// Phase-tagged quadrature samples of one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneTrace {
    pub kind: TraceKind,
    /// Seed of the generator that produced the samples.
    pub seed: u64,
    /// Values are in shot-noise units.
    pub calibrated: bool,
    /// Electronic noise variance (shot-noise units) still contained in the
    /// values and to be subtracted from fitted variances.
    pub noise_floor: Option<f64>,
    pub phases: Vec<f64>,
    pub values: Vec<f64>,
}

impl HomodyneTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Human-readable description of the phase sweep.
    pub fn sweep_description(&self) -> String {
        format!("uniform grid of {} phases over [0, 2π)", self.len())
    }

    /// Sample variance about the mean.
    pub fn pooled_variance(&self) -> Result<f64> {
        let n = self.values.len();
        if n < 2 {
            return Err(Error::InsufficientSamples(format!(
                "trace {} has {n} samples",
                self.kind
            )));
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        let ss: f64 = self.values.iter().map(|x| (x - mean) * (x - mean)).sum();
        Ok(ss / (n - 1) as f64)
    }
}

/// Seed of one trace, derived from the run seed and the trace kind.
pub fn trace_seed(seed: u64, kind: TraceKind) -> u64 {
    let salt = match kind {
        TraceKind::Shot => 0u64,
        TraceKind::Mode(m) => 1 + ModeSelector::ALL.iter().position(|x| *x == m).unwrap() as u64,
    };
    splitmix64(seed ^ splitmix64(salt.wrapping_add(0x5eed)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn generate(moments: QuadratureMoments, kind: TraceKind, cfg: &SimConfig) -> HomodyneTrace {
    let seed = trace_seed(cfg.seed, kind);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.samples_per_trace;
    let eta = cfg.efficiency();
    let floor = cfg.noise_floor();
    let mut phases = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let theta = 2.0 * PI * k as f64 / n as f64;
        let var = eta * quadrature_variance(&moments, theta) + (1.0 - eta) * VACUUM_VARIANCE + floor;
        let z: f64 = StandardNormal.sample(&mut rng);
        phases.push(theta);
        values.push(cfg.gain * var.sqrt() * z);
    }
    HomodyneTrace {
        kind,
        seed,
        calibrated: false,
        noise_floor: None,
        phases,
        values,
    }
}

/// Raw trace of `mode` with the local-oscillator phase swept over `[0, 2π)`.
pub fn simulate_trace<G: TwoModeGaussian + ?Sized>(
    state: &G,
    mode: ModeSelector,
    cfg: &SimConfig,
) -> Result<HomodyneTrace> {
    cfg.validate()?;
    if !state.is_physical() {
        return Err(Error::Unphysical("cannot simulate an unphysical state".into()));
    }
    Ok(generate(mode_moments(state, mode), TraceKind::Mode(mode), cfg))
}

/// Raw trace with the input blocked: vacuum plus electronic noise.
pub fn simulate_shot_noise(cfg: &SimConfig) -> Result<HomodyneTrace> {
    cfg.validate()?;
    Ok(generate(
        mode_moments(&StandardFormCM::vacuum(), ModeSelector::A),
        TraceKind::Shot,
        cfg,
    ))
}

/// Shot reference followed by the six mode traces.
pub fn simulate_all<G: TwoModeGaussian + Sync + ?Sized>(
    state: &G,
    cfg: &SimConfig,
) -> Result<Vec<HomodyneTrace>> {
    cfg.validate()?;
    if !state.is_physical() {
        return Err(Error::Unphysical("cannot simulate an unphysical state".into()));
    }
    let kinds: Vec<TraceKind> = std::iter::once(TraceKind::Shot)
        .chain(ModeSelector::ALL.iter().map(|m| TraceKind::Mode(*m)))
        .collect();
    Ok(kinds
        .par_iter()
        .map(|&kind| match kind {
            TraceKind::Shot => generate(QuadratureMoments::VACUUM, kind, cfg),
            TraceKind::Mode(m) => generate(mode_moments(state, m), kind, cfg),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::CovarianceMatrix4;
    use proptest::prelude::*;

    const C_REF: f64 = 0.866_025_403_784_438_6;

    fn reference() -> StandardFormCM {
        StandardFormCM::new(1.0, 1.0, C_REF, -C_REF).unwrap()
    }

    #[test]
    fn moment_examples() {
        let m = mode_moments(&reference(), ModeSelector::C);
        assert!((m.var_x - 1.866_025_403_784_438_6).abs() < 1e-12);
        assert!((m.var_y - 0.133_974_596_215_561_4).abs() < 1e-12);
        assert!(m.cov_xy.abs() < 1e-15);
        for mode in ModeSelector::ALL {
            let v = mode_moments(&StandardFormCM::vacuum(), mode);
            assert!((v.var_x - 0.5).abs() < 1e-15 && (v.var_y - 0.5).abs() < 1e-15);
            assert!(v.cov_xy.abs() < 1e-15);
        }
        // Mode e mixes X and Y sectors, so the mutual block appears in Cov.
        let e = mode_moments(&reference(), ModeSelector::E);
        assert!((e.var_x - 1.0).abs() < 1e-12 && (e.var_y - 1.0).abs() < 1e-12);
        assert!((e.cov_xy - C_REF).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        for t in [0.0, 0.3, 2.0] {
            assert!((quadrature_variance(&QuadratureMoments::VACUUM, t) - 0.5).abs() < 1e-15);
        }
        let c = QuadratureMoments {
            var_x: 1.866025,
            var_y: 0.133975,
            cov_xy: 0.0,
        };
        assert!((quadrature_variance(&c, PI / 2.0) - 0.133975).abs() < 1e-12);
        let g = QuadratureMoments {
            var_x: 1.0,
            var_y: 2.0,
            cov_xy: 0.3,
        };
        assert!((quadrature_variance(&g, PI / 4.0) - 1.8).abs() < 1e-12);
    }

    #[test]
    fn sum_rule_on_moments() {
        let s = StandardFormCM::new(1.7, 1.1, 0.6, -0.9).unwrap();
        let m = |k| mode_moments(&s, k);
        let lhs = m(ModeSelector::C).var_x + m(ModeSelector::D).var_x;
        let rhs = m(ModeSelector::A).var_x + m(ModeSelector::B).var_x;
        assert!((lhs - rhs).abs() < 1e-14);
        let lhs = m(ModeSelector::E).var_x + m(ModeSelector::F).var_x;
        let rhs = m(ModeSelector::A).var_y + m(ModeSelector::B).var_x;
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig {
            visibility: 1.2,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SimConfig {
            samples_per_trace: 0,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        let floor = SimConfig::default().noise_floor();
        assert!((floor - 0.5 * 10f64.powf(-1.6)).abs() < 1e-15);
        assert_eq!(SimConfig::ideal(10, 1).noise_floor(), 0.0);
    }

    #[test]
    fn trace_layout_and_determinism() {
        let cfg = SimConfig {
            samples_per_trace: 1000,
            seed: 42,
            ..SimConfig::default()
        };
        let a = simulate_trace(&reference(), ModeSelector::A, &cfg).unwrap();
        let b = simulate_trace(&reference(), ModeSelector::A, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        assert!(a.phases.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.phases.iter().all(|&p| (0.0..2.0 * PI).contains(&p)));
        assert_eq!(a.seed, trace_seed(42, TraceKind::Mode(ModeSelector::A)));
        let c = simulate_trace(&reference(), ModeSelector::C, &cfg).unwrap();
        assert_ne!(a.seed, c.seed);
        let all = simulate_all(&reference(), &cfg).unwrap();
        assert_eq!(all.len(), 7);
        assert_eq!(all[0].kind, TraceKind::Shot);
        assert_eq!(all[1], a);
        assert_eq!(all[0], simulate_shot_noise(&cfg).unwrap());
    }

    #[test]
    fn unphysical_state_rejected() {
        let bad = StandardFormCM::new(1.0, 1.0, 0.99, -0.99).unwrap();
        assert!(simulate_trace(&bad, ModeSelector::A, &SimConfig::default()).is_err());
        let cm = CovarianceMatrix4::vacuum();
        assert!(simulate_trace(&cm, ModeSelector::A, &SimConfig::ideal(10, 0)).is_ok());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("shot".parse::<TraceKind>().unwrap(), TraceKind::Shot);
        assert_eq!("e".parse::<TraceKind>().unwrap(), TraceKind::Mode(ModeSelector::E));
        assert!("g".parse::<TraceKind>().is_err());
        assert_eq!(TraceKind::Mode(ModeSelector::F).to_string(), "f");
    }

    #[test]
    fn effective_transmission_of_default_detector() {
        let cfg = SimConfig::default();
        let floor = cfg.noise_floor();
        let expect = 0.98 * 0.98 * 0.5 / (0.5 + floor);
        assert!((cfg.effective_transmission() - expect).abs() < 1e-15);
        assert_eq!(SimConfig::ideal(1, 0).effective_transmission(), 1.0);
    }

    proptest! {
        #[test]
        fn variance_is_inside_principal_range(
            n in 0.5f64..3.0, m in 0.5f64..3.0, t1 in -1.0f64..1.0, t2 in -1.0f64..1.0, theta in 0.0f64..6.3
        ) {
            let k = (n * m).sqrt();
            let s = StandardFormCM::new(n, m, t1 * k, t2 * k).unwrap();
            prop_assume!(s.is_physical());
            for mode in ModeSelector::ALL {
                let q = mode_moments(&s, mode);
                let v = quadrature_variance(&q, theta);
                let mid = 0.5 * (q.var_x + q.var_y);
                let r = (0.25 * (q.var_x - q.var_y).powi(2) + q.cov_xy * q.cov_xy).sqrt();
                prop_assert!(v >= mid - r - 1e-12 && v <= mid + r + 1e-12);
                // Single-mode uncertainty relation.
                prop_assert!(q.var_x * q.var_y - q.cov_xy * q.cov_xy >= 0.25 - 1e-9);
            }
        }
    }
}
