//! Vacuum-bath lossy channel acting identically on both modes.

use nalgebra::Matrix4;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{CovarianceMatrix4, StandardFormCM, TwoModeGaussian, PURE_DETERMINANT};
use crate::io::csv_preamble;
use crate::markers::{classify, classify_cm, fidelity_expanded, MarkerReport};

/// Power transmission of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelSpec {
    transmission: f64,
}

impl ChannelSpec {
    pub fn new(transmission: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&transmission) {
            return Err(Error::TransmissionRange(transmission));
        }
        Ok(Self { transmission })
    }

    /// `T = exp(-Γ t)` for decay rate `gamma` (1/s) over time `t` (s).
    pub fn from_decay(gamma: f64, t: f64) -> Result<Self> {
        if !(gamma >= 0.0 && t >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "decay rate and time must be nonnegative, got {gamma}, {t}"
            )));
        }
        Self::new((-gamma * t).exp())
    }

    pub fn transmission(&self) -> f64 {
        self.transmission
    }

    /// Beam-splitter angle with `tan ζ = sqrt((1-T)/T)`.
    pub fn zeta(&self) -> f64 {
        ((1.0 - self.transmission) / self.transmission).sqrt().atan()
    }
}

/// `σ_T = (1-T) I/2 + T σ`.
pub fn evolve(cm: &CovarianceMatrix4, ch: &ChannelSpec) -> CovarianceMatrix4 {
    let t = ch.transmission;
    let out = Matrix4::identity() * (0.5 * (1.0 - t)) + cm.matrix() * t;
    CovarianceMatrix4::new(out).expect("convex mixture with the vacuum stays valid")
}

/// Closed-form evolution of the standard-form parameters.
pub fn evolve_standard(sf: &StandardFormCM, transmission: f64) -> Result<StandardFormCM> {
    let t = ChannelSpec::new(transmission)?.transmission;
    StandardFormCM::new(
        0.5 + t * (sf.n() - 0.5),
        0.5 + t * (sf.m() - 0.5),
        sf.c1() * t,
        sf.c2() * t,
    )
}

/// Loss with a separate transmission on each mode,
/// `σ' = G σ G + (I - G²)/2` with `G = diag(√T1, √T1, √T2, √T2)`.
pub fn evolve_asymmetric(cm: &CovarianceMatrix4, t1: f64, t2: f64) -> Result<CovarianceMatrix4> {
    let (t1, t2) = (
        ChannelSpec::new(t1)?.transmission,
        ChannelSpec::new(t2)?.transmission,
    );
    let g = Matrix4::from_diagonal(&nalgebra::Vector4::new(
        t1.sqrt(),
        t1.sqrt(),
        t2.sqrt(),
        t2.sqrt(),
    ));
    let out = g * cm.matrix() * g + (Matrix4::identity() - g * g) * 0.5;
    CovarianceMatrix4::new(out)
}

/// Settings of the pure-source transmission inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferOptions {
    /// Accepted deviation of `I1 + I2 + 2 I3` of the recovered source from the
    /// pure-state value 1/2.
    pub purity_tol: f64,
    /// Smallest transmission scanned.
    pub t_min: f64,
    /// Points of the logarithmic scan used to bracket roots.
    pub scan_points: usize,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            purity_tol: 1e-6,
            t_min: 1e-6,
            scan_points: 400,
        }
    }
}

impl InferOptions {
    /// Tolerance suited to covariance matrices estimated from finite data.
    pub fn for_measured_data() -> Self {
        Self {
            purity_tol: 0.5,
            ..Self::default()
        }
    }
}

/// Transmission and source state recovered under the pure-source assumption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionEstimate {
    pub transmission: f64,
    pub source: CovarianceMatrix4,
    pub source_standard: StandardFormCM,
    /// `I1 + I2 + 2 I3 - 1/2` of the recovered source.
    pub purity_residual: f64,
}

fn source_at(cm: &CovarianceMatrix4, t: f64) -> Matrix4<f64> {
    (cm.matrix() - Matrix4::identity() * (0.5 * (1.0 - t))) / t
}

fn excess_det(cm: &CovarianceMatrix4, t: f64) -> f64 {
    source_at(cm, t).determinant() - PURE_DETERMINANT
}

/// Largest `T` in `(0, 1]` for which `(σ_T - (1-T) I/2) / T` is a pure
/// physical state.
pub fn infer_transmission(
    cm: &CovarianceMatrix4,
    opts: &InferOptions,
) -> Result<TransmissionEstimate> {
    if (cm.matrix() - Matrix4::identity() * 0.5).amax() < 1e-12 {
        return Err(Error::DegenerateVacuum);
    }
    if !(opts.t_min > 0.0 && opts.t_min < 1.0 && opts.scan_points >= 2) {
        return Err(Error::InvalidConfig("transmission scan settings".into()));
    }

    let accept = |t: f64| -> Option<TransmissionEstimate> {
        let source = CovarianceMatrix4::new(source_at(cm, t)).ok()?;
        let residual = source.invariants().seralian() - 0.5;
        if residual.abs() > opts.purity_tol {
            return None;
        }
        let source_standard = source.standard_form().ok()?;
        Some(TransmissionEstimate {
            transmission: t,
            source,
            source_standard,
            purity_residual: residual,
        })
    };

    let g1 = excess_det(cm, 1.0);
    if g1.abs() <= 1e-12 {
        if let Some(est) = accept(1.0) {
            return Ok(est);
        }
    }

    let mut best = g1.abs();
    let ln_min = opts.t_min.ln();
    let step = -ln_min / (opts.scan_points - 1) as f64;
    let mut hi = 0.0f64;
    let mut g_hi = g1;
    for k in 1..opts.scan_points {
        let lo = -(k as f64) * step;
        let g_lo = excess_det(cm, lo.exp());
        if g_lo.is_finite() {
            best = best.min(g_lo.abs());
        }
        if g_hi.is_finite() && g_lo.is_finite() && g_hi * g_lo <= 0.0 {
            let t = bisect_log(cm, lo, hi, g_lo);
            if let Some(est) = accept(t) {
                return Ok(est);
            }
        }
        hi = lo;
        g_hi = g_lo;
    }
    Err(Error::NoPureSourcePreimage(best))
}

fn bisect_log(cm: &CovarianceMatrix4, mut lo: f64, mut hi: f64, mut g_lo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g_mid = excess_det(cm, mid.exp());
        if g_mid == 0.0 {
            return mid.exp();
        }
        if g_lo * g_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            g_lo = g_mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Spacing of a transmission grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    Linear,
    Log,
}

/// `count` transmissions from `max` down to `min`, inside `(0, 1]`.
pub fn transmission_grid(min: f64, max: f64, count: usize, scale: GridScale) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::InvalidConfig(format!("grid count {count} < 2")));
    }
    if !(min > 0.0 && max <= 1.0 && min < max) {
        return Err(Error::InvalidConfig(format!(
            "grid bounds must satisfy 0 < min < max <= 1, got {min}, {max}"
        )));
    }
    let last = (count - 1) as f64;
    Ok((0..count)
        .map(|k| {
            let u = k as f64 / last;
            match scale {
                GridScale::Linear => max + (min - max) * u,
                GridScale::Log => (max.ln() + (min.ln() - max.ln()) * u).exp(),
            }
        })
        .collect())
}

/// Markers of one evolved state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    #[serde(rename = "T")]
    pub transmission: f64,
    /// `(|c1_T| + |c2_T|) / 2`.
    pub mean_correlation: f64,
    pub mean_photon_number: f64,
    /// Fidelity from the expanded single-root expression.
    pub fidelity_expanded: f64,
    pub report: MarkerReport,
}

impl TrajectoryRow {
    pub fn n_t(&self) -> f64 {
        self.report.n
    }
    pub fn m_t(&self) -> f64 {
        self.report.m
    }
    pub fn c1_t(&self) -> f64 {
        self.report.c1
    }
    pub fn c2_t(&self) -> f64 {
        self.report.c2
    }
}

/// Marker values along a transmission grid, in grid order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryTable {
    pub rows: Vec<TrajectoryRow>,
}

/// Markers of `sf` evolved to every transmission of `grid`.
pub fn marker_trajectory(sf: &StandardFormCM, grid: &[f64]) -> Result<TrajectoryTable> {
    for &t in grid {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::TransmissionRange(t));
        }
    }
    let rows = grid
        .par_iter()
        .map(|&t| {
            let e = evolve_standard(sf, t)?;
            Ok(TrajectoryRow {
                transmission: t,
                mean_correlation: 0.5 * (e.c1().abs() + e.c2().abs()),
                mean_photon_number: e.mean_photon_number(),
                fidelity_expanded: fidelity_expanded(&e).unwrap_or(f64::NAN),
                report: classify(&e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryTable { rows })
}

/// Markers of a general covariance matrix evolved to every transmission of
/// `grid`. Loss does not commute with local squeezing, so the full matrix is
/// evolved before reduction to standard form.
pub fn marker_trajectory_cm(cm: &CovarianceMatrix4, grid: &[f64]) -> Result<TrajectoryTable> {
    let rows = grid
        .par_iter()
        .map(|&t| {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::TransmissionRange(t));
            }
            let e = evolve(cm, &ChannelSpec::new(t)?);
            let report = classify_cm(&e)?;
            let sf = e.standard_form()?;
            Ok(TrajectoryRow {
                transmission: t,
                mean_correlation: 0.5 * (sf.c1().abs() + sf.c2().abs()),
                mean_photon_number: sf.mean_photon_number(),
                fidelity_expanded: fidelity_expanded(&sf).unwrap_or(f64::NAN),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryTable { rows })
}

impl TrajectoryTable {
    pub fn csv_header() -> String {
        format!(
            "T,mean_correlation,mean_photon_number,fidelity_expanded,{}",
            MarkerReport::csv_header()
        )
    }

    /// Versioned comment line, header row and one row per transmission.
    pub fn to_csv(&self, bits: bool) -> String {
        let mut out = csv_preamble("trajectory", bits);
        out.push_str(&Self::csv_header());
        out.push('\n');
        for r in &self.rows {
            let rep = if bits { r.report.in_bits() } else { r.report };
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.transmission,
                r.mean_correlation,
                r.mean_photon_number,
                r.fidelity_expanded,
                rep.csv_row()
            ));
        }
        out
    }
}
