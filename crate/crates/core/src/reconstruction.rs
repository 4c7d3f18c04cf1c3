//! Covariance-matrix estimation from one shot-noise trace and six mode traces.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::channel::{infer_transmission, InferOptions};
use crate::error::{Error, Result};
use crate::gaussian::{CovarianceMatrix4, TwoModeGaussian, VACUUM_VARIANCE};
use crate::homodyne::{HomodyneTrace, ModeSelector, TraceKind};
use crate::io::CmDocument;
use crate::markers::{classify_cm, MarkerReport};

pub const DEFAULT_BINS: usize = 32;
pub const MIN_BINS: usize = 16;
pub const MIN_SAMPLES_PER_BIN: usize = 100;
/// Fits with a larger reduced chi-square are rejected as non-stationary.
pub const MAX_CHI2_PER_DOF: f64 = 5.0;
pub const DEFAULT_RESAMPLES: usize = 200;
/// Bins whose excess kurtosis exceeds this many standard errors are flagged.
pub const KURTOSIS_FLAG_SE: f64 = 5.0;

/// Independent covariance-matrix entries in the order used by the estimator.
pub const CM_ELEMENTS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

/// How the shot-noise reference is turned into a scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CalibrationOptions {
    /// Electronic noise variance in raw units. When set it is removed from
    /// the shot reference before scaling and subtracted from fitted mode
    /// variances; when unset the electronic noise is absorbed into the shot
    /// calibration.
    pub electronic_floor_raw: Option<f64>,
}

/// Squared scale factor and calibrated electronic floor for a shot variance.
fn calibration_factor(shot_var: f64, opts: &CalibrationOptions) -> Result<(f64, f64)> {
    if !(shot_var > 0.0) {
        return Err(Error::ZeroVariance("shot-noise reference".into()));
    }
    let floor = opts.electronic_floor_raw.unwrap_or(0.0);
    if !(floor >= 0.0 && floor < shot_var) {
        return Err(Error::InvalidConfig(format!(
            "electronic floor {floor} must lie in [0, shot variance {shot_var})"
        )));
    }
    let scale2 = VACUUM_VARIANCE / (shot_var - floor);
    Ok((scale2, floor * scale2))
}

/// Rescales `trace` so that the pooled variance of `shot` maps to 1/2.
pub fn calibrate(
    trace: &HomodyneTrace,
    shot: &HomodyneTrace,
    opts: &CalibrationOptions,
) -> Result<HomodyneTrace> {
    if trace.is_empty() {
        return Err(Error::InsufficientSamples(format!("trace {} is empty", trace.kind)));
    }
    if shot.is_empty() {
        return Err(Error::InsufficientSamples("shot-noise trace is empty".into()));
    }
    let (scale2, floor) = calibration_factor(shot.pooled_variance()?, opts)?;
    let scale = scale2.sqrt();
    let carried = trace.noise_floor.unwrap_or(0.0) * scale2;
    let noise_floor = match (trace.noise_floor, opts.electronic_floor_raw) {
        (None, None) => None,
        _ => Some(carried + floor),
    };
    Ok(HomodyneTrace {
        kind: trace.kind,
        seed: trace.seed,
        calibrated: true,
        noise_floor,
        phases: trace.phases.clone(),
        values: trace.values.iter().map(|v| v * scale).collect(),
    })
}

/// Samples grouped by local-oscillator phase.
#[derive(Debug, Clone)]
struct PhaseBins {
    /// Bin averages of cos 2θ and sin 2θ.
    cos2: Vec<f64>,
    sin2: Vec<f64>,
    phases: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
}

impl PhaseBins {
    fn new(trace: &HomodyneTrace, bins: usize, min_per_bin: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidConfig("at least one phase bin is required".into()));
        }
        let mut phases = vec![Vec::new(); bins];
        let mut values = vec![Vec::new(); bins];
        for (&p, &v) in trace.phases.iter().zip(&trace.values) {
            let u = p.rem_euclid(2.0 * PI) / (2.0 * PI);
            let b = ((u * bins as f64) as usize).min(bins - 1);
            phases[b].push(p);
            values[b].push(v);
        }
        for (b, v) in values.iter().enumerate() {
            if v.len() < min_per_bin.max(2) {
                return Err(Error::InsufficientSamples(format!(
                    "trace {}: phase bin {b} holds {} samples, need {}",
                    trace.kind,
                    v.len(),
                    min_per_bin.max(2)
                )));
            }
        }
        let avg = |f: fn(f64) -> f64| -> Vec<f64> {
            phases
                .iter()
                .map(|ps| ps.iter().map(|&p| f(2.0 * p)).sum::<f64>() / ps.len() as f64)
                .collect()
        };
        Ok(Self {
            cos2: avg(f64::cos),
            sin2: avg(f64::sin),
            phases,
            values,
        })
    }

    fn counts(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }

    fn variances(&self) -> Vec<f64> {
        self.values.iter().map(|v| sample_variance(v)).collect()
    }
}

fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// Fit `v(θ) = A + B cos 2θ + C sin 2θ` of binned variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(skip)]
    pub covariance: Matrix3<f64>,
    pub chi2: f64,
    pub dof: usize,
}

impl VarianceFit {
    pub fn chi2_per_dof(&self) -> f64 {
        if self.dof == 0 {
            0.0
        } else {
            self.chi2 / self.dof as f64
        }
    }

    pub fn model(&self, theta: f64) -> f64 {
        self.a + self.b * (2.0 * theta).cos() + self.c * (2.0 * theta).sin()
    }
}

fn solve3(rows: &[(f64, f64, f64)], y: &[f64], w: &[f64]) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for ((r, &yi), &wi) in rows.iter().zip(y).zip(w) {
        let x = Vector3::new(r.0, r.1, r.2);
        ata += x * x.transpose() * wi;
        aty += x * (yi * wi);
    }
    let inv = ata.try_inverse().ok_or(Error::RankDeficient)?;
    Ok((inv * aty, inv))
}

/// Two-pass weighted fit. Bin variances `var` already have any electronic
/// floor removed; `floor` is added back for the sampling-error model.
fn fit_binned(
    var: &[f64],
    counts: &[usize],
    cos2: &[f64],
    sin2: &[f64],
    floor: f64,
) -> Result<VarianceFit> {
    let rows: Vec<_> = cos2.iter().zip(sin2).map(|(&c, &s)| (1.0, c, s)).collect();
    let ones = vec![1.0; var.len()];
    let (first, _) = solve3(&rows, var, &ones)?;
    let predict = |p: &Vector3<f64>, r: &(f64, f64, f64)| p[0] + p[1] * r.1 + p[2] * r.2;
    let se = |p: &Vector3<f64>| -> Vec<f64> {
        rows.iter()
            .zip(counts)
            .zip(var)
            .map(|((r, &n), &v)| {
                let total = predict(p, r) + floor;
                let level = if total > 0.0 { total } else { (v + floor).abs() };
                level.max(1e-300) * (2.0 / (n as f64 - 1.0)).sqrt()
            })
            .collect()
    };
    let weights: Vec<f64> = se(&first).iter().map(|s| 1.0 / (s * s)).collect();
    let (coef, cov) = solve3(&rows, var, &weights)?;
    let final_se = se(&coef);
    let chi2 = rows
        .iter()
        .zip(var)
        .zip(&final_se)
        .map(|((r, &v), &s)| ((v - predict(&coef, r)) / s).powi(2))
        .sum();
    Ok(VarianceFit {
        a: coef[0],
        b: coef[1],
        c: coef[2],
        covariance: cov,
        chi2,
        dof: var.len().saturating_sub(3),
    })
}

/// Fits the phase dependence of a trace's variance without the stationarity
/// check.
pub fn fit_variance_model(trace: &HomodyneTrace, bins: usize) -> Result<VarianceFit> {
    let pb = PhaseBins::new(trace, bins, MIN_SAMPLES_PER_BIN)?;
    fit_phase_bins(&pb, trace, bins)
}

fn fit_phase_bins(pb: &PhaseBins, trace: &HomodyneTrace, bins: usize) -> Result<VarianceFit> {
    if bins < MIN_BINS {
        return Err(Error::InsufficientSamples(format!(
            "{bins} phase bins, need at least {MIN_BINS}"
        )));
    }
    let floor = trace.noise_floor.unwrap_or(0.0);
    let raw = pb.variances();
    if raw.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroVariance(format!("trace {}", trace.kind)));
    }
    let var: Vec<f64> = raw.iter().map(|v| v - floor).collect();
    fit_binned(&var, &pb.counts(), &pb.cos2, &pb.sin2, floor)
}

/// Fitted quadrature moments of one mode with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeMoments {
    pub mode: ModeSelector,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
    pub se_var_x: f64,
    pub se_var_y: f64,
    pub se_cov_xy: f64,
    pub chi2_per_dof: f64,
}

impl ModeMoments {
    fn from_fit(mode: ModeSelector, f: &VarianceFit) -> Self {
        let c = &f.covariance;
        let sd = |x: f64| x.max(0.0).sqrt();
        Self {
            mode,
            var_x: f.a + f.b,
            var_y: f.a - f.b,
            cov_xy: f.c,
            se_var_x: sd(c[(0, 0)] + c[(1, 1)] + 2.0 * c[(0, 1)]),
            se_var_y: sd(c[(0, 0)] + c[(1, 1)] - 2.0 * c[(0, 1)]),
            se_cov_xy: sd(c[(2, 2)]),
            chi2_per_dof: f.chi2_per_dof(),
        }
    }

    /// Noise-free moments computed from a known state.
    pub fn exact<G: TwoModeGaussian + ?Sized>(state: &G, mode: ModeSelector) -> Self {
        let q = crate::homodyne::mode_moments(state, mode);
        Self {
            mode,
            var_x: q.var_x,
            var_y: q.var_y,
            cov_xy: q.cov_xy,
            se_var_x: 0.0,
            se_var_y: 0.0,
            se_cov_xy: 0.0,
            chi2_per_dof: 0.0,
        }
    }
}

/// Fits `VarX`, `VarY` and `Cov` of one mode trace.
pub fn fit_moments(trace: &HomodyneTrace, bins: usize) -> Result<ModeMoments> {
    let mode = match trace.kind {
        TraceKind::Mode(m) => m,
        TraceKind::Shot => {
            return Err(Error::InvalidConfig(
                "the shot-noise reference has no mode moments".into(),
            ))
        }
    };
    let fit = fit_variance_model(trace, bins)?;
    let chi = fit.chi2_per_dof();
    if chi > MAX_CHI2_PER_DOF {
        return Err(Error::NonStationary(chi));
    }
    Ok(ModeMoments::from_fit(mode, &fit))
}

/// Rows of the linear map from the ten CM entries to `(VarX, VarY, Cov)`.
fn design_rows(mode: ModeSelector) -> [[f64; 10]; 3] {
    let (u, v) = mode.quadrature_weights();
    let bilinear = |p: &nalgebra::Vector4<f64>, q: &nalgebra::Vector4<f64>| {
        let mut row = [0.0; 10];
        for (k, &(i, j)) in CM_ELEMENTS.iter().enumerate() {
            row[k] = if i == j {
                p[i] * q[i]
            } else {
                p[i] * q[j] + p[j] * q[i]
            };
        }
        row
    };
    [bilinear(&u, &u), bilinear(&v, &v), bilinear(&u, &v)]
}

fn cm_serialize<S: Serializer>(cm: &CovarianceMatrix4, s: S) -> std::result::Result<S::Ok, S::Error> {
    CmDocument::new(cm).serialize(s)
}

/// Estimated covariance matrix with uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconstructedCM {
    #[serde(serialize_with = "cm_serialize")]
    pub cm: CovarianceMatrix4,
    /// Standard error of every entry.
    pub errors: [[f64; 4]; 4],
    /// Weighted residual sum of squares of the 18 moments.
    pub residual: f64,
    pub dof: usize,
    /// False when a zero standard error forced an unweighted solve.
    pub weighted: bool,
    pub physical: bool,
    pub bona_fide_margin: f64,
    pub moments: Vec<ModeMoments>,
    pub gaussianity: Vec<GaussianityReport>,
}

/// Weighted least-squares inversion of six fitted mode moments.
///
/// The result is not projected onto the physical set.
pub fn assemble_cm(moments: &[ModeMoments]) -> Result<ReconstructedCM> {
    let mut ordered = Vec::with_capacity(6);
    for mode in ModeSelector::ALL {
        let mut found = moments.iter().filter(|m| m.mode == mode);
        let first = found.next().ok_or(Error::MissingMode(mode.label()))?;
        if found.next().is_some() {
            return Err(Error::InvalidConfig(format!("mode {mode} given twice")));
        }
        ordered.push(*first);
    }

    let mut a = DMatrix::<f64>::zeros(18, 10);
    let mut y = DVector::<f64>::zeros(18);
    let mut se = DVector::<f64>::zeros(18);
    for (k, m) in ordered.iter().enumerate() {
        let rows = design_rows(m.mode);
        let vals = [m.var_x, m.var_y, m.cov_xy];
        let errs = [m.se_var_x, m.se_var_y, m.se_cov_xy];
        for r in 0..3 {
            for c in 0..10 {
                a[(3 * k + r, c)] = rows[r][c];
            }
            y[3 * k + r] = vals[r];
            se[3 * k + r] = errs[r];
        }
    }
    if y.iter().any(|v| !v.is_finite()) || se.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mode moments"));
    }
    let weighted = se.iter().all(|&s| s > 0.0);
    let w = if weighted {
        se.map(|s| 1.0 / (s * s))
    } else {
        DVector::from_element(18, 1.0)
    };
    let sqrt_w = w.map(f64::sqrt);
    let aw = DMatrix::from_fn(18, 10, |i, j| a[(i, j)] * sqrt_w[i]);
    let sv = aw.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficient);
    }
    let yw = y.component_mul(&sqrt_w);
    let normal = aw.transpose() * &aw;
    let inv = normal.clone().try_inverse().ok_or(Error::RankDeficient)?;
    let x = &inv * (aw.transpose() * &yw);
    let r = &yw - &aw * &x;
    let residual = r.norm_squared();
    let dof = 18 - 10;
    let param_cov = if weighted {
        inv
    } else {
        inv * (residual / dof as f64)
    };

    let mut m = nalgebra::Matrix4::zeros();
    let mut errors = [[0.0; 4]; 4];
    for (k, &(i, j)) in CM_ELEMENTS.iter().enumerate() {
        m[(i, j)] = x[k];
        m[(j, i)] = x[k];
        let e = param_cov[(k, k)].max(0.0).sqrt();
        errors[i][j] = e;
        errors[j][i] = e;
    }
    let cm = CovarianceMatrix4::new(m)?;
    let bf = cm.bona_fide();
    Ok(ReconstructedCM {
        cm,
        errors,
        residual,
        dof,
        weighted,
        physical: bf.physical,
        bona_fide_margin: bf.margin,
        moments: ordered,
        gaussianity: Vec::new(),
    })
}

/// Excess kurtosis of one phase bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinKurtosis {
    pub phase_center: f64,
    pub samples: usize,
    pub excess_kurtosis: f64,
    pub standard_error: f64,
    pub flagged: bool,
}

/// Per-bin Gaussianity test of one trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianityReport {
    pub trace: String,
    pub flagged: bool,
    pub bins: Vec<BinKurtosis>,
}

/// Excess kurtosis per phase bin of samples standardized by the fitted
/// variance model, with standard error `sqrt(24/N)`.
pub fn gaussianity_check(trace: &HomodyneTrace, bins: usize) -> Result<GaussianityReport> {
    let pb = PhaseBins::new(trace, bins, 8)?;
    let model = if bins >= 3 {
        let var = pb.variances();
        let ones = vec![1.0; bins];
        let rows: Vec<_> = pb.cos2.iter().zip(&pb.sin2).map(|(&c, &s)| (1.0, c, s)).collect();
        solve3(&rows, &var, &ones).ok().map(|(p, _)| p)
    } else {
        None
    };
    let per_bin: Vec<BinKurtosis> = (0..bins)
        .map(|b| {
            let ps = &pb.phases[b];
            let vs = &pb.values[b];
            let bin_var = sample_variance(vs);
            let z: Vec<f64> = ps
                .iter()
                .zip(vs)
                .map(|(&p, &v)| {
                    let s2 = model
                        .map(|c| c[0] + c[1] * (2.0 * p).cos() + c[2] * (2.0 * p).sin())
                        .filter(|&s2| s2 > 0.0)
                        .unwrap_or(bin_var);
                    v / s2.sqrt()
                })
                .collect();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let (m2, m4) = z.iter().fold((0.0, 0.0), |(a, b), x| {
                let d = (x - mean) * (x - mean);
                (a + d, b + d * d)
            });
            let (m2, m4) = (m2 / n, m4 / n);
            let excess = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { f64::NAN };
            let se = (24.0 / n).sqrt();
            BinKurtosis {
                phase_center: 2.0 * PI * (b as f64 + 0.5) / bins as f64,
                samples: z.len(),
                excess_kurtosis: excess,
                standard_error: se,
                flagged: !(excess.abs() <= KURTOSIS_FLAG_SE * se),
            }
        })
        .collect();
    Ok(GaussianityReport {
        trace: trace.kind.to_string(),
        flagged: per_bin.iter().any(|b| b.flagged),
        bins: per_bin,
    })
}

/// Shot reference and the six mode traces of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub shot: HomodyneTrace,
    /// In [`ModeSelector::ALL`] order.
    pub modes: Vec<HomodyneTrace>,
}

impl TraceSet {
    pub fn new(traces: Vec<HomodyneTrace>) -> Result<Self> {
        let mut shot = None;
        let mut slots: Vec<Option<HomodyneTrace>> = vec![None; 6];
        for t in traces {
            match t.kind {
                TraceKind::Shot => {
                    if shot.replace(t).is_some() {
                        return Err(Error::InvalidConfig("two shot-noise traces".into()));
                    }
                }
                TraceKind::Mode(m) => {
                    let k = ModeSelector::ALL.iter().position(|x| *x == m).unwrap();
                    if slots[k].replace(t).is_some() {
                        return Err(Error::InvalidConfig(format!("mode {m} given twice")));
                    }
                }
            }
        }
        let shot = shot.ok_or_else(|| Error::InvalidConfig("missing shot-noise trace".into()))?;
        let mut modes = Vec::with_capacity(6);
        for (k, slot) in slots.into_iter().enumerate() {
            modes.push(slot.ok_or(Error::MissingMode(ModeSelector::ALL[k].label()))?);
        }
        Ok(Self { shot, modes })
    }

    /// Pairs of traces that carry the same generator seed.
    pub fn seed_collisions(&self) -> Vec<(TraceKind, TraceKind)> {
        let all: Vec<&HomodyneTrace> = std::iter::once(&self.shot).chain(&self.modes).collect();
        let mut out = Vec::new();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if all[i].seed == all[j].seed {
                    out.push((all[i].kind, all[j].kind));
                }
            }
        }
        out
    }
}

/// Settings shared by the point estimate and the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineOptions {
    pub bins: usize,
    pub calibration: CalibrationOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            calibration: CalibrationOptions::default(),
        }
    }
}

/// Calibrates, fits and inverts a full acquisition.
pub fn reconstruct(set: &TraceSet, opts: &PipelineOptions) -> Result<ReconstructedCM> {
    let fitted = set
        .modes
        .par_iter()
        .map(|t| {
            let cal = calibrate(t, &set.shot, &opts.calibration)?;
            let moments = fit_moments(&cal, opts.bins)?;
            let gauss = gaussianity_check(&cal, opts.bins)?;
            Ok((moments, gauss))
        })
        .collect::<Result<Vec<_>>>()?;
    let (moments, gaussianity): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let mut rec = assemble_cm(&moments)?;
    rec.gaussianity = gaussianity;
    Ok(rec)
}

/// Bootstrap settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapOptions {
    pub resamples: usize,
    pub seed: u64,
    pub pipeline: PipelineOptions,
    /// Also infer the channel transmission of every resample.
    pub infer: Option<InferOptions>,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            resamples: DEFAULT_RESAMPLES,
            seed: 0,
            pipeline: PipelineOptions::default(),
            infer: None,
        }
    }
}

/// Point value, bootstrap mean and standard deviation of one quantity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldStat {
    pub name: String,
    pub point: f64,
    pub mean: f64,
    pub sd: f64,
    /// Resamples in which the quantity was finite.
    pub count: usize,
}

/// Markers of a reconstructed state with bootstrap uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub resamples: usize,
    /// Resamples whose reconstruction failed and were skipped.
    pub failed: usize,
    pub reconstruction: ReconstructedCM,
    pub point: MarkerReport,
    pub fields: Vec<FieldStat>,
    pub cm_mean: [[f64; 4]; 4],
    pub cm_sd: [[f64; 4]; 4],
    pub transmission: Option<FieldStat>,
}

impl BootstrapReport {
    pub fn field(&self, name: &str) -> Option<&FieldStat> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn csv_header() -> &'static str {
        "field,point,mean,sd,count"
    }

    pub fn to_csv(&self, bits: bool) -> String {
        let mut out = crate::io::csv_preamble("bootstrap", bits);
        out.push_str(Self::csv_header());
        out.push('\n');
        for f in self.fields.iter().chain(self.transmission.iter()) {
            out.push_str(&format!("{},{},{},{},{}\n", f.name, f.point, f.mean, f.sd, f.count));
        }
        out
    }

    /// Copy with entropic fields in bits.
    pub fn in_bits(&self) -> Self {
        let mut out = self.clone();
        if self.point.bits {
            return out;
        }
        out.point = self.point.in_bits();
        for f in &mut out.fields {
            if matches!(
                f.name.as_str(),
                "entropy" | "mutual_info" | "discord_meas2" | "discord_meas1"
            ) {
                let k = std::f64::consts::LN_2;
                f.point /= k;
                f.mean /= k;
                f.sd /= k;
            }
        }
        out
    }
}

fn mean_sd(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    (mean, sd, n)
}

struct Resample {
    cm: CovarianceMatrix4,
    report: MarkerReport,
    transmission: f64,
}

/// Resampled sum and sum of squares of every bin.
fn resample_bins<R: Rng>(pb: &PhaseBins, rng: &mut R) -> Vec<(f64, f64, usize)> {
    pb.values
        .iter()
        .map(|v| {
            let n = v.len();
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let x = v[rng.random_range(0..n)];
                s1 += x;
                s2 += x * x;
            }
            (s1, s2, n)
        })
        .collect()
}

fn unbiased((s1, s2, n): (f64, f64, usize)) -> f64 {
    let n = n as f64;
    (s2 - s1 * s1 / n) / (n - 1.0)
}

/// Stratified nonparametric bootstrap: every phase bin of every trace is
/// resampled with replacement and the whole pipeline is rerun.
pub fn bootstrap_markers(set: &TraceSet, opts: &BootstrapOptions) -> Result<BootstrapReport> {
    if opts.resamples < 2 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 2 resamples, got {}",
            opts.resamples
        )));
    }
    for t in std::iter::once(&set.shot).chain(&set.modes) {
        if t.pooled_variance()? == 0.0 {
            return Err(Error::ZeroVariance(format!("trace {}", t.kind)));
        }
    }
    let bins = opts.pipeline.bins;
    let reconstruction = reconstruct(set, &opts.pipeline)?;
    let point = classify_cm(&reconstruction.cm)?;
    let point_t = opts
        .infer
        .map(|io| {
            infer_transmission(&reconstruction.cm, &io)
                .map(|e| e.transmission)
                .unwrap_or(f64::NAN)
        });

    let shot_bins = PhaseBins::new(&set.shot, bins, MIN_SAMPLES_PER_BIN)?;
    let mode_bins = set
        .modes
        .iter()
        .map(|t| PhaseBins::new(t, bins, MIN_SAMPLES_PER_BIN))
        .collect::<Result<Vec<_>>>()?;

    let run = |r: usize| -> Option<Resample> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(r as u64);
        let shot = resample_bins(&shot_bins, &mut rng);
        let total = shot
            .iter()
            .fold((0.0, 0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        let (scale2, floor_cal) = calibration_factor(unbiased(total), &opts.pipeline.calibration).ok()?;
        let mut moments = Vec::with_capacity(6);
        for (t, pb) in set.modes.iter().zip(&mode_bins) {
            let stats = resample_bins(pb, &mut rng);
            let floor = t.noise_floor.unwrap_or(0.0) * scale2 + floor_cal;
            let var: Vec<f64> = stats.iter().map(|&s| unbiased(s) * scale2 - floor).collect();
            let fit = fit_binned(&var, &pb.counts(), &pb.cos2, &pb.sin2, floor).ok()?;
            let mode = match t.kind {
                TraceKind::Mode(m) => m,
                TraceKind::Shot => return None,
            };
            moments.push(ModeMoments::from_fit(mode, &fit));
        }
        let rec = assemble_cm(&moments).ok()?;
        let report = classify_cm(&rec.cm).ok()?;
        let transmission = opts
            .infer
            .map(|io| {
                infer_transmission(&rec.cm, &io)
                    .map(|e| e.transmission)
                    .unwrap_or(f64::NAN)
            })
            .unwrap_or(f64::NAN);
        Some(Resample {
            cm: rec.cm,
            report,
            transmission,
        })
    };
    let results: Vec<Option<Resample>> = (0..opts.resamples).into_par_iter().map(run).collect();
    let ok: Vec<Resample> = results.into_iter().flatten().collect();
    let failed = opts.resamples - ok.len();

    let point_fields = point.numeric_fields();
    let mut fields: Vec<FieldStat> = MarkerReport::CSV_COLUMNS[..point_fields.len()]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (mean, sd, count) = mean_sd(ok.iter().map(|s| s.report.numeric_fields()[k]));
            FieldStat {
                name: (*name).into(),
                point: point_fields[k],
                mean,
                sd,
                count,
            }
        })
        .collect();
    let photons = |r: &MarkerReport| (r.n + r.m - 1.0) / 2.0;
    let (mean, sd, count) = mean_sd(ok.iter().map(|s| photons(&s.report)));
    fields.push(FieldStat {
        name: "mean_photon_number".into(),
        point: photons(&point),
        mean,
        sd,
        count,
    });
    let mut cm_mean = [[0.0; 4]; 4];
    let mut cm_sd = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let (mean, sd, _) = mean_sd(ok.iter().map(|s| s.cm.matrix()[(i, j)]));
            cm_mean[i][j] = mean;
            cm_sd[i][j] = sd;
        }
    }
    let transmission = point_t.map(|p| {
        let (mean, sd, count) = mean_sd(ok.iter().map(|s| s.transmission));
        FieldStat {
            name: "T".into(),
            point: p,
            mean,
            sd,
            count,
        }
    });
    Ok(BootstrapReport {
        resamples: opts.resamples,
        failed,
        reconstruction,
        point,
        fields,
        cm_mean,
        cm_sd,
        transmission,
    })
}
