//! Entanglement witnesses, teleportation fidelity, mutual information and
//! Gaussian discord of two-mode states.
//!
//! Every witness is written so that a negative value signals the quantum
//! property. Entropic quantities are in nats.

mod duan;
mod region;

pub use duan::{
    duan_form_conditions, duan_necessary, unveil_by_local_squeezing, DuanConditions, DuanFormCM,
};
pub use region::{classify_region, region_grid, RegionCell, RegionLabel, MIN_REGION_RESOLUTION};

use std::f64::consts::LN_2;

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{
    entropy_f, CovarianceMatrix4, StandardFormCM, TwoModeGaussian, PHYSICAL_TOL, VACUUM_VARIANCE,
};

/// Strict threshold used when turning a witness value into a flag.
pub const WITNESS_TOL: f64 = 1e-9;

/// Direction of an EPR-Reid (steering) test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EprDirection {
    /// Mode 1 inferred from measurements on mode 2.
    OneToTwo,
    TwoToOne,
}

/// Subsystem on which the discord measurement is performed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measured {
    One,
    Two,
}

/// PHS (partial transposition) witness. Negative iff entangled.
pub fn w_phs(sf: &StandardFormCM) -> f64 {
    let (n, m, c1, c2) = (sf.n(), sf.m(), sf.c1(), sf.c2());
    let nm = n * m;
    4.0 * (nm - c1 * c1) * (nm - c2 * c2) + 0.25 - (n * n + m * m) - 2.0 * (c1 * c2).abs()
}

/// Duan witness on the standard form. Negative is sufficient for entanglement.
pub fn w_duan(sf: &StandardFormCM) -> f64 {
    let dn = (sf.n() - VACUUM_VARIANCE).max(0.0);
    let dm = (sf.m() - VACUUM_VARIANCE).max(0.0);
    2.0 * (dn * dm).sqrt() - (sf.c1() - sf.c2())
}

/// EPR-Reid witness in the given direction.
pub fn w_epr(sf: &StandardFormCM, direction: EprDirection) -> f64 {
    let (n, m, c1, c2) = (sf.n(), sf.m(), sf.c1(), sf.c2());
    let nm = n * m;
    let prefactor = match direction {
        EprDirection::OneToTwo => n * n,
        EprDirection::TwoToOne => m * m,
    };
    prefactor * (1.0 - c1 * c1 / nm) * (1.0 - c2 * c2 / nm) - 0.25
}

/// Coherent-state teleportation fidelity with this state as resource.
pub fn fidelity(sf: &StandardFormCM) -> Result<f64> {
    let s = sf.n() + sf.m();
    let a = 1.0 + s - 2.0 * sf.c1();
    let b = 1.0 + s + 2.0 * sf.c2();
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::Unphysical(format!(
            "fidelity radicands {a} and {b} must be positive"
        )));
    }
    Ok(1.0 / (a * b).sqrt())
}

/// Same fidelity written as a single square root of the expanded product.
pub fn fidelity_expanded(sf: &StandardFormCM) -> Result<f64> {
    let s = sf.n() + sf.m();
    let (c1, c2) = (sf.c1(), sf.c2());
    let radicand = 1.0 + s * s + 2.0 * (c2 - c1) * (1.0 + s) + 2.0 * (s - 2.0 * c1 * c2);
    if radicand <= 0.0 {
        return Err(Error::Unphysical(format!(
            "fidelity radicand {radicand} must be positive"
        )));
    }
    Ok(1.0 / radicand.sqrt())
}

/// Fidelity for a general covariance matrix, `1/sqrt(det(I + ZαZ + β - Zγ - γᵀZ))`
/// with `Z = diag(1, -1)`. Depends on the local frame, unlike the witnesses.
pub fn fidelity_cm(cm: &CovarianceMatrix4) -> Result<f64> {
    let z = Matrix2::new(1.0, 0.0, 0.0, -1.0);
    let g = cm.gamma();
    let k = Matrix2::identity() + z * cm.alpha() * z + cm.beta() - z * g - g.transpose() * z;
    let det = k.determinant();
    if det <= 0.0 {
        return Err(Error::Unphysical(format!(
            "fidelity determinant {det} must be positive"
        )));
    }
    Ok(1.0 / det.sqrt())
}

/// Quantum mutual information.
pub fn mutual_information(sf: &StandardFormCM) -> Result<f64> {
    let s = sf.symplectic()?;
    Ok(entropy_f(sf.n())? + entropy_f(sf.m())? - entropy_f(s.d_plus)? - entropy_f(s.d_minus)?)
}

/// Gaussian discord with the measurement on `measured`.
pub fn discord(sf: &StandardFormCM, measured: Measured) -> Result<f64> {
    let (a, b) = match measured {
        Measured::Two => (sf.n(), sf.m()),
        Measured::One => (sf.m(), sf.n()),
    };
    let cc = sf.c1() * sf.c2();
    let inner = (a + 2.0 * a * b + 2.0 * cc) / (1.0 + 2.0 * b);
    if inner < VACUUM_VARIANCE - PHYSICAL_TOL {
        return Err(Error::Unphysical(format!(
            "discord conditional variance {inner} below 1/2"
        )));
    }
    let s = sf.symplectic()?;
    Ok(entropy_f(b)? - entropy_f(s.d_plus)? - entropy_f(s.d_minus)? + entropy_f(inner)?)
}

/// Every scalar marker of one state.
///
/// Quantities that cannot be evaluated for an unphysical state are NaN
/// (serialized as JSON `null`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkerReport {
    pub n: f64,
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    pub mu: f64,
    pub entropy: f64,
    pub w_phs: f64,
    pub w_duan: f64,
    pub w_epr_1to2: f64,
    pub w_epr_2to1: f64,
    pub fidelity: f64,
    pub mutual_info: f64,
    pub discord_meas2: f64,
    pub discord_meas1: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    #[serde(rename = "I3")]
    pub i3: f64,
    #[serde(rename = "I4")]
    pub i4: f64,
    pub bona_fide_margin: f64,
    pub physical: bool,
    pub entangled_phs: bool,
    pub duan_sufficient: bool,
    pub epr_1to2: bool,
    pub epr_2to1: bool,
    pub fidelity_quantum: bool,
    /// `c1 c2 > 0`: the discord closed form is evaluated as written but was
    /// derived for anticorrelated states.
    pub discord_sign_caveat: bool,
    /// Entropic fields are in bits instead of nats.
    pub bits: bool,
}

impl MarkerReport {
    /// Column order of [`MarkerReport::csv_row`].
    pub const CSV_COLUMNS: [&'static str; 29] = [
        "n",
        "m",
        "c1",
        "c2",
        "mu",
        "entropy",
        "w_phs",
        "w_duan",
        "w_epr_1to2",
        "w_epr_2to1",
        "fidelity",
        "mutual_info",
        "discord_meas2",
        "discord_meas1",
        "d_plus",
        "d_minus",
        "I1",
        "I2",
        "I3",
        "I4",
        "bona_fide_margin",
        "physical",
        "entangled_phs",
        "duan_sufficient",
        "epr_1to2",
        "epr_2to1",
        "fidelity_quantum",
        "discord_sign_caveat",
        "bits",
    ];

    pub fn csv_header() -> String {
        Self::CSV_COLUMNS.join(",")
    }

    pub fn csv_row(&self) -> String {
        let nums = self.numeric_fields();
        let flags = [
            self.physical,
            self.entangled_phs,
            self.duan_sufficient,
            self.epr_1to2,
            self.epr_2to1,
            self.fidelity_quantum,
            self.discord_sign_caveat,
            self.bits,
        ];
        nums.iter()
            .map(|x| format!("{x}"))
            .chain(flags.iter().map(|b| b.to_string()))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Numeric fields in CSV column order.
    pub fn numeric_fields(&self) -> [f64; 21] {
        [
            self.n,
            self.m,
            self.c1,
            self.c2,
            self.mu,
            self.entropy,
            self.w_phs,
            self.w_duan,
            self.w_epr_1to2,
            self.w_epr_2to1,
            self.fidelity,
            self.mutual_info,
            self.discord_meas2,
            self.discord_meas1,
            self.d_plus,
            self.d_minus,
            self.i1,
            self.i2,
            self.i3,
            self.i4,
            self.bona_fide_margin,
        ]
    }

    /// Copy with entropy, mutual information and discord converted to bits.
    pub fn in_bits(&self) -> Self {
        if self.bits {
            return *self;
        }
        Self {
            entropy: self.entropy / LN_2,
            mutual_info: self.mutual_info / LN_2,
            discord_meas2: self.discord_meas2 / LN_2,
            discord_meas1: self.discord_meas1 / LN_2,
            bits: true,
            ..*self
        }
    }
}

fn or_nan(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// Full marker report for a standard-form state.
pub fn classify(sf: &StandardFormCM) -> MarkerReport {
    let bf = sf.bona_fide();
    report(sf, bf.physical, bf.margin)
}

/// Marker report for a general covariance matrix.
///
/// Physicality and fidelity are judged on the matrix itself; the remaining
/// markers are evaluated on the locally equivalent standard form.
pub fn classify_cm(cm: &CovarianceMatrix4) -> Result<MarkerReport> {
    let sf = cm.standard_form()?;
    let bf = cm.bona_fide();
    let mut r = report(&sf, bf.physical, bf.margin);
    r.fidelity = or_nan(fidelity_cm(cm));
    r.fidelity_quantum = r.physical && r.fidelity > 0.5 + WITNESS_TOL;
    Ok(r)
}

fn report(sf: &StandardFormCM, physical: bool, margin: f64) -> MarkerReport {
    let inv = sf.invariants();
    let (d_plus, d_minus) = inv.symplectic_spectrum().unwrap_or((f64::NAN, f64::NAN));
    let (entropy, mutual_info, discord_meas2, discord_meas1) = if physical {
        (
            or_nan(sf.von_neumann_entropy()),
            or_nan(mutual_information(sf)),
            or_nan(discord(sf, Measured::Two)),
            or_nan(discord(sf, Measured::One)),
        )
    } else {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    };
    let phs = w_phs(sf);
    let duan = w_duan(sf);
    let e12 = w_epr(sf, EprDirection::OneToTwo);
    let e21 = w_epr(sf, EprDirection::TwoToOne);
    let fid = or_nan(fidelity(sf));
    let mu = or_nan(sf.purity());
    MarkerReport {
        n: sf.n(),
        m: sf.m(),
        c1: sf.c1(),
        c2: sf.c2(),
        mu,
        entropy,
        w_phs: phs,
        w_duan: duan,
        w_epr_1to2: e12,
        w_epr_2to1: e21,
        fidelity: fid,
        mutual_info,
        discord_meas2,
        discord_meas1,
        d_plus,
        d_minus,
        i1: inv.i1,
        i2: inv.i2,
        i3: inv.i3,
        i4: inv.i4,
        bona_fide_margin: margin,
        physical,
        entangled_phs: physical && phs < -WITNESS_TOL,
        duan_sufficient: physical && duan < -WITNESS_TOL,
        epr_1to2: physical && e12 < -WITNESS_TOL,
        epr_2to1: physical && e21 < -WITNESS_TOL,
        fidelity_quantum: physical && fid > 0.5 + WITNESS_TOL,
        discord_sign_caveat: sf.c1() * sf.c2() > 0.0,
        bits: false,
    }
}
