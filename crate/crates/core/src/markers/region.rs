use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use super::{fidelity, w_duan, w_epr, w_phs, EprDirection, WITNESS_TOL};
use crate::error::{Error, Result};
use crate::gaussian::{StandardFormCM, TwoModeGaussian};

/// Smallest accepted side length of a region grid.
pub const MIN_REGION_RESOLUTION: usize = 8;

/// Strongest quantum property held by a balanced state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RegionLabel {
    /// EPR-Reid correlated.
    I,
    /// Duan-detected, no EPR correlation.
    II,
    /// PHS entangled with teleportation fidelity above 1/2.
    III,
    /// PHS entangled, fidelity at most 1/2.
    IV,
    /// Separable.
    V,
    /// Not a physical state.
    VI,
}

impl RegionLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionLabel::I => "I",
            RegionLabel::II => "II",
            RegionLabel::III => "III",
            RegionLabel::IV => "IV",
            RegionLabel::V => "V",
            RegionLabel::VI => "VI",
        }
    }
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Region of the balanced state `(n, n, c̃1 c_max, c̃2 c_max)` with
/// `c_max = sqrt(n² - 1/4)`.
///
/// Witness values within the tolerance of zero fall to the weaker region.
pub fn classify_region(n: f64, c1_tilde: f64, c2_tilde: f64) -> Result<RegionLabel> {
    for c in [c1_tilde, c2_tilde] {
        if !c.is_finite() {
            return Err(Error::NonFinite("normalized correlation"));
        }
        if c.abs() > 1.0 {
            return Err(Error::CorrelationRange(c));
        }
    }
    let cmax = StandardFormCM::pure_diagonal(n)?.c1();
    let sf = StandardFormCM::new(n, n, c1_tilde * cmax, c2_tilde * cmax)?;
    if !sf.is_physical() {
        return Ok(RegionLabel::VI);
    }
    let epr = w_epr(&sf, EprDirection::OneToTwo).min(w_epr(&sf, EprDirection::TwoToOne));
    if epr < -WITNESS_TOL {
        return Ok(RegionLabel::I);
    }
    if w_duan(&sf) < -WITNESS_TOL {
        return Ok(RegionLabel::II);
    }
    if w_phs(&sf) < -WITNESS_TOL {
        let quantum = fidelity(&sf).map(|f| f > 0.5 + WITNESS_TOL).unwrap_or(false);
        return Ok(if quantum {
            RegionLabel::III
        } else {
            RegionLabel::IV
        });
    }
    Ok(RegionLabel::V)
}

/// One cell of a region grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionCell {
    pub i: usize,
    pub j: usize,
    pub c1_tilde: f64,
    pub c2_tilde: f64,
    pub label: RegionLabel,
}

/// `resolution × resolution` grid over `[-1, 1]²`, row-major in `c̃2`
/// (index `j`) then `c̃1` (index `i`).
pub fn region_grid(n: f64, resolution: usize) -> Result<Vec<RegionCell>> {
    if resolution < MIN_REGION_RESOLUTION {
        return Err(Error::InvalidConfig(format!(
            "region resolution {resolution} below {MIN_REGION_RESOLUTION}"
        )));
    }
    let axis = |k: usize| -1.0 + 2.0 * k as f64 / (resolution - 1) as f64;
    (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| {
            let (j, i) = (idx / resolution, idx % resolution);
            let (c1_tilde, c2_tilde) = (axis(i), axis(j));
            classify_region(n, c1_tilde, c2_tilde).map(|label| RegionCell {
                i,
                j,
                c1_tilde,
                c2_tilde,
                label,
            })
        })
        .collect()
}
