use crate::error::{Error, Result};
use crate::gaussian::{CovarianceMatrix4, LocalSymplectic, StandardFormCM, TwoModeGaussian};

/// Absolute tolerance of the canonical-form conditions.
pub const DUAN_TOL: f64 = 1e-6;
/// Sectors closer than this to the vacuum variance are treated as degenerate.
const DEGENERATE_EPS: f64 = 1e-12;
const BISECTION_STEPS: usize = 200;

/// X/Y-separable covariance matrix whose X and Y sectors may have different
/// variances: `diag(n1, n2)`, `diag(m1, m2)`, mutual block `diag(c1, c2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuanFormCM {
    pub n1: f64,
    pub n2: f64,
    pub m1: f64,
    pub m2: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Result of checking the canonical-form conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DuanConditions {
    pub holds: bool,
    /// Optimal squared scale of the EPR-like operators, `a0²`.
    pub a0_squared: f64,
    /// A vacuum sector made the conditions vacuous.
    pub degenerate: bool,
    /// `(n1-½)(m2-½) - (n2-½)(m1-½)`.
    pub ratio_residual: f64,
    /// `|c1| - |c2| - sqrt((n1-½)(m1-½)) + sqrt((n2-½)(m2-½))`.
    pub correlation_residual: f64,
}

impl DuanFormCM {
    pub fn from_standard_form(sf: &StandardFormCM) -> Self {
        Self {
            n1: sf.n(),
            n2: sf.n(),
            m1: sf.m(),
            m2: sf.m(),
            c1: sf.c1(),
            c2: sf.c2(),
        }
    }

    /// Reads the six entries of an X/Y-separable matrix.
    pub fn from_cm(cm: &CovarianceMatrix4) -> Result<Self> {
        let tol = 1e-12 * cm.matrix().amax().max(1.0);
        if cm.xy_cross_magnitude() > tol {
            return Err(Error::NotDuanForm);
        }
        let s = cm.matrix();
        Ok(Self {
            n1: s[(0, 0)],
            n2: s[(1, 1)],
            m1: s[(2, 2)],
            m2: s[(3, 3)],
            c1: s[(0, 2)],
            c2: s[(1, 3)],
        })
    }

    pub fn covariance(&self) -> CovarianceMatrix4 {
        CovarianceMatrix4::from_rows([
            [self.n1, 0.0, self.c1, 0.0],
            [0.0, self.n2, 0.0, self.c2],
            [self.c1, 0.0, self.m1, 0.0],
            [0.0, self.c2, 0.0, self.m2],
        ])
        .expect("six-parameter matrix is symmetric")
    }
}

fn excess(v: f64) -> f64 {
    (v - 0.5).max(0.0)
}

/// Checks the canonical-form conditions and returns the optimal `a0²`.
pub fn duan_form_conditions(d: &DuanFormCM) -> DuanConditions {
    let (x1, y1, x2, y2) = (excess(d.n1), excess(d.n2), excess(d.m1), excess(d.m2));
    let ratio_residual = x1 * y2 - y1 * x2;
    let correlation_residual = d.c1.abs() - d.c2.abs() - (x1 * x2).sqrt() + (y1 * y2).sqrt();
    if x1 < DEGENERATE_EPS || x2 < DEGENERATE_EPS {
        return DuanConditions {
            holds: true,
            a0_squared: 1.0,
            degenerate: true,
            ratio_residual,
            correlation_residual,
        };
    }
    DuanConditions {
        holds: ratio_residual.abs() <= DUAN_TOL && correlation_residual.abs() <= DUAN_TOL,
        a0_squared: (x2 / x1).sqrt(),
        degenerate: false,
        ratio_residual,
        correlation_residual,
    }
}

/// Necessary-and-sufficient Duan witness for a matrix in canonical form.
/// Negative iff entangled.
pub fn duan_necessary(d: &DuanFormCM) -> Result<f64> {
    let cond = duan_form_conditions(d);
    if !cond.holds {
        return Err(Error::NotDuanForm);
    }
    let a2 = cond.a0_squared;
    Ok(a2 * (d.n1 + d.n2 - 1.0) + (d.m1 + d.m2 - 1.0) / a2 - 2.0 * (d.c1.abs() + d.c2.abs()))
}

/// Brings a standard-form state to canonical Duan form with one pure
/// squeezer per mode, `diag(s, 1/s)`.
///
/// With `x = s1²` and `y = s2²` the ratio condition fixes `y` for each `x`;
/// the correlation condition is then a scalar root in `ln x`, bracketed by
/// the squeezings that push a sector to the vacuum level.
pub fn unveil_by_local_squeezing(sf: &StandardFormCM) -> Result<(DuanFormCM, LocalSymplectic)> {
    let start = DuanFormCM::from_standard_form(sf);
    let cond = duan_form_conditions(&start);
    if cond.holds {
        return Ok((start, LocalSymplectic::identity()));
    }
    let (n, m) = (sf.n(), sf.m());
    let (a1, a2) = (sf.c1().abs(), sf.c2().abs());

    let y_of = |x: f64| {
        let r = (n * x - 0.5) / (n / x - 0.5);
        let h = (r - 1.0) / 2.0;
        (-h + (h * h + 4.0 * m * m * r).sqrt()) / (2.0 * m)
    };
    let residual = |lx: f64| {
        let x = lx.exp();
        let y = y_of(x);
        let s = (x * y).sqrt();
        a1 * s - a2 / s - (excess(n * x) * excess(m * y)).sqrt()
            + (excess(n / x) * excess(m / y)).sqrt()
    };

    let mut lo = (1.0 / (2.0 * n)).ln() + 1e-12;
    let mut hi = (2.0 * n).ln() - 1e-12;
    let mut r_lo = residual(lo);
    let r_hi = residual(hi);
    if !(r_lo.is_finite() && r_hi.is_finite()) || r_lo * r_hi > 0.0 {
        return Err(Error::SearchFailed(r_lo.abs().min(r_hi.abs())));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let r_mid = residual(mid);
        if r_lo * r_mid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            r_lo = r_mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let x = (0.5 * (lo + hi)).exp();
    let y = y_of(x);
    let op = LocalSymplectic::squeezing(x.sqrt(), y.sqrt())?;
    let out = DuanFormCM::from_cm(&sf.covariance().apply_local_symplectic(&op))?;
    let check = duan_form_conditions(&out);
    if !check.holds {
        return Err(Error::SearchFailed(
            check.ratio_residual.abs().max(check.correlation_residual.abs()),
        ));
    }
    Ok((out, op))
}
