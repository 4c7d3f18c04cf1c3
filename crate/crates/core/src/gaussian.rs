//! Two-mode Gaussian covariance-matrix algebra.
//!
//! All matrices use the quadrature ordering `(X1, Y1, X2, Y2)` and shot-noise
//! units in which the vacuum quadrature variance is exactly 1/2.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Vacuum quadrature variance (standard quantum limit).
pub const VACUUM_VARIANCE: f64 = 0.5;
/// Relative tolerance on the symmetry of a covariance matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerance of the bona-fide (uncertainty principle) test.
pub const PHYSICAL_TOL: f64 = 1e-9;
/// Radicands of the symplectic spectrum above `-RADICAND_TOL` are clamped to zero.
pub const RADICAND_TOL: f64 = 1e-9;
/// Determinant of the covariance matrix of any pure two-mode Gaussian state.
pub const PURE_DETERMINANT: f64 = 1.0 / 16.0;

/// Full symmetric 4x4 covariance matrix of `(X1, Y1, X2, Y2)`.
///
/// Construction checks symmetry and strictly positive variances only;
/// unphysical matrices are representable and must be screened with
/// [`TwoModeGaussian::bona_fide`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix4 {
    matrix: Matrix4<f64>,
}

impl CovarianceMatrix4 {
    pub fn new(matrix: Matrix4<f64>) -> Result<Self> {
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("covariance matrix"));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        let asym = (matrix - matrix.transpose()).amax() / scale;
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        for i in 0..4 {
            if matrix[(i, i)] <= 0.0 {
                return Err(Error::NonPositiveDiagonal {
                    index: i,
                    value: matrix[(i, i)],
                });
            }
        }
        // Store the exactly symmetric part.
        Ok(Self {
            matrix: (matrix + matrix.transpose()) * 0.5,
        })
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Result<Self> {
        Self::new(Matrix4::from_fn(|i, j| rows[i][j]))
    }

    /// Two-mode vacuum, `I/2`.
    pub fn vacuum() -> Self {
        Self {
            matrix: Matrix4::identity() * VACUUM_VARIANCE,
        }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        let mut r = [[0.0; 4]; 4];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = self.matrix[(i, j)];
            }
        }
        r
    }

    /// Self-correlation block of mode 1.
    pub fn alpha(&self) -> Matrix2<f64> {
        self.matrix.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Self-correlation block of mode 2.
    pub fn beta(&self) -> Matrix2<f64> {
        self.matrix.fixed_view::<2, 2>(2, 2).into_owned()
    }

    /// Mutual-correlation block.
    pub fn gamma(&self) -> Matrix2<f64> {
        self.matrix.fixed_view::<2, 2>(0, 2).into_owned()
    }

    /// Largest absolute X-Y cross entry. Zero for standard-form and
    /// Duan-form matrices.
    pub fn xy_cross_magnitude(&self) -> f64 {
        [(0, 1), (0, 3), (1, 2), (2, 3)]
            .iter()
            .map(|&(i, j)| self.matrix[(i, j)].abs())
            .fold(0.0, f64::max)
    }

    /// `σ' = (S1 ⊕ S2) σ (S1 ⊕ S2)ᵀ`.
    pub fn apply_local_symplectic(&self, op: &LocalSymplectic) -> Self {
        let s = op.block_matrix();
        let out = s * self.matrix * s.transpose();
        Self {
            matrix: (out + out.transpose()) * 0.5,
        }
    }

    /// Parameters `(n, m, c1, c2)` of the standard form locally equivalent to
    /// this matrix.
    ///
    /// The labeling of the two correlation roots follows the X-X and Y-Y
    /// entries of the mutual block: `c1` takes the sign of `σ[X1,X2]` and the
    /// root closest in magnitude to it. For standard-form input this returns
    /// the original parameters up to rounding.
    pub fn standard_form(&self) -> Result<StandardFormCM> {
        let inv = self.invariants();
        if inv.i1 <= 0.0 || inv.i2 <= 0.0 {
            return Err(Error::Unphysical(
                "local block with non-positive determinant".into(),
            ));
        }
        let n = inv.i1.sqrt();
        let m = inv.i2.sqrt();
        // Bring both local blocks to multiples of the identity; the singular
        // values of the transformed mutual block are |c1| and |c2|.
        let whiten = |block: Matrix2<f64>, det_sqrt: f64| -> Result<Matrix2<f64>> {
            let eig = block.symmetric_eigen();
            if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
                return Err(Error::Unphysical("local block is not positive definite".into()));
            }
            let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| (det_sqrt / l).sqrt()));
            Ok(eig.eigenvectors * d * eig.eigenvectors.transpose())
        };
        let s1 = whiten(self.alpha(), n)?;
        let s2 = whiten(self.beta(), m)?;
        let sv = (s1 * self.gamma() * s2.transpose()).singular_values();
        let big = sv[0].max(sv[1]);
        let small = sv[0].min(sv[1]);

        let gxx = self.matrix[(0, 2)];
        let gyy = self.matrix[(1, 3)];
        let (mag1, mag2) = if gxx.abs() >= gyy.abs() {
            (big, small)
        } else {
            (small, big)
        };
        let sign1 = if gxx < 0.0 { -1.0 } else { 1.0 };
        let sign2 = if inv.i3 < 0.0 { -sign1 } else { sign1 };
        StandardFormCM::new(
            n.max(VACUUM_VARIANCE),
            m.max(VACUUM_VARIANCE),
            sign1 * mag1,
            sign2 * mag2,
        )
    }
}

/// Standard-form parameters: self blocks `n·I`, `m·I`, mutual block
/// `diag(c1, c2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StandardFormCM {
    n: f64,
    m: f64,
    c1: f64,
    c2: f64,
}

impl StandardFormCM {
    /// Physicality is not enforced here; only the shot-noise floor of the
    /// diagonal.
    pub fn new(n: f64, m: f64, c1: f64, c2: f64) -> Result<Self> {
        for (name, v) in [("n", n), ("m", m), ("c1", c1), ("c2", c2)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
        }
        for (name, v) in [("n", n), ("m", m)] {
            if v < VACUUM_VARIANCE {
                return Err(Error::BelowShotNoise { name, value: v });
            }
        }
        Ok(Self { n, m, c1, c2 })
    }

    pub fn vacuum() -> Self {
        Self {
            n: VACUUM_VARIANCE,
            m: VACUUM_VARIANCE,
            c1: 0.0,
            c2: 0.0,
        }
    }

    /// Pure fully symmetric ("diagonal") state `(n, n, c, -c)` with
    /// `c = sqrt(n² - 1/4)`.
    pub fn pure_diagonal(n: f64) -> Result<Self> {
        if !n.is_finite() {
            return Err(Error::NonFinite("n"));
        }
        if n < VACUUM_VARIANCE {
            return Err(Error::BelowShotNoise { name: "n", value: n });
        }
        let c = (n * n - 0.25).max(0.0).sqrt();
        Self::new(n, n, c, -c)
    }

    pub fn n(&self) -> f64 {
        self.n
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// `n = m` and `c1 = -c2` within `tol`.
    pub fn is_diagonal(&self, tol: f64) -> bool {
        (self.n - self.m).abs() <= tol && (self.c1 + self.c2).abs() <= tol
    }

    /// Total mean photon number `(n + m - 1) / 2`.
    pub fn mean_photon_number(&self) -> f64 {
        (self.n + self.m - 1.0) / 2.0
    }
}

/// Local symplectic invariants: `det α`, `det β`, `det γ`, `det σ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariants {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
}

impl Invariants {
    /// `I1 + I2 + 2 I3`.
    pub fn seralian(&self) -> f64 {
        self.i1 + self.i2 + 2.0 * self.i3
    }

    /// Heisenberg margin `4 I4 + 1/4 - (I1 + I2 + 2 I3)`.
    pub fn heisenberg_margin(&self) -> f64 {
        4.0 * self.i4 + 0.25 - self.seralian()
    }

    /// Symplectic eigenvalues `(d+, d-)`.
    pub fn symplectic_spectrum(&self) -> Result<(f64, f64)> {
        let delta = self.seralian();
        let mut radicand = delta * delta - 4.0 * self.i4;
        if radicand < 0.0 {
            if radicand < -RADICAND_TOL * delta.abs().max(1.0).powi(2) {
                return Err(Error::ComplexSpectrum(radicand));
            }
            radicand = 0.0;
        }
        let root = radicand.sqrt();
        let plus = (delta + root) / 2.0;
        let mut minus = (delta - root) / 2.0;
        if plus < 0.0 {
            return Err(Error::ComplexSpectrum(plus));
        }
        if minus < 0.0 {
            if minus < -RADICAND_TOL * delta.abs().max(1.0) {
                return Err(Error::ComplexSpectrum(minus));
            }
            minus = 0.0;
        }
        Ok((plus.sqrt(), minus.sqrt()))
    }
}

/// Invariants together with the symplectic spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticData {
    pub invariants: Invariants,
    pub d_plus: f64,
    pub d_minus: f64,
}

/// Outcome of the bona-fide test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonaFide {
    pub physical: bool,
    /// `4 I4 + 1/4 - (I1 + I2 + 2 I3)`; nonnegative for physical states.
    pub margin: f64,
}

/// Operations shared by every two-mode Gaussian state representation.
pub trait TwoModeGaussian {
    fn covariance(&self) -> CovarianceMatrix4;

    fn invariants(&self) -> Invariants {
        let cm = self.covariance();
        Invariants {
            i1: cm.alpha().determinant(),
            i2: cm.beta().determinant(),
            i3: cm.gamma().determinant(),
            i4: cm.matrix().determinant(),
        }
    }

    fn symplectic(&self) -> Result<SymplecticData> {
        let invariants = self.invariants();
        let (d_plus, d_minus) = invariants.symplectic_spectrum()?;
        Ok(SymplecticData {
            invariants,
            d_plus,
            d_minus,
        })
    }

    fn bona_fide(&self) -> BonaFide {
        bona_fide_with_tol(self, PHYSICAL_TOL)
    }

    fn is_physical(&self) -> bool {
        self.bona_fide().physical
    }

    /// `μ = 1 / (4 sqrt(det σ))`.
    fn purity(&self) -> Result<f64> {
        let i4 = self.invariants().i4;
        if i4 <= 0.0 {
            return Err(Error::Unphysical(format!("det σ = {i4} <= 0")));
        }
        Ok(1.0 / (4.0 * i4.sqrt()))
    }

    /// `S = f(d+) + f(d-)`, in nats.
    fn von_neumann_entropy(&self) -> Result<f64> {
        let s = self.symplectic()?;
        Ok(entropy_f(s.d_plus)? + entropy_f(s.d_minus)?)
    }

    /// Wigner function at phase-space point `k`.
    ///
    /// Normalized over `d²α1 d²α2` with `α = (X + iY)/√2`, so the integral
    /// over `dX1 dY1 dX2 dY2` is 4.
    fn wigner_density(&self, k: &Vector4<f64>) -> Result<f64> {
        let cm = self.covariance();
        let det = cm.matrix().determinant();
        if det <= 0.0 {
            return Err(Error::Singular);
        }
        let inv = cm.matrix().try_inverse().ok_or(Error::Singular)?;
        let q = (k.transpose() * inv * k)[(0, 0)];
        Ok((-0.5 * q).exp() / (PI * PI * det.sqrt()))
    }
}

/// Bona-fide test with an explicit tolerance.
pub fn bona_fide_with_tol<G: TwoModeGaussian + ?Sized>(state: &G, tol: f64) -> BonaFide {
    let inv = state.invariants();
    let margin = inv.heisenberg_margin();
    // With a real spectrum, d- >= 1/2 holds iff the margin is nonnegative and
    // I1 + I2 + 2 I3 >= 1/2. Testing that pair avoids the square root of the
    // near-zero radicand of pure states.
    let spectrum_ok = inv.symplectic_spectrum().is_ok() && inv.seralian() >= 0.5 - tol;
    let cm = state.covariance();
    let min_eig = SymmetricEigen::new(*cm.matrix()).eigenvalues.min();
    BonaFide {
        physical: margin >= -tol && spectrum_ok && min_eig >= -tol,
        margin,
    }
}

impl TwoModeGaussian for CovarianceMatrix4 {
    fn covariance(&self) -> CovarianceMatrix4 {
        *self
    }
}

impl TwoModeGaussian for StandardFormCM {
    fn covariance(&self) -> CovarianceMatrix4 {
        let (n, m, c1, c2) = (self.n, self.m, self.c1, self.c2);
        CovarianceMatrix4 {
            matrix: Matrix4::new(
                n, 0.0, c1, 0.0, //
                0.0, n, 0.0, c2, //
                c1, 0.0, m, 0.0, //
                0.0, c2, 0.0, m,
            ),
        }
    }

    fn invariants(&self) -> Invariants {
        let nm = self.n * self.m;
        Invariants {
            i1: self.n * self.n,
            i2: self.m * self.m,
            i3: self.c1 * self.c2,
            i4: (nm - self.c1 * self.c1) * (nm - self.c2 * self.c2),
        }
    }
}

/// Entropy function `f(x) = (x+½)ln(x+½) - (x-½)ln(x-½)`, with `f(½) = 0`.
pub fn entropy_f(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("entropy argument"));
    }
    if x < VACUUM_VARIANCE - PHYSICAL_TOL {
        return Err(Error::EntropyDomain(x));
    }
    if x <= VACUUM_VARIANCE {
        return Ok(0.0);
    }
    let up = x + 0.5;
    let down = x - 0.5;
    Ok(up * up.ln() - down * down.ln())
}

/// Pair of unimodular 2x2 blocks acting on mode 1 and mode 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSymplectic {
    s1: Matrix2<f64>,
    s2: Matrix2<f64>,
}

impl LocalSymplectic {
    pub fn new(s1: Matrix2<f64>, s2: Matrix2<f64>) -> Result<Self> {
        for (block, s) in [(1, &s1), (2, &s2)] {
            if s.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("symplectic block"));
            }
            let det = s.determinant();
            let scale = s.norm_squared().max(1.0);
            if (det - 1.0).abs() > 1e-12 * scale {
                return Err(Error::NotUnimodular { block, det });
            }
        }
        Ok(Self { s1, s2 })
    }

    pub fn identity() -> Self {
        Self {
            s1: Matrix2::identity(),
            s2: Matrix2::identity(),
        }
    }

    /// Single-mode squeezers `diag(s, 1/s)` on each mode.
    pub fn squeezing(s1: f64, s2: f64) -> Result<Self> {
        if !(s1 > 0.0 && s2 > 0.0 && s1.is_finite() && s2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "squeezing factors must be positive, got {s1}, {s2}"
            )));
        }
        Ok(Self {
            s1: Matrix2::new(s1, 0.0, 0.0, 1.0 / s1),
            s2: Matrix2::new(s2, 0.0, 0.0, 1.0 / s2),
        })
    }

    /// Phase-space rotations by `theta1`, `theta2`.
    pub fn rotation(theta1: f64, theta2: f64) -> Self {
        let rot = |t: f64| Matrix2::new(t.cos(), t.sin(), -t.sin(), t.cos());
        Self {
            s1: rot(theta1),
            s2: rot(theta2),
        }
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &LocalSymplectic) -> Self {
        Self {
            s1: self.s1 * first.s1,
            s2: self.s2 * first.s2,
        }
    }

    pub fn s1(&self) -> &Matrix2<f64> {
        &self.s1
    }

    pub fn s2(&self) -> &Matrix2<f64> {
        &self.s2
    }

    pub fn block_matrix(&self) -> Matrix4<f64> {
        let mut s = Matrix4::zeros();
        s.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.s1);
        s.fixed_view_mut::<2, 2>(2, 2).copy_from(&self.s2);
        s
    }
}

/// Draws phase-space points distributed as the Wigner function of a state.
#[derive(Debug, Clone)]
pub struct WignerSampler {
    factor: Matrix4<f64>,
}

impl WignerSampler {
    pub fn new<G: TwoModeGaussian + ?Sized>(state: &G) -> Result<Self> {
        let chol = state
            .covariance()
            .matrix()
            .cholesky()
            .ok_or(Error::Singular)?;
        Ok(Self { factor: chol.l() })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        self.factor * z
    }
}
