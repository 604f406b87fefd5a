//! The n x n matrix behind the perturbed resolvent, built in closed form
//! from the scatterer geometry and the boundary matrix, together with the
//! perturbed Green's function and the local-interaction special case.
//!
//! The canonical boundary parameter stored in a [`Configuration`] is
//! `T = tan(theta/2)`: it is branch free and is what the closed-form matrix
//! consumes. `theta` itself can be recovered on demand through the principal
//! branch (spectrum in (-pi, pi)).


use alloc::vec::Vec;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::greens::{g0_3d, im_g0_i, re_g0_i, ComplexEnergy};
use crate::linalg::{
    self, hermitian_defect, hermitian_eigen, hermitian_matrix_function, CMatrix,
};

const PI: f64 = core::f64::consts::PI;
const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Hermiticity tolerance for boundary matrices (relative to Frobenius norm).
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Minimum distance of a theta eigenvalue from the excluded set (1/2 + m) pi.
pub const THETA_EXCLUSION_TOL: f64 = 1e-9;

/// Scatterer positions together with the boundary matrix surrogate
/// `T = tan(theta/2)`.
///
/// Points are canonicalized lexicographically on construction (rows/columns
/// of `T` are permuted along), so equal configurations compare equal and
/// downstream output is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    xi: Vec<Vector3<f64>>,
    tan_half_theta: CMatrix,
    half_space: bool,
}

impl Configuration {
    /// Builds a configuration from positions and a Hermitian `tan(theta/2)`.
    pub fn new(xi: Vec<Vector3<f64>>, tan_half_theta: CMatrix) -> Result<Self> {
        Self::build(xi, tan_half_theta, false)
    }

    /// Same as [`Configuration::new`] but additionally requires every
    /// scatterer to lie strictly below the measurement plane (x3 < 0).
    pub fn new_half_space(xi: Vec<Vector3<f64>>, tan_half_theta: CMatrix) -> Result<Self> {
        Self::build(xi, tan_half_theta, true)
    }

    fn build(mut xi: Vec<Vector3<f64>>, mut t: CMatrix, half_space: bool) -> Result<Self> {
        let n = xi.len();
        if n == 0 {
            return Err(Error::Validation("a configuration needs at least one scatterer".into()));
        }
        if t.nrows() != n || t.ncols() != n {
            return Err(Error::Validation(alloc::format!(
                "tan_half_theta is {}x{}, expected {n}x{n}",
                t.nrows(),
                t.ncols()
            )));
        }
        for p in &xi {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::Validation("scatterer coordinates must be finite".into()));
            }
        }
        let defect = hermitian_defect(&t);
        let scale = t.norm().max(1.0);
        if defect > HERMITICITY_TOL * scale {
            return Err(Error::NotHermitian { defect, tolerance: HERMITICITY_TOL * scale });
        }
        if half_space {
            for (j, p) in xi.iter().enumerate() {
                if !(p.z < 0.0) {
                    return Err(Error::Validation(alloc::format!(
                        "half-space configuration requires xi_{j}.z < 0, got {}",
                        p.z
                    )));
                }
            }
        }
        // canonical lexicographic order, permuting T along
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| lex_cmp(&xi[a], &xi[b]));
        if order.iter().enumerate().any(|(k, &o)| k != o) {
            let xi_sorted: Vec<_> = order.iter().map(|&o| xi[o]).collect();
            let mut t_sorted = CMatrix::zeros(n, n);
            for (a, &oa) in order.iter().enumerate() {
                for (b, &ob) in order.iter().enumerate() {
                    t_sorted[(a, b)] = t[(oa, ob)];
                }
            }
            xi = xi_sorted;
            t = t_sorted;
        }
        for j in 0..n {
            for jp in j + 1..n {
                if (xi[j] - xi[jp]).norm() == 0.0 {
                    return Err(Error::Validation(alloc::format!(
                        "scatterers {j} and {jp} coincide; points must be pairwise distinct"
                    )));
                }
            }
        }
        Ok(Configuration { xi, tan_half_theta: t, half_space })
    }

    pub fn n(&self) -> usize {
        self.xi.len()
    }

    pub fn xi(&self) -> &[Vector3<f64>] {
        &self.xi
    }

    pub fn tan_half_theta(&self) -> &CMatrix {
        &self.tan_half_theta
    }

    pub fn is_half_space(&self) -> bool {
        self.half_space
    }

    /// Tags the configuration as half-space data, re-checking that every
    /// scatterer lies strictly below the plane.
    pub fn into_half_space(self) -> Result<Self> {
        Self::build(self.xi, self.tan_half_theta, true)
    }

    /// True when T equals its transpose within tolerance (the reciprocity
    /// condition on the boundary matrix).
    pub fn is_symmetric(&self) -> bool {
        linalg::symmetry_defect(&self.tan_half_theta)
            <= HERMITICITY_TOL * self.tan_half_theta.norm().max(1.0)
    }

    /// True when T is entrywise real within tolerance.
    pub fn is_real(&self) -> bool {
        linalg::max_imag(&self.tan_half_theta)
            <= HERMITICITY_TOL * self.tan_half_theta.norm().max(1.0)
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for j in 0..self.n() {
            for jp in j + 1..self.n() {
                best = best.min((self.xi[j] - self.xi[jp]).norm());
            }
        }
        best
    }

    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..self.n() {
            for jp in j + 1..self.n() {
                best = best.max((self.xi[j] - self.xi[jp]).norm());
            }
        }
        best
    }
}

fn lex_cmp(a: &Vector3<f64>, b: &Vector3<f64>) -> core::cmp::Ordering {
    for k in 0..3 {
        match a[k].partial_cmp(&b[k]) {
            Some(core::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    core::cmp::Ordering::Equal
}

/// A Hermitian boundary matrix with spectrum away from the excluded set
/// `{(1/2 + m) pi}` where the extension family degenerates.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix {
    theta: CMatrix,
}

impl ThetaMatrix {
    pub fn new(theta: CMatrix) -> Result<Self> {
        if theta.nrows() != theta.ncols() {
            return Err(Error::Validation("theta must be square".into()));
        }
        let defect = hermitian_defect(&theta);
        let scale = theta.norm().max(1.0);
        if defect > HERMITICITY_TOL * scale {
            return Err(Error::NotHermitian { defect, tolerance: HERMITICITY_TOL * scale });
        }
        let (evals, _) = hermitian_eigen(&theta);
        for lambda in evals {
            let dist = distance_to_excluded(lambda);
            if dist < THETA_EXCLUSION_TOL {
                return Err(Error::EigenvalueExcluded { eigenvalue: lambda, distance: dist });
            }
        }
        Ok(ThetaMatrix { theta })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.theta
    }

    pub fn n(&self) -> usize {
        self.theta.nrows()
    }
}

/// Distance from `x` to the nearest point of the excluded set
/// `{(1/2 + m) 2 pi : m in Z}` = odd multiples of pi, the poles of
/// tan(x / 2) where the extension degenerates to the Friedrichs case.
fn distance_to_excluded(x: f64) -> f64 {
    let m = libm::round((x - PI) / (2.0 * PI));
    (x - (PI + 2.0 * m * PI)).abs()
}

/// tan(theta/2) through the Hermitian eigendecomposition.
pub fn theta_to_tan_half(theta: &ThetaMatrix) -> CMatrix {
    hermitian_matrix_function(theta.matrix(), |x| libm::tan(x / 2.0))
}

/// Principal-branch inverse of [`theta_to_tan_half`]: the returned theta has
/// spectrum in (-pi, pi).
pub fn tan_half_to_theta(t: &CMatrix) -> Result<ThetaMatrix> {
    let defect = hermitian_defect(t);
    let scale = t.norm().max(1.0);
    if defect > HERMITICITY_TOL * scale {
        return Err(Error::NotHermitian { defect, tolerance: HERMITICITY_TOL * scale });
    }
    let theta = hermitian_matrix_function(t, |x| 2.0 * libm::atan(x));
    ThetaMatrix::new(theta)
}

/// The inverse Krein matrix in closed form:
/// diagonal `-(4 pi)^{-1} i z^{1/2} - (4 pi)^{-1} 2^{-1/2} + T_jj`,
/// off-diagonal `-G0(z, xi_j - xi_j') + Re(G0(i, xi_j - xi_j')) + T_jj'`.
pub fn p_inverse(config: &Configuration, z: ComplexEnergy) -> Result<CMatrix> {
    let n = config.n();
    let t = config.tan_half_theta();
    let s = z.sqrt_upper();
    let mut m = CMatrix::zeros(n, n);
    let diag = -Complex64::i() * s / (4.0 * PI) - Complex64::new(FRAC_1_SQRT_2 / (4.0 * PI), 0.0);
    for j in 0..n {
        m[(j, j)] = diag + t[(j, j)];
        for jp in 0..n {
            if jp == j {
                continue;
            }
            let r = (config.xi()[j] - config.xi()[jp]).norm();
            m[(j, jp)] = -g0_3d(z, r)? + Complex64::new(re_g0_i(r)?, 0.0) + t[(j, jp)];
        }
    }
    Ok(m)
}

/// The Krein matrix at energy `z`: the inverse of [`p_inverse`], with a
/// determinant-based resonance guard and a condition estimate.
#[derive(Debug, Clone)]
pub struct KreinMatrix {
    pub z: ComplexEnergy,
    pub p_inverse: CMatrix,
    pub p: CMatrix,
    pub det_p_inverse: Complex64,
    pub condition_estimate: f64,
}

pub fn krein_matrix(config: &Configuration, z: ComplexEnergy) -> Result<KreinMatrix> {
    let pinv = p_inverse(config, z)?;
    match linalg::invert_with_refinement(&pinv) {
        Ok(inv) => Ok(KreinMatrix {
            z,
            p_inverse: pinv,
            p: inv.inverse,
            det_p_inverse: inv.determinant,
            condition_estimate: inv.condition_estimate,
        }),
        Err(Error::Domain(_)) => {
            let lu = pinv.clone().lu();
            let det = lu.determinant();
            let hadamard: f64 = (0..config.n()).map(|i| pinv.row(i).norm()).product();
            Err(Error::NearResonance {
                z: z.value(),
                det_abs: det.norm(),
                det_rel: if hadamard > 0.0 { det.norm() / hadamard } else { 0.0 },
            })
        }
        Err(e) => Err(e),
    }
}

/// Perturbed Green's function
/// `G(z, x, y) = G0(z, x - y) + sum_{j,j'} P_jj' G0(z, x - xi_j) G0(z, y - xi_j')`.
pub fn perturbed_green(
    config: &Configuration,
    z: ComplexEnergy,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
) -> Result<Complex64> {
    let km = krein_matrix(config, z)?;
    perturbed_green_with(&km, config, x, y)
}

/// Same as [`perturbed_green`] but reuses a precomputed Krein matrix, for
/// callers that evaluate many point pairs at one energy.
pub fn perturbed_green_with(
    km: &KreinMatrix,
    config: &Configuration,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
) -> Result<Complex64> {
    let rxy = (x - y).norm();
    if rxy == 0.0 {
        return Err(Error::domain("perturbed Green's function needs x != y"));
    }
    let n = config.n();
    let mut gx = Vec::with_capacity(n);
    let mut gy = Vec::with_capacity(n);
    for (j, xi) in config.xi().iter().enumerate() {
        let rx = (x - xi).norm();
        let ry = (y - xi).norm();
        if rx == 0.0 || ry == 0.0 {
            return Err(Error::domain(alloc::format!(
                "evaluation point coincides with scatterer {j}"
            )));
        }
        gx.push(g0_3d(km.z, rx)?);
        gy.push(g0_3d(km.z, ry)?);
    }
    let mut acc = g0_3d(km.z, rxy)?;
    for j in 0..n {
        for jp in 0..n {
            acc += km.p[(j, jp)] * gx[j] * gy[jp];
        }
    }
    Ok(acc)
}

/// Converts local coupling constants `alpha` into the equivalent boundary
/// matrix: `T_jj = alpha_j + (4 pi)^{-1} 2^{-1/2}`,
/// `T_jj' = -Re(G0(i, xi_j - xi_j'))` off the diagonal. The result is real
/// symmetric.
pub fn alpha_to_config(alpha: &[f64], xi: Vec<Vector3<f64>>) -> Result<Configuration> {
    let n = xi.len();
    if alpha.len() != n {
        return Err(Error::Validation(alloc::format!(
            "{} coupling constants for {n} scatterers",
            alpha.len()
        )));
    }
    // Build T in the caller's ordering; Configuration::build permutes both
    // consistently afterwards.
    let mut t = CMatrix::zeros(n, n);
    for j in 0..n {
        t[(j, j)] = Complex64::new(alpha[j] + FRAC_1_SQRT_2 / (4.0 * PI), 0.0);
        for jp in 0..n {
            if jp != j {
                let r = (xi[j] - xi[jp]).norm();
                if r == 0.0 {
                    return Err(Error::Validation(alloc::format!(
                        "scatterers {j} and {jp} coincide"
                    )));
                }
                t[(j, jp)] = Complex64::new(-re_g0_i(r)?, 0.0);
            }
        }
    }
    Configuration::new(xi, t)
}

/// The local-interaction matrix, the direct closed form for coupling
/// constants: diagonal `-(4 pi)^{-1} i z^{1/2} + alpha_j`, off-diagonal
/// `-G0(z, xi_j - xi_j')`. Its inverse plays the role of the Krein matrix
/// for local interactions.
pub fn gamma_matrix(alpha: &[f64], xi: &[Vector3<f64>], z: ComplexEnergy) -> Result<CMatrix> {
    let n = xi.len();
    if alpha.len() != n {
        return Err(Error::Validation("alpha/xi length mismatch".into()));
    }
    let s = z.sqrt_upper();
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = -Complex64::i() * s / (4.0 * PI) + Complex64::new(alpha[j], 0.0);
        for jp in 0..n {
            if jp != j {
                let r = (xi[j] - xi[jp]).norm();
                m[(j, jp)] = -g0_3d(z, r)?;
            }
        }
    }
    Ok(m)
}

/// Perturbed Green's function evaluated through the local-interaction route
/// (the Gamma matrix), used as the independent second route for the
/// local-equivalence checks.
pub fn perturbed_green_local(
    alpha: &[f64],
    xi: &[Vector3<f64>],
    z: ComplexEnergy,
    x: &Vector3<f64>,
    y: &Vector3<f64>,
) -> Result<Complex64> {
    let gamma = gamma_matrix(alpha, xi, z)?;
    let inv = linalg::invert_with_refinement(&gamma)?.inverse;
    let mut acc = g0_3d(z, (x - y).norm())?;
    for (j, xij) in xi.iter().enumerate() {
        for (jp, xijp) in xi.iter().enumerate() {
            acc += inv[(j, jp)]
                * g0_3d(z, (x - xij).norm())?
                * g0_3d(z, (y - xijp).norm())?;
        }
    }
    Ok(acc)
}

/// Residual of the resolvent-difference identity between two energies:
/// `|| P^{-1}(z1) - P^{-1}(z2) + (z1 - z2) Gram(z1, z2) ||_F`, where the
/// Gram matrix is assembled from the closed-form inner products through the
/// first resolvent relation. Vanishes identically in exact arithmetic, so a
/// small value certifies the closed-form matrix against the inner products.
pub fn krein_identity_residual(
    config: &Configuration,
    z1: ComplexEnergy,
    z2: ComplexEnergy,
) -> Result<f64> {
    if z1.value() == z2.value() {
        return Ok(0.0);
    }
    if z1.on_positive_axis() || z2.on_positive_axis() {
        return Err(Error::domain("identity residual needs both energies off [0, inf)"));
    }
    let n = config.n();
    let dz = z1.value() - z2.value();
    let w1 = z1.value() * z1.value() + 1.0;
    let w2 = z2.value() * z2.value() + 1.0;
    let mut gram = CMatrix::zeros(n, n);
    for j in 0..n {
        for jp in 0..n {
            let (base, f1, f2) = if j == jp {
                (
                    Complex64::new(FRAC_1_SQRT_2 / (4.0 * PI), 0.0),
                    crate::greens::gram_diag(z1)?,
                    crate::greens::gram_diag(z2)?,
                )
            } else {
                let r = (config.xi()[j] - config.xi()[jp]).norm();
                (
                    Complex64::new(im_g0_i(r)?, 0.0),
                    crate::greens::gram_offdiag(z1, r)?,
                    crate::greens::gram_offdiag(z2, r)?,
                )
            };
            gram[(j, jp)] = base + (w1 * f1 - w2 * f2) / dz;
        }
    }
    let lhs = p_inverse(config, z1)? - p_inverse(config, z2)? + gram * dz;
    Ok(lhs.norm())
}

/// Helper constructing the standard diagonal shift of the closed form at a
/// real wavenumber, used when recovering `T` from a fitted `P`:
/// `T = P^{-1} + D(k^2)` with `D` as returned here.
pub fn closed_form_shift(xi: &[Vector3<f64>], k: f64) -> Result<CMatrix> {
    let n = xi.len();
    let z = ComplexEnergy::from_wavenumber(k);
    let mut d = CMatrix::zeros(n, n);
    for j in 0..n {
        d[(j, j)] = Complex64::new(FRAC_1_SQRT_2 / (4.0 * PI), k / (4.0 * PI));
        for jp in 0..n {
            if jp != j {
                let r = (xi[j] - xi[jp]).norm();
                d[(j, jp)] = g0_3d(z, r)? - Complex64::new(re_g0_i(r)?, 0.0);
            }
        }
    }
    Ok(d)
}

/// Recovers the boundary matrix from a Krein matrix at wavenumber `k` and
/// positions `xi`: `T = P^{-1} + D(k^2)`. The exact inverse of the closed
/// form; no fitting involved.
pub fn extract_tan_half(p: &CMatrix, xi: &[Vector3<f64>], k: f64) -> Result<CMatrix> {
    let inv = linalg::invert_with_refinement(p)?.inverse;
    Ok(inv + closed_form_shift(xi, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn configuration_canonicalizes_ordering() {
        let t = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.3, 0.1), c(0.3, -0.1), c(2.0, 0.0)]);
        let cfg = Configuration::new(vec![v(1.0, 0.0, 0.0), v(0.0, 0.0, 0.0)], t).unwrap();
        assert_eq!(cfg.xi()[0], v(0.0, 0.0, 0.0));
        assert_eq!(cfg.xi()[1], v(1.0, 0.0, 0.0));
        // T permuted along: original (1,1) entry is now (0,0)
        assert_eq!(cfg.tan_half_theta()[(0, 0)], c(2.0, 0.0));
        assert_eq!(cfg.tan_half_theta()[(0, 1)], c(0.3, -0.1));
    }

    #[test]
    fn configuration_rejects_duplicates_and_non_hermitian() {
        let t = CMatrix::identity(2, 2);
        assert!(Configuration::new(vec![v(0.0, 0.0, 0.0), v(0.0, 0.0, 0.0)], t.clone()).is_err());
        let bad = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.1, 0.0), c(1.0, 0.0)]);
        match Configuration::new(vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)], bad) {
            Err(Error::NotHermitian { .. }) => {}
            other => panic!("expected Hermiticity rejection, got {other:?}"),
        }
    }

    #[test]
    fn half_space_tag_enforced() {
        let t = CMatrix::identity(1, 1);
        assert!(Configuration::new_half_space(vec![v(0.0, 0.0, -1.0)], t.clone()).is_ok());
        assert!(Configuration::new_half_space(vec![v(0.0, 0.0, 0.5)], t).is_err());
    }

    #[test]
    fn theta_exclusion_is_enforced() {
        // the Friedrichs limit theta = pi I_n sits exactly on the excluded set
        match ThetaMatrix::new(CMatrix::from_row_slice(1, 1, &[c(PI, 0.0)])) {
            Err(Error::EigenvalueExcluded { .. }) => {}
            other => panic!("expected exclusion, got {other:?}"),
        }
        assert!(ThetaMatrix::new(CMatrix::from_row_slice(1, 1, &[c(-PI, 0.0)])).is_err());
        assert!(ThetaMatrix::new(CMatrix::from_row_slice(1, 1, &[c(3.0 * PI, 0.0)])).is_err());
        // pi/2 is a regular point (tan(pi/4) = 1)
        assert!(ThetaMatrix::new(CMatrix::from_row_slice(1, 1, &[c(PI / 2.0, 0.0)])).is_ok());
    }

    #[test]
    fn tan_half_map_diagonal_cases() {
        let zero = ThetaMatrix::new(CMatrix::zeros(3, 3)).unwrap();
        assert!(theta_to_tan_half(&zero).norm() < 1e-15);
        // diag(pi/2, -pi/2) -> diag(1, -1)
        let theta = ThetaMatrix::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(PI / 2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-PI / 2.0, 0.0)],
        ))
        .unwrap();
        let t = theta_to_tan_half(&theta);
        assert!((t[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!((t[(1, 1)] - c(-1.0, 0.0)).norm() < 1e-14);
        // and back
        let back = tan_half_to_theta(&t).unwrap();
        assert!((back.matrix() - theta.matrix()).norm() < 1e-12);
    }

    #[test]
    fn p_inverse_reduces_to_scalar_gamma() {
        // n = 1 with T = alpha + (4 pi)^{-1} 2^{-1/2}: P^{-1} = alpha - ik/(4 pi)
        let alpha = 0.8;
        let t = CMatrix::from_row_slice(1, 1, &[c(alpha + FRAC_1_SQRT_2 / (4.0 * PI), 0.0)]);
        let cfg = Configuration::new(vec![v(0.0, 0.0, 0.0)], t).unwrap();
        let k = 1.3;
        let m = p_inverse(&cfg, ComplexEnergy::from_wavenumber(k)).unwrap();
        assert!((m[(0, 0)] - c(alpha, -k / (4.0 * PI))).norm() < 1e-15);
    }

    #[test]
    fn one_center_bound_state_root() {
        // det P^{-1}(z) = 0 at z = -(4 pi alpha)^2 for alpha < 0:
        // on the negative axis P^{-1}(-E) = (4 pi)^{-1} sqrt(E) + alpha.
        let alpha = -0.05;
        let cfg = alpha_to_config(&[alpha], vec![v(0.0, 0.0, 0.0)]).unwrap();
        let e_bound = (4.0 * PI * alpha) * (4.0 * PI * alpha);
        // bisection on f(E) = Re P^{-1}(-E)
        let f = |e: f64| {
            p_inverse(&cfg, ComplexEnergy::from_parts(-e, 0.0)).unwrap()[(0, 0)].re
        };
        let (mut lo, mut hi) = (1e-6, 10.0);
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((0.5 * (lo + hi) - e_bound).abs() < 1e-9 * e_bound);
    }

    #[test]
    fn p_inverse_offdiagonal_closed_form() {
        // n = 2, T = 0, z = -1: off-diagonal is -e^{-r}/(4 pi r) + Re G0(i, r)
        let xi = vec![v(0.0, 0.0, 0.0), v(0.0, 0.0, 1.5)];
        let cfg = Configuration::new(xi, CMatrix::zeros(2, 2)).unwrap();
        let m = p_inverse(&cfg, ComplexEnergy::from_parts(-1.0, 0.0)).unwrap();
        let r = 1.5;
        let expect = -libm::exp(-r) / (4.0 * PI * r) + re_g0_i(r).unwrap();
        assert!((m[(0, 1)] - c(expect, 0.0)).norm() < 1e-15);
        assert!((m[(1, 0)] - c(expect, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn krein_matrix_scalar_inversion() {
        let t = CMatrix::from_row_slice(1, 1, &[c(1.0 + FRAC_1_SQRT_2 / (4.0 * PI), 0.0)]);
        let cfg = Configuration::new(vec![v(0.0, 0.0, 0.0)], t).unwrap();
        let km = krein_matrix(&cfg, ComplexEnergy::from_wavenumber(1.0)).unwrap();
        let expect = c(1.0, -1.0 / (4.0 * PI)).inv();
        assert!((km.p[(0, 0)] - expect).norm() < 1e-15);
        assert!((&km.p * &km.p_inverse - CMatrix::identity(1, 1)).norm() < 1e-13);
    }

    #[test]
    fn near_resonance_is_reported() {
        // alpha < 0 has det P^{-1} = 0 at the bound state
        let alpha = -0.05;
        let cfg = alpha_to_config(&[alpha], vec![v(0.0, 0.0, 0.0)]).unwrap();
        let e_bound = (4.0 * PI * alpha) * (4.0 * PI * alpha);
        match krein_matrix(&cfg, ComplexEnergy::from_parts(-e_bound, 0.0)) {
            Err(Error::NearResonance { det_rel, .. }) => assert!(det_rel < 1e-12),
            other => panic!("expected NearResonance, got {other:?}"),
        }
    }

    #[test]
    fn decoupling_limit_recovers_free_kernel() {
        // huge alpha: P -> 0 and G -> G0
        let cfg = alpha_to_config(&[1e9], vec![v(0.0, 0.0, 0.0)]).unwrap();
        let z = ComplexEnergy::from_parts(-1.0, 0.0);
        let x = v(1.0, 0.0, 0.0);
        let y = v(0.0, 1.0, 0.0);
        let g = perturbed_green(&cfg, z, &x, &y).unwrap();
        let g0 = g0_3d(z, (x - y).norm()).unwrap();
        assert!((g - g0).norm() < 1e-10 * g0.norm());
    }

    #[test]
    fn perturbed_green_hand_composed_scalar() {
        // n = 1, xi = 0, alpha = 1, z = -1, x = (1,0,0), y = (0,1,0)
        let cfg = alpha_to_config(&[1.0], vec![v(0.0, 0.0, 0.0)]).unwrap();
        let z = ComplexEnergy::from_parts(-1.0, 0.0);
        let x = v(1.0, 0.0, 0.0);
        let y = v(0.0, 1.0, 0.0);
        let g = perturbed_green(&cfg, z, &x, &y).unwrap();
        // scalar route: P^{-1}(-1) = alpha - i * (i)/(4 pi) = alpha + 1/(4 pi)
        let p = c(1.0 + 1.0 / (4.0 * PI), 0.0).inv();
        let g0_xy = g0_3d(z, libm::sqrt(2.0)).unwrap();
        let g0_x = g0_3d(z, 1.0).unwrap();
        let expect = g0_xy + p * g0_x * g0_x;
        assert!((g - expect).norm() < 1e-15);
    }

    #[test]
    fn perturbed_green_domain_errors() {
        let cfg = alpha_to_config(&[1.0], vec![v(0.0, 0.0, -1.0)]).unwrap();
        let z = ComplexEnergy::from_parts(-1.0, 0.0);
        let p = v(0.5, 0.0, 0.0);
        assert!(perturbed_green(&cfg, z, &p, &p).is_err());
        assert!(perturbed_green(&cfg, z, &v(0.0, 0.0, -1.0), &p).is_err());
    }

    #[test]
    fn alpha_form_is_real_symmetric() {
        let cfg = alpha_to_config(
            &[0.5, -0.2, 1.0],
            vec![v(0.0, 0.0, 0.0), v(1.0, 0.2, -0.3), v(-0.5, 0.8, 0.1)],
        )
        .unwrap();
        assert!(cfg.is_real());
        assert!(cfg.is_symmetric());
        // n = 1 diagonal value
        let single = alpha_to_config(&[0.5], vec![v(0.0, 0.0, 0.0)]).unwrap();
        let expect = 0.5 + FRAC_1_SQRT_2 / (4.0 * PI);
        assert!((single.tan_half_theta()[(0, 0)] - c(expect, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn identity_residual_small_for_scalar_case() {
        let cfg = alpha_to_config(&[0.7], vec![v(0.0, 0.0, 0.0)]).unwrap();
        let r = krein_identity_residual(
            &cfg,
            ComplexEnergy::from_parts(-1.0, 0.0),
            ComplexEnergy::from_parts(-2.0, 0.0),
        )
        .unwrap();
        assert!(r < 1e-13, "scalar residual {r}");
        let same = krein_identity_residual(
            &cfg,
            ComplexEnergy::from_parts(-1.0, 0.0),
            ComplexEnergy::from_parts(-1.0, 0.0),
        )
        .unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn extract_tan_half_is_exact_inverse_of_closed_form() {
        let t = CMatrix::from_row_slice(
            2,
            2,
            &[c(0.4, 0.0), c(0.1, 0.05), c(0.1, -0.05), c(-0.3, 0.0)],
        );
        let xi = vec![v(0.0, 0.0, -1.0), v(0.8, 0.3, -1.7)];
        let cfg = Configuration::new(xi.clone(), t.clone()).unwrap();
        let k = 1.7;
        let km = krein_matrix(&cfg, ComplexEnergy::from_wavenumber(k)).unwrap();
        let t_back = extract_tan_half(&km.p, cfg.xi(), k).unwrap();
        assert!((&t_back - cfg.tan_half_theta()).norm() < 1e-12);
    }
}
