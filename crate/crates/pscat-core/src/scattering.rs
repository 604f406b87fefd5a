//! Scattering wave functions, the scattering amplitude, the S-matrix action
//! on the sphere, and the three physical-constraint verifiers (optical
//! theorem, reciprocity, reality).
//!
//! All quantities are evaluated at real wavenumber `k` through the boundary
//! branch `z = k^2`, `z^{1/2} = k`. Negative `k` is admitted with the signed
//! root (the convention the reality constraint is stated in); it is the one
//! deliberate exception to the upper-branch rule.

use alloc::vec::Vec;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::greens::{g0_3d, ComplexEnergy};
use crate::krein::{krein_matrix, Configuration};
use crate::linalg::CMatrix;
use crate::quadrature::{Direction, SphereQuadrature};

const PI: f64 = core::f64::consts::PI;

fn check_wavenumber(k: f64) -> Result<()> {
    if !(k != 0.0 && k.is_finite()) {
        return Err(Error::domain(alloc::format!("wavenumber k = {k} must be nonzero and finite")));
    }
    Ok(())
}

/// Precomputed scattering-amplitude evaluator at fixed wavenumber: holds the
/// Krein matrix so direction pairs are cheap to sweep.
pub struct Amplitude<'a> {
    config: &'a Configuration,
    k: f64,
    p: CMatrix,
}

impl<'a> Amplitude<'a> {
    pub fn new(config: &'a Configuration, k: f64) -> Result<Self> {
        check_wavenumber(k)?;
        let km = krein_matrix(config, ComplexEnergy::from_wavenumber(k))?;
        Ok(Amplitude { config, k, p: km.p })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// A(omega_out, omega_in, k) =
    /// (4 pi)^{-1} sum_{j,j'} P_jj' exp(ik(omega_in . xi_j' - omega_out . xi_j)).
    pub fn eval(&self, omega_out: &Direction, omega_in: &Direction) -> Complex64 {
        let n = self.config.n();
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let phase_out =
                (-Complex64::i() * self.k * omega_out.dot(&self.config.xi()[j])).exp();
            for jp in 0..n {
                let phase_in =
                    (Complex64::i() * self.k * omega_in.dot(&self.config.xi()[jp])).exp();
                acc += self.p[(j, jp)] * phase_in * phase_out;
            }
        }
        acc / (4.0 * PI)
    }

    /// Evaluates A(node, omega_in) over all quadrature nodes in one sweep.
    pub fn eval_over_nodes(&self, quad: &SphereQuadrature, omega_in: &Direction) -> Vec<Complex64> {
        let n = self.config.n();
        // v = P e_in(omega_in)
        let mut v = alloc::vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for jp in 0..n {
                let phase_in =
                    (Complex64::i() * self.k * omega_in.dot(&self.config.xi()[jp])).exp();
                v[j] += self.p[(j, jp)] * phase_in;
            }
        }
        quad.nodes()
            .iter()
            .map(|node| {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    let phase_out =
                        (-Complex64::i() * self.k * node.dot(&self.config.xi()[j])).exp();
                    acc += v[j] * phase_out;
                }
                acc / (4.0 * PI)
            })
            .collect()
    }
}

/// Scattering wave function
/// `Psi(x, k, omega) = e^{ik omega.x} + sum_{j,j'} P(k^2)_jj' e^{ik omega.xi_j'} G0(k^2, x - xi_j)`.
pub fn scattering_wave(
    config: &Configuration,
    k: f64,
    omega: &Direction,
    x: &Vector3<f64>,
) -> Result<Complex64> {
    if !(k > 0.0) {
        return Err(Error::domain(alloc::format!("scattering wave needs k > 0, got {k}")));
    }
    let z = ComplexEnergy::from_wavenumber(k);
    let km = krein_matrix(config, z)?;
    let mut acc = (Complex64::i() * k * omega.dot(x)).exp();
    for (j, xij) in config.xi().iter().enumerate() {
        let r = (x - xij).norm();
        if r == 0.0 {
            return Err(Error::domain(alloc::format!(
                "wave function evaluated on scatterer {j}"
            )));
        }
        let g = g0_3d(z, r)?;
        for (jp, xijp) in config.xi().iter().enumerate() {
            let phase = (Complex64::i() * k * omega.dot(xijp)).exp();
            acc += km.p[(j, jp)] * phase * g;
        }
    }
    Ok(acc)
}

/// Scattering amplitude for a single direction pair. See [`Amplitude`] for
/// sweeping many pairs at one wavenumber.
pub fn amplitude(
    config: &Configuration,
    k: f64,
    omega_out: &Direction,
    omega_in: &Direction,
) -> Result<Complex64> {
    Ok(Amplitude::new(config, k)?.eval(omega_out, omega_in))
}

/// Applies the S-matrix to samples of a function on the quadrature nodes:
/// `(S f)(w) = f(w) + (ik/8 pi^2) sum_jj' P_jj' <e^{-ik xi_j' .}, f> e^{-ik xi_j . w}`,
/// the inner product taken in the quadrature weights.
pub fn s_matrix_apply(
    config: &Configuration,
    k: f64,
    quad: &SphereQuadrature,
    f: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_wavenumber(k)?;
    if f.len() != quad.len() {
        return Err(Error::domain(alloc::format!(
            "function has {} samples but the quadrature has {} nodes",
            f.len(),
            quad.len()
        )));
    }
    let km = krein_matrix(config, ComplexEnergy::from_wavenumber(k))?;
    let n = config.n();
    // projections <e^{-ik xi_j' . }, f>
    let mut proj = alloc::vec![Complex64::new(0.0, 0.0); n];
    for (jp, xi) in config.xi().iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((node, w), fv) in quad.nodes().iter().zip(quad.weights()).zip(f) {
            // conj(e^{-ik xi . w}) = e^{+ik xi . w}
            acc += (Complex64::i() * k * node.dot(xi)).exp() * fv * *w;
        }
        proj[jp] = acc;
    }
    let coupling = Complex64::i() * k / (8.0 * PI * PI);
    let mut out = Vec::with_capacity(f.len());
    for (node, fv) in quad.nodes().iter().zip(f) {
        let mut acc = *fv;
        for j in 0..n {
            let phase = (-Complex64::i() * k * node.dot(&config.xi()[j])).exp();
            for jp in 0..n {
                acc += coupling * km.p[(j, jp)] * proj[jp] * phase;
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Residual of the generalized optical theorem at one direction pair:
/// `|(A(w',w) - conj A(w,w'))/(2i) - (4 pi)^{-1} k sum_q w_q A(w_q,w) conj A(w_q,w')|`.
///
/// The left side is the kernel of the operator imaginary part of the
/// amplitude; for `w = w'` it reduces to the classic `Im A` form. The
/// identity is exact, so the residual measures quadrature error only.
pub fn optical_theorem_residual(
    config: &Configuration,
    k: f64,
    quad: &SphereQuadrature,
    omega_out: &Direction,
    omega_in: &Direction,
) -> Result<f64> {
    let amp = Amplitude::new(config, k)?;
    let lhs = (amp.eval(omega_out, omega_in) - amp.eval(omega_in, omega_out).conj())
        / Complex64::new(0.0, 2.0);
    let a_in = amp.eval_over_nodes(quad, omega_in);
    let a_out = amp.eval_over_nodes(quad, omega_out);
    let mut integral = Complex64::new(0.0, 0.0);
    for ((w, ai), ao) in quad.weights().iter().zip(&a_in).zip(&a_out) {
        integral += ai * ao.conj() * *w;
    }
    Ok((lhs - integral * k / (4.0 * PI)).norm())
}

/// Largest reciprocity violation `max |A(w',w,k) - A(-w,-w',k)|` over the
/// given direction pairs. Zero (up to rounding) iff the boundary matrix is
/// symmetric.
pub fn reciprocity_defect(
    config: &Configuration,
    k: f64,
    sample_pairs: &[(Direction, Direction)],
) -> Result<f64> {
    let amp = Amplitude::new(config, k)?;
    let mut worst: f64 = 0.0;
    for (omega_out, omega_in) in sample_pairs {
        let a = amp.eval(omega_out, omega_in);
        let b = amp.eval(&omega_in.negate(), &omega_out.negate());
        worst = worst.max((a - b).norm());
    }
    Ok(worst)
}

/// Largest reality violation `max |conj(A(w',w,k)) - A(w',w,-k)|` over the
/// given direction pairs. Zero (up to rounding) iff the boundary matrix is
/// real. The `-k` evaluation uses the signed boundary root.
pub fn reality_defect(
    config: &Configuration,
    k: f64,
    sample_pairs: &[(Direction, Direction)],
) -> Result<f64> {
    let amp_plus = Amplitude::new(config, k)?;
    let amp_minus = Amplitude::new(config, -k)?;
    let mut worst: f64 = 0.0;
    for (omega_out, omega_in) in sample_pairs {
        let a = amp_plus.eval(omega_out, omega_in).conj();
        let b = amp_minus.eval(omega_out, omega_in);
        worst = worst.max((a - b).norm());
    }
    Ok(worst)
}
