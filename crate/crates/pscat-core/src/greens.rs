//! Free-space Helmholtz Green's functions in dimensions 1, 2, 3 and the
//! closed-form inner products they induce.
//!
//! Everything is expressed through the square root branch with
//! `Im(z^{1/2}) > 0` off the positive real axis; on `[0, inf)` the upper
//! boundary value `+sqrt(z)` applies, which is what makes the scattering
//! solutions outgoing. All kernels are translation invariant, so they take
//! the separation `r = |x - y|` rather than a pair of points.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hankel::hankel1_0;

const PI: f64 = core::f64::consts::PI;
const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;

/// Radius of the window around z = +-i inside which the Gram quantities are
/// evaluated by their Taylor expansion across the removable singularity.
const REMOVABLE_WINDOW: f64 = 1e-6;

/// Branch of the complex square root with `Im(w) > 0` off `[0, inf)` and the
/// upper boundary value `+sqrt(z)` for real nonnegative `z`.
pub fn sqrt_upper(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        if z.re >= 0.0 {
            return Complex64::new(libm::sqrt(z.re), 0.0);
        }
        return Complex64::new(0.0, libm::sqrt(-z.re));
    }
    let w = z.sqrt();
    if w.im >= 0.0 {
        w
    } else {
        -w
    }
}

/// A spectral parameter `z` (units 1/length^2) together with its derived
/// square root on the physical branch.
///
/// Constructed either from a complex value (upper branch, with the boundary
/// value `+sqrt(z)` on the positive real axis) or from a real wavenumber `k`
/// via [`ComplexEnergy::from_wavenumber`], in which case `z = k^2` and
/// `z^{1/2} = k` including the sign of `k`. The signed variant is the single
/// deliberate branch exception, needed to evaluate amplitudes at `-k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEnergy {
    value: Complex64,
    sqrt: Complex64,
}

impl ComplexEnergy {
    pub fn new(z: Complex64) -> Self {
        ComplexEnergy { value: z, sqrt: sqrt_upper(z) }
    }

    pub fn from_parts(re: f64, im: f64) -> Self {
        Self::new(Complex64::new(re, im))
    }

    /// Real-axis boundary entry point: `z = k^2` with `z^{1/2} = k`.
    pub fn from_wavenumber(k: f64) -> Self {
        ComplexEnergy {
            value: Complex64::new(k * k, 0.0),
            sqrt: Complex64::new(k, 0.0),
        }
    }

    pub fn value(&self) -> Complex64 {
        self.value
    }

    pub fn sqrt_upper(&self) -> Complex64 {
        self.sqrt
    }

    /// True when `z` lies on the closed positive real axis `[0, inf)`,
    /// where the resolvent-side formulas (Lemma-type inner products) do not
    /// apply.
    pub fn on_positive_axis(&self) -> bool {
        self.value.im == 0.0 && self.value.re >= 0.0
    }
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::domain(alloc::format!(
            "Green's function evaluated at separation r = {r}; r > 0 is required"
        )));
    }
    Ok(())
}

/// G0(z, r) = exp(i z^{1/2} r) / (4 pi r), the 3D free resolvent kernel.
pub fn g0_3d(z: ComplexEnergy, r: f64) -> Result<Complex64> {
    check_radius(r)?;
    let s = z.sqrt_upper();
    Ok((Complex64::i() * s * r).exp() / (4.0 * PI * r))
}

/// G0(z, r) = (i/4) H0^(1)(z^{1/2} r), the 2D free resolvent kernel.
pub fn g0_2d(z: ComplexEnergy, r: f64) -> Result<Complex64> {
    check_radius(r)?;
    let w = z.sqrt_upper() * r;
    if w.re == 0.0 && w.im == 0.0 {
        return Err(Error::domain("2D kernel is logarithmically singular at z = 0"));
    }
    Ok(Complex64::new(0.0, 0.25) * hankel1_0(w))
}

/// G0(z, r) = (i/2) z^{-1/2} exp(i z^{1/2} r), the 1D free resolvent kernel;
/// finite at r = 0.
pub fn g0_1d(z: ComplexEnergy, r: f64) -> Result<Complex64> {
    if !(r >= 0.0) {
        return Err(Error::domain(alloc::format!("separation r = {r} must be nonnegative")));
    }
    let s = z.sqrt_upper();
    if s.re == 0.0 && s.im == 0.0 {
        return Err(Error::domain("1D kernel has a pole at z = 0"));
    }
    Ok(Complex64::new(0.0, 0.5) / s * (Complex64::i() * s * r).exp())
}

/// Real part of G0 at spectral point i: [G0(i, r) + G0(-i, r)] / 2.
pub fn re_g0_i(r: f64) -> Result<f64> {
    let gi = g0_3d(ComplexEnergy::new(Complex64::i()), r)?;
    // G0(-i, r) = conj(G0(i, r)), so the real part is literal.
    Ok(gi.re)
}

/// Imaginary part of G0 at spectral point i: [G0(i, r) - G0(-i, r)] / (2i).
pub fn im_g0_i(r: f64) -> Result<f64> {
    let gi = g0_3d(ComplexEnergy::new(Complex64::i()), r)?;
    Ok(gi.im)
}

fn require_off_positive_axis(z: ComplexEnergy) -> Result<()> {
    if z.on_positive_axis() {
        return Err(Error::domain(alloc::format!(
            "z = {} lies on [0, inf); the Gram quantities are resolvent-side only",
            z.value()
        )));
    }
    Ok(())
}

/// Numerator of the diagonal Gram quantity:
/// N(z) = i z^{1/2} - i (-i)^{1/2} - 2^{-1/2} (z + i). Vanishes at z = +-i.
fn gram_diag_numerator(z: Complex64) -> Complex64 {
    let s = sqrt_upper(z);
    let smi = sqrt_upper(-Complex64::i()); // 2^{-1/2} (-1 + i)
    Complex64::i() * s - Complex64::i() * smi - (z + Complex64::i()) * FRAC_1_SQRT_2
}

/// Diagonal inner product (u_j(i), (-Delta - z)^{-1} u_j(i)) in closed form:
/// (4 pi)^{-1} (z^2 + 1)^{-1} [i z^{1/2} - i (-i)^{1/2} - 2^{-1/2}(z + i)].
///
/// The singularities at z = +-i are removable; inside a window of radius
/// 1e-6 around them the value comes from the Taylor expansion of the
/// numerator, so the function is finite and smooth there.
pub fn gram_diag(z: ComplexEnergy) -> Result<Complex64> {
    require_off_positive_axis(z)?;
    let zv = z.value();
    let i = Complex64::i();
    for pole in [i, -i] {
        let e = zv - pole;
        if e.norm() < REMOVABLE_WINDOW {
            // N(z) = N'(p) e + N''(p) e^2/2 + N'''(p) e^3/6 with N(p) = 0,
            // divided by the exact regular factor of (z - i)(z + i).
            let sp = sqrt_upper(pole);
            let n1 = i / (2.0 * sp) - Complex64::new(FRAC_1_SQRT_2, 0.0);
            let n2 = -i / (4.0 * sp * pole);
            let n3 = 3.0 * i / (8.0 * sp * pole * pole);
            let series = n1 + n2 * e / 2.0 + n3 * e * e / 6.0;
            let other = zv + pole; // (z + i) for p = i, (z - i) for p = -i
            return Ok(series / other / (4.0 * PI));
        }
    }
    Ok(gram_diag_numerator(zv) / (zv * zv + 1.0) / (4.0 * PI))
}

/// dG0/dz at fixed separation: G0(z, r) * i r / (2 z^{1/2}).
fn g0_3d_dz(z: Complex64, r: f64) -> Complex64 {
    let s = sqrt_upper(z);
    let g = (Complex64::i() * s * r).exp() / (4.0 * PI * r);
    g * Complex64::i() * r / (2.0 * s)
}

/// Second and third z-derivatives of G0 at fixed separation.
fn g0_3d_dz2(z: Complex64, r: f64) -> Complex64 {
    let s = sqrt_upper(z);
    let g = (Complex64::i() * s * r).exp() / (4.0 * PI * r);
    let a = Complex64::i() * r / 2.0;
    g * (a * a / z - a / (2.0 * s * z))
}

fn g0_3d_dz3(z: Complex64, r: f64) -> Complex64 {
    let s = sqrt_upper(z);
    let g = (Complex64::i() * s * r).exp() / (4.0 * PI * r);
    let a = Complex64::i() * r / 2.0;
    g * (a * a * a / (s * z) - 1.5 * a * a / (z * z) + 0.75 * a / (s * z * z))
}

/// Off-diagonal inner product (u_j(i), (-Delta - z)^{-1} u_{j'}(i)):
/// (z^2+1)^{-1} [G0(z, r) - G0(-i, r)] - (z - i)^{-1} Im(G0(i, r)).
///
/// Removable singularities at z = +-i are evaluated by Taylor expansion in
/// the same 1e-6 window as [`gram_diag`].
pub fn gram_offdiag(z: ComplexEnergy, r: f64) -> Result<Complex64> {
    require_off_positive_axis(z)?;
    check_radius(r)?;
    let zv = z.value();
    let i = Complex64::i();
    let g_i = g0_3d(ComplexEnergy::new(i), r)?;
    let g_mi = g_i.conj();
    let im_gi = Complex64::new(g_i.im, 0.0);

    let e_plus = zv - i;
    let e_minus = zv + i;
    if e_plus.norm() < REMOVABLE_WINDOW {
        // F(z) = (z-i)^{-1} B(z), B(z) = (G0(z)-G0(-i))/(z+i) - Im G0(i),
        // B(i) = 0. Expand B around i.
        let d1 = g0_3d_dz(i, r);
        let d2 = g0_3d_dz2(i, r);
        let d3 = g0_3d_dz3(i, r);
        let den = 2.0 * i; // w(i) exactly; all coefficients live at the pole
        let dg = g_i - g_mi;
        let b1 = d1 / den - dg / (den * den);
        let b2 = d2 / den - 2.0 * d1 / (den * den) + 2.0 * dg / (den * den * den);
        let b3 = d3 / den - 3.0 * d2 / (den * den) + 6.0 * d1 / (den * den * den)
            - 6.0 * dg / (den * den * den * den);
        return Ok(b1 + b2 * e_plus / 2.0 + b3 * e_plus * e_plus / 6.0);
    }
    if e_minus.norm() < REMOVABLE_WINDOW {
        // Only the (z^2+1)^{-1} factor is singular here:
        // (G0(z)-G0(-i))/(z+i) -> Taylor in e = z + i, then divide by (z-i).
        let d1 = g0_3d_dz(-i, r);
        let d2 = g0_3d_dz2(-i, r);
        let d3 = g0_3d_dz3(-i, r);
        let series = d1 + d2 * e_minus / 2.0 + d3 * e_minus * e_minus / 6.0;
        return Ok(series / (zv - i) - im_gi / (zv - i));
    }
    let g_z = g0_3d(z, r)?;
    Ok((g_z - g_mi) / (zv * zv + 1.0) - im_gi / (zv - i))
}
