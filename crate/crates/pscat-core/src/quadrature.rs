//! Quadrature rules: Gauss-Legendre on [-1, 1] and rules on the unit sphere.
//!
//! The sphere rules discretize integrals over S^2. Small octahedrally
//! symmetric node sets (Lebedev style) are built in for degrees up to 7;
//! higher degrees fall back to a Gauss-Legendre (polar) x uniform (azimuth)
//! tensor product, which integrates all spherical harmonics of degree <= L
//! exactly.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{Error, Result};

const PI: f64 = core::f64::consts::PI;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
///
/// Newton iteration on the Legendre recurrence; nodes converge to machine
/// precision in a handful of steps.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            // p, dp: Legendre P_n and its derivative at x
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((-x, w));
    }
    // mirror to the full rule
    let mut full = Vec::with_capacity(n);
    full.extend(rule.iter().copied());
    for i in (0..n - m).rev() {
        let (x, w) = rule[i];
        full.push((-x, w));
    }
    full
}

/// A unit vector on S^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction(Vector3<f64>);

impl Direction {
    /// Normalizes the given vector. Errors on (near-)zero input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let v = Vector3::new(x, y, z);
        let n = v.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(Error::domain("direction vector must be nonzero and finite"));
        }
        Ok(Direction(v / n))
    }

    /// Polar angle theta from +z, azimuth phi.
    pub fn from_polar(theta: f64, phi: f64) -> Self {
        let (st, ct) = (libm::sin(theta), libm::cos(theta));
        let (sp, cp) = (libm::sin(phi), libm::cos(phi));
        Direction(Vector3::new(st * cp, st * sp, ct))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn dot(&self, other: &Vector3<f64>) -> f64 {
        self.0.dot(other)
    }

    pub fn negate(&self) -> Direction {
        Direction(-self.0)
    }
}

/// Quadrature rule on the unit sphere: weights sum to 4*pi and the rule is
/// exact for spherical harmonics up to `degree`.
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    nodes: Vec<Direction>,
    weights: Vec<f64>,
    degree: usize,
}

impl SphereQuadrature {
    /// Rule of the requested polynomial exactness degree (>= 1).
    ///
    /// Uses the fixed octahedral sets for degree <= 7, the tensor rule above.
    pub fn with_degree(degree: usize) -> Self {
        let degree = degree.max(1);
        match degree {
            1..=3 => Self::octahedral_6(),
            4..=5 => Self::octahedral_14(),
            6..=7 => Self::octahedral_26(),
            _ => Self::tensor(degree),
        }
    }

    /// Gauss-Legendre x uniform-azimuth tensor rule, exact to `degree`.
    pub fn tensor(degree: usize) -> Self {
        let degree = degree.max(1);
        let n_polar = degree / 2 + 1;
        let n_azimuth = degree + 1;
        let gl = gauss_legendre(n_polar);
        let mut nodes = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        let wphi = 2.0 * PI / n_azimuth as f64;
        for &(ct, w) in &gl {
            let st = libm::sqrt((1.0 - ct * ct).max(0.0));
            for a in 0..n_azimuth {
                let phi = wphi * a as f64;
                let (sp, cp) = (libm::sin(phi), libm::cos(phi));
                nodes.push(Direction(Vector3::new(st * cp, st * sp, ct)));
                weights.push(w * wphi);
            }
        }
        SphereQuadrature { nodes, weights, degree }
    }

    /// 6 octahedron vertices; exact to degree 3.
    fn octahedral_6() -> Self {
        let w = 4.0 * PI / 6.0;
        let nodes = axis_points();
        let weights = vec![w; 6];
        SphereQuadrature { nodes, weights, degree: 3 }
    }

    /// 6 vertices + 8 cube corners; exact to degree 5.
    fn octahedral_14() -> Self {
        let mut nodes = axis_points();
        let mut weights = vec![4.0 * PI / 15.0; 6];
        nodes.extend(corner_points());
        weights.extend(core::iter::repeat(4.0 * PI * 3.0 / 40.0).take(8));
        SphereQuadrature { nodes, weights, degree: 5 }
    }

    /// 6 vertices + 12 edge midpoints + 8 corners; exact to degree 7.
    fn octahedral_26() -> Self {
        let mut nodes = axis_points();
        let mut weights = vec![4.0 * PI / 21.0; 6];
        nodes.extend(edge_points());
        weights.extend(core::iter::repeat(4.0 * PI * 4.0 / 105.0).take(12));
        nodes.extend(corner_points());
        weights.extend(core::iter::repeat(4.0 * PI * 27.0 / 840.0).take(8));
        SphereQuadrature { nodes, weights, degree: 7 }
    }

    pub fn nodes(&self) -> &[Direction] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Quadrature inner product sum_q w_q conj(f_q) g_q.
    pub fn inner_product(
        &self,
        f: &[num_complex::Complex64],
        g: &[num_complex::Complex64],
    ) -> num_complex::Complex64 {
        debug_assert_eq!(f.len(), self.len());
        debug_assert_eq!(g.len(), self.len());
        let mut acc = num_complex::Complex64::new(0.0, 0.0);
        for ((w, fv), gv) in self.weights.iter().zip(f).zip(g) {
            acc += fv.conj() * gv * *w;
        }
        acc
    }

    /// Quadrature norm sqrt(sum_q w_q |f_q|^2).
    pub fn norm(&self, f: &[num_complex::Complex64]) -> f64 {
        let mut acc = 0.0;
        for (w, fv) in self.weights.iter().zip(f) {
            acc += w * fv.norm_sqr();
        }
        libm::sqrt(acc)
    }
}

fn axis_points() -> Vec<Direction> {
    let mut pts = Vec::with_capacity(6);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut v = Vector3::zeros();
            v[axis] = sign;
            pts.push(Direction(v));
        }
    }
    pts
}

fn edge_points() -> Vec<Direction> {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let mut pts = Vec::with_capacity(12);
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        for sa in [1.0, -1.0] {
            for sb in [1.0, -1.0] {
                let mut v = Vector3::zeros();
                v[a] = sa * s;
                v[b] = sb * s;
                pts.push(Direction(v));
            }
        }
    }
    pts
}

fn corner_points() -> Vec<Direction> {
    let s = 1.0 / libm::sqrt(3.0);
    let mut pts = Vec::with_capacity(8);
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                pts.push(Direction(Vector3::new(sx * s, sy * s, sz * s)));
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial(n: i64) -> f64 {
        let mut acc = 1.0;
        let mut k = n;
        while k > 1 {
            acc *= k as f64;
            k -= 2;
        }
        acc
    }

    /// Closed form for int_{S^2} x^a y^b z^c dS (zero if any exponent odd).
    fn monomial_integral(a: u32, b: u32, c: u32) -> f64 {
        if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
            return 0.0;
        }
        let (a, b, c) = (a as i64, b as i64, c as i64);
        4.0 * PI * double_factorial(a - 1) * double_factorial(b - 1) * double_factorial(c - 1)
            / double_factorial(a + b + c + 1)
    }

    fn check_exactness(rule: &SphereQuadrature) {
        let deg = rule.degree() as u32;
        for a in 0..=deg {
            for b in 0..=deg.saturating_sub(a) {
                for c in 0..=deg.saturating_sub(a + b) {
                    let mut acc = 0.0;
                    for (node, w) in rule.nodes().iter().zip(rule.weights()) {
                        let v = node.as_vector();
                        acc += w
                            * libm::pow(v.x, a as f64)
                            * libm::pow(v.y, b as f64)
                            * libm::pow(v.z, c as f64);
                    }
                    let exact = monomial_integral(a, b, c);
                    assert!(
                        (acc - exact).abs() < 1e-11,
                        "degree-{deg} rule wrong on x^{a} y^{b} z^{c}: {acc} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in [1, 2, 5, 16, 40] {
            let rule = gauss_legendre(n);
            assert_eq!(rule.len(), n);
            let total: f64 = rule.iter().map(|&(_, w)| w).sum();
            assert!((total - 2.0).abs() < 1e-14);
            // exact through degree 2n-1: check x^(2n-2)
            let p = 2 * n as i32 - 2;
            let num: f64 = rule.iter().map(|&(x, w)| w * libm::pow(x, p as f64)).sum();
            let exact = 2.0 / (p as f64 + 1.0);
            assert!((num - exact).abs() < 1e-13, "n={n}: {num} vs {exact}");
        }
    }

    #[test]
    fn sphere_weights_sum_to_full_solid_angle() {
        for degree in [3, 5, 7, 8, 15, 24] {
            let rule = SphereQuadrature::with_degree(degree);
            let total: f64 = rule.weights().iter().sum();
            assert!((total - 4.0 * PI).abs() < 1e-12, "degree {degree}: {total}");
            for node in rule.nodes() {
                assert!((node.as_vector().norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sphere_rules_are_exact_to_declared_degree() {
        for degree in [3, 5, 7, 8, 12, 24] {
            check_exactness(&SphereQuadrature::with_degree(degree));
        }
    }

    #[test]
    fn tensor_rule_covers_low_degrees_too() {
        check_exactness(&SphereQuadrature::tensor(5));
    }
}
