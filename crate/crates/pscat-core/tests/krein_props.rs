//! Property tests of the Krein-matrix module: the resolvent-difference
//! identity, Herglotz and conjugation structure, the local-interaction
//! equivalence, and the boundary-parameter maps against an independent
//! matrix-function oracle.

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use proptest::prelude::*;
use pscat_core::greens::ComplexEnergy;
use pscat_core::krein::{
    alpha_to_config, gamma_matrix, krein_identity_residual, krein_matrix, perturbed_green,
    perturbed_green_local, tan_half_to_theta, theta_to_tan_half, Configuration, ThetaMatrix,
};
use pscat_core::linalg::{hermitian_defect, hermitize, CMatrix};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
    Vector3::new(x, y, z)
}

/// Deterministic pseudo-random stream for the non-proptest loops.
struct Lcg(u64);

impl Lcg {
    fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((self.0 >> 11) as f64) / (1u64 << 53) as f64
    }

    fn in_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

fn random_points(rng: &mut Lcg, n: usize, min_sep: f64) -> Vec<Vector3<f64>> {
    let mut pts: Vec<Vector3<f64>> = Vec::new();
    while pts.len() < n {
        let p = v(
            rng.in_range(-2.0, 2.0),
            rng.in_range(-2.0, 2.0),
            rng.in_range(-2.0, 2.0),
        );
        if pts.iter().all(|q| (p - q).norm() >= min_sep) {
            pts.push(p);
        }
    }
    pts
}

fn random_hermitian(rng: &mut Lcg, n: usize, scale: f64) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = c(rng.in_range(-scale, scale), 0.0);
        for jp in j + 1..n {
            let e = c(rng.in_range(-scale, scale), rng.in_range(-scale, scale));
            m[(j, jp)] = e;
            m[(jp, j)] = e.conj();
        }
    }
    m
}

fn random_config(rng: &mut Lcg, n: usize) -> Configuration {
    let xi = random_points(rng, n, 0.3);
    let t = random_hermitian(rng, n, 1.0);
    Configuration::new(xi, t).unwrap()
}

#[test]
fn krein_identity_residual_over_random_configs() {
    let mut rng = Lcg(0xA11CE);
    for trial in 0..100 {
        let n = 1 + (trial % 4);
        let cfg = random_config(&mut rng, n);
        let z1 = ComplexEnergy::from_parts(rng.in_range(-5.0, -0.1), rng.in_range(-2.0, 2.0));
        let z2 = ComplexEnergy::from_parts(rng.in_range(-5.0, -0.1), rng.in_range(-2.0, 2.0));
        let res = krein_identity_residual(&cfg, z1, z2).unwrap();
        assert!(res < 1e-10, "trial {trial} (n = {n}): residual {res:.3e}");
    }
}

#[test]
fn herglotz_property_in_the_upper_half_plane() {
    // Im(P(z)) is positive definite for Im z > 0
    let mut rng = Lcg(0xBEEF);
    for trial in 0..200 {
        let n = 1 + (trial % 3);
        let cfg = random_config(&mut rng, n);
        let z = ComplexEnergy::from_parts(rng.in_range(-3.0, 3.0), rng.in_range(0.1, 3.0));
        let km = krein_matrix(&cfg, z).unwrap();
        assert!(
            pscat_core::linalg::imaginary_part_positive_definite(&km.p),
            "trial {trial}: Im P not positive definite at z = {:?}",
            z.value()
        );
    }
}

#[test]
fn conjugation_symmetry_of_p() {
    // P(conj z) = P(z)^* entrywise
    let mut rng = Lcg(0xC0FFEE);
    for trial in 0..100 {
        let n = 1 + (trial % 3);
        let cfg = random_config(&mut rng, n);
        let re = rng.in_range(-3.0, 1.0);
        let im = rng.in_range(0.2, 2.0);
        let p_up = krein_matrix(&cfg, ComplexEnergy::from_parts(re, im)).unwrap().p;
        let p_down = krein_matrix(&cfg, ComplexEnergy::from_parts(re, -im)).unwrap().p;
        let defect = (&p_down - p_up.adjoint()).norm();
        assert!(
            defect <= 1e-12 * p_up.norm().max(1.0),
            "trial {trial}: conjugation defect {defect:.3e}"
        );
    }
}

#[test]
fn local_interaction_equivalence() {
    // the alpha-converted configuration and the direct local-matrix route
    // produce the same perturbed kernel
    let mut rng = Lcg(0xD1CE);
    for trial in 0..50 {
        let n = 1 + (trial % 3);
        let xi = random_points(&mut rng, n, 0.4);
        let alpha: Vec<f64> = (0..n).map(|_| rng.in_range(-1.0, 1.5)).collect();
        let cfg = alpha_to_config(&alpha, xi.clone()).unwrap();
        let z = ComplexEnergy::from_parts(rng.in_range(-4.0, -0.5), rng.in_range(-1.0, 1.0));
        let x = v(rng.in_range(2.1, 3.0), rng.in_range(-1.0, 1.0), rng.in_range(-1.0, 1.0));
        let y = v(rng.in_range(-3.0, -2.1), rng.in_range(-1.0, 1.0), rng.in_range(-1.0, 1.0));
        let via_general = perturbed_green(&cfg, z, &x, &y).unwrap();
        // the direct route consumes the ORIGINAL point order; the general
        // route canonicalizes internally, the kernel cannot depend on it
        let via_local = perturbed_green_local(&alpha, &xi, z, &x, &y).unwrap();
        assert!(
            (via_general - via_local).norm() <= 1e-12 * via_local.norm().max(1e-3),
            "trial {trial}: {via_general} vs {via_local}"
        );
    }
}

#[test]
fn gamma_matrix_equals_p_inverse_for_local_case() {
    let mut rng = Lcg(0xFACE);
    for _ in 0..25 {
        let n = 2 + (rng.next_f64() * 2.0) as usize;
        let xi = random_points(&mut rng, n, 0.4);
        let alpha: Vec<f64> = (0..n).map(|_| rng.in_range(-1.0, 1.5)).collect();
        let cfg = alpha_to_config(&alpha, xi.clone()).unwrap();
        let z = ComplexEnergy::from_parts(rng.in_range(-4.0, -0.5), rng.in_range(-1.0, 1.0));
        // evaluate gamma in the configuration's canonical ordering
        let perm: Vec<usize> = (0..n)
            .map(|j| cfg.xi().iter().position(|q| (q - xi[j]).norm() == 0.0).unwrap())
            .collect();
        let mut alpha_sorted = vec![0.0; n];
        for (j, &pj) in perm.iter().enumerate() {
            alpha_sorted[pj] = alpha[j];
        }
        let gamma = gamma_matrix(&alpha_sorted, cfg.xi(), z).unwrap();
        let pinv = pscat_core::krein::p_inverse(&cfg, z).unwrap();
        assert!(
            (&gamma - &pinv).norm() <= 1e-13 * gamma.norm(),
            "Gamma and P^-1 disagree: {:.3e}",
            (&gamma - &pinv).norm()
        );
    }
}

#[test]
fn decoupling_at_large_separation() {
    // with diagonal T and scatterers 1e3 apart, off-diagonal entries of P
    // are negligible
    let xi = vec![v(0.0, 0.0, 0.0), v(1e3, 0.0, 0.0), v(0.0, 1e3, 0.0)];
    let mut t = CMatrix::zeros(3, 3);
    for j in 0..3 {
        t[(j, j)] = c(0.5 + 0.2 * j as f64, 0.0);
    }
    let cfg = Configuration::new(xi, t).unwrap();
    let km = krein_matrix(&cfg, ComplexEnergy::from_parts(-1.0, 0.0)).unwrap();
    for j in 0..3 {
        for jp in 0..3 {
            if j != jp {
                assert!(
                    km.p[(j, jp)].norm() < 1e-6,
                    "P[{j},{jp}] = {} not decoupled",
                    km.p[(j, jp)]
                );
            }
        }
    }
}

// --- independent matrix-function oracle for tan(theta/2) ---

fn matrix_mul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b
}

/// sin and cos of a Hermitian matrix by scaled Taylor series plus
/// double-angle recovery; independent of the eigendecomposition route.
fn sin_cos_by_scaling_and_squaring(a: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let scale = 1.0 / (1u64 << squarings) as f64;
    let a_small = a * c(scale, 0.0);
    // Taylor to machine precision for ||A|| <= 0.25
    let mut sin = CMatrix::zeros(n, n);
    let mut cos = CMatrix::identity(n, n);
    let mut term = CMatrix::identity(n, n); // A^k / k!
    for k in 1..=24 {
        term = matrix_mul(&term, &a_small) / c(k as f64, 0.0);
        match k % 4 {
            1 => sin += &term,
            2 => cos -= &term,
            3 => sin -= &term,
            _ => cos += &term,
        }
    }
    for _ in 0..squarings {
        let new_sin = matrix_mul(&sin, &cos) * c(2.0, 0.0);
        let new_cos = matrix_mul(&cos, &cos) * c(2.0, 0.0) - CMatrix::identity(n, n);
        sin = new_sin;
        cos = new_cos;
    }
    (sin, cos)
}

#[test]
fn tan_half_matches_scaling_and_squaring_oracle() {
    let mut rng = Lcg(0x7A57A);
    for trial in 0..30 {
        let n = 1 + (trial % 4);
        let theta_raw = random_hermitian(&mut rng, n, 1.2);
        let theta = match ThetaMatrix::new(theta_raw) {
            Ok(t) => t,
            Err(_) => continue, // excluded-set collision; next sample
        };
        let fast = theta_to_tan_half(&theta);
        let half = theta.matrix() * c(0.5, 0.0);
        let (sin, cos) = sin_cos_by_scaling_and_squaring(&half);
        let oracle = sin
            * cos
                .clone()
                .try_inverse()
                .expect("cos(theta/2) invertible away from the excluded set");
        assert!(
            (&fast - &oracle).norm() <= 1e-11 * (1.0 + oracle.norm()),
            "trial {trial}: eigen route vs series oracle differ by {:.3e}",
            (&fast - &oracle).norm()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tan_half_round_trip(entries in proptest::collection::vec(-1.4f64..1.4, 9)) {
        // Hermitian theta from 9 raw values (3x3), spectrum inside (-pi, pi)
        let mut theta = DMatrix::<Complex64>::zeros(3, 3);
        for j in 0..3 {
            theta[(j, j)] = c(entries[j], 0.0);
        }
        let mut k = 3;
        for j in 0..3 {
            for jp in j + 1..3 {
                let e = c(entries[k % 9], entries[(k + 1) % 9] * 0.3);
                theta[(j, jp)] = e;
                theta[(jp, j)] = e.conj();
                k += 2;
            }
        }
        // keep spectrum safely off the excluded set
        let theta = hermitize(&(theta * c(0.45, 0.0)));
        let tm = ThetaMatrix::new(theta.clone()).unwrap();
        let t = theta_to_tan_half(&tm);
        prop_assert!(hermitian_defect(&t) <= 1e-11 * t.norm().max(1.0));
        let back = tan_half_to_theta(&t).unwrap();
        let err = (back.matrix() - &theta).norm();
        prop_assert!(err <= 1e-10 * theta.norm().max(1.0), "round trip error {err:.3e}");
    }

    #[test]
    fn configuration_symmetry_flags(re in -1.0f64..1.0, im in -1.0f64..1.0) {
        let t = DMatrix::<Complex64>::from_row_slice(2, 2, &[
            c(0.4, 0.0), c(re, im),
            c(re, -im), c(-0.9, 0.0),
        ]);
        let cfg = Configuration::new(
            vec![v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0)],
            t,
        ).unwrap();
        // Hermitian by construction; symmetric exactly when off-diagonal imag vanishes
        prop_assert_eq!(cfg.is_symmetric(), im.abs() <= 1e-12);
        prop_assert_eq!(cfg.is_real(), im.abs() <= 1e-12);
    }
}
