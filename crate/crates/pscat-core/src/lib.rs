//! Forward and inverse scattering for n generalized point interactions in
//! three dimensions.
//!
//! The toolkit evaluates the perturbed Green's function, scattering
//! amplitude and S-matrix of a finite set of point scatterers in closed
//! form, verifies the physical constraints these objects must satisfy
//! (optical theorem, reciprocity, reality, unitarity), synthesizes
//! measurement data on the plane {x3 = 0}, and reconstructs scatterer
//! positions and the boundary matrix from such plane data.
//!
//! The crate is no_std-compatible (alloc required); file formats and the
//! command-line front end live in the companion `pscat` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod greens;
pub mod hankel;
pub mod inverse;
pub mod krein;
pub mod linalg;
pub mod quadrature;
pub mod scattering;

pub use error::{Error, Result};
pub use greens::ComplexEnergy;
pub use krein::{Configuration, KreinMatrix, ThetaMatrix};
pub use quadrature::{Direction, SphereQuadrature};
