//! Boundary element solvers for electromagnetic scattering by random shapes.
//!
//! The crate covers surface meshes and RWG spaces, Galerkin assembly of the
//! electric and magnetic field integral operators, EFIE and PMCHWT solves,
//! shape-derivative right-hand sides, and second moments of the far field via
//! full tensor solves or the sparse combination technique.

pub mod geometry;
pub mod mie;
pub mod operators;
pub mod quadrature;
pub mod shapederiv;
pub mod solve;
pub mod spaces;
pub mod tensor;
pub mod uq;
pub mod vec3;

pub use num_complex::Complex64 as C64;
