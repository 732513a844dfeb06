//! profinitek: exact-arithmetic reconstruction of profinite completions of
//! finite-rank free abelian groups from the K-group data of the associated
//! crossed products, together with a desk-scale number-field layer that
//! decides conjugacy of arithmetic semigroup actions from families of
//! K-groups and boundary maps.
//!
//! All arithmetic is arbitrary-precision and exact. See the README for the
//! CLI surface and the fixture file formats.

pub mod exactla;
pub mod completions;
pub mod exterior;
pub mod kgroups;
pub mod recon;
pub mod fixtures;
pub mod gen;
pub mod report;
pub mod bostconnes;

pub use exactla::{AbelianStructure, IntMatrix, LaError, Lattice, Rat};
