//! Number-field layer: ray-class tower data, the exterior-algebra
//! representation of the composition-factor K-classes with their boundary
//! maps, and the conjugacy decision pipeline for truncated arithmetic
//! semigroup actions.

pub mod group;
pub mod tower;
pub mod kclasses;
pub mod conjugacy;

pub use group::FiniteAbelianGroup;
pub use conjugacy::{
    build_truncated_conjugacy, derive_phi, match_families, truncated_action,
    verify_truncated_conjugacy, ActionState, ConjugacyCertificate, ConjugacyData,
    ConjugacyError, LevelMatch, MatchVerdict, PhiData, TruncatedAction,
};
pub use kclasses::{
    boundary, build_invariant_family, compose_d, family_from_value, family_to_value,
    psi_tilde, recover_p1_and_h, trace_tau, validate_boundary_tables, FamilyError,
    FamilyLevel, InvariantFamily, Truncation,
};
pub use tower::{
    builtin_rationals, field_from_value, field_to_value, galois_chain, NumberFieldData,
    PrimeInfo, TowerEntry, TowerError, TowerKey, Transition,
};
