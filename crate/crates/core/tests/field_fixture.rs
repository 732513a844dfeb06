//! Validation of the shipped quadratic-field fixture.

use num::BigUint;
use profinitek::bostconnes::{
    build_invariant_family, field_from_value, field_to_value, galois_chain, match_families,
    recover_p1_and_h, MatchVerdict,
};
use profinitek::bostconnes::tower::builtin_rationals;
use profinitek::exactla::{lattice_index, Lattice};
use profinitek::fixtures::to_canonical_string;
use std::collections::BTreeMap;

fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/q_sqrt_minus5.field.json")
}

#[test]
fn fixture_loads_and_roundtrips_bit_exact() {
    let text = std::fs::read_to_string(fixture_path()).unwrap();
    let field = field_from_value(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(field.h1, BigUint::from(2u32));
    let back = to_canonical_string(&field_to_value(&field));
    assert_eq!(back, text, "re-serialization is bit-exact");
}

#[test]
fn fixture_recovers_class_data() {
    let text = std::fs::read_to_string(fixture_path()).unwrap();
    let field = field_from_value(&serde_json::from_str(&text).unwrap()).unwrap();
    // constant index-2 chain at the trivial level: the class-map kernel
    let chain = galois_chain(&field, &[], 2).unwrap();
    assert_eq!(
        lattice_index(&chain.level(1), &Lattice::standard(3)).unwrap(),
        BigUint::from(2u32)
    );
    // family over the empty pool recovers h = 2 and the index-2 lattice
    let family = build_invariant_family(&field, &[], 2).unwrap();
    let (p1, h) = recover_p1_and_h(&family).unwrap();
    assert_eq!(h, BigUint::from(2u32));
    assert_eq!(p1, chain.level(1));
}

#[test]
fn rationals_mismatch_at_stage_h() {
    let text = std::fs::read_to_string(fixture_path()).unwrap();
    let quad = field_from_value(&serde_json::from_str(&text).unwrap()).unwrap();
    let quad_family = build_invariant_family(&quad, &[], 2).unwrap();
    // a rationals truncation with three marked primes pairs with the three
    // quadratic primes
    let q = builtin_rationals(&[2, 5, 7], &[], 2).unwrap();
    let q_family = build_invariant_family(&q, &[], 2).unwrap();
    let chi: BTreeMap<String, String> = [("2", "p2"), ("5", "p3"), ("7", "p3b")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    match match_families(&q_family, &quad_family, &chi, 2).unwrap() {
        MatchVerdict::Mismatch { stage, .. } => assert_eq!(stage, "h"),
        MatchVerdict::Conjugacy(_) => panic!("distinct class numbers cannot match"),
    }
}
