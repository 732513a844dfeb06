//! Seeded generation of regular completion chains with known ground-truth
//! structure, used by the CLI and the acceptance corpus.
//!
//! A generated completion is the kernel chain of a surjection
//! `Z^s → ∏_p (Z_p^{d_p} × F_p)` truncated at the requested depth, with a
//! gentle unimodular scramble so the dense directions are not axis-aligned.

use crate::completions::{validate_chain, CompletionChain};
use crate::exactla::{preimage_lattice, IntMatrix, Lattice};
use num::{BigInt, One};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Ground-truth structure of a generated completion, per prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeSpec {
    pub d_p: usize,
    pub torsion_exponents: Vec<u32>,
}

impl PrimeSpec {
    pub fn generators_needed(&self) -> usize {
        self.d_p + self.torsion_exponents.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionSpec {
    pub ambient_rank: usize,
    pub per_prime: BTreeMap<u64, PrimeSpec>,
}

/// Deterministic RNG for fixture generation.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Draws a random completion shape: per prime, a free rank and torsion
/// exponents fitting inside the ambient rank.
pub fn random_spec<R: Rng>(rng: &mut R, ambient_rank: usize, primes: &BTreeSet<u64>, max_exp: u32) -> CompletionSpec {
    let mut per_prime = BTreeMap::new();
    for &p in primes {
        loop {
            let d_p = rng.gen_range(0..=ambient_rank);
            let max_torsion = ambient_rank - d_p;
            let t = rng.gen_range(0..=max_torsion.min(2));
            let mut torsion: Vec<u32> = (0..t).map(|_| rng.gen_range(1..=max_exp)).collect();
            torsion.sort();
            if d_p + t > 0 || primes.len() == 1 {
                per_prime.insert(p, PrimeSpec { d_p, torsion_exponents: torsion });
                break;
            }
        }
    }
    CompletionSpec {
        ambient_rank,
        per_prime,
    }
}

/// A gentle unimodular scramble: a permutation, sign flips and up to two
/// elementary column additions with unit coefficient. Keeps the summands
/// needed by reconstruction searches within small coefficient bounds.
fn random_unimodular<R: Rng>(rng: &mut R, s: usize) -> IntMatrix {
    let mut m = IntMatrix::identity(s);
    // permutation
    let mut perm: Vec<usize> = (0..s).collect();
    for i in (1..s).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let mut permuted = IntMatrix::zeros(s, s);
    for (i, &pi) in perm.iter().enumerate() {
        permuted.set(i, pi, BigInt::one());
    }
    m = permuted.mul(&m);
    // sign flips
    for i in 0..s {
        if rng.gen_bool(0.5) {
            let neg = IntMatrix::from_fn(s, s, |a, b| {
                if a == b {
                    if a == i {
                        BigInt::from(-1)
                    } else {
                        BigInt::one()
                    }
                } else {
                    BigInt::from(0)
                }
            });
            m = neg.mul(&m);
        }
    }
    // up to two shears with coefficient ±1
    let shears = rng.gen_range(0..=2);
    for _ in 0..shears {
        let a = rng.gen_range(0..s);
        let mut b = rng.gen_range(0..s);
        if a == b {
            b = (b + 1) % s;
        }
        if a == b {
            continue;
        }
        let coeff = if rng.gen_bool(0.5) { 1 } else { -1 };
        let shear = IntMatrix::from_fn(s, s, |i, j| {
            if i == j {
                BigInt::one()
            } else if i == a && j == b {
                BigInt::from(coeff)
            } else {
                BigInt::from(0)
            }
        });
        m = shear.mul(&m);
    }
    m
}

/// Emits the kernel chain `Γ_k = {x : A x ≡ 0 mod D_k}` of a dense map onto
/// the product of the per-prime targets, at levels `1..=depth`.
pub fn generate_chain<R: Rng>(
    spec: &CompletionSpec,
    depth: usize,
    rng: &mut R,
) -> CompletionChain {
    let s = spec.ambient_rank;
    let scramble = random_unimodular(rng, s);
    let mut levels: Vec<Lattice> = vec![Lattice::standard(s); depth];
    for (&p, ps) in &spec.per_prime {
        let g = ps.generators_needed();
        assert!(g <= s, "target needs at most ambient_rank generators");
        if g == 0 {
            continue;
        }
        // surjection rows: the first g scrambled coordinates
        let a = IntMatrix::from_fn(g, s, |i, j| scramble.at(i, j).clone());
        for k in 1..=depth {
            // modulus pattern: p^k on free rows, p^min(k, e) on torsion rows
            let diag = IntMatrix::from_fn(g, g, |i, j| {
                if i != j {
                    return BigInt::from(0);
                }
                let e = if i < ps.d_p {
                    k as u32
                } else {
                    (k as u32).min(ps.torsion_exponents[i - ps.d_p])
                };
                BigInt::from(p).pow(e)
            });
            let target = Lattice::from_integer_columns(g, &(0..g).map(|j| diag.column(j)).collect::<Vec<_>>());
            let gamma_kp = preimage_lattice(&a, &target);
            levels[k - 1] = crate::exactla::lattice_intersect(&levels[k - 1], &gamma_kp)
                .expect("same ambient");
        }
    }
    let primes: BTreeSet<u64> = spec.per_prime.keys().copied().collect();
    validate_chain(levels, primes).expect("generated chains are valid")
}

/// Convenience wrapper used by the CLI and the acceptance corpus: draws a
/// shape and a chain from one seed.
pub fn seeded_fixture(
    seed: u64,
    ambient_rank: usize,
    primes: &BTreeSet<u64>,
    depth: usize,
    max_exp: u32,
) -> (CompletionSpec, CompletionChain) {
    let mut rng = rng_from_seed(seed);
    let spec = random_spec(&mut rng, ambient_rank, primes, max_exp);
    let chain = generate_chain(&spec, depth, &mut rng);
    (spec, chain)
}

/// Deterministic corpus of seeds for acceptance runs.
pub fn corpus_seeds(count: usize, base: u64) -> Vec<u64> {
    (0..count as u64).map(|i| base.wrapping_add(i * 7919)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::completions::limit_structure;

    #[test]
    fn generation_is_deterministic() {
        let primes = BTreeSet::from([2]);
        let (s1, c1) = seeded_fixture(7, 3, &primes, 5, 3);
        let (s2, c2) = seeded_fixture(7, 3, &primes, 5, 3);
        assert_eq!(s1, s2);
        assert_eq!(c1.levels(), c2.levels());
        let (_, c3) = seeded_fixture(8, 3, &primes, 5, 3);
        assert!(c1.levels() != c3.levels() || c1.level_index(5) == c3.level_index(5));
    }

    #[test]
    fn generated_chains_match_declared_structure() {
        for seed in [1u64, 2, 3, 10, 42] {
            let primes = BTreeSet::from([2, 3]);
            let (spec, chain) = seeded_fixture(seed, 3, &primes, 6, 2);
            let ls = limit_structure(&chain).expect("generated chains are regular");
            for (&p, ps) in &spec.per_prime {
                let pl = &ls.per_prime[&p];
                assert_eq!(pl.d_p, ps.d_p, "seed {seed} prime {p}");
                let expect: Vec<_> = ps
                    .torsion_exponents
                    .iter()
                    .map(|&e| num::BigUint::from(p).pow(e))
                    .collect();
                assert_eq!(pl.torsion.invariant_factors, expect, "seed {seed} prime {p}");
            }
        }
    }
}
