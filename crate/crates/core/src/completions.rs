//! Pro-N completions of finite-rank free abelian groups, encoded as
//! decreasing chains of finite-index sublattices of `Z^s`.
//!
//! A completion target never materializes: everything downstream is checked
//! on the chain itself, and the structure of the limit is summarized by
//! [`LimitStructure`].

use crate::exactla::{
    lattice_index, quotient_structure, AbelianStructure, IntMatrix, Lattice,
};
use num::{BigInt, BigUint, One, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompletionError {
    #[error("level {0} is not contained in level {1}")]
    NotDecreasing(usize, usize),
    #[error("level {level} has index with prime factor {prime} outside the declared prime set")]
    IndexNotSmooth { level: usize, prime: u64 },
    #[error("level {0} is not a full-rank sublattice of the standard lattice")]
    NotFiniteIndex(usize),
    #[error("chain has no levels")]
    Empty,
    #[error("prime {0} is not in the declared prime set")]
    PrimeNotInN(u64),
    #[error("chain is not regular for prime {0}; supply a deeper or regularized chain")]
    NotRegular(u64),
}

/// Exponent of a prime inside a supernatural number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Exp {
    Finite(i64),
    Infinite,
}

impl Exp {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Exp::Infinite)
    }
}

/// Formal product `∏ p^{l_p}` with finitely many exponents, `l_p` possibly
/// infinite. Comparison, product and divisibility are coordinate-wise.
/// Exponents are carried signed so that divisibility orders of elements
/// with denominators stay representable; the standard supernatural numbers
/// are the nonnegative ones.
#[derive(Clone, PartialEq, Eq, Default)]
pub struct SupernaturalNumber {
    exponents: BTreeMap<u64, Exp>,
}

impl fmt::Debug for SupernaturalNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for (p, e) in &self.exponents {
            if !first {
                write!(f, "*")?;
            }
            first = false;
            match e {
                Exp::Finite(k) => write!(f, "{p}^{k}")?,
                Exp::Infinite => write!(f, "{p}^inf")?,
            }
        }
        Ok(())
    }
}

impl SupernaturalNumber {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn from_prime_power(p: u64, e: Exp) -> Self {
        let mut s = Self::default();
        s.set(p, e);
        s
    }

    /// Factors a positive integer over an explicit prime list; any
    /// remaining cofactor is returned separately.
    pub fn factor_over(n: &BigUint, primes: &BTreeSet<u64>) -> (Self, BigUint) {
        let mut s = Self::default();
        let mut rest = n.clone();
        for &p in primes {
            let bp = BigUint::from(p);
            let mut e = 0i64;
            while !rest.is_zero() && (&rest % &bp).is_zero() {
                rest /= &bp;
                e += 1;
            }
            if e > 0 {
                s.set(p, Exp::Finite(e));
            }
        }
        (s, rest)
    }

    pub fn set(&mut self, p: u64, e: Exp) {
        if e == Exp::Finite(0) {
            self.exponents.remove(&p);
        } else {
            self.exponents.insert(p, e);
        }
    }

    pub fn exponent(&self, p: u64) -> Exp {
        *self.exponents.get(&p).unwrap_or(&Exp::Finite(0))
    }

    pub fn exponents(&self) -> &BTreeMap<u64, Exp> {
        &self.exponents
    }

    pub fn is_one(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.exponents.values().all(|e| !e.is_infinite())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&p, &e) in &other.exponents {
            let combined = match (out.exponent(p), e) {
                (Exp::Infinite, _) | (_, Exp::Infinite) => Exp::Infinite,
                (Exp::Finite(a), Exp::Finite(b)) => Exp::Finite(a + b),
            };
            out.set(p, combined);
        }
        out
    }

    pub fn divides(&self, other: &Self) -> bool {
        self.exponents.iter().all(|(&p, &e)| match (e, other.exponent(p)) {
            (_, Exp::Infinite) => true,
            (Exp::Infinite, Exp::Finite(_)) => false,
            (Exp::Finite(a), Exp::Finite(b)) => a <= b,
        })
    }

    /// The integer value, when every exponent is finite and nonnegative.
    pub fn to_integer(&self) -> Option<BigUint> {
        let mut acc = BigUint::one();
        for (&p, &e) in &self.exponents {
            match e {
                Exp::Finite(k) if k >= 0 => {
                    acc *= BigUint::from(p).pow(k as u32);
                }
                _ => return None,
            }
        }
        Some(acc)
    }

    pub fn from_integer(n: &BigUint, primes: &BTreeSet<u64>) -> Option<Self> {
        let (s, rest) = Self::factor_over(n, primes);
        if rest.is_one() {
            Some(s)
        } else {
            None
        }
    }
}

/// A decreasing chain `Γ_1 ⊇ Γ_2 ⊇ …` of finite-index sublattices of `Z^s`
/// whose indices factor over the declared prime set. Level 0 is implicitly
/// `Z^s` itself.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CompletionChain {
    ambient_rank: usize,
    primes: BTreeSet<u64>,
    levels: Vec<Lattice>,
}

impl CompletionChain {
    pub fn ambient_rank(&self) -> usize {
        self.ambient_rank
    }

    pub fn primes(&self) -> &BTreeSet<u64> {
        &self.primes
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Level lattice; `level(0)` is the standard lattice.
    pub fn level(&self, k: usize) -> Lattice {
        if k == 0 {
            Lattice::standard(self.ambient_rank)
        } else {
            self.levels[k.min(self.levels.len()) - 1].clone()
        }
    }

    pub fn levels(&self) -> &[Lattice] {
        &self.levels
    }

    pub fn level_index(&self, k: usize) -> BigUint {
        lattice_index(&self.level(k), &Lattice::standard(self.ambient_rank))
            .expect("chain levels are finite index")
    }
}

/// Verifies decreasingness and N-smoothness of the indices and returns the
/// canonicalized chain. Chains need not be separating and may be constant.
pub fn validate_chain(
    raw_levels: Vec<Lattice>,
    primes: BTreeSet<u64>,
) -> Result<CompletionChain, CompletionError> {
    if raw_levels.is_empty() {
        return Err(CompletionError::Empty);
    }
    let ambient = raw_levels[0].ambient_rank();
    let standard = Lattice::standard(ambient);
    for (k, level) in raw_levels.iter().enumerate() {
        if level.ambient_rank() != ambient
            || !level.is_full_rank()
            || !standard.contains_lattice(level)
        {
            return Err(CompletionError::NotFiniteIndex(k + 1));
        }
        let index = lattice_index(level, &standard).map_err(|_| CompletionError::NotFiniteIndex(k + 1))?;
        let (_, rest) = SupernaturalNumber::factor_over(&index, &primes);
        if !rest.is_one() {
            let p = smallest_prime_factor(&rest);
            return Err(CompletionError::IndexNotSmooth { level: k + 1, prime: p });
        }
    }
    for k in 1..raw_levels.len() {
        if !raw_levels[k - 1].contains_lattice(&raw_levels[k]) {
            return Err(CompletionError::NotDecreasing(k + 1, k));
        }
    }
    Ok(CompletionChain {
        ambient_rank: ambient,
        primes,
        levels: raw_levels,
    })
}

fn smallest_prime_factor(n: &BigUint) -> u64 {
    let mut p = 2u64;
    loop {
        if (n % BigUint::from(p)).is_zero() {
            return p;
        }
        p += 1;
        if p > 1_000_000 {
            // indices in this artifact are desk scale; give up gracefully
            return 0;
        }
    }
}

/// Verdict of the mutual-cofinality test between two chains.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CofinalVerdict {
    /// For every level `k ≤ depth` of either chain there is a level of the
    /// other contained in it; the witness pairs `(k, m)` are recorded for
    /// both directions.
    Equivalent {
        forward: Vec<(usize, usize)>,
        backward: Vec<(usize, usize)>,
    },
    NotEquivalent {
        level: usize,
        counterexample: Vec<BigInt>,
    },
}

impl CofinalVerdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, CofinalVerdict::Equivalent { .. })
    }
}

/// Two quotient chains of the same `Z^s` present equivalent completions
/// exactly when they are mutually cofinal; this checks that on the available
/// finite data down to `depth`.
pub fn cofinal_equivalent(c1: &CompletionChain, c2: &CompletionChain, depth: usize) -> CofinalVerdict {
    assert_eq!(
        c1.ambient_rank(),
        c2.ambient_rank(),
        "cofinality needs a common ambient"
    );
    let mut forward = Vec::new();
    for k in 1..=depth.min(c1.depth()) {
        match find_contained_level(c2, &c1.level(k)) {
            Some(m) => forward.push((k, m)),
            None => {
                return CofinalVerdict::NotEquivalent {
                    level: k,
                    counterexample: witness_vector(c2, &c1.level(k)),
                }
            }
        }
    }
    let mut backward = Vec::new();
    for k in 1..=depth.min(c2.depth()) {
        match find_contained_level(c1, &c2.level(k)) {
            Some(m) => backward.push((k, m)),
            None => {
                return CofinalVerdict::NotEquivalent {
                    level: k,
                    counterexample: witness_vector(c1, &c2.level(k)),
                }
            }
        }
    }
    CofinalVerdict::Equivalent { forward, backward }
}

fn find_contained_level(chain: &CompletionChain, target: &Lattice) -> Option<usize> {
    (1..=chain.depth()).find(|&m| target.contains_lattice(&chain.level(m)))
}

fn witness_vector(chain: &CompletionChain, target: &Lattice) -> Vec<BigInt> {
    let deepest = chain.level(chain.depth());
    for v in deepest.basis_vectors() {
        if !target.contains_vector(&v) {
            return v.iter().map(|x| x.to_integer()).collect();
        }
    }
    Vec::new()
}

/// The unique intermediate lattice `Γ ⊆ X ⊆ Z^s` whose index is the p-part
/// of `[Z^s : Γ]`, computed through the Smith form of the inclusion.
pub fn p_part_lattice(level: &Lattice, p: u64) -> Lattice {
    let s = level.ambient_rank();
    let decomp = crate::exactla::snf(level.numerator());
    let bp = BigInt::from(p);
    // X = U^{-1} diag(p^{v_p(d_i)}) Z^s for Γ = U^{-1} D Z^s
    let mut diag = Vec::with_capacity(s);
    for i in 0..s {
        let mut d = decomp.d.at(i, i).clone();
        let mut ppow = BigInt::one();
        while (&d % &bp).is_zero() {
            d /= &bp;
            ppow *= &bp;
        }
        diag.push(ppow);
    }
    let u_inv = invert_unimodular(&decomp.u);
    let cols: Vec<Vec<BigInt>> = (0..s)
        .map(|j| {
            let mut col = u_inv.column(j);
            for x in &mut col {
                *x *= &diag[j];
            }
            col
        })
        .collect();
    // the p-part construction reads the Smith form of the numerator, which
    // is the inclusion matrix only for integral lattices
    assert!(
        level.denominator().is_one(),
        "p-part is defined for sublattices of the standard lattice"
    );
    Lattice::from_integer_columns(s, &cols)
}

fn invert_unimodular(u: &IntMatrix) -> IntMatrix {
    let n = u.rows();
    let id = IntMatrix::identity(n);
    // solve U X = I column by column over the integers via HNF of U
    // (U unimodular, so the rational inverse is integral)
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let target: Vec<BigInt> = id.column(j);
        cols.push(solve_unimodular(u, &target));
    }
    IntMatrix::from_columns(n, &cols)
}

fn solve_unimodular(u: &IntMatrix, b: &[BigInt]) -> Vec<BigInt> {
    use crate::exactla::Rat;
    let target: Vec<Rat> = b.iter().map(|x| Rat::from_integer(x.clone())).collect();
    rational_solve(u, &target)
        .into_iter()
        .map(|c| {
            assert!(c.is_integer(), "unimodular solve must be integral");
            c.to_integer()
        })
        .collect()
}

fn rational_solve(u: &IntMatrix, b: &[crate::exactla::Rat]) -> Vec<crate::exactla::Rat> {
    use crate::exactla::Rat;
    let n = u.rows();
    let mut a: Vec<Vec<Rat>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Rat::from_integer(u.at(i, j).clone()))
                .collect()
        })
        .collect();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .expect("matrix is singular");
        a.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = a[col][col].clone();
        for j in 0..n {
            a[col][j] /= pivot.clone();
        }
        rhs[col] /= pivot;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let av = &a[col][j] * &f;
                    a[r][j] -= av;
                }
                let bv = &rhs[col] * &f;
                rhs[r] -= bv;
            }
        }
    }
    rhs
}

/// Chain of p-parts `{Γ_{k,p}}`; idempotent, and for distinct primes the
/// p-part chains intersect back to the original levels.
pub fn p_part_chain(c: &CompletionChain, p: u64) -> Result<CompletionChain, CompletionError> {
    if !c.primes.contains(&p) {
        return Err(CompletionError::PrimeNotInN(p));
    }
    let levels: Vec<Lattice> = c.levels.iter().map(|l| p_part_lattice(l, p)).collect();
    validate_chain(levels, BTreeSet::from([p]))
}

/// Structure of the limit per prime: free `Z_p`-rank, p-torsion and the
/// level at which the regularity certificate was established.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LimitStructure {
    pub per_prime: BTreeMap<u64, PrimeLimit>,
    pub certificate_level: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimeLimit {
    pub d_p: usize,
    pub torsion: AbelianStructure,
    pub certificate_level: usize,
}

impl LimitStructure {
    pub fn rank(&self) -> usize {
        self.per_prime.values().map(|pl| pl.d_p).max().unwrap_or(0)
    }
}

/// Certifies the regular tail of every p-part and reads off the limit shape
/// `Z_p^{d_p} × F_p`. The certificate at level `k0` demands, for every
/// consecutive pair from `k0` on: `p·Γ_k ⊆ Γ_{k+1} ⊆ Γ_k`, a constant index
/// ratio `p^d`, and an invariant-factor pattern in which the non-growing
/// exponents freeze while exactly `d` exponents increase by one.
pub fn limit_structure(c: &CompletionChain) -> Result<LimitStructure, CompletionError> {
    let mut per_prime = BTreeMap::new();
    let mut cert = 0usize;
    for &p in &c.primes {
        let pl = prime_limit(c, p)?;
        cert = cert.max(pl.certificate_level);
        per_prime.insert(p, pl);
    }
    Ok(LimitStructure {
        per_prime,
        certificate_level: cert,
    })
}

fn prime_limit(c: &CompletionChain, p: u64) -> Result<PrimeLimit, CompletionError> {
    let s = c.ambient_rank();
    let standard = Lattice::standard(s);
    // p-part lattices with the implicit level 0 = Z^s in front
    let mut parts = vec![standard.clone()];
    for l in &c.levels {
        parts.push(p_part_lattice(l, p));
    }
    let len = parts.len() - 1; // deepest explicit level
    let exps: Vec<Vec<u64>> = parts
        .iter()
        .map(|l| sorted_p_exponents(l, &standard, p))
        .collect();

    'outer: for k0 in 0..len {
        let mut d: Option<usize> = None;
        for k in k0..len {
            let cur = &parts[k];
            if !cur.contains_lattice(&parts[k + 1]) {
                continue 'outer;
            }
            let scaled = cur.scale(&crate::exactla::Rat::from_integer(BigInt::from(p)));
            if !parts[k + 1].contains_lattice(&scaled) {
                continue 'outer;
            }
            let ratio = lattice_index(&parts[k + 1], cur).expect("verified containment");
            let Some(e) = p_power_exponent(&ratio, p) else {
                continue 'outer;
            };
            match d {
                None => d = Some(e),
                Some(prev) if prev != e => continue 'outer,
                _ => {}
            }
            // invariant-factor pattern: frozen part identical, top d grow by 1
            let (a, b) = (&exps[k], &exps[k + 1]);
            let dd = e;
            if a.len() != s || b.len() != s {
                continue 'outer;
            }
            if a[..s - dd] != b[..s - dd] {
                continue 'outer;
            }
            for i in s - dd..s {
                if b[i] != a[i] + 1 {
                    continue 'outer;
                }
            }
        }
        let d = match d {
            Some(d) => d,
            None => continue 'outer,
        };
        let torsion_exps = &exps[k0][..s - d];
        let mut factors = Vec::new();
        for &e in torsion_exps {
            if e > 0 {
                factors.push(BigUint::from(p).pow(e as u32));
            }
        }
        factors.sort();
        return Ok(PrimeLimit {
            d_p: d,
            torsion: AbelianStructure {
                invariant_factors: factors,
                free_rank: 0,
            },
            certificate_level: k0,
        });
    }
    Err(CompletionError::NotRegular(p))
}

/// Ascending p-exponents of the invariant factors of `sup/sub`, padded with
/// zeros to the ambient rank.
fn sorted_p_exponents(sub: &Lattice, sup: &Lattice, p: u64) -> Vec<u64> {
    let q = quotient_structure(sub, sup).expect("p-part is a sublattice");
    let mut exps = vec![0u64; sup.rank() - q.invariant_factors.len()];
    for f in &q.invariant_factors {
        exps.push(p_power_exponent(f, p).expect("p-part quotient is a p-group") as u64);
    }
    exps
}

fn p_power_exponent(n: &BigUint, p: u64) -> Option<usize> {
    let bp = BigUint::from(p);
    let mut rest = n.clone();
    let mut e = 0usize;
    while (&rest % &bp).is_zero() {
        rest /= &bp;
        e += 1;
    }
    if rest.is_one() {
        Some(e)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactla::{hnf_basis, Rat};

    fn lat(gens: &[&[i64]], ambient: usize) -> Lattice {
        let g: Vec<Vec<Rat>> = gens
            .iter()
            .map(|r| r.iter().map(|&x| Rat::from_integer(BigInt::from(x))).collect())
            .collect();
        hnf_basis(&g, ambient).unwrap()
    }

    fn scaled_chain(scales: &[i64], ambient_diag: &[i64]) -> Vec<Lattice> {
        scales
            .iter()
            .map(|&s| {
                let gens: Vec<Vec<i64>> = (0..ambient_diag.len())
                    .map(|i| {
                        (0..ambient_diag.len())
                            .map(|j| if i == j { s * ambient_diag[i] } else { 0 })
                            .collect()
                    })
                    .collect();
                let refs: Vec<&[i64]> = gens.iter().map(|v| v.as_slice()).collect();
                lat(&refs, ambient_diag.len())
            })
            .collect()
    }

    #[test]
    fn validate_accepts_two_adic_chain() {
        let levels = vec![lat(&[&[2]], 1), lat(&[&[4]], 1)];
        let c = validate_chain(levels, BTreeSet::from([2])).unwrap();
        assert_eq!(c.depth(), 2);
        assert_eq!(c.level_index(2), BigUint::from(4u32));
    }

    #[test]
    fn validate_rejects_non_smooth_index() {
        let levels = vec![lat(&[&[2]], 1), lat(&[&[6]], 1)];
        let err = validate_chain(levels, BTreeSet::from([2])).unwrap_err();
        assert_eq!(err, CompletionError::IndexNotSmooth { level: 2, prime: 3 });
    }

    #[test]
    fn validate_rejects_increasing_chain() {
        let levels = vec![lat(&[&[4]], 1), lat(&[&[2]], 1)];
        let err = validate_chain(levels, BTreeSet::from([2])).unwrap_err();
        assert_eq!(err, CompletionError::NotDecreasing(2, 1));
    }

    #[test]
    fn validate_rejects_empty_chain() {
        assert_eq!(
            validate_chain(vec![], BTreeSet::from([2])).unwrap_err(),
            CompletionError::Empty
        );
    }

    #[test]
    fn cofinality_is_an_equivalence_relation_on_fixtures() {
        use crate::gen::seeded_fixture;
        let primes = BTreeSet::from([2]);
        let chains: Vec<CompletionChain> = [31u64, 32, 33]
            .iter()
            .map(|&s| seeded_fixture(s, 2, &primes, 6, 1).1)
            .collect();
        for c in &chains {
            assert!(cofinal_equivalent(c, c, 4).is_equivalent(), "reflexive");
        }
        for a in &chains {
            for b in &chains {
                let ab = cofinal_equivalent(a, b, 2).is_equivalent();
                let ba = cofinal_equivalent(b, a, 2).is_equivalent();
                assert_eq!(ab, ba, "symmetric at depth");
            }
        }
        // transitivity at depth on the equivalent pairs
        for a in &chains {
            for b in &chains {
                for c in &chains {
                    let ab = cofinal_equivalent(a, b, 2).is_equivalent();
                    let bc = cofinal_equivalent(b, c, 2).is_equivalent();
                    if ab && bc {
                        assert!(cofinal_equivalent(a, c, 2).is_equivalent(), "transitive");
                    }
                }
            }
        }
    }

    #[test]
    fn cofinal_interleaved_chains() {
        // {2^k} vs {2·2^k}; probe depth must stay within what the finite
        // truncations can witness
        let c1 = validate_chain(
            vec![lat(&[&[2]], 1), lat(&[&[4]], 1), lat(&[&[8]], 1)],
            BTreeSet::from([2]),
        )
        .unwrap();
        let c2 = validate_chain(
            vec![lat(&[&[4]], 1), lat(&[&[8]], 1), lat(&[&[16]], 1)],
            BTreeSet::from([2]),
        )
        .unwrap();
        assert!(cofinal_equivalent(&c1, &c2, 2).is_equivalent());
        assert!(cofinal_equivalent(&c2, &c1, 2).is_equivalent());
    }

    #[test]
    fn cofinal_distinguishes_primes() {
        let c1 = validate_chain(
            vec![lat(&[&[2]], 1), lat(&[&[4]], 1)],
            BTreeSet::from([2]),
        )
        .unwrap();
        let c2 = validate_chain(
            vec![lat(&[&[3]], 1), lat(&[&[9]], 1)],
            BTreeSet::from([3]),
        )
        .unwrap();
        match cofinal_equivalent(&c1, &c2, 2) {
            CofinalVerdict::NotEquivalent { level, .. } => assert_eq!(level, 1),
            other => panic!("expected NotEquivalent, got {other:?}"),
        }
    }

    #[test]
    fn cofinal_power_vs_square_power() {
        // {2^k Z ⊕ Z} vs {4^k Z ⊕ Z}: equivalent once the slower chain
        // carries enough levels to answer the probes
        let c1 = validate_chain(
            vec![
                lat(&[&[2, 0], &[0, 1]], 2),
                lat(&[&[4, 0], &[0, 1]], 2),
                lat(&[&[8, 0], &[0, 1]], 2),
                lat(&[&[16, 0], &[0, 1]], 2),
                lat(&[&[32, 0], &[0, 1]], 2),
            ],
            BTreeSet::from([2]),
        )
        .unwrap();
        let c2 = validate_chain(
            vec![lat(&[&[4, 0], &[0, 1]], 2), lat(&[&[16, 0], &[0, 1]], 2)],
            BTreeSet::from([2]),
        )
        .unwrap();
        assert!(cofinal_equivalent(&c1, &c2, 2).is_equivalent());
    }

    #[test]
    fn p_part_of_six_power_chain() {
        let c = validate_chain(
            vec![lat(&[&[6]], 1), lat(&[&[36]], 1)],
            BTreeSet::from([2, 3]),
        )
        .unwrap();
        let c2 = p_part_chain(&c, 2).unwrap();
        assert_eq!(c2.level(1), lat(&[&[2]], 1));
        assert_eq!(c2.level(2), lat(&[&[4]], 1));
        // idempotence
        let c22 = p_part_chain(&c2, 2).unwrap();
        assert_eq!(c22.levels(), c2.levels());
        // distinct primes intersect back to the original
        let c3 = p_part_chain(&c, 3).unwrap();
        for k in 1..=2 {
            let meet = crate::exactla::lattice_intersect(&c2.level(k), &c3.level(k)).unwrap();
            assert_eq!(meet, c.level(k));
        }
    }

    #[test]
    fn p_part_coordinatewise() {
        let c = validate_chain(
            vec![lat(&[&[2, 0], &[0, 3]], 2), lat(&[&[2, 0], &[0, 3]], 2)],
            BTreeSet::from([2, 3]),
        )
        .unwrap();
        let c3 = p_part_chain(&c, 3).unwrap();
        assert_eq!(c3.level(1), lat(&[&[1, 0], &[0, 3]], 2));
    }

    #[test]
    fn p_part_error_on_missing_prime() {
        let c = validate_chain(vec![lat(&[&[2]], 1)], BTreeSet::from([2])).unwrap();
        assert_eq!(p_part_chain(&c, 5), Err(CompletionError::PrimeNotInN(5)));
    }

    #[test]
    fn index_factorization_across_primes() {
        let c = validate_chain(
            vec![lat(&[&[6, 0], &[3, 9]], 2), lat(&[&[12, 0], &[6, 36]], 2)],
            BTreeSet::from([2, 3]),
        )
        .unwrap();
        for k in 1..=2 {
            let full = c.level_index(k);
            let mut prod = BigUint::one();
            for &p in c.primes() {
                let part = p_part_chain(&c, p).unwrap();
                prod *= part.level_index(k);
            }
            assert_eq!(full, prod);
        }
    }

    #[test]
    fn limit_of_growing_two_chain() {
        let c = validate_chain(
            scaled_chain(&[2, 4, 8], &[1, 1])
                .into_iter()
                .map(|l| crate::exactla::lattice_intersect(&l, &lat(&[&[1, 0], &[0, 1]], 2)).unwrap())
                .collect(),
            BTreeSet::from([2]),
        )
        .unwrap();
        let ls = limit_structure(&c).unwrap();
        assert_eq!(ls.per_prime[&2].d_p, 2);
        assert!(ls.per_prime[&2].torsion.is_trivial());
    }

    #[test]
    fn limit_direct_pattern_with_free_factor() {
        // {2^k Z ⊕ Z}
        let levels = vec![
            lat(&[&[2, 0], &[0, 1]], 2),
            lat(&[&[4, 0], &[0, 1]], 2),
            lat(&[&[8, 0], &[0, 1]], 2),
        ];
        let c = validate_chain(levels, BTreeSet::from([2])).unwrap();
        let ls = limit_structure(&c).unwrap();
        assert_eq!(ls.per_prime[&2].d_p, 1);
        assert!(ls.per_prime[&2].torsion.is_trivial());
    }

    #[test]
    fn limit_with_torsion_factor() {
        // Γ_k = {(x,y): x ≡ 0 mod 2, y ≡ 0 mod 2^k}
        let levels = vec![
            lat(&[&[2, 0], &[0, 2]], 2),
            lat(&[&[2, 0], &[0, 4]], 2),
            lat(&[&[2, 0], &[0, 8]], 2),
        ];
        let c = validate_chain(levels, BTreeSet::from([2])).unwrap();
        let ls = limit_structure(&c).unwrap();
        let pl = &ls.per_prime[&2];
        assert_eq!(pl.d_p, 1);
        assert_eq!(pl.torsion.invariant_factors, vec![BigUint::from(2u32)]);
    }

    #[test]
    fn limit_of_constant_chain_is_finite() {
        let levels = vec![lat(&[&[2]], 1), lat(&[&[2]], 1)];
        let c = validate_chain(levels, BTreeSet::from([2])).unwrap();
        let ls = limit_structure(&c).unwrap();
        let pl = &ls.per_prime[&2];
        assert_eq!(pl.d_p, 0);
        assert_eq!(pl.torsion.invariant_factors, vec![BigUint::from(2u32)]);
    }

    #[test]
    fn non_regular_chain_is_rejected() {
        // ratios 4, 2, 8 in rank 1 violate p·Γ_k ⊆ Γ_{k+1} at the last step
        let levels = vec![lat(&[&[2]], 1), lat(&[&[8]], 1), lat(&[&[16]], 1), lat(&[&[128]], 1)];
        let c = validate_chain(levels, BTreeSet::from([2])).unwrap();
        assert_eq!(limit_structure(&c), Err(CompletionError::NotRegular(2)));
    }

    #[test]
    fn supernatural_arithmetic() {
        let six = SupernaturalNumber::from_integer(&BigUint::from(6u32), &BTreeSet::from([2, 3])).unwrap();
        let four = SupernaturalNumber::from_integer(&BigUint::from(4u32), &BTreeSet::from([2, 3])).unwrap();
        assert_eq!(six.mul(&four).to_integer(), Some(BigUint::from(24u32)));
        assert!(four.divides(&SupernaturalNumber::from_prime_power(2, Exp::Infinite)));
        assert!(!SupernaturalNumber::from_prime_power(2, Exp::Infinite).divides(&four));
        let (s, rest) = SupernaturalNumber::factor_over(&BigUint::from(40u32), &BTreeSet::from([2]));
        assert_eq!(s.to_integer(), Some(BigUint::from(8u32)));
        assert_eq!(rest, BigUint::from(5u32));
    }
}
