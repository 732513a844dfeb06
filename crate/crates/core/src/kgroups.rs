//! Level-indexed subgroups of `∧* Q^s` attached to a completion chain: the
//! degree-n piece is an increasing family of lattices inside `∧^n Q^s`,
//! sandwiched between `∧^n Z^s` and `∧^n Z^s[N^{-1}]`.
//!
//! Downstream reconstruction consumes this data only through membership,
//! divisibility order and p-restriction; the originating chain is never
//! stored here.

use crate::completions::{limit_structure, CompletionChain, Exp, SupernaturalNumber};
use crate::exactla::{hnf_basis, lattice_index, lattice_intersect, Lattice, Rat};
use crate::exterior::ExtElement;
use num::{BigInt, BigUint, Integer, One, Zero};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KError {
    #[error("zero element has no divisibility order")]
    ZeroElement,
    #[error("element is not homogeneous")]
    NotHomogeneous,
    #[error("prime {0} is not in the declared prime set")]
    PrimeNotInN(u64),
    #[error("degree {0} exceeds the stored degree range")]
    DegreeUnavailable(usize),
}

/// Where a [`KSubgroup`] came from. Loaded data never carries a
/// certification certificate: the originating chain is unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    FromChain,
    Loaded,
}

/// Strictly increasing index subsets of `{0..s-1}` of size `n`, in
/// lexicographic order; these index the coordinates of `∧^n Q^s`.
pub fn subsets_lex(s: usize, n: usize) -> Vec<Vec<u32>> {
    fn rec(start: u32, s: u32, n: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 0 {
            out.push(prefix.clone());
            return;
        }
        for i in start..=(s - n as u32) {
            prefix.push(i);
            rec(i + 1, s, n - 1, prefix, out);
            prefix.pop();
        }
    }
    if n > s {
        return Vec::new();
    }
    let mut out = Vec::new();
    rec(0, s as u32, n, &mut Vec::new(), &mut out);
    out
}

pub fn binomial(s: usize, n: usize) -> usize {
    if n > s {
        return 0;
    }
    let mut acc = 1usize;
    for i in 0..n {
        acc = acc * (s - i) / (i + 1);
    }
    acc
}

/// Coordinates of a homogeneous element in the lex-subset basis of its
/// degree.
pub fn coordinates_of(x: &ExtElement, degree: usize) -> Vec<Rat> {
    let subsets = subsets_lex(x.ambient_rank(), degree);
    subsets.iter().map(|k| x.coefficient(k)).collect()
}

pub fn element_from_coordinates(s: usize, degree: usize, coords: &[Rat]) -> ExtElement {
    let subsets = subsets_lex(s, degree);
    assert_eq!(subsets.len(), coords.len());
    ExtElement::from_terms(
        s,
        subsets
            .into_iter()
            .zip(coords.iter().cloned())
            .collect::<Vec<_>>(),
    )
}

/// The lattice `∧^n L ⊆ ∧^n Q^s` spanned by wedges of basis vectors of `L`.
pub fn wedge_power_lattice(l: &Lattice, n: usize) -> Lattice {
    let s = l.ambient_rank();
    let dim = binomial(s, n);
    if n == 0 {
        // the empty wedge spans Z · 1 whatever the lattice is
        return Lattice::standard(1);
    }
    let basis = l.basis_vectors();
    let mut cols: Vec<Vec<Rat>> = Vec::new();
    for combo in subsets_lex(basis.len(), n) {
        // coordinates of v_{j1} ∧ ... ∧ v_{jn}: n×n minors of the chosen cols
        let rows = subsets_lex(s, n);
        let mut col = Vec::with_capacity(dim);
        for row_set in &rows {
            col.push(minor(&basis, &combo, row_set));
        }
        cols.push(col);
    }
    hnf_basis(&cols, dim).expect("wedge coordinates are consistent")
}

fn minor(basis: &[Vec<Rat>], col_set: &[u32], row_set: &[u32]) -> Rat {
    let n = col_set.len();
    if n == 0 {
        return Rat::one();
    }
    if n == 1 {
        return basis[col_set[0] as usize][row_set[0] as usize].clone();
    }
    // Laplace along the first row of the minor
    let mut acc = Rat::zero();
    for (j, &c) in col_set.iter().enumerate() {
        let v = &basis[c as usize][row_set[0] as usize];
        if v.is_zero() {
            continue;
        }
        let rest_cols: Vec<u32> = col_set
            .iter()
            .copied()
            .filter(|&x| x != c)
            .collect();
        let term = v * minor(basis, &rest_cols, &row_set[1..]);
        if j % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc
}

/// Level-indexed representation of the K-data of a completion: per degree
/// `n ≤ max_degree`, the increasing lattices `L_k^{(n)} ⊆ ∧^n Q^s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KSubgroup {
    ambient_rank: usize,
    primes: BTreeSet<u64>,
    provenance: Provenance,
    /// `degrees[n][k-1]` is the level-k lattice of degree n.
    degrees: Vec<Vec<Lattice>>,
    /// Regularity certificate levels per prime, present only for data built
    /// from a chain that passed the stabilization test.
    certificates: BTreeMap<u64, usize>,
}

/// Divisibility order of an element inside the K-data. When `certified` is
/// false the value is a lower bound established at `probe_level`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeltaResult {
    pub value: SupernaturalNumber,
    pub certified: bool,
    pub probe_level: usize,
    /// Part of the content of the element supported outside the declared
    /// prime set, reported separately.
    pub content_outside: BigUint,
}

impl DeltaResult {
    pub fn certified_integer(&self) -> Option<BigUint> {
        if self.certified {
            self.value.to_integer()
        } else {
            None
        }
    }
}

impl KSubgroup {
    pub fn ambient_rank(&self) -> usize {
        self.ambient_rank
    }

    pub fn primes(&self) -> &BTreeSet<u64> {
        &self.primes
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.len() - 1
    }

    pub fn depth(&self) -> usize {
        self.degrees.first().map(|d| d.len()).unwrap_or(0)
    }

    pub fn certificates(&self) -> &BTreeMap<u64, usize> {
        &self.certificates
    }

    pub fn is_certified(&self) -> bool {
        self.provenance == Provenance::FromChain && !self.certificates.is_empty()
    }

    /// Level-k lattice of degree `n`; level 0 is `∧^n Z^s`.
    pub fn level_lattice(&self, degree: usize, k: usize) -> Result<Lattice, KError> {
        if degree >= self.degrees.len() {
            return Err(KError::DegreeUnavailable(degree));
        }
        let levels = &self.degrees[degree];
        if k == 0 {
            return Ok(Lattice::standard(binomial(self.ambient_rank, degree)));
        }
        Ok(levels[k.min(levels.len()) - 1].clone())
    }

    /// Raw per-degree level lists (for serialization).
    pub fn degree_levels(&self) -> &[Vec<Lattice>] {
        &self.degrees
    }

    /// Reassembles a K-subgroup from dumped parts, revalidating the
    /// sandwich and monotonicity invariants. Loaded data is never
    /// certified.
    pub fn from_parts(
        ambient_rank: usize,
        primes: BTreeSet<u64>,
        provenance: Provenance,
        degrees: Vec<Vec<Lattice>>,
        certificates: BTreeMap<u64, usize>,
    ) -> Result<Self, String> {
        let k = KSubgroup {
            ambient_rank,
            primes,
            provenance,
            degrees,
            certificates: match provenance {
                Provenance::FromChain => certificates,
                Provenance::Loaded => BTreeMap::new(),
            },
        };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<(), String> {
        for (n, levels) in self.degrees.iter().enumerate() {
            let dim = binomial(self.ambient_rank, n);
            let standard = Lattice::standard(dim);
            let mut prev: Option<&Lattice> = None;
            for (k, l) in levels.iter().enumerate() {
                if l.ambient_rank() != dim {
                    return Err(format!("degree {n} level {k} has wrong dimension"));
                }
                if !l.contains_lattice(&standard) {
                    return Err(format!("degree {n} level {k} does not contain the standard lattice"));
                }
                // denominators must stay N-smooth
                let (_, rest) =
                    SupernaturalNumber::factor_over(l.denominator(), &self.primes);
                if !rest.is_one() {
                    return Err(format!("degree {n} level {k} has a denominator outside the prime set"));
                }
                if let Some(p) = prev {
                    if !l.contains_lattice(p) {
                        return Err(format!("degree {n} levels are not increasing at {k}"));
                    }
                }
                prev = Some(l);
            }
        }
        Ok(())
    }
}

/// Builds the K-data of a chain: the degree-n level-k lattice is
/// `(1/[Z^s : Γ_k]) · ∧^n Γ_k`.
pub fn k_from_chain(c: &CompletionChain, max_degree: usize) -> KSubgroup {
    let s = c.ambient_rank();
    let max_degree = max_degree.min(s);
    let mut degrees = Vec::with_capacity(max_degree + 1);
    for n in 0..=max_degree {
        let mut levels = Vec::with_capacity(c.depth());
        for k in 1..=c.depth() {
            let gamma = c.level(k);
            let index = c.level_index(k);
            let wedge = wedge_power_lattice(&gamma, n);
            levels.push(wedge.scale(&Rat::new(BigInt::one(), BigInt::from(index))));
        }
        degrees.push(levels);
    }
    let certificates = match limit_structure(c) {
        Ok(ls) => ls
            .per_prime
            .iter()
            .map(|(&p, pl)| (p, pl.certificate_level))
            .collect(),
        Err(_) => BTreeMap::new(),
    };
    KSubgroup {
        ambient_rank: s,
        primes: c.primes().clone(),
        provenance: Provenance::FromChain,
        degrees,
        certificates,
    }
}

/// p-adic valuation of a nonzero rational; `None` for zero.
fn val_p(x: &Rat, p: u64) -> Option<i64> {
    if x.is_zero() {
        return None;
    }
    let bp = BigInt::from(p);
    let mut v = 0i64;
    let mut num = x.numer().clone();
    while (&num % &bp).is_zero() {
        num /= &bp;
        v += 1;
    }
    let mut den = x.denom().clone();
    while (&den % &bp).is_zero() {
        den /= &bp;
        v -= 1;
    }
    Some(v)
}

/// Largest `j` with `x ∈ p^j · L`, i.e. the minimal p-valuation of the
/// coordinates of `x` in the basis of `L`; `None` when `x` is outside the
/// rational span.
fn level_exponent(l: &Lattice, coords: &[Rat], p: u64) -> Option<i64> {
    let c = l.coords_in_span(coords)?;
    let mut m: Option<i64> = None;
    for x in &c {
        if let Some(v) = val_p(x, p) {
            m = Some(match m {
                None => v,
                Some(cur) => cur.min(v),
            });
        }
    }
    m
}

/// Divisibility order `δ(x, K)` of a nonzero homogeneous element: for each
/// declared prime, the supremum over probed levels of the exponents `j`
/// with `x ∈ p^j L_k`. Exponents for primes outside the declared set are
/// split off into `content_outside`.
///
/// Certification follows the chain regularity certificate. The exponent
/// sequence is nondecreasing; on a regular tail a paused value stays paused
/// (`p^{k+1}G + H = p(p^k G + H) + H`), so equality of the last two probes
/// certifies the finite value, while strict growth at every step of the
/// regular tail certifies infinity. A sequence still moving at the deepest
/// probe stays an uncertified lower bound.
pub fn delta(k: &KSubgroup, x: &ExtElement, budget: usize) -> Result<DeltaResult, KError> {
    if x.is_zero() {
        return Err(KError::ZeroElement);
    }
    let degree = x.homogeneous_degree().ok_or(KError::NotHomogeneous)?;
    if degree >= k.degrees.len() {
        return Err(KError::DegreeUnavailable(degree));
    }
    let coords = coordinates_of(x, degree);
    let len = k.depth();
    let probe = budget.min(len).max(1);
    let mut value = SupernaturalNumber::one();
    let mut certified_all = true;
    for &p in &k.primes {
        let exps: Vec<Option<i64>> = (1..=probe)
            .map(|lvl| {
                let l = k.level_lattice(degree, lvl).expect("degree checked");
                level_exponent(&l, &coords, p)
            })
            .collect();
        // levels increase, so the exponent sequence is nondecreasing where defined
        let last = exps.last().cloned().flatten();
        let cert_level = k.certificates.get(&p).copied();
        let (exp, certified) = match (last, cert_level) {
            (None, _) => (Exp::Finite(0), false),
            (Some(v), None) => (Exp::Finite(v), false),
            (Some(v), Some(k0)) => {
                if probe < len || len < k0.max(1) + 1 {
                    // cannot see the full regular tail
                    (Exp::Finite(v), false)
                } else {
                    let tail: Vec<i64> = (k0.max(1)..=len)
                        .map(|lvl| exps[lvl - 1].expect("within span on regular tail"))
                        .collect();
                    if tail.len() < 2 {
                        (Exp::Finite(v), false)
                    } else if tail[tail.len() - 1] == tail[tail.len() - 2] {
                        (Exp::Finite(v), true)
                    } else if tail.windows(2).all(|w| w[0] < w[1]) {
                        (Exp::Infinite, true)
                    } else {
                        (Exp::Finite(v), false)
                    }
                }
            }
        };
        if !certified {
            certified_all = false;
        }
        value.set(p, exp);
    }
    // content at primes outside N: the level lattices are p-integral there,
    // so the exponent equals the valuation of the coefficient content
    let mut content_num = BigUint::zero();
    let mut content_den = BigUint::one();
    for c in coordinates_of(x, degree) {
        if !c.is_zero() {
            content_num = content_num.gcd(&c.numer().magnitude());
            content_den = content_den.lcm(&c.denom().magnitude());
        }
    }
    let (_, mut outside) = SupernaturalNumber::factor_over(&content_num, &k.primes);
    if outside.is_zero() {
        outside = BigUint::one();
    }
    let (_, den_rest) = SupernaturalNumber::factor_over(&content_den, &k.primes);
    if !den_rest.is_one() {
        // denominators outside N cannot occur for validated data
        outside = BigUint::one();
    }
    Ok(DeltaResult {
        value,
        certified: certified_all,
        probe_level: probe,
        content_outside: outside,
    })
}

/// Membership of a homogeneous element at some level within the budget.
pub fn contains(k: &KSubgroup, x: &ExtElement, budget: usize) -> Result<bool, KError> {
    if x.is_zero() {
        return Ok(true);
    }
    let degree = x.homogeneous_degree().ok_or(KError::NotHomogeneous)?;
    if degree >= k.degrees.len() {
        return Err(KError::DegreeUnavailable(degree));
    }
    let probe = budget.min(k.depth()).max(1);
    let l = k.level_lattice(degree, probe)?;
    Ok(l.contains_vector(&coordinates_of(x, degree)))
}

/// Restriction to a single prime: level lattices are intersected with
/// `p^{-v_p(denominator)} ∧^n Z^s`, which realizes the intersection with
/// `∧^* Z^s[1/p]` exactly at each level.
pub fn restrict_to_p(k: &KSubgroup, p: u64) -> Result<KSubgroup, KError> {
    if !k.primes.contains(&p) {
        return Err(KError::PrimeNotInN(p));
    }
    let bp = BigInt::from(p);
    let mut degrees = Vec::with_capacity(k.degrees.len());
    for (n, levels) in k.degrees.iter().enumerate() {
        let dim = binomial(k.ambient_rank, n);
        let mut out = Vec::with_capacity(levels.len());
        for l in levels {
            let mut ppow = BigInt::one();
            let mut rest = BigInt::from(l.denominator().clone());
            while (&rest % &bp).is_zero() {
                rest /= &bp;
                ppow *= &bp;
            }
            let bound = Lattice::standard(dim).scale(&Rat::new(BigInt::one(), ppow));
            out.push(lattice_intersect(l, &bound).expect("same dimension"));
        }
        degrees.push(out);
    }
    let certificates = k
        .certificates
        .get(&p)
        .map(|&k0| BTreeMap::from([(p, k0)]))
        .unwrap_or_default();
    Ok(KSubgroup {
        ambient_rank: k.ambient_rank,
        primes: BTreeSet::from([p]),
        provenance: k.provenance,
        degrees,
        certificates,
    })
}

/// Ground-truth side of the divisibility order: the stabilized value of
/// `|Z^s/(Γ_k + Σ)|` along the chain, or infinity when it keeps growing.
/// This reads the chain directly and serves as the independent oracle for
/// [`delta`] on summand classes.
pub fn chain_delta_oracle(
    c: &CompletionChain,
    sigma: &Lattice,
) -> Result<SupernaturalNumber, crate::exactla::LaError> {
    let standard = Lattice::standard(c.ambient_rank());
    let mut values = Vec::with_capacity(c.depth());
    for k in 1..=c.depth() {
        let sum = crate::exactla::lattice_sum(&c.level(k), sigma)?;
        values.push(lattice_index(&sum, &standard)?);
    }
    let len = values.len();
    if len >= 2 && values[len - 1] == values[len - 2] {
        Ok(SupernaturalNumber::from_integer(&values[len - 1], c.primes())
            .expect("chain indices are N-smooth"))
    } else {
        // keeps growing within the data: infinite in every growing prime
        let mut s = SupernaturalNumber::one();
        if len >= 2 {
            let ratio = &values[len - 1] / &values[len - 2];
            let (factors, _) = SupernaturalNumber::factor_over(&ratio, c.primes());
            for (&p, _) in factors.exponents() {
                s.set(p, Exp::Infinite);
            }
            // primes whose part already stabilized keep their finite exponent
            for &p in c.primes() {
                if !factors.exponents().contains_key(&p) {
                    let (parts, _) = SupernaturalNumber::factor_over(&values[len - 1], &BTreeSet::from([p]));
                    s.set(p, parts.exponent(p));
                }
            }
        } else {
            for &p in c.primes() {
                s.set(p, Exp::Infinite);
            }
        }
        Ok(s)
    }
}
