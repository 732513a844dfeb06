//! Exact exterior algebra of a rank-s free abelian group over Q: wedge
//! products, classes of oriented direct summands, the codegree-(1)
//! identification with vectors, and inversion counts for boundary signs.

use crate::exactla::{saturate, Lattice, Rat};
use num::{BigInt, One, Zero};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtError {
    #[error("elements live in different ambient ranks ({0} vs {1})")]
    AmbientMismatch(usize, usize),
    #[error("element is not homogeneous of the expected degree")]
    WrongDegree,
    #[error("summand lattice is not a direct summand of the standard lattice")]
    NotDirectSummand,
    #[error("element is already a member of the ordered set")]
    ElementInSet,
}

/// Exact element of `∧* Q^s`: a map from strictly increasing index subsets
/// of `{0, .., s-1}` to nonzero rationals. Zero coefficients are never
/// stored, so structural equality is equality of elements.
#[derive(Clone, PartialEq, Eq)]
pub struct ExtElement {
    ambient_rank: usize,
    terms: BTreeMap<Vec<u32>, Rat>,
}

impl fmt::Debug for ExtElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            if k.is_empty() {
                write!(f, "{c}")?;
            } else {
                let idx: Vec<String> = k.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "{c}*e{{{}}}", idx.join(","))?;
            }
        }
        Ok(())
    }
}

impl ExtElement {
    pub fn zero(ambient_rank: usize) -> Self {
        ExtElement {
            ambient_rank,
            terms: BTreeMap::new(),
        }
    }

    /// The unit of the algebra: the empty wedge with coefficient one.
    pub fn unit(ambient_rank: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Vec::new(), Rat::one());
        ExtElement { ambient_rank, terms }
    }

    /// Degree-one basis vector `e_i` (zero-based index).
    pub fn basis_vector(ambient_rank: usize, i: u32) -> Self {
        assert!((i as usize) < ambient_rank);
        let mut terms = BTreeMap::new();
        terms.insert(vec![i], Rat::one());
        ExtElement { ambient_rank, terms }
    }

    /// Basis wedge `e_J` for a strictly increasing index subset.
    pub fn basis_wedge(ambient_rank: usize, indices: &[u32]) -> Self {
        assert!(indices.windows(2).all(|w| w[0] < w[1]));
        assert!(indices.iter().all(|&i| (i as usize) < ambient_rank));
        let mut terms = BTreeMap::new();
        terms.insert(indices.to_vec(), Rat::one());
        ExtElement { ambient_rank, terms }
    }

    /// Degree-one element with the given rational coordinates.
    pub fn from_vector(coords: &[Rat]) -> Self {
        let mut terms = BTreeMap::new();
        for (i, c) in coords.iter().enumerate() {
            if !c.is_zero() {
                terms.insert(vec![i as u32], c.clone());
            }
        }
        ExtElement {
            ambient_rank: coords.len(),
            terms,
        }
    }

    pub fn from_terms(ambient_rank: usize, entries: Vec<(Vec<u32>, Rat)>) -> Self {
        let mut out = Self::zero(ambient_rank);
        for (k, c) in entries {
            out.add_term(&k, c);
        }
        out
    }

    pub fn ambient_rank(&self) -> usize {
        self.ambient_rank
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, Rat> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, indices: &[u32]) -> Rat {
        self.terms.get(indices).cloned().unwrap_or_else(Rat::zero)
    }

    /// Degree when homogeneous; `None` for zero or mixed elements.
    pub fn homogeneous_degree(&self) -> Option<usize> {
        let mut deg = None;
        for k in self.terms.keys() {
            match deg {
                None => deg = Some(k.len()),
                Some(d) if d != k.len() => return None,
                _ => {}
            }
        }
        deg
    }

    pub fn degree_part(&self, degree: usize) -> Self {
        ExtElement {
            ambient_rank: self.ambient_rank,
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| k.len() == degree)
                .map(|(k, c)| (k.clone(), c.clone()))
                .collect(),
        }
    }

    fn add_term(&mut self, indices: &[u32], c: Rat) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(indices) {
            Some(existing) => {
                *existing += c;
                if existing.is_zero() {
                    self.terms.remove(indices);
                }
            }
            None => {
                self.terms.insert(indices.to_vec(), c);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, ExtError> {
        if self.ambient_rank != other.ambient_rank {
            return Err(ExtError::AmbientMismatch(self.ambient_rank, other.ambient_rank));
        }
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k, c.clone());
        }
        Ok(out)
    }

    pub fn scale(&self, c: &Rat) -> Self {
        if c.is_zero() {
            return Self::zero(self.ambient_rank);
        }
        ExtElement {
            ambient_rank: self.ambient_rank,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    pub fn negate(&self) -> Self {
        self.scale(&-Rat::one())
    }
}

/// Merges two strictly increasing index lists, returning the merged list and
/// the sign of the permutation sorting the concatenation, or `None` when an
/// index repeats.
fn merge_indices(a: &[u32], b: &[u32]) -> Option<(Vec<u32>, i8)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut transpositions = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            return None;
        }
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            // b[j] jumps over the remaining entries of a
            transpositions += a.len() - i;
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Some((out, if transpositions % 2 == 0 { 1 } else { -1 }))
}

/// Bilinear, associative, graded-commutative product; a repeated index kills
/// the term.
pub fn wedge(a: &ExtElement, b: &ExtElement) -> Result<ExtElement, ExtError> {
    if a.ambient_rank != b.ambient_rank {
        return Err(ExtError::AmbientMismatch(a.ambient_rank, b.ambient_rank));
    }
    let mut out = ExtElement::zero(a.ambient_rank);
    for (ka, ca) in &a.terms {
        for (kb, cb) in &b.terms {
            if let Some((k, sign)) = merge_indices(ka, kb) {
                let mut c = ca * cb;
                if sign < 0 {
                    c = -c;
                }
                out.add_term(&k, c);
            }
        }
    }
    Ok(out)
}

/// A direct summand of `Z^s` with a fixed orientation given by an ordered
/// basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrientedSummand {
    lattice: Lattice,
    ordered_basis: Vec<Vec<BigInt>>,
}

impl OrientedSummand {
    /// The rank-0 summand; its class is the unit of the algebra.
    pub fn empty(ambient_rank: usize) -> Self {
        OrientedSummand {
            lattice: Lattice::zero(ambient_rank),
            ordered_basis: Vec::new(),
        }
    }

    /// An ordered basis of a sublattice that is a direct summand in some
    /// caller-controlled context (for example a summand of a proper
    /// sublattice of `Z^s`). The ambient saturation test is skipped; the
    /// basis must still be independent.
    pub fn relative(ambient_rank: usize, ordered_basis: Vec<Vec<BigInt>>) -> Result<Self, ExtError> {
        let lattice = Lattice::from_integer_columns(ambient_rank, &ordered_basis);
        if lattice.rank() != ordered_basis.len() {
            return Err(ExtError::NotDirectSummand);
        }
        Ok(OrientedSummand {
            lattice,
            ordered_basis,
        })
    }

    pub fn new(ambient_rank: usize, ordered_basis: Vec<Vec<BigInt>>) -> Result<Self, ExtError> {
        let lattice = Lattice::from_integer_columns(ambient_rank, &ordered_basis);
        if lattice.rank() != ordered_basis.len() {
            return Err(ExtError::NotDirectSummand);
        }
        if saturate(&lattice) != lattice {
            return Err(ExtError::NotDirectSummand);
        }
        Ok(OrientedSummand {
            lattice,
            ordered_basis,
        })
    }

    pub fn ambient_rank(&self) -> usize {
        self.lattice.ambient_rank()
    }

    pub fn rank(&self) -> usize {
        self.ordered_basis.len()
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn ordered_basis(&self) -> &[Vec<BigInt>] {
        &self.ordered_basis
    }

    pub fn reversed(&self) -> Self {
        let mut basis = self.ordered_basis.clone();
        if basis.len() >= 2 {
            basis.swap(0, 1);
        }
        OrientedSummand {
            lattice: self.lattice.clone(),
            ordered_basis: basis,
        }
    }
}

/// Wedge of the ordered basis of an oriented direct summand. Independent of
/// the choice of oriented basis; swapping two basis vectors negates it.
pub fn beta_summand(sigma: &OrientedSummand) -> Result<ExtElement, ExtError> {
    if saturate(sigma.lattice()) != *sigma.lattice() {
        return Err(ExtError::NotDirectSummand);
    }
    let s = sigma.ambient_rank();
    let mut acc = ExtElement::unit(s);
    for v in sigma.ordered_basis() {
        let coords: Vec<Rat> = v.iter().map(|x| Rat::from_integer(x.clone())).collect();
        acc = wedge(&acc, &ExtElement::from_vector(&coords))?;
    }
    Ok(acc)
}

/// The vector `x` with `⟨x, z⟩ = coefficient of z ∧ ω in the volume form`
/// for all `z`, for `ω` homogeneous of degree `s-1`. In coordinates
/// `x_j = (-1)^j · ω_{complement of j}` (zero-based `j`).
pub fn dual_vector(omega: &ExtElement) -> Result<Vec<Rat>, ExtError> {
    let s = omega.ambient_rank();
    if s == 0 {
        return Err(ExtError::WrongDegree);
    }
    if !omega.is_zero() && omega.homogeneous_degree() != Some(s - 1) {
        return Err(ExtError::WrongDegree);
    }
    let mut out = vec![Rat::zero(); s];
    for (k, c) in omega.terms() {
        let j = complement_singleton(s, k);
        let mut v = c.clone();
        if j % 2 == 1 {
            v = -v;
        }
        out[j as usize] = v;
    }
    Ok(out)
}

/// Inverse of [`dual_vector`]: the degree-(s-1) element pairing to `v`.
pub fn dual_element(v: &[Rat]) -> ExtElement {
    let s = v.len();
    let mut terms = Vec::new();
    for (j, c) in v.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let indices: Vec<u32> = (0..s as u32).filter(|&i| i != j as u32).collect();
        let coeff = if j % 2 == 1 { -c.clone() } else { c.clone() };
        terms.push((indices, coeff));
    }
    ExtElement::from_terms(s, terms)
}

fn complement_singleton(s: usize, k: &[u32]) -> u32 {
    debug_assert_eq!(k.len(), s - 1);
    let mut expect = 0u32;
    for &i in k {
        if i != expect {
            return expect;
        }
        expect += 1;
    }
    expect
}

/// Number of members of `ordered_set` strictly greater than `p`, positions
/// taken in the given total order. `p` must not be a member.
pub fn inversion_count<T: Ord>(ordered_set: &[T], p: &T) -> Result<usize, ExtError> {
    if ordered_set.contains(p) {
        return Err(ExtError::ElementInSet);
    }
    Ok(ordered_set.iter().filter(|q| *q > p).count())
}
