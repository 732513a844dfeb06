//! Exact integer and rational linear algebra: normal forms, lattice
//! operations, dual lattices and quotient structure.
//!
//! Everything here is arbitrary-precision and exact; there is no floating
//! point anywhere in this crate. Lattices are stored in a canonical form
//! (column Hermite normal form over a single cleared denominator) so that
//! structural equality coincides with equality of subgroups of `Q^s`.

use num::{BigInt, BigRational, BigUint, Integer, One, Signed, Zero};
use std::fmt;

pub type Rat = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LaError {
    #[error("vector length {got} does not match ambient rank {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("lattices live in different ambient spaces ({0} vs {1})")]
    AmbientMismatch(usize, usize),
    #[error("first lattice is not contained in the second")]
    NotSublattice,
    #[error("sublattice has smaller rank, quotient is infinite")]
    InfiniteIndex,
    #[error("lattice is not of full rank in its ambient space")]
    NotFullRank,
}

/// Dense integer matrix with arbitrary-precision entries, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<BigInt>,
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IntMatrix[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.at(i, j))?;
            }
        }
        write!(f, "]")
    }
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix {
            rows,
            cols,
            entries: vec![BigInt::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, BigInt::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> BigInt) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        IntMatrix { rows, cols, entries }
    }

    /// Builds a matrix whose columns are the given integer vectors.
    pub fn from_columns(ambient: usize, cols: &[Vec<BigInt>]) -> Self {
        Self::from_fn(ambient, cols.len(), |i, j| cols[j][i].clone())
    }

    pub fn from_i64_rows(rows: &[&[i64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        Self::from_fn(r, c, |i, j| BigInt::from(rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigInt) {
        self.entries[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<BigInt> {
        (0..self.rows).map(|i| self.at(i, j).clone()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.at(j, i).clone())
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matrix product shape mismatch");
        Self::from_fn(self.rows, other.cols, |i, j| {
            let mut acc = BigInt::zero();
            for k in 0..self.cols {
                acc += self.at(i, k) * other.at(k, j);
            }
            acc
        })
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| {
                let mut acc = BigInt::zero();
                for k in 0..self.cols {
                    acc += self.at(i, k) * &v[k];
                }
                acc
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|e| e.is_zero())
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.entries.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.entries.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row_a -= q * row_b
    fn row_axpy(&mut self, a: usize, b: usize, q: &BigInt) {
        if q.is_zero() {
            return;
        }
        for j in 0..self.cols {
            let delta = q * self.at(b, j);
            let v = self.at(a, j) - delta;
            self.set(a, j, v);
        }
    }

    /// col_a -= q * col_b
    fn col_axpy(&mut self, a: usize, b: usize, q: &BigInt) {
        if q.is_zero() {
            return;
        }
        for i in 0..self.rows {
            let delta = q * self.at(i, b);
            let v = self.at(i, a) - delta;
            self.set(i, a, v);
        }
    }

    fn negate_row(&mut self, a: usize) {
        for j in 0..self.cols {
            let v = -self.at(a, j).clone();
            self.set(a, j, v);
        }
    }

    fn negate_col(&mut self, a: usize) {
        for i in 0..self.rows {
            let v = -self.at(i, a).clone();
            self.set(i, a, v);
        }
    }

    /// gcd of all entries; zero for an empty or zero matrix.
    pub fn content(&self) -> BigUint {
        let mut g = BigUint::zero();
        for e in &self.entries {
            g = g.gcd(&e.magnitude());
            if g.is_one() {
                break;
            }
        }
        g
    }

    /// |det| via the product of Smith invariant factors.
    pub fn det_abs(&self) -> BigUint {
        assert_eq!(self.rows, self.cols);
        let d = snf(self).d;
        let mut acc = BigUint::one();
        for i in 0..d.rows {
            let e = d.at(i, i);
            if e.is_zero() {
                return BigUint::zero();
            }
            acc *= e.magnitude();
        }
        acc
    }
}

/// Column Hermite normal form together with the unimodular column transform:
/// `m * v = h`. Pivot columns come first (pivot rows strictly increasing,
/// pivots positive, entries left of a pivot in its row reduced into
/// `[0, pivot)`); zero columns are pushed to the end.
pub fn column_hnf_with_transform(m: &IntMatrix) -> (IntMatrix, IntMatrix) {
    let mut h = m.clone();
    let mut v = IntMatrix::identity(m.cols());
    let mut c0 = 0usize; // next pivot column slot
    for row in 0..h.rows() {
        if c0 == h.cols() {
            break;
        }
        // clear row `row` on active columns c0.. down to a single entry
        loop {
            let mut best: Option<usize> = None;
            for j in c0..h.cols() {
                if !h.at(row, j).is_zero() {
                    best = match best {
                        None => Some(j),
                        Some(b) => {
                            if h.at(row, j).magnitude() < h.at(row, b).magnitude() {
                                Some(j)
                            } else {
                                Some(b)
                            }
                        }
                    };
                }
            }
            let Some(jmin) = best else { break };
            h.swap_cols(c0, jmin);
            v.swap_cols(c0, jmin);
            let mut clean = true;
            let pivot = h.at(row, c0).clone();
            for j in c0 + 1..h.cols() {
                if !h.at(row, j).is_zero() {
                    let q = h.at(row, j).div_floor(&pivot);
                    h.col_axpy(j, c0, &q);
                    v.col_axpy(j, c0, &q);
                    if !h.at(row, j).is_zero() {
                        clean = false;
                    }
                }
            }
            if clean {
                break;
            }
        }
        if h.at(row, c0).is_zero() {
            continue; // no pivot in this row
        }
        if h.at(row, c0).is_negative() {
            h.negate_col(c0);
            v.negate_col(c0);
        }
        // reduce entries in the pivot row on earlier columns into [0, pivot)
        let pivot = h.at(row, c0).clone();
        for k in 0..c0 {
            let q = h.at(row, k).div_floor(&pivot);
            h.col_axpy(k, c0, &q);
            v.col_axpy(k, c0, &q);
        }
        c0 += 1;
    }
    (h, v)
}

pub fn column_hnf(m: &IntMatrix) -> IntMatrix {
    column_hnf_with_transform(m).0
}

/// Basis of the integer kernel `{x : m x = 0}` as matrix columns.
/// The kernel of an integer matrix is always a saturated sublattice.
pub fn integer_kernel(m: &IntMatrix) -> IntMatrix {
    let (h, v) = column_hnf_with_transform(m);
    let mut cols = Vec::new();
    for j in 0..h.cols() {
        if (0..h.rows()).all(|i| h.at(i, j).is_zero()) {
            cols.push(v.column(j));
        }
    }
    IntMatrix::from_columns(m.cols(), &cols)
}

/// Smith normal form `u * m * v = d` with `u`, `v` unimodular and `d`
/// diagonal, nonnegative, with `d_1 | d_2 | ...`. Pivots are chosen as the
/// minimal nonzero absolute value, ties broken by position.
pub struct SnfDecomposition {
    pub u: IntMatrix,
    pub d: IntMatrix,
    pub v: IntMatrix,
}

pub fn snf(m: &IntMatrix) -> SnfDecomposition {
    let mut d = m.clone();
    let mut u = IntMatrix::identity(m.rows());
    let mut v = IntMatrix::identity(m.cols());
    let steps = m.rows().min(m.cols());
    for t in 0..steps {
        'pivot: loop {
            // locate minimal nonzero |entry| in the trailing submatrix
            let mut best: Option<(usize, usize)> = None;
            for i in t..d.rows() {
                for j in t..d.cols() {
                    if !d.at(i, j).is_zero() {
                        best = match best {
                            None => Some((i, j)),
                            Some((bi, bj)) => {
                                if d.at(i, j).magnitude() < d.at(bi, bj).magnitude() {
                                    Some((i, j))
                                } else {
                                    Some((bi, bj))
                                }
                            }
                        };
                    }
                }
            }
            let Some((pi, pj)) = best else { break 'pivot };
            d.swap_rows(t, pi);
            u.swap_rows(t, pi);
            d.swap_cols(t, pj);
            v.swap_cols(t, pj);

            let mut dirty = false;
            let pivot = d.at(t, t).clone();
            for i in t + 1..d.rows() {
                if !d.at(i, t).is_zero() {
                    let q = d.at(i, t).div_floor(&pivot);
                    d.row_axpy(i, t, &q);
                    u.row_axpy(i, t, &q);
                    if !d.at(i, t).is_zero() {
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue 'pivot;
            }
            for j in t + 1..d.cols() {
                if !d.at(t, j).is_zero() {
                    let q = d.at(t, j).div_floor(&pivot);
                    d.col_axpy(j, t, &q);
                    v.col_axpy(j, t, &q);
                    if !d.at(t, j).is_zero() {
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue 'pivot;
            }
            // pivot row/col clean; enforce divisibility over the remainder
            for i in t + 1..d.rows() {
                for j in t + 1..d.cols() {
                    if !(d.at(i, j) % &pivot).is_zero() {
                        // fold row i into row t and restart on this pivot
                        let minus_one = BigInt::from(-1);
                        d.row_axpy(t, i, &minus_one);
                        u.row_axpy(t, i, &minus_one);
                        continue 'pivot;
                    }
                }
            }
            break 'pivot;
        }
        if d.at(t, t).is_negative() {
            d.negate_row(t);
            u.negate_row(t);
        }
    }
    SnfDecomposition { u, d, v }
}

/// A finitely generated abelian group up to isomorphism: free rank plus the
/// invariant factor chain `d_1 | d_2 | ...` with every `d_i > 1`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AbelianStructure {
    pub invariant_factors: Vec<BigUint>,
    pub free_rank: usize,
}

impl AbelianStructure {
    pub fn trivial() -> Self {
        AbelianStructure {
            invariant_factors: Vec::new(),
            free_rank: 0,
        }
    }

    pub fn is_trivial(&self) -> bool {
        self.invariant_factors.is_empty() && self.free_rank == 0
    }

    /// Order of the torsion part.
    pub fn torsion_order(&self) -> BigUint {
        self.invariant_factors
            .iter()
            .fold(BigUint::one(), |acc, f| acc * f)
    }

    pub fn order(&self) -> Option<BigUint> {
        if self.free_rank > 0 {
            None
        } else {
            Some(self.torsion_order())
        }
    }
}

/// A finitely generated subgroup of `Q^s`, stored canonically: an integer
/// basis matrix in column Hermite normal form divided by a single positive
/// denominator, with the pair reduced so no common factor remains.
/// Structural equality is lattice equality.
#[derive(Clone, PartialEq, Eq)]
pub struct Lattice {
    ambient: usize,
    denom: BigUint,
    basis: IntMatrix,
}

impl fmt::Debug for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Lattice(ambient={}, denom={}, basis={:?})",
            self.ambient, self.denom, self.basis
        )
    }
}

impl Lattice {
    pub fn zero(ambient: usize) -> Self {
        Lattice {
            ambient,
            denom: BigUint::one(),
            basis: IntMatrix::zeros(ambient, 0),
        }
    }

    /// The standard lattice `Z^s`.
    pub fn standard(ambient: usize) -> Self {
        Lattice {
            ambient,
            denom: BigUint::one(),
            basis: IntMatrix::identity(ambient),
        }
    }

    /// Canonicalizes an integer generator matrix over a denominator.
    fn from_numerator(ambient: usize, numerator: &IntMatrix, denom: &BigUint) -> Self {
        assert_eq!(numerator.rows(), ambient);
        assert!(!denom.is_zero());
        let h = column_hnf(numerator);
        let rank = (0..h.cols())
            .take_while(|&j| !(0..h.rows()).all(|i| h.at(i, j).is_zero()))
            .count();
        let basis = IntMatrix::from_fn(ambient, rank, |i, j| h.at(i, j).clone());
        let g = basis.content().gcd(denom);
        if g.is_one() || g.is_zero() {
            let denom = if rank == 0 { BigUint::one() } else { denom.clone() };
            return Lattice {
                ambient,
                denom,
                basis,
            };
        }
        let gi = BigInt::from(g.clone());
        let basis = IntMatrix::from_fn(ambient, rank, |i, j| basis.at(i, j) / &gi);
        Lattice {
            ambient,
            denom: denom / g,
            basis,
        }
    }

    /// Canonical lattice spanned by integer column vectors.
    pub fn from_integer_columns(ambient: usize, cols: &[Vec<BigInt>]) -> Self {
        let m = IntMatrix::from_columns(ambient, cols);
        Self::from_numerator(ambient, &m, &BigUint::one())
    }

    pub fn ambient_rank(&self) -> usize {
        self.ambient
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.ambient
    }

    pub fn denominator(&self) -> &BigUint {
        &self.denom
    }

    /// Integer numerator basis (columns), i.e. `denominator * lattice`.
    pub fn numerator(&self) -> &IntMatrix {
        &self.basis
    }

    /// Basis vectors as rational columns.
    pub fn basis_vectors(&self) -> Vec<Vec<Rat>> {
        let d = BigInt::from(self.denom.clone());
        (0..self.rank())
            .map(|j| {
                (0..self.ambient)
                    .map(|i| Rat::new(self.basis.at(i, j).clone(), d.clone()))
                    .collect()
            })
            .collect()
    }

    /// Rational coordinates of `v` in this basis, if `v` lies in the span.
    pub fn coords_in_span(&self, v: &[Rat]) -> Option<Vec<Rat>> {
        assert_eq!(v.len(), self.ambient);
        // w = denom * v must solve basis * c = w
        let d = BigInt::from(self.denom.clone());
        let mut w: Vec<Rat> = v.iter().map(|x| x * Rat::from_integer(d.clone())).collect();
        let mut coords = vec![Rat::zero(); self.rank()];
        // pivot rows are the first nonzero row of each column, increasing
        for j in 0..self.rank() {
            let pivot_row = (0..self.ambient)
                .find(|&i| !self.basis.at(i, j).is_zero())
                .expect("basis column cannot be zero");
            let pivot = Rat::from_integer(self.basis.at(pivot_row, j).clone());
            let c = &w[pivot_row] / &pivot;
            if !c.is_zero() {
                for i in 0..self.ambient {
                    let delta = &c * Rat::from_integer(self.basis.at(i, j).clone());
                    w[i] -= delta;
                }
            }
            coords[j] = c;
        }
        if w.iter().all(|x| x.is_zero()) {
            Some(coords)
        } else {
            None
        }
    }

    pub fn contains_vector(&self, v: &[Rat]) -> bool {
        match self.coords_in_span(v) {
            Some(c) => c.iter().all(|x| x.is_integer()),
            None => false,
        }
    }

    pub fn contains_lattice(&self, other: &Lattice) -> bool {
        if self.ambient != other.ambient {
            return false;
        }
        other.basis_vectors().iter().all(|v| self.contains_vector(v))
    }

    /// Multiplies every lattice element by a positive rational factor.
    pub fn scale(&self, factor: &Rat) -> Lattice {
        assert!(factor.is_positive(), "lattice scale factor must be positive");
        let num = factor.numer();
        let den = factor.denom().magnitude();
        let scaled = IntMatrix::from_fn(self.ambient, self.rank(), |i, j| self.basis.at(i, j) * num);
        Lattice::from_numerator(self.ambient, &scaled, &(self.denom.clone() * den))
    }
}

/// Canonical lattice generated by rational vectors; an empty list yields the
/// zero lattice, never an error.
pub fn hnf_basis(generators: &[Vec<Rat>], ambient_rank: usize) -> Result<Lattice, LaError> {
    for g in generators {
        if g.len() != ambient_rank {
            return Err(LaError::DimensionMismatch {
                expected: ambient_rank,
                got: g.len(),
            });
        }
    }
    if generators.is_empty() {
        return Ok(Lattice::zero(ambient_rank));
    }
    let mut denom = BigInt::one();
    for g in generators {
        for x in g {
            denom = denom.lcm(x.denom());
        }
    }
    let m = IntMatrix::from_fn(ambient_rank, generators.len(), |i, j| {
        let x = &generators[j][i];
        x.numer() * (&denom / x.denom())
    });
    Ok(Lattice::from_numerator(
        ambient_rank,
        &m,
        &denom.magnitude().clone(),
    ))
}

/// Index `|sup/sub|` of a finite-index sublattice.
pub fn lattice_index(sub: &Lattice, sup: &Lattice) -> Result<BigUint, LaError> {
    if sub.ambient_rank() != sup.ambient_rank() {
        return Err(LaError::AmbientMismatch(sub.ambient_rank(), sup.ambient_rank()));
    }
    let coords = change_of_basis(sub, sup)?;
    if sub.rank() != sup.rank() {
        return Err(LaError::InfiniteIndex);
    }
    Ok(coords.det_abs())
}

/// Integer coordinate matrix of `sub`'s basis in `sup`'s basis; errors when
/// `sub` is not contained in `sup`.
fn change_of_basis(sub: &Lattice, sup: &Lattice) -> Result<IntMatrix, LaError> {
    let mut cols = Vec::with_capacity(sub.rank());
    for v in sub.basis_vectors() {
        let coords = sup.coords_in_span(&v).ok_or(LaError::NotSublattice)?;
        if coords.iter().any(|c| !c.is_integer()) {
            return Err(LaError::NotSublattice);
        }
        cols.push(coords.iter().map(|c| c.to_integer()).collect::<Vec<_>>());
    }
    Ok(IntMatrix::from_columns(sup.rank(), &cols))
}

pub fn lattice_sum(a: &Lattice, b: &Lattice) -> Result<Lattice, LaError> {
    if a.ambient_rank() != b.ambient_rank() {
        return Err(LaError::AmbientMismatch(a.ambient_rank(), b.ambient_rank()));
    }
    let mut gens = a.basis_vectors();
    gens.extend(b.basis_vectors());
    hnf_basis(&gens, a.ambient_rank())
}

pub fn lattice_intersect(a: &Lattice, b: &Lattice) -> Result<Lattice, LaError> {
    if a.ambient_rank() != b.ambient_rank() {
        return Err(LaError::AmbientMismatch(a.ambient_rank(), b.ambient_rank()));
    }
    let s = a.ambient_rank();
    if a.rank() == 0 || b.rank() == 0 {
        return Ok(Lattice::zero(s));
    }
    // common denominator D: intersect numerators A' Z^a ∩ B' Z^b, divide by D
    let d = a.denom.lcm(&b.denom);
    let fa = BigInt::from(&d / &a.denom);
    let fb = BigInt::from(&d / &b.denom);
    let an = IntMatrix::from_fn(s, a.rank(), |i, j| a.basis.at(i, j) * &fa);
    let bn = IntMatrix::from_fn(s, b.rank(), |i, j| b.basis.at(i, j) * &fb);
    // kernel of [A' | -B']: pairs (x, y) with A' x = B' y
    let stacked = IntMatrix::from_fn(s, a.rank() + b.rank(), |i, j| {
        if j < a.rank() {
            an.at(i, j).clone()
        } else {
            -bn.at(i, j - a.rank()).clone()
        }
    });
    let ker = integer_kernel(&stacked);
    let mut gens = Vec::with_capacity(ker.cols());
    for j in 0..ker.cols() {
        let x: Vec<BigInt> = (0..a.rank()).map(|i| ker.at(i, j).clone()).collect();
        gens.push(an.mul_vec(&x));
    }
    let m = IntMatrix::from_columns(s, &gens);
    Ok(Lattice::from_numerator(s, &m, &d))
}

/// Dual of a full-rank lattice: all vectors pairing integrally with it.
pub fn dual_lattice(l: &Lattice) -> Result<Lattice, LaError> {
    if !l.is_full_rank() {
        return Err(LaError::NotFullRank);
    }
    let s = l.ambient_rank();
    // L = (1/d) B Z^s  =>  dual = d B^{-T} Z^s
    let inv = rational_inverse(&l.basis);
    let d = Rat::from_integer(BigInt::from(l.denom.clone()));
    let cols: Vec<Vec<Rat>> = (0..s)
        .map(|j| (0..s).map(|i| &inv[j][i] * &d).collect())
        .collect();
    hnf_basis(&cols, s)
}

/// Inverse of a square nonsingular integer matrix, as rational rows.
fn rational_inverse(m: &IntMatrix) -> Vec<Vec<Rat>> {
    let n = m.rows();
    assert_eq!(n, m.cols());
    let mut a: Vec<Vec<Rat>> = (0..n)
        .map(|i| (0..n).map(|j| Rat::from_integer(m.at(i, j).clone())).collect())
        .collect();
    let mut inv: Vec<Vec<Rat>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Rat::one()
                    } else {
                        Rat::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .expect("matrix is singular");
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        let pivot = a[col][col].clone();
        for j in 0..n {
            a[col][j] /= pivot.clone();
            inv[col][j] /= pivot.clone();
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let (av, iv) = (&a[col][j] * &f, &inv[col][j] * &f);
                    a[r][j] -= av;
                    inv[r][j] -= iv;
                }
            }
        }
    }
    inv
}

/// The sublattice `{x ∈ Z^s : W x ∈ target}` of the standard lattice, for
/// an integer matrix `W` mapping into the ambient of `target`.
pub fn preimage_lattice(w: &IntMatrix, target: &Lattice) -> Lattice {
    let s = w.cols();
    let rdim = w.rows();
    if rdim == 0 {
        return Lattice::standard(s);
    }
    assert_eq!(rdim, target.ambient_rank());
    let denom = BigInt::from(target.denominator().clone());
    let b = target.numerator();
    let stacked = IntMatrix::from_fn(rdim, s + b.cols(), |i, j| {
        if j < s {
            w.at(i, j) * &denom
        } else {
            -b.at(i, j - s).clone()
        }
    });
    let ker = integer_kernel(&stacked);
    let mut gens: Vec<Vec<BigInt>> = Vec::with_capacity(ker.cols());
    for j in 0..ker.cols() {
        gens.push((0..s).map(|i| ker.at(i, j).clone()).collect());
    }
    Lattice::from_integer_columns(s, &gens)
}

/// Smallest direct summand of `Z^s` inside the Q-span of `l`:
/// `span_Q(l) ∩ Z^s`.
pub fn saturate(l: &Lattice) -> Lattice {
    let s = l.ambient_rank();
    if l.rank() == 0 {
        return Lattice::zero(s);
    }
    // rows annihilating the span
    let left_kernel = integer_kernel(&l.basis.transpose());
    if left_kernel.cols() == 0 {
        return Lattice::standard(s);
    }
    let constraints = left_kernel.transpose();
    let sat = integer_kernel(&constraints);
    let cols: Vec<Vec<BigInt>> = (0..sat.cols()).map(|j| sat.column(j)).collect();
    Lattice::from_integer_columns(s, &cols)
}

/// Invariant factors of `sup/sub` via the Smith form of the inclusion.
pub fn quotient_structure(sub: &Lattice, sup: &Lattice) -> Result<AbelianStructure, LaError> {
    if sub.ambient_rank() != sup.ambient_rank() {
        return Err(LaError::AmbientMismatch(sub.ambient_rank(), sup.ambient_rank()));
    }
    let coords = change_of_basis(sub, sup)?;
    let d = snf(&coords).d;
    let mut factors = Vec::new();
    for i in 0..d.rows().min(d.cols()) {
        let e = d.at(i, i);
        if e.magnitude() > &BigUint::one() {
            factors.push(e.magnitude().clone());
        }
    }
    Ok(AbelianStructure {
        invariant_factors: factors,
        free_rank: sup.rank() - sub.rank(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Rat {
        Rat::new(BigInt::from(n), BigInt::from(d))
    }

    fn rvec(v: &[i64]) -> Vec<Rat> {
        v.iter().map(|&x| rat(x, 1)).collect()
    }

    fn lat(gens: &[&[i64]], ambient: usize) -> Lattice {
        let g: Vec<Vec<Rat>> = gens.iter().map(|r| rvec(r)).collect();
        hnf_basis(&g, ambient).unwrap()
    }

    /// Independent oracle: |det| by Laplace expansion.
    fn det_laplace(m: &IntMatrix) -> BigInt {
        let n = m.rows();
        assert_eq!(n, m.cols());
        if n == 0 {
            return BigInt::one();
        }
        if n == 1 {
            return m.at(0, 0).clone();
        }
        let mut acc = BigInt::zero();
        for j in 0..n {
            if m.at(0, j).is_zero() {
                continue;
            }
            let minor = IntMatrix::from_fn(n - 1, n - 1, |r, c| {
                m.at(r + 1, if c < j { c } else { c + 1 }).clone()
            });
            let term = m.at(0, j) * det_laplace(&minor);
            if j % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        acc
    }

    /// Independent oracle: invariant factors from gcds of k×k minors
    /// (d_1 ... d_k = gcd of all k-minors).
    fn snf_diag_by_minors(m: &IntMatrix) -> Vec<BigUint> {
        fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for first in 0..n {
                for rest in combinations(n, k - 1) {
                    if rest.iter().all(|&r| r > first) {
                        let mut c = vec![first];
                        c.extend(rest);
                        out.push(c);
                    }
                }
            }
            out
        }
        let maxk = m.rows().min(m.cols());
        let mut gcds = vec![BigUint::zero(); maxk + 1];
        gcds[0] = BigUint::one();
        for k in 1..=maxk {
            let mut g = BigUint::zero();
            for rows in combinations(m.rows(), k) {
                for cols in combinations(m.cols(), k) {
                    let sub = IntMatrix::from_fn(k, k, |i, j| m.at(rows[i], cols[j]).clone());
                    g = g.gcd(&det_laplace(&sub).magnitude());
                }
            }
            gcds[k] = g;
        }
        let mut diag = Vec::new();
        for k in 1..=maxk {
            if gcds[k].is_zero() {
                diag.push(BigUint::zero());
            } else {
                diag.push(&gcds[k] / &gcds[k - 1]);
            }
        }
        diag
    }

    #[test]
    fn hnf_identity_case() {
        let l = lat(&[&[1, 0], &[0, 1]], 2);
        assert_eq!(l, Lattice::standard(2));
    }

    #[test]
    fn hnf_rank2_index6() {
        // oracle by hand column reduction: {(2,0),(1,3)} -> [(1,3),(0,6)]
        let l = lat(&[&[2, 0], &[1, 3]], 2);
        assert_eq!(l.rank(), 2);
        assert_eq!(l.denominator(), &BigUint::one());
        assert_eq!(l.numerator(), &IntMatrix::from_i64_rows(&[&[1, 0], &[3, 6]]));
        assert_eq!(
            lattice_index(&l, &Lattice::standard(2)).unwrap(),
            BigUint::from(6u32)
        );
    }

    #[test]
    fn hnf_single_generator() {
        let l = lat(&[&[2, 4]], 2);
        assert_eq!(l.rank(), 1);
        assert_eq!(l.numerator(), &IntMatrix::from_i64_rows(&[&[2], &[4]]));
    }

    #[test]
    fn hnf_empty_generators_zero_lattice() {
        let l = hnf_basis(&[], 3).unwrap();
        assert_eq!(l, Lattice::zero(3));
        assert_eq!(l.rank(), 0);
    }

    #[test]
    fn hnf_canonical_under_regeneration() {
        let l1 = lat(&[&[2, 0], &[1, 3]], 2);
        // same lattice from different generators: (1,3),(3,3),(2,0)+(1,3)
        let l2 = lat(&[&[1, 3], &[3, 3], &[3, 9]], 2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn snf_identity() {
        let m = IntMatrix::identity(3);
        let s = snf(&m);
        assert_eq!(s.d, IntMatrix::identity(3));
    }

    #[test]
    fn snf_diag_2_3() {
        let m = IntMatrix::from_i64_rows(&[&[2, 0], &[0, 3]]);
        let s = snf(&m);
        assert_eq!(s.d, IntMatrix::from_i64_rows(&[&[1, 0], &[0, 6]]));
        assert_eq!(s.u.mul(&m).mul(&s.v), s.d);
        assert_eq!(det_laplace(&s.u).magnitude(), &BigUint::one());
        assert_eq!(det_laplace(&s.v).magnitude(), &BigUint::one());
    }

    #[test]
    fn snf_4_2_2_4() {
        let m = IntMatrix::from_i64_rows(&[&[4, 2], &[2, 4]]);
        let s = snf(&m);
        assert_eq!(s.d, IntMatrix::from_i64_rows(&[&[2, 0], &[0, 6]]));
        assert_eq!(s.u.mul(&m).mul(&s.v), s.d);
        // cross-check against the minor-gcd oracle
        assert_eq!(
            snf_diag_by_minors(&m),
            vec![BigUint::from(2u32), BigUint::from(6u32)]
        );
    }

    #[test]
    fn index_examples() {
        let sub = lat(&[&[2, 0], &[0, 3]], 2);
        assert_eq!(
            lattice_index(&sub, &Lattice::standard(2)).unwrap(),
            BigUint::from(6u32)
        );
        assert_eq!(lattice_index(&sub, &sub).unwrap(), BigUint::one());
        let skew = lat(&[&[2, 0], &[1, 3]], 2);
        assert_eq!(
            lattice_index(&skew, &Lattice::standard(2)).unwrap(),
            BigUint::from(6u32)
        );
    }

    #[test]
    fn index_errors() {
        let a = lat(&[&[2, 0], &[0, 2]], 2);
        let b = lat(&[&[3, 0], &[0, 3]], 2);
        assert_eq!(lattice_index(&a, &b), Err(LaError::NotSublattice));
        let line = lat(&[&[2, 0]], 2);
        assert_eq!(
            lattice_index(&line, &Lattice::standard(2)),
            Err(LaError::InfiniteIndex)
        );
    }

    #[test]
    fn intersect_and_sum_1d() {
        let two = lat(&[&[2]], 1);
        let three = lat(&[&[3]], 1);
        assert_eq!(lattice_intersect(&two, &three).unwrap(), lat(&[&[6]], 1));
        assert_eq!(lattice_sum(&two, &three).unwrap(), Lattice::standard(1));
    }

    #[test]
    fn intersect_coordinatewise() {
        let a = lat(&[&[2, 0], &[0, 1]], 2);
        let b = lat(&[&[1, 0], &[0, 3]], 2);
        let expect = lat(&[&[2, 0], &[0, 3]], 2);
        assert_eq!(lattice_intersect(&a, &b).unwrap(), expect);
    }

    #[test]
    fn sum_with_zero_is_identity() {
        let a = lat(&[&[2, 0], &[1, 3]], 2);
        assert_eq!(lattice_sum(&a, &Lattice::zero(2)).unwrap(), a);
        assert_eq!(lattice_intersect(&a, &a).unwrap(), a);
    }

    #[test]
    fn dual_examples() {
        assert_eq!(
            dual_lattice(&Lattice::standard(3)).unwrap(),
            Lattice::standard(3)
        );
        let l = lat(&[&[2, 0], &[0, 1]], 2);
        let d = dual_lattice(&l).unwrap();
        let expect = hnf_basis(&[vec![rat(1, 2), rat(0, 1)], rvec(&[0, 1])], 2).unwrap();
        assert_eq!(d, expect);
        // paper case: dual((1/2)Z ⊕ (1/3)Z) = 2Z ⊕ 3Z
        let half_third = hnf_basis(
            &[vec![rat(1, 2), rat(0, 1)], vec![rat(0, 1), rat(1, 3)]],
            2,
        )
        .unwrap();
        assert_eq!(
            dual_lattice(&half_third).unwrap(),
            lat(&[&[2, 0], &[0, 3]], 2)
        );
        let line = lat(&[&[2, 0]], 2);
        assert_eq!(dual_lattice(&line), Err(LaError::NotFullRank));
    }

    #[test]
    fn saturate_examples() {
        assert_eq!(saturate(&lat(&[&[2, 4]], 2)), lat(&[&[1, 2]], 2));
        assert_eq!(saturate(&Lattice::standard(2)), Lattice::standard(2));
        assert_eq!(saturate(&lat(&[&[0, 3]], 2)), lat(&[&[0, 1]], 2));
    }

    #[test]
    fn quotient_examples() {
        let q = quotient_structure(&lat(&[&[2, 0], &[0, 2]], 2), &Lattice::standard(2)).unwrap();
        assert_eq!(
            q.invariant_factors,
            vec![BigUint::from(2u32), BigUint::from(2u32)]
        );
        assert_eq!(q.free_rank, 0);

        let q = quotient_structure(&lat(&[&[2, 0], &[1, 3]], 2), &Lattice::standard(2)).unwrap();
        assert_eq!(q.invariant_factors, vec![BigUint::from(6u32)]);
        assert_eq!(q.free_rank, 0);

        let q = quotient_structure(&lat(&[&[2, 0], &[0, 1]], 2), &Lattice::standard(2)).unwrap();
        assert_eq!(q.invariant_factors, vec![BigUint::from(2u32)]);
        assert_eq!(q.free_rank, 0);
    }

    #[test]
    fn kernel_is_saturated() {
        let m = IntMatrix::from_i64_rows(&[&[1, 2, 3]]);
        let k = integer_kernel(&m);
        assert_eq!(k.cols(), 2);
        for j in 0..k.cols() {
            assert!(m.mul_vec(&k.column(j)).iter().all(|x| x.is_zero()));
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn small_matrix(max_dim: usize) -> impl Strategy<Value = IntMatrix> {
            (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
                proptest::collection::vec(-9i64..=9, r * c).prop_map(move |v| {
                    IntMatrix::from_fn(r, c, |i, j| BigInt::from(v[i * c + j]))
                })
            })
        }

        fn full_rank_lattice(dim: usize) -> impl Strategy<Value = Lattice> {
            proptest::collection::vec(-6i64..=6, dim * dim).prop_filter_map(
                "needs full rank",
                move |v| {
                    let gens: Vec<Vec<Rat>> = (0..dim)
                        .map(|j| {
                            (0..dim)
                                .map(|i| Rat::from_integer(BigInt::from(v[i * dim + j])))
                                .collect()
                        })
                        .collect();
                    let l = hnf_basis(&gens, dim).unwrap();
                    if l.is_full_rank() {
                        Some(l)
                    } else {
                        None
                    }
                },
            )
        }

        proptest! {
            #[test]
            fn snf_is_correct_and_chained(m in small_matrix(4)) {
                let s = snf(&m);
                prop_assert_eq!(s.u.mul(&m).mul(&s.v), s.d.clone());
                let mut prev: Option<BigInt> = None;
                for t in 0..m.rows().min(m.cols()) {
                    let e = s.d.at(t, t).clone();
                    prop_assert!(!e.is_negative());
                    if let Some(p) = prev {
                        if !p.is_zero() {
                            prop_assert!((&e % &p).is_zero());
                        } else {
                            prop_assert!(e.is_zero());
                        }
                    }
                    prev = Some(e);
                }
            }

            #[test]
            fn snf_matches_minor_gcd_oracle(m in small_matrix(3)) {
                let s = snf(&m);
                let oracle = snf_diag_by_minors(&m);
                for (t, expect) in oracle.iter().enumerate() {
                    prop_assert_eq!(&s.d.at(t, t).magnitude().clone(), expect);
                }
            }

            #[test]
            fn dual_dual_is_identity(l in full_rank_lattice(3)) {
                let dd = dual_lattice(&dual_lattice(&l).unwrap()).unwrap();
                prop_assert_eq!(dd, l);
            }

            #[test]
            fn dual_swaps_meet_and_join(a in full_rank_lattice(2), b in full_rank_lattice(2)) {
                let lhs = dual_lattice(&lattice_intersect(&a, &b).unwrap()).unwrap();
                let rhs = lattice_sum(&dual_lattice(&a).unwrap(), &dual_lattice(&b).unwrap()).unwrap();
                prop_assert_eq!(lhs, rhs);
            }

            #[test]
            fn index_is_multiplicative(c in full_rank_lattice(3), f1 in 1i64..=3, f2 in 1i64..=3) {
                // A ⊆ B ⊆ C with controlled scalings
                let b = c.scale(&Rat::from_integer(BigInt::from(f1)));
                let a = b.scale(&Rat::from_integer(BigInt::from(f2)));
                let ca = lattice_index(&a, &c).unwrap();
                let cb = lattice_index(&b, &c).unwrap();
                let ba = lattice_index(&a, &b).unwrap();
                prop_assert_eq!(ca, cb * ba);
            }

            #[test]
            fn hnf_canonical_under_unimodular_recombination(l in full_rank_lattice(3)) {
                // adding a basis vector to another does not change the lattice
                let mut gens = l.basis_vectors();
                let extra: Vec<Rat> = gens[0]
                    .iter()
                    .zip(gens[1].iter())
                    .map(|(x, y)| x + y)
                    .collect();
                gens[0] = extra;
                gens.push(l.basis_vectors()[0].clone());
                let l2 = hnf_basis(&gens, l.ambient_rank()).unwrap();
                prop_assert_eq!(l2, l);
            }

            #[test]
            fn saturation_is_idempotent_summand(m in small_matrix(3)) {
                let cols: Vec<Vec<Rat>> = (0..m.cols())
                    .map(|j| (0..m.rows()).map(|i| Rat::from_integer(m.at(i, j).clone())).collect())
                    .collect();
                let l = hnf_basis(&cols, m.rows()).unwrap();
                let sat = saturate(&l);
                prop_assert_eq!(saturate(&sat).clone(), sat.clone());
                if sat.rank() > 0 {
                    let q = quotient_structure(&sat, &Lattice::standard(m.rows())).unwrap();
                    prop_assert!(q.invariant_factors.is_empty());
                }
            }
        }
    }
}
