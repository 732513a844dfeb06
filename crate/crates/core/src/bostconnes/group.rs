//! Small helper for finite abelian groups presented by invariant factors,
//! with element arithmetic and generation tests.

use crate::exactla::{snf, IntMatrix};
use num::{BigInt, BigUint, Integer, One, Zero};

/// `⊕ Z/d_i` with the divisibility chain `d_1 | d_2 | …`, every `d_i > 1`.
/// The trivial group is the empty product. Elements are coordinate vectors
/// reduced into `[0, d_i)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteAbelianGroup {
    factors: Vec<BigUint>,
}

impl FiniteAbelianGroup {
    pub fn new(factors: Vec<BigUint>) -> Result<Self, String> {
        for w in factors.windows(2) {
            if !(&w[1] % &w[0]).is_zero() {
                return Err(format!("factors {} and {} violate the divisibility chain", w[0], w[1]));
            }
        }
        if factors.iter().any(|f| f <= &BigUint::one()) {
            return Err("invariant factors must exceed 1".into());
        }
        Ok(FiniteAbelianGroup { factors })
    }

    pub fn trivial() -> Self {
        FiniteAbelianGroup { factors: Vec::new() }
    }

    pub fn factors(&self) -> &[BigUint] {
        &self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn order(&self) -> BigUint {
        self.factors.iter().fold(BigUint::one(), |acc, f| acc * f)
    }

    pub fn zero(&self) -> Vec<BigInt> {
        vec![BigInt::zero(); self.factors.len()]
    }

    pub fn reduce(&self, coords: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(coords.len(), self.factors.len());
        coords
            .iter()
            .zip(&self.factors)
            .map(|(c, f)| c.mod_floor(&BigInt::from(f.clone())))
            .collect()
    }

    pub fn add(&self, a: &[BigInt], b: &[BigInt]) -> Vec<BigInt> {
        let sum: Vec<BigInt> = a.iter().zip(b).map(|(x, y)| x + y).collect();
        self.reduce(&sum)
    }

    pub fn neg(&self, a: &[BigInt]) -> Vec<BigInt> {
        let neg: Vec<BigInt> = a.iter().map(|x| -x).collect();
        self.reduce(&neg)
    }

    pub fn scalar_mul(&self, n: &BigInt, a: &[BigInt]) -> Vec<BigInt> {
        let prod: Vec<BigInt> = a.iter().map(|x| x * n).collect();
        self.reduce(&prod)
    }

    pub fn is_zero_elem(&self, a: &[BigInt]) -> bool {
        self.reduce(a).iter().all(|x| x.is_zero())
    }

    /// Whether the given coordinate vectors generate the whole group:
    /// the matrix `[generators | diag(factors)]` must have unit Smith
    /// invariants.
    pub fn is_generated_by(&self, generators: &[Vec<BigInt>]) -> bool {
        let r = self.factors.len();
        if r == 0 {
            return true;
        }
        let cols = generators.len() + r;
        let m = IntMatrix::from_fn(r, cols, |i, j| {
            if j < generators.len() {
                generators[j][i].clone()
            } else if j - generators.len() == i {
                BigInt::from(self.factors[i].clone())
            } else {
                BigInt::zero()
            }
        });
        let d = snf(&m).d;
        (0..r).all(|t| d.at(t, t).is_one())
    }

    /// Enumerates all elements in a deterministic order (desk scale only).
    pub fn elements(&self) -> Vec<Vec<BigInt>> {
        let mut out = vec![Vec::new()];
        for f in &self.factors {
            let mut next = Vec::new();
            let bound = f.to_string().parse::<u64>().expect("desk-scale order");
            for prefix in &out {
                for v in 0..bound {
                    let mut p = prefix.clone();
                    p.push(BigInt::from(v));
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    /// Canonicalizes a presentation `Z^t / diag(c_i)` with arbitrary cyclic
    /// orders into invariant factors, returning the group and the row
    /// transform taking old coordinates to new ones.
    pub fn from_cyclic_orders(orders: &[BigUint]) -> (Self, CoordTransform) {
        let t = orders.len();
        if t == 0 {
            return (
                Self::trivial(),
                CoordTransform {
                    rows: IntMatrix::zeros(0, 0),
                    factors: Vec::new(),
                },
            );
        }
        let rel = IntMatrix::from_fn(t, t, |i, j| {
            if i == j {
                BigInt::from(orders[i].clone())
            } else {
                BigInt::zero()
            }
        });
        let decomp = snf(&rel);
        let mut kept_rows = Vec::new();
        let mut factors = Vec::new();
        for i in 0..t {
            let d = decomp.d.at(i, i).magnitude().clone();
            if d > BigUint::one() {
                kept_rows.push(i);
                factors.push(d);
            }
        }
        let rows = IntMatrix::from_fn(kept_rows.len(), t, |i, j| decomp.u.at(kept_rows[i], j).clone());
        let group = FiniteAbelianGroup { factors: factors.clone() };
        (group, CoordTransform { rows, factors })
    }
}

/// Maps old cyclic-piece exponent vectors to canonical coordinates.
#[derive(Clone, Debug)]
pub struct CoordTransform {
    rows: IntMatrix,
    factors: Vec<BigUint>,
}

impl CoordTransform {
    pub fn apply(&self, exponents: &[BigInt]) -> Vec<BigInt> {
        if self.factors.is_empty() {
            return Vec::new();
        }
        let raw = self.rows.mul_vec(exponents);
        raw.iter()
            .zip(&self.factors)
            .map(|(c, f)| c.mod_floor(&BigInt::from(f.clone())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(factors: &[u64]) -> FiniteAbelianGroup {
        FiniteAbelianGroup::new(factors.iter().map(|&f| BigUint::from(f)).collect()).unwrap()
    }

    #[test]
    fn arithmetic_mod_factors() {
        let group = g(&[2, 6]);
        let a = vec![BigInt::from(1), BigInt::from(5)];
        let b = vec![BigInt::from(1), BigInt::from(4)];
        assert_eq!(group.add(&a, &b), vec![BigInt::from(0), BigInt::from(3)]);
        assert!(group.is_zero_elem(&group.add(&a, &group.neg(&a))));
    }

    #[test]
    fn generation_test() {
        let group = g(&[4]);
        assert!(group.is_generated_by(&[vec![BigInt::from(1)]]));
        assert!(group.is_generated_by(&[vec![BigInt::from(3)]]));
        assert!(!group.is_generated_by(&[vec![BigInt::from(2)]]));
        assert!(FiniteAbelianGroup::trivial().is_generated_by(&[]));
    }

    #[test]
    fn cyclic_orders_canonicalize() {
        // Z/2 ⊕ Z/3 ≅ Z/6
        let (group, t) = FiniteAbelianGroup::from_cyclic_orders(&[BigUint::from(2u32), BigUint::from(3u32)]);
        assert_eq!(group.factors(), &[BigUint::from(6u32)]);
        // (1,0) and (0,1) must map to elements of order 2 and 3
        let a = t.apply(&[BigInt::from(1), BigInt::from(0)]);
        let b = t.apply(&[BigInt::from(0), BigInt::from(1)]);
        assert!(group.is_zero_elem(&group.scalar_mul(&BigInt::from(2), &a)));
        assert!(!group.is_zero_elem(&a));
        assert!(group.is_zero_elem(&group.scalar_mul(&BigInt::from(3), &b)));
        assert!(group.is_generated_by(&[group.add(&a, &b)]));
    }

    #[test]
    fn rejects_bad_chain() {
        assert!(FiniteAbelianGroup::new(vec![BigUint::from(2u32), BigUint::from(3u32)]).is_err());
        assert!(FiniteAbelianGroup::new(vec![BigUint::from(1u32)]).is_err());
    }

    #[test]
    fn element_enumeration() {
        let group = g(&[2, 4]);
        assert_eq!(group.elements().len(), 8);
        assert_eq!(FiniteAbelianGroup::trivial().elements(), vec![Vec::<BigInt>::new()]);
    }
}
