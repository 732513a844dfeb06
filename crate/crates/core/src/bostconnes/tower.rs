//! Ray-class tower data: finite quotients `J^F / P^m` presented by
//! invariant factors with marked prime images and transition maps.
//!
//! For the rational field everything is computed internally through
//! modular arithmetic; other fields enter as validated fixture files only.

use super::group::FiniteAbelianGroup;
use crate::completions::{validate_chain, CompletionChain};
use crate::exactla::{preimage_lattice, IntMatrix, Lattice};
use crate::fixtures::{
    big_int_value, big_uint_value, parse_big_int, parse_big_uint, parse_u64,
    SchemaError,
};
use num::{BigInt, BigUint, Integer, One, Zero};
use serde_json::{Map, Value};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TowerError {
    #[error("modulus primes overlap the marked support")]
    PrimeOverlap,
    #[error("fixture schema error: {0}")]
    Schema(String),
    #[error("inconsistent tower at F={0:?}, m={1:?}: {2}")]
    InconsistentTower(Vec<String>, Vec<u32>, String),
    #[error("tower does not cover F={0:?} to depth {1}")]
    DepthUnavailable(Vec<String>, u32),
    #[error("unknown prime label {0}")]
    UnknownPrime(String),
}

/// A prime of the field: a label and its absolute norm. The order of the
/// declared list is the fixed total order used for orientation signs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeInfo {
    pub label: String,
    pub norm: BigUint,
}

/// Key of a tower entry: modulus support `F` (sorted labels) and exponent
/// vector over `F` (each at least 1).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TowerKey {
    pub f: Vec<String>,
    pub m: Vec<u32>,
}

impl TowerKey {
    pub fn root() -> Self {
        TowerKey { f: Vec::new(), m: Vec::new() }
    }

    pub fn uniform(f: &[String], m: u32) -> Self {
        TowerKey {
            f: f.to_vec(),
            m: vec![m; f.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub to: TowerKey,
    /// rows × cols = target rank × source rank, acting on coordinates.
    pub matrix: Vec<Vec<BigInt>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerEntry {
    pub group: FiniteAbelianGroup,
    /// Coordinates of the class of each marked prime not dividing the
    /// modulus support.
    pub images: BTreeMap<String, Vec<BigInt>>,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberFieldData {
    pub label: String,
    pub primes: Vec<PrimeInfo>,
    pub h1: BigUint,
    pub tower: BTreeMap<TowerKey, TowerEntry>,
}

impl NumberFieldData {
    pub fn prime_labels(&self) -> Vec<String> {
        self.primes.iter().map(|p| p.label.clone()).collect()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.primes.iter().position(|p| p.label == label)
    }

    /// Declared labels not dividing the given modulus support, in order.
    pub fn ambient_of(&self, f: &[String]) -> Vec<String> {
        self.primes
            .iter()
            .map(|p| p.label.clone())
            .filter(|l| !f.contains(l))
            .collect()
    }

    pub fn entry(&self, key: &TowerKey) -> Option<&TowerEntry> {
        self.tower.get(key)
    }

    /// Validates every structural invariant; errors name the failing entry.
    pub fn validate(&self) -> Result<(), TowerError> {
        let labels = self.prime_labels();
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() {
            return Err(TowerError::Schema("duplicate prime labels".into()));
        }
        let root = self
            .tower
            .get(&TowerKey::root())
            .ok_or_else(|| TowerError::Schema("missing the F = {} entry".into()))?;
        if root.group.order() != self.h1 {
            return Err(TowerError::InconsistentTower(
                Vec::new(),
                Vec::new(),
                format!("root order {} differs from h1 {}", root.group.order(), self.h1),
            ));
        }
        for (key, entry) in &self.tower {
            let fail = |msg: String| {
                Err(TowerError::InconsistentTower(key.f.clone(), key.m.clone(), msg))
            };
            if key.f.len() != key.m.len() {
                return fail("modulus vector length mismatch".into());
            }
            if key.m.iter().any(|&e| e == 0) {
                return fail("modulus exponents must be positive".into());
            }
            if !key.f.windows(2).all(|w| {
                let (a, b) = (self.position(&w[0]), self.position(&w[1]));
                matches!((a, b), (Some(x), Some(y)) if x < y)
            }) {
                return fail("modulus support must be sorted declared labels".into());
            }
            if key.f.iter().any(|l| self.position(l).is_none()) {
                return fail("modulus support uses an undeclared label".into());
            }
            // images: exactly the labels outside F, with matching lengths
            let expect: BTreeSet<String> = self.ambient_of(&key.f).into_iter().collect();
            let got: BTreeSet<String> = entry.images.keys().cloned().collect();
            if expect != got {
                return fail("images must be given exactly for the primes outside F".into());
            }
            for (l, coords) in &entry.images {
                if coords.len() != entry.group.rank() {
                    return fail(format!("image of {l} has wrong coordinate length"));
                }
            }
            let gens: Vec<Vec<BigInt>> = entry.images.values().cloned().collect();
            if !entry.group.is_generated_by(&gens) {
                return fail("prime images do not generate the quotient".into());
            }
            // transitions: well-formed, surjective and compatible
            for t in &entry.transitions {
                let target = match self.tower.get(&t.to) {
                    Some(t) => t,
                    None => return fail(format!("transition target {:?} missing", t.to)),
                };
                if !t.to.f.iter().all(|l| key.f.contains(l)) {
                    return fail("transition target support must shrink".into());
                }
                for (l, &e) in t.to.f.iter().zip(&t.to.m) {
                    let src = key.f.iter().position(|x| x == l).expect("checked above");
                    if e > key.m[src] {
                        return fail("transition target modulus must not grow".into());
                    }
                }
                if t.matrix.len() != target.group.rank()
                    || t.matrix.iter().any(|row| row.len() != entry.group.rank())
                {
                    return fail("transition matrix has wrong shape".into());
                }
                let cols: Vec<Vec<BigInt>> = (0..entry.group.rank())
                    .map(|j| t.matrix.iter().map(|row| row[j].clone()).collect())
                    .collect();
                if !target.group.is_generated_by(&cols) {
                    return fail(format!("transition to {:?} is not surjective", t.to));
                }
                // commuting square with the marked images
                for (l, src_img) in &entry.images {
                    let Some(tgt_img) = target.images.get(l) else {
                        continue;
                    };
                    let mapped = apply_matrix(&t.matrix, src_img);
                    let mapped = target.group.reduce(&mapped);
                    if &mapped != &target.group.reduce(tgt_img) {
                        return fail(format!("transition to {:?} breaks the image of {l}", t.to));
                    }
                }
            }
        }
        Ok(())
    }

    /// Composite transition matrix between tower keys, chasing stored
    /// transitions greedily (lower one exponent at a time, then drop
    /// primes).
    pub fn composite_transition(
        &self,
        from: &TowerKey,
        to: &TowerKey,
    ) -> Result<Vec<Vec<BigInt>>, TowerError> {
        let src = self
            .tower
            .get(from)
            .ok_or_else(|| TowerError::DepthUnavailable(from.f.clone(), 0))?;
        if from == to {
            let r = src.group.rank();
            return Ok((0..r)
                .map(|i| {
                    (0..r)
                        .map(|j| if i == j { BigInt::one() } else { BigInt::zero() })
                        .collect()
                })
                .collect());
        }
        // pick a stored transition moving toward `to`
        for t in &src.transitions {
            if transition_moves_toward(from, &t.to, to) {
                let rest = self.composite_transition(&t.to, to)?;
                return Ok(compose_matrices(&rest, &t.matrix));
            }
        }
        Err(TowerError::InconsistentTower(
            from.f.clone(),
            from.m.clone(),
            format!("no transition path toward {to:?}"),
        ))
    }
}

fn transition_moves_toward(from: &TowerKey, step: &TowerKey, to: &TowerKey) -> bool {
    // `step` must still dominate `to`
    for (l, &e) in to.f.iter().zip(&to.m) {
        match step.f.iter().position(|x| x == l) {
            Some(i) => {
                if step.m[i] < e {
                    return false;
                }
            }
            None => return false,
        }
    }
    step != from
}

fn apply_matrix(m: &[Vec<BigInt>], v: &[BigInt]) -> Vec<BigInt> {
    m.iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).fold(BigInt::zero(), |x, y| x + y))
        .collect()
}

fn compose_matrices(a: &[Vec<BigInt>], b: &[Vec<BigInt>]) -> Vec<Vec<BigInt>> {
    // (a ∘ b): rows(a) × cols(b)
    let rows = a.len();
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| {
                    let mut acc = BigInt::zero();
                    for k in 0..inner {
                        acc += &a[i][k] * &b[k][j];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// the rational field, computed through modular arithmetic

/// Multiplicative group mod `M = ∏ q^{m_q}` with discrete logarithms,
/// presented canonically by invariant factors.
struct UnitGroup {
    modulus: BigUint,
    /// (piece modulus, generator, order); 2-power pieces may contribute two
    /// generator entries (-1 and 3).
    pieces: Vec<(BigUint, BigUint, BigUint)>,
    group: FiniteAbelianGroup,
    transform: super::group::CoordTransform,
}

impl UnitGroup {
    fn new(prime_powers: &[(u64, u32)]) -> Self {
        let mut modulus = BigUint::one();
        let mut pieces: Vec<(BigUint, BigUint, BigUint)> = Vec::new();
        for &(q, e) in prime_powers {
            let pm = BigUint::from(q).pow(e);
            modulus *= &pm;
            if q == 2 {
                match e {
                    1 => {}
                    2 => pieces.push((pm.clone(), BigUint::from(3u32), BigUint::from(2u32))),
                    _ => {
                        pieces.push((pm.clone(), &pm - BigUint::one(), BigUint::from(2u32)));
                        pieces.push((pm.clone(), BigUint::from(3u32), BigUint::from(2u32).pow(e - 2)));
                    }
                }
            } else {
                let order = BigUint::from(q).pow(e - 1) * BigUint::from(q - 1);
                let g = primitive_root(q, e);
                pieces.push((pm, g, order));
            }
        }
        let orders: Vec<BigUint> = pieces.iter().map(|(_, _, o)| o.clone()).collect();
        let (group, transform) = FiniteAbelianGroup::from_cyclic_orders(&orders);
        UnitGroup {
            modulus,
            pieces,
            group,
            transform,
        }
    }

    fn coords(&self, residue: &BigUint) -> Vec<BigInt> {
        let mut exps = vec![BigInt::zero(); self.pieces.len()];
        let mut i = 0;
        while i < self.pieces.len() {
            let (pm, g, order) = &self.pieces[i];
            let r = residue % pm;
            // a 2-power modulus with two generators (-1, 3) needs a joint
            // sign × power search
            let paired = i + 1 < self.pieces.len()
                && self.pieces[i + 1].0 == *pm
                && g == &(pm - BigUint::one());
            if paired {
                let (_, g2, o2) = &self.pieces[i + 1];
                let mut found = false;
                'search: for s in 0u32..2 {
                    let mut acc = if s == 0 {
                        BigUint::one()
                    } else {
                        (pm - BigUint::one()) % pm
                    };
                    let mut k = BigUint::zero();
                    loop {
                        if acc == r {
                            exps[i] = BigInt::from(s);
                            exps[i + 1] = BigInt::from(k.clone());
                            found = true;
                            break 'search;
                        }
                        k += BigUint::one();
                        if &k >= o2 {
                            break;
                        }
                        acc = acc * g2 % pm;
                    }
                }
                assert!(found, "unit must be expressible in the two-generator form");
                i += 2;
            } else {
                exps[i] = BigInt::from(dlog(&r, g, order, pm));
                i += 1;
            }
        }
        self.transform.apply(&exps)
    }
}

fn dlog(r: &BigUint, g: &BigUint, order: &BigUint, modulus: &BigUint) -> u64 {
    let mut acc = BigUint::one();
    let mut k = 0u64;
    let bound = order.to_string().parse::<u64>().expect("desk-scale order");
    while k < bound {
        if &acc == r {
            return k;
        }
        acc = acc * g % modulus;
        k += 1;
    }
    panic!("residue is not in the cyclic piece");
}

fn primitive_root(q: u64, e: u32) -> BigUint {
    // smallest g that is primitive mod q and mod q^2 works for all q^e
    let phi_q = q - 1;
    let prime_factors = factorize(phi_q);
    'outer: for g in 2..q {
        for &f in &prime_factors {
            if pow_mod(g, phi_q / f, q) == 1 {
                continue 'outer;
            }
        }
        // g is primitive mod q; ensure g^{q-1} != 1 mod q^2 (else g+q works)
        if e >= 2 {
            let q2 = q * q;
            if pow_mod_u128(g as u128, phi_q as u128, q2 as u128) == 1 {
                return BigUint::from(g + q);
            }
        }
        return BigUint::from(g);
    }
    unreachable!("every odd prime has a primitive root");
}

fn factorize(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn pow_mod(base: u64, mut exp: u64, modulus: u64) -> u64 {
    let mut acc = 1u128;
    let m = modulus as u128;
    let mut b = (base % modulus) as u128;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    acc as u64
}

fn pow_mod_u128(mut base: u128, mut exp: u128, modulus: u128) -> u128 {
    let mut acc = 1u128;
    base %= modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % modulus;
        }
        base = base * base % modulus;
        exp >>= 1;
    }
    acc
}

/// Tower data for the rational field: marked support `S`, modulus pool `F`
/// (disjoint from `S`), quotients `(Z/∏ q^{m_q})^*` for every `E ⊆ F` and
/// exponent vector with entries up to `depth`, with images the residues of
/// the marked primes and all decrement/drop transitions.
pub fn builtin_rationals(s: &[u64], f: &[u64], depth: u32) -> Result<NumberFieldData, TowerError> {
    let s_set: BTreeSet<u64> = s.iter().copied().collect();
    let f_set: BTreeSet<u64> = f.iter().copied().collect();
    if !s_set.is_disjoint(&f_set) {
        return Err(TowerError::PrimeOverlap);
    }
    let mut all: Vec<u64> = s_set.union(&f_set).copied().collect();
    all.sort();
    let primes: Vec<PrimeInfo> = all
        .iter()
        .map(|&p| PrimeInfo {
            label: p.to_string(),
            norm: BigUint::from(p),
        })
        .collect();

    let f_sorted: Vec<u64> = f_set.iter().copied().collect();
    let mut tower = BTreeMap::new();
    for mask in 0u32..(1 << f_sorted.len()) {
        let e_primes: Vec<u64> = f_sorted
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &q)| q)
            .collect();
        let mut m_vectors: Vec<Vec<u32>> = vec![vec![]];
        for _ in 0..e_primes.len() {
            let mut next = Vec::new();
            for prefix in &m_vectors {
                for e in 1..=depth {
                    let mut p = prefix.clone();
                    p.push(e);
                    next.push(p);
                }
            }
            m_vectors = next;
        }
        for m in m_vectors {
            let key = TowerKey {
                f: e_primes.iter().map(|q| q.to_string()).collect(),
                m: m.clone(),
            };
            let entry = rational_entry(&all, &e_primes, &m)?;
            tower.insert(key, entry);
        }
    }
    let field = NumberFieldData {
        label: "Q".into(),
        primes,
        h1: BigUint::one(),
        tower,
    };
    field.validate()?;
    Ok(field)
}

fn rational_entry(all: &[u64], e_primes: &[u64], m: &[u32]) -> Result<TowerEntry, TowerError> {
    let pp: Vec<(u64, u32)> = e_primes.iter().copied().zip(m.iter().copied()).collect();
    let units = UnitGroup::new(&pp);
    let mut images = BTreeMap::new();
    for &q in all {
        if e_primes.contains(&q) {
            continue;
        }
        let residue = BigUint::from(q) % &units.modulus;
        images.insert(q.to_string(), units.coords(&residue));
    }
    // transitions: lower one exponent, or drop a prime at exponent 1
    let mut transitions = Vec::new();
    for (i, &q) in e_primes.iter().enumerate() {
        let (to_primes, to_m): (Vec<u64>, Vec<u32>) = if m[i] > 1 {
            let mut tm = m.to_vec();
            tm[i] -= 1;
            (e_primes.to_vec(), tm)
        } else {
            let tp: Vec<u64> = e_primes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &x)| x)
                .collect();
            let tm: Vec<u32> = m
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &x)| x)
                .collect();
            (tp, tm)
        };
        let target_pp: Vec<(u64, u32)> = to_primes.iter().copied().zip(to_m.iter().copied()).collect();
        let target_units = UnitGroup::new(&target_pp);
        // matrix column per source generator: its residue reduced downstairs
        let rank = units.group.rank();
        let mut cols = Vec::with_capacity(rank);
        for gen_idx in 0..rank {
            let residue = residue_of_generator(&units, gen_idx);
            cols.push(target_units.coords(&(residue % &target_units.modulus)));
        }
        let trank = target_units.group.rank();
        let matrix: Vec<Vec<BigInt>> = (0..trank)
            .map(|r| (0..rank).map(|c| cols[c][r].clone()).collect())
            .collect();
        transitions.push(Transition {
            to: TowerKey {
                f: to_primes.iter().map(|x| x.to_string()).collect(),
                m: to_m,
            },
            matrix,
        });
        let _ = q;
    }
    Ok(TowerEntry {
        group: units.group.clone(),
        images,
        transitions,
    })
}

/// A residue mapping to the `gen_idx`-th canonical generator.
fn residue_of_generator(units: &UnitGroup, gen_idx: usize) -> BigUint {
    // search the group elements for one whose coords are the basis vector;
    // group orders here are tiny, direct search is fine
    let rank = units.group.rank();
    let mut target = vec![BigInt::zero(); rank];
    target[gen_idx] = BigInt::one();
    let mut residue = BigUint::one();
    loop {
        residue += BigUint::one();
        assert!(
            residue < units.modulus,
            "generator residue search must stay below the modulus"
        );
        if residue.gcd(&units.modulus).is_one() && units.coords(&residue) == target {
            return residue;
        }
    }
}

// ---------------------------------------------------------------------------
// fixture parsing and serialization

pub fn field_to_value(field: &NumberFieldData) -> Value {
    let mut obj = Map::new();
    obj.insert("label".into(), Value::from(field.label.clone()));
    obj.insert(
        "primes".into(),
        Value::Array(
            field
                .primes
                .iter()
                .map(|p| {
                    let mut o = Map::new();
                    o.insert("label".into(), Value::from(p.label.clone()));
                    o.insert("norm".into(), big_uint_value(&p.norm));
                    Value::Object(o)
                })
                .collect(),
        ),
    );
    obj.insert("h1".into(), big_uint_value(&field.h1));
    let tower: Vec<Value> = field
        .tower
        .iter()
        .map(|(key, entry)| {
            let mut o = Map::new();
            o.insert(
                "F".into(),
                Value::Array(key.f.iter().map(|l| Value::from(l.clone())).collect()),
            );
            o.insert(
                "m".into(),
                Value::Array(key.m.iter().map(|&e| Value::from(e)).collect()),
            );
            let mut st = Map::new();
            st.insert(
                "factors".into(),
                Value::Array(entry.group.factors().iter().map(big_uint_value).collect()),
            );
            o.insert("structure".into(), Value::Object(st));
            let mut imgs = Map::new();
            for (l, coords) in &entry.images {
                imgs.insert(
                    l.clone(),
                    Value::Array(coords.iter().map(big_int_value).collect()),
                );
            }
            o.insert("images".into(), Value::Object(imgs));
            let trans: Vec<Value> = entry
                .transitions
                .iter()
                .map(|t| {
                    let mut to = Map::new();
                    to.insert(
                        "F".into(),
                        Value::Array(t.to.f.iter().map(|l| Value::from(l.clone())).collect()),
                    );
                    to.insert(
                        "m".into(),
                        Value::Array(t.to.m.iter().map(|&e| Value::from(e)).collect()),
                    );
                    to.insert(
                        "matrix".into(),
                        Value::Array(
                            t.matrix
                                .iter()
                                .map(|row| Value::Array(row.iter().map(big_int_value).collect()))
                                .collect(),
                        ),
                    );
                    Value::Object(to)
                })
                .collect();
            o.insert("transitions".into(), Value::Array(trans));
            Value::Object(o)
        })
        .collect();
    obj.insert("tower".into(), Value::Array(tower));
    Value::Object(obj)
}

pub fn field_from_value(v: &Value) -> Result<NumberFieldData, TowerError> {
    let sch = |e: SchemaError| TowerError::Schema(e.to_string());
    let obj = v
        .as_object()
        .ok_or_else(|| TowerError::Schema("expected an object".into()))?;
    let need = |k: &str| -> Result<&Value, TowerError> {
        obj.get(k)
            .ok_or_else(|| TowerError::Schema(format!("missing field `{k}`")))
    };
    let label = need("label")?
        .as_str()
        .ok_or_else(|| TowerError::Schema("label must be a string".into()))?
        .to_string();
    let mut primes = Vec::new();
    for p in need("primes")?
        .as_array()
        .ok_or_else(|| TowerError::Schema("primes must be an array".into()))?
    {
        let po = p
            .as_object()
            .ok_or_else(|| TowerError::Schema("prime must be an object".into()))?;
        let plabel = po
            .get("label")
            .and_then(|l| l.as_str())
            .ok_or_else(|| TowerError::Schema("prime label must be a string".into()))?;
        let norm = parse_big_uint(
            po.get("norm")
                .ok_or_else(|| TowerError::Schema("prime norm missing".into()))?,
        )
        .map_err(sch)?;
        primes.push(PrimeInfo {
            label: plabel.to_string(),
            norm,
        });
    }
    let h1 = parse_big_uint(need("h1")?).map_err(sch)?;
    let mut tower = BTreeMap::new();
    for t in need("tower")?
        .as_array()
        .ok_or_else(|| TowerError::Schema("tower must be an array".into()))?
    {
        let to = t
            .as_object()
            .ok_or_else(|| TowerError::Schema("tower entry must be an object".into()))?;
        let tneed = |k: &str| -> Result<&Value, TowerError> {
            to.get(k)
                .ok_or_else(|| TowerError::Schema(format!("tower entry missing `{k}`")))
        };
        let f: Vec<String> = tneed("F")?
            .as_array()
            .ok_or_else(|| TowerError::Schema("F must be an array".into()))?
            .iter()
            .map(|l| {
                l.as_str()
                    .map(String::from)
                    .ok_or_else(|| TowerError::Schema("F labels must be strings".into()))
            })
            .collect::<Result<_, _>>()?;
        let m: Vec<u32> = tneed("m")?
            .as_array()
            .ok_or_else(|| TowerError::Schema("m must be an array".into()))?
            .iter()
            .map(|x| parse_u64(x).map(|v| v as u32).map_err(sch))
            .collect::<Result<_, _>>()?;
        let factors: Vec<BigUint> = tneed("structure")?
            .as_object()
            .and_then(|s| s.get("factors"))
            .and_then(|f| f.as_array())
            .ok_or_else(|| TowerError::Schema("structure.factors must be an array".into()))?
            .iter()
            .map(|x| parse_big_uint(x).map_err(sch))
            .collect::<Result<_, _>>()?;
        let group = FiniteAbelianGroup::new(factors).map_err(TowerError::Schema)?;
        let mut images = BTreeMap::new();
        for (l, coords) in tneed("images")?
            .as_object()
            .ok_or_else(|| TowerError::Schema("images must be an object".into()))?
        {
            let coords: Vec<BigInt> = coords
                .as_array()
                .ok_or_else(|| TowerError::Schema("image coords must be an array".into()))?
                .iter()
                .map(|x| parse_big_int(x).map_err(sch))
                .collect::<Result<_, _>>()?;
            images.insert(l.clone(), group.reduce(&coords));
        }
        let mut transitions = Vec::new();
        for tr in tneed("transitions")?
            .as_array()
            .ok_or_else(|| TowerError::Schema("transitions must be an array".into()))?
        {
            let tro = tr
                .as_object()
                .ok_or_else(|| TowerError::Schema("transition must be an object".into()))?;
            let tf: Vec<String> = tro
                .get("F")
                .and_then(|x| x.as_array())
                .ok_or_else(|| TowerError::Schema("transition F must be an array".into()))?
                .iter()
                .map(|l| {
                    l.as_str()
                        .map(String::from)
                        .ok_or_else(|| TowerError::Schema("transition labels must be strings".into()))
                })
                .collect::<Result<_, _>>()?;
            let tm: Vec<u32> = tro
                .get("m")
                .and_then(|x| x.as_array())
                .ok_or_else(|| TowerError::Schema("transition m must be an array".into()))?
                .iter()
                .map(|x| parse_u64(x).map(|v| v as u32).map_err(sch))
                .collect::<Result<_, _>>()?;
            let matrix: Vec<Vec<BigInt>> = tro
                .get("matrix")
                .and_then(|x| x.as_array())
                .ok_or_else(|| TowerError::Schema("transition matrix must be an array".into()))?
                .iter()
                .map(|row| {
                    row.as_array()
                        .ok_or_else(|| TowerError::Schema("matrix row must be an array".into()))?
                        .iter()
                        .map(|x| parse_big_int(x).map_err(sch))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<_, _>>()?;
            transitions.push(Transition {
                to: TowerKey { f: tf, m: tm },
                matrix,
            });
        }
        tower.insert(
            TowerKey { f, m },
            TowerEntry {
                group,
                images,
                transitions,
            },
        );
    }
    let field = NumberFieldData {
        label,
        primes,
        h1,
        tower,
    };
    field.validate()?;
    Ok(field)
}

// ---------------------------------------------------------------------------
// completion chains from tower data

/// The chain on `Z^{ambient(F)}` whose level-k sublattice is the kernel of
/// the image map into `J^F / P^{(k,…,k)}`.
pub fn galois_chain(
    field: &NumberFieldData,
    f: &[String],
    depth: u32,
) -> Result<CompletionChain, TowerError> {
    let ambient_labels = field.ambient_of(f);
    let s = ambient_labels.len();
    let levels_needed: Vec<TowerKey> = if f.is_empty() {
        vec![TowerKey::root(); depth.max(1) as usize]
    } else {
        (1..=depth.max(1)).map(|k| TowerKey::uniform(f, k)).collect()
    };
    let mut levels = Vec::new();
    let mut all_orders: Vec<BigUint> = Vec::new();
    for key in &levels_needed {
        let entry = field
            .entry(key)
            .ok_or_else(|| TowerError::DepthUnavailable(f.to_vec(), depth))?;
        all_orders.push(entry.group.order());
        let r = entry.group.rank();
        if r == 0 {
            levels.push(Lattice::standard(s));
            continue;
        }
        let img = IntMatrix::from_fn(r, s, |i, j| {
            entry.images[&ambient_labels[j]][i].clone()
        });
        let diag_cols: Vec<Vec<BigInt>> = (0..r)
            .map(|j| {
                (0..r)
                    .map(|i| {
                        if i == j {
                            BigInt::from(entry.group.factors()[i].clone())
                        } else {
                            BigInt::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        let target = Lattice::from_integer_columns(r, &diag_cols);
        levels.push(preimage_lattice(&img, &target));
    }
    let mut primes: BTreeSet<u64> = BTreeSet::new();
    for o in &all_orders {
        for p in factorize_big(o) {
            primes.insert(p);
        }
    }
    if primes.is_empty() {
        primes.insert(2); // trivial quotients: any declared prime set works
    }
    validate_chain(levels, primes)
        .map_err(|e| TowerError::Schema(format!("galois chain invalid: {e}")))
}

fn factorize_big(n: &BigUint) -> Vec<u64> {
    let mut n = n.to_string().parse::<u128>().expect("desk-scale order");
    let mut out = Vec::new();
    let mut d = 2u128;
    while d * d <= n {
        if n % d == 0 {
            out.push(d as u64);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n as u64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_mod_9_are_cyclic_of_order_6() {
        let u = UnitGroup::new(&[(3, 2)]);
        assert_eq!(u.group.factors(), &[BigUint::from(6u32)]);
        // 2 is a primitive root mod 9
        let c = u.coords(&BigUint::from(2u32));
        assert!(u.group.is_generated_by(&[c]));
    }

    #[test]
    fn units_mod_8_are_two_by_two() {
        let u = UnitGroup::new(&[(2, 3)]);
        assert_eq!(u.group.factors(), &[BigUint::from(2u32), BigUint::from(2u32)]);
        let seven = u.coords(&BigUint::from(7u32));
        let three = u.coords(&BigUint::from(3u32));
        assert!(u.group.is_generated_by(&[seven, three]));
    }

    #[test]
    fn builtin_rationals_small() {
        let field = builtin_rationals(&[2, 5], &[3], 2).unwrap();
        assert_eq!(field.h1, BigUint::one());
        // F={3}, m=1: quotient Z/2 with both images the generator
        let key = TowerKey {
            f: vec!["3".into()],
            m: vec![1],
        };
        let entry = field.entry(&key).unwrap();
        assert_eq!(entry.group.factors(), &[BigUint::from(2u32)]);
        assert_eq!(entry.images["2"], vec![BigInt::from(1)]);
        assert_eq!(entry.images["5"], vec![BigInt::from(1)]);
        // F={3}, m=2: quotient of order 6 where the image of 2 generates
        let key2 = TowerKey {
            f: vec!["3".into()],
            m: vec![2],
        };
        let entry2 = field.entry(&key2).unwrap();
        assert_eq!(entry2.group.order(), BigUint::from(6u32));
        assert!(entry2.group.is_generated_by(&[entry2.images["2"].clone()]));
        // root entry trivial: narrow class number of Q is 1
        assert_eq!(
            field.entry(&TowerKey::root()).unwrap().group.order(),
            BigUint::one()
        );
    }

    #[test]
    fn builtin_rejects_overlap() {
        assert_eq!(
            builtin_rationals(&[2, 3], &[3], 1).unwrap_err(),
            TowerError::PrimeOverlap
        );
    }

    #[test]
    fn galois_chain_mod_3() {
        let field = builtin_rationals(&[2, 5], &[3], 3).unwrap();
        let chain = galois_chain(&field, &["3".into()], 3).unwrap();
        // level 1 kernel: {(a,b): a + b even} since 2 ≡ 5 ≡ 2 mod 3
        let lvl1 = chain.level(1);
        assert_eq!(
            crate::exactla::lattice_index(&lvl1, &Lattice::standard(2)).unwrap(),
            BigUint::from(2u32)
        );
        let v = vec![
            crate::exactla::Rat::from_integer(BigInt::from(1)),
            crate::exactla::Rat::from_integer(BigInt::from(1)),
        ];
        assert!(lvl1.contains_vector(&v));
        // orders 2, 6, 18 up the tower
        assert_eq!(chain.level_index(2), BigUint::from(6u32));
        assert_eq!(chain.level_index(3), BigUint::from(18u32));
    }

    #[test]
    fn galois_chain_empty_f_is_constant() {
        // the trivial-modulus ambient covers every declared prime, pool
        // primes included
        let field = builtin_rationals(&[2, 5], &[3], 2).unwrap();
        let chain = galois_chain(&field, &[], 2).unwrap();
        assert_eq!(chain.ambient_rank(), 3);
        assert_eq!(chain.level(1), Lattice::standard(3));
        assert_eq!(chain.level(2), Lattice::standard(3));
    }

    #[test]
    fn builtin_roundtrips_and_revalidates() {
        let field = builtin_rationals(&[2, 5, 7], &[3, 11], 2).unwrap();
        let v = field_to_value(&field);
        let text = crate::fixtures::to_canonical_string(&v);
        let back = field_from_value(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, field);
        assert_eq!(crate::fixtures::to_canonical_string(&field_to_value(&back)), text);
    }

    #[test]
    fn validation_rejects_non_surjective_transition() {
        let mut field = builtin_rationals(&[2, 5], &[3], 2).unwrap();
        let key = TowerKey {
            f: vec!["3".into()],
            m: vec![2],
        };
        let entry = field.tower.get_mut(&key).unwrap();
        // order-6 group onto Z/2: force the zero map
        entry.transitions[0].matrix = vec![vec![BigInt::zero()]];
        match field.validate().unwrap_err() {
            TowerError::InconsistentTower(f, m, _) => {
                assert_eq!(f, vec!["3".to_string()]);
                assert_eq!(m, vec![2]);
            }
            other => panic!("expected InconsistentTower, got {other:?}"),
        }
    }

    #[test]
    fn composite_transitions_reach_the_root() {
        // S = {2} alone cannot generate (Z/33)^*; the validator rejects the
        // under-declared truncation
        assert!(matches!(
            builtin_rationals(&[2], &[3, 11], 2),
            Err(TowerError::InconsistentTower(_, _, _))
        ));
        let field = builtin_rationals(&[2, 5], &[3, 11], 2).unwrap();
        // keys store labels sorted by declared order: 3 before 11
        let from = TowerKey {
            f: vec!["3".into(), "11".into()],
            m: vec![2, 2],
        };
        let matrix = field.composite_transition(&from, &TowerKey::root()).unwrap();
        assert_eq!(matrix.len(), 0); // trivial root group

        // a mid-tower composite: down to ({3}, (1)) of order 2
        let mid = TowerKey {
            f: vec!["3".into()],
            m: vec![1],
        };
        let matrix = field.composite_transition(&from, &mid).unwrap();
        assert_eq!(matrix.len(), 1);
        // the composite must reproduce the image compatibility for 2 and 5
        let src = field.entry(&from).unwrap();
        let tgt = field.entry(&mid).unwrap();
        for l in ["2", "5"] {
            let mapped = tgt.group.reduce(&super::apply_matrix(&matrix, &src.images[l]));
            assert_eq!(mapped, tgt.group.reduce(&tgt.images[l]), "image of {l}");
        }
    }
}
