//! The exterior-algebra representation of the K-classes of the tower's
//! composition factors: boundary maps by the signed deletion rule, the
//! l-fold boundary composites, the normalized trace, the Ψ̃ map and the
//! recovery of the principal ray lattice and class number from a family.

use super::tower::{galois_chain, NumberFieldData, PrimeInfo, TowerError};
use crate::exactla::{lattice_index, Lattice, Rat};
use crate::exterior::ExtElement;
use crate::fixtures::{
    big_uint_value, ext_element_from_value, ext_element_to_value, ksubgroup_from_value,
    ksubgroup_to_value, parse_big_uint, parse_u64, SchemaError,
};
use crate::kgroups::{k_from_chain, KSubgroup};
use num::{BigInt, BigUint, One, Signed, Zero};
use serde_json::{Map, Value};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FamilyError {
    #[error("prime {0} divides the level support")]
    PrimeInF(String),
    #[error("unknown prime label {0}")]
    UnknownPrime(String),
    #[error("element does not live in the expected representation: {0}")]
    BadElement(String),
    #[error("inconsistent family: {0}")]
    InconsistentFamily(String),
    #[error("family schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Tower(#[from] TowerError),
}

/// The fixed ordered truncation support shared by a family's levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    pub primes: Vec<PrimeInfo>,
}

impl Truncation {
    pub fn labels(&self) -> Vec<String> {
        self.primes.iter().map(|p| p.label.clone()).collect()
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.primes.iter().position(|p| p.label == label)
    }

    /// Ambient label list of the level `F`: declared labels not in `F`.
    pub fn ambient_of(&self, f: &[String]) -> Vec<String> {
        self.primes
            .iter()
            .map(|p| p.label.clone())
            .filter(|l| !f.contains(l))
            .collect()
    }

    /// Sorts a label set into the declared total order.
    pub fn sort_set(&self, f: &[String]) -> Result<Vec<String>, FamilyError> {
        let mut idx = Vec::with_capacity(f.len());
        for l in f {
            idx.push(
                self.position(l)
                    .ok_or_else(|| FamilyError::UnknownPrime(l.clone()))?,
            );
        }
        idx.sort_unstable();
        idx.dedup();
        Ok(idx.into_iter().map(|i| self.primes[i].label.clone()).collect())
    }
}

/// Boundary map at `p` out of level `F`: on the basis of the
/// representation it deletes `p` from a wedge with sign `(-1)^{N+1}`, where
/// `N` counts the members above `p` in the fixed order, and kills wedges
/// not containing `p`. Extended Q-linearly (the unique torsion-free
/// extension). The result lives over the ambient of `F ∪ {p}`.
pub fn boundary(
    trunc: &Truncation,
    x: &ExtElement,
    f: &[String],
    p: &str,
) -> Result<ExtElement, FamilyError> {
    if f.contains(&p.to_string()) {
        return Err(FamilyError::PrimeInF(p.to_string()));
    }
    let ambient = trunc.ambient_of(f);
    if x.ambient_rank() != ambient.len() {
        return Err(FamilyError::BadElement(format!(
            "element has ambient {} but level F={f:?} has ambient {}",
            x.ambient_rank(),
            ambient.len()
        )));
    }
    let pos = ambient
        .iter()
        .position(|l| l == p)
        .ok_or_else(|| FamilyError::UnknownPrime(p.to_string()))? as u32;
    let mut terms = Vec::new();
    for (indices, c) in x.terms() {
        let Some(at) = indices.iter().position(|&i| i == pos) else {
            continue; // deletion rule sends p-free wedges to zero
        };
        let above = indices.len() - at - 1; // members above p in the order
        let mut sign = if (above + 1) % 2 == 0 { Rat::one() } else { -Rat::one() };
        sign *= c;
        let new_indices: Vec<u32> = indices
            .iter()
            .filter(|&&i| i != pos)
            .map(|&i| if i > pos { i - 1 } else { i })
            .collect();
        terms.push((new_indices, sign));
    }
    Ok(ExtElement::from_terms(ambient.len() - 1, terms))
}

/// The l-fold boundary composite from the trivial level into level `F`,
/// taking boundaries at the largest prime first.
pub fn compose_d(
    trunc: &Truncation,
    f: &[String],
    x: &ExtElement,
) -> Result<ExtElement, FamilyError> {
    let f_sorted = trunc.sort_set(f)?;
    let mut current = x.clone();
    let mut level: Vec<String> = Vec::new();
    for p in f_sorted.iter().rev() {
        current = boundary(trunc, &current, &level, p)?;
        level.push(p.clone());
        // keep the level sorted for the ambient computation
        level = trunc.sort_set(&level)?;
    }
    Ok(current)
}

/// Trace normalized by the narrow class number: `h¹ ×` the degree-0
/// coefficient.
pub fn trace_tau(h1: &BigUint, x: &ExtElement) -> Rat {
    let unit_coeff = x.coefficient(&[]);
    unit_coeff * Rat::from_integer(BigInt::from(h1.clone()))
}

/// `Ψ̃(x) = Σ_F (-1)^{|F|} (τ ∘ D^F)(x) · β_F` over all subsets of the
/// truncated support; composed with the standard inclusion it is
/// multiplication by `h¹`.
pub fn psi_tilde(trunc: &Truncation, h1: &BigUint, x: &ExtElement) -> Result<ExtElement, FamilyError> {
    let labels = trunc.labels();
    let s = labels.len();
    if x.ambient_rank() != s {
        return Err(FamilyError::BadElement(
            "Ψ̃ expects an element at the trivial level".into(),
        ));
    }
    let mut terms: Vec<(Vec<u32>, Rat)> = Vec::new();
    for mask in 0u32..(1 << s) {
        let f: Vec<String> = (0..s)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| labels[i].clone())
            .collect();
        let indices: Vec<u32> = (0..s as u32).filter(|i| mask & (1 << i) != 0).collect();
        let d = compose_d(trunc, &f, x)?;
        let coeff = trace_tau(h1, &d);
        if coeff.is_zero() {
            continue;
        }
        let signed = if f.len() % 2 == 0 { coeff } else { -coeff };
        terms.push((indices, signed));
    }
    Ok(ExtElement::from_terms(s, terms))
}

// ---------------------------------------------------------------------------
// invariant families

/// One level of an invariant family: the K-data of the composition factor
/// in its exterior representation, the unit class, and boundary tables on
/// the basis wedges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyLevel {
    pub ambient: Vec<String>,
    pub ksub: KSubgroup,
    pub unit_class: ExtElement,
    /// per outgoing prime `p` (with `F ∪ {p}` also stored): the images of
    /// all basis wedges under the boundary
    pub boundaries: BTreeMap<String, Vec<(Vec<u32>, ExtElement)>>,
}

/// The exchanged invariant: per level set `F` in the downward-closed pool,
/// the representation data of the composition factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantFamily {
    pub label: String,
    pub truncation: Truncation,
    pub h1: BigUint,
    pub depth: u32,
    pub levels: BTreeMap<Vec<String>, FamilyLevel>,
}

impl InvariantFamily {
    pub fn pool(&self) -> Vec<Vec<String>> {
        self.levels.keys().cloned().collect()
    }

    pub fn root_level(&self) -> Result<&FamilyLevel, FamilyError> {
        self.levels
            .get(&Vec::new())
            .ok_or_else(|| FamilyError::InconsistentFamily("missing the trivial level".into()))
    }
}

/// Builds the invariant family of a field over a downward-closed pool of
/// modulus sets: per level the completion chain of the tower, its K-data up
/// to full degree, the unit class and the boundary tables.
pub fn build_invariant_family(
    field: &NumberFieldData,
    f_pool: &[String],
    depth: u32,
) -> Result<InvariantFamily, FamilyError> {
    let trunc = Truncation {
        primes: field.primes.clone(),
    };
    let pool_sorted = trunc.sort_set(f_pool)?;
    let mut levels = BTreeMap::new();
    for mask in 0u32..(1 << pool_sorted.len()) {
        let f: Vec<String> = (0..pool_sorted.len())
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| pool_sorted[i].clone())
            .collect();
        let ambient = trunc.ambient_of(&f);
        let chain = galois_chain(field, &f, depth)?;
        let ksub = k_from_chain(&chain, ambient.len());
        let unit_class = ExtElement::unit(ambient.len());
        let mut boundaries = BTreeMap::new();
        for p in &ambient {
            let mut fp = f.clone();
            fp.push(p.clone());
            let fp = trunc.sort_set(&fp)?;
            if !fp.iter().all(|l| pool_sorted.contains(l)) {
                continue;
            }
            let mut table = Vec::new();
            for mask2 in 0u32..(1 << ambient.len()) {
                let indices: Vec<u32> = (0..ambient.len() as u32)
                    .filter(|i| mask2 & (1 << i) != 0)
                    .collect();
                let wedge = ExtElement::basis_wedge(ambient.len(), &indices);
                let image = boundary(&trunc, &wedge, &f, p)?;
                table.push((indices, image));
            }
            boundaries.insert(p.clone(), table);
        }
        levels.insert(f, FamilyLevel {
            ambient,
            ksub,
            unit_class,
            boundaries,
        });
    }
    Ok(InvariantFamily {
        label: field.label.clone(),
        truncation: trunc,
        h1: field.h1.clone(),
        depth,
        levels,
    })
}

/// Validates the Lemma-style boundary identities of every stored table
/// against the deletion rule.
pub fn validate_boundary_tables(family: &InvariantFamily) -> Result<(), FamilyError> {
    for (f, level) in &family.levels {
        for (p, table) in &level.boundaries {
            for (indices, image) in table {
                let wedge = ExtElement::basis_wedge(level.ambient.len(), indices);
                let expect = boundary(&family.truncation, &wedge, f, p)?;
                if image != &expect {
                    return Err(FamilyError::InconsistentFamily(format!(
                        "boundary table at F={f:?}, p={p} disagrees with the deletion rule"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Recovers the principal ray lattice and the class number from the
/// trivial-level K-data: the per-direction normalizations of `τ ∘ D^{{p}}`
/// must agree, match the declared `τ([1])`, and match the index of the
/// recovered lattice.
pub fn recover_p1_and_h(family: &InvariantFamily) -> Result<(Lattice, BigUint), FamilyError> {
    let root = family.root_level()?;
    let s = root.ambient.len();
    let top = root.ksub.depth();
    let l1 = root
        .ksub
        .level_lattice(1, top)
        .map_err(|e| FamilyError::InconsistentFamily(e.to_string()))?;
    if !l1.is_full_rank() {
        return Err(FamilyError::InconsistentFamily(
            "degree-1 representation is not of full rank".into(),
        ));
    }
    // normalization of τ∘D^{{p}}: the image of the stored degree-1 classes
    // under the p-coordinate must be exactly (1/c_p) Z
    let basis = l1.basis_vectors();
    let mut h_candidates = Vec::with_capacity(s);
    for j in 0..s {
        let coords: Vec<Rat> = basis.iter().map(|v| v[j].clone()).collect();
        let content = rational_content(&coords);
        if content.is_zero() {
            return Err(FamilyError::InconsistentFamily(format!(
                "no stored class has a component along direction {j}"
            )));
        }
        let inv = content.recip();
        if !inv.is_integer() || !inv.is_positive() {
            return Err(FamilyError::InconsistentFamily(format!(
                "normalization along direction {j} is not a positive integer"
            )));
        }
        h_candidates.push(inv.to_integer().magnitude().clone());
    }
    let h = h_candidates[0].clone();
    if h_candidates.iter().any(|c| c != &h) {
        return Err(FamilyError::InconsistentFamily(
            "per-direction normalizations disagree".into(),
        ));
    }
    // τ([1]) consistency against the declared class number
    let tau_unit = trace_tau(&family.h1, &root.unit_class);
    if tau_unit != Rat::from_integer(BigInt::from(h.clone())) {
        return Err(FamilyError::InconsistentFamily(format!(
            "τ([1]) = {tau_unit} disagrees with the recovered multiplier {h}"
        )));
    }
    let p1 = l1.scale(&Rat::from_integer(BigInt::from(h.clone())));
    let index = lattice_index(&p1, &Lattice::standard(s))
        .map_err(|e| FamilyError::InconsistentFamily(e.to_string()))?;
    if index != h {
        return Err(FamilyError::InconsistentFamily(format!(
            "recovered lattice has index {index}, expected {h}"
        )));
    }
    Ok((p1, h))
}

/// Content of a finite set of rationals: the positive generator of the
/// group of their integer combinations, zero if all are zero.
fn rational_content(xs: &[Rat]) -> Rat {
    use num::Integer as _;
    let mut den = BigInt::one();
    for x in xs {
        den = den.lcm(x.denom());
    }
    let mut num = BigInt::zero();
    for x in xs {
        let scaled = x.numer() * (&den / x.denom());
        num = num.gcd(&scaled);
    }
    if num.is_zero() {
        return Rat::zero();
    }
    Rat::new(num, den)
}

// ---------------------------------------------------------------------------
// family dumps

pub fn family_to_value(family: &InvariantFamily) -> Value {
    let mut obj = Map::new();
    obj.insert("label".into(), Value::from(family.label.clone()));
    obj.insert(
        "primes".into(),
        Value::Array(
            family
                .truncation
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
    obj.insert("h1".into(), big_uint_value(&family.h1));
    obj.insert("depth".into(), Value::from(family.depth));
    let levels: Vec<Value> = family
        .levels
        .iter()
        .map(|(f, level)| {
            let mut o = Map::new();
            o.insert(
                "F".into(),
                Value::Array(f.iter().map(|l| Value::from(l.clone())).collect()),
            );
            o.insert(
                "ambient".into(),
                Value::Array(level.ambient.iter().map(|l| Value::from(l.clone())).collect()),
            );
            o.insert("kdata".into(), ksubgroup_to_value(&level.ksub));
            o.insert("unit_class".into(), ext_element_to_value(&level.unit_class));
            let mut bnd = Map::new();
            for (p, table) in &level.boundaries {
                let rows: Vec<Value> = table
                    .iter()
                    .map(|(indices, image)| {
                        let mut r = Map::new();
                        r.insert(
                            "indices".into(),
                            Value::Array(indices.iter().map(|&i| Value::from(i)).collect()),
                        );
                        r.insert("image".into(), ext_element_to_value(image));
                        Value::Object(r)
                    })
                    .collect();
                bnd.insert(p.clone(), Value::Array(rows));
            }
            o.insert("boundaries".into(), Value::Object(bnd));
            Value::Object(o)
        })
        .collect();
    obj.insert("levels".into(), Value::Array(levels));
    Value::Object(obj)
}

pub fn family_from_value(v: &Value) -> Result<InvariantFamily, FamilyError> {
    let sch = |e: SchemaError| FamilyError::Schema(e.to_string());
    let obj = v
        .as_object()
        .ok_or_else(|| FamilyError::Schema("expected an object".into()))?;
    let need = |k: &str| -> Result<&Value, FamilyError> {
        obj.get(k)
            .ok_or_else(|| FamilyError::Schema(format!("missing field `{k}`")))
    };
    let label = need("label")?
        .as_str()
        .ok_or_else(|| FamilyError::Schema("label must be a string".into()))?
        .to_string();
    let mut primes = Vec::new();
    for p in need("primes")?
        .as_array()
        .ok_or_else(|| FamilyError::Schema("primes must be an array".into()))?
    {
        let po = p
            .as_object()
            .ok_or_else(|| FamilyError::Schema("prime must be an object".into()))?;
        primes.push(PrimeInfo {
            label: po
                .get("label")
                .and_then(|l| l.as_str())
                .ok_or_else(|| FamilyError::Schema("prime label must be a string".into()))?
                .to_string(),
            norm: parse_big_uint(
                po.get("norm")
                    .ok_or_else(|| FamilyError::Schema("prime norm missing".into()))?,
            )
            .map_err(sch)?,
        });
    }
    let h1 = parse_big_uint(need("h1")?).map_err(sch)?;
    let depth = parse_u64(need("depth")?).map_err(sch)? as u32;
    let trunc = Truncation { primes };
    let mut levels = BTreeMap::new();
    for lv in need("levels")?
        .as_array()
        .ok_or_else(|| FamilyError::Schema("levels must be an array".into()))?
    {
        let lo = lv
            .as_object()
            .ok_or_else(|| FamilyError::Schema("level must be an object".into()))?;
        let lneed = |k: &str| -> Result<&Value, FamilyError> {
            lo.get(k)
                .ok_or_else(|| FamilyError::Schema(format!("level missing `{k}`")))
        };
        let f: Vec<String> = lneed("F")?
            .as_array()
            .ok_or_else(|| FamilyError::Schema("F must be an array".into()))?
            .iter()
            .map(|l| {
                l.as_str()
                    .map(String::from)
                    .ok_or_else(|| FamilyError::Schema("labels must be strings".into()))
            })
            .collect::<Result<_, _>>()?;
        let ambient: Vec<String> = lneed("ambient")?
            .as_array()
            .ok_or_else(|| FamilyError::Schema("ambient must be an array".into()))?
            .iter()
            .map(|l| {
                l.as_str()
                    .map(String::from)
                    .ok_or_else(|| FamilyError::Schema("labels must be strings".into()))
            })
            .collect::<Result<_, _>>()?;
        if ambient != trunc.ambient_of(&f) {
            return Err(FamilyError::Schema(format!("level F={f:?} has a wrong ambient list")));
        }
        // family dumps simulate the invariant-only scenario: provenance kept
        // as written, so chain-built dumps stay certified while hand-made
        // dumps load as plain data
        let ksub = ksubgroup_from_value(lneed("kdata")?, false).map_err(sch)?;
        if ksub.ambient_rank() != ambient.len() {
            return Err(FamilyError::Schema(format!("level F={f:?} K-data has wrong rank")));
        }
        let unit_class = ext_element_from_value(lneed("unit_class")?).map_err(sch)?;
        let mut boundaries = BTreeMap::new();
        for (p, rows) in lneed("boundaries")?
            .as_object()
            .ok_or_else(|| FamilyError::Schema("boundaries must be an object".into()))?
        {
            let mut table = Vec::new();
            for r in rows
                .as_array()
                .ok_or_else(|| FamilyError::Schema("boundary table must be an array".into()))?
            {
                let ro = r
                    .as_object()
                    .ok_or_else(|| FamilyError::Schema("table row must be an object".into()))?;
                let indices: Vec<u32> = ro
                    .get("indices")
                    .and_then(|x| x.as_array())
                    .ok_or_else(|| FamilyError::Schema("row indices must be an array".into()))?
                    .iter()
                    .map(|x| parse_u64(x).map(|v| v as u32).map_err(sch))
                    .collect::<Result<_, _>>()?;
                let image = ext_element_from_value(
                    ro.get("image")
                        .ok_or_else(|| FamilyError::Schema("row image missing".into()))?,
                )
                .map_err(sch)?;
                table.push((indices, image));
            }
            boundaries.insert(p.clone(), table);
        }
        levels.insert(
            f,
            FamilyLevel {
                ambient,
                ksub,
                unit_class,
                boundaries,
            },
        );
    }
    let family = InvariantFamily {
        label,
        truncation: trunc,
        h1,
        depth,
        levels,
    };
    validate_boundary_tables(&family)?;
    Ok(family)
}
