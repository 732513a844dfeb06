//! Canonical JSON fixture formats for lattices, chains, K-data and exterior
//! elements, plus hashing helpers.
//!
//! All files are UTF-8 JSON with sorted object keys and arbitrary-precision
//! integers written as plain number tokens, so serialization is
//! deterministic and round-trips are bit-exact.

use crate::completions::{validate_chain, CompletionChain};
use crate::exactla::{Lattice, Rat};
use crate::exterior::ExtElement;
use crate::kgroups::{KSubgroup, Provenance};
use num::{BigInt, BigUint, Zero};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("invalid fixture: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> SchemaError {
    SchemaError::Invalid(msg.into())
}

pub fn big_int_value(x: &BigInt) -> Value {
    Value::Number(Number::from_str(&x.to_string()).expect("integer token"))
}

pub fn big_uint_value(x: &BigUint) -> Value {
    Value::Number(Number::from_str(&x.to_string()).expect("integer token"))
}

pub fn parse_big_int(v: &Value) -> Result<BigInt, SchemaError> {
    match v {
        Value::Number(n) => {
            BigInt::from_str(&n.to_string()).map_err(|_| invalid("expected an integer"))
        }
        _ => Err(invalid("expected an integer")),
    }
}

pub fn parse_big_uint(v: &Value) -> Result<BigUint, SchemaError> {
    let n = parse_big_int(v)?;
    n.try_into().map_err(|_| invalid("expected a nonnegative integer"))
}

pub fn parse_usize(v: &Value) -> Result<usize, SchemaError> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| invalid("expected a small nonnegative integer"))
}

pub fn parse_u64(v: &Value) -> Result<u64, SchemaError> {
    v.as_u64().ok_or_else(|| invalid("expected a nonnegative integer"))
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value, SchemaError> {
    obj.get(key).ok_or_else(|| invalid(format!("missing field `{key}`")))
}

fn as_object(v: &Value) -> Result<&Map<String, Value>, SchemaError> {
    v.as_object().ok_or_else(|| invalid("expected an object"))
}

fn as_array(v: &Value) -> Result<&Vec<Value>, SchemaError> {
    v.as_array().ok_or_else(|| invalid("expected an array"))
}

// ---------------------------------------------------------------------------
// lattices

/// `{ambient_rank, denominator, columns: [[int]]}` with the canonical
/// numerator columns.
pub fn lattice_to_value(l: &Lattice) -> Value {
    let mut obj = Map::new();
    obj.insert("ambient_rank".into(), Value::from(l.ambient_rank() as u64));
    obj.insert("denominator".into(), big_uint_value(l.denominator()));
    let cols: Vec<Value> = (0..l.rank())
        .map(|j| {
            Value::Array(
                l.numerator()
                    .column(j)
                    .iter()
                    .map(big_int_value)
                    .collect(),
            )
        })
        .collect();
    obj.insert("columns".into(), Value::Array(cols));
    Value::Object(obj)
}

pub fn lattice_from_value(v: &Value) -> Result<Lattice, SchemaError> {
    let obj = as_object(v)?;
    let ambient = parse_usize(get(obj, "ambient_rank")?)?;
    let denom = parse_big_uint(get(obj, "denominator")?)?;
    if denom.is_zero() {
        return Err(invalid("denominator must be positive"));
    }
    let cols_v = as_array(get(obj, "columns")?)?;
    let mut gens: Vec<Vec<Rat>> = Vec::with_capacity(cols_v.len());
    let d = BigInt::from(denom);
    for col in cols_v {
        let entries = as_array(col)?;
        if entries.len() != ambient {
            return Err(invalid("column length does not match ambient rank"));
        }
        let mut g = Vec::with_capacity(ambient);
        for e in entries {
            g.push(Rat::new(parse_big_int(e)?, d.clone()));
        }
        gens.push(g);
    }
    crate::exactla::hnf_basis(&gens, ambient).map_err(|e| invalid(e.to_string()))
}

// ---------------------------------------------------------------------------
// chains

/// `{ambient_rank, primes: [int], levels: [lattice]}`
pub fn chain_to_value(c: &CompletionChain) -> Value {
    let mut obj = Map::new();
    obj.insert("ambient_rank".into(), Value::from(c.ambient_rank() as u64));
    obj.insert(
        "primes".into(),
        Value::Array(c.primes().iter().map(|&p| Value::from(p)).collect()),
    );
    obj.insert(
        "levels".into(),
        Value::Array((1..=c.depth()).map(|k| lattice_to_value(&c.level(k))).collect()),
    );
    Value::Object(obj)
}

pub fn chain_from_value(v: &Value) -> Result<CompletionChain, SchemaError> {
    let obj = as_object(v)?;
    let _ambient = parse_usize(get(obj, "ambient_rank")?)?;
    let primes: BTreeSet<u64> = as_array(get(obj, "primes")?)?
        .iter()
        .map(parse_u64)
        .collect::<Result<_, _>>()?;
    let levels: Vec<Lattice> = as_array(get(obj, "levels")?)?
        .iter()
        .map(lattice_from_value)
        .collect::<Result<_, _>>()?;
    validate_chain(levels, primes).map_err(|e| invalid(e.to_string()))
}

// ---------------------------------------------------------------------------
// exterior elements

/// `{ambient_rank, terms: [{indices: [int], num: int, den: int}]}`
pub fn ext_element_to_value(x: &ExtElement) -> Value {
    let mut obj = Map::new();
    obj.insert("ambient_rank".into(), Value::from(x.ambient_rank() as u64));
    let terms: Vec<Value> = x
        .terms()
        .iter()
        .map(|(k, c)| {
            let mut t = Map::new();
            t.insert(
                "indices".into(),
                Value::Array(k.iter().map(|&i| Value::from(i)).collect()),
            );
            t.insert("num".into(), big_int_value(c.numer()));
            t.insert("den".into(), big_int_value(c.denom()));
            Value::Object(t)
        })
        .collect();
    obj.insert("terms".into(), Value::Array(terms));
    Value::Object(obj)
}

pub fn ext_element_from_value(v: &Value) -> Result<ExtElement, SchemaError> {
    let obj = as_object(v)?;
    let ambient = parse_usize(get(obj, "ambient_rank")?)?;
    let mut entries = Vec::new();
    for t in as_array(get(obj, "terms")?)? {
        let t = as_object(t)?;
        let indices: Vec<u32> = as_array(get(t, "indices")?)?
            .iter()
            .map(|i| parse_u64(i).map(|x| x as u32))
            .collect::<Result<_, _>>()?;
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("term indices must be strictly increasing"));
        }
        if indices.iter().any(|&i| i as usize >= ambient) {
            return Err(invalid("term index out of range"));
        }
        let num = parse_big_int(get(t, "num")?)?;
        let den = parse_big_int(get(t, "den")?)?;
        if den.is_zero() {
            return Err(invalid("zero denominator"));
        }
        entries.push((indices, Rat::new(num, den)));
    }
    Ok(ExtElement::from_terms(ambient, entries))
}

// ---------------------------------------------------------------------------
// K-data dumps

/// `{ambient_rank, primes, provenance, certificates, degrees: [{degree,
/// levels: [lattice]}]}`. Loading without a chain always demotes the
/// provenance to `loaded` unless the dump says `from-chain` and carries its
/// certificates; the `strip_provenance` flag forces the invariant-only view.
pub fn ksubgroup_to_value(k: &KSubgroup) -> Value {
    let mut obj = Map::new();
    obj.insert("ambient_rank".into(), Value::from(k.ambient_rank() as u64));
    obj.insert(
        "primes".into(),
        Value::Array(k.primes().iter().map(|&p| Value::from(p)).collect()),
    );
    obj.insert(
        "provenance".into(),
        Value::from(match k.provenance() {
            Provenance::FromChain => "from-chain",
            Provenance::Loaded => "loaded",
        }),
    );
    let mut certs = Map::new();
    for (&p, &lvl) in k.certificates() {
        certs.insert(p.to_string(), Value::from(lvl as u64));
    }
    obj.insert("certificates".into(), Value::Object(certs));
    let degrees: Vec<Value> = k
        .degree_levels()
        .iter()
        .enumerate()
        .map(|(n, levels)| {
            let mut d = Map::new();
            d.insert("degree".into(), Value::from(n as u64));
            d.insert(
                "levels".into(),
                Value::Array(levels.iter().map(lattice_to_value).collect()),
            );
            Value::Object(d)
        })
        .collect();
    obj.insert("degrees".into(), Value::Array(degrees));
    Value::Object(obj)
}

pub fn ksubgroup_from_value(v: &Value, strip_provenance: bool) -> Result<KSubgroup, SchemaError> {
    let obj = as_object(v)?;
    let ambient = parse_usize(get(obj, "ambient_rank")?)?;
    let primes: BTreeSet<u64> = as_array(get(obj, "primes")?)?
        .iter()
        .map(parse_u64)
        .collect::<Result<_, _>>()?;
    let provenance = match get(obj, "provenance")?.as_str() {
        Some("from-chain") if !strip_provenance => Provenance::FromChain,
        Some("from-chain") | Some("loaded") => Provenance::Loaded,
        _ => return Err(invalid("unknown provenance tag")),
    };
    let mut certificates = BTreeMap::new();
    for (p, lvl) in as_object(get(obj, "certificates")?)? {
        let p: u64 = p.parse().map_err(|_| invalid("bad certificate prime"))?;
        certificates.insert(p, parse_usize(lvl)?);
    }
    let mut degrees_sparse: BTreeMap<usize, Vec<Lattice>> = BTreeMap::new();
    for d in as_array(get(obj, "degrees")?)? {
        let d = as_object(d)?;
        let n = parse_usize(get(d, "degree")?)?;
        let levels: Vec<Lattice> = as_array(get(d, "levels")?)?
            .iter()
            .map(lattice_from_value)
            .collect::<Result<_, _>>()?;
        degrees_sparse.insert(n, levels);
    }
    let max_degree = degrees_sparse.keys().max().copied().unwrap_or(0);
    let mut degrees = Vec::with_capacity(max_degree + 1);
    for n in 0..=max_degree {
        match degrees_sparse.remove(&n) {
            Some(levels) => degrees.push(levels),
            None => return Err(invalid(format!("missing degree {n} in dump"))),
        }
    }
    KSubgroup::from_parts(ambient, primes, provenance, degrees, certificates)
        .map_err(invalid)
}

// ---------------------------------------------------------------------------
// canonical output and hashing

/// Canonical serialization: sorted keys, no insignificant whitespace
/// variation, trailing newline.
pub fn to_canonical_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(&sort_value(v)).expect("serializable");
    s.push('\n');
    s
}

fn sort_value(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut out = Map::new();
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            for k in keys {
                out.insert(k.clone(), sort_value(&m[k]));
            }
            Value::Object(out)
        }
        Value::Array(a) => Value::Array(a.iter().map(sort_value).collect()),
        other => other.clone(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn write_fixture(path: &std::path::Path, v: &Value) -> std::io::Result<String> {
    let text = to_canonical_string(v);
    std::fs::write(path, &text)?;
    Ok(sha256_hex(text.as_bytes()))
}

pub fn read_fixture(path: &std::path::Path) -> Result<Value, SchemaError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("bad JSON: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exactla::hnf_basis;
    use crate::kgroups::k_from_chain;

    fn sample_chain() -> CompletionChain {
        let levels: Vec<Lattice> = (1..=3)
            .map(|k| {
                let gens: Vec<Vec<Rat>> = vec![
                    vec![
                        Rat::from_integer(BigInt::from(1i64 << k)),
                        Rat::from_integer(BigInt::from(0)),
                    ],
                    vec![
                        Rat::from_integer(BigInt::from(1)),
                        Rat::from_integer(BigInt::from(3)),
                    ],
                ];
                hnf_basis(&gens, 2).unwrap()
            })
            .collect();
        validate_chain(levels, BTreeSet::from([2, 3])).unwrap()
    }

    #[test]
    fn lattice_roundtrip_bit_exact() {
        let c = sample_chain();
        let v = lattice_to_value(&c.level(2));
        let text = to_canonical_string(&v);
        let back = lattice_from_value(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, c.level(2));
        assert_eq!(to_canonical_string(&lattice_to_value(&back)), text);
    }

    #[test]
    fn chain_roundtrip() {
        let c = sample_chain();
        let v = chain_to_value(&c);
        let back = chain_from_value(&v).unwrap();
        assert_eq!(back.levels(), c.levels());
        assert_eq!(back.primes(), c.primes());
    }

    #[test]
    fn ksubgroup_roundtrip_and_strip() {
        let c = sample_chain();
        let k = k_from_chain(&c, 2);
        let v = ksubgroup_to_value(&k);
        let back = ksubgroup_from_value(&v, false).unwrap();
        assert_eq!(back.degree_levels(), k.degree_levels());
        assert_eq!(back.provenance(), Provenance::FromChain);
        let stripped = ksubgroup_from_value(&v, true).unwrap();
        assert_eq!(stripped.provenance(), Provenance::Loaded);
        assert!(!stripped.is_certified());
    }

    #[test]
    fn ext_element_roundtrip() {
        let x = ExtElement::from_terms(
            3,
            vec![
                (vec![0, 2], Rat::new(BigInt::from(3), BigInt::from(7))),
                (vec![1], Rat::from_integer(BigInt::from(-2))),
            ],
        );
        let v = ext_element_to_value(&x);
        let back = ext_element_from_value(&v).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn rejects_malformed_terms() {
        let bad = serde_json::json!({
            "ambient_rank": 2,
            "terms": [{"indices": [1, 0], "num": 1, "den": 1}]
        });
        assert!(ext_element_from_value(&bad).is_err());
    }
}
