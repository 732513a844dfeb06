//! The decision pipeline: compare two invariant families under a prime
//! bijection, reconstruct the completions level by level, and certify a
//! truncated conjugacy of the arithmetic semigroup actions by exhaustive
//! state checking.

use super::kclasses::{recover_p1_and_h, FamilyError, InvariantFamily};
use super::tower::{NumberFieldData, TowerError, TowerKey};
use crate::completions::{cofinal_equivalent, CofinalVerdict, CompletionChain};
use crate::exactla::{hnf_basis, Lattice, Rat};
use crate::recon::{reconstruct_pro_n, ReconError};
use num::{BigInt, BigUint, Zero};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConjugacyError {
    #[error("prime bijection does not respect the truncations: {0}")]
    BadBijection(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Tower(#[from] TowerError),
    #[error("reconstruction failed at level F={0:?}: {1}")]
    Reconstruction(Vec<String>, ReconError),
    #[error("quotient map is ill-defined at F={0:?}, m={1:?}: {2}")]
    PhiIllDefined(Vec<String>, Vec<u32>, String),
    #[error("equivariance fails at state {state} under generator {generator}")]
    EquivarianceFailure { state: String, generator: String },
}

/// Per-level outcome of the chain comparison.
#[derive(Debug, Clone)]
pub struct LevelMatch {
    pub chain_k: CompletionChain,
    pub chain_l: CompletionChain,
    /// transported levels agree on the nose (always true for self-matches)
    pub transported_equal: bool,
    pub forward_witnesses: Vec<(usize, usize)>,
    pub backward_witnesses: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct ConjugacyData {
    pub chi: BTreeMap<String, String>,
    pub h: BigUint,
    pub p1_k: Lattice,
    pub p1_l: Lattice,
    pub levels: BTreeMap<Vec<String>, LevelMatch>,
}

#[derive(Debug, Clone)]
pub enum MatchVerdict {
    Conjugacy(Box<ConjugacyData>),
    Mismatch { stage: String, detail: String },
}

impl MatchVerdict {
    pub fn is_conjugacy(&self) -> bool {
        matches!(self, MatchVerdict::Conjugacy(_))
    }
}

/// Transports a lattice through a coordinate relabeling: position `i` of
/// the source ambient goes to `perm[i]` in the target ambient.
fn permute_lattice(l: &Lattice, perm: &[usize]) -> Lattice {
    let s = l.ambient_rank();
    assert_eq!(perm.len(), s);
    let gens: Vec<Vec<Rat>> = l
        .basis_vectors()
        .into_iter()
        .map(|v| {
            let mut out = vec![Rat::zero(); s];
            for (i, x) in v.into_iter().enumerate() {
                out[perm[i]] = x;
            }
            out
        })
        .collect();
    hnf_basis(&gens, s).expect("permutation preserves rank")
}

fn permute_chain(c: &CompletionChain, perm: &[usize]) -> CompletionChain {
    let levels: Vec<Lattice> = (1..=c.depth())
        .map(|k| permute_lattice(&c.level(k), perm))
        .collect();
    crate::completions::validate_chain(levels, c.primes().clone())
        .expect("permutation preserves chain validity")
}

/// Positions of the source ambient labels inside the target ambient after
/// applying the bijection.
fn ambient_permutation(
    src_ambient: &[String],
    tgt_ambient: &[String],
    chi: &BTreeMap<String, String>,
) -> Result<Vec<usize>, ConjugacyError> {
    src_ambient
        .iter()
        .map(|l| {
            let image = chi
                .get(l)
                .ok_or_else(|| ConjugacyError::BadBijection(format!("no image for prime {l}")))?;
            tgt_ambient
                .iter()
                .position(|t| t == image)
                .ok_or_else(|| ConjugacyError::BadBijection(format!("{image} missing from target ambient")))
        })
        .collect()
}

fn transport_set(f: &[String], chi: &BTreeMap<String, String>, fam_l: &InvariantFamily) -> Result<Vec<String>, ConjugacyError> {
    let mapped: Vec<String> = f
        .iter()
        .map(|l| {
            chi.get(l)
                .cloned()
                .ok_or_else(|| ConjugacyError::BadBijection(format!("no image for prime {l}")))
        })
        .collect::<Result<_, _>>()?;
    fam_l
        .truncation
        .sort_set(&mapped)
        .map_err(ConjugacyError::Family)
}

/// The full comparison pipeline: recover the principal-ray data on both
/// sides, reconstruct every level's completion from its K-data alone, and
/// check that the transported chains correspond. A Mismatch names the
/// first failing stage and is conclusive at the given truncation; a
/// Conjugacy verdict certifies no obstruction up to the truncation
/// parameters.
pub fn match_families(
    fam_k: &InvariantFamily,
    fam_l: &InvariantFamily,
    chi: &BTreeMap<String, String>,
    coeff_bound: i64,
) -> Result<MatchVerdict, ConjugacyError> {
    // the bijection must identify the truncations
    let k_labels = fam_k.truncation.labels();
    let l_labels = fam_l.truncation.labels();
    if k_labels.len() != l_labels.len() || fam_k.depth != fam_l.depth {
        return Err(ConjugacyError::BadBijection(
            "truncation sizes or depths differ".into(),
        ));
    }
    for l in &k_labels {
        let img = chi
            .get(l)
            .ok_or_else(|| ConjugacyError::BadBijection(format!("no image for prime {l}")))?;
        if !l_labels.contains(img) {
            return Err(ConjugacyError::BadBijection(format!("{img} is not a target prime")));
        }
    }
    // stage (a): principal ray lattice and class number
    let (p1_k, h_k) = recover_p1_and_h(fam_k)?;
    let (p1_l, h_l) = recover_p1_and_h(fam_l)?;
    if h_k != h_l {
        return Ok(MatchVerdict::Mismatch {
            stage: "h".into(),
            detail: format!("narrow class multipliers differ: {h_k} vs {h_l}"),
        });
    }
    let root_perm = ambient_permutation(
        &fam_k.root_level()?.ambient,
        &fam_l.root_level()?.ambient,
        chi,
    )?;
    if permute_lattice(&p1_k, &root_perm) != p1_l {
        return Ok(MatchVerdict::Mismatch {
            stage: "P1".into(),
            detail: "principal ray lattices do not correspond under the bijection".into(),
        });
    }
    // stages (b) and (c): per-level reconstruction and chain comparison
    let mut levels = BTreeMap::new();
    for (f, level_k) in &fam_k.levels {
        let f_l = transport_set(f, chi, fam_l)?;
        let Some(level_l) = fam_l.levels.get(&f_l) else {
            return Err(ConjugacyError::BadBijection(format!(
                "level F={f:?} has no counterpart {f_l:?}"
            )));
        };
        let depth = fam_k.depth as usize;
        let chain_k = reconstruct_pro_n(&level_k.ksub, depth, coeff_bound, depth)
            .map_err(|e| ConjugacyError::Reconstruction(f.clone(), e))?;
        let chain_l = reconstruct_pro_n(&level_l.ksub, depth, coeff_bound, depth)
            .map_err(|e| ConjugacyError::Reconstruction(f_l.clone(), e))?;
        let perm = ambient_permutation(&level_k.ambient, &level_l.ambient, chi)?;
        let transported = permute_chain(&chain_k, &perm);
        let transported_equal = transported.levels() == chain_l.levels();
        let (fw, bw) = if transported_equal {
            let w: Vec<(usize, usize)> = (1..=depth).map(|k| (k, k)).collect();
            (w.clone(), w)
        } else {
            let probe = depth.saturating_sub(1).max(1);
            match cofinal_equivalent(&transported, &chain_l, probe) {
                CofinalVerdict::Equivalent { forward, backward } => (forward, backward),
                CofinalVerdict::NotEquivalent { level, .. } => {
                    return Ok(MatchVerdict::Mismatch {
                        stage: format!("chain F={f:?}"),
                        detail: format!("transported chain diverges at level {level}"),
                    });
                }
            }
        };
        levels.insert(
            f.clone(),
            LevelMatch {
                chain_k,
                chain_l,
                transported_equal,
                forward_witnesses: fw,
                backward_witnesses: bw,
            },
        );
    }
    Ok(MatchVerdict::Conjugacy(Box::new(ConjugacyData {
        chi: chi.clone(),
        h: h_k,
        p1_k,
        p1_l,
        levels,
    })))
}

// ---------------------------------------------------------------------------
// truncated actions and the exhaustive conjugacy certificate

/// Quotient isomorphisms at fixed modulus depth, as generator-image tables
/// per level set.
#[derive(Debug, Clone)]
pub struct PhiData {
    pub m: u32,
    /// per level set E: matrix columns = images of the source generators in
    /// target coordinates
    pub tables: BTreeMap<Vec<String>, Vec<Vec<BigInt>>>,
}

/// Derives the matched-quotient isomorphisms `Φ^E` induced by the prime
/// bijection: lift each generator through the marked images, transport the
/// lift, and read the class downstairs. Fails when the bijection does not
/// carry the level kernel onto the target kernel.
pub fn derive_phi(
    field_k: &NumberFieldData,
    field_l: &NumberFieldData,
    chi: &BTreeMap<String, String>,
    f_cap: &[String],
    m: u32,
) -> Result<PhiData, ConjugacyError> {
    let mut tables = BTreeMap::new();
    for e_set in subsets_sorted(field_k, f_cap)? {
        let key_k = TowerKey::uniform(&e_set, m);
        let entry_k = field_k
            .entry(&key_k)
            .ok_or_else(|| TowerError::DepthUnavailable(e_set.clone(), m))?;
        let e_l = transport_labels(&e_set, chi, field_l)?;
        let key_l = TowerKey::uniform(&e_l, m);
        let entry_l = field_l
            .entry(&key_l)
            .ok_or_else(|| TowerError::DepthUnavailable(e_l.clone(), m))?;
        if entry_k.group.order() != entry_l.group.order() {
            return Err(ConjugacyError::PhiIllDefined(
                e_set.clone(),
                key_k.m.clone(),
                format!(
                    "quotient orders differ: {} vs {}",
                    entry_k.group.order(),
                    entry_l.group.order()
                ),
            ));
        }
        let rank = entry_k.group.rank();
        let ambient_k = field_k.ambient_of(&e_set);
        let mut columns = Vec::with_capacity(rank);
        for gen_idx in 0..rank {
            // lift the generator through the marked images
            let mut target = entry_k.group.zero();
            target[gen_idx] = BigInt::from(1);
            let lift = lift_through_images(entry_k, &ambient_k, &target).ok_or_else(|| {
                ConjugacyError::PhiIllDefined(
                    e_set.clone(),
                    key_k.m.clone(),
                    "generator is not reachable from the marked images".into(),
                )
            })?;
            // transport the lift and evaluate downstairs
            let mut image = entry_l.group.zero();
            for (label, exp) in ambient_k.iter().zip(&lift) {
                if exp.is_zero() {
                    continue;
                }
                let tgt_label = chi
                    .get(label)
                    .ok_or_else(|| ConjugacyError::BadBijection(format!("no image for prime {label}")))?;
                let img = entry_l.images.get(tgt_label).ok_or_else(|| {
                    ConjugacyError::PhiIllDefined(
                        e_set.clone(),
                        key_k.m.clone(),
                        format!("target entry lacks the image of {tgt_label}"),
                    )
                })?;
                image = entry_l.group.add(&image, &entry_l.group.scalar_mul(exp, img));
            }
            columns.push(image);
        }
        // well-definedness: relations must map to relations
        for (i, f) in entry_k.group.factors().iter().enumerate() {
            let scaled = entry_l
                .group
                .scalar_mul(&BigInt::from(f.clone()), &columns[i]);
            if !entry_l.group.is_zero_elem(&scaled) {
                return Err(ConjugacyError::PhiIllDefined(
                    e_set.clone(),
                    key_k.m.clone(),
                    "bijection does not carry the kernel onto the target kernel".into(),
                ));
            }
        }
        // bijectivity: images generate and orders already agree
        if !entry_l.group.is_generated_by(&columns) {
            return Err(ConjugacyError::PhiIllDefined(
                e_set.clone(),
                key_k.m.clone(),
                "induced map is not surjective".into(),
            ));
        }
        tables.insert(e_set, columns);
    }
    Ok(PhiData { m, tables })
}

fn subsets_sorted(field: &NumberFieldData, f_cap: &[String]) -> Result<Vec<Vec<String>>, ConjugacyError> {
    let mut sorted = f_cap.to_vec();
    sorted.sort_by_key(|l| field.position(l));
    if sorted.iter().any(|l| field.position(l).is_none()) {
        return Err(ConjugacyError::BadBijection("cap uses an undeclared prime".into()));
    }
    let n = sorted.len();
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0u32..(1 << n) {
        out.push(
            (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| sorted[i].clone())
                .collect(),
        );
    }
    Ok(out)
}

fn transport_labels(
    labels: &[String],
    chi: &BTreeMap<String, String>,
    field_l: &NumberFieldData,
) -> Result<Vec<String>, ConjugacyError> {
    let mut out: Vec<String> = labels
        .iter()
        .map(|l| {
            chi.get(l)
                .cloned()
                .ok_or_else(|| ConjugacyError::BadBijection(format!("no image for prime {l}")))
        })
        .collect::<Result<_, _>>()?;
    out.sort_by_key(|l| field_l.position(l));
    Ok(out)
}

fn lift_through_images(
    entry: &super::tower::TowerEntry,
    ambient: &[String],
    target: &[BigInt],
) -> Option<Vec<BigInt>> {
    // solve  Σ x_q · img(q) ≡ target  via the Hermite form of
    // [images | diag(factors)]
    use crate::exactla::{column_hnf_with_transform, IntMatrix};
    let r = entry.group.rank();
    if r == 0 {
        return Some(vec![BigInt::zero(); ambient.len()]);
    }
    let n = ambient.len();
    let stacked = IntMatrix::from_fn(r, n + r, |i, j| {
        if j < n {
            entry.images[&ambient[j]][i].clone()
        } else if j - n == i {
            BigInt::from(entry.group.factors()[i].clone())
        } else {
            BigInt::zero()
        }
    });
    let (h, v) = column_hnf_with_transform(&stacked);
    // forward solve H w = target; pivots are 1 for surjective presentations
    let mut w = vec![BigInt::zero(); n + r];
    let mut residual = target.to_vec();
    for col in 0..h.cols() {
        let pivot_row = (0..r).find(|&i| !h.at(i, col).is_zero());
        let Some(row) = pivot_row else { break };
        let pivot = h.at(row, col);
        let (q, rem) = num::Integer::div_rem(&residual[row], pivot);
        if !rem.is_zero() {
            return None;
        }
        w[col] = q;
        for i in 0..r {
            let delta = h.at(i, col) * &w[col];
            residual[i] -= delta;
        }
    }
    if residual.iter().any(|x| !x.is_zero()) {
        return None;
    }
    let z = v.mul_vec(&w);
    Some(z[..n].to_vec())
}

/// A finite truncation of the disjoint-union action space: per level set
/// `E ⊆ cap`, ideal exponent vectors bounded by `e` paired with the level-m
/// quotient elements.
#[derive(Debug, Clone)]
pub struct TruncatedAction {
    pub cap: Vec<String>,
    pub m: u32,
    pub exp_bound: u32,
    pub states: Vec<ActionState>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ActionState {
    pub level: Vec<String>,
    pub exponents: Vec<u32>,
    pub element: Vec<BigInt>,
}

impl ActionState {
    pub fn describe(&self) -> String {
        format!("(E={:?}, v={:?}, g={:?})", self.level, self.exponents, self.element)
    }
}

/// Builds the full finite state set of a field's truncated action.
pub fn truncated_action(
    field: &NumberFieldData,
    cap: &[String],
    m: u32,
    exp_bound: u32,
) -> Result<TruncatedAction, ConjugacyError> {
    let mut states = Vec::new();
    for e_set in subsets_sorted(field, cap)? {
        let key = TowerKey::uniform(&e_set, m);
        let entry = field
            .entry(&key)
            .ok_or_else(|| TowerError::DepthUnavailable(e_set.clone(), m))?;
        let mut exp_vectors: Vec<Vec<u32>> = vec![vec![]];
        for _ in 0..e_set.len() {
            let mut next = Vec::new();
            for prefix in &exp_vectors {
                for v in 0..=exp_bound {
                    let mut p = prefix.clone();
                    p.push(v);
                    next.push(p);
                }
            }
            exp_vectors = next;
        }
        for exps in exp_vectors {
            for element in entry.group.elements() {
                states.push(ActionState {
                    level: e_set.clone(),
                    exponents: exps.clone(),
                    element,
                });
            }
        }
    }
    Ok(TruncatedAction {
        cap: cap.to_vec(),
        m,
        exp_bound,
        states,
    })
}

/// One generator step of the action: a prime inside the level bumps its
/// exponent (partial at the bound), a prime outside translates the quotient
/// element by the inverse of its image.
fn act(
    field: &NumberFieldData,
    action: &TruncatedAction,
    state: &ActionState,
    generator: &str,
) -> Result<Option<ActionState>, ConjugacyError> {
    let key = TowerKey::uniform(&state.level, action.m);
    let entry = field
        .entry(&key)
        .ok_or_else(|| TowerError::DepthUnavailable(state.level.clone(), action.m))?;
    if let Some(idx) = state.level.iter().position(|l| l == generator) {
        if state.exponents[idx] == action.exp_bound {
            return Ok(None);
        }
        let mut exps = state.exponents.clone();
        exps[idx] += 1;
        return Ok(Some(ActionState {
            level: state.level.clone(),
            exponents: exps,
            element: state.element.clone(),
        }));
    }
    let img = entry
        .images
        .get(generator)
        .ok_or_else(|| ConjugacyError::BadBijection(format!("unknown generator {generator}")))?;
    let element = entry.group.add(&state.element, &entry.group.neg(img));
    Ok(Some(ActionState {
        level: state.level.clone(),
        exponents: state.exponents.clone(),
        element,
    }))
}

/// The connecting map from level `E` down to `E' ⊆ E`: keep the surviving
/// exponents and translate the projected element by the inverse images of
/// the dropped primes with their multiplicities.
fn theta(
    field: &NumberFieldData,
    m: u32,
    state: &ActionState,
    target_level: &[String],
) -> Result<ActionState, ConjugacyError> {
    let from_key = TowerKey::uniform(&state.level, m);
    let to_key = TowerKey::uniform(target_level, m);
    let matrix = field.composite_transition(&from_key, &to_key)?;
    let entry_to = field
        .entry(&to_key)
        .ok_or_else(|| TowerError::DepthUnavailable(target_level.to_vec(), m))?;
    // project the element
    let projected: Vec<BigInt> = matrix
        .iter()
        .map(|row| {
            row.iter()
                .zip(&state.element)
                .map(|(a, b)| a * b)
                .fold(BigInt::zero(), |x, y| x + y)
        })
        .collect();
    let mut element = entry_to.group.reduce(&projected);
    let mut exponents = Vec::new();
    for (l, &v) in state.level.iter().zip(&state.exponents) {
        if target_level.contains(l) {
            exponents.push(v);
        } else if v > 0 {
            let img = entry_to
                .images
                .get(l)
                .ok_or_else(|| ConjugacyError::BadBijection(format!("missing image of {l}")))?;
            let shift = entry_to.group.scalar_mul(&BigInt::from(v), img);
            element = entry_to.group.add(&element, &entry_to.group.neg(&shift));
        }
    }
    Ok(ActionState {
        level: target_level.to_vec(),
        exponents,
        element,
    })
}

/// Applies the matched-quotient data to a state: relabel the level and
/// exponents through the bijection and push the element through `Φ^E`.
fn psi_state(
    phi: &PhiData,
    chi: &BTreeMap<String, String>,
    field_l: &NumberFieldData,
    state: &ActionState,
) -> Result<ActionState, ConjugacyError> {
    let table = phi
        .tables
        .get(&state.level)
        .ok_or_else(|| ConjugacyError::BadBijection(format!("no Φ table for E={:?}", state.level)))?;
    let target_level = transport_labels(&state.level, chi, field_l)?;
    let key = TowerKey::uniform(&target_level, phi.m);
    let entry_l = field_l
        .entry(&key)
        .ok_or_else(|| TowerError::DepthUnavailable(target_level.clone(), phi.m))?;
    // exponents are re-sorted along with the labels
    let mut pairs: Vec<(usize, u32)> = state
        .level
        .iter()
        .zip(&state.exponents)
        .map(|(l, &v)| {
            let img = chi.get(l).expect("validated");
            (field_l.position(img).expect("validated"), v)
        })
        .collect();
    pairs.sort_by_key(|&(pos, _)| pos);
    let exponents: Vec<u32> = pairs.into_iter().map(|(_, v)| v).collect();
    let mut element = entry_l.group.zero();
    for (i, coord) in state.element.iter().enumerate() {
        element = entry_l
            .group
            .add(&element, &entry_l.group.scalar_mul(coord, &table[i]));
    }
    Ok(ActionState {
        level: target_level,
        exponents,
        element,
    })
}

/// Outcome of the exhaustive check: state and transition counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjugacyCertificate {
    pub states: usize,
    pub action_checks: usize,
    pub transition_checks: usize,
}

/// Exhaustively certifies that the matched-quotient data conjugates the two
/// truncated actions: the state bijection commutes with every generator and
/// with every connecting map between stored levels.
pub fn verify_truncated_conjugacy(
    field_k: &NumberFieldData,
    field_l: &NumberFieldData,
    chi: &BTreeMap<String, String>,
    phi: &PhiData,
    cap: &[String],
    m: u32,
    exp_bound: u32,
) -> Result<ConjugacyCertificate, ConjugacyError> {
    let action_k = truncated_action(field_k, cap, m, exp_bound)?;
    let generators = field_k.prime_labels();
    let mut action_checks = 0usize;
    let mut transition_checks = 0usize;
    for state in &action_k.states {
        let mapped = psi_state(phi, chi, field_l, state)?;
        for g in &generators {
            let left = act(field_k, &action_k, state, g)?;
            let g_l = chi
                .get(g)
                .ok_or_else(|| ConjugacyError::BadBijection(format!("no image for prime {g}")))?;
            let right = act(
                field_l,
                &TruncatedAction {
                    cap: cap.to_vec(),
                    m,
                    exp_bound,
                    states: Vec::new(),
                },
                &mapped,
                g_l,
            )?;
            let ok = match (&left, &right) {
                (None, None) => true,
                (Some(ls), Some(rs)) => &psi_state(phi, chi, field_l, ls)? == rs,
                _ => false,
            };
            if !ok {
                return Err(ConjugacyError::EquivarianceFailure {
                    state: state.describe(),
                    generator: g.clone(),
                });
            }
            action_checks += 1;
        }
        // connecting maps to every stored sublevel
        for target in subsets_sorted(field_k, &state.level)? {
            if target == state.level {
                continue;
            }
            let down_k = theta(field_k, m, state, &target)?;
            let target_l = transport_labels(&target, chi, field_l)?;
            let down_l = theta(field_l, m, &mapped, &target_l)?;
            if psi_state(phi, chi, field_l, &down_k)? != down_l {
                return Err(ConjugacyError::EquivarianceFailure {
                    state: state.describe(),
                    generator: format!("theta->{target:?}"),
                });
            }
            transition_checks += 1;
        }
    }
    Ok(ConjugacyCertificate {
        states: action_k.states.len(),
        action_checks,
        transition_checks,
    })
}

/// Convenience wrapper: derive the matched quotients and certify.
pub fn build_truncated_conjugacy(
    field_k: &NumberFieldData,
    field_l: &NumberFieldData,
    chi: &BTreeMap<String, String>,
    cap: &[String],
    m: u32,
    exp_bound: u32,
) -> Result<(PhiData, ConjugacyCertificate), ConjugacyError> {
    let phi = derive_phi(field_k, field_l, chi, cap, m)?;
    let cert = verify_truncated_conjugacy(field_k, field_l, chi, &phi, cap, m, exp_bound)?;
    Ok((phi, cert))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bostconnes::kclasses::build_invariant_family;
    use crate::bostconnes::tower::builtin_rationals;

    fn identity_chi(labels: &[&str]) -> BTreeMap<String, String> {
        labels.iter().map(|l| (l.to_string(), l.to_string())).collect()
    }

    #[test]
    fn self_match_is_identity_conjugacy() {
        let field = builtin_rationals(&[2, 5], &[3], 3).unwrap();
        let family = build_invariant_family(&field, &["3".into()], 3).unwrap();
        let chi = identity_chi(&["2", "3", "5"]);
        let verdict = match_families(&family, &family, &chi, 2).unwrap();
        match verdict {
            MatchVerdict::Conjugacy(data) => {
                assert_eq!(data.h, BigUint::from(1u32));
                for (f, lm) in &data.levels {
                    assert!(lm.transported_equal, "level {f:?} should transport exactly");
                }
            }
            MatchVerdict::Mismatch { stage, detail } => {
                panic!("self match must succeed, failed at {stage}: {detail}")
            }
        }
    }

    #[test]
    fn swap_bijection_on_rationals() {
        // χ permuting 2 ↔ 5 over S = {2,5}, F = {3}: both images are ≡ 2
        // mod 3, so the level-1 kernels match under the swap
        let field = builtin_rationals(&[2, 5], &[3], 2).unwrap();
        let family = build_invariant_family(&field, &["3".into()], 2).unwrap();
        let mut chi = BTreeMap::new();
        chi.insert("2".to_string(), "5".to_string());
        chi.insert("5".to_string(), "2".to_string());
        chi.insert("3".to_string(), "3".to_string());
        let verdict = match_families(&family, &family, &chi, 2).unwrap();
        assert!(verdict.is_conjugacy(), "swap must still match: {verdict:?}");
    }

    #[test]
    fn identity_conjugacy_certificate() {
        let field = builtin_rationals(&[2, 5], &[3], 2).unwrap();
        let chi = identity_chi(&["2", "3", "5"]);
        let (phi, cert) =
            build_truncated_conjugacy(&field, &field, &chi, &["3".into()], 2, 2).unwrap();
        // states: E=∅ gives 1, E={3} gives 3 exponents × 6 elements = 18
        assert_eq!(cert.states, 19);
        assert!(cert.action_checks > 0 && cert.transition_checks > 0);
        assert_eq!(phi.tables.len(), 2);
    }

    #[test]
    fn corrupted_phi_fails_equivariance() {
        let field = builtin_rationals(&[2, 5], &[3], 2).unwrap();
        let chi = identity_chi(&["2", "3", "5"]);
        let mut phi = derive_phi(&field, &field, &chi, &["3".into()], 2).unwrap();
        // swap the generator image at the {3}-level: 1 -> 5 (still a
        // generator of Z/6, but the wrong one)
        let table = phi.tables.get_mut(&vec!["3".to_string()]).unwrap();
        table[0] = vec![BigInt::from(5)];
        let err = verify_truncated_conjugacy(&field, &field, &chi, &phi, &["3".into()], 2, 2)
            .unwrap_err();
        assert!(matches!(err, ConjugacyError::EquivarianceFailure { .. }));
    }

    #[test]
    fn root_level_conjugacy_is_trivial_for_q() {
        let field = builtin_rationals(&[2, 5], &[3], 2).unwrap();
        let chi = identity_chi(&["2", "3", "5"]);
        let (_, cert) = build_truncated_conjugacy(&field, &field, &chi, &[], 2, 2).unwrap();
        assert_eq!(cert.states, 1);
    }
}
