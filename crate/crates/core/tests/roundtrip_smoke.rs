//! Quick round-trip smoke checks on small seeded corpora; the full corpus
//! lives in the acceptance suite.

use profinitek::completions::cofinal_equivalent;
use profinitek::gen::{corpus_seeds, seeded_fixture};
use profinitek::kgroups::k_from_chain;
use profinitek::recon::{reconstruct_appendix, reconstruct_pro_n};
use std::collections::BTreeSet;

#[test]
fn seeded_roundtrip_smoke() {
    let mut failures = Vec::new();
    for (i, seed) in corpus_seeds(12, 1000).into_iter().enumerate() {
        let rank = 1 + (i % 3); // ranks 1..3 in the smoke test
        let p = [2u64, 3, 5][i % 3];
        let primes = BTreeSet::from([p]);
        let depth = 6;
        let (spec, truth) = seeded_fixture(seed, rank, &primes, depth, 3);
        let k = k_from_chain(&truth, rank);
        match reconstruct_pro_n(&k, depth, 2, depth) {
            Ok(rec) => {
                if !cofinal_equivalent(&rec, &truth, 3).is_equivalent() {
                    failures.push(format!("seed {seed}: not cofinal ({spec:?})"));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: {e} ({spec:?})")),
        }
        match reconstruct_appendix(&k, depth) {
            Ok(rec) => {
                if !cofinal_equivalent(&rec, &truth, 3).is_equivalent() {
                    failures.push(format!("seed {seed}: appendix not cofinal"));
                }
            }
            Err(e) => failures.push(format!("seed {seed}: appendix {e}")),
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
