mod common {
    pub mod kp_checks;
}

use citss_core::synthetic::kp_corpus;
use common::kp_checks::*;

#[test]
fn residue_unchanged_without_synonyms() {
    let (ctxs, base) = kp_corpus(50, 11).unwrap();
    assert!(residue_preserved(&ctxs, &base).unwrap() > 50);
}

#[test]
fn full_abstraction() {
    let (ctxs, base) = kp_corpus(50, 11).unwrap();
    assert!(abstraction_complete(&ctxs, &base).unwrap() >= 50);
}

#[test]
fn same_type_replacements() {
    let (ctxs, base) = kp_corpus(50, 11).unwrap();
    assert!(replacements_same_type(&ctxs, &base).unwrap() > 0);
}

#[test]
fn rate_tracks_beta() {
    let (ctxs, base) = kp_corpus(50, 11).unwrap();
    for beta in [0.3, 0.6] {
        let rate = perturbation_rate(&ctxs, &base, beta, 2000);
        assert!((rate - beta).abs() < 0.03, "beta {beta}: {rate}");
    }
}
