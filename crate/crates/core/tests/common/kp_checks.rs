// Keyphrase-perturbation conformance checks over a planted corpus. Shared
// by the core integration tests and the acceptance target.

use std::collections::{BTreeMap, BTreeSet};

use citss_core::augment::{kp_transform, PerturbOp, TransformEvent, TransformedSample};
use citss_core::corpus::CitationContext;
use citss_core::rng::{self, Stream};
use citss_core::stk::{StkBase, StkMention, StkType};
use citss_core::synonyms::SynonymBase;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Greedy longest-match segmentation into (residue, mention) pieces,
/// written independently of the library's span finder.
fn segments<'a>(text: &'a str, surfaces: &[&str]) -> Vec<(bool, &'a str)> {
    let mut sorted: Vec<&str> = surfaces.to_vec();
    sorted.sort_by_key(|s| std::cmp::Reverse(s.len()));
    let mut out = Vec::new();
    let (mut i, mut residue_start) = (0, 0);
    while i < text.len() {
        let before_ok = text[..i].chars().next_back().is_none_or(|c| !is_word_char(c));
        let hit = before_ok
            .then(|| {
                sorted.iter().find(|s| {
                    text[i..].starts_with(**s)
                        && text[i + s.len()..].chars().next().is_none_or(|c| !is_word_char(c))
                })
            })
            .flatten();
        match hit {
            Some(s) => {
                if residue_start < i {
                    out.push((false, &text[residue_start..i]));
                }
                out.push((true, &text[i..i + s.len()]));
                i += s.len();
                residue_start = i;
            }
            None => i += text[i..].chars().next().map_or(1, char::len_utf8),
        }
    }
    if residue_start < text.len() {
        out.push((false, &text[residue_start..]));
    }
    out
}

fn replacements(sample: &TransformedSample) -> BTreeMap<String, (StkType, PerturbOp, String)> {
    sample
        .log
        .iter()
        .filter_map(|e| match e {
            TransformEvent::Perturbed { surface, stk_type, op, replacement } => {
                Some((surface.clone(), (*stk_type, *op, replacement.clone())))
            }
            _ => None,
        })
        .collect()
}

fn distinct(mentions: &[StkMention]) -> Vec<&StkMention> {
    let mut seen = BTreeSet::new();
    mentions.iter().filter(|m| seen.insert(m.surface.clone())).collect()
}

fn run(
    ctx: &CitationContext,
    base: &StkBase,
    op: PerturbOp,
    beta: f64,
    gamma: f64,
    seed: u64,
) -> TransformedSample {
    let mut r = rng::derive(seed, Stream::Perturb, &ctx.sample_id, 0);
    kp_transform(
        ctx,
        base.mentions(&ctx.sample_id),
        op,
        beta,
        gamma,
        base,
        &SynonymBase::builtin(),
        0,
        &mut r,
    )
    .expect("kp transform")
}

/// (a) gamma = 0 leaves every non-mention character unchanged.
pub fn residue_preserved(ctxs: &[CitationContext], base: &StkBase) -> Result<usize, String> {
    let mut checked = 0;
    for (i, ctx) in ctxs.iter().enumerate() {
        for op in [PerturbOp::Gr, PerturbOp::Lr, PerturbOp::Ab] {
            let out = run(ctx, base, op, 0.7, 0.0, i as u64);
            let reps = replacements(&out);
            let surfaces: Vec<&str> = base.mentions(&ctx.sample_id).iter().map(|m| m.surface.as_str()).collect();
            for (orig, got) in ctx.sentences.iter().zip(&out.sentences) {
                let rebuilt: String = segments(orig, &surfaces)
                    .into_iter()
                    .map(|(is_mention, piece)| match reps.get(piece) {
                        Some((_, _, r)) if is_mention => r.as_str(),
                        _ => piece,
                    })
                    .collect();
                if &rebuilt != got {
                    return Err(format!("{}: expected {rebuilt:?}, got {got:?}", ctx.sample_id));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// (b) beta = 1 with Ab replaces every mention by a type-id token, distinct
/// per distinct keyphrase.
pub fn abstraction_complete(ctxs: &[CitationContext], base: &StkBase) -> Result<usize, String> {
    let mut checked = 0;
    for (i, ctx) in ctxs.iter().enumerate() {
        let out = run(ctx, base, PerturbOp::Ab, 1.0, 0.0, i as u64);
        let reps = replacements(&out);
        let ks = distinct(base.mentions(&ctx.sample_id));
        if reps.len() != ks.len() {
            return Err(format!("{}: {} of {} mentions abstracted", ctx.sample_id, reps.len(), ks.len()));
        }
        let mut ids = BTreeSet::new();
        for k in &ks {
            let (t, op, r) = &reps[&k.surface];
            let (name, n) = r.rsplit_once('-').ok_or(format!("bad id {r}"))?;
            if *op != PerturbOp::Ab || name != t.name() || *t != k.stk_type || n.parse::<usize>().is_err() {
                return Err(format!("{}: {} -> {r}", ctx.sample_id, k.surface));
            }
            if !ids.insert(r.clone()) {
                return Err(format!("{}: id {r} reused", ctx.sample_id));
            }
        }
        let text = out.text();
        for k in &ks {
            if !citss_core::stk::find_occurrences(&text, &k.surface).is_empty() {
                return Err(format!("{}: {} survived", ctx.sample_id, k.surface));
            }
        }
        checked += ks.len();
    }
    Ok(checked)
}

/// (c) Gr and Lr replacements keep the type; Lr draws from the sample's own
/// keyphrases.
pub fn replacements_same_type(ctxs: &[CitationContext], base: &StkBase) -> Result<usize, String> {
    let mut checked = 0;
    for (i, ctx) in ctxs.iter().enumerate() {
        let own: BTreeMap<&str, StkType> = base
            .mentions(&ctx.sample_id)
            .iter()
            .map(|m| (m.surface.as_str(), m.stk_type))
            .collect();
        for op in [PerturbOp::Gr, PerturbOp::Lr] {
            let out = run(ctx, base, op, 1.0, 0.0, 100 + i as u64);
            for (surface, (t, applied, r)) in replacements(&out) {
                if applied == PerturbOp::Ab {
                    continue;
                }
                if base.global().get(&t).is_none_or(|pool| !pool.contains(&r)) || own[surface.as_str()] != t {
                    return Err(format!("{}: {op} {surface} -> {r} crosses types", ctx.sample_id));
                }
                if op == PerturbOp::Lr && own.get(r.as_str()) != Some(&t) {
                    return Err(format!("{}: Lr {surface} -> {r} not from K_i", ctx.sample_id));
                }
                if r == surface {
                    return Err(format!("{}: {surface} replaced by itself", ctx.sample_id));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

/// (d) Empirical per-keyphrase perturbation rate over `trials` seeded runs.
pub fn perturbation_rate(ctxs: &[CitationContext], base: &StkBase, beta: f64, trials: usize) -> f64 {
    let (mut perturbed, mut total) = (0usize, 0usize);
    for t in 0..trials {
        let ctx = &ctxs[t % ctxs.len()];
        let out = run(ctx, base, PerturbOp::Ab, beta, 0.0, 10_000 + t as u64);
        perturbed += replacements(&out).len();
        total += distinct(base.mentions(&ctx.sample_id)).len();
    }
    perturbed as f64 / total as f64
}
