//! Positive-pair generators: sentence-level cropping (SC) and keyphrase
//! perturbation (KP).
//!
//! Both are pure functions of their inputs plus an explicit random source.
//! The `*_seeded` helpers derive that source from `(seed, sample_id, epoch)`
//! so outputs do not depend on processing order.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CitationContext, ContextWindow};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::stk::{find_occurrences, StkBase, StkMention, StkType};
use crate::synonyms::SynonymBase;
use crate::CITATION_TAG;

/// A crop keeping `b` sentences before and `v` after the citance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CropRange {
    pub b: usize,
    pub v: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    #[serde(rename = "SC")]
    Sc,
    #[serde(rename = "KP")]
    Kp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbOp {
    Gr,
    Lr,
    Ab,
}

impl PerturbOp {
    pub fn parse(value: &str) -> Result<PerturbOp> {
        match value.to_ascii_lowercase().as_str() {
            "gr" => Ok(PerturbOp::Gr),
            "lr" => Ok(PerturbOp::Lr),
            "ab" => Ok(PerturbOp::Ab),
            _ => Err(Error::Invalid(format!("unknown perturbation op {value:?}"))),
        }
    }
}

impl fmt::Display for PerturbOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbOp::Gr => "Gr",
            PerturbOp::Lr => "Lr",
            PerturbOp::Ab => "Ab",
        })
    }
}

/// Which operation KP uses in each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OpMode {
    GrOnly,
    LrOnly,
    AbOnly,
    #[default]
    Mixed,
}

impl OpMode {
    pub fn parse(value: &str) -> Result<OpMode> {
        match value.to_ascii_lowercase().as_str() {
            "gr" | "gr-only" => Ok(OpMode::GrOnly),
            "lr" | "lr-only" => Ok(OpMode::LrOnly),
            "ab" | "ab-only" => Ok(OpMode::AbOnly),
            "mixed" => Ok(OpMode::Mixed),
            _ => Err(Error::Invalid(format!("unknown op mode {value:?}"))),
        }
    }
}

/// Fixed modes return their op; mixed cycles Gr, Lr, Ab by epoch.
pub fn schedule_op(epoch: usize, mode: OpMode) -> PerturbOp {
    match mode {
        OpMode::GrOnly => PerturbOp::Gr,
        OpMode::LrOnly => PerturbOp::Lr,
        OpMode::AbOnly => PerturbOp::Ab,
        OpMode::Mixed => [PerturbOp::Gr, PerturbOp::Lr, PerturbOp::Ab][epoch % 3],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TransformEvent {
    Perturbed {
        surface: String,
        #[serde(rename = "type")]
        stk_type: StkType,
        op: PerturbOp,
        replacement: String,
    },
    /// Gr/Lr found no same-type alternative; the mention was abstracted.
    Fallback {
        surface: String,
        requested: PerturbOp,
    },
    Synonym {
        sentence: usize,
        word: String,
        replacement: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedSample {
    pub origin_id: String,
    pub epoch: usize,
    pub kind: TransformKind,
    pub sentences: Vec<String>,
    pub citance_index: usize,
    /// SC only: the crop that produced this sample.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub crop: Option<CropRange>,
    /// Set when no transform was possible and the origin stands in for itself.
    #[serde(default)]
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub log: Vec<TransformEvent>,
}

impl TransformedSample {
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

impl ContextWindow for TransformedSample {
    fn sample_id(&self) -> &str {
        &self.origin_id
    }

    fn sentences(&self) -> &[String] {
        &self.sentences
    }

    fn citance_index(&self) -> usize {
        self.citance_index
    }
}

/// Every crop other than the original range, in lexicographic `(b, v)` order.
pub fn sc_candidates(context: &CitationContext) -> Vec<CropRange> {
    let (bo, vo) = (context.before(), context.after());
    (0..=bo)
        .flat_map(|b| (0..=vo).map(move |v| CropRange { b, v }))
        .filter(|r| (r.b, r.v) != (bo, vo))
        .collect()
}

pub fn apply_crop(context: &CitationContext, crop: CropRange, epoch: usize) -> TransformedSample {
    TransformedSample {
        origin_id: context.sample_id.clone(),
        epoch,
        kind: TransformKind::Sc,
        sentences: context.window(crop.b, crop.v).to_vec(),
        citance_index: crop.b,
        crop: Some(crop),
        degenerate: false,
        log: Vec::new(),
    }
}

/// Uniform draw over the crop candidates. A citance-only context has none and
/// is returned as its own positive, flagged degenerate.
pub fn sample_sc(context: &CitationContext, epoch: usize, rng: &mut impl Rng) -> TransformedSample {
    let candidates = sc_candidates(context);
    match candidates.choose(rng) {
        Some(&crop) => apply_crop(context, crop, epoch),
        None => TransformedSample {
            origin_id: context.sample_id.clone(),
            epoch,
            kind: TransformKind::Sc,
            sentences: context.sentences.clone(),
            citance_index: context.citance_index,
            crop: None,
            degenerate: true,
            log: Vec::new(),
        },
    }
}

pub fn sample_sc_seeded(context: &CitationContext, epoch: usize, seed: u64) -> TransformedSample {
    let mut rng = rng::derive(seed, Stream::Crop, &context.sample_id, epoch as u64);
    sample_sc(context, epoch, &mut rng)
}

fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

/// What happens to one distinct keyphrase.
enum Plan {
    Keep,
    Replace(String),
    Abstract,
}

/// Keyphrase perturbation for one sample and epoch.
///
/// Each distinct keyphrase of `mentions` is perturbed with probability `beta`
/// using `op`; every occurrence of a perturbed keyphrase gets the same
/// replacement. Then each non-stopword word outside all keyphrase spans and
/// outside the anchor is replaced, with probability `gamma`, by a synonym
/// drawn uniformly from `syn`. Gr and Lr fall back to abstraction when no
/// same-type alternative exists.
#[allow(clippy::too_many_arguments)]
pub fn kp_transform(
    context: &CitationContext,
    mentions: &[StkMention],
    op: PerturbOp,
    beta: f64,
    gamma: f64,
    base: &StkBase,
    syn: &SynonymBase,
    epoch: usize,
    rng: &mut impl Rng,
) -> Result<TransformedSample> {
    check_probability("beta", beta)?;
    check_probability("gamma", gamma)?;

    // K_i as a set, first-listed type wins.
    let mut distinct: Vec<&StkMention> = Vec::new();
    for m in mentions {
        if !m.surface.is_empty() && !distinct.iter().any(|d| d.surface == m.surface) {
            distinct.push(m);
        }
    }

    let mut log = Vec::new();
    let mut plans: Vec<Plan> = Vec::with_capacity(distinct.len());
    for k in &distinct {
        if !rng.random_bool(beta) {
            plans.push(Plan::Keep);
            continue;
        }
        let pool: Vec<&str> = match op {
            PerturbOp::Gr => base
                .pool(k.stk_type)
                .into_iter()
                .filter(|s| *s != k.surface)
                .collect(),
            PerturbOp::Lr => distinct
                .iter()
                .filter(|o| o.stk_type == k.stk_type && o.surface != k.surface)
                .map(|o| o.surface.as_str())
                .collect(),
            PerturbOp::Ab => Vec::new(),
        };
        match pool.choose(rng) {
            Some(s) => plans.push(Plan::Replace((*s).to_string())),
            None => {
                if op != PerturbOp::Ab {
                    log.push(TransformEvent::Fallback {
                        surface: k.surface.clone(),
                        requested: op,
                    });
                }
                plans.push(Plan::Abstract);
            }
        }
    }

    // Occurrences of every keyphrase, longest first, non-overlapping.
    let spans: Vec<Vec<(Range<usize>, usize)>> = context
        .sentences
        .iter()
        .map(|s| mention_spans(s, &distinct))
        .collect();

    // Abstraction ids: per type, numbered by first occurrence.
    let mut first_seen: Vec<Option<(usize, usize)>> = vec![None; distinct.len()];
    for (si, sentence_spans) in spans.iter().enumerate() {
        for (range, k) in sentence_spans {
            let pos = (si, range.start);
            if first_seen[*k].is_none_or(|p| pos < p) {
                first_seen[*k] = Some(pos);
            }
        }
    }
    let mut abstracted: Vec<usize> = (0..distinct.len())
        .filter(|&k| matches!(plans[k], Plan::Abstract))
        .collect();
    abstracted.sort_by_key(|&k| (first_seen[k].unwrap_or((usize::MAX, usize::MAX)), k));
    let mut counters: BTreeMap<StkType, usize> = BTreeMap::new();
    let mut replacement: Vec<Option<String>> = plans
        .iter()
        .map(|p| match p {
            Plan::Replace(s) => Some(s.clone()),
            _ => None,
        })
        .collect();
    for k in abstracted {
        let t = distinct[k].stk_type;
        let n = counters.entry(t).or_insert(0);
        *n += 1;
        replacement[k] = Some(format!("{}-{}", t.name(), n));
    }
    for (k, r) in replacement.iter().enumerate() {
        if let Some(r) = r {
            let applied = match plans[k] {
                Plan::Replace(_) => op,
                _ => PerturbOp::Ab,
            };
            log.push(TransformEvent::Perturbed {
                surface: distinct[k].surface.clone(),
                stk_type: distinct[k].stk_type,
                op: applied,
                replacement: r.clone(),
            });
        }
    }

    // Rebuild each sentence: mention spans first, then eligible residue words.
    let mut sentences = Vec::with_capacity(context.sentences.len());
    for (si, sentence) in context.sentences.iter().enumerate() {
        let mut edits: Vec<(Range<usize>, String)> = spans[si]
            .iter()
            .filter_map(|(range, k)| replacement[*k].clone().map(|r| (range.clone(), r)))
            .collect();
        let blocked: Vec<Range<usize>> = spans[si]
            .iter()
            .map(|(r, _)| r.clone())
            .chain(sentence.match_indices(CITATION_TAG).map(|(i, m)| i..i + m.len()))
            .collect();
        for word in words(sentence) {
            let w = &sentence[word.clone()];
            if blocked.iter().any(|b| word.start < b.end && b.start < word.end) {
                continue;
            }
            if syn.is_stopword(w) {
                continue;
            }
            let Some(options) = syn.lookup(w) else {
                continue;
            };
            if !rng.random_bool(gamma) {
                continue;
            }
            let choice = options.choose(rng).expect("synonym lists are non-empty");
            let replaced = match_capitalization(w, choice);
            log.push(TransformEvent::Synonym {
                sentence: si,
                word: w.to_string(),
                replacement: replaced.clone(),
            });
            edits.push((word, replaced));
        }
        sentences.push(splice(sentence, edits));
    }

    Ok(TransformedSample {
        origin_id: context.sample_id.clone(),
        epoch,
        kind: TransformKind::Kp,
        sentences,
        citance_index: context.citance_index,
        crop: None,
        degenerate: false,
        log,
    })
}

/// KP with the sample's own `K_i`, the epoch's scheduled op, and a derived
/// random source.
#[allow(clippy::too_many_arguments)]
pub fn kp_transform_seeded(
    context: &CitationContext,
    mode: OpMode,
    beta: f64,
    gamma: f64,
    base: &StkBase,
    syn: &SynonymBase,
    epoch: usize,
    seed: u64,
) -> Result<TransformedSample> {
    let mut rng = rng::derive(seed, Stream::Perturb, &context.sample_id, epoch as u64);
    kp_transform(
        context,
        base.mentions(&context.sample_id),
        schedule_op(epoch, mode),
        beta,
        gamma,
        base,
        syn,
        epoch,
        &mut rng,
    )
}

/// Non-overlapping keyphrase spans in one sentence, longest keyphrase first,
/// sorted by position.
fn mention_spans(sentence: &str, distinct: &[&StkMention]) -> Vec<(Range<usize>, usize)> {
    let mut candidates: Vec<(Range<usize>, usize)> = distinct
        .iter()
        .enumerate()
        .flat_map(|(k, m)| {
            find_occurrences(sentence, &m.surface)
                .into_iter()
                .map(move |r| (r, k))
        })
        .collect();
    candidates.sort_by(|a, b| {
        (b.0.len())
            .cmp(&a.0.len())
            .then(a.0.start.cmp(&b.0.start))
            .then(a.1.cmp(&b.1))
    });
    let mut accepted: Vec<(Range<usize>, usize)> = Vec::new();
    for (r, k) in candidates {
        if accepted.iter().all(|(a, _)| r.end <= a.start || a.end <= r.start) {
            accepted.push((r, k));
        }
    }
    accepted.sort_by_key(|(r, _)| r.start);
    accepted
}

/// Byte ranges of maximal alphabetic runs (apostrophes inside a word kept).
fn words(sentence: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars = sentence.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let inner_apostrophe = c == '\''
            && start.is_some()
            && chars.peek().is_some_and(|(_, n)| n.is_alphabetic());
        if c.is_alphabetic() || inner_apostrophe {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            out.push(s..i);
        }
    }
    if let Some(s) = start {
        out.push(s..sentence.len());
    }
    out
}

fn match_capitalization(original: &str, replacement: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        }
    } else {
        replacement.to_string()
    }
}

fn splice(text: &str, mut edits: Vec<(Range<usize>, String)>) -> String {
    edits.sort_by_key(|(r, _)| r.start);
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (range, replacement) in edits {
        out.push_str(&text[cursor..range.start]);
        out.push_str(&replacement);
        cursor = range.end;
    }
    out.push_str(&text[cursor..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DatasetId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn context(b: usize, v: usize) -> CitationContext {
        let mut sentences: Vec<String> = (0..b).map(|i| format!("Before {i}.")).collect();
        sentences.push(format!("The citance {CITATION_TAG}."));
        sentences.extend((0..v).map(|i| format!("After {i}.")));
        CitationContext::new("c", sentences, b, None, DatasetId::Custom).unwrap()
    }

    fn single(text: &str) -> CitationContext {
        CitationContext::new("s", vec![text.to_string()], 0, None, DatasetId::Custom).unwrap()
    }

    #[test]
    fn candidates_three_by_three() {
        assert_eq!(sc_candidates(&context(3, 3)).len(), 15);
    }

    #[test]
    fn citance_only_has_no_crop() {
        let ctx = context(0, 0);
        assert!(sc_candidates(&ctx).is_empty());
        let out = sample_sc(&ctx, 0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(out.degenerate);
        assert_eq!(out.sentences, ctx.sentences);
    }

    #[test]
    fn candidates_one_by_one() {
        let got = sc_candidates(&context(1, 1));
        assert_eq!(
            got,
            vec![
                CropRange { b: 0, v: 0 },
                CropRange { b: 0, v: 1 },
                CropRange { b: 1, v: 0 }
            ]
        );
    }

    #[test]
    fn crop_keeps_citance_at_relative_zero() {
        let ctx = context(3, 2);
        for seed in 0..50 {
            let out = sample_sc_seeded(&ctx, 1, seed);
            assert_eq!(out.sentences[out.citance_index], ctx.citance());
            assert_eq!(out.citance_index, out.crop.unwrap().b);
        }
    }

    #[test]
    fn crop_draws_are_uniform() {
        let ctx = context(1, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts: HashMap<CropRange, usize> = HashMap::new();
        let draws = 3000;
        for _ in 0..draws {
            *counts.entry(sample_sc(&ctx, 0, &mut rng).crop.unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        for (_, n) in counts {
            let freq = n as f64 / draws as f64;
            assert!((freq - 1.0 / 3.0).abs() <= 0.03, "{freq}");
        }
    }

    #[test]
    fn crop_is_deterministic_per_key() {
        let ctx = context(3, 3);
        assert_eq!(sample_sc_seeded(&ctx, 4, 11), sample_sc_seeded(&ctx, 4, 11));
    }

    #[test]
    fn schedule() {
        assert_eq!(schedule_op(0, OpMode::Mixed), PerturbOp::Gr);
        assert_eq!(schedule_op(1, OpMode::Mixed), PerturbOp::Lr);
        assert_eq!(schedule_op(2, OpMode::Mixed), PerturbOp::Ab);
        assert_eq!(schedule_op(3, OpMode::Mixed), PerturbOp::Gr);
        for e in 0..7 {
            assert_eq!(schedule_op(e, OpMode::AbOnly), PerturbOp::Ab);
            assert_eq!(schedule_op(e, OpMode::GrOnly), PerturbOp::Gr);
            assert_eq!(schedule_op(e, OpMode::LrOnly), PerturbOp::Lr);
        }
    }

    #[test]
    fn zero_rates_are_identity() {
        let ctx = single("The first work to do this with topic models is #CITATION_TAG.");
        let m = [StkMention::new("topic models", StkType::Technique)];
        let out = kp_transform(
            &ctx,
            &m,
            PerturbOp::Gr,
            0.0,
            0.0,
            &StkBase::default(),
            &SynonymBase::builtin(),
            0,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(out.sentences, ctx.sentences);
        assert!(out.log.is_empty());
    }

    #[test]
    fn abstraction_of_topic_models() {
        let ctx = single("The first work to do this with topic models is #CITATION_TAG.");
        let m = [StkMention::new("topic models", StkType::Technique)];
        let out = kp_transform(
            &ctx,
            &m,
            PerturbOp::Ab,
            1.0,
            0.0,
            &StkBase::default(),
            &SynonymBase::builtin(),
            0,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(
            out.sentences[0],
            "The first work to do this with Technique-1 is #CITATION_TAG."
        );
    }

    #[test]
    fn local_replacement_swaps_two_techniques() {
        let ctx = single("We combine CRF and LSTM taggers as in #CITATION_TAG, and CRF again.");
        let m = [
            StkMention::new("CRF", StkType::Technique),
            StkMention::new("LSTM", StkType::Technique),
        ];
        let out = kp_transform(
            &ctx,
            &m,
            PerturbOp::Lr,
            1.0,
            0.0,
            &StkBase::default(),
            &SynonymBase::empty(),
            0,
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        assert_eq!(
            out.sentences[0],
            "We combine LSTM and CRF taggers as in #CITATION_TAG, and LSTM again."
        );
    }

    #[test]
    fn missing_alternative_falls_back_to_abstraction() {
        let ctx = single("BLEU is reported by #CITATION_TAG.");
        let m = [StkMention::new("BLEU", StkType::Measure)];
        for op in [PerturbOp::Gr, PerturbOp::Lr] {
            let out = kp_transform(
                &ctx,
                &m,
                op,
                1.0,
                0.0,
                &StkBase::default(),
                &SynonymBase::empty(),
                0,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap();
            assert_eq!(out.sentences[0], "Measure-1 is reported by #CITATION_TAG.");
            assert!(out.log.iter().any(|e| matches!(e, TransformEvent::Fallback { .. })));
        }
    }

    #[test]
    fn abstraction_ids_follow_first_occurrence() {
        let ctx = CitationContext::new(
            "s",
            vec![
                "SVM beats CRF here.".into(),
                "We follow #CITATION_TAG with CRF, SVM and BLEU.".into(),
            ],
            1,
            None,
            DatasetId::Custom,
        )
        .unwrap();
        let m = [
            StkMention::new("CRF", StkType::Technique),
            StkMention::new("BLEU", StkType::Measure),
            StkMention::new("SVM", StkType::Technique),
        ];
        let out = kp_transform(
            &ctx,
            &m,
            PerturbOp::Ab,
            1.0,
            0.0,
            &StkBase::default(),
            &SynonymBase::empty(),
            0,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(out.sentences[0], "Technique-1 beats Technique-2 here.");
        assert_eq!(
            out.sentences[1],
            "We follow #CITATION_TAG with Technique-2, Technique-1 and Measure-1."
        );
    }

    #[test]
    fn longest_mention_wins_overlap() {
        let ctx = single("Neural topic models differ from topic models #CITATION_TAG.");
        let m = [
            StkMention::new("topic models", StkType::Technique),
            StkMention::new("Neural topic models", StkType::Technique),
        ];
        let out = kp_transform(
            &ctx,
            &m,
            PerturbOp::Ab,
            1.0,
            0.0,
            &StkBase::default(),
            &SynonymBase::empty(),
            0,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(out.sentences[0], "Technique-1 differ from Technique-2 #CITATION_TAG.");
    }

    #[test]
    fn synonyms_skip_mentions_stopwords_and_anchor() {
        let syn = SynonymBase::new(
            [
                ("models".to_string(), vec!["systems".into()]),
                ("the".to_string(), vec!["a".into()]),
                ("citation".to_string(), vec!["reference".into()]),
                ("tag".to_string(), vec!["label".into()]),
                ("Show".to_string(), vec!["demonstrate".into()]),
            ],
            ["the".to_string()],
        );
        let ctx = single("Show the topic models and models #CITATION_TAG.");
        let m = [StkMention::new("topic models", StkType::Technique)];
        let out = kp_transform(
            &ctx,
            &m,
            PerturbOp::Ab,
            0.0,
            1.0,
            &StkBase::default(),
            &syn,
            0,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert_eq!(
            out.sentences[0],
            "Demonstrate the topic models and systems #CITATION_TAG."
        );
    }

    #[test]
    fn rejects_out_of_range_rates() {
        let ctx = single("x #CITATION_TAG");
        for (b, g) in [(-0.1, 0.0), (0.0, 1.1), (f64::NAN, 0.0)] {
            assert!(kp_transform(
                &ctx,
                &[],
                PerturbOp::Ab,
                b,
                g,
                &StkBase::default(),
                &SynonymBase::empty(),
                0,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .is_err());
        }
    }

    #[test]
    fn word_splitting() {
        let s = "It's a well-known CRF, isn't it?";
        let got: Vec<&str> = words(s).into_iter().map(|r| &s[r]).collect();
        assert_eq!(got, vec!["It's", "a", "well", "known", "CRF", "isn't", "it"]);
    }
}
