//! Synthetic citation corpora with planted typed keyphrases.
//!
//! Each context is built from a label-specific citance template (or, for a
//! fraction of samples, a neutral citance next to a label-specific context
//! sentence) filled with keyphrases drawn from fixed per-type pools, padded
//! with filler sentences on both sides. Keyphrase choice is biased per label,
//! so keyphrases carry a spurious signal alongside the residue cues. A small
//! fraction of labels is resampled uniformly to mimic annotation noise.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::client::TextGenerator;
use crate::corpus::{reserve_validation, CitationContext, DatasetId, DatasetSplit};
use crate::error::{Error, Result};
use crate::label::Label;
use crate::rng::{self, Stream};
use crate::stk::{find_occurrences, StkBase, StkMention, StkType};
use crate::CITATION_TAG;

const POOLS: [(StkType, &[&str]); 6] = [
    (
        StkType::Task,
        &[
            "machine translation",
            "dependency parsing",
            "named entity recognition",
            "text summarization",
            "question answering",
            "word sense disambiguation",
            "sentiment analysis",
            "coreference resolution",
            "semantic role labeling",
            "relation extraction",
        ],
    ),
    (
        StkType::Material,
        &[
            "Penn Treebank",
            "Europarl",
            "WordNet",
            "Gigaword",
            "PropBank",
            "FrameNet",
            "OntoNotes",
            "Brown corpus",
        ],
    ),
    (
        StkType::Technique,
        &[
            "CRF",
            "LSTM",
            "SVM",
            "beam search",
            "maximum entropy model",
            "hidden Markov model",
            "perceptron",
            "EM algorithm",
            "decision tree",
            "n-gram language model",
            "topic model",
            "phrase table",
        ],
    ),
    (
        StkType::Process,
        &[
            "feature selection",
            "bootstrapping",
            "word alignment",
            "tokenization",
            "self-training",
            "parameter tuning",
        ],
    ),
    (
        StkType::Measure,
        &["BLEU", "F-score", "perplexity", "precision", "recall", "kappa"],
    ),
    (
        StkType::Concept,
        &[
            "lexical semantics",
            "syntactic structure",
            "discourse coherence",
            "word order",
            "semantic similarity",
            "subcategorization frames",
        ],
    ),
];

/// Citance templates per label; `{a}` is a technique or task, `{b}` any
/// keyphrase.
const CITANCES: [&[&str]; 6] = [
    &[
        "{a} has been widely studied for {b} {tag}.",
        "Earlier work applied {a} to {b} {tag}.",
        "{a} is a common choice for {b} {tag}.",
        "Several authors have analyzed {a} in the context of {b} {tag}.",
    ],
    &[
        "Unlike {tag}, our {a} does not require {b}.",
        "Our results with {a} are better than those reported by {tag} on {b}.",
        "In contrast to {tag}, we find that {a} hurts {b}.",
        "Compared to {tag}, the {a} we propose is simpler and needs no {b}.",
    ],
    &[
        "We use the {a} released by {tag} for {b}.",
        "Following {tag}, we apply {a} to {b}.",
        "The {a} is trained with the toolkit of {tag} on {b}.",
        "We adopt the {b} setup of {tag} and run {a}.",
    ],
    &[
        "As noted by {tag}, {b} remains an open problem for {a}.",
        "The limited success of {a} on {b} {tag} led us to this study.",
        "Because {a} fails on {b} {tag}, a new approach is needed.",
    ],
    &[
        "We extend the {a} of {tag} with {b}.",
        "Our {a} builds on {tag} by adding {b}.",
        "We generalize the {a} introduced in {tag} to {b}.",
    ],
    &[
        "In future work we plan to combine {a} with the ideas in {tag}.",
        "It would be interesting to test {a} on {b} as in {tag}.",
        "A natural next step is to apply {a} to {b} following {tag}.",
    ],
];

const NEUTRAL_CITANCES: &[&str] = &[
    "{a} was applied to {b} {tag}.",
    "{tag} describe {a} for {b}.",
    "The {a} of {tag} operates on {b}.",
];

/// Label cue sentences without an anchor, placed next to a neutral citance.
const CONTEXT_CUES: [&[&str]; 6] = [
    &["This line of research has a long history.", "Many studies have examined this issue."],
    &["However, the two approaches differ in important ways.", "Our findings disagree with theirs."],
    &["We adopt this setup directly in our experiments.", "We rely on their implementation."],
    &["This limitation is the main motivation for our work.", "This gap motivates the present paper."],
    &["Our method adds a new component to this design.", "We build directly on this idea and extend it."],
    &["We leave this direction for future work.", "We hope to explore this later."],
];

const FILLERS: &[&str] = &[
    "{a} is evaluated on {b} using {c}.",
    "Table 2 reports {c} for {a}.",
    "Section 4 describes the {a} in detail.",
    "The {b} data was split into ten folds.",
    "We observe a large gain in {c} on {b}.",
    "This setting is standard for {b}.",
    "All experiments use {a} with default settings.",
    "Errors often arise from {b}.",
    "The results are shown in Figure 3.",
    "We discuss these numbers below.",
];

/// Label proportions in `Label` order.
pub const ACL_ARC_PROPORTIONS: [f64; Label::COUNT] = [0.513, 0.181, 0.037, 0.036, 0.046, 0.187];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub dataset: DatasetId,
    pub train_pool: usize,
    pub test: usize,
    pub proportions: [f64; Label::COUNT],
    /// Probability that the `{a}` slot comes from the label's favoured pool.
    pub keyphrase_bias: f64,
    /// Probability that the label cue sits in a neighbouring sentence.
    pub cue_in_context: f64,
    /// Probability that the gold label is resampled uniformly.
    pub label_noise: f64,
    pub max_range: usize,
    pub validation_fraction: f64,
}

impl SynthSpec {
    /// 1,645 training-pool and 284 test contexts with ACL-ARC label shares;
    /// reserving 15% of the pool leaves 1,399 / 246 / 284.
    pub fn acl_arc() -> Self {
        SynthSpec {
            dataset: DatasetId::AclArc,
            train_pool: 1645,
            test: 284,
            proportions: ACL_ARC_PROPORTIONS,
            keyphrase_bias: 0.5,
            cue_in_context: 0.3,
            label_noise: 0.1,
            max_range: 3,
            validation_fraction: 0.15,
        }
    }

    pub fn small(train_pool: usize, test: usize) -> Self {
        SynthSpec {
            train_pool,
            test,
            ..SynthSpec::acl_arc()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub split: DatasetSplit,
    /// Planted mentions for the training split.
    pub stk: StkBase,
    /// Planted mentions for every generated context.
    pub all_mentions: BTreeMap<String, Vec<StkMention>>,
}

pub fn lexicon() -> BTreeMap<String, StkType> {
    POOLS
        .iter()
        .flat_map(|(t, pool)| pool.iter().map(move |s| (s.to_string(), *t)))
        .collect()
}

/// Class counts by largest remainder.
fn allocate(n: usize, proportions: &[f64; Label::COUNT]) -> [usize; Label::COUNT] {
    let total: f64 = proportions.iter().sum();
    let exact: Vec<f64> = proportions.iter().map(|p| p / total * n as f64).collect();
    let mut counts = [0usize; Label::COUNT];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut order: Vec<usize> = (0..Label::COUNT).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let missing = n - counts.iter().sum::<usize>();
    for &k in order.iter().take(missing) {
        counts[k] += 1;
    }
    counts
}

fn favoured(label: Label) -> Vec<&'static str> {
    let pool: Vec<&str> = POOLS[2].1.iter().chain(POOLS[0].1).copied().collect();
    pool.into_iter()
        .enumerate()
        .filter(|(i, _)| i % Label::COUNT == label.index())
        .map(|(_, s)| s)
        .collect()
}

fn any_phrase(rng: &mut impl Rng) -> &'static str {
    let (_, pool) = POOLS.choose(rng).expect("pools");
    pool.choose(rng).expect("pool")
}

fn primary_phrase(label: Label, bias: f64, rng: &mut impl Rng) -> &'static str {
    if rng.random_bool(bias) {
        favoured(label).choose(rng).copied().expect("favoured")
    } else {
        let pool: Vec<&str> = POOLS[2].1.iter().chain(POOLS[0].1).copied().collect();
        pool.choose(rng).copied().expect("pool")
    }
}

fn fill(template: &str, a: &str, b: &str, c: &str) -> String {
    let s = template
        .replace("{tag}", CITATION_TAG)
        .replace("{a}", a)
        .replace("{b}", b)
        .replace("{c}", c);
    let mut chars = s.chars();
    match chars.next() {
        Some(first) if first.is_lowercase() && !s.starts_with(CITATION_TAG) => {
            first.to_uppercase().chain(chars).collect()
        }
        _ => s,
    }
}

fn planted(sentences: &[String], lex: &BTreeMap<String, StkType>) -> Vec<StkMention> {
    let mut found: Vec<StkMention> = lex
        .iter()
        .filter(|(surface, _)| sentences.iter().any(|s| !find_occurrences(s, surface).is_empty()))
        .map(|(surface, t)| StkMention::new(surface.clone(), *t))
        .collect();
    found.sort_by(|a, b| (a.stk_type, &a.surface).cmp(&(b.stk_type, &b.surface)));
    found
}

fn make_context(
    label: Label,
    spec: &SynthSpec,
    rng: &mut impl Rng,
) -> (Vec<String>, usize, Label) {
    let a = primary_phrase(label, spec.keyphrase_bias, rng);
    let b = any_phrase(rng);
    let before = rng.random_range(0..=spec.max_range);
    let after = rng.random_range(0..=spec.max_range);
    let filler = |rng: &mut _| {
        let t = FILLERS.choose(rng).expect("fillers");
        let (x, y, z) = (
            any_phrase(rng),
            any_phrase(rng),
            POOLS[4].1.choose(rng).expect("measures"),
        );
        fill(t, x, y, z)
    };
    let mut pre: Vec<String> = (0..before).map(|_| filler(rng)).collect();
    let mut post: Vec<String> = (0..after).map(|_| filler(rng)).collect();
    let citance = if rng.random_bool(spec.cue_in_context) {
        let cue = CONTEXT_CUES[label.index()].choose(rng).expect("cues").to_string();
        if !post.is_empty() && (pre.is_empty() || rng.random_bool(0.5)) {
            post[0] = cue;
        } else if !pre.is_empty() {
            *pre.last_mut().expect("nonempty") = cue;
        } else {
            post.push(cue);
        }
        fill(NEUTRAL_CITANCES.choose(rng).expect("neutral"), a, b, "")
    } else {
        fill(CITANCES[label.index()].choose(rng).expect("citances"), a, b, "")
    };
    let gold = if rng.random_bool(spec.label_noise) {
        Label::from_index(rng.random_range(0..Label::COUNT)).expect("index")
    } else {
        label
    };
    let citance_index = pre.len();
    let mut sentences = pre;
    sentences.push(citance);
    sentences.extend(post);
    (sentences, citance_index, gold)
}

fn generate_split(
    prefix: &str,
    n: usize,
    spec: &SynthSpec,
    seed: u64,
    lex: &BTreeMap<String, StkType>,
    mentions: &mut BTreeMap<String, Vec<StkMention>>,
) -> Result<Vec<CitationContext>> {
    let counts = allocate(n, &spec.proportions);
    let mut labels: Vec<Label> = Vec::with_capacity(n);
    for (i, c) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(Label::from_index(i).expect("index"), *c));
    }
    let mut out = Vec::with_capacity(n);
    for (i, label) in labels.into_iter().enumerate() {
        let id = format!("{prefix}-{i:05}");
        let mut rng = rng::derive(seed, Stream::Other(7), &id, 0);
        let (sentences, citance_index, gold) = make_context(label, spec, &mut rng);
        mentions.insert(id.clone(), planted(&sentences, lex));
        out.push(CitationContext::new(id, sentences, citance_index, Some(gold), spec.dataset)?);
    }
    let mut rng = rng::global(seed, Stream::Shuffle, 0);
    rand::seq::SliceRandom::shuffle(out.as_mut_slice(), &mut rng);
    Ok(out)
}

pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SyntheticCorpus> {
    if spec.train_pool < 2 {
        return Err(Error::Invalid("synthetic training pool needs at least 2 samples".into()));
    }
    let lex = lexicon();
    let mut all_mentions = BTreeMap::new();
    let pool = generate_split("syn-train", spec.train_pool, spec, seed, &lex, &mut all_mentions)?;
    let test = generate_split("syn-test", spec.test, spec, seed, &lex, &mut all_mentions)?;
    let (train, validation) = reserve_validation(pool, spec.validation_fraction, seed)?;
    let split = DatasetSplit {
        dataset: spec.dataset,
        train,
        validation,
        test,
    };
    let stk = StkBase::from_per_sample(
        split
            .train
            .iter()
            .map(|c| (c.sample_id.clone(), all_mentions[&c.sample_id].clone()))
            .collect(),
    );
    Ok(SyntheticCorpus {
        split,
        stk,
        all_mentions,
    })
}

/// `n` unlabeled-use contexts with their planted mentions, for exercising
/// keyphrase perturbation.
pub fn kp_corpus(n: usize, seed: u64) -> Result<(Vec<CitationContext>, StkBase)> {
    let spec = SynthSpec::small(n, 0);
    let lex = lexicon();
    let mut mentions = BTreeMap::new();
    let mut ctxs = generate_split("kp", n, &spec, seed, &lex, &mut mentions)?;
    ctxs.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok((ctxs, StkBase::from_per_sample(mentions)))
}

/// Answers extraction prompts with the pool keyphrases found in the
/// prompt's context, formatted like the one-shot example reply.
#[derive(Debug, Clone)]
pub struct PlantedResponder {
    lexicon: BTreeMap<String, StkType>,
}

impl Default for PlantedResponder {
    fn default() -> Self {
        PlantedResponder { lexicon: lexicon() }
    }
}

impl TextGenerator for PlantedResponder {
    fn generate(&self, prompt: &str) -> Result<String> {
        let context = prompt
            .rsplit_once("Here is the context:")
            .map(|(_, c)| c)
            .unwrap_or(prompt);
        let mut by_type: BTreeMap<StkType, Vec<&str>> = BTreeMap::new();
        for (surface, t) in &self.lexicon {
            if !find_occurrences(context, surface).is_empty() {
                by_type.entry(*t).or_default().push(surface);
            }
        }
        let body: Vec<String> = by_type
            .iter()
            .map(|(t, v)| {
                let items: Vec<String> = v.iter().map(|s| format!("'{s}'")).collect();
                format!("'{}': [{}]", t.name(), items.join(", "))
            })
            .collect();
        Ok(format!("Output:{{{}}}", body.join(", ")))
    }
}
