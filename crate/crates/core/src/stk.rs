//! Scientific typed keyphrases (STKs): the one-shot extraction prompt, a
//! tolerant reader for the model's reply, the per-sample/global keyphrase
//! base, and cached, concurrent extraction over a training split.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::client::TextGenerator;
use crate::corpus::{CitationContext, DatasetSplit};
use crate::error::{Error, Result};
use crate::CITATION_TAG;

const EXTRACTION_TEMPLATE: &str = include_str!("../prompts/stk_extraction.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StkType {
    Task,
    Material,
    Technique,
    Process,
    Measure,
    Concept,
}

impl StkType {
    pub const ALL: [StkType; 6] = [
        StkType::Task,
        StkType::Material,
        StkType::Technique,
        StkType::Process,
        StkType::Measure,
        StkType::Concept,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StkType::Task => "Task",
            StkType::Material => "Material",
            StkType::Technique => "Technique",
            StkType::Process => "Process",
            StkType::Measure => "Measure",
            StkType::Concept => "Concept",
        }
    }

    pub fn parse(value: &str) -> Option<StkType> {
        let key = value.trim().trim_matches(|c| c == '[' || c == ']');
        StkType::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(key))
    }
}

impl fmt::Display for StkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StkMention {
    pub surface: String,
    #[serde(rename = "type")]
    pub stk_type: StkType,
}

impl StkMention {
    pub fn new(surface: impl Into<String>, stk_type: StkType) -> Self {
        StkMention {
            surface: surface.into(),
            stk_type,
        }
    }
}

/// Whole-phrase, case-sensitive occurrences of `surface` in `text`, as byte
/// ranges. An alphanumeric edge of the phrase must not continue into an
/// alphanumeric neighbour, so "LFS" does not match inside "LFSR". Matches
/// overlapping the citation anchor are skipped.
pub fn find_occurrences(text: &str, surface: &str) -> Vec<Range<usize>> {
    if surface.is_empty() {
        return Vec::new();
    }
    let anchors: Vec<Range<usize>> = text
        .match_indices(CITATION_TAG)
        .map(|(i, m)| i..i + m.len())
        .collect();
    let first_alnum = surface.chars().next().is_some_and(char::is_alphanumeric);
    let last_alnum = surface.chars().next_back().is_some_and(char::is_alphanumeric);
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(pos) = text[from..].find(surface) {
        let start = from + pos;
        let end = start + surface.len();
        let before_ok = !first_alnum
            || text[..start]
                .chars()
                .next_back()
                .is_none_or(|c| !c.is_alphanumeric());
        let after_ok =
            !last_alnum || text[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
        let hits_anchor = anchors.iter().any(|a| start < a.end && a.start < end);
        if before_ok && after_ok && !hits_anchor {
            out.push(start..end);
        }
        from = start + surface.chars().next().map_or(1, char::len_utf8);
    }
    out
}

/// True when the phrase occurs in at least one sentence of the context.
pub fn occurs_in(ctx: &CitationContext, surface: &str) -> bool {
    ctx.sentences
        .iter()
        .any(|s| !find_occurrences(s, surface).is_empty())
}

/// The one-shot extraction prompt with the flattened context substituted.
pub fn build_extraction_prompt(context: &CitationContext) -> String {
    let text = context.text();
    if text.trim().is_empty() {
        log::warn!("{}: empty context in extraction prompt", context.sample_id);
    }
    EXTRACTION_TEMPLATE.trim_end().replace("{T}", &text)
}

/// Typed mentions from the first parseable `{type: [phrases]}` object in a
/// reply. Both JSON and Python-literal quoting are accepted; unknown type keys
/// are dropped.
pub fn parse_stk_response(raw: &str) -> Result<Vec<StkMention>> {
    let chars: Vec<char> = raw.chars().collect();
    for start in chars
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == '{')
        .map(|(i, _)| i)
    {
        let mut parser = LiteralParser {
            chars: &chars,
            pos: start,
        };
        let Some(entries) = parser.object() else {
            continue;
        };
        let mut mentions = Vec::new();
        for (key, values) in entries {
            match StkType::parse(&key) {
                Some(t) => mentions.extend(values.into_iter().map(|v| StkMention::new(v, t))),
                None => log::warn!("dropping unknown keyphrase type {key:?}"),
            }
        }
        return Ok(mentions);
    }
    Err(Error::Parse {
        raw: raw.to_string(),
    })
}

/// Minimal reader for `{ 'key': ['a', "b"], ... }`.
struct LiteralParser<'a> {
    chars: &'a [char],
    pos: usize,
}

impl LiteralParser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn object(&mut self) -> Option<Vec<(String, Vec<String>)>> {
        if !self.eat('{') {
            return None;
        }
        let mut entries = Vec::new();
        if self.eat('}') {
            return Some(entries);
        }
        loop {
            let key = self.string()?;
            if !self.eat(':') {
                return None;
            }
            entries.push((key, self.value()?));
            if self.eat(',') {
                if self.eat('}') {
                    return Some(entries);
                }
                continue;
            }
            return self.eat('}').then_some(entries);
        }
    }

    fn value(&mut self) -> Option<Vec<String>> {
        self.ws();
        match self.peek()? {
            '[' => {
                self.pos += 1;
                let mut items = Vec::new();
                if self.eat(']') {
                    return Some(items);
                }
                loop {
                    items.push(self.string()?);
                    if self.eat(',') {
                        if self.eat(']') {
                            return Some(items);
                        }
                        continue;
                    }
                    return self.eat(']').then_some(items);
                }
            }
            '"' | '\'' => Some(vec![self.string()?]),
            _ => {
                let rest: String = self.chars[self.pos..].iter().take(4).collect();
                if rest == "null" || rest == "None" {
                    self.pos += 4;
                    Some(Vec::new())
                } else {
                    None
                }
            }
        }
    }

    fn string(&mut self) -> Option<String> {
        self.ws();
        let quote = self.peek().filter(|&c| c == '"' || c == '\'')?;
        self.pos += 1;
        let mut out = String::new();
        loop {
            let c = self.peek()?;
            self.pos += 1;
            match c {
                c if c == quote => return Some(out),
                '\\' => {
                    let e = self.peek()?;
                    self.pos += 1;
                    match e {
                        'n' => out.push('\n'),
                        't' => out.push('\t'),
                        'r' => out.push('\r'),
                        'u' => {
                            let hex: String = self.chars.get(self.pos..self.pos + 4)?.iter().collect();
                            self.pos += 4;
                            out.push(char::from_u32(u32::from_str_radix(&hex, 16).ok()?)?);
                        }
                        other => out.push(other),
                    }
                }
                c => out.push(c),
            }
        }
    }
}

/// Keep mentions that occur verbatim in the context, trimmed, one type per
/// surface (the first one listed wins).
pub fn filter_mentions(ctx: &CitationContext, mentions: Vec<StkMention>) -> Vec<StkMention> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for m in mentions {
        let surface = m.surface.trim();
        if surface.is_empty() || seen.contains(surface) || !occurs_in(ctx, surface) {
            continue;
        }
        seen.insert(surface.to_string());
        out.push(StkMention::new(surface, m.stk_type));
    }
    out
}

/// Per-sample keyphrases `K_i` and the global pool partitioned by type.
///
/// The global pool is always the union of the per-sample lists; it is
/// recomputed on every mutation and never serialized.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StkBase {
    per_sample: BTreeMap<String, Vec<StkMention>>,
    global: BTreeMap<StkType, BTreeSet<String>>,
}

#[derive(Serialize, Deserialize)]
struct StkBaseFile {
    per_sample: BTreeMap<String, Vec<StkMention>>,
}

impl StkBase {
    pub fn from_per_sample(per_sample: BTreeMap<String, Vec<StkMention>>) -> Self {
        let mut base = StkBase {
            per_sample,
            global: BTreeMap::new(),
        };
        base.recompute_global();
        base
    }

    pub fn insert(&mut self, sample_id: impl Into<String>, mentions: Vec<StkMention>) {
        self.per_sample.insert(sample_id.into(), mentions);
        self.recompute_global();
    }

    pub fn remove(&mut self, sample_id: &str) -> Option<Vec<StkMention>> {
        let removed = self.per_sample.remove(sample_id);
        self.recompute_global();
        removed
    }

    fn recompute_global(&mut self) {
        self.global = Self::union_of(&self.per_sample);
    }

    fn union_of(
        per_sample: &BTreeMap<String, Vec<StkMention>>,
    ) -> BTreeMap<StkType, BTreeSet<String>> {
        let mut global: BTreeMap<StkType, BTreeSet<String>> = BTreeMap::new();
        for m in per_sample.values().flatten() {
            global.entry(m.stk_type).or_default().insert(m.surface.clone());
        }
        global
    }

    /// `K_i`; empty for samples without keyphrases.
    pub fn mentions(&self, sample_id: &str) -> &[StkMention] {
        self.per_sample.get(sample_id).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, sample_id: &str) -> bool {
        self.per_sample.contains_key(sample_id)
    }

    pub fn per_sample(&self) -> &BTreeMap<String, Vec<StkMention>> {
        &self.per_sample
    }

    pub fn global(&self) -> &BTreeMap<StkType, BTreeSet<String>> {
        &self.global
    }

    /// Surfaces of one type in sorted order.
    pub fn pool(&self, stk_type: StkType) -> Vec<&str> {
        self.global
            .get(&stk_type)
            .map(|s| s.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn total_mentions(&self) -> usize {
        self.per_sample.values().map(Vec::len).sum()
    }

    /// Check the union invariant against a fresh recomputation.
    pub fn check_consistency(&self) -> Result<()> {
        if Self::union_of(&self.per_sample) == self.global {
            Ok(())
        } else {
            Err(Error::Invalid("global keyphrase pool diverged from per-sample lists".into()))
        }
    }

    /// Drop every sample that is not in the training split.
    pub fn restrict_to_training(&mut self, split: &DatasetSplit) {
        let train: BTreeSet<&str> = split.train.iter().map(|c| c.sample_id.as_str()).collect();
        self.per_sample.retain(|id, _| train.contains(id.as_str()));
        self.recompute_global();
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(
            BufWriter::new(file),
            &StkBaseFile {
                per_sample: self.per_sample.clone(),
            },
        )?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: StkBaseFile = serde_json::from_str(&text)?;
        Ok(Self::from_per_sample(file.per_sample))
    }
}

/// Totals and per-type averages per sample, in the layout of the keyphrase
/// statistics table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StkStats {
    pub samples: usize,
    pub type_agnostic: usize,
    pub per_type_average: BTreeMap<StkType, f64>,
}

impl StkStats {
    pub fn from_base(base: &StkBase) -> Self {
        let samples = base.per_sample.len();
        let mut counts: BTreeMap<StkType, usize> =
            StkType::ALL.into_iter().map(|t| (t, 0)).collect();
        for m in base.per_sample.values().flatten() {
            *counts.get_mut(&m.stk_type).expect("all types present") += 1;
        }
        let per_type_average = counts
            .into_iter()
            .map(|(t, n)| (t, if samples == 0 { 0.0 } else { n as f64 / samples as f64 }))
            .collect();
        StkStats {
            samples,
            type_agnostic: base.total_mentions(),
            per_type_average,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Attempts per sample, including the first.
    pub retries: usize,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            retries: 3,
            cache_dir: None,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub base: StkBase,
    pub failures: Vec<FailureRecord>,
    pub remote_calls: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    id: String,
    prompt_hash: String,
    response: String,
    mentions: Vec<StkMention>,
}

/// Content address of one extraction: sample id plus the exact prompt.
pub fn cache_key(sample_id: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(sample_id.as_bytes());
    h.update([0u8]);
    h.update(prompt.as_bytes());
    hex::encode(h.finalize())
}

fn cache_path(dir: &Path, sample_id: &str, key: &str) -> PathBuf {
    let safe: String = sample_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(64)
        .collect();
    dir.join(format!("{safe}.{}.json", &key[..16]))
}

/// Extract keyphrases for every training sample.
///
/// Samples whose every attempt fails keep an empty `K_i` and are listed in
/// `failures`; they are not cached, so a later run retries them.
pub fn extract_stks(
    dataset: &DatasetSplit,
    client: &dyn TextGenerator,
    opts: &ExtractOptions,
) -> Result<ExtractionOutcome> {
    if let Some(dir) = &opts.cache_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let attempts = opts.retries.max(1);
    let workers = opts.max_in_flight.clamp(1, dataset.train.len().max(1));
    let next = AtomicUsize::new(0);
    let remote_calls = AtomicUsize::new(0);
    let cache_hits = AtomicUsize::new(0);
    let cache_lock = Mutex::new(());
    let results: Mutex<HashMap<usize, std::result::Result<Vec<StkMention>, String>>> =
        Mutex::new(HashMap::new());

    let extract_one = |ctx: &CitationContext| -> std::result::Result<Vec<StkMention>, String> {
        let prompt = build_extraction_prompt(ctx);
        let key = cache_key(&ctx.sample_id, &prompt);
        let path = opts.cache_dir.as_ref().map(|d| cache_path(d, &ctx.sample_id, &key));
        if let Some(path) = &path {
            if let Ok(text) = fs::read_to_string(path) {
                if let Ok(entry) = serde_json::from_str::<CacheEntry>(&text) {
                    if entry.prompt_hash == key {
                        cache_hits.fetch_add(1, Ordering::Relaxed);
                        return Ok(entry.mentions);
                    }
                }
            }
        }
        let mut last_error = String::new();
        for _ in 0..attempts {
            remote_calls.fetch_add(1, Ordering::Relaxed);
            let reply = match client.generate(&prompt) {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            match parse_stk_response(&reply) {
                Ok(raw) => {
                    let mentions = filter_mentions(ctx, raw);
                    if let Some(path) = &path {
                        let entry = CacheEntry {
                            id: ctx.sample_id.clone(),
                            prompt_hash: key.clone(),
                            response: reply,
                            mentions: mentions.clone(),
                        };
                        let _guard = cache_lock.lock().expect("cache lock");
                        let written = serde_json::to_string_pretty(&entry)
                            .map_err(|e| e.to_string())
                            .and_then(|s| fs::write(path, s).map_err(|e| e.to_string()));
                        if let Err(e) = written {
                            log::warn!("{}: cache write failed: {e}", ctx.sample_id);
                        }
                    }
                    return Ok(mentions);
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(last_error)
    };

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(ctx) = dataset.train.get(i) else {
                    break;
                };
                let r = extract_one(ctx);
                results.lock().expect("results lock").insert(i, r);
            });
        }
    });

    let mut results = results.into_inner().expect("results lock");
    let mut per_sample = BTreeMap::new();
    let mut failures = Vec::new();
    for (i, ctx) in dataset.train.iter().enumerate() {
        match results.remove(&i).expect("every sample processed") {
            Ok(m) => {
                per_sample.insert(ctx.sample_id.clone(), m);
            }
            Err(error) => {
                failures.push(FailureRecord {
                    id: ctx.sample_id.clone(),
                    error,
                });
                per_sample.insert(ctx.sample_id.clone(), Vec::new());
            }
        }
    }
    Ok(ExtractionOutcome {
        base: StkBase::from_per_sample(per_sample),
        failures,
        remote_calls: remote_calls.into_inner(),
        cache_hits: cache_hits.into_inner(),
    })
}

pub fn write_failure_report(path: impl AsRef<Path>, failures: &[FailureRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for f in failures {
        writeln!(w, "{}", serde_json::to_string(f)?).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
