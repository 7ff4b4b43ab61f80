//! Citation-context corpora: the JSONL record format, loading with anchor
//! validation and windowing, validation reservation, and persistence.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::rng::{self, Stream};
use crate::CITATION_TAG;

/// Maximum one-side context range used when a caller does not pick one.
pub const DEFAULT_MAX_RANGE: usize = 3;

/// Fraction of the training pool held out when a release has no validation split.
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum DatasetId {
    #[serde(rename = "ACL-ARC", alias = "acl-arc", alias = "acl_arc")]
    AclArc,
    #[serde(rename = "FOCAL", alias = "focal")]
    Focal,
    #[serde(rename = "ACT2", alias = "act2")]
    Act2,
    #[default]
    #[serde(rename = "custom")]
    Custom,
}

impl DatasetId {
    pub fn parse(value: &str) -> Result<DatasetId> {
        let key: String = value
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        match key.as_str() {
            "aclarc" => Ok(DatasetId::AclArc),
            "focal" => Ok(DatasetId::Focal),
            "act2" => Ok(DatasetId::Act2),
            "custom" => Ok(DatasetId::Custom),
            _ => Err(Error::Invalid(format!("unknown dataset {value:?}"))),
        }
    }

    /// Releases that ship without a validation split.
    pub fn reserves_validation(self) -> bool {
        matches!(self, DatasetId::AclArc | DatasetId::Act2)
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetId::AclArc => "ACL-ARC",
            DatasetId::Focal => "FOCAL",
            DatasetId::Act2 => "ACT2",
            DatasetId::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

/// A citance with up to `l` sentences on either side.
///
/// `sentences[citance_index]` is the citance and holds exactly one
/// [`CITATION_TAG`]. Contexts near document boundaries keep fewer sentences on
/// the truncated side instead of padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationContext {
    pub sample_id: String,
    pub sentences: Vec<String>,
    pub citance_index: usize,
    pub label: Option<Label>,
    #[serde(default)]
    pub dataset: DatasetId,
}

impl CitationContext {
    pub fn new(
        sample_id: impl Into<String>,
        sentences: Vec<String>,
        citance_index: usize,
        label: Option<Label>,
        dataset: DatasetId,
    ) -> Result<Self> {
        let ctx = CitationContext {
            sample_id: sample_id.into(),
            sentences,
            citance_index,
            label,
            dataset,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if self.citance_index >= self.sentences.len() {
            return Err(Error::InvalidCorpus(format!(
                "{}: citance_index {} outside {} sentences",
                self.sample_id,
                self.citance_index,
                self.sentences.len()
            )));
        }
        if count_anchors(&self.sentences[self.citance_index]) != 1 {
            return Err(Error::MissingAnchor {
                ids: vec![self.sample_id.clone()],
            });
        }
        Ok(())
    }

    /// Sentences available before the citance (`b_orig`).
    pub fn before(&self) -> usize {
        self.citance_index
    }

    /// Sentences available after the citance (`v_orig`).
    pub fn after(&self) -> usize {
        self.sentences.len() - self.citance_index - 1
    }

    pub fn citance(&self) -> &str {
        &self.sentences[self.citance_index]
    }

    /// The flattened context: sentences joined with single spaces.
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }

    /// The sub-window with `b` sentences before and `v` after the citance.
    /// Callers must keep `b <= before()` and `v <= after()`.
    pub fn window(&self, b: usize, v: usize) -> &[String] {
        debug_assert!(b <= self.before() && v <= self.after());
        &self.sentences[self.citance_index - b..=self.citance_index + v]
    }

    /// Trim to at most `max_range` sentences on each side.
    pub fn clipped(mut self, max_range: usize) -> Self {
        let b = self.before().min(max_range);
        let v = self.after().min(max_range);
        let start = self.citance_index - b;
        self.sentences = self.sentences[start..=self.citance_index + v].to_vec();
        self.citance_index = b;
        self
    }
}

/// Anything that can be presented to the backbone: an ordered list of
/// sentences with a marked citance.
pub trait ContextWindow {
    fn sample_id(&self) -> &str;
    fn sentences(&self) -> &[String];
    fn citance_index(&self) -> usize;
}

impl ContextWindow for CitationContext {
    fn sample_id(&self) -> &str {
        &self.sample_id
    }

    fn sentences(&self) -> &[String] {
        &self.sentences
    }

    fn citance_index(&self) -> usize {
        self.citance_index
    }
}

/// Number of non-overlapping occurrences of the anchor.
pub fn count_anchors(text: &str) -> usize {
    text.matches(CITATION_TAG).count()
}

/// Replace the character range `anchor_span` with the normalized anchor.
/// Everything outside the span is copied unchanged.
pub fn normalize_anchor(text: &str, anchor_span: Range<usize>) -> Result<String> {
    let len = text.chars().count();
    if anchor_span.start > anchor_span.end || anchor_span.end > len {
        return Err(Error::SpanOutOfBounds {
            start: anchor_span.start,
            end: anchor_span.end,
            len,
        });
    }
    let byte_at = |char_idx: usize| {
        text.char_indices()
            .nth(char_idx)
            .map_or(text.len(), |(b, _)| b)
    };
    let (start, end) = (byte_at(anchor_span.start), byte_at(anchor_span.end));
    let mut out = String::with_capacity(text.len() + CITATION_TAG.len());
    out.push_str(&text[..start]);
    out.push_str(CITATION_TAG);
    out.push_str(&text[end..]);
    Ok(out)
}

/// One line of the JSONL corpus format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub sentences: Vec<String>,
    pub citance_index: usize,
    pub label: Option<String>,
    pub split: SplitName,
}

impl Record {
    pub fn from_context(ctx: &CitationContext, split: SplitName) -> Record {
        Record {
            id: ctx.sample_id.clone(),
            sentences: ctx.sentences.clone(),
            citance_index: ctx.citance_index,
            label: ctx.label.map(|l| l.name().to_string()),
            split,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub dataset: DatasetId,
    pub train: Vec<CitationContext>,
    pub validation: Vec<CitationContext>,
    pub test: Vec<CitationContext>,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn split(&self, name: SplitName) -> &[CitationContext] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn iter_named(&self) -> impl Iterator<Item = (SplitName, &CitationContext)> {
        self.train
            .iter()
            .map(|c| (SplitName::Train, c))
            .chain(self.validation.iter().map(|c| (SplitName::Validation, c)))
            .chain(self.test.iter().map(|c| (SplitName::Test, c)))
    }

    /// Ids are disjoint across splits and every sample carries a label.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let mut dupes = Vec::new();
        let mut unlabeled = Vec::new();
        for (_, ctx) in self.iter_named() {
            if !seen.insert(ctx.sample_id.as_str()) {
                dupes.push(ctx.sample_id.clone());
            }
            if ctx.label.is_none() {
                unlabeled.push(ctx.sample_id.clone());
            }
        }
        if !dupes.is_empty() {
            return Err(Error::InvalidCorpus(format!("duplicate sample ids: {dupes:?}")));
        }
        if !unlabeled.is_empty() {
            return Err(Error::InvalidCorpus(format!("unlabeled samples: {unlabeled:?}")));
        }
        Ok(())
    }

    /// Per-class counts over one split, in label order.
    pub fn label_counts(&self, name: SplitName) -> [usize; Label::COUNT] {
        let mut counts = [0; Label::COUNT];
        for ctx in self.split(name) {
            if let Some(label) = ctx.label {
                counts[label.index()] += 1;
            }
        }
        counts
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub max_range: usize,
    pub validation_fraction: f64,
    pub split_seed: u64,
    /// Reserve a validation split from train when the file has none and the
    /// release is one that ships without it.
    pub reserve_missing_validation: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            max_range: DEFAULT_MAX_RANGE,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            split_seed: 0,
            reserve_missing_validation: true,
        }
    }
}

pub fn load_dataset(path: impl AsRef<Path>, schema: DatasetId) -> Result<DatasetSplit> {
    load_dataset_with(path, schema, &LoadOptions::default())
}

pub fn load_dataset_with(
    path: impl AsRef<Path>,
    schema: DatasetId,
    opts: &LoadOptions,
) -> Result<DatasetSplit> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let mut split = DatasetSplit {
        dataset: schema,
        ..Default::default()
    };
    for (name, ctx) in records_to_contexts(records, schema, opts.max_range)? {
        match name {
            SplitName::Train => split.train.push(ctx),
            SplitName::Validation => split.validation.push(ctx),
            SplitName::Test => split.test.push(ctx),
        }
    }
    if opts.reserve_missing_validation
        && split.validation.is_empty()
        && schema.reserves_validation()
        && !split.train.is_empty()
    {
        let train = std::mem::take(&mut split.train);
        let (train, validation) =
            reserve_validation(train, opts.validation_fraction, opts.split_seed)?;
        split.train = train;
        split.validation = validation;
    }
    split.validate()?;
    Ok(split)
}

/// Load every record regardless of split, for prediction inputs that may be
/// unlabeled.
pub fn load_contexts(path: impl AsRef<Path>, schema: DatasetId) -> Result<Vec<CitationContext>> {
    let path = path.as_ref();
    let records = read_records(path)?;
    Ok(records_to_contexts(records, schema, DEFAULT_MAX_RANGE)?
        .into_iter()
        .map(|(_, ctx)| ctx)
        .collect())
}

fn read_records(path: &Path) -> Result<Vec<(usize, Record)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        if record.citance_index >= record.sentences.len() {
            return Err(Error::MalformedRecord {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!(
                    "citance_index {} outside {} sentences",
                    record.citance_index,
                    record.sentences.len()
                ),
            });
        }
        records.push((i + 1, record));
    }
    if records.is_empty() {
        return Err(Error::NoRecords {
            path: path.to_path_buf(),
        });
    }
    Ok(records)
}

fn records_to_contexts(
    records: Vec<(usize, Record)>,
    schema: DatasetId,
    max_range: usize,
) -> Result<Vec<(SplitName, CitationContext)>> {
    let mut missing_anchor = Vec::new();
    let mut out = Vec::with_capacity(records.len());
    for (_, record) in records {
        let label = record.label.as_deref().map(Label::parse).transpose()?;
        if count_anchors(&record.sentences[record.citance_index]) != 1 {
            missing_anchor.push(record.id.clone());
            continue;
        }
        let ctx = CitationContext {
            sample_id: record.id,
            sentences: record.sentences,
            citance_index: record.citance_index,
            label,
            dataset: schema,
        }
        .clipped(max_range);
        out.push((record.split, ctx));
    }
    if !missing_anchor.is_empty() {
        return Err(Error::MissingAnchor { ids: missing_anchor });
    }
    Ok(out)
}

pub fn save_dataset(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (name, ctx) in split.iter_named() {
        let line = serde_json::to_string(&Record::from_context(ctx, name))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Hold out `floor(fraction * n)` training samples as validation data,
/// stratified by label with largest-remainder allocation so that each class
/// gets within one sample of its exact proportional share.
pub fn reserve_validation(
    train: Vec<CitationContext>,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<CitationContext>, Vec<CitationContext>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let target = (fraction * train.len() as f64 + 1e-9).floor() as usize;

    let mut by_class: BTreeMap<Option<Label>, Vec<usize>> = BTreeMap::new();
    for (i, ctx) in train.iter().enumerate() {
        by_class.entry(ctx.label).or_default().push(i);
    }

    let mut quotas: Vec<(Option<Label>, usize, f64)> = by_class
        .iter()
        .map(|(label, members)| {
            let exact = fraction * members.len() as f64;
            let base = (exact + 1e-9).floor();
            (*label, base as usize, exact - base)
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| quotas[b].2.total_cmp(&quotas[a].2).then(a.cmp(&b)));
    for &k in order.iter().take(target.saturating_sub(assigned)) {
        quotas[k].1 += 1;
    }

    let mut rng = rng::global(seed, Stream::Split, 0);
    let mut held_out = vec![false; train.len()];
    for (label, quota, _) in quotas {
        let mut members = by_class[&label].clone();
        members.shuffle(&mut rng);
        for &i in members.iter().take(quota) {
            held_out[i] = true;
        }
    }

    let (mut kept, mut validation) = (Vec::new(), Vec::new());
    for (ctx, out) in train.into_iter().zip(held_out) {
        if out {
            validation.push(ctx);
        } else {
            kept.push(ctx);
        }
    }
    Ok((kept, validation))
}
