//! Word-level synonym base and stopword set used by keyphrase perturbation.
//!
//! The bundled base is a small hand-curated list of general academic English;
//! a WordNet export in the same `{"word": ["synonym", ...]}` layout can be
//! loaded instead.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const BUILTIN_SYNONYMS: &str = include_str!("../data/synonyms.json");
const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymBase {
    map: BTreeMap<String, Vec<String>>,
    stopwords: HashSet<String>,
}

impl SynonymBase {
    /// Keys and stopwords are lowercased; a word never lists itself, and
    /// words left without synonyms are dropped.
    pub fn new(
        map: impl IntoIterator<Item = (String, Vec<String>)>,
        stopwords: impl IntoIterator<Item = String>,
    ) -> Self {
        let mut clean: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (word, syns) in map {
            let key = word.to_lowercase();
            let entry = clean.entry(key.clone()).or_default();
            for s in syns {
                let s = s.replace('_', " ");
                if !s.is_empty() && s.to_lowercase() != key && !entry.contains(&s) {
                    entry.push(s);
                }
            }
        }
        clean.retain(|_, v| !v.is_empty());
        SynonymBase {
            map: clean,
            stopwords: stopwords.into_iter().map(|w| w.to_lowercase()).collect(),
        }
    }

    pub fn builtin() -> Self {
        let map: BTreeMap<String, Vec<String>> =
            serde_json::from_str(BUILTIN_SYNONYMS).expect("bundled synonym base is valid JSON");
        Self::new(map, parse_stopwords(BUILTIN_STOPWORDS))
    }

    /// Load a JSON synonym map; stopwords default to the bundled list.
    pub fn load(synonyms: impl AsRef<Path>, stopwords: Option<&Path>) -> Result<Self> {
        let path = synonyms.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: BTreeMap<String, Vec<String>> = serde_json::from_str(&text)?;
        let stop = match stopwords {
            Some(p) => parse_stopwords(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => parse_stopwords(BUILTIN_STOPWORDS),
        };
        Ok(Self::new(map, stop))
    }

    /// An empty base: no synonyms, no stopwords.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }

    /// Surface-form lookup, case-insensitive.
    pub fn lookup(&self, word: &str) -> Option<&[String]> {
        self.map.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    /// Every headword with its synonyms, in sorted order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.map.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn parse_stopwords(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}
