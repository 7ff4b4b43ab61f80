use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// The six citation functions. Declaration order is the classifier output
/// index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Background,
    CompareContrast,
    Uses,
    Motivation,
    Extend,
    Future,
}

impl Label {
    pub const ALL: [Label; 6] = [
        Label::Background,
        Label::CompareContrast,
        Label::Uses,
        Label::Motivation,
        Label::Extend,
        Label::Future,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Background => "Background",
            Label::CompareContrast => "Compare/Contrast",
            Label::Uses => "Uses",
            Label::Motivation => "Motivation",
            Label::Extend => "Extend",
            Label::Future => "Future",
        }
    }

    /// Case- and punctuation-insensitive lookup. Accepts the names used by
    /// the public releases, including FOCAL's three sentiment sub-classes of
    /// Compare/Contrast, which are merged into one class.
    pub fn parse(value: &str) -> Result<Label, Error> {
        let key: String = value
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        let label = match key.as_str() {
            "background" => Label::Background,
            "comparecontrast" | "compareorcontrast" | "comparescontrasts" | "compare"
            | "contrast" | "comparison" | "similarities" | "similarity" | "differences"
            | "difference" | "neutral" | "neutrality" | "comparecontrastsimilarities"
            | "comparecontrastdifferences" | "comparecontrastneutral" => Label::CompareContrast,
            "uses" | "use" | "usage" => Label::Uses,
            "motivation" => Label::Motivation,
            "extend" | "extends" | "extension" => Label::Extend,
            "future" | "futurework" => Label::Future,
            _ => {
                return Err(Error::UnknownLabel {
                    value: value.to_string(),
                })
            }
        };
        Ok(label)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::parse(s)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Label::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_defines_index() {
        for (i, label) in Label::ALL.iter().enumerate() {
            assert_eq!(label.index(), i);
            assert_eq!(Label::from_index(i), Some(*label));
        }
        assert_eq!(Label::from_index(6), None);
    }

    #[test]
    fn parsing_is_case_insensitive() {
        assert_eq!(Label::parse("BACKGROUND").unwrap(), Label::Background);
        assert_eq!(Label::parse("CompareOrContrast").unwrap(), Label::CompareContrast);
        assert_eq!(Label::parse("COMPARES_CONTRASTS").unwrap(), Label::CompareContrast);
        assert_eq!(Label::parse("Extends").unwrap(), Label::Extend);
        assert_eq!(Label::parse("FutureWork").unwrap(), Label::Future);
    }

    #[test]
    fn focal_sentiment_subclasses_merge() {
        for name in ["Similarities", "Differences", "Neutral"] {
            assert_eq!(Label::parse(name).unwrap(), Label::CompareContrast);
        }
    }

    #[test]
    fn unknown_label_names_value() {
        let err = Label::parse("Critique").unwrap_err();
        assert!(err.to_string().contains("Critique"));
    }

    #[test]
    fn display_round_trips() {
        for label in Label::ALL {
            assert_eq!(Label::parse(&label.to_string()).unwrap(), label);
        }
    }
}
