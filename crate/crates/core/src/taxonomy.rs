//! Unified dialect and regional-language label sets.
//!
//! A [`Taxonomy`] holds, per [`LanguageGroup`], the ordered list of canonical
//! class names plus one [`LabelMap`] per source dataset that translates the
//! dataset's raw label strings onto those classes.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Sentinel used in label maps for raw labels that must be dropped.
pub const EXCLUDE: &str = "EXCLUDE";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("unknown language group: {0}")]
    UnknownGroup(String),
    #[error("no label map registered for dataset {dataset_id} in group {group}")]
    NoLabelMap { group: LanguageGroup, dataset_id: String },
    #[error("raw label {raw:?} of dataset {dataset_id} is not covered by its label map")]
    UnmappedLabel { dataset_id: String, raw: String },
    #[error("label map of dataset {dataset_id} points at {target:?}, which is not a {group} class")]
    InvalidTarget {
        group: LanguageGroup,
        dataset_id: String,
        target: String,
    },
}

/// The eleven language groups of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageGroup {
    English,
    Arabic,
    MandarinCantonese,
    Tibetan,
    Indic,
    Thai,
    Spanish,
    French,
    German,
    Italian,
    BrazilianPortuguese,
}

impl LanguageGroup {
    pub const ALL: [LanguageGroup; 11] = [
        LanguageGroup::English,
        LanguageGroup::Arabic,
        LanguageGroup::MandarinCantonese,
        LanguageGroup::Tibetan,
        LanguageGroup::Indic,
        LanguageGroup::Thai,
        LanguageGroup::Spanish,
        LanguageGroup::French,
        LanguageGroup::German,
        LanguageGroup::Italian,
        LanguageGroup::BrazilianPortuguese,
    ];

    /// Stable identifier, safe to use as a file name.
    pub fn as_str(self) -> &'static str {
        match self {
            LanguageGroup::English => "english",
            LanguageGroup::Arabic => "arabic",
            LanguageGroup::MandarinCantonese => "mandarin_cantonese",
            LanguageGroup::Tibetan => "tibetan",
            LanguageGroup::Indic => "indic",
            LanguageGroup::Thai => "thai",
            LanguageGroup::Spanish => "spanish",
            LanguageGroup::French => "french",
            LanguageGroup::German => "german",
            LanguageGroup::Italian => "italian",
            LanguageGroup::BrazilianPortuguese => "brazilian_portuguese",
        }
    }

    /// Number of classes the group must carry.
    pub fn expected_class_count(self) -> usize {
        match self {
            LanguageGroup::English => 16,
            LanguageGroup::Arabic => 5,
            LanguageGroup::MandarinCantonese => 8,
            LanguageGroup::Tibetan => 3,
            LanguageGroup::Indic => 23,
            LanguageGroup::Thai => 4,
            LanguageGroup::Spanish => 6,
            LanguageGroup::French => 4,
            LanguageGroup::German => 5,
            LanguageGroup::Italian => 3,
            LanguageGroup::BrazilianPortuguese => 3,
        }
    }
}

impl fmt::Display for LanguageGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageGroup {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageGroup::ALL
            .iter()
            .copied()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| TaxonomyError::UnknownGroup(s.to_string()))
    }
}

/// A canonical class of one language group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialectLabel {
    pub group: LanguageGroup,
    pub name: String,
    pub index: usize,
}

/// Right-hand side of a label map entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum LabelTarget {
    Label(String),
    Exclude,
}

impl From<String> for LabelTarget {
    fn from(s: String) -> Self {
        if s == EXCLUDE {
            LabelTarget::Exclude
        } else {
            LabelTarget::Label(s)
        }
    }
}

impl From<LabelTarget> for String {
    fn from(t: LabelTarget) -> Self {
        match t {
            LabelTarget::Label(s) => s,
            LabelTarget::Exclude => EXCLUDE.to_string(),
        }
    }
}

/// What to do with a raw label that has no explicit entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Unlisted raw labels are an error.
    #[default]
    Reject,
    /// Raw labels spelled exactly like a canonical class map onto it.
    Identity,
}

/// Per-dataset translation of raw labels onto one group's classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub dataset_id: String,
    pub group: LanguageGroup,
    #[serde(default)]
    pub fallback: Fallback,
    #[serde(default)]
    pub entries: BTreeMap<String, LabelTarget>,
}

impl LabelMap {
    pub fn new(dataset_id: impl Into<String>, group: LanguageGroup) -> Self {
        LabelMap {
            dataset_id: dataset_id.into(),
            group,
            fallback: Fallback::Reject,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(dataset_id: impl Into<String>, group: LanguageGroup) -> Self {
        LabelMap {
            fallback: Fallback::Identity,
            ..LabelMap::new(dataset_id, group)
        }
    }

    pub fn with(mut self, raw: impl Into<String>, target: LabelTarget) -> Self {
        self.entries.insert(raw.into(), target);
        self
    }
}

/// Outcome of resolving one raw label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolved {
    Label(DialectLabel),
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupTaxonomy {
    pub group: LanguageGroup,
    labels: Vec<DialectLabel>,
    pub maps: Vec<LabelMap>,
}

impl GroupTaxonomy {
    pub fn labels(&self) -> &[DialectLabel] {
        &self.labels
    }
}

/// A single entry of a validation report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub group: LanguageGroup,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.group, self.message)
    }
}

/// Versioned collection of per-group class lists and label maps.
///
/// Immutable once built; every lookup borrows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub version: String,
    groups: BTreeMap<LanguageGroup, GroupTaxonomy>,
}

impl Taxonomy {
    pub fn new(version: impl Into<String>) -> Self {
        Taxonomy {
            version: version.into(),
            groups: BTreeMap::new(),
        }
    }

    /// Registers a group. Class indices follow the order of `names`.
    pub fn insert_group<S: Into<String>>(
        &mut self,
        group: LanguageGroup,
        names: impl IntoIterator<Item = S>,
        maps: Vec<LabelMap>,
    ) {
        let labels = names
            .into_iter()
            .enumerate()
            .map(|(index, name)| DialectLabel {
                group,
                name: name.into(),
                index,
            })
            .collect();
        self.groups.insert(
            group,
            GroupTaxonomy {
                group,
                labels,
                maps,
            },
        );
    }

    pub fn groups(&self) -> impl Iterator<Item = &GroupTaxonomy> {
        self.groups.values()
    }

    pub fn group(&self, group: LanguageGroup) -> Result<&GroupTaxonomy, TaxonomyError> {
        self.groups
            .get(&group)
            .ok_or_else(|| TaxonomyError::UnknownGroup(group.as_str().to_string()))
    }

    /// Ordered class list of `group`.
    pub fn canonical_labels(&self, group: LanguageGroup) -> Result<&[DialectLabel], TaxonomyError> {
        self.group(group).map(GroupTaxonomy::labels)
    }

    pub fn class_names(&self, group: LanguageGroup) -> Result<Vec<String>, TaxonomyError> {
        Ok(self
            .canonical_labels(group)?
            .iter()
            .map(|l| l.name.clone())
            .collect())
    }

    pub fn label(&self, group: LanguageGroup, name: &str) -> Option<&DialectLabel> {
        self.groups
            .get(&group)?
            .labels
            .iter()
            .find(|l| l.name == name)
    }

    pub fn label_map(&self, group: LanguageGroup, dataset_id: &str) -> Result<&LabelMap, TaxonomyError> {
        self.group(group)?
            .maps
            .iter()
            .find(|m| m.dataset_id == dataset_id)
            .ok_or_else(|| TaxonomyError::NoLabelMap {
                group,
                dataset_id: dataset_id.to_string(),
            })
    }

    /// Resolves `raw` through `map`. Unknown labels fail loudly.
    pub fn map_raw_label(&self, map: &LabelMap, raw: &str) -> Result<Resolved, TaxonomyError> {
        let target = match map.entries.get(raw) {
            Some(LabelTarget::Exclude) => return Ok(Resolved::Excluded),
            Some(LabelTarget::Label(name)) => name.as_str(),
            None if map.fallback == Fallback::Identity => raw,
            None => {
                return Err(TaxonomyError::UnmappedLabel {
                    dataset_id: map.dataset_id.clone(),
                    raw: raw.to_string(),
                })
            }
        };
        match self.label(map.group, target) {
            Some(label) => Ok(Resolved::Label(label.clone())),
            None if map.entries.contains_key(raw) => Err(TaxonomyError::InvalidTarget {
                group: map.group,
                dataset_id: map.dataset_id.clone(),
                target: target.to_string(),
            }),
            None => Err(TaxonomyError::UnmappedLabel {
                dataset_id: map.dataset_id.clone(),
                raw: raw.to_string(),
            }),
        }
    }

    /// Looks up the map for `(group, dataset_id)` and resolves `raw`.
    pub fn resolve(&self, group: LanguageGroup, dataset_id: &str, raw: &str) -> Result<Resolved, TaxonomyError> {
        let map = self.label_map(group, dataset_id)?;
        self.map_raw_label(map, raw)
    }

    /// Consistency checks over the whole taxonomy. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        for g in self.groups.values() {
            let mut push = |message: String| {
                violations.push(Violation {
                    group: g.group,
                    message,
                })
            };
            let expected = g.group.expected_class_count();
            if g.labels.len() != expected {
                push(format!("has {} classes, expected {}", g.labels.len(), expected));
            }
            let mut seen = BTreeSet::new();
            for (i, l) in g.labels.iter().enumerate() {
                if !seen.insert(l.name.as_str()) {
                    push(format!("duplicate class {:?}", l.name));
                }
                if l.name == EXCLUDE {
                    push(format!("{EXCLUDE} used as a class name"));
                }
                if l.index != i || l.group != g.group {
                    push(format!("class {:?} has inconsistent index or group", l.name));
                }
            }
            let mut datasets = BTreeSet::new();
            for m in &g.maps {
                if !datasets.insert(m.dataset_id.as_str()) {
                    push(format!("dataset {} has more than one label map", m.dataset_id));
                }
                if m.group != g.group {
                    push(format!("label map {} declares group {}", m.dataset_id, m.group));
                }
                for (raw, target) in &m.entries {
                    if let LabelTarget::Label(name) = target {
                        if !seen.contains(name.as_str()) {
                            push(format!(
                                "label map {} sends {:?} to unknown class {:?}",
                                m.dataset_id, raw, name
                            ));
                        }
                    }
                }
            }
        }
        violations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn arabic() -> Taxonomy {
        let mut t = Taxonomy::new("test");
        t.insert_group(
            LanguageGroup::Arabic,
            ["Egyptian", "Levantine", "Maghrebi", "Peninsular", "MSA"],
            vec![LabelMap::identity("MASC", LanguageGroup::Arabic)
                .with("Saudi", LabelTarget::Label("Peninsular".into()))
                .with("Unknown", LabelTarget::Exclude)],
        );
        t
    }

    #[test]
    fn group_ids_round_trip() {
        for g in LanguageGroup::ALL {
            assert_eq!(g.as_str().parse::<LanguageGroup>().unwrap(), g);
        }
        let err = "klingon".parse::<LanguageGroup>().unwrap_err();
        assert!(err.to_string().contains("unknown language group"));
    }

    #[test]
    fn class_count_table_sums() {
        let total: usize = LanguageGroup::ALL.iter().map(|g| g.expected_class_count()).sum();
        assert_eq!(total, 16 + 5 + 8 + 3 + 23 + 4 + 6 + 4 + 5 + 3 + 3);
    }

    #[test]
    fn resolves_explicit_identity_and_excluded() {
        let t = arabic();
        let map = t.label_map(LanguageGroup::Arabic, "MASC").unwrap();
        match t.map_raw_label(map, "Saudi").unwrap() {
            Resolved::Label(l) => assert_eq!((l.name.as_str(), l.index), ("Peninsular", 3)),
            other => panic!("{other:?}"),
        }
        match t.map_raw_label(map, "MSA").unwrap() {
            Resolved::Label(l) => assert_eq!(l.index, 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.map_raw_label(map, "Unknown").unwrap(), Resolved::Excluded);
    }

    #[test]
    fn unmapped_label_is_an_error_naming_the_raw() {
        let mut t = arabic();
        t.insert_group(
            LanguageGroup::Thai,
            ["Khummuang", "Korat", "Pattani", "Thai-central"],
            vec![LabelMap::new("TDC", LanguageGroup::Thai)],
        );
        let map = t.label_map(LanguageGroup::Thai, "TDC").unwrap();
        let err = t.map_raw_label(map, "Isan").unwrap_err();
        assert!(err.to_string().contains("\"Isan\""), "{err}");
        assert!(matches!(
            t.resolve(LanguageGroup::Thai, "nope", "x"),
            Err(TaxonomyError::NoLabelMap { .. })
        ));
    }

    #[test]
    fn validation_flags_bad_target_and_count() {
        let t = arabic();
        assert!(t.validate().is_empty());

        let mut bad = arabic();
        bad.insert_group(
            LanguageGroup::Arabic,
            ["Egyptian", "Levantine", "Maghrebi", "Peninsular", "MSA"],
            vec![LabelMap::new("MASC", LanguageGroup::Arabic).with("x", LabelTarget::Label("Klingon".into()))],
        );
        let v = bad.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("Klingon"));

        let mut short = Taxonomy::new("t");
        short.insert_group(LanguageGroup::Tibetan, ["U-Tsang", "Kham"], vec![]);
        let v = short.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("expected 3"));
    }

    #[test]
    fn label_target_sentinel_round_trip() {
        assert_eq!(LabelTarget::from(String::from(EXCLUDE)), LabelTarget::Exclude);
        assert_eq!(String::from(LabelTarget::Label("Kham".into())), "Kham");
    }
}
