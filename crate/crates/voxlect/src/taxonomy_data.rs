//! The shipped taxonomy: one TOML document per language group under
//! `data/taxonomy/`, compiled into the binary.

use std::collections::BTreeMap;

use serde::Deserialize;
use voxlect_core::taxonomy::{Fallback, LabelMap, LabelTarget, LanguageGroup, Taxonomy, Violation};

use crate::error::{Error, Result};

/// Bumped whenever a class list or its order changes; checkpoints record it.
pub const TAXONOMY_VERSION: &str = "1.0.0";

const DOCUMENTS: [(&str, &str); 11] = [
    ("english.toml", include_str!("../data/taxonomy/english.toml")),
    ("arabic.toml", include_str!("../data/taxonomy/arabic.toml")),
    ("mandarin_cantonese.toml", include_str!("../data/taxonomy/mandarin_cantonese.toml")),
    ("tibetan.toml", include_str!("../data/taxonomy/tibetan.toml")),
    ("indic.toml", include_str!("../data/taxonomy/indic.toml")),
    ("thai.toml", include_str!("../data/taxonomy/thai.toml")),
    ("spanish.toml", include_str!("../data/taxonomy/spanish.toml")),
    ("french.toml", include_str!("../data/taxonomy/french.toml")),
    ("german.toml", include_str!("../data/taxonomy/german.toml")),
    ("italian.toml", include_str!("../data/taxonomy/italian.toml")),
    ("brazilian_portuguese.toml", include_str!("../data/taxonomy/brazilian_portuguese.toml")),
];

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupDoc {
    group: LanguageGroup,
    labels: Vec<String>,
    #[serde(default)]
    maps: Vec<MapDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    dataset_id: String,
    #[serde(default)]
    fallback: Fallback,
    #[serde(default)]
    entries: BTreeMap<String, LabelTarget>,
}

/// Parses one group document and adds it to `taxonomy`.
pub fn add_group_document(taxonomy: &mut Taxonomy, name: &str, text: &str) -> Result<LanguageGroup> {
    let doc: GroupDoc = toml::from_str(text).map_err(|e| Error::Invalid(format!("taxonomy document {name}: {e}")))?;
    let maps = doc
        .maps
        .into_iter()
        .map(|m| LabelMap {
            dataset_id: m.dataset_id,
            group: doc.group,
            fallback: m.fallback,
            entries: m.entries.into_iter().collect(),
        })
        .collect();
    taxonomy.insert_group(doc.group, doc.labels, maps);
    Ok(doc.group)
}

/// Builds the shipped taxonomy. Does not validate; see [`validate`].
pub fn builtin() -> Result<Taxonomy> {
    let mut t = Taxonomy::new(TAXONOMY_VERSION);
    for (name, text) in DOCUMENTS {
        add_group_document(&mut t, name, text)?;
    }
    Ok(t)
}

/// Core validation plus a check that every language group is present.
pub fn validate(taxonomy: &Taxonomy) -> Vec<Violation> {
    let mut v = taxonomy.validate();
    for g in LanguageGroup::ALL {
        if taxonomy.group(g).is_err() {
            v.push(Violation {
                group: g,
                message: "group missing from taxonomy".into(),
            });
        }
    }
    v
}

/// Shipped taxonomy, refusing to proceed if it is inconsistent.
pub fn load_validated() -> Result<Taxonomy> {
    let t = builtin()?;
    let v = validate(&t);
    if let Some(first) = v.first() {
        return Err(Error::Invalid(format!("shipped taxonomy is invalid: {first}")));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use voxlect_core::taxonomy::Resolved;

    #[test]
    fn shipped_taxonomy_is_valid() {
        let t = builtin().unwrap();
        assert_eq!(validate(&t), vec![]);
        for g in LanguageGroup::ALL {
            assert_eq!(t.canonical_labels(g).unwrap().len(), g.expected_class_count());
        }
    }

    #[test]
    fn documented_label_orders() {
        let t = builtin().unwrap();
        assert_eq!(
            t.class_names(LanguageGroup::Arabic).unwrap(),
            ["Egyptian", "Levantine", "Maghrebi", "Peninsular", "MSA"]
        );
        assert_eq!(
            t.class_names(LanguageGroup::Thai).unwrap(),
            ["Khummuang", "Korat", "Pattani", "Thai-central"]
        );
        assert_eq!(t.class_names(LanguageGroup::Tibetan).unwrap(), ["U-Tsang", "Kham", "Amdo"]);
    }

    #[test]
    fn shipped_exclusions_and_merges() {
        let t = builtin().unwrap();
        assert_eq!(
            t.resolve(LanguageGroup::English, "CommonVoice-en", "British").unwrap(),
            Resolved::Excluded
        );
        assert_eq!(
            t.resolve(LanguageGroup::Spanish, "Latin-American-Spanish", "Colombian").unwrap(),
            Resolved::Excluded
        );
        for raw in ["Beijing Mandarin", "Northeastern Mandarin", "Standard Mandarin"] {
            match t.resolve(LanguageGroup::MandarinCantonese, "KeSpeech", raw).unwrap() {
                Resolved::Label(l) => assert_eq!(l.name, "Mandarin"),
                other => panic!("{other:?}"),
            }
        }
        match t.resolve(LanguageGroup::Tibetan, "TIBMD", "Amdo").unwrap() {
            Resolved::Label(l) => assert_eq!((l.name.as_str(), l.index), ("Amdo", 2)),
            other => panic!("{other:?}"),
        }
        assert!(t.resolve(LanguageGroup::Tibetan, "TIBMD", "Lhasa").is_err());
    }

    #[test]
    fn bad_documents_are_reported() {
        let mut t = Taxonomy::new("x");
        let err = add_group_document(&mut t, "bad.toml", "group = \"klingon\"\nlabels = []").unwrap_err();
        assert!(err.to_string().contains("bad.toml"));
        add_group_document(
            &mut t,
            "arabic.toml",
            "group = \"arabic\"\nlabels = [\"Egyptian\"]\n[[maps]]\ndataset_id = \"MASC\"\nentries = { \"x\" = \"Klingon\" }\n",
        )
        .unwrap();
        let v = validate(&t);
        assert!(v.iter().any(|v| v.message.contains("Klingon")));
        assert!(v.iter().any(|v| v.message.contains("expected 5")));
    }
}
