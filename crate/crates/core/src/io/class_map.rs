//! Class-map configuration: a line-oriented `src dst` text format that maps
//! one dataset's label ids onto another's, making source and target labels
//! compatible.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::cloud::{ClassSet, LabelArray, IGNORE_LABEL};
use crate::error::{Error, Result};

/// Total mapping from source class ids to target class ids (or ignore).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    pub name: String,
    entries: BTreeMap<u32, u32>,
}

impl ClassMap {
    pub fn from_entries(name: impl Into<String>, entries: BTreeMap<u32, u32>) -> Self {
        ClassMap {
            name: name.into(),
            entries,
        }
    }

    /// Parses `src dst` lines. Empty lines and lines starting with `#` are
    /// skipped; a trailing `# comment` is allowed. The literal `ignore`
    /// maps a source class to the ignore label.
    pub fn parse(text: &str, name: impl Into<String>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (line_index, raw) in text.lines().enumerate() {
            let line_no = line_index + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let body = line.split('#').next().unwrap_or("").trim();
            let mut fields = body.split_whitespace();
            let malformed = || Error::MalformedLine {
                line: line_no,
                text: raw.to_string(),
            };
            let src: u32 = fields
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(malformed)?;
            let dst_token = fields.next().ok_or_else(malformed)?;
            let dst: u32 = if dst_token.eq_ignore_ascii_case("ignore") {
                IGNORE_LABEL
            } else {
                dst_token.parse().map_err(|_| malformed())?
            };
            if fields.next().is_some() {
                return Err(malformed());
            }
            if entries.insert(src, dst).is_some() {
                return Err(Error::DuplicateSource {
                    line: line_no,
                    id: src,
                });
            }
        }
        Ok(ClassMap {
            name: name.into(),
            entries,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(&text, name)
    }

    pub fn get(&self, src: u32) -> Option<u32> {
        self.entries.get(&src).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.entries.iter().map(|(&s, &d)| (s, d))
    }

    /// Checks totality over the declared source classes and that every
    /// target id lands in the target set or ignore.
    pub fn validate_against(&self, source: &ClassSet, target: &ClassSet) -> Result<()> {
        for id in source.ids() {
            match self.get(id) {
                None => {
                    return Err(Error::IncompleteMap {
                        name: self.name.clone(),
                        id,
                    })
                }
                Some(dst) if dst != IGNORE_LABEL && !target.contains(dst) => {
                    return Err(Error::UnknownClassId { id: dst, index: 0 })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Elementwise substitution; the ignore label always maps to itself.
    pub fn apply(&self, labels: &LabelArray) -> Result<LabelArray> {
        labels
            .iter()
            .map(|&label| {
                if label == IGNORE_LABEL {
                    Ok(IGNORE_LABEL)
                } else {
                    self.get(label).ok_or(Error::UnmappedClass { id: label })
                }
            })
            .collect::<Result<Vec<u32>>>()
            .map(LabelArray::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_pairs() {
        let map = ClassMap::parse("0 0\n1 2\n", "m").unwrap();
        assert_eq!(map.get(0), Some(0));
        assert_eq!(map.get(1), Some(2));
        assert_eq!(map.len(), 2);
    }

    #[test]
    fn parses_comments_and_ignore() {
        let text = "# header\n0 5 # road\n1 ignore\n\n2 5\n";
        let map = ClassMap::parse(text, "m").unwrap();
        assert_eq!(map.get(0), Some(5));
        assert_eq!(map.get(1), Some(IGNORE_LABEL));
        assert_eq!(map.get(2), Some(5));
    }

    #[test]
    fn duplicate_source_is_an_error() {
        assert!(matches!(
            ClassMap::parse("1 2\n1 3\n", "m"),
            Err(Error::DuplicateSource { line: 2, id: 1 })
        ));
    }

    #[test]
    fn malformed_lines_are_errors() {
        assert!(ClassMap::parse("1\n", "m").is_err());
        assert!(ClassMap::parse("a b\n", "m").is_err());
        assert!(ClassMap::parse("1 2 3\n", "m").is_err());
    }

    #[test]
    fn incomplete_map_is_detected() {
        let source = ClassSet::new(vec![(0, "a".into()), (1, "b".into())]).unwrap();
        let target = ClassSet::new(vec![(5, "x".into())]).unwrap();
        let map = ClassMap::parse("0 5\n", "m").unwrap();
        assert!(matches!(
            map.validate_against(&source, &target),
            Err(Error::IncompleteMap { id: 1, .. })
        ));
        let full = ClassMap::parse("0 5\n1 ignore\n", "m").unwrap();
        assert!(full.validate_against(&source, &target).is_ok());
    }

    #[test]
    fn apply_substitutes_elementwise() {
        let map = ClassMap::parse("0 5\n1 7\n", "m").unwrap();
        let labels = LabelArray::new(vec![1, 1, 0]);
        assert_eq!(map.apply(&labels).unwrap().as_slice(), &[7, 7, 5]);
    }

    #[test]
    fn apply_keeps_ignore() {
        let map = ClassMap::parse("0 5\n", "m").unwrap();
        let labels = LabelArray::new(vec![IGNORE_LABEL]);
        assert_eq!(map.apply(&labels).unwrap().as_slice(), &[IGNORE_LABEL]);
    }

    #[test]
    fn apply_rejects_unmapped_labels() {
        let map = ClassMap::parse("0 5\n", "m").unwrap();
        let labels = LabelArray::new(vec![3]);
        assert!(matches!(
            map.apply(&labels),
            Err(Error::UnmappedClass { id: 3 })
        ));
    }

    #[test]
    fn identity_map_leaves_labels_unchanged() {
        let map = ClassMap::parse("0 0\n1 1\n2 2\n", "id").unwrap();
        let labels = LabelArray::new(vec![2, 0, 1, 2]);
        assert_eq!(map.apply(&labels).unwrap(), labels);
    }

    #[test]
    fn composition_matches_table_lookup() {
        let first = ClassMap::parse("0 1\n1 2\n2 ignore\n", "first").unwrap();
        let second = ClassMap::parse("1 10\n2 20\n", "second").unwrap();
        // composed by table lookup
        let composed: BTreeMap<u32, u32> = first
            .entries()
            .map(|(s, mid)| {
                let dst = if mid == IGNORE_LABEL {
                    IGNORE_LABEL
                } else {
                    second.get(mid).unwrap()
                };
                (s, dst)
            })
            .collect();
        let composed = ClassMap::from_entries("composed", composed);
        let labels = LabelArray::new(vec![0, 1, 2, 0]);
        let stepwise = second.apply(&first.apply(&labels).unwrap()).unwrap();
        assert_eq!(stepwise, composed.apply(&labels).unwrap());
    }
}
