//! Line-oriented `class-id count` serialization of a class histogram.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::select::ClassHistogram;

pub fn write_histogram(histogram: &ClassHistogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (class_id, count) in histogram.entries() {
        text.push_str(&format!("{class_id} {count}\n"));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_histogram(path: impl AsRef<Path>) -> Result<ClassHistogram> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut counts = BTreeMap::new();
    for (line_index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let malformed = || Error::MalformedLine {
            line: line_index + 1,
            text: raw.to_string(),
        };
        let class_id: u32 = fields
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(malformed)?;
        let count: u64 = fields
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(malformed)?;
        if fields.next().is_some() {
            return Err(malformed());
        }
        counts.insert(class_id, count);
    }
    Ok(ClassHistogram::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn histogram_round_trips() {
        let histogram = ClassHistogram::from_counts([(1, 10), (4, 2), (2, 88)].into());
        let dir = tempdir().unwrap();
        let path = dir.path().join("hist.txt");
        write_histogram(&histogram, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "1 10\n2 88\n4 2\n");
        assert_eq!(read_histogram(&path).unwrap(), histogram);
    }

    #[test]
    fn malformed_histogram_line_is_an_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("hist.txt");
        std::fs::write(&path, "1 x\n").unwrap();
        assert!(read_histogram(&path).is_err());
    }
}
