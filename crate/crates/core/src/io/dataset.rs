//! Dataset directory layout: `<root>/scans/NNNNNN.bin` paired with
//! `<root>/labels/NNNNNN.label`. The labels directory is optional (target
//! domains may be unlabeled).

use std::fs;
use std::path::{Path, PathBuf};

use super::binary::{read_labels, read_scan};
use crate::cloud::{LabelArray, PointCloud};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const SCAN_DIR: &str = "scans";
pub const LABEL_DIR: &str = "labels";

/// A scan directory opened for reading.
#[derive(Debug, Clone)]
pub struct ScanDataset {
    root: PathBuf,
    scan_paths: Vec<PathBuf>,
    label_paths: Option<Vec<PathBuf>>,
    unlabeled_id: u32,
}

impl ScanDataset {
    /// Lists `scans/*.bin` in name order and pairs each with its label file
    /// when a labels directory exists.
    pub fn open(root: impl AsRef<Path>, unlabeled_id: u32) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let scan_dir = root.join(SCAN_DIR);
        let mut scan_paths: Vec<PathBuf> = fs::read_dir(&scan_dir)
            .map_err(|e| Error::io(&scan_dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "bin"))
            .collect();
        scan_paths.sort();
        if scan_paths.is_empty() {
            return Err(Error::EmptyDataset(root.display().to_string()));
        }

        let label_dir = root.join(LABEL_DIR);
        let label_paths = if label_dir.is_dir() {
            let paths = scan_paths
                .iter()
                .map(|scan| {
                    let stem = scan.file_stem().expect("scan files have names");
                    let label = label_dir.join(stem).with_extension("label");
                    if label.is_file() {
                        Ok(label)
                    } else {
                        Err(Error::MissingLabels(scan.clone()))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Some(paths)
        } else {
            None
        };

        Ok(ScanDataset {
            root,
            scan_paths,
            label_paths,
            unlabeled_id,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.scan_paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scan_paths.is_empty()
    }

    pub fn has_labels(&self) -> bool {
        self.label_paths.is_some()
    }

    pub fn scan_path(&self, index: usize) -> &Path {
        &self.scan_paths[index]
    }

    pub fn load_scan<S: Scalar>(&self, index: usize) -> Result<PointCloud<S>> {
        read_scan(&self.scan_paths[index])
    }

    /// Loads the labels of scan `index` with the unlabeled id masked to
    /// ignore. Errors when the dataset is unlabeled.
    pub fn load_labels(&self, index: usize, point_count: usize) -> Result<LabelArray> {
        let paths = self
            .label_paths
            .as_ref()
            .ok_or_else(|| Error::MissingLabels(self.scan_paths[index].clone()))?;
        read_labels(&paths[index], point_count, self.unlabeled_id)
    }

    /// Loads every scan (and labels when present) into memory.
    pub fn load_all<S: Scalar>(&self) -> Result<Vec<(PointCloud<S>, Option<LabelArray>)>> {
        (0..self.len())
            .map(|index| {
                let cloud = self.load_scan(index)?;
                let labels = if self.has_labels() {
                    Some(self.load_labels(index, cloud.len())?)
                } else {
                    None
                };
                Ok((cloud, labels))
            })
            .collect()
    }
}

/// Writes one scan (and optionally labels) under the dataset layout,
/// creating directories as needed. Files are named `NNNNNN.bin`/`.label`.
pub fn write_scan_pair<S: Scalar>(
    root: impl AsRef<Path>,
    index: usize,
    cloud: &PointCloud<S>,
    labels: Option<&LabelArray>,
    unlabeled_id: u32,
) -> Result<()> {
    let root = root.as_ref();
    let scan_dir = root.join(SCAN_DIR);
    fs::create_dir_all(&scan_dir).map_err(|e| Error::io(&scan_dir, e))?;
    super::binary::write_scan(cloud, scan_dir.join(format!("{index:06}.bin")))?;
    if let Some(labels) = labels {
        let label_dir = root.join(LABEL_DIR);
        fs::create_dir_all(&label_dir).map_err(|e| Error::io(&label_dir, e))?;
        super::binary::write_labels(
            labels,
            unlabeled_id,
            label_dir.join(format!("{index:06}.label")),
        )?;
    }
    Ok(())
}
