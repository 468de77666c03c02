//! Packed little-endian binary formats.
//!
//! Scans: four f32 per point (x, y, z, intensity). Labels: one u32 per
//! point, semantic class in the low 16 bits, instance bits dropped on read
//! and zeroed on write. Predictions: u16 class + f32 confidence per point.
//! Provenance: one byte per point. Checkpoints: u64 length header followed
//! by f32 parameters.

use std::fs;
use std::path::Path;

use crate::cloud::{LabelArray, Point, PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::learn::ParamVector;
use crate::mix::Provenance;
use crate::scalar::Scalar;
use crate::select::Prediction;

const SCAN_RECORD: usize = 16;
const LABEL_RECORD: usize = 4;
const PREDICTION_RECORD: usize = 6;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a packed scan file. Every 16-byte record decodes as four
/// little-endian f32 values in file order.
pub fn read_scan<S: Scalar>(path: impl AsRef<Path>) -> Result<PointCloud<S>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() % SCAN_RECORD != 0 {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
            record: SCAN_RECORD as u64,
        });
    }
    let mut points = Vec::with_capacity(bytes.len() / SCAN_RECORD);
    for (index, record) in bytes.chunks_exact(SCAN_RECORD).enumerate() {
        let field = |i: usize| {
            f32::from_le_bytes([record[4 * i], record[4 * i + 1], record[4 * i + 2], record[4 * i + 3]])
        };
        let (x, y, z, intensity) = (field(0), field(1), field(2), field(3));
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(Error::NonFiniteCoordinate { index });
        }
        points.push(Point::new(
            S::from(x).unwrap(),
            S::from(y).unwrap(),
            S::from(z).unwrap(),
            S::from(intensity).unwrap(),
        ));
    }
    Ok(PointCloud::new(points))
}

/// Writes a scan in the packed format. `read_scan(write_scan(c))`
/// reproduces `c` bit-exactly for f32 clouds.
pub fn write_scan<S: Scalar>(cloud: &PointCloud<S>, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(cloud.len() * SCAN_RECORD);
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z, p.intensity] {
            bytes.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
        }
    }
    write_bytes(path.as_ref(), &bytes)
}

/// Reads a label file without any ignore mapping: one u32 per point, the
/// semantic class being its low 16 bits.
pub fn read_labels_raw(path: impl AsRef<Path>, point_count: usize) -> Result<LabelArray> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() != point_count * LABEL_RECORD {
        return Err(Error::CountMismatch {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
            expected: point_count,
        });
    }
    Ok(bytes
        .chunks_exact(LABEL_RECORD)
        .map(|r| u32::from_le_bytes([r[0], r[1], r[2], r[3]]) & 0xFFFF)
        .collect())
}

/// Replaces the dataset's "unlabeled" id with [`IGNORE_LABEL`].
pub fn mask_unlabeled(labels: &LabelArray, unlabeled_id: u32) -> LabelArray {
    labels
        .iter()
        .map(|&l| if l == unlabeled_id { IGNORE_LABEL } else { l })
        .collect()
}

/// Reads a label file and masks the configured unlabeled id to
/// [`IGNORE_LABEL`].
pub fn read_labels(
    path: impl AsRef<Path>,
    point_count: usize,
    unlabeled_id: u32,
) -> Result<LabelArray> {
    Ok(mask_unlabeled(&read_labels_raw(path, point_count)?, unlabeled_id))
}

/// Writes labels with instance bits zeroed; [`IGNORE_LABEL`] serializes as
/// the configured unlabeled id.
pub fn write_labels(
    labels: &LabelArray,
    unlabeled_id: u32,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(labels.len() * LABEL_RECORD);
    for &label in labels.iter() {
        let raw = if label == IGNORE_LABEL {
            unlabeled_id
        } else {
            label
        } & 0xFFFF;
        bytes.extend_from_slice(&raw.to_le_bytes());
    }
    write_bytes(path.as_ref(), &bytes)
}

/// Reads a prediction file: per point a little-endian u16 class id plus an
/// f32 confidence.
pub fn read_predictions<S: Scalar>(path: impl AsRef<Path>) -> Result<Prediction<S>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() % PREDICTION_RECORD != 0 {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
            record: PREDICTION_RECORD as u64,
        });
    }
    let mut classes = Vec::new();
    let mut confidences = Vec::new();
    for record in bytes.chunks_exact(PREDICTION_RECORD) {
        classes.push(u32::from(u16::from_le_bytes([record[0], record[1]])));
        let confidence = f32::from_le_bytes([record[2], record[3], record[4], record[5]]);
        confidences.push(S::from(confidence).unwrap());
    }
    Prediction::new(classes, confidences)
}

pub fn write_predictions<S: Scalar>(
    prediction: &Prediction<S>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut bytes = Vec::with_capacity(prediction.len() * PREDICTION_RECORD);
    for (&class, &confidence) in prediction.classes().iter().zip(prediction.confidences()) {
        bytes.extend_from_slice(&(class as u16).to_le_bytes());
        bytes.extend_from_slice(&confidence.to_f32().unwrap().to_le_bytes());
    }
    write_bytes(path.as_ref(), &bytes)
}

/// Writes the per-point origin mask: 0 for base points, 1 for patch points.
pub fn write_provenance(provenance: &[Provenance], path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = provenance.iter().map(|&p| p as u8).collect();
    write_bytes(path.as_ref(), &bytes)
}

pub fn read_provenance(path: impl AsRef<Path>) -> Result<Vec<Provenance>> {
    let path = path.as_ref();
    read_bytes(path)?
        .iter()
        .enumerate()
        .map(|(index, &b)| match b {
            0 => Ok(Provenance::Base),
            1 => Ok(Provenance::Patch),
            _ => Err(Error::MalformedLine {
                line: index,
                text: format!("provenance byte {b}"),
            }),
        })
        .collect()
}

/// Writes a checkpoint: an 8-byte little-endian length header followed by
/// that many f32 parameters.
pub fn write_checkpoint<S: Scalar>(params: &ParamVector<S>, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + params.len() * 4);
    bytes.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.as_slice() {
        bytes.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
    }
    write_bytes(path.as_ref(), &bytes)
}

pub fn read_checkpoint<S: Scalar>(path: impl AsRef<Path>) -> Result<ParamVector<S>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() < 8 {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
            record: 8,
        });
    }
    let declared = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != declared * 4 {
        return Err(Error::CountMismatch {
            path: path.to_path_buf(),
            len: bytes.len() as u64,
            expected: declared,
        });
    }
    let values = body
        .chunks_exact(4)
        .map(|r| S::from(f32::from_le_bytes([r[0], r[1], r[2], r[3]])).unwrap())
        .collect();
    ParamVector::new(values)
}
