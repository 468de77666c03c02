//! Bit-exact readers and writers for the binary scan, label, prediction,
//! provenance and checkpoint formats, plus class-map parsing, PLY export,
//! the histogram text format and the dataset directory layout.

mod binary;
mod class_map;
mod dataset;
mod histogram;
mod ply;

pub use binary::{
    mask_unlabeled, read_checkpoint, read_labels, read_labels_raw, read_predictions,
    read_provenance, read_scan, write_checkpoint, write_labels, write_predictions,
    write_provenance, write_scan,
};
pub use class_map::ClassMap;
pub use dataset::{write_scan_pair, ScanDataset, LABEL_DIR, SCAN_DIR};
pub use histogram::{read_histogram, write_histogram};
pub use ply::{export_ply, Palette};
