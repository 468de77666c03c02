//! ASCII PLY export of a labeled cloud with a per-class color palette, for
//! eyeballing mixed samples in any point-cloud viewer.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::cloud::{LabelArray, PointCloud, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// RGB triple per class id, plus a color for ignored points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    entries: BTreeMap<u32, [u8; 3]>,
    ignore: [u8; 3],
}

impl Palette {
    pub fn new(ignore: [u8; 3]) -> Self {
        Palette {
            entries: BTreeMap::new(),
            ignore,
        }
    }

    pub fn with(mut self, class_id: u32, rgb: [u8; 3]) -> Self {
        self.entries.insert(class_id, rgb);
        self
    }

    pub fn color_of(&self, label: u32) -> Result<[u8; 3]> {
        if label == IGNORE_LABEL {
            return Ok(self.ignore);
        }
        self.entries
            .get(&label)
            .copied()
            .ok_or(Error::MissingPaletteEntry { id: label })
    }

    /// Parses `id r g b` lines; the keyword `ignore` sets the ignore color.
    pub fn parse(text: &str) -> Result<Self> {
        let mut palette = Palette::new([128, 128, 128]);
        for (line_index, raw) in text.lines().enumerate() {
            let line_no = line_index + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let malformed = || Error::MalformedLine {
                line: line_no,
                text: raw.to_string(),
            };
            if fields.len() != 4 {
                return Err(malformed());
            }
            let rgb: Vec<u8> = fields[1..]
                .iter()
                .map(|t| t.parse::<u8>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed())?;
            let rgb = [rgb[0], rgb[1], rgb[2]];
            if fields[0].eq_ignore_ascii_case("ignore") {
                palette.ignore = rgb;
            } else {
                let id: u32 = fields[0].parse().map_err(|_| malformed())?;
                palette.entries.insert(id, rgb);
            }
        }
        Ok(palette)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Writes an ASCII PLY with float x/y/z and uchar red/green/blue, one vertex
/// line per point in cloud order.
pub fn export_ply<S: Scalar>(
    cloud: &PointCloud<S>,
    labels: &LabelArray,
    palette: &Palette,
    path: impl AsRef<Path>,
) -> Result<()> {
    if cloud.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: cloud.len(),
            right: labels.len(),
        });
    }
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<fs::File>, text: String| {
        out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    };
    write(
        &mut out,
        format!(
            "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
            cloud.len()
        ),
    )?;
    for (point, &label) in cloud.iter().zip(labels.iter()) {
        let [r, g, b] = palette.color_of(label)?;
        write(
            &mut out,
            format!(
                "{} {} {} {r} {g} {b}\n",
                point.x.to_f32().unwrap(),
                point.y.to_f32().unwrap(),
                point.z.to_f32().unwrap()
            ),
        )?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use tempfile::tempdir;

    fn palette() -> Palette {
        Palette::new([9, 9, 9]).with(0, [255, 0, 0]).with(1, [0, 255, 0])
    }

    #[test]
    fn single_point_carries_its_palette_color() {
        let cloud: PointCloud<f32> = vec![Point::new(1.0, 2.0, 3.0, 0.0)].into_iter().collect();
        let labels = LabelArray::new(vec![0]);
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.ply");
        export_ply(&cloud, &labels, &palette(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("element vertex 1"));
        assert!(text.lines().last().unwrap().ends_with("255 0 0"));
    }

    #[test]
    fn empty_cloud_still_writes_a_valid_header() {
        let cloud: PointCloud<f32> = PointCloud::default();
        let labels = LabelArray::default();
        let dir = tempdir().unwrap();
        let path = dir.path().join("empty.ply");
        export_ply(&cloud, &labels, &palette(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 0\n"));
        assert!(text.trim_end().ends_with("end_header"));
    }

    #[test]
    fn missing_palette_entry_is_an_error() {
        let cloud: PointCloud<f32> = vec![Point::new(0.0, 0.0, 0.0, 0.0)].into_iter().collect();
        let labels = LabelArray::new(vec![7]);
        let dir = tempdir().unwrap();
        let result = export_ply(&cloud, &labels, &palette(), dir.path().join("x.ply"));
        assert!(matches!(result, Err(Error::MissingPaletteEntry { id: 7 })));
    }

    /// Minimal reference parser: header line count, then whitespace floats.
    fn reload(path: &Path) -> Vec<[f32; 3]> {
        let text = std::fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        let mut vertices = 0usize;
        for line in &mut lines {
            if let Some(rest) = line.strip_prefix("element vertex ") {
                vertices = rest.parse().unwrap();
            }
            if line == "end_header" {
                break;
            }
        }
        let rows: Vec<[f32; 3]> = lines
            .map(|l| {
                let f: Vec<f32> = l
                    .split_whitespace()
                    .take(3)
                    .map(|t| t.parse().unwrap())
                    .collect();
                [f[0], f[1], f[2]]
            })
            .collect();
        assert_eq!(rows.len(), vertices);
        rows
    }

    #[test]
    fn exported_coordinates_reload_exactly() {
        let cloud: PointCloud<f32> = vec![
            Point::new(1.2345678, -0.0001234, 987.654, 0.0),
            Point::new(-55.5, 0.0, 3.0e-8, 0.0),
        ]
        .into_iter()
        .collect();
        let labels = LabelArray::new(vec![0, 1]);
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.ply");
        export_ply(&cloud, &labels, &palette(), &path).unwrap();
        let rows = reload(&path);
        // Rust float formatting round-trips, so 6 significant digits hold
        for (point, row) in cloud.iter().zip(rows) {
            assert_eq!(point.x, row[0]);
            assert_eq!(point.y, row[1]);
            assert_eq!(point.z, row[2]);
        }
    }

    #[test]
    fn palette_text_round_trip() {
        let text = "# colors\n0 255 0 0\nignore 1 2 3\n";
        let palette = Palette::parse(text).unwrap();
        assert_eq!(palette.color_of(0).unwrap(), [255, 0, 0]);
        assert_eq!(palette.color_of(IGNORE_LABEL).unwrap(), [1, 2, 3]);
        assert!(Palette::parse("0 1 2\n").is_err());
    }
}
