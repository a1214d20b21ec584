//! Ground-truth annotations and their on-disk formats.
//!
//! Coordinates are continuous pixel coordinates: pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)`, so its center sits at `(i + 0.5, j + 0.5)` and the
//! image center is `(W/2, H/2)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageRaster;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub corners: [Point; 4],
    pub category: String,
    #[serde(default)]
    pub difficult: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizontalBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
    pub category: String,
}

impl HorizontalBox {
    pub fn corners(&self) -> [Point; 4] {
        [
            [self.xmin, self.ymin],
            [self.xmax, self.ymin],
            [self.xmax, self.ymax],
            [self.xmin, self.ymax],
        ]
    }
}

/// Target region of a referring expression: four corner points, or a flat
/// `[xmin, ymin, xmax, ymax]` in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionBox {
    Oriented([Point; 4]),
    /// `[xmin, ymin, xmax, ymax]`
    Horizontal([f64; 4]),
}

impl RegionBox {
    pub fn corners(&self) -> [Point; 4] {
        match *self {
            RegionBox::Oriented(c) => c,
            RegionBox::Horizontal([x0, y0, x1, y1]) => [[x0, y0], [x1, y0], [x1, y1], [x0, y1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferringRecord {
    /// Record identifier used to join grounding predictions; defaults to
    /// `"<image id>#<index>"` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub expression: String,
    #[serde(rename = "box")]
    pub region: RegionBox,
}

/// Per-pixel class indices, row-major, with the same dimensions as the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<u8>,
    /// Class names indexed by class id (optional).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub palette: Vec<String>,
    /// Class written where a warp leaves the frame.
    #[serde(default)]
    pub background: u8,
}

impl SegMask {
    pub fn new(width: usize, height: usize, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "mask data {} != {width}x{height}",
                classes.len()
            )));
        }
        Ok(Self {
            width,
            height,
            classes,
            palette: Vec::new(),
            background: 0,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.classes[y * self.width + x]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = image::load_from_memory(&bytes).map_err(|e| Error::AnnotationParse {
            path: path.to_path_buf(),
            line: None,
            message: e.to_string(),
        })?;
        match img {
            image::DynamicImage::ImageLuma8(buf) => {
                let (w, h) = (buf.width() as usize, buf.height() as usize);
                SegMask::new(w, h, buf.into_raw())
            }
            other => Err(Error::AnnotationParse {
                path: path.to_path_buf(),
                line: None,
                message: format!(
                    "masks must be 8-bit single-channel class-index PNGs, got {:?}",
                    other.color()
                ),
            }),
        }
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, self.classes.clone())
            .ok_or_else(|| Error::ShapeMismatch("mask buffer".into()))?;
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnnotationSet {
    ClassLabel { category_id: u32, category: String },
    SegMask(SegMask),
    OrientedBoxes { boxes: Vec<OrientedBox> },
    HorizontalBoxes { boxes: Vec<HorizontalBox> },
    ReferringRecords { records: Vec<ReferringRecord> },
}

/// On-disk encoding of an annotation, chosen by annotation kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFormat {
    /// JSON document with a single class label (class-folder datasets).
    ClassLabel,
    /// 8-bit class-index PNG.
    SegMask,
    /// DOTA-style text: `x1 y1 x2 y2 x3 y3 x4 y4 category difficult` per line.
    Dota,
    /// JSON list of horizontal boxes.
    HorizontalJson,
    /// JSON list of referring-expression records.
    ReferringJson,
}

impl AnnotationFormat {
    pub fn extension(self) -> &'static str {
        match self {
            AnnotationFormat::SegMask => "png",
            AnnotationFormat::Dota => "txt",
            _ => "json",
        }
    }
}

impl AnnotationSet {
    pub fn format(&self) -> AnnotationFormat {
        match self {
            AnnotationSet::ClassLabel { .. } => AnnotationFormat::ClassLabel,
            AnnotationSet::SegMask(_) => AnnotationFormat::SegMask,
            AnnotationSet::OrientedBoxes { .. } => AnnotationFormat::Dota,
            AnnotationSet::HorizontalBoxes { .. } => AnnotationFormat::HorizontalJson,
            AnnotationSet::ReferringRecords { .. } => AnnotationFormat::ReferringJson,
        }
    }

    /// Checks the structural invariants, including mask/image agreement when
    /// the paired image is known.
    pub fn validate(&self, image: Option<&ImageRaster>) -> Result<()> {
        let check_corners = |corners: &[Point; 4]| -> Result<()> {
            if corners.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::UnsupportedAnnotation("non-finite box coordinate".into()));
            }
            if !consistent_winding(corners) {
                return Err(Error::UnsupportedAnnotation(format!(
                    "box corners {corners:?} are not in a consistent winding order"
                )));
            }
            Ok(())
        };
        match self {
            AnnotationSet::ClassLabel { .. } => Ok(()),
            AnnotationSet::SegMask(m) => {
                if m.classes.len() != m.width * m.height {
                    return Err(Error::ShapeMismatch("mask buffer length".into()));
                }
                if let Some(img) = image {
                    if (img.width(), img.height()) != (m.width, m.height) {
                        return Err(Error::ShapeMismatch(format!(
                            "mask {}x{} vs image {}x{}",
                            m.width,
                            m.height,
                            img.width(),
                            img.height()
                        )));
                    }
                }
                Ok(())
            }
            AnnotationSet::OrientedBoxes { boxes } => boxes.iter().try_for_each(|b| check_corners(&b.corners)),
            AnnotationSet::HorizontalBoxes { boxes } => boxes.iter().try_for_each(|b| {
                check_corners(&b.corners())?;
                if b.xmax < b.xmin || b.ymax < b.ymin {
                    return Err(Error::UnsupportedAnnotation("inverted horizontal box".into()));
                }
                Ok(())
            }),
            AnnotationSet::ReferringRecords { records } => {
                records.iter().try_for_each(|r| check_corners(&r.region.corners()))
            }
        }
    }

    /// Serializes to the bytes of this annotation's file format.
    pub fn to_file_bytes(&self) -> Result<Vec<u8>> {
        match self {
            AnnotationSet::SegMask(m) => m.to_png(),
            AnnotationSet::OrientedBoxes { boxes } => Ok(write_dota(boxes).into_bytes()),
            other => {
                let mut v = serde_json::to_vec_pretty(other)?;
                v.push(b'\n');
                Ok(v)
            }
        }
    }

    /// Reads an annotation file in the given format.
    pub fn load(path: &Path, format: AnnotationFormat) -> Result<Self> {
        let ann = match format {
            AnnotationFormat::SegMask => AnnotationSet::SegMask(SegMask::load(path)?),
            AnnotationFormat::Dota => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                AnnotationSet::OrientedBoxes {
                    boxes: parse_dota(&text, path)?,
                }
            }
            _ => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let ann: AnnotationSet = serde_json::from_str(&text).map_err(|e| Error::AnnotationParse {
                    path: path.to_path_buf(),
                    line: Some(e.line()),
                    message: e.to_string(),
                })?;
                if ann.format() != format {
                    return Err(Error::AnnotationParse {
                        path: path.to_path_buf(),
                        line: None,
                        message: format!("expected {format:?}, found {:?}", ann.format()),
                    });
                }
                ann
            }
        };
        ann.validate(None).map_err(|e| Error::AnnotationParse {
            path: path.to_path_buf(),
            line: None,
            message: e.to_string(),
        })?;
        Ok(ann)
    }
}

/// All turns of the closed polygon go the same way (or are straight).
pub(crate) fn consistent_winding(c: &[Point; 4]) -> bool {
    let mut sign = 0.0f64;
    for i in 0..4 {
        let a = c[i];
        let b = c[(i + 1) % 4];
        let d = c[(i + 2) % 4];
        let cross = (b[0] - a[0]) * (d[1] - b[1]) - (b[1] - a[1]) * (d[0] - b[0]);
        if cross.abs() <= 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Parses DOTA-style oriented box text. `imagesource:` and `gsd:` header
/// lines and blank lines are skipped; the difficulty column is optional.
pub fn parse_dota(text: &str, path: &Path) -> Result<Vec<OrientedBox>> {
    let mut boxes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("imagesource:") || line.starts_with("gsd:") {
            continue;
        }
        let err = |message: String| Error::AnnotationParse {
            path: path.to_path_buf(),
            line: Some(lineno + 1),
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 9 || fields.len() > 10 {
            return Err(err(format!("expected 9 or 10 fields, found {}", fields.len())));
        }
        let mut coords = [0.0f64; 8];
        for (slot, tok) in coords.iter_mut().zip(&fields[..8]) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("invalid coordinate `{tok}`")))?;
        }
        let difficult = match fields.get(9) {
            None | Some(&"0") => false,
            Some(&"1") => true,
            Some(other) => return Err(err(format!("invalid difficulty flag `{other}`"))),
        };
        let corners = [
            [coords[0], coords[1]],
            [coords[2], coords[3]],
            [coords[4], coords[5]],
            [coords[6], coords[7]],
        ];
        if !consistent_winding(&corners) {
            return Err(err("corners are not in a consistent winding order".into()));
        }
        boxes.push(OrientedBox {
            corners,
            category: fields[8].to_string(),
            difficult,
        });
    }
    Ok(boxes)
}

pub fn write_dota(boxes: &[OrientedBox]) -> String {
    let mut out = String::new();
    for b in boxes {
        for p in &b.corners {
            let _ = write!(out, "{} {} ", p[0], p[1]);
        }
        let _ = writeln!(out, "{} {}", b.category, u8::from(b.difficult));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dota_line_parses_to_one_box() {
        let text = "imagesource:GoogleEarth\ngsd:0.5\n10 20 50 20 50 40 10 40 airplane 0\n";
        let boxes = parse_dota(text, Path::new("x.txt")).unwrap();
        assert_eq!(
            boxes,
            vec![OrientedBox {
                corners: [[10.0, 20.0], [50.0, 20.0], [50.0, 40.0], [10.0, 40.0]],
                category: "airplane".into(),
                difficult: false,
            }]
        );
        assert_eq!(write_dota(&boxes), "10 20 50 20 50 40 10 40 airplane 0\n");
    }

    #[test]
    fn dota_errors_carry_line_numbers() {
        let text = "10 20 50 20 50 40 10 40 ship 0\n1 2 3 four 5 6 7 8 ship\n";
        match parse_dota(text, Path::new("bad.txt")) {
            Err(Error::AnnotationParse { line, .. }) => assert_eq!(line, Some(2)),
            other => panic!("{other:?}"),
        }
        let crossed = "0 0 10 10 10 0 0 10 ship 0\n";
        assert!(parse_dota(crossed, Path::new("c.txt")).is_err());
    }

    #[test]
    fn json_annotations_round_trip() {
        let ann = AnnotationSet::ReferringRecords {
            records: vec![ReferringRecord {
                id: None,
                expression: "the large ship at the top".into(),
                region: RegionBox::Horizontal([1.0, 2.0, 30.0, 40.0]),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        fs::write(&p, ann.to_file_bytes().unwrap()).unwrap();
        assert_eq!(AnnotationSet::load(&p, AnnotationFormat::ReferringJson).unwrap(), ann);
        assert!(AnnotationSet::load(&p, AnnotationFormat::ClassLabel).is_err());
    }

    #[test]
    fn mask_png_round_trip_and_dimension_check() {
        let mask = SegMask::new(3, 2, vec![0, 1, 2, 3, 4, 5]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        fs::write(&p, mask.to_png().unwrap()).unwrap();
        let back = AnnotationSet::load(&p, AnnotationFormat::SegMask).unwrap();
        assert_eq!(back, AnnotationSet::SegMask(mask));
        let img = ImageRaster::filled(2, 2, 3, 0.5);
        assert!(back.validate(Some(&img)).is_err());
    }
}
