//! JSON-lines prediction files, one record per line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::annotation::{Point, RegionBox};
use crate::error::{Error, Result};

/// Box coordinates as written in prediction files: 8 flat numbers, four
/// `[x, y]` points, or `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoxCoords {
    Flat([f64; 8]),
    Points([Point; 4]),
    Rect([f64; 4]),
}

impl BoxCoords {
    pub fn to_region(&self) -> RegionBox {
        match *self {
            BoxCoords::Flat(v) => RegionBox::Oriented([[v[0], v[1]], [v[2], v[3]], [v[4], v[5]], [v[6], v[7]]]),
            BoxCoords::Points(p) => RegionBox::Oriented(p),
            BoxCoords::Rect(r) => RegionBox::Horizontal(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub id: String,
    #[serde(alias = "class")]
    pub label: String,
}

/// `mask` is resolved relative to the prediction file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPrediction {
    pub id: String,
    pub mask: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEntry {
    #[serde(rename = "box")]
    pub coords: BoxCoords,
    pub category: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPrediction {
    pub id: String,
    #[serde(default)]
    pub detections: Vec<DetectionEntry>,
}

/// Grounding prediction keyed by referring-record id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPrediction {
    pub id: String,
    #[serde(rename = "box")]
    pub coords: BoxCoords,
}

/// Externally judged per-sample score in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarPrediction {
    pub id: String,
    pub score: f64,
}

/// Parses every non-blank line; the first bad record is reported with its
/// line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text, path)
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::AnnotationParse {
                path: path.to_path_buf(),
                line: Some(i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}
