use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationFormat, AnnotationSet};
use crate::corruption::CorruptionKind;
use crate::error::{Error, Result};
use crate::metrics::Task;
use crate::raster::{load_image, ImageRaster};

/// Seed used when neither the manifest nor the command line gives one.
pub const DEFAULT_SEED: u64 = 20240917;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Annotation of one image: a file path, or the annotation itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnnotationRef {
    Path(PathBuf),
    Inline(AnnotationSet),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<AnnotationRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionGrid {
    #[serde(default = "all_kinds")]
    pub kinds: Vec<CorruptionKind>,
    /// Inclusive `[lo, hi]`; levels above a kind's maximum are skipped.
    #[serde(default = "default_severities")]
    pub severities: [u32; 2],
}

fn all_kinds() -> Vec<CorruptionKind> {
    CorruptionKind::ALL.to_vec()
}

fn default_severities() -> [u32; 2] {
    [1, 5]
}

impl Default for CorruptionGrid {
    fn default() -> Self {
        Self {
            kinds: all_kinds(),
            severities: default_severities(),
        }
    }
}

impl CorruptionGrid {
    /// `(kind, severity)` cells in kind-then-severity order.
    pub fn cells(&self) -> Result<Vec<(CorruptionKind, u32)>> {
        let [lo, hi] = self.severities;
        if lo == 0 || hi < lo {
            return Err(Error::Manifest(format!("invalid severity range {lo}-{hi}")));
        }
        Ok(self
            .kinds
            .iter()
            .flat_map(|&k| (lo..=hi.min(k.max_severity())).map(move |s| (k, s)))
            .collect())
    }
}

/// Relative paths resolve against `root` when set (itself relative to the
/// manifest file), otherwise against the manifest file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset: String,
    pub task: Task,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub images: Vec<ImageEntry>,
    #[serde(default)]
    pub corruption_grid: CorruptionGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_format: Option<AnnotationFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.base_dir = match &m.root {
            Some(r) => dir.join(r),
            None => dir,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.images.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Manifest(format!("duplicate image id `{}`", w[0])));
        }
        if let Some(e) = self
            .images
            .iter()
            .find(|e| e.id.is_empty() || e.id.contains("..") || Path::new(&e.id).is_absolute())
        {
            return Err(Error::Manifest(format!(
                "image id `{}` is not a safe relative name",
                e.id
            )));
        }
        self.corruption_grid.cells()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn load_image(&self, entry: &ImageEntry) -> Result<ImageRaster> {
        load_image(self.resolve(&entry.path))
    }

    pub fn load_annotation(&self, entry: &ImageEntry) -> Result<Option<AnnotationSet>> {
        match &entry.annotation {
            None => Ok(None),
            Some(AnnotationRef::Inline(a)) => {
                a.validate(None)?;
                Ok(Some(a.clone()))
            }
            Some(AnnotationRef::Path(p)) => {
                let path = self.resolve(p);
                let format = match self.annotation_format {
                    Some(f) => f,
                    None => match path.extension().and_then(|e| e.to_str()) {
                        Some("png") => AnnotationFormat::SegMask,
                        Some("txt") => AnnotationFormat::Dota,
                        _ => return load_tagged_json(&path).map(Some),
                    },
                };
                AnnotationSet::load(&path, format).map(Some)
            }
        }
    }
}

fn load_tagged_json(path: &Path) -> Result<AnnotationSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ann: AnnotationSet = serde_json::from_str(&text).map_err(|e| Error::AnnotationParse {
        path: path.to_path_buf(),
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    AnnotationSet::load(path, ann.format())
}
