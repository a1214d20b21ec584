use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use super::manifest::{AnnotationRef, CorruptionGrid, DatasetManifest, ImageEntry, DEFAULT_SEED};
use crate::annotation::{parse_dota, AnnotationFormat, AnnotationSet, ReferringRecord, RegionBox};
use crate::error::{Error, Result};
use crate::metrics::Task;

/// Supported on-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    /// `<root>/<class>/<image>`
    ClassFolder,
    /// `<root>/images/<name>.<ext>` with `<root>/masks/<name>.png`
    SegMask,
    /// `<root>/images/<name>.<ext>` with `<root>/labelTxt/<name>.txt`
    Dota,
    /// `<root>/images/` with `<root>/annotations.json`, a list of
    /// `{"image", "expression", "box", "id"?}`
    ReferringJson,
}

impl FromStr for LayoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class_folder" | "classification" => Ok(LayoutKind::ClassFolder),
            "seg_mask" | "segmentation" => Ok(LayoutKind::SegMask),
            "dota" | "detection" => Ok(LayoutKind::Dota),
            "referring_json" | "grounding" => Ok(LayoutKind::ReferringJson),
            other => Err(Error::Manifest(format!(
                "unknown layout `{other}` (class_folder | seg_mask | dota | referring_json)"
            ))),
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn layout_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Layout {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|d| d.map(|d| d.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

fn is_image(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn relative(root: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(root)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| p.to_path_buf())
}

fn detect(root: &Path) -> LayoutKind {
    if root.join("masks").is_dir() {
        LayoutKind::SegMask
    } else if root.join("labelTxt").is_dir() {
        LayoutKind::Dota
    } else if root.join("annotations.json").is_file() {
        LayoutKind::ReferringJson
    } else {
        LayoutKind::ClassFolder
    }
}

fn images_dir(root: &Path) -> Result<Vec<PathBuf>> {
    let dir = root.join("images");
    if !dir.is_dir() {
        return Err(layout_err(root, "missing images/ directory"));
    }
    let images: Vec<PathBuf> = sorted_entries(&dir)?.into_iter().filter(|p| is_image(p)).collect();
    if images.is_empty() {
        return Err(layout_err(&dir, "no images found"));
    }
    Ok(images)
}

#[derive(Deserialize)]
struct RawRecord {
    image: String,
    expression: String,
    #[serde(rename = "box")]
    region: RegionBox,
    #[serde(default)]
    id: Option<String>,
}

/// Builds a manifest from a dataset directory; `layout: None` detects the
/// layout from the directory contents.
pub fn ingest(root: &Path, layout: Option<LayoutKind>) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(layout_err(root, "not a directory"));
    }
    let layout = layout.unwrap_or_else(|| detect(root));
    let mut images = Vec::new();
    let (task, format) = match layout {
        LayoutKind::ClassFolder => {
            let classes: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
            if classes.is_empty() {
                return Err(layout_err(root, "no class folders found"));
            }
            for (i, class_dir) in classes.iter().enumerate() {
                let category = stem(class_dir);
                for img in sorted_entries(class_dir)?.into_iter().filter(|p| is_image(p)) {
                    images.push(ImageEntry {
                        id: format!("{category}/{}", stem(&img)),
                        path: relative(root, &img),
                        annotation: Some(AnnotationRef::Inline(AnnotationSet::ClassLabel {
                            category_id: i as u32,
                            category: category.clone(),
                        })),
                    });
                }
            }
            if images.is_empty() {
                return Err(layout_err(root, "class folders contain no images"));
            }
            (Task::Classification, None)
        }
        LayoutKind::SegMask | LayoutKind::Dota => {
            let (sub, ext, task, format) = if layout == LayoutKind::SegMask {
                ("masks", "png", Task::Segmentation, AnnotationFormat::SegMask)
            } else {
                ("labelTxt", "txt", Task::Detection, AnnotationFormat::Dota)
            };
            for img in images_dir(root)? {
                let id = stem(&img);
                let ann = root.join(sub).join(format!("{id}.{ext}"));
                if !ann.is_file() {
                    return Err(Error::AnnotationParse {
                        path: ann,
                        line: None,
                        message: format!("missing annotation for image `{id}`"),
                    });
                }
                if layout == LayoutKind::Dota {
                    let text = fs::read_to_string(&ann).map_err(|e| Error::io(&ann, e))?;
                    parse_dota(&text, &ann)?;
                }
                images.push(ImageEntry {
                    id,
                    path: relative(root, &img),
                    annotation: Some(AnnotationRef::Path(relative(root, &ann))),
                });
            }
            (task, Some(format))
        }
        LayoutKind::ReferringJson => {
            let path = root.join("annotations.json");
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let raw: Vec<RawRecord> = serde_json::from_str(&text).map_err(|e| Error::AnnotationParse {
                path: path.clone(),
                line: Some(e.line()),
                message: e.to_string(),
            })?;
            let files = images_dir(root)?;
            let mut by_image: BTreeMap<String, Vec<ReferringRecord>> =
                files.iter().map(|f| (stem(f), Vec::new())).collect();
            for r in raw {
                let key = stem(Path::new(&r.image));
                let records = by_image.get_mut(&key).ok_or_else(|| Error::AnnotationParse {
                    path: path.clone(),
                    line: None,
                    message: format!("record refers to unknown image `{}`", r.image),
                })?;
                records.push(ReferringRecord {
                    id: r.id,
                    expression: r.expression,
                    region: r.region,
                });
            }
            for img in files {
                let id = stem(&img);
                let records = by_image.remove(&id).unwrap_or_default();
                images.push(ImageEntry {
                    id,
                    path: relative(root, &img),
                    annotation: Some(AnnotationRef::Inline(AnnotationSet::ReferringRecords { records })),
                });
            }
            (Task::Grounding, None)
        }
    };
    let dataset = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "dataset".into());
    let manifest = DatasetManifest {
        dataset,
        task,
        seed: DEFAULT_SEED,
        images,
        corruption_grid: CorruptionGrid::default(),
        annotation_format: format,
        root: None,
        base_dir: root.to_path_buf(),
    };
    manifest.validate()?;
    Ok(manifest)
}
