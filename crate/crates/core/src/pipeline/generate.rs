use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::chain::{apply_chain, AppliedStep, CorruptionChain};
use super::manifest::{AnnotationRef, CorruptionGrid, DatasetManifest, ImageEntry};
use crate::annotation::AnnotationSet;
use crate::corruption::{CorruptionKind, CorruptionParams, CorruptionSpec, Severity};
use crate::error::{Error, Result};
use crate::raster::{encode_image, ImageRaster, RasterFormat};

/// What to generate and where.
#[derive(Debug, Clone)]
pub struct GenerationPlan {
    pub manifest: DatasetManifest,
    pub chains: Vec<CorruptionChain>,
    pub output_root: PathBuf,
    /// Also write re-encoded clean images under `clean/`.
    pub include_clean: bool,
    /// Worker threads; 0 means rayon's default.
    pub workers: usize,
}

#[derive(Serialize)]
struct HashedPlan<'a> {
    dataset: &'a str,
    seed: u64,
    images: &'a [ImageEntry],
    chains: &'a [CorruptionChain],
    include_clean: bool,
}

impl GenerationPlan {
    /// One single-corruption chain per cell of the manifest's grid.
    pub fn from_manifest(manifest: DatasetManifest, output_root: impl Into<PathBuf>) -> Result<Self> {
        let chains = manifest
            .corruption_grid
            .cells()?
            .into_iter()
            .map(|(k, s)| CorruptionChain::single(CorruptionSpec::new(k, s, manifest.seed)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            manifest,
            chains,
            output_root: output_root.into(),
            include_clean: false,
            workers: 0,
        })
    }

    pub fn with_chains(
        manifest: DatasetManifest,
        chains: Vec<CorruptionChain>,
        output_root: impl Into<PathBuf>,
    ) -> Self {
        Self {
            manifest,
            chains,
            output_root: output_root.into(),
            include_clean: false,
            workers: 0,
        }
    }

    /// SHA-256 over the canonical JSON of everything that determines output
    /// bytes (not the output location or worker count).
    pub fn plan_hash(&self) -> String {
        let hashed = HashedPlan {
            dataset: &self.manifest.dataset,
            seed: self.manifest.seed,
            images: &self.manifest.images,
            chains: &self.chains,
            include_clean: self.include_clean,
        };
        let bytes = serde_json::to_vec(&hashed).expect("plan is plain data");
        hex::encode(Sha256::digest(bytes))
    }

    fn validate(&self) -> Result<()> {
        self.manifest.validate()?;
        let mut dirs: Vec<(String, String)> = self.chains.iter().map(CorruptionChain::dir_names).collect();
        dirs.sort();
        if let Some(w) = dirs.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Manifest(format!("two chains write to {}/{}", w[0].0, w[0].1)));
        }
        if dirs.iter().any(|(c, _)| c == "clean" || c == "annotations") {
            return Err(Error::Manifest("chain directory collides with a reserved name".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub image_id: String,
    /// Chain directory name; equals the kind name for single corruptions.
    pub chain: String,
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Failure {
    pub image_id: String,
    /// `<chain>/<severity>`, or `clean` for failures before any corruption.
    pub output: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub plan_hash: String,
    pub seed: u64,
    pub entries: Vec<ProvenanceEntry>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub plan_hash: String,
    pub written: usize,
    pub failed: usize,
    /// Images written per output directory (`<chain>/<severity>`).
    pub per_output: BTreeMap<String, usize>,
    pub failures: Vec<Failure>,
}

#[derive(Default)]
struct ImageOutcome {
    written: Vec<String>,
    entries: Vec<ProvenanceEntry>,
    failures: Vec<Failure>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn annotation_path(root: &Path, output: &str, id: &str, ann: &AnnotationSet) -> PathBuf {
    root.join("annotations")
        .join(output)
        .join(format!("{id}.{}", ann.format().extension()))
}

fn params_json(params: &CorruptionParams) -> serde_json::Value {
    serde_json::to_value(params).expect("parameters are plain data")
}

struct Loaded {
    image: ImageRaster,
    annotation: Option<AnnotationSet>,
    clean_annotation_bytes: Option<Vec<u8>>,
}

fn load_entry(manifest: &DatasetManifest, entry: &ImageEntry) -> Result<Loaded> {
    let image = manifest.load_image(entry)?;
    let annotation = manifest.load_annotation(entry)?;
    if let Some(a) = &annotation {
        a.validate(Some(&image))?;
    }
    let clean_annotation_bytes = annotation.as_ref().map(AnnotationSet::to_file_bytes).transpose()?;
    Ok(Loaded {
        image,
        annotation,
        clean_annotation_bytes,
    })
}

fn run_chain(
    plan: &GenerationPlan,
    entry: &ImageEntry,
    loaded: &Loaded,
    chain: &CorruptionChain,
) -> Result<Vec<AppliedStep>> {
    let root = &plan.output_root;
    let (chain_dir, sev_dir) = chain.dir_names();
    let output = format!("{chain_dir}/{sev_dir}");
    let (img, ann, steps) = apply_chain(&loaded.image, loaded.annotation.as_ref(), chain, &entry.id)?;
    let png = encode_image(&img, RasterFormat::Png)?;
    write_file(&root.join(&output).join(format!("{}.png", entry.id)), &png)?;
    if let Some(ann) = &ann {
        let bytes = if chain.is_geometric() {
            ann.to_file_bytes()?
        } else {
            loaded.clean_annotation_bytes.clone().expect("annotation present")
        };
        write_file(&annotation_path(root, &output, &entry.id, ann), &bytes)?;
    }
    Ok(steps)
}

fn process_image(plan: &GenerationPlan, entry: &ImageEntry) -> ImageOutcome {
    let mut outcome = ImageOutcome::default();
    let loaded = match load_entry(&plan.manifest, entry) {
        Ok(l) => l,
        Err(e) => {
            for chain in &plan.chains {
                let (c, s) = chain.dir_names();
                outcome.failures.push(Failure {
                    image_id: entry.id.clone(),
                    output: format!("{c}/{s}"),
                    message: e.to_string(),
                });
            }
            return outcome;
        }
    };
    let root = &plan.output_root;
    let clean = (|| -> Result<()> {
        if let (Some(ann), Some(bytes)) = (&loaded.annotation, &loaded.clean_annotation_bytes) {
            write_file(&annotation_path(root, "clean", &entry.id, ann), bytes)?;
        }
        if plan.include_clean {
            let png = encode_image(&loaded.image, RasterFormat::Png)?;
            write_file(&root.join("clean").join(format!("{}.png", entry.id)), &png)?;
        }
        Ok(())
    })();
    match clean {
        Ok(()) if plan.include_clean => outcome.written.push("clean".into()),
        Ok(()) => {}
        Err(e) => outcome.failures.push(Failure {
            image_id: entry.id.clone(),
            output: "clean".into(),
            message: e.to_string(),
        }),
    }
    for chain in &plan.chains {
        let (c, s) = chain.dir_names();
        match run_chain(plan, entry, &loaded, chain) {
            Ok(steps) => {
                outcome.written.push(format!("{c}/{s}"));
                outcome.entries.extend(steps.into_iter().map(|st| ProvenanceEntry {
                    image_id: entry.id.clone(),
                    chain: c.clone(),
                    kind: st.kind,
                    severity: st.severity,
                    params: params_json(&st.params),
                }));
            }
            Err(e) => outcome.failures.push(Failure {
                image_id: entry.id.clone(),
                output: format!("{c}/{s}"),
                message: e.to_string(),
            }),
        }
    }
    outcome
}

/// Manifest describing one output directory, so the corrupted tree can be
/// scored like the clean dataset.
fn output_manifest(
    plan: &GenerationPlan,
    output: &str,
    ids: &[&ImageEntry],
    annotated: &BTreeMap<&str, String>,
) -> DatasetManifest {
    let depth = Path::new(output).components().count();
    let up = "../".repeat(depth);
    let images = ids
        .iter()
        .map(|e| ImageEntry {
            id: e.id.clone(),
            path: PathBuf::from(format!("{}.png", e.id)),
            annotation: annotated
                .get(e.id.as_str())
                .map(|ext| AnnotationRef::Path(PathBuf::from(format!("{up}annotations/{output}/{}.{ext}", e.id)))),
        })
        .collect();
    DatasetManifest {
        dataset: plan.manifest.dataset.clone(),
        task: plan.manifest.task,
        seed: plan.manifest.seed,
        images,
        corruption_grid: CorruptionGrid {
            kinds: Vec::new(),
            severities: [1, 1],
        },
        annotation_format: None,
        root: None,
        base_dir: PathBuf::new(),
    }
}

/// Writes `<root>/<chain>/<severity>/<id>.png` for every image and chain,
/// annotation folders under `<root>/annotations/`, a `manifest.json` per
/// output directory and `<root>/provenance.json`. Per-image failures are
/// collected, never fatal; output bytes do not depend on `workers`.
pub fn generate(plan: &GenerationPlan) -> Result<GenerationReport> {
    plan.validate()?;
    let root = &plan.output_root;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::Manifest(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<ImageOutcome> = pool.install(|| {
        plan.manifest
            .images
            .par_iter()
            .map(|entry| process_image(plan, entry))
            .collect()
    });

    let mut per_output: BTreeMap<String, Vec<&ImageEntry>> = BTreeMap::new();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (entry, outcome) in plan.manifest.images.iter().zip(outcomes) {
        for out in outcome.written {
            per_output.entry(out).or_default().push(entry);
        }
        entries.extend(outcome.entries);
        failures.extend(outcome.failures);
    }
    entries
        .sort_by(|a, b| (&a.image_id, &a.chain, a.severity, a.kind).cmp(&(&b.image_id, &b.chain, b.severity, b.kind)));
    failures.sort();

    let annotated: BTreeMap<&str, String> = plan
        .manifest
        .images
        .iter()
        .filter_map(|e| {
            let ext = match &e.annotation {
                Some(AnnotationRef::Inline(a)) => a.format().extension(),
                Some(AnnotationRef::Path(p)) => match p.extension().and_then(|x| x.to_str()) {
                    Some("png") => "png",
                    Some("txt") => "txt",
                    _ => "json",
                },
                None => return None,
            };
            Some((e.id.as_str(), ext.to_string()))
        })
        .collect();
    for (output, ids) in &per_output {
        let m = output_manifest(plan, output, ids, &annotated);
        write_file(&root.join(output).join("manifest.json"), m.to_json()?.as_bytes())?;
    }

    let plan_hash = plan.plan_hash();
    let provenance = Provenance {
        plan_hash: plan_hash.clone(),
        seed: plan.manifest.seed,
        entries,
        failures: failures.clone(),
    };
    write_file(
        &root.join("provenance.json"),
        (serde_json::to_string_pretty(&provenance)? + "\n").as_bytes(),
    )?;

    let written = per_output
        .iter()
        .filter(|(k, _)| k.as_str() != "clean")
        .map(|(_, v)| v.len())
        .sum();
    for f in &failures {
        log::warn!("{} -> {}: {}", f.image_id, f.output, f.message);
    }
    Ok(GenerationReport {
        plan_hash,
        written,
        failed: failures.len(),
        per_output: per_output.into_iter().map(|(k, v)| (k, v.len())).collect(),
        failures,
    })
}
