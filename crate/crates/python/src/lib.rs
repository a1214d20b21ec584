//! Python bindings: rasters, single corruptions and chains, dataset
//! generation, and the metric and fidelity functions.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use reobench::fidelity::{embedding_stats, frechet_distance, EmbeddingSet};
use reobench::metrics::{self, Detection};
use reobench::pipeline::{self, CorruptionChain, DatasetManifest, GenerationPlan, DEFAULT_SEED};
use reobench::{
    AnnotationSet, CorruptionKind, CorruptionSpec, ImageRaster, OrientedBox, RasterFormat, SegMask, Severity,
};

fn err(e: reobench::Error) -> PyErr {
    match e {
        reobench::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py_json<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn kind(name: &str) -> PyResult<CorruptionKind> {
    name.parse().map_err(err)
}

type Corners = [[f64; 2]; 4];

fn boxes_to_set(boxes: &[Corners]) -> AnnotationSet {
    AnnotationSet::OrientedBoxes {
        boxes: boxes
            .iter()
            .map(|c| OrientedBox {
                corners: *c,
                category: String::new(),
                difficult: false,
            })
            .collect(),
    }
}

fn set_to_boxes(set: Option<AnnotationSet>) -> Option<Vec<Corners>> {
    match set {
        Some(AnnotationSet::OrientedBoxes { boxes }) => Some(boxes.into_iter().map(|b| b.corners).collect()),
        _ => None,
    }
}

/// An image with samples in [0, 1], stored row-major and interleaved.
#[pyclass(name = "Raster", module = "reobench", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRaster {
    inner: ImageRaster,
}

#[pymethods]
impl PyRaster {
    /// Builds a raster from 8-bit interleaved bytes (e.g. `ndarray.tobytes()`).
    #[staticmethod]
    fn from_bytes(data: &[u8], width: usize, height: usize, channels: usize) -> PyResult<Self> {
        if data.len() != width * height * channels {
            return Err(PyValueError::new_err(format!(
                "expected {} bytes for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            inner: ImageRaster::from_u8(width, height, channels, data).map_err(err)?,
        })
    }

    /// Builds a raster from float samples in [0, 1].
    #[staticmethod]
    fn from_floats(data: Vec<f32>, width: usize, height: usize, channels: usize) -> PyResult<Self> {
        Ok(Self {
            inner: ImageRaster::new(width, height, channels, data).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: reobench::load_image(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let format = RasterFormat::from_extension(&path).map_err(err)?;
        reobench::save_image(&self.inner, &path, format).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channels()
    }

    /// 8-bit interleaved bytes.
    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_u8())
    }

    fn to_floats(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    /// Applies one corruption. Returns `(raster, params, boxes)`, where
    /// `params` holds the concrete parameters used (including any drawn
    /// values) and `boxes` the transformed quads when `boxes` was given.
    #[pyo3(signature = (kind, severity, seed = DEFAULT_SEED, image_id = "image", overrides = None, boxes = None))]
    #[allow(clippy::too_many_arguments)]
    fn corrupt<'py>(
        &self,
        py: Python<'py>,
        kind: &str,
        severity: u32,
        seed: u64,
        image_id: &str,
        overrides: Option<BTreeMap<String, f64>>,
        boxes: Option<Vec<Corners>>,
    ) -> PyResult<(PyRaster, Bound<'py, PyAny>, Option<Vec<Corners>>)> {
        let mut spec = CorruptionSpec::new(self::kind(kind)?, severity, seed);
        spec.overrides = overrides.unwrap_or_default();
        let ann = boxes.as_deref().map(boxes_to_set);
        let (out, ann, step) = py
            .detach(|| pipeline::apply_spec(&self.inner, ann.as_ref(), &spec, image_id))
            .map_err(err)?;
        Ok((
            PyRaster { inner: out },
            to_py_json(py, &step.params)?,
            set_to_boxes(ann),
        ))
    }

    /// Applies a chain such as `"brightness:3,cloud:3,compression:3"`.
    /// Returns `(raster, [params per step], boxes)`.
    #[pyo3(signature = (expr, seed = DEFAULT_SEED, image_id = "image", boxes = None))]
    fn corrupt_chain<'py>(
        &self,
        py: Python<'py>,
        expr: &str,
        seed: u64,
        image_id: &str,
        boxes: Option<Vec<Corners>>,
    ) -> PyResult<(PyRaster, Bound<'py, PyAny>, Option<Vec<Corners>>)> {
        let chain = CorruptionChain::parse(expr, seed).map_err(err)?;
        let ann = boxes.as_deref().map(boxes_to_set);
        let (out, ann, steps) = py
            .detach(|| pipeline::apply_chain(&self.inner, ann.as_ref(), &chain, image_id))
            .map_err(err)?;
        Ok((PyRaster { inner: out }, to_py_json(py, &steps)?, set_to_boxes(ann)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Raster({}x{}x{})",
            self.inner.width(),
            self.inner.height(),
            self.inner.channels()
        )
    }
}

/// Names of the twelve corruption kinds.
#[pyfunction]
fn corruption_names() -> Vec<&'static str> {
    CorruptionKind::ALL.iter().map(|k| k.name()).collect()
}

/// Parameter table entry for `(kind, severity)` as a dict.
#[pyfunction]
fn severity_params<'py>(py: Python<'py>, kind: &str, severity: u32) -> PyResult<Bound<'py, PyAny>> {
    let params = reobench::severity_params(self::kind(kind)?, Severity(severity)).map_err(err)?;
    to_py_json(py, &params)
}

/// Generates a corrupted tree from a manifest JSON file or a dataset
/// directory. Returns the generation report as a dict.
#[pyfunction]
#[pyo3(signature = (input, out, kinds = None, severities = None, seed = None, workers = 0))]
fn generate<'py>(
    py: Python<'py>,
    input: PathBuf,
    out: PathBuf,
    kinds: Option<Vec<String>>,
    severities: Option<(u32, u32)>,
    seed: Option<u64>,
    workers: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut manifest = if input.is_file() {
        DatasetManifest::load(&input).map_err(err)?
    } else {
        pipeline::ingest(&input, None).map_err(err)?
    };
    if let Some(kinds) = kinds {
        manifest.corruption_grid.kinds = kinds.iter().map(|k| kind(k)).collect::<PyResult<_>>()?;
    }
    if let Some((lo, hi)) = severities {
        manifest.corruption_grid.severities = [lo, hi];
    }
    if let Some(seed) = seed {
        manifest.seed = seed;
    }
    let mut plan = GenerationPlan::from_manifest(manifest, out).map_err(err)?;
    plan.workers = workers;
    let report = py.detach(|| pipeline::generate(&plan)).map_err(err)?;
    to_py_json(py, &report)
}

/// IoU of two convex quadrilaterals given as four `(x, y)` corners.
#[pyfunction]
fn polygon_iou(a: Corners, b: Corners) -> PyResult<f64> {
    metrics::polygon_iou(&a, &b).map_err(err)
}

/// `(corrupted_avg, r_tp)` from a clean score and `{kind: score}`.
#[pyfunction]
#[pyo3(signature = (clean, corrupted, weights = None))]
fn r_tp(clean: f64, corrupted: BTreeMap<String, f64>, weights: Option<Vec<f64>>) -> PyResult<(f64, f64)> {
    let columns = corrupted
        .iter()
        .map(|(k, v)| Ok((kind(k)?, *v)))
        .collect::<PyResult<Vec<_>>>()?;
    let rep = metrics::r_tp(clean, &columns, weights.as_deref()).map_err(err)?;
    Ok((rep.corrupted_avg, rep.r_tp))
}

/// Mean IoU (percent) over `(pred, gt)` pairs of class-index arrays of
/// shape `height x width`, flattened row-major.
#[pyfunction]
fn miou(pairs: Vec<(Vec<u8>, Vec<u8>)>, width: usize, height: usize, num_classes: usize) -> PyResult<f64> {
    let masks = pairs
        .into_iter()
        .map(|(p, g)| Ok((SegMask::new(width, height, p)?, SegMask::new(width, height, g)?)))
        .collect::<reobench::Result<Vec<_>>>()
        .map_err(err)?;
    let refs: Vec<(&SegMask, &SegMask)> = masks.iter().map(|(p, g)| (p, g)).collect();
    metrics::miou(&refs, num_classes).map_err(err)
}

/// Oriented-box mAP (percent). `detections` are
/// `(image_id, corners, category, confidence)`; `ground_truth` maps image
/// ids to `[(corners, category)]`.
#[pyfunction]
#[pyo3(signature = (detections, ground_truth, iou_threshold = 0.5))]
fn mean_ap(
    detections: Vec<(String, Corners, String, f64)>,
    ground_truth: BTreeMap<String, Vec<(Corners, String)>>,
    iou_threshold: f64,
) -> PyResult<f64> {
    let dets: Vec<Detection> = detections
        .into_iter()
        .map(|(image_id, corners, category, confidence)| Detection {
            image_id,
            corners,
            category,
            confidence,
        })
        .collect();
    let gts = ground_truth
        .into_iter()
        .map(|(id, boxes)| {
            let boxes = boxes
                .into_iter()
                .map(|(corners, category)| OrientedBox {
                    corners,
                    category,
                    difficult: false,
                })
                .collect();
            (id, boxes)
        })
        .collect();
    metrics::mean_ap(&dets, &gts, iou_threshold).map_err(err)
}

/// Fréchet distance between two embedding sets given as row lists.
#[pyfunction]
fn frechet(py: Python<'_>, a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    py.detach(|| {
        let sa = embedding_stats(&EmbeddingSet::new(a, "a")?)?;
        let sb = embedding_stats(&EmbeddingSet::new(b, "b")?)?;
        frechet_distance(&sa, &sb)
    })
    .map_err(err)
}

#[pymodule]
#[pyo3(name = "reobench")]
fn reobench_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("DEFAULT_SEED", DEFAULT_SEED)?;
    m.add_class::<PyRaster>()?;
    m.add_function(wrap_pyfunction!(corruption_names, m)?)?;
    m.add_function(wrap_pyfunction!(severity_params, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(polygon_iou, m)?)?;
    m.add_function(wrap_pyfunction!(r_tp, m)?)?;
    m.add_function(wrap_pyfunction!(miou, m)?)?;
    m.add_function(wrap_pyfunction!(mean_ap, m)?)?;
    m.add_function(wrap_pyfunction!(frechet, m)?)?;
    Ok(())
}
