//! Fréchet distance between Gaussian fits of embedding sets.
//!
//! Embeddings come from any external feature extractor. Files are either a
//! binary matrix (`u32` n, `u32` D, then `n * D` little-endian `f32`,
//! row-major) or JSON lines of `{"id": ..., "vector": [...]}`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ImageRaster;

const EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    pub source: String,
}

#[derive(Deserialize, Serialize)]
struct JsonEmbedding {
    #[serde(default)]
    id: Option<String>,
    vector: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(rows: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(dim, r.len()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_flat(data, dim, source)
    }

    pub fn from_flat(data: Vec<f64>, dim: usize, source: impl Into<String>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(dim, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "embedding",
                value: f64::NAN,
                reason: "values must be finite",
            });
        }
        Ok(Self {
            n: data.len() / dim,
            dim,
            data,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Loads `.jsonl`/`.json` as JSON lines and anything else as the binary matrix.
    pub fn load(path: &Path) -> Result<Self> {
        let bad = |message: String| Error::EmbeddingFormat {
            path: path.to_path_buf(),
            message,
        };
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let source = path.display().to_string();
        let is_json = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
        if is_json {
            let text = String::from_utf8(bytes).map_err(|e| bad(e.to_string()))?;
            let rows = text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| {
                    serde_json::from_str::<JsonEmbedding>(l)
                        .map(|r| r.vector)
                        .map_err(|e| bad(format!("line {}: {e}", i + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            return Self::new(rows, source);
        }
        if bytes.len() < 8 {
            return Err(bad("missing header".into()));
        }
        let n = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
        let dim = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let body = &bytes[8..];
        if body.len() != n * dim * 4 {
            return Err(bad(format!(
                "header says {n}x{dim} floats, body has {} bytes",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        Self::from_flat(data, dim, source)
    }

    /// Writes the binary matrix format (values narrowed to `f32`).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.data.len() * 4);
        out.extend((self.n as u32).to_le_bytes());
        out.extend((self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend((*v as f32).to_le_bytes());
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        (0..self.n)
            .map(|i| {
                let rec = JsonEmbedding {
                    id: Some(i.to_string()),
                    vector: self.row(i).to_vec(),
                };
                serde_json::to_string(&rec).expect("plain data") + "\n"
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Sample mean and unbiased (n - 1) covariance.
pub fn embedding_stats(e: &EmbeddingSet) -> Result<EmbeddingStats> {
    if e.n < 2 {
        return Err(Error::TooFewSamples(e.n));
    }
    let x = DMatrix::from_row_slice(e.n, e.dim, &e.data);
    let mean = x.row_mean().transpose();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (e.n as f64 - 1.0);
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(EmbeddingStats { mean, cov })
}

fn eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::NonConvergentEigen)
}

/// Principal square root of a symmetric positive semi-definite matrix;
/// eigenvalues below zero (rounding) are clamped.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = eigen(m)?;
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

fn regularized(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let min = eigen(cov)?.eigenvalues.min();
    Ok(if min > 0.0 {
        cov.clone()
    } else {
        cov + DMatrix::identity(cov.nrows(), cov.ncols()) * EPS
    })
}

/// `|mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)`, clamped at 0.
/// Covariances that are not positive definite get `1e-6 * I` added.
pub fn frechet_distance(a: &EmbeddingStats, b: &EmbeddingStats) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::DimensionMismatch(a.mean.len(), b.mean.len()));
    }
    let (sa, sb) = (regularized(&a.cov)?, regularized(&b.cov)?);
    let root_a = sqrtm_psd(&sa)?;
    let mut inner = &root_a * &sb * &root_a;
    inner = (&inner + inner.transpose()) * 0.5;
    let cross = sqrtm_psd(&inner)?;
    let d = (&a.mean - &b.mean).norm_squared() + sa.trace() + sb.trace() - 2.0 * cross.trace();
    Ok(d.max(0.0))
}

/// Distance of each corrupted set to the clean reference, in the order given.
pub fn severity_sweep(clean: &EmbeddingSet, corrupted: &[(u32, EmbeddingSet)]) -> Result<Vec<(u32, f64)>> {
    let reference = embedding_stats(clean)?;
    corrupted
        .iter()
        .map(|(sev, set)| {
            if set.dim != clean.dim {
                return Err(Error::DimensionMismatch(clean.dim, set.dim));
            }
            Ok((*sev, frechet_distance(&reference, &embedding_stats(set)?)?))
        })
        .collect()
}

/// Maps an image to a fixed-length feature vector.
pub trait Embedder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, img: &ImageRaster) -> Vec<f64>;
}

/// Cheap hand-made features: per-channel means over a `grid x grid`
/// partition plus the mean absolute horizontal and vertical gradient per
/// channel. Enough to separate noise, blur and contrast changes.
#[derive(Debug, Clone, Copy)]
pub struct PooledStatsEmbedder {
    pub grid: usize,
    pub channels: usize,
}

impl Embedder for PooledStatsEmbedder {
    fn dim(&self) -> usize {
        self.channels * (self.grid * self.grid + 2)
    }

    fn embed(&self, img: &ImageRaster) -> Vec<f64> {
        let (w, h, ch) = (img.width(), img.height(), img.channels().min(self.channels));
        let g = self.grid;
        let mut feats = vec![0.0; self.dim()];
        let mut counts = vec![0usize; g * g];
        for y in 0..h {
            for x in 0..w {
                let cell = (y * g / h) * g + x * g / w;
                counts[cell] += 1;
                for c in 0..ch {
                    feats[c * (g * g + 2) + cell] += f64::from(img.get(x, y, c));
                }
            }
        }
        for c in 0..ch {
            let base = c * (g * g + 2);
            for cell in 0..g * g {
                feats[base + cell] /= counts[cell].max(1) as f64;
            }
            let (mut gx, mut gy) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let v = f64::from(img.get(x, y, c));
                    if x + 1 < w {
                        gx += (f64::from(img.get(x + 1, y, c)) - v).abs();
                    }
                    if y + 1 < h {
                        gy += (f64::from(img.get(x, y + 1, c)) - v).abs();
                    }
                }
            }
            feats[base + g * g] = gx / ((w.saturating_sub(1)) * h).max(1) as f64;
            feats[base + g * g + 1] = gy / (w * h.saturating_sub(1)).max(1) as f64;
        }
        feats
    }
}
