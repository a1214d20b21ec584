//! Value-domain corruptions: additive Gaussian noise, salt-and-pepper
//! impulses, brightness/contrast, white haze, and JPEG round trips.

use jpeg_encoder::{ColorType, Encoder, QuantizationTableType, SamplingFactor};
use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::raster::{clamp_unit, decode_image, ImageRaster};
use crate::rng::RngStream;

/// `out = clamp(img + n)`, with `n ~ N(0, sigma^2)` drawn per sample in
/// raster order.
pub fn gaussian_noise(img: &ImageRaster, sigma: f64, rng: &mut RngStream) -> Result<ImageRaster> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            value: sigma,
            reason: "must be finite and >= 0",
        });
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    Ok(img.map_values(|v| v + normal.sample(rng) as f32))
}

/// Replaces exactly `round(amount * W * H)` distinct pixel sites; the first
/// `ceil(n / 2)` drawn become white in every channel, the rest black.
pub fn salt_pepper(img: &ImageRaster, amount: f64, rng: &mut RngStream) -> Result<ImageRaster> {
    if !(0.0..=1.0).contains(&amount) {
        return Err(Error::InvalidParameter {
            name: "amount",
            value: amount,
            reason: "must lie in [0, 1]",
        });
    }
    let sites = img.pixel_count();
    let n = (amount * sites as f64).round() as usize;
    let mut out = img.clone().into_data();
    if n == 0 {
        return Ok(img.clone());
    }
    let salt = n.div_ceil(2);
    let ch = img.channels();
    for (i, site) in sample(rng, sites, n).into_iter().enumerate() {
        let value = if i < salt { 1.0 } else { 0.0 };
        out[site * ch..(site + 1) * ch].fill(value);
    }
    Ok(ImageRaster::from_parts_unchecked(img.width(), img.height(), ch, out))
}

/// `out = clamp((v - 0.5) * contrast + 0.5 + brightness)`.
pub fn brightness_contrast(img: &ImageRaster, brightness: f64, contrast: f64) -> Result<ImageRaster> {
    if contrast.is_nan() || contrast < 0.0 {
        return Err(Error::InvalidParameter {
            name: "contrast",
            value: contrast,
            reason: "must be >= 0",
        });
    }
    Ok(img.map_values(|v| ((f64::from(v) - 0.5) * contrast + 0.5 + brightness) as f32))
}

/// Uniform blend toward white: `out = (1 - a) * v + a`.
pub fn haze(img: &ImageRaster, intensity: f64) -> Result<ImageRaster> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::InvalidParameter {
            name: "intensity",
            value: intensity,
            reason: "must lie in [0, 1]",
        });
    }
    if intensity == 0.0 {
        return Ok(img.clone());
    }
    Ok(img.map_values(|v| ((1.0 - intensity) * f64::from(v) + intensity) as f32))
}

/// ITU-T T.81 Annex K luminance table, natural (row-major) order.
pub const ANNEX_K_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// ITU-T T.81 Annex K chrominance table, natural order.
pub const ANNEX_K_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Baseline JPEG settings: 4:2:0 chroma subsampling and Annex K tables
/// scaled by the IJG quality rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JpegCodecConfig {
    quality: u8,
    luma: [u16; 64],
    chroma: [u16; 64],
}

impl JpegCodecConfig {
    pub fn new(quality: u8) -> Result<Self> {
        if !(1..=100).contains(&quality) {
            return Err(Error::InvalidParameter {
                name: "quality",
                value: f64::from(quality),
                reason: "must lie in 1..=100",
            });
        }
        Ok(Self {
            quality,
            luma: scale_table(&ANNEX_K_LUMA, quality),
            chroma: scale_table(&ANNEX_K_CHROMA, quality),
        })
    }

    pub fn quality(&self) -> u8 {
        self.quality
    }

    pub fn luma_table(&self) -> &[u16; 64] {
        &self.luma
    }

    pub fn chroma_table(&self) -> &[u16; 64] {
        &self.chroma
    }
}

/// IJG `jpeg_quality_scaling` followed by `jpeg_add_quant_table` with
/// baseline clamping to `1..=255`.
fn scale_table(base: &[u16; 64], quality: u8) -> [u16; 64] {
    let q = u32::from(quality);
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    base.map(|b| ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16)
}

pub fn encode_jpeg(img: &ImageRaster, config: &JpegCodecConfig) -> Result<Vec<u8>> {
    let color = match img.channels() {
        1 => ColorType::Luma,
        3 => ColorType::Rgb,
        n => return Err(Error::Encode(format!("{n}-channel rasters are not supported"))),
    };
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 || w > usize::from(u16::MAX) || h > usize::from(u16::MAX) {
        return Err(Error::Encode(format!("unsupported dimensions {w}x{h}")));
    }
    let mut buf = Vec::new();
    let mut enc = Encoder::new(&mut buf, config.quality);
    enc.set_sampling_factor(SamplingFactor::F_2_2);
    enc.set_quantization_tables(
        QuantizationTableType::Custom(Box::new(config.luma)),
        QuantizationTableType::Custom(Box::new(config.chroma)),
    );
    enc.encode(&img.to_u8(), w as u16, h as u16, color)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(buf)
}

/// Encodes as baseline JPEG at `quality`, then decodes back.
pub fn jpeg_artifacts(img: &ImageRaster, quality: u8) -> Result<ImageRaster> {
    let bytes = encode_jpeg(img, &JpegCodecConfig::new(quality)?)?;
    let out = decode_image(&bytes)?;
    if !out.same_shape(img) {
        return Err(Error::Encode("decoded shape differs from input".into()));
    }
    // decode goes through u8, so values are already in range; clamp anyway
    // in case a decoder hands back something unexpected.
    Ok(out.map_values(clamp_unit))
}
