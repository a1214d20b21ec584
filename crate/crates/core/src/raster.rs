//! In-memory rasters and 8-bit PNG/JPEG I/O.
//!
//! Pixel values live in `[0, 1]` as `f32`, row-major and channel-interleaved.
//! Conversion to bytes happens only at the file boundary: `v / 255` on load
//! and `round(v * 255)` (clamped) on save.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageRaster {
    /// Builds a raster, rejecting wrong lengths and values outside `[0, 1]`.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidRaster("channel count must be >= 1".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidRaster(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRaster(format!("value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        let value = value.clamp(0.0, 1.0);
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds a raster from a per-sample function `f(x, y, c)`; results are clamped.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_unit(f(x, y, c)));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn from_u8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f32::from(b) / 255.0).collect();
        Self::new(width, height, channels, data)
    }

    /// Internal constructor for kernels that already guarantee the invariants.
    pub(crate) fn from_parts_unchecked(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[self.index(x, y, c)]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = self.index(x, y, 0);
        &self.data[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &ImageRaster) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Applies `f` to every sample, clamping the result back into `[0, 1]`.
    pub fn map_values(&self, mut f: impl FnMut(f32) -> f32) -> ImageRaster {
        let data = self.data.iter().map(|&v| clamp_unit(f(v))).collect();
        Self::from_parts_unchecked(self.width, self.height, self.channels, data)
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn to_dynamic_image(&self) -> Result<DynamicImage> {
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = self.to_u8();
        let img = match self.channels {
            1 => image::GrayImage::from_raw(w, h, bytes).map(DynamicImage::ImageLuma8),
            2 => image::GrayAlphaImage::from_raw(w, h, bytes).map(DynamicImage::ImageLumaA8),
            3 => image::RgbImage::from_raw(w, h, bytes).map(DynamicImage::ImageRgb8),
            4 => image::RgbaImage::from_raw(w, h, bytes).map(DynamicImage::ImageRgba8),
            n => {
                return Err(Error::UnsupportedFormat(format!(
                    "{n}-channel rasters cannot be written as 8-bit images"
                )))
            }
        };
        img.ok_or_else(|| Error::InvalidRaster("buffer size mismatch".into()))
    }

    pub fn from_dynamic_image(img: DynamicImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let (channels, bytes) = match img {
            DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
            DynamicImage::ImageLumaA8(b) => (2, b.into_raw()),
            DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
            DynamicImage::ImageRgba8(b) => (4, b.into_raw()),
            other => {
                return Err(Error::UnsupportedFormat(format!(
                    "only 8-bit images are supported, got {:?}",
                    other.color()
                )))
            }
        };
        Self::from_u8(w, h, channels, &bytes)
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Png,
    Jpeg { quality: u8 },
}

impl RasterFormat {
    pub fn from_extension(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(RasterFormat::Png),
            "jpg" | "jpeg" => Ok(RasterFormat::Jpeg { quality: 95 }),
            _ => Err(Error::UnsupportedFormat(format!(
                "unrecognized extension on {}",
                path.display()
            ))),
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRaster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Decode { message, .. } => Error::Decode {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Decodes PNG or JPEG bytes (format sniffed from the header).
pub fn decode_image(bytes: &[u8]) -> Result<ImageRaster> {
    let format = image::guess_format(bytes).map_err(|e| Error::Decode {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::UnsupportedFormat(format!("{format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    ImageRaster::from_dynamic_image(img)
}

pub fn encode_image(raster: &ImageRaster, format: RasterFormat) -> Result<Vec<u8>> {
    match format {
        RasterFormat::Png => {
            let mut out = Cursor::new(Vec::new());
            raster
                .to_dynamic_image()?
                .write_to(&mut out, ImageFormat::Png)
                .map_err(|e| Error::Encode(e.to_string()))?;
            Ok(out.into_inner())
        }
        RasterFormat::Jpeg { quality } => {
            crate::photometric::encode_jpeg(raster, &crate::photometric::JpegCodecConfig::new(quality)?)
        }
    }
}

pub fn save_image(raster: &ImageRaster, path: impl AsRef<Path>, format: RasterFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(raster, format)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
