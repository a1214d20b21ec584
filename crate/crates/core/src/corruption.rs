//! The twelve corruption kinds, their severity grading, and the parameter
//! table each severity resolves to.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    BrightnessContrast,
    Cloud,
    #[serde(rename = "compression_artifacts")]
    Compression,
    DataGaps,
    GaussianBlur,
    GaussianNoise,
    Haze,
    MotionBlur,
    Rotate,
    SaltPepper,
    Scale,
    Translate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Environmental,
    Sensor,
    Geometric,
}

impl CorruptionKind {
    /// All kinds, in report column order.
    pub const ALL: [CorruptionKind; 12] = [
        CorruptionKind::BrightnessContrast,
        CorruptionKind::Cloud,
        CorruptionKind::Compression,
        CorruptionKind::DataGaps,
        CorruptionKind::GaussianBlur,
        CorruptionKind::GaussianNoise,
        CorruptionKind::Haze,
        CorruptionKind::MotionBlur,
        CorruptionKind::Rotate,
        CorruptionKind::SaltPepper,
        CorruptionKind::Scale,
        CorruptionKind::Translate,
    ];

    /// Canonical name; also the output directory name.
    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::BrightnessContrast => "brightness_contrast",
            CorruptionKind::Cloud => "cloud",
            CorruptionKind::Compression => "compression_artifacts",
            CorruptionKind::DataGaps => "data_gaps",
            CorruptionKind::GaussianBlur => "gaussian_blur",
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::Haze => "haze",
            CorruptionKind::MotionBlur => "motion_blur",
            CorruptionKind::Rotate => "rotate",
            CorruptionKind::SaltPepper => "salt_pepper",
            CorruptionKind::Scale => "scale",
            CorruptionKind::Translate => "translate",
        }
    }

    /// Column header used in rendered result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            CorruptionKind::BrightnessContrast => "Brightness Contrast",
            CorruptionKind::Cloud => "Cloud",
            CorruptionKind::Compression => "Compression Artifacts",
            CorruptionKind::DataGaps => "Data Gaps",
            CorruptionKind::GaussianBlur => "Gauss Blur",
            CorruptionKind::GaussianNoise => "Gauss Noise",
            CorruptionKind::Haze => "Haze",
            CorruptionKind::MotionBlur => "Motion Blur",
            CorruptionKind::Rotate => "Rotate",
            CorruptionKind::SaltPepper => "Salt Pepper",
            CorruptionKind::Scale => "Scale",
            CorruptionKind::Translate => "Translate",
        }
    }

    pub fn category(self) -> Category {
        match self {
            CorruptionKind::Cloud | CorruptionKind::BrightnessContrast | CorruptionKind::Haze => {
                Category::Environmental
            }
            CorruptionKind::GaussianBlur
            | CorruptionKind::MotionBlur
            | CorruptionKind::GaussianNoise
            | CorruptionKind::SaltPepper
            | CorruptionKind::DataGaps
            | CorruptionKind::Compression => Category::Sensor,
            CorruptionKind::Rotate | CorruptionKind::Scale | CorruptionKind::Translate => Category::Geometric,
        }
    }

    pub fn is_geometric(self) -> bool {
        self.category() == Category::Geometric
    }

    pub fn max_severity(self) -> u32 {
        match self {
            CorruptionKind::Haze => 9,
            _ => 5,
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        let kind = match norm.as_str() {
            "brightness_contrast" | "brightness" | "contrast" => CorruptionKind::BrightnessContrast,
            "cloud" | "clouds" => CorruptionKind::Cloud,
            "compression_artifacts" | "compression" | "jpeg" => CorruptionKind::Compression,
            "data_gaps" | "gaps" | "data_gap" => CorruptionKind::DataGaps,
            "gaussian_blur" | "gauss_blur" => CorruptionKind::GaussianBlur,
            "gaussian_noise" | "gauss_noise" => CorruptionKind::GaussianNoise,
            "haze" => CorruptionKind::Haze,
            "motion_blur" => CorruptionKind::MotionBlur,
            "rotate" | "rotation" => CorruptionKind::Rotate,
            "salt_pepper" | "salt_and_pepper" | "salt_pepper_noise" => CorruptionKind::SaltPepper,
            "scale" | "scaling" => CorruptionKind::Scale,
            "translate" | "translation" => CorruptionKind::Translate,
            _ => return Err(Error::UnknownCorruption(s.to_string())),
        };
        Ok(kind)
    }
}

/// A severity grade. Levels 1..=5 are valid for every kind; haze also
/// accepts 6..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Severity(pub u32);

impl Severity {
    pub fn level(self) -> u32 {
        self.0
    }

    pub fn validate(self, kind: CorruptionKind) -> Result<Self> {
        if (1..=kind.max_severity()).contains(&self.0) {
            Ok(self)
        } else {
            Err(Error::InvalidSeverity {
                kind,
                level: self.0,
                max: kind.max_severity(),
            })
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Concrete parameters for one corruption. Fields holding `None` are drawn
/// from the per-image stream when the corruption is applied; the applied
/// record carries the drawn values.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CorruptionParams {
    GaussianNoise {
        sigma: f64,
    },
    SaltPepper {
        amount: f64,
    },
    GaussianBlur {
        kernel: usize,
    },
    MotionBlur {
        kernel: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        angle: Option<f64>,
    },
    BrightnessContrast {
        brightness: f64,
        contrast: f64,
    },
    Cloud {
        threshold: f64,
        octaves: u32,
        persistence: f64,
        /// Base noise period in pixels; `None` means a quarter of the image width.
        #[serde(skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        field_seed: Option<u64>,
    },
    Haze {
        intensity: f64,
    },
    DataGaps {
        count: usize,
        width: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        offsets: Option<Vec<usize>>,
    },
    Compression {
        quality: u8,
    },
    Rotate {
        angle: f64,
    },
    Scale {
        ratio: f64,
    },
    Translate {
        max_offset: u32,
        #[serde(skip_serializing_if = "Option::is_none")]
        dx: Option<i64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        dy: Option<i64>,
    },
}

pub const CLOUD_OCTAVES: u32 = 4;
pub const CLOUD_PERSISTENCE: f64 = 0.5;

const GAUSSIAN_NOISE_SIGMA: [f64; 5] = [0.04, 0.05, 0.06, 0.07, 0.08];
const SALT_PEPPER_AMOUNT: [f64; 5] = [0.005, 0.01, 0.02, 0.03, 0.05];
const GAUSSIAN_BLUR_KERNEL: [usize; 5] = [3, 5, 7, 9, 11];
const MOTION_BLUR_KERNEL: [usize; 5] = [2, 4, 6, 8, 10];
const BRIGHTNESS_CONTRAST: [(f64, f64); 5] = [(0.0, 1.0), (0.1, 0.8), (0.2, 0.6), (0.3, 0.4), (0.4, 0.2)];
const CLOUD_THRESHOLD: [f64; 5] = [0.90, 0.85, 0.80, 0.75, 0.70];
const HAZE_INTENSITY: [f64; 9] = [0.20, 0.30, 0.40, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95];
const DATA_GAPS: [(usize, usize); 5] = [(2, 3), (3, 4), (4, 5), (5, 6), (6, 7)];
const JPEG_QUALITY: [u8; 5] = [30, 25, 20, 15, 10];
const ROTATION_DEGREES: [f64; 5] = [30.0, 45.0, 60.0, 75.0, 90.0];
const SCALE_RATIO: [f64; 5] = [0.9, 0.8, 0.7, 0.6, 0.5];
const TRANSLATION_PX: [u32; 5] = [15, 20, 25, 30, 35];

/// Looks up the parameter table for `(kind, severity)`.
pub fn severity_params(kind: CorruptionKind, severity: Severity) -> Result<CorruptionParams> {
    let i = (severity.validate(kind)?.0 - 1) as usize;
    Ok(match kind {
        CorruptionKind::GaussianNoise => CorruptionParams::GaussianNoise {
            sigma: GAUSSIAN_NOISE_SIGMA[i],
        },
        CorruptionKind::SaltPepper => CorruptionParams::SaltPepper {
            amount: SALT_PEPPER_AMOUNT[i],
        },
        CorruptionKind::GaussianBlur => CorruptionParams::GaussianBlur {
            kernel: GAUSSIAN_BLUR_KERNEL[i],
        },
        CorruptionKind::MotionBlur => CorruptionParams::MotionBlur {
            kernel: MOTION_BLUR_KERNEL[i],
            angle: None,
        },
        CorruptionKind::BrightnessContrast => {
            let (brightness, contrast) = BRIGHTNESS_CONTRAST[i];
            CorruptionParams::BrightnessContrast { brightness, contrast }
        }
        CorruptionKind::Cloud => CorruptionParams::Cloud {
            threshold: CLOUD_THRESHOLD[i],
            octaves: CLOUD_OCTAVES,
            persistence: CLOUD_PERSISTENCE,
            period: None,
            field_seed: None,
        },
        CorruptionKind::Haze => CorruptionParams::Haze {
            intensity: HAZE_INTENSITY[i],
        },
        CorruptionKind::DataGaps => {
            let (count, width) = DATA_GAPS[i];
            CorruptionParams::DataGaps {
                count,
                width,
                offsets: None,
            }
        }
        CorruptionKind::Compression => CorruptionParams::Compression {
            quality: JPEG_QUALITY[i],
        },
        CorruptionKind::Rotate => CorruptionParams::Rotate {
            angle: ROTATION_DEGREES[i],
        },
        CorruptionKind::Scale => CorruptionParams::Scale { ratio: SCALE_RATIO[i] },
        CorruptionKind::Translate => CorruptionParams::Translate {
            max_offset: TRANSLATION_PX[i],
            dx: None,
            dy: None,
        },
    })
}

impl CorruptionParams {
    pub fn kind(&self) -> CorruptionKind {
        match self {
            CorruptionParams::GaussianNoise { .. } => CorruptionKind::GaussianNoise,
            CorruptionParams::SaltPepper { .. } => CorruptionKind::SaltPepper,
            CorruptionParams::GaussianBlur { .. } => CorruptionKind::GaussianBlur,
            CorruptionParams::MotionBlur { .. } => CorruptionKind::MotionBlur,
            CorruptionParams::BrightnessContrast { .. } => CorruptionKind::BrightnessContrast,
            CorruptionParams::Cloud { .. } => CorruptionKind::Cloud,
            CorruptionParams::Haze { .. } => CorruptionKind::Haze,
            CorruptionParams::DataGaps { .. } => CorruptionKind::DataGaps,
            CorruptionParams::Compression { .. } => CorruptionKind::Compression,
            CorruptionParams::Rotate { .. } => CorruptionKind::Rotate,
            CorruptionParams::Scale { .. } => CorruptionKind::Scale,
            CorruptionParams::Translate { .. } => CorruptionKind::Translate,
        }
    }

    /// Replaces named fields with explicit values.
    pub fn with_overrides(mut self, overrides: &BTreeMap<String, f64>) -> Result<Self> {
        let kind = self.kind();
        for (name, &value) in overrides {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "override",
                    value,
                    reason: "must be finite",
                });
            }
            let unknown = || Error::UnknownParameter {
                kind,
                name: name.clone(),
            };
            match (&mut self, name.as_str()) {
                (CorruptionParams::GaussianNoise { sigma }, "sigma") => *sigma = non_negative("sigma", value)?,
                (CorruptionParams::SaltPepper { amount }, "amount") => *amount = unit("amount", value)?,
                (CorruptionParams::GaussianBlur { kernel }, "kernel") => *kernel = count("kernel", value, 1)?,
                (CorruptionParams::MotionBlur { kernel, .. }, "kernel") => *kernel = count("kernel", value, 1)?,
                (CorruptionParams::MotionBlur { angle, .. }, "angle") => *angle = Some(value),
                (CorruptionParams::BrightnessContrast { brightness, .. }, "brightness" | "b") => *brightness = value,
                (CorruptionParams::BrightnessContrast { contrast, .. }, "contrast" | "c") => {
                    *contrast = non_negative("contrast", value)?
                }
                (CorruptionParams::Cloud { threshold, .. }, "threshold") => {
                    if !(value > 0.0 && value <= 1.0) {
                        return Err(Error::InvalidParameter {
                            name: "threshold",
                            value,
                            reason: "must lie in (0, 1]",
                        });
                    }
                    *threshold = value
                }
                (CorruptionParams::Cloud { octaves, .. }, "octaves") => *octaves = count("octaves", value, 1)? as u32,
                (CorruptionParams::Cloud { persistence, .. }, "persistence") => {
                    *persistence = non_negative("persistence", value)?
                }
                (CorruptionParams::Cloud { period, .. }, "period") => {
                    if value < 2.0 {
                        return Err(Error::InvalidParameter {
                            name: "period",
                            value,
                            reason: "must be >= 2",
                        });
                    }
                    *period = Some(value)
                }
                (CorruptionParams::Cloud { field_seed, .. }, "seed" | "field_seed") => {
                    *field_seed = Some(count("seed", value, 0)? as u64)
                }
                (CorruptionParams::Haze { intensity }, "intensity") => *intensity = unit("intensity", value)?,
                (CorruptionParams::DataGaps { count: n, .. }, "count") => *n = count("count", value, 0)?,
                (CorruptionParams::DataGaps { width, .. }, "width") => *width = count("width", value, 0)?,
                (CorruptionParams::Compression { quality }, "quality") => {
                    let q = count("quality", value, 1)?;
                    if q > 100 {
                        return Err(Error::InvalidParameter {
                            name: "quality",
                            value,
                            reason: "must lie in 1..=100",
                        });
                    }
                    *quality = q as u8
                }
                (CorruptionParams::Rotate { angle }, "angle") => *angle = value,
                (CorruptionParams::Scale { ratio }, "ratio") => {
                    if value <= 0.0 {
                        return Err(Error::InvalidParameter {
                            name: "ratio",
                            value,
                            reason: "must be positive",
                        });
                    }
                    *ratio = value
                }
                (CorruptionParams::Translate { max_offset, .. }, "max_offset" | "displacement") => {
                    *max_offset = count("max_offset", value, 0)? as u32
                }
                (CorruptionParams::Translate { dx, .. }, "dx") => *dx = Some(integer("dx", value)?),
                (CorruptionParams::Translate { dy, .. }, "dy") => *dy = Some(integer("dy", value)?),
                _ => return Err(unknown()),
            }
        }
        Ok(self)
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be >= 0",
        })
    }
}

fn unit(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

fn integer(name: &'static str, value: f64) -> Result<i64> {
    if value.fract() == 0.0 {
        Ok(value as i64)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be an integer",
        })
    }
}

fn count(name: &'static str, value: f64, min: i64) -> Result<usize> {
    let v = integer(name, value)?;
    if v < min {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "below minimum",
        });
    }
    Ok(v as usize)
}

/// One corruption to apply: kind, severity, the seed its random stream is
/// keyed on, and optional explicit parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: Severity,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, f64>,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u32, seed: u64) -> Self {
        Self {
            kind,
            severity: Severity(severity),
            seed,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, name: &str, value: f64) -> Self {
        self.overrides.insert(name.to_string(), value);
        self
    }

    pub fn resolve(&self) -> Result<CorruptionParams> {
        severity_params(self.kind, self.severity)?.with_overrides(&self.overrides)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_kinds_three_geometric() {
        assert_eq!(CorruptionKind::ALL.len(), 12);
        let geo: Vec<_> = CorruptionKind::ALL.iter().filter(|k| k.is_geometric()).collect();
        assert_eq!(
            geo,
            vec![
                &CorruptionKind::Rotate,
                &CorruptionKind::Scale,
                &CorruptionKind::Translate
            ]
        );
        let env = CorruptionKind::ALL
            .iter()
            .filter(|k| k.category() == Category::Environmental)
            .count();
        assert_eq!(env, 3);
    }

    #[test]
    fn names_round_trip() {
        for k in CorruptionKind::ALL {
            assert_eq!(k.name().parse::<CorruptionKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
        assert_eq!(
            "brightness".parse::<CorruptionKind>().unwrap(),
            CorruptionKind::BrightnessContrast
        );
        assert_eq!(
            "compression".parse::<CorruptionKind>().unwrap(),
            CorruptionKind::Compression
        );
        let err = "fog".parse::<CorruptionKind>().unwrap_err().to_string();
        for k in CorruptionKind::ALL {
            assert!(err.contains(k.name()));
        }
    }

    #[test]
    fn table_examples() {
        assert_eq!(
            severity_params(CorruptionKind::GaussianNoise, Severity(3)).unwrap(),
            CorruptionParams::GaussianNoise { sigma: 0.06 }
        );
        assert_eq!(
            severity_params(CorruptionKind::BrightnessContrast, Severity(1)).unwrap(),
            CorruptionParams::BrightnessContrast {
                brightness: 0.0,
                contrast: 1.0
            }
        );
        assert_eq!(
            severity_params(CorruptionKind::Haze, Severity(9)).unwrap(),
            CorruptionParams::Haze { intensity: 0.95 }
        );
    }

    #[test]
    fn out_of_range_severities_rejected() {
        for k in CorruptionKind::ALL {
            assert!(severity_params(k, Severity(0)).is_err());
            assert!(severity_params(k, Severity(10)).is_err());
            assert_eq!(severity_params(k, Severity(6)).is_ok(), k == CorruptionKind::Haze);
        }
    }

    /// Scalar that grows with distortion for each kind.
    fn distortion(p: &CorruptionParams) -> f64 {
        match *p {
            CorruptionParams::GaussianNoise { sigma } => sigma,
            CorruptionParams::SaltPepper { amount } => amount,
            CorruptionParams::GaussianBlur { kernel } => kernel as f64,
            CorruptionParams::MotionBlur { kernel, .. } => kernel as f64,
            CorruptionParams::BrightnessContrast { brightness, contrast } => brightness.abs() - contrast,
            CorruptionParams::Cloud { threshold, .. } => -threshold,
            CorruptionParams::Haze { intensity } => intensity,
            CorruptionParams::DataGaps { count, width, .. } => (count * width) as f64,
            CorruptionParams::Compression { quality } => -f64::from(quality),
            CorruptionParams::Rotate { angle } => angle,
            CorruptionParams::Scale { ratio } => -ratio,
            CorruptionParams::Translate { max_offset, .. } => f64::from(max_offset),
        }
    }

    #[test]
    fn schedules_are_strictly_monotone() {
        for k in CorruptionKind::ALL {
            let values: Vec<f64> = (1..=k.max_severity())
                .map(|s| distortion(&severity_params(k, Severity(s)).unwrap()))
                .collect();
            assert!(values.windows(2).all(|w| w[1] > w[0]), "{k}: {values:?}");
        }
    }

    #[test]
    fn overrides_apply_and_validate() {
        let spec = CorruptionSpec::new(CorruptionKind::MotionBlur, 2, 0).with_override("angle", 30.0);
        assert_eq!(
            spec.resolve().unwrap(),
            CorruptionParams::MotionBlur {
                kernel: 4,
                angle: Some(30.0)
            }
        );
        let bad = CorruptionSpec::new(CorruptionKind::Haze, 1, 0).with_override("sigma", 0.1);
        assert!(matches!(bad.resolve(), Err(Error::UnknownParameter { .. })));
        let bad = CorruptionSpec::new(CorruptionKind::Haze, 1, 0).with_override("intensity", 1.5);
        assert!(matches!(bad.resolve(), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn params_serialize_flat() {
        let p = severity_params(CorruptionKind::Translate, Severity(1)).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"max_offset":15}"#);
    }
}
