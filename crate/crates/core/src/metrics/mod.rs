//! Task metrics, severity aggregation, the relative performance drop and
//! result-table rendering.
//!
//! All task metrics are percentages in `[0, 100]`.

mod classification;
mod detection;
mod grounding;
mod polygon;
pub mod predictions;
mod report;
mod robustness;
mod segmentation;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use classification::accuracy;
pub use detection::{average_precision, mean_ap, Detection};
pub use grounding::{grounding_accuracy, record_id};
pub use polygon::{is_convex, polygon_area, polygon_iou, Quad};
pub use report::{build_reports, parse_csv_report, render_report, severity_curves, ParsedRow, ReportFormat};
pub use robustness::{aggregate, r_tp, AggregationPolicy, Condition, RobustnessReport, ScoreCell};
pub use segmentation::{miou, ConfusionMatrix};

/// Evaluation task of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Segmentation,
    Detection,
    Grounding,
    Captioning,
    Vqa,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Classification,
        Task::Segmentation,
        Task::Detection,
        Task::Grounding,
        Task::Captioning,
        Task::Vqa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Segmentation => "segmentation",
            Task::Detection => "detection",
            Task::Grounding => "grounding",
            Task::Captioning => "captioning",
            Task::Vqa => "vqa",
        }
    }

    /// Vision-language tasks are not evaluated under geometric corruptions.
    pub fn is_vision_language(self) -> bool {
        matches!(self, Task::Grounding | Task::Captioning | Task::Vqa)
    }

    /// Metric label written into score cells.
    pub fn metric_name(self) -> &'static str {
        match self {
            Task::Classification => "accuracy",
            Task::Segmentation => "miou",
            Task::Detection => "map50",
            Task::Grounding => "acc@0.5",
            Task::Captioning | Task::Vqa => "mean_score",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown task `{s}` (expected one of classification, segmentation, detection, grounding, captioning, vqa)")))
    }
}

/// Mean of externally judged per-sample scores in `[0, 1]`, as a percentage.
pub fn mean_score(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::IdMismatch("no scored samples".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidParameter {
            name: "score",
            value: *bad,
            reason: "per-sample scores must lie in [0, 1]",
        });
    }
    Ok(100.0 * scores.iter().sum::<f64>() / scores.len() as f64)
}
