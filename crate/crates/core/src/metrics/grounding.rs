use std::collections::BTreeMap;

use super::polygon::polygon_iou;
use crate::annotation::{ReferringRecord, RegionBox};
use crate::error::{Error, Result};

/// Identifier joining a referring record with its prediction.
pub fn record_id(image_id: &str, index: usize, record: &ReferringRecord) -> String {
    record.id.clone().unwrap_or_else(|| format!("{image_id}#{index}"))
}

/// Share of records whose predicted box reaches IoU >= 0.5 with the target,
/// as a percentage. Records without a prediction, or with an unusable
/// predicted polygon, count as failures.
pub fn grounding_accuracy(preds: &BTreeMap<String, RegionBox>, gts: &BTreeMap<String, RegionBox>) -> Result<f64> {
    if let Some(id) = preds.keys().find(|id| !gts.contains_key(*id)) {
        return Err(Error::IdMismatch(format!("prediction `{id}` has no referring record")));
    }
    if gts.is_empty() {
        return Err(Error::IdMismatch("empty evaluation set".into()));
    }
    let mut hits = 0usize;
    for (id, target) in gts {
        let target = target.corners();
        // surface malformed ground truth rather than silently scoring it
        polygon_iou(&target, &target)?;
        if let Some(pred) = preds.get(id) {
            if polygon_iou(&pred.corners(), &target).unwrap_or(0.0) >= 0.5 {
                hits += 1;
            }
        }
    }
    Ok(100.0 * hits as f64 / gts.len() as f64)
}
