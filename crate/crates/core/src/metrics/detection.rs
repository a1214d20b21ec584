use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::polygon::{polygon_iou, Quad};
use crate::annotation::OrientedBox;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub corners: Quad,
    pub category: String,
    pub confidence: f64,
}

/// All-points AP from a ranked list of true/false-positive flags:
/// area under the monotone precision envelope of the PR curve.
pub fn average_precision(hits: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    let mut tp = 0usize;
    for (k, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .filter(|&i| recall[i] != recall[i - 1])
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}

/// Ranks one class's detections and greedily matches each to the
/// highest-IoU unmatched ground-truth box in its image.
fn class_hits(dets: &[(usize, &Detection)], gts: &BTreeMap<&str, Vec<&OrientedBox>>, iou_thresh: f64) -> Vec<bool> {
    let mut order: Vec<&(usize, &Detection)> = dets.iter().collect();
    order.sort_by(|(ia, a), (ib, b)| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.image_id.cmp(&b.image_id))
            .then_with(|| ia.cmp(ib))
    });
    let mut matched: BTreeMap<&str, Vec<bool>> = gts.iter().map(|(k, v)| (*k, vec![false; v.len()])).collect();
    order
        .into_iter()
        .map(|(_, det)| {
            let Some(boxes) = gts.get(det.image_id.as_str()) else {
                return false;
            };
            let used = matched.get_mut(det.image_id.as_str()).expect("same keys");
            let best = boxes
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, g)| (j, polygon_iou(&det.corners, &g.corners).unwrap_or(0.0)))
                .fold(None, |acc: Option<(usize, f64)>, (j, iou)| match acc {
                    Some((_, best)) if best >= iou => acc,
                    _ => Some((j, iou)),
                });
            match best {
                Some((j, iou)) if iou >= iou_thresh => {
                    used[j] = true;
                    true
                }
                _ => false,
            }
        })
        .collect()
}

/// Mean over classes with at least one ground-truth box of single-threshold
/// AP, as a percentage. Returns 0 when there is no ground truth at all.
pub fn mean_ap(detections: &[Detection], gts: &BTreeMap<String, Vec<OrientedBox>>, iou_thresh: f64) -> Result<f64> {
    if let Some(d) = detections.iter().find(|d| !gts.contains_key(&d.image_id)) {
        return Err(Error::IdMismatch(format!(
            "detection for unknown image `{}`",
            d.image_id
        )));
    }
    if let Some(d) = detections.iter().find(|d| !(0.0..=1.0).contains(&d.confidence)) {
        return Err(Error::InvalidParameter {
            name: "confidence",
            value: d.confidence,
            reason: "must lie in [0, 1]",
        });
    }
    let classes: BTreeSet<&str> = gts.values().flatten().map(|b| b.category.as_str()).collect();
    if classes.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = classes
        .iter()
        .map(|&class| {
            let class_gts: BTreeMap<&str, Vec<&OrientedBox>> = gts
                .iter()
                .map(|(id, boxes)| (id.as_str(), boxes.iter().filter(|b| b.category == class).collect()))
                .collect();
            let num_gt = class_gts.values().map(Vec::len).sum();
            let dets: Vec<(usize, &Detection)> = detections
                .iter()
                .enumerate()
                .filter(|(_, d)| d.category == class)
                .collect();
            average_precision(&class_hits(&dets, &class_gts, iou_thresh), num_gt)
        })
        .sum();
    Ok(100.0 * total / classes.len() as f64)
}
