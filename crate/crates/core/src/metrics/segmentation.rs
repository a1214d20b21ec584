use rayon::prelude::*;

use crate::annotation::SegMask;
use crate::error::{Error, Result};

/// `counts[gt * n + pred]` over all accumulated pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn accumulate(&mut self, pred: &SegMask, gt: &SegMask) -> Result<()> {
        if (pred.width, pred.height) != (gt.width, gt.height) {
            return Err(Error::ShapeMismatch(format!(
                "prediction {}x{} vs ground truth {}x{}",
                pred.width, pred.height, gt.width, gt.height
            )));
        }
        let n = self.num_classes;
        for (&p, &g) in pred.classes.iter().zip(&gt.classes) {
            let (p, g) = (p as usize, g as usize);
            if p >= n || g >= n {
                return Err(Error::ClassOutOfRange {
                    class: p.max(g) as u32,
                    num_classes: n,
                });
            }
            self.counts[g * n + p] += 1;
        }
        Ok(())
    }

    pub fn merge(mut self, other: &ConfusionMatrix) -> Self {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    /// Per-class IoU; `None` where the class appears in neither prediction
    /// nor ground truth.
    pub fn class_iou(&self) -> Vec<Option<f64>> {
        let n = self.num_classes;
        (0..n)
            .map(|c| {
                let tp = self.count(c, c);
                let fn_: u64 = (0..n).map(|p| self.count(c, p)).sum::<u64>() - tp;
                let fp: u64 = (0..n).map(|g| self.count(g, c)).sum::<u64>() - tp;
                let union = tp + fp + fn_;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    pub fn miou(&self) -> Result<f64> {
        let ious: Vec<f64> = self.class_iou().into_iter().flatten().collect();
        if ious.is_empty() {
            return Err(Error::ShapeMismatch("no labeled pixels".into()));
        }
        Ok(100.0 * ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

/// Mean IoU over a global confusion matrix accumulated across all pairs.
pub fn miou(pairs: &[(&SegMask, &SegMask)], num_classes: usize) -> Result<f64> {
    pairs
        .par_iter()
        .map(|(pred, gt)| {
            let mut m = ConfusionMatrix::new(num_classes);
            m.accumulate(pred, gt)?;
            Ok::<_, Error>(m)
        })
        .try_reduce(|| ConfusionMatrix::new(num_classes), |a, b| Ok(a.merge(&b)))?
        .miou()
}
