use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// `100 * correct / total` over matching id sets.
pub fn accuracy(preds: &BTreeMap<String, String>, gts: &BTreeMap<String, String>) -> Result<f64> {
    if let Some(id) = preds.keys().find(|id| !gts.contains_key(*id)) {
        return Err(Error::IdMismatch(format!("prediction `{id}` has no ground truth")));
    }
    if let Some(id) = gts.keys().find(|id| !preds.contains_key(*id)) {
        return Err(Error::IdMismatch(format!("no prediction for `{id}`")));
    }
    if gts.is_empty() {
        return Err(Error::IdMismatch("empty evaluation set".into()));
    }
    let correct = gts.iter().filter(|(id, label)| preds[*id] == **label).count();
    Ok(100.0 * correct as f64 / gts.len() as f64)
}
