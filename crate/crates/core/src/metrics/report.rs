use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use super::robustness::{aggregate, r_tp, AggregationPolicy, Condition, RobustnessReport, ScoreCell};
use crate::corruption::CorruptionKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            other => Err(Error::Manifest(format!(
                "unknown report format `{other}` (csv | markdown)"
            ))),
        }
    }
}

fn header(kinds: &[CorruptionKind]) -> Vec<String> {
    let mut h = vec!["Method".to_string(), "Clean".to_string()];
    h.extend(kinds.iter().map(|k| k.display_name().to_string()));
    h.push("Avg".into());
    h.push("R_TP".into());
    h
}

fn row(r: &RobustnessReport) -> Vec<String> {
    let mut v = vec![r.model.clone(), format!("{:.2}", r.clean)];
    v.extend(r.columns.iter().map(|(_, s)| format!("{s:.2}")));
    v.push(format!("{:.2}", r.corrupted_avg));
    v.push(format!("{:.2}", r.r_tp));
    v
}

/// One row per model: Clean, one column per corruption, Avg and R_TP.
/// Values are rounded to two decimals here and nowhere else.
pub fn render_report(reports: &[RobustnessReport], format: ReportFormat) -> Result<String> {
    let Some(first) = reports.first() else {
        return Err(Error::ColumnMismatch("no reports to render".into()));
    };
    let kinds: Vec<CorruptionKind> = first.columns.iter().map(|c| c.0).collect();
    for r in reports {
        let k: Vec<CorruptionKind> = r.columns.iter().map(|c| c.0).collect();
        if k != kinds {
            return Err(Error::ColumnMismatch(format!(
                "`{}` has columns {:?}, `{}` has {:?}",
                first.model, kinds, r.model, k
            )));
        }
    }
    let header = header(&kinds);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&header)?;
            for r in reports {
                w.write_record(row(r))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::ColumnMismatch(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let align: Vec<&str> = std::iter::once(":---")
                .chain(std::iter::repeat_n("---:", header.len() - 1))
                .collect();
            let _ = writeln!(out, "| {} |", align.join(" | "));
            for r in reports {
                let _ = writeln!(out, "| {} |", row(r).join(" | "));
            }
            Ok(out)
        }
    }
}

/// A rendered CSV row read back.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub model: String,
    pub clean: f64,
    pub columns: Vec<(CorruptionKind, f64)>,
    pub avg: f64,
    pub r_tp: f64,
}

pub fn parse_csv_report(text: &str) -> Result<Vec<ParsedRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let n = header.len();
    if n < 4 || header[0] != "Method" || header[1] != "Clean" || header[n - 2] != "Avg" || header[n - 1] != "R_TP" {
        return Err(Error::ColumnMismatch(format!("unexpected header {header:?}")));
    }
    let kinds = header[2..n - 2]
        .iter()
        .map(|h| {
            CorruptionKind::ALL
                .into_iter()
                .find(|k| k.display_name() == h)
                .ok_or_else(|| Error::ColumnMismatch(format!("unknown column `{h}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse()
            .map_err(|_| Error::ColumnMismatch(format!("not a number: `{s}`")))
    };
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            if rec.len() != n {
                return Err(Error::ColumnMismatch(format!(
                    "row has {} fields, header has {n}",
                    rec.len()
                )));
            }
            Ok(ParsedRow {
                model: rec[0].to_string(),
                clean: num(&rec[1])?,
                columns: kinds
                    .iter()
                    .zip(2..n - 2)
                    .map(|(k, i)| Ok((*k, num(&rec[i])?)))
                    .collect::<Result<_>>()?,
                avg: num(&rec[n - 2])?,
                r_tp: num(&rec[n - 1])?,
            })
        })
        .collect()
}

/// Groups score cells by model (first-appearance order) and builds one
/// report per model. Per-severity cells are collapsed with `policy`;
/// cells without a severity are taken as already aggregated.
pub fn build_reports(
    cells: &[ScoreCell],
    policy: AggregationPolicy,
    weights: Option<&[f64]>,
) -> Result<Vec<RobustnessReport>> {
    let mut models: Vec<&str> = Vec::new();
    for c in cells {
        if !models.contains(&c.model.as_str()) {
            models.push(&c.model);
        }
    }
    models
        .into_iter()
        .map(|model| {
            let mine: Vec<&ScoreCell> = cells.iter().filter(|c| c.model == model).collect();
            let clean = mine
                .iter()
                .find(|c| c.condition == Condition::Clean)
                .ok_or_else(|| Error::MissingClean(model.to_string()))?
                .value;
            let mut columns = Vec::new();
            for kind in CorruptionKind::ALL {
                let kc: Vec<&&ScoreCell> = mine
                    .iter()
                    .filter(|c| c.condition == Condition::Corrupted(kind))
                    .collect();
                if kc.is_empty() {
                    continue;
                }
                let value = match kc.iter().find(|c| c.severity.is_none()) {
                    Some(c) => c.value,
                    None => {
                        let sev: Vec<(u32, f64)> = kc.iter().map(|c| (c.severity.unwrap_or(0), c.value)).collect();
                        aggregate(&sev, policy)?
                    }
                };
                columns.push((kind, value));
            }
            let mut rep = r_tp(clean, &columns, weights)?.with_model(model);
            rep.aggregation = policy;
            Ok(rep)
        })
        .collect()
}

/// Plottable per-severity curves: `model,corruption,severity,value`.
pub fn severity_curves(cells: &[ScoreCell]) -> Result<String> {
    let mut rows: BTreeMap<(String, CorruptionKind, u32), f64> = BTreeMap::new();
    for c in cells {
        if let (Condition::Corrupted(k), Some(s)) = (c.condition, c.severity) {
            rows.insert((c.model.clone(), k, s), c.value);
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "corruption", "severity", "value"])?;
    for ((model, kind, sev), v) in rows {
        w.write_record([model, kind.name().to_string(), sev.to_string(), format!("{v}")])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::ColumnMismatch(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
