use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mpn::eval::LocalizationReport;
use mpn::metrics::PrfReport;

use crate::CliResult;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub classifier: String,
    #[serde(flatten)]
    pub report: LocalizationReport,
}

/// Scores of one model on one split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub subset: String,
    pub samples: usize,
    /// Segment-level scores keyed by classifier name.
    pub segment: BTreeMap<String, PrfReport>,
    pub localization: Option<LocalizationRecord>,
}

impl EvaluationReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("subset: {} ({} samples)\n", self.subset, self.samples);
        for (name, r) in &self.segment {
            s.push_str(&format!("[segment {name}]\n{}", r.to_text()));
        }
        if let Some(l) = &self.localization {
            s.push_str(&format!(
                "stepwise decisions gated by: {}\n{}",
                l.classifier,
                l.report.to_text()
            ));
        }
        s
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Numeric leaves of a JSON document keyed by their dotted path.
pub fn numeric_leaves(v: &Value) -> BTreeMap<String, f64> {
    fn walk(v: &Value, path: String, out: &mut BTreeMap<String, f64>) {
        let join = |k: &str| {
            if path.is_empty() {
                k.to_string()
            } else {
                format!("{path}.{k}")
            }
        };
        match v {
            Value::Number(n) => {
                if let Some(x) = n.as_f64() {
                    out.insert(path, x);
                }
            }
            Value::Object(map) => map.iter().for_each(|(k, v)| walk(v, join(k), out)),
            Value::Array(items) => items
                .iter()
                .enumerate()
                .for_each(|(i, v)| walk(v, join(&i.to_string()), out)),
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    walk(v, String::new(), &mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Difference {
    pub method: f64,
    pub baseline: f64,
    pub diff: f64,
}

/// Method minus baseline for every numeric leaf present in both reports.
pub fn differences(method: &Value, baseline: &Value) -> BTreeMap<String, Difference> {
    let base = numeric_leaves(baseline);
    numeric_leaves(method)
        .into_iter()
        .filter_map(|(k, m)| {
            base.get(&k).map(|&b| {
                (
                    k,
                    Difference {
                        method: m,
                        baseline: b,
                        diff: m - b,
                    },
                )
            })
        })
        .collect()
}

pub fn differences_text(diffs: &BTreeMap<String, Difference>) -> String {
    let width = diffs.keys().map(String::len).max().unwrap_or(6).max(6);
    let mut s = format!(
        "{:<width$} {:>10} {:>10} {:>10}\n",
        "metric", "method", "baseline", "diff"
    );
    for (k, d) in diffs {
        s.push_str(&format!(
            "{k:<width$} {:>10.6} {:>10.6} {:>+10.6}\n",
            d.method, d.baseline, d.diff
        ));
    }
    s
}
