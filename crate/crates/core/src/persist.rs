//! Model files.
//!
//! A model file is one JSON document:
//!
//! ```text
//! {"format":"mpn-model","version":1,"model":{...},"classifiers":{...}|null}
//! ```
//!
//! `model` holds `dims`, then `encoder` and `decoder` (each with `hidden`,
//! `input`, `weights` as `[W_f, W_i, W_ξ, W_q]` matrices stored as
//! `{"rows","cols","data"}` in row-major order, and `biases` as
//! `[b_f, b_i, b_ξ, b_q]`), then `b_g`. Numbers are written in the shortest
//! form that parses back to the same `f64`, so save/load is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MpnError, Result};
use crate::eval::Classifiers;
use crate::model::MpnModel;

pub const MODEL_FORMAT: &str = "mpn-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub model: MpnModel,
    pub classifiers: Option<Classifiers>,
}

impl ModelFile {
    pub fn new(model: MpnModel, classifiers: Option<Classifiers>) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model,
            classifiers,
        }
    }

    fn check(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(MpnError::Schema {
                line: 1,
                reason: format!(
                    "unsupported model format {} version {}",
                    self.format, self.version
                ),
            });
        }
        let m = &self.model;
        let d = m.dims;
        let expected = MpnModel::zeros(d)?;
        let matrices_ok = m
            .encoder
            .weights
            .iter()
            .chain(&m.decoder.weights)
            .all(|w| w.rows() * w.cols() == w.data().len());
        let layout_ok = m.tensor_names() == expected.tensor_names()
            && m.tensors()
                .iter()
                .zip(expected.tensors())
                .all(|(a, b)| a.len() == b.len());
        if !(matrices_ok && layout_ok) {
            return Err(MpnError::Schema {
                line: 1,
                reason: "parameter shapes do not match the stored dimensions".into(),
            });
        }
        if !m.is_finite() {
            return Err(MpnError::Schema {
                line: 1,
                reason: "model contains non-finite parameters".into(),
            });
        }
        if let Some(c) = &self.classifiers {
            if std::iter::once(&c.step)
                .chain(&c.segment)
                .any(|s| s.rules.len() != d.labels || s.fallback.len() != d.labels)
            {
                return Err(MpnError::Schema {
                    line: 1,
                    reason: "classifier label count does not match the model".into(),
                });
            }
        }
        Ok(())
    }
}

pub fn write_model<W: Write>(mut out: W, file: &ModelFile) -> Result<()> {
    serde_json::to_writer(&mut out, file)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<ModelFile> {
    let file: ModelFile = serde_json::from_reader(input)?;
    file.check()?;
    Ok(file)
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), file)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    read_model(BufReader::new(File::open(path)?))
}
