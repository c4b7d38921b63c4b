//! Samples, the line-delimited dataset file format, splitting and padding.
//!
//! # Dataset file
//!
//! UTF-8 JSON Lines, one record per line, each line ending in `\n`.
//!
//! Line 1 is the header:
//!
//! ```text
//! {"format":"mpn-dataset","version":1,"meta":{"history":τ,"total":T,"labels":L,"obs_dim":d_z,"ctx_dim":d_c,"label_names":[...],"source":"synthetic"}}
//! ```
//!
//! Each further line is one sample:
//!
//! ```text
//! {"z":[[...],...],"c":[[...],...],"y":[...],"o":[[...],...]}
//! ```
//!
//! `z` is τ rows of d_z numbers, `c` is T rows of d_c numbers, `y` is L
//! integers in {0,1} and `o` is T−τ rows of L integers in {0,1}. Numbers are
//! written in the shortest form that parses back to the same `f64`.

pub mod har;
pub mod phm;
pub mod synth;
pub mod window;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MpnError, Result};
use crate::loss::Target;
use crate::model::MpnDims;
use crate::tensor::{Matrix, Rng};

pub const DATASET_FORMAT: &str = "mpn-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    PhmAdapter,
    HarAdapter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub history: usize,
    pub total: usize,
    pub labels: usize,
    pub obs_dim: usize,
    pub ctx_dim: usize,
    pub label_names: Vec<String>,
    pub source: DataSource,
}

impl DatasetMeta {
    pub fn horizon(&self) -> usize {
        self.total - self.history
    }

    pub fn dims(&self) -> MpnDims {
        MpnDims {
            labels: self.labels,
            obs_dim: self.obs_dim,
            ctx_dim: self.ctx_dim,
            history: self.history,
            total: self.total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history >= self.total {
            return Err(MpnError::InvalidConfig(format!(
                "history length {} must be below total length {}",
                self.history, self.total
            )));
        }
        if self.labels == 0 {
            return Err(MpnError::InvalidConfig("need at least one label".into()));
        }
        if self.label_names.len() != self.labels {
            return Err(MpnError::InvalidConfig(format!(
                "{} label names for {} labels",
                self.label_names.len(),
                self.labels
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Historical observations, τ × d_z.
    pub z: Matrix,
    /// Context over the whole horizon, T × d_c.
    pub c: Matrix,
    /// Segment labels, length L.
    pub y_true: Vec<u8>,
    /// Stepwise labels, (T−τ) rows of length L.
    pub o_true: Vec<Vec<u8>>,
}

impl Sample {
    pub fn target(&self) -> Target<'_> {
        Target {
            segment: &self.y_true,
            steps: &self.o_true,
        }
    }

    /// Checks shapes against `meta`, binary labels, finiteness, and that
    /// every segment label equals "the label occurs at some step".
    pub fn validate(&self, meta: &DatasetMeta) -> std::result::Result<(), String> {
        if self.z.shape() != (meta.history, meta.obs_dim) {
            return Err(format!(
                "z is {}x{}, expected {}x{}",
                self.z.rows(),
                self.z.cols(),
                meta.history,
                meta.obs_dim
            ));
        }
        if self.c.shape() != (meta.total, meta.ctx_dim) {
            return Err(format!(
                "c is {}x{}, expected {}x{}",
                self.c.rows(),
                self.c.cols(),
                meta.total,
                meta.ctx_dim
            ));
        }
        if !self.z.is_finite() || !self.c.is_finite() {
            return Err("non-finite observation or context value".into());
        }
        if self.y_true.len() != meta.labels {
            return Err(format!(
                "y has {} entries, expected {}",
                self.y_true.len(),
                meta.labels
            ));
        }
        if self.o_true.len() != meta.horizon() {
            return Err(format!(
                "o has {} rows, expected {}",
                self.o_true.len(),
                meta.horizon()
            ));
        }
        for (k, row) in self.o_true.iter().enumerate() {
            if row.len() != meta.labels {
                return Err(format!(
                    "o row {k} has {} entries, expected {}",
                    row.len(),
                    meta.labels
                ));
            }
        }
        if self
            .y_true
            .iter()
            .chain(self.o_true.iter().flatten())
            .any(|&v| v > 1)
        {
            return Err("labels must be 0 or 1".into());
        }
        for l in 0..meta.labels {
            let any = self.o_true.iter().any(|row| row[l] == 1);
            if (self.y_true[l] == 1) != any {
                return Err(format!(
                    "segment label {l} is {} but stepwise labels {} it",
                    self.y_true[l],
                    if any { "contain" } else { "do not contain" }
                ));
            }
        }
        Ok(())
    }
}

/// Segment labels implied by stepwise labels.
pub fn segment_from_steps(o_true: &[Vec<u8>], labels: usize) -> Vec<u8> {
    (0..labels)
        .map(|l| u8::from(o_true.iter().any(|row| row[l] != 0)))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    z: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    y: Vec<u8>,
    o: Vec<Vec<u8>>,
}

pub fn write_dataset<W: Write>(mut out: W, meta: &DatasetMeta, samples: &[Sample]) -> Result<()> {
    let header = Header {
        format: DATASET_FORMAT.to_string(),
        version: DATASET_VERSION,
        meta: meta.clone(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for s in samples {
        let rec = SampleRecord {
            z: s.z.to_rows(),
            c: s.c.to_rows(),
            y: s.y_true.clone(),
            o: s.o_true.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, meta: &DatasetMeta, samples: &[Sample]) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), meta, samples)
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<(DatasetMeta, Vec<Sample>)> {
    let mut lines = input.lines();
    let first = lines.next().ok_or(MpnError::Schema {
        line: 1,
        reason: "missing header".into(),
    })??;
    let header: Header = serde_json::from_str(&first).map_err(|e| MpnError::Schema {
        line: 1,
        reason: format!("bad header: {e}"),
    })?;
    if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
        return Err(MpnError::Schema {
            line: 1,
            reason: format!(
                "unsupported format {} version {}",
                header.format, header.version
            ),
        });
    }
    let meta = header.meta;
    meta.validate().map_err(|e| MpnError::Schema {
        line: 1,
        reason: e.to_string(),
    })?;

    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let line_no = idx + 2;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| MpnError::Schema {
            line: line_no,
            reason: e.to_string(),
        })?;
        let index = samples.len();
        let bad = |reason: String| MpnError::InvalidSample { index, reason };
        let z = Matrix::from_rows(&rec.z, meta.obs_dim).map_err(|e| bad(format!("z: {e}")))?;
        let c = Matrix::from_rows(&rec.c, meta.ctx_dim).map_err(|e| bad(format!("c: {e}")))?;
        let sample = Sample {
            z,
            c,
            y_true: rec.y,
            o_true: rec.o,
        };
        sample.validate(&meta).map_err(bad)?;
        samples.push(sample);
    }
    Ok((meta, samples))
}

pub fn load_dataset(path: &Path) -> Result<(DatasetMeta, Vec<Sample>)> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// Split sizes `(train, validation, test)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    /// 500 / 100 / 400.
    pub const PAPER: SplitSizes = SplitSizes {
        train: 500,
        val: 100,
        test: 400,
    };

    /// Half for training, a tenth for validation, the rest for testing.
    pub fn proportional(n: usize) -> Self {
        let train = n / 2;
        let val = n / 10;
        SplitSizes {
            train,
            val,
            test: n - train - val,
        }
    }

    /// [`PAPER`](Self::PAPER) when `n` is large enough, else
    /// [`proportional`](Self::proportional).
    pub fn for_len(n: usize) -> Self {
        let p = Self::PAPER;
        if n >= p.train + p.val + p.test {
            p
        } else {
            Self::proportional(n)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Seeded shuffle followed by contiguous slicing.
pub fn split(samples: &[Sample], sizes: SplitSizes, seed: u64) -> Result<Splits> {
    let need = sizes.train + sizes.val + sizes.test;
    if need > samples.len() {
        return Err(MpnError::InvalidConfig(format!(
            "split sizes {}+{}+{} exceed {} samples",
            sizes.train,
            sizes.val,
            sizes.test,
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let take = |range: std::ops::Range<usize>| -> Vec<Sample> {
        order[range].iter().map(|&i| samples[i].clone()).collect()
    };
    let a = sizes.train;
    let b = a + sizes.val;
    Ok(Splits {
        train: take(0..a),
        val: take(a..b),
        test: take(b..need),
    })
}

/// Pads `z` (τ×d) to `total` rows with the per-column mean of its rows.
pub fn pad_mean(z: &Matrix, total: usize) -> Result<Matrix> {
    let (rows, cols) = z.shape();
    if total < rows {
        return Err(MpnError::InvalidConfig(format!(
            "cannot pad {rows} rows down to {total}"
        )));
    }
    let mut means = vec![0.0; cols];
    if rows > 0 {
        for r in 0..rows {
            for (m, v) in means.iter_mut().zip(z.row(r)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= rows as f64);
    }
    let mut out = Matrix::zeros(total, cols);
    for r in 0..rows {
        out.row_mut(r).copy_from_slice(z.row(r));
    }
    for r in rows..total {
        out.row_mut(r).copy_from_slice(&means);
    }
    Ok(out)
}

/// Number of samples carrying each segment label.
pub fn class_stats(samples: &[Sample]) -> Result<Vec<usize>> {
    let first = samples
        .first()
        .ok_or_else(|| MpnError::Empty("class_stats needs at least one sample".into()))?;
    let mut counts = vec![0usize; first.y_true.len()];
    for s in samples {
        for (c, &v) in counts.iter_mut().zip(&s.y_true) {
            *c += usize::from(v);
        }
    }
    Ok(counts)
}
