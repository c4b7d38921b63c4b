//! Converter for the activity recognition recordings (`.dat` files).
//!
//! Each file is one recording: whitespace-separated rows of 250 numeric
//! columns, `NaN` for missing readings. Columns 1-243 (time stamp and body,
//! object and ambient sensors) form the observation. Column 245 is the
//! high-level activity, coded 101-105 (0 when none), and becomes a one-hot
//! context row of width 5. Labels are the right-arm low-level motion
//! (column 248, codes 401-413) and the object it handles (column 249, codes
//! 501-523), 36 labels in total. Other label columns are ignored.
//!
//! Missing readings are filled forward per column within a file, then
//! backward for leading gaps; all-missing columns become 0. Observation
//! columns are then standardized over all files unless disabled. Windows of
//! `history + horizon` steps never cross files and are drawn by
//! [`choose_windows`].

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use log::info;

use super::phm::window_sample;
use super::window::{choose_windows, fill_missing, parse_value, standardize, WindowOptions};
use super::{DataSource, DatasetMeta, Sample};
use crate::error::{MpnError, Result};

pub const HAR_HISTORY: usize = 75;
pub const HAR_HORIZON: usize = 25;
pub const HAR_COLUMNS: usize = 250;
pub const HAR_OBS_DIM: usize = 243;

const ACTIVITY_COL: usize = 244;
const ARM_COL: usize = 247;
const OBJECT_COL: usize = 248;
const ACTIVITIES: [u32; 5] = [101, 102, 103, 104, 105];

const ARM_MOTIONS: [&str; 13] = [
    "unlock", "stir", "lock", "close", "reach", "open", "sip", "clean", "bite", "cut", "spread",
    "release", "move",
];
const ARM_OBJECTS: [&str; 23] = [
    "bottle",
    "salami",
    "bread",
    "sugar",
    "dishwasher",
    "switch",
    "milk",
    "drawer3",
    "spoon",
    "knife_cheese",
    "drawer2",
    "table",
    "glass",
    "cheese",
    "chair",
    "door1",
    "door2",
    "plate",
    "drawer1",
    "fridge",
    "cup",
    "knife_salami",
    "lazychair",
];

pub fn har_label_names() -> Vec<String> {
    ARM_MOTIONS
        .iter()
        .enumerate()
        .map(|(i, n)| format!("{}_{n}", 401 + i))
        .chain(
            ARM_OBJECTS
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{}_{n}", 501 + i)),
        )
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarOptions {
    pub history: usize,
    pub horizon: usize,
    pub windows: WindowOptions,
    pub standardize: bool,
}

impl Default for HarOptions {
    fn default() -> Self {
        HarOptions {
            history: HAR_HISTORY,
            horizon: HAR_HORIZON,
            windows: WindowOptions {
                n_samples: 1000,
                seed: 0,
                allow_overlap: false,
            },
            standardize: true,
        }
    }
}

struct Recording {
    obs: Vec<Vec<f64>>,
    ctx: Vec<Vec<f64>>,
    steps: Vec<Vec<u8>>,
}

fn code(v: f64, line: usize, what: &str) -> Result<u32> {
    if v.is_nan() {
        return Ok(0);
    }
    if v < 0.0 || v.fract() != 0.0 {
        return Err(MpnError::Schema {
            line,
            reason: format!("{what} code {v} is not a nonnegative integer"),
        });
    }
    Ok(v as u32)
}

fn read_recording<R: Read>(input: R) -> Result<Recording> {
    let mut rec = Recording {
        obs: Vec::new(),
        ctx: Vec::new(),
        steps: Vec::new(),
    };
    let labels = ARM_MOTIONS.len() + ARM_OBJECTS.len();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|f| {
                parse_value(f).ok_or_else(|| MpnError::Schema {
                    line: line_no,
                    reason: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() != HAR_COLUMNS {
            return Err(MpnError::Schema {
                line: line_no,
                reason: format!("expected {HAR_COLUMNS} columns, found {}", fields.len()),
            });
        }
        let activity = code(fields[ACTIVITY_COL], line_no, "activity")?;
        rec.ctx.push(
            ACTIVITIES
                .iter()
                .map(|&a| f64::from(u8::from(a == activity)))
                .collect(),
        );
        let mut step = vec![0u8; labels];
        let arm = code(fields[ARM_COL], line_no, "arm")?;
        if (401..401 + ARM_MOTIONS.len() as u32).contains(&arm) {
            step[(arm - 401) as usize] = 1;
        }
        let object = code(fields[OBJECT_COL], line_no, "object")?;
        if (501..501 + ARM_OBJECTS.len() as u32).contains(&object) {
            step[ARM_MOTIONS.len() + (object - 501) as usize] = 1;
        }
        rec.steps.push(step);
        rec.obs.push(fields[..HAR_OBS_DIM].to_vec());
    }
    Ok(rec)
}

/// Converts recordings read from the given sources.
pub fn convert_har_readers<R: Read>(
    inputs: Vec<R>,
    opts: &HarOptions,
) -> Result<(DatasetMeta, Vec<Sample>)> {
    if opts.history == 0 || opts.horizon == 0 {
        return Err(MpnError::InvalidConfig(
            "history and horizon must be positive".into(),
        ));
    }
    if inputs.is_empty() {
        return Err(MpnError::Empty("no recordings given".into()));
    }
    let mut recs = inputs
        .into_iter()
        .map(read_recording)
        .collect::<Result<Vec<_>>>()?;
    let filled: usize = recs.iter_mut().map(|r| fill_missing(&mut r.obs)).sum();
    if opts.standardize {
        let mut obs: Vec<Vec<Vec<f64>>> = recs
            .iter_mut()
            .map(|r| std::mem::take(&mut r.obs))
            .collect();
        standardize(&mut obs, HAR_OBS_DIM);
        for (r, o) in recs.iter_mut().zip(obs) {
            r.obs = o;
        }
    }
    let lengths: Vec<usize> = recs.iter().map(|r| r.obs.len()).collect();
    info!(
        "{} recordings, {} rows, {filled} values filled",
        recs.len(),
        lengths.iter().sum::<usize>()
    );

    let names = har_label_names();
    let meta = DatasetMeta {
        history: opts.history,
        total: opts.history + opts.horizon,
        labels: names.len(),
        obs_dim: HAR_OBS_DIM,
        ctx_dim: ACTIVITIES.len(),
        label_names: names,
        source: DataSource::HarAdapter,
    };
    let samples = choose_windows(&lengths, meta.total, &opts.windows)
        .into_iter()
        .map(|(f, s)| window_sample(&recs[f].obs, &recs[f].ctx, &recs[f].steps, s, &meta))
        .collect::<Result<Vec<_>>>()?;
    Ok((meta, samples))
}

pub fn convert_har(
    paths: &[impl AsRef<Path>],
    opts: &HarOptions,
) -> Result<(DatasetMeta, Vec<Sample>)> {
    let files = paths
        .iter()
        .map(|p| File::open(p.as_ref()))
        .collect::<std::io::Result<Vec<_>>>()?;
    convert_har_readers(files, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize, activity: &str, arm: &str, object: &str) -> String {
        let mut f: Vec<String> = (0..HAR_COLUMNS)
            .map(|j| format!("{}", t * 1000 + j))
            .collect();
        f[5] = if t == 1 { "NaN".into() } else { f[5].clone() };
        f[ACTIVITY_COL] = activity.into();
        f[ARM_COL] = arm.into();
        f[OBJECT_COL] = object.into();
        f.join(" ")
    }

    fn opts() -> HarOptions {
        HarOptions {
            history: 2,
            horizon: 2,
            windows: WindowOptions {
                n_samples: 10,
                seed: 1,
                allow_overlap: true,
            },
            standardize: false,
        }
    }

    #[test]
    fn labels_context_and_fill() {
        let file = [
            row(0, "101", "0", "0"),
            row(1, "101", "405", "NaN"),
            row(2, "0", "405", "520"),
            row(3, "105", "999", "523"),
        ]
        .join("\n");
        let (meta, s) = convert_har_readers(vec![file.as_bytes()], &opts()).unwrap();
        assert_eq!((meta.labels, meta.obs_dim, meta.ctx_dim), (36, 243, 5));
        assert_eq!(meta.label_names[4], "405_reach");
        assert_eq!(meta.label_names[35], "523_lazychair");
        assert_eq!(s.len(), 1);
        let s = &s[0];
        assert_eq!(s.z.get(1, 5), 5.0);
        assert_eq!(s.z.get(1, 0), 1000.0);
        assert_eq!(s.c.row(0), &[1., 0., 0., 0., 0.]);
        assert_eq!(s.c.row(2), &[0.; 5]);
        assert_eq!(s.c.row(3), &[0., 0., 0., 0., 1.]);
        let on = |r: &Vec<u8>| {
            r.iter()
                .enumerate()
                .filter(|(_, &v)| v == 1)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        assert_eq!(on(&s.o_true[0]), vec![4, 13 + 19]);
        assert_eq!(on(&s.o_true[1]), vec![35]);
        assert_eq!(s.y_true.iter().filter(|&&v| v == 1).count(), 3);
    }

    #[test]
    fn windows_stay_within_files() {
        let f1 = (0..5)
            .map(|t| row(t, "102", "0", "0"))
            .collect::<Vec<_>>()
            .join("\n");
        let f2 = (0..3)
            .map(|t| row(t, "102", "0", "0"))
            .collect::<Vec<_>>()
            .join("\n");
        let (_, s) = convert_har_readers(vec![f1.as_bytes(), f2.as_bytes()], &opts()).unwrap();
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn rejects_bad_rows() {
        let short = "1 2 3";
        assert!(convert_har_readers(vec![short.as_bytes()], &opts()).is_err());
        let bad = row(0, "101.5", "0", "0");
        assert!(convert_har_readers(vec![bad.as_bytes()], &opts()).is_err());
        assert!(convert_har_readers(Vec::<&[u8]>::new(), &opts()).is_err());
    }
}
