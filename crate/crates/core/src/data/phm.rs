//! Converter for the industrial plant fault data (one plant per dataset).
//!
//! Three comma-separated inputs, each with an optional header row:
//!
//! * sensors `a.csv`: `plant, component, time, S1, S2, S3, S4, R1, R2, R3, R4`
//! * environment `b.csv` (optional): `plant, zone, time, E1, E2`
//! * faults `c.csv`: `plant, start, end, code`
//!
//! Times are either all numeric or all text that sorts chronologically
//! (e.g. `2010-01-01 00:15:00`). The time grid is the sorted set of times in
//! `a.csv`. At step `t`, the observation row is `S1..S4` of every component
//! in ascending component order followed by `E1, E2` of every zone, and the
//! context row is `R1..R4` of every component. A fault with code `codes[ℓ]`
//! sets label `ℓ` on every step with `start <= time <= end`; other codes are
//! ignored.
//!
//! Empty and `NaN` fields, and component/zone rows missing at some time, are
//! filled forward per column, then backward for leading gaps, and all-missing
//! columns become 0. Observation and context columns are then standardized
//! unless disabled. Windows of `history + horizon` steps are drawn by
//! [`choose_windows`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use log::info;

use super::window::{choose_windows, fill_missing, parse_value, standardize, WindowOptions};
use super::{segment_from_steps, DataSource, DatasetMeta, Sample};
use crate::error::{MpnError, Result};
use crate::tensor::Matrix;

pub const PHM_HISTORY: usize = 30;
pub const PHM_HORIZON: usize = 10;
pub const PHM_CODES: [u32; 6] = [1, 2, 3, 4, 5, 6];

#[derive(Clone, Debug, PartialEq)]
pub struct PhmOptions {
    pub history: usize,
    pub horizon: usize,
    /// Fault codes, one label each, in label order.
    pub codes: Vec<u32>,
    /// Plant id to keep; required when the files hold more than one plant.
    pub plant: Option<String>,
    pub windows: WindowOptions,
    pub standardize: bool,
}

impl Default for PhmOptions {
    fn default() -> Self {
        PhmOptions {
            history: PHM_HISTORY,
            horizon: PHM_HORIZON,
            codes: PHM_CODES.to_vec(),
            plant: None,
            windows: WindowOptions {
                n_samples: 1000,
                seed: 0,
                allow_overlap: false,
            },
            standardize: true,
        }
    }
}

impl PhmOptions {
    fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 {
            return Err(MpnError::InvalidConfig(
                "history and horizon must be positive".into(),
            ));
        }
        let unique: BTreeSet<_> = self.codes.iter().collect();
        if self.codes.is_empty() || unique.len() != self.codes.len() {
            return Err(MpnError::InvalidConfig(
                "fault codes must be nonempty and distinct".into(),
            ));
        }
        Ok(())
    }
}

/// Sort key for times, components and zones: numbers order numerically and
/// before any text.
#[derive(Clone, Debug, PartialEq)]
enum Key {
    Num(f64),
    Text(String),
}

impl Key {
    fn parse(field: &str) -> Key {
        let f = field.trim();
        match f.parse::<f64>() {
            Ok(v) if v.is_finite() => Key::Num(v),
            _ => Key::Text(f.to_string()),
        }
    }
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (Key::Num(a), Key::Num(b)) => a.total_cmp(b),
            (Key::Text(a), Key::Text(b)) => a.cmp(b),
            (Key::Num(_), Key::Text(_)) => std::cmp::Ordering::Less,
            (Key::Text(_), Key::Num(_)) => std::cmp::Ordering::Greater,
        }
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

struct Row {
    line: usize,
    fields: Vec<String>,
}

/// Reads a headerless or headed CSV with exactly `width` fields per row. The
/// first row is a header iff its field `probe` is neither a number nor empty.
fn read_rows<R: Read>(input: R, width: usize, probe: usize, what: &str) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && rec.get(probe).is_some_and(|f| parse_value(f).is_none()) {
            continue;
        }
        if rec.len() != width {
            return Err(MpnError::Schema {
                line,
                reason: format!("{what}: expected {width} fields, found {}", rec.len()),
            });
        }
        rows.push(Row {
            line,
            fields: rec.iter().map(str::to_string).collect(),
        });
    }
    Ok(rows)
}

fn values(row: &Row, from: usize, what: &str) -> Result<Vec<f64>> {
    row.fields[from..]
        .iter()
        .map(|f| {
            parse_value(f).ok_or_else(|| MpnError::Schema {
                line: row.line,
                reason: format!("{what}: not a number: {f:?}"),
            })
        })
        .collect()
}

fn keep_plant(rows: Vec<Row>, plant: &Option<String>, what: &str) -> Result<Vec<Row>> {
    match plant {
        Some(p) => Ok(rows.into_iter().filter(|r| &r.fields[0] == p).collect()),
        None => {
            let ids: BTreeSet<&str> = rows.iter().map(|r| r.fields[0].as_str()).collect();
            if ids.len() > 1 {
                return Err(MpnError::InvalidConfig(format!(
                    "{what} holds {} plants; select one with a plant id",
                    ids.len()
                )));
            }
            Ok(rows)
        }
    }
}

/// Per-entity readings on the time grid, `width` values per entity, NaN
/// where absent.
fn grid_table(
    rows: &[Row],
    grid: &[Key],
    width: usize,
    what: &str,
) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut entities = BTreeSet::new();
    let mut readings = BTreeMap::new();
    for r in rows {
        let entity = Key::parse(&r.fields[1]);
        let time = Key::parse(&r.fields[2]);
        entities.insert(entity.clone());
        readings.insert((entity, time), values(r, 3, what)?);
    }
    let entities: Vec<Key> = entities.into_iter().collect();
    let table = grid
        .iter()
        .map(|t| {
            let mut row = Vec::with_capacity(entities.len() * width);
            for e in &entities {
                match readings.get(&(e.clone(), t.clone())) {
                    Some(v) => row.extend_from_slice(v),
                    None => row.extend(std::iter::repeat_n(f64::NAN, width)),
                }
            }
            row
        })
        .collect();
    Ok((entities.len(), table))
}

/// Converts one plant read from the given sources.
pub fn convert_phm_readers<A: Read, B: Read, C: Read>(
    sensors: A,
    environment: Option<B>,
    faults: C,
    opts: &PhmOptions,
) -> Result<(DatasetMeta, Vec<Sample>)> {
    opts.validate()?;
    let a = keep_plant(
        read_rows(sensors, 11, 3, "sensors")?,
        &opts.plant,
        "sensors",
    )?;
    if a.is_empty() {
        return Err(MpnError::Empty(
            "no sensor rows for the selected plant".into(),
        ));
    }
    let grid: Vec<Key> = a
        .iter()
        .map(|r| Key::parse(&r.fields[2]))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let (n_comp, sr) = grid_table(&a, &grid, 8, "sensors")?;
    let mut obs: Vec<Vec<f64>> = sr
        .iter()
        .map(|r| r.chunks(8).flat_map(|c| c[..4].to_vec()).collect())
        .collect();
    let mut ctx: Vec<Vec<f64>> = sr
        .iter()
        .map(|r| r.chunks(8).flat_map(|c| c[4..].to_vec()).collect())
        .collect();
    let mut n_zone = 0;
    if let Some(env) = environment {
        let b = keep_plant(
            read_rows(env, 5, 3, "environment")?,
            &opts.plant,
            "environment",
        )?;
        let (zones, er) = grid_table(&b, &grid, 2, "environment")?;
        n_zone = zones;
        for (o, e) in obs.iter_mut().zip(er) {
            o.extend(e);
        }
    }

    let c = keep_plant(read_rows(faults, 4, 3, "faults")?, &opts.plant, "faults")?;
    let labels = opts.codes.len();
    let mut steps = vec![vec![0u8; labels]; grid.len()];
    for r in &c {
        let code: u32 = r.fields[3].parse().map_err(|_| MpnError::Schema {
            line: r.line,
            reason: format!("faults: bad code {:?}", r.fields[3]),
        })?;
        let Some(l) = opts.codes.iter().position(|&k| k == code) else {
            continue;
        };
        let (start, end) = (Key::parse(&r.fields[1]), Key::parse(&r.fields[2]));
        let lo = grid.partition_point(|t| *t < start);
        let hi = grid.partition_point(|t| *t <= end);
        for s in steps.iter_mut().take(hi).skip(lo) {
            s[l] = 1;
        }
    }

    let filled = fill_missing(&mut obs) + fill_missing(&mut ctx);
    let (obs_dim, ctx_dim) = (4 * n_comp + 2 * n_zone, 4 * n_comp);
    let mut series = [obs, ctx];
    if opts.standardize {
        standardize(&mut series[0..1], obs_dim);
        standardize(&mut series[1..2], ctx_dim);
    }
    let [obs, ctx] = series;
    info!(
        "plant: {} steps, {n_comp} components, {n_zone} zones, {filled} values filled",
        grid.len()
    );

    let meta = DatasetMeta {
        history: opts.history,
        total: opts.history + opts.horizon,
        labels,
        obs_dim,
        ctx_dim,
        label_names: opts.codes.iter().map(|k| format!("fault_{k}")).collect(),
        source: DataSource::PhmAdapter,
    };
    let samples = choose_windows(&[grid.len()], meta.total, &opts.windows)
        .into_iter()
        .map(|(_, s)| window_sample(&obs, &ctx, &steps, s, &meta))
        .collect::<Result<Vec<_>>>()?;
    Ok((meta, samples))
}

pub(super) fn window_sample(
    obs: &[Vec<f64>],
    ctx: &[Vec<f64>],
    steps: &[Vec<u8>],
    start: usize,
    meta: &DatasetMeta,
) -> Result<Sample> {
    let (tau, total) = (meta.history, meta.total);
    let o_true = steps[start + tau..start + total].to_vec();
    Ok(Sample {
        z: Matrix::from_rows(&obs[start..start + tau], meta.obs_dim)?,
        c: Matrix::from_rows(&ctx[start..start + total], meta.ctx_dim)?,
        y_true: segment_from_steps(&o_true, meta.labels),
        o_true,
    })
}

/// Converts one plant from files; `environment` is optional.
pub fn convert_phm(
    sensors: &Path,
    environment: Option<&Path>,
    faults: &Path,
    opts: &PhmOptions,
) -> Result<(DatasetMeta, Vec<Sample>)> {
    let env = environment.map(File::open).transpose()?;
    convert_phm_readers(File::open(sensors)?, env, File::open(faults)?, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "plant,component,time,S1,S2,S3,S4,R1,R2,R3,R4
1,2,3,20,21,22,23,24,25,26,27
1,1,1,0,1,2,3,4,5,6,7
1,2,1,10,11,12,13,14,15,16,17
1,1,2,NaN,1,2,3,4,5,6,7
1,1,3,8,1,2,3,4,5,6,7
";
    const C: &str = "1,2,3,4\n1,1,1,9\n";

    fn opts(history: usize, horizon: usize) -> PhmOptions {
        PhmOptions {
            history,
            horizon,
            codes: vec![4, 5],
            windows: WindowOptions {
                n_samples: 10,
                seed: 0,
                allow_overlap: true,
            },
            standardize: false,
            ..PhmOptions::default()
        }
    }

    fn convert(
        a: &str,
        b: Option<&str>,
        c: &str,
        o: &PhmOptions,
    ) -> Result<(DatasetMeta, Vec<Sample>)> {
        convert_phm_readers(a.as_bytes(), b.map(str::as_bytes), c.as_bytes(), o)
    }

    #[test]
    fn builds_grid_windows_and_labels() {
        let (meta, s) = convert(A, None, C, &opts(2, 1)).unwrap();
        assert_eq!((meta.obs_dim, meta.ctx_dim, meta.labels), (8, 8, 2));
        assert_eq!(meta.label_names, vec!["fault_4", "fault_5"]);
        assert_eq!(s.len(), 1);
        // Component 1 then 2; the NaN and the missing component-2 row at
        // time 2 are filled from time 1.
        assert_eq!(s[0].z.row(0), &[0., 1., 2., 3., 10., 11., 12., 13.]);
        assert_eq!(s[0].z.row(1), &[0., 1., 2., 3., 10., 11., 12., 13.]);
        assert_eq!(s[0].c.row(2), &[4., 5., 6., 7., 24., 25., 26., 27.]);
        assert_eq!(s[0].o_true, vec![vec![1, 0]]);
        assert_eq!(s[0].y_true, vec![1, 0]);
    }

    #[test]
    fn environment_columns_append_to_observations() {
        let b = "1,1,1,0.5,0.6\n1,1,3,0.7,0.8\n";
        let (meta, s) = convert(A, Some(b), C, &opts(2, 1)).unwrap();
        assert_eq!(meta.obs_dim, 10);
        assert_eq!(&s[0].z.row(1)[8..], &[0.5, 0.6]);
    }

    #[test]
    fn standardized_columns_have_zero_mean() {
        let o = PhmOptions {
            standardize: true,
            ..opts(1, 1)
        };
        let (_, s) = convert(A, None, C, &o).unwrap();
        assert_eq!(s.len(), 2);
        let col: f64 = (0..3)
            .map(|t| {
                if t < 2 {
                    s[t].c.get(0, 4)
                } else {
                    s[1].c.get(1, 4)
                }
            })
            .sum();
        assert!(col.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(convert(A, None, C, &opts(3, 1)).unwrap().1.is_empty());
        let two = format!("{A}2,1,1,0,0,0,0,0,0,0,0\n");
        assert!(convert(&two, None, C, &opts(2, 1)).is_err());
        let picked = PhmOptions {
            plant: Some("1".into()),
            ..opts(2, 1)
        };
        assert!(convert(&two, None, C, &picked).is_ok());
        assert!(convert("1,1,1,x,0,0,0,0,0,0,0\n", None, C, &opts(1, 1)).is_err());
        assert!(convert("1,1,1,0\n", None, C, &opts(1, 1)).is_err());
        assert!(convert(A, None, "1,1,1,4\n1,1,1,four\n", &opts(1, 1)).is_err());
        assert!(convert(
            A,
            None,
            C,
            &PhmOptions {
                codes: vec![],
                ..opts(1, 1)
            }
        )
        .is_err());
    }
}
