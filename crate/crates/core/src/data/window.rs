//! Helpers shared by the raw-data adapters: gap filling, column scaling and
//! seeded window sampling.

use std::collections::BTreeSet;

use log::warn;

use crate::tensor::Rng;

/// How fixed-length windows are drawn from one or more series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowOptions {
    /// Maximum number of windows to emit.
    pub n_samples: usize,
    pub seed: u64,
    /// Allow windows of the same series to share steps.
    pub allow_overlap: bool,
}

/// Draws up to `opts.n_samples` windows of `width` steps, uniformly over
/// all valid start positions of series with the given lengths.
///
/// Candidates are shuffled with `opts.seed`. Without overlap, a candidate is
/// kept only if it is at least `width` steps from every window already kept
/// in its series. Returns `(series, start)` pairs sorted by series then
/// start.
pub fn choose_windows(
    lengths: &[usize],
    width: usize,
    opts: &WindowOptions,
) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(usize, usize)> = lengths
        .iter()
        .enumerate()
        .filter(|&(_, &len)| width > 0 && len >= width)
        .flat_map(|(s, &len)| (0..=len - width).map(move |start| (s, start)))
        .collect();
    Rng::new(opts.seed).shuffle(&mut candidates);

    let mut kept: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); lengths.len()];
    let mut out = Vec::with_capacity(opts.n_samples.min(candidates.len()));
    for (s, start) in candidates {
        if out.len() == opts.n_samples {
            break;
        }
        if !opts.allow_overlap {
            let taken = &kept[s];
            let lo = start.saturating_sub(width - 1);
            if taken.range(lo..start + width).next().is_some() {
                continue;
            }
        }
        kept[s].insert(start);
        out.push((s, start));
    }
    if out.len() < opts.n_samples {
        warn!(
            "only {} of {} requested windows available",
            out.len(),
            opts.n_samples
        );
    }
    out.sort_unstable();
    out
}

/// Replaces NaN entries of each column of `rows` by the last finite value
/// above them; leading gaps take the first finite value below, and columns
/// with no finite value become 0. Returns the number of values filled.
pub fn fill_missing(rows: &mut [Vec<f64>]) -> usize {
    let width = rows.first().map_or(0, Vec::len);
    let mut filled = 0;
    for j in 0..width {
        let first = rows
            .iter()
            .map(|r| r[j])
            .find(|v| v.is_finite())
            .unwrap_or(0.0);
        let mut last = first;
        for r in rows.iter_mut() {
            if r[j].is_finite() {
                last = r[j];
            } else {
                r[j] = last;
                filled += 1;
            }
        }
    }
    filled
}

/// Column means and standard deviations (population) over all rows of all
/// series.
pub fn column_moments(series: &[Vec<Vec<f64>>], width: usize) -> (Vec<f64>, Vec<f64>) {
    let n = series.iter().map(Vec::len).sum::<usize>() as f64;
    let mut mean = vec![0.0; width];
    let mut var = vec![0.0; width];
    if n == 0.0 {
        return (mean, vec![1.0; width]);
    }
    for r in series.iter().flatten() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for r in series.iter().flatten() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd = var.iter().map(|s| (s / n).sqrt()).collect();
    (mean, sd)
}

/// Centres every column and scales it to unit variance; constant columns are
/// only centred.
pub fn standardize(series: &mut [Vec<Vec<f64>>], width: usize) {
    let (mean, sd) = column_moments(series, width);
    for r in series.iter_mut().flatten() {
        for ((v, m), s) in r.iter_mut().zip(&mean).zip(&sd) {
            *v -= m;
            if *s > 0.0 {
                *v /= s;
            }
        }
    }
}

/// Parses a raw numeric field; empty fields and `NaN` become NaN.
pub fn parse_value(field: &str) -> Option<f64> {
    let f = field.trim();
    if f.is_empty() {
        return Some(f64::NAN);
    }
    f.parse::<f64>()
        .ok()
        .map(|v| if v.is_finite() { v } else { f64::NAN })
}
