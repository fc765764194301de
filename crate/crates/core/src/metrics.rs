//! Output error measures, weight histograms and the small statistics used to
//! summarize sweeps.

use std::io::Write;

use crate::error::{MetricsError, ModelError};
use crate::model::{forward_reference, LayerPair, NetworkTopology, Pattern, WeightMatrix};

/// Mean squared difference between desired and actual output bits.
pub fn error_per_pattern(d: &[bool], y: &[bool]) -> Result<f64, MetricsError> {
    if d.len() != y.len() {
        return Err(MetricsError::DimensionMismatch {
            expected: d.len(),
            got: y.len(),
        });
    }
    if d.is_empty() {
        return Ok(0.0);
    }
    Ok(hamming(d, y) as f64 / d.len() as f64)
}

pub fn hamming(d: &[bool], y: &[bool]) -> usize {
    d.iter().zip(y).filter(|(a, b)| a != b).count()
}

/// Square root of the mean per-pattern error over `(d, y)` pairs.
pub fn global_error<D: AsRef<[bool]>, Y: AsRef<[bool]>>(
    pairs: &[(D, Y)],
) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let m = pairs[0].0.as_ref().len();
    let mut errors = Vec::with_capacity(pairs.len());
    for (d, y) in pairs {
        let (d, y) = (d.as_ref(), y.as_ref());
        if d.len() != m {
            return Err(MetricsError::DimensionMismatch {
                expected: m,
                got: d.len(),
            });
        }
        errors.push(error_per_pattern(d, y)?);
    }
    Ok(global_error_of(&errors))
}

/// Square root of the mean of already computed per-pattern errors.
pub fn global_error_of(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    (errors.iter().sum::<f64>() / errors.len() as f64).sqrt()
}

/// Fraction of `(d, y)` evaluations within `tolerance` differing bits.
/// An empty list counts as fully correct.
pub fn quality_of_output<D: AsRef<[bool]>, Y: AsRef<[bool]>>(
    pairs: &[(D, Y)],
    tolerance: usize,
) -> f64 {
    if pairs.is_empty() {
        return 1.0;
    }
    let ok = pairs
        .iter()
        .filter(|(d, y)| hamming(d.as_ref(), y.as_ref()) <= tolerance)
        .count();
    ok as f64 / pairs.len() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub per_pattern: Vec<f64>,
    pub global: f64,
    pub quality: f64,
}

/// Evaluates every pattern through the reference forward pass.
pub fn evaluate(
    topology: &NetworkTopology,
    weights: &WeightMatrix,
    patterns: &[Pattern],
    tolerance: usize,
) -> Result<ErrorReport, ModelError> {
    let mut pairs = Vec::with_capacity(patterns.len());
    for p in patterns {
        pairs.push((p.target.clone(), forward_reference(topology, weights, &p.input)?));
    }
    let per_pattern: Vec<f64> = pairs
        .iter()
        .map(|(d, y)| error_per_pattern(d, y).expect("forward pass returns m bits"))
        .collect();
    Ok(ErrorReport {
        global: global_error_of(&per_pattern),
        quality: quality_of_output(&pairs, tolerance),
        per_pattern,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Initial,
    PostEquilibration,
    PostLearning,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::PostEquilibration => "post-equilibration",
            Stage::PostLearning => "post-learning",
        }
    }
}

pub const DEFAULT_BINS: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub layer_pair: LayerPair,
    pub stage: Stage,
    /// `counts.len() + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std_dev: f64,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Fixed-width histogram of the stored weights of one layer pair over their
/// observed range. The last bin is closed on the right.
pub fn weight_histogram(
    weights: &WeightMatrix,
    topology: &NetworkTopology,
    layer_pair: LayerPair,
    stage: Stage,
    bins: usize,
) -> Result<Histogram, MetricsError> {
    let values: Vec<f64> = topology
        .synapse_ids(layer_pair)
        .map(|s| weights.stored(s))
        .collect();
    histogram(&values, layer_pair, stage, bins)
}

pub fn histogram(
    values: &[f64],
    layer_pair: LayerPair,
    stage: Stage,
    bins: usize,
) -> Result<Histogram, MetricsError> {
    if bins == 0 {
        return Err(MetricsError::NoBins);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if values.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = if width > 0.0 {
            (((v - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[i] += 1;
    }
    let (mean, std_dev) = mean_std(values);
    Ok(Histogram {
        layer_pair,
        stage,
        edges,
        counts,
        mean,
        std_dev,
    })
}

pub const HISTOGRAM_CSV_HEADER: &str = "layer_pair,stage,bin_lo,bin_hi,count";

pub fn write_histograms<W: Write>(mut out: W, hists: &[Histogram]) -> std::io::Result<()> {
    writeln!(out, "{HISTOGRAM_CSV_HEADER}")?;
    for h in hists {
        for (i, c) in h.counts.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                h.layer_pair,
                h.stage.as_str(),
                h.edges[i],
                h.edges[i + 1],
                c
            )?;
        }
    }
    Ok(())
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolated quantile of a sample, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, sx) = mean_std(x);
    let (my, sy) = mean_std(y);
    if sx == 0.0 || sy == 0.0 {
        return f64::NAN;
    }
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
    cov / (sx * sy)
}

/// Spearman rank correlation with average ranks for ties. NaN when either
/// side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    pearson(&ranks(x), &ranks(y))
}

/// Coefficient of determination of the least-squares line through `(x, y)`.
/// NaN when either side is constant, since no trend is explained.
pub fn linear_r2(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let r = pearson(x, y);
    r * r
}

#[cfg(test)]
mod tests;
