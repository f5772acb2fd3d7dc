//! RMSE, MAE and rounded accuracy over 10-wide count predictions.

use serde::{Deserialize, Serialize};

use crate::data::CountVector;
use crate::error::{Error, Result};
use crate::OUTPUTS;

/// Raw regression outputs, `rows x 10`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    rows: usize,
    values: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(rows: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * OUTPUTS {
            return Err(Error::shape("prediction matrix", rows * OUTPUTS, values.len()));
        }
        Ok(Self { rows, values })
    }

    pub fn from_rows(rows: &[[f64; OUTPUTS]]) -> Self {
        Self {
            rows: rows.len(),
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * OUTPUTS..(i + 1) * OUTPUTS]
    }
}

/// Predictions after rounding and clamping to `[0, d]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassifiedMatrix {
    rows: usize,
    values: Vec<u8>,
}

impl ClassifiedMatrix {
    /// Accepts a real matrix only if every entry is already a non-negative
    /// integer count.
    pub fn try_from_real(pred: &PredictionMatrix) -> Result<Self> {
        let values = pred
            .values
            .iter()
            .map(|&v| {
                if v.fract() == 0.0 && (0.0..=u8::MAX as f64).contains(&v) {
                    Ok(v as u8)
                } else {
                    Err(Error::InvalidInput(format!(
                        "accuracy needs integer predictions, found {v}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rows: pred.rows,
            values,
        })
    }

    pub fn from_counts(counts: &[CountVector]) -> Self {
        Self {
            rows: counts.len(),
            values: counts.iter().flat_map(|c| c.0).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.values[i * OUTPUTS..(i + 1) * OUTPUTS]
    }

    pub fn to_real(&self) -> PredictionMatrix {
        PredictionMatrix {
            rows: self.rows,
            values: self.values.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Tie-break used when a raw prediction sits exactly on `k + 0.5`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
    HalfToEven,
}

/// Rounds to the nearest integer, then clamps into `[0, digits]`.
/// NaN maps to 0.
#[inline]
pub fn classify_value(value: f64, digits: usize, rounding: Rounding) -> u8 {
    let rounded = match rounding {
        Rounding::HalfAwayFromZero => value.round(),
        Rounding::HalfToEven => value.round_ties_even(),
    };
    // `as` saturates and sends NaN to 0.
    rounded.clamp(0.0, digits as f64) as u8
}

pub fn classify(pred: &PredictionMatrix, digits: usize) -> ClassifiedMatrix {
    classify_with(pred, digits, Rounding::default())
}

pub fn classify_with(pred: &PredictionMatrix, digits: usize, rounding: Rounding) -> ClassifiedMatrix {
    ClassifiedMatrix {
        rows: pred.rows,
        values: pred
            .values
            .iter()
            .map(|&v| classify_value(v, digits, rounding))
            .collect(),
    }
}

fn check_rows(truth: &[CountVector], rows: usize) -> Result<()> {
    if truth.len() != rows {
        return Err(Error::shape("metric inputs", truth.len(), rows));
    }
    if rows == 0 {
        return Err(Error::InvalidInput("metrics need at least one row".into()));
    }
    Ok(())
}

fn truth_values(truth: &[CountVector]) -> impl Iterator<Item = f64> + '_ {
    truth.iter().flat_map(|c| c.0.iter().map(|&v| v as f64))
}

pub fn rmse(truth: &[CountVector], pred: &PredictionMatrix) -> Result<f64> {
    check_rows(truth, pred.rows)?;
    let sse: f64 = truth_values(truth)
        .zip(&pred.values)
        .map(|(y, &p)| (y - p) * (y - p))
        .sum();
    Ok((sse / pred.values.len() as f64).sqrt())
}

pub fn mae(truth: &[CountVector], pred: &PredictionMatrix) -> Result<f64> {
    check_rows(truth, pred.rows)?;
    let sae: f64 = truth_values(truth)
        .zip(&pred.values)
        .map(|(y, &p)| (y - p).abs())
        .sum();
    Ok(sae / pred.values.len() as f64)
}

/// Fraction of entries predicted exactly.
pub fn accuracy(truth: &[CountVector], pred: &ClassifiedMatrix) -> Result<f64> {
    check_rows(truth, pred.rows)?;
    let hits = truth
        .iter()
        .flat_map(|c| c.0)
        .zip(&pred.values)
        .filter(|(y, p)| y == *p)
        .count();
    Ok(hits as f64 / pred.values.len() as f64)
}

/// Metrics of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub mae: f64,
    pub accuracy: f64,
    pub n: usize,
}

/// RMSE and MAE on the raw outputs, accuracy after [`classify`].
pub fn evaluate(truth: &[CountVector], pred: &PredictionMatrix, digits: usize) -> Result<EvalReport> {
    Ok(EvalReport {
        rmse: rmse(truth, pred)?,
        mae: mae(truth, pred)?,
        accuracy: accuracy(truth, &classify(pred, digits))?,
        n: truth.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (n - 1 denominator, 0 for one value).
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("no values to aggregate".into()));
        }
        // Identical runs (deterministic fits) report their value with std exactly 0.
        if values.iter().all(|&v| v == values[0]) {
            return Ok(Self { mean: values[0], std: 0.0 });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { mean, std })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub rmse: MeanStd,
    pub mae: MeanStd,
    pub accuracy: MeanStd,
    pub runs: Vec<EvalReport>,
}

pub fn aggregate_runs(reports: &[EvalReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("cannot aggregate zero runs".into()));
    }
    let pick = |f: fn(&EvalReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        rmse: pick(|r| r.rmse)?,
        mae: pick(|r| r.mae)?,
        accuracy: pick(|r| r.accuracy)?,
        runs: reports.to_vec(),
    })
}

/// `0.90206` -> `"90.206%"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.3}%", fraction * 100.0)
}
