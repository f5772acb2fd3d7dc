use serde::{Deserialize, Serialize};

use super::experiment::TrainedModel;
use super::method::MethodId;
use crate::data::{count_digits, encode_number, DigitSample, DigitString, FeatureMatrix};
use crate::error::{Error, Result};
use crate::metrics::{classify_value, evaluate, EvalReport, PredictionMatrix, Rounding};
use crate::OUTPUTS;

/// The consecutive pairs examined for the tree's lookup behaviour.
pub const SPECIAL_CASES: [&str; 4] = ["999998", "999999", "100000", "100001"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub method: MethodId,
    pub number: DigitString,
    pub raw: [f64; OUTPUTS],
    pub classified: [u8; OUTPUTS],
    pub truth: [u8; OUTPUTS],
}

/// Whether a model gave bitwise-identical raw outputs to two numbers that
/// differ by one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub method: MethodId,
    pub first: DigitString,
    pub second: DigitString,
    pub identical: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub results: Vec<ProbeResult>,
    pub pairs: Vec<PairCheck>,
}

impl ProbeReport {
    pub fn pair(&self, method: MethodId, first: &str) -> Option<&PairCheck> {
        self.pairs
            .iter()
            .find(|p| p.method == method && p.first.to_string() == first)
    }

    pub fn to_markdown(&self) -> String {
        let fmt_row = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
        let mut out = String::from("| Method | Number | Truth | Classified | Raw |\n|---|---|---|---|---|\n");
        for r in &self.results {
            out.push_str(&format!(
                "| {} | {} | {:?} | {:?} | [{}] |\n",
                r.method.display_name(),
                r.number,
                r.truth,
                r.classified,
                fmt_row(&r.raw)
            ));
        }
        if !self.pairs.is_empty() {
            out.push_str("\n| Method | Pair | Identical |\n|---|---|---|\n");
            for p in &self.pairs {
                out.push_str(&format!(
                    "| {} | ({}, {}) | {} |\n",
                    p.method.display_name(),
                    p.first,
                    p.second,
                    p.identical
                ));
            }
        }
        out
    }
}

/// Raw and classified predictions of every model on every number. Adjacent
/// list entries whose values differ by one are also checked for identical
/// outputs.
pub fn probe_special_cases(models: &[(MethodId, &TrainedModel)], numbers: &[DigitString]) -> Result<ProbeReport> {
    let mut report = ProbeReport::default();
    for &(method, model) in models {
        let digits = model.digits();
        if let Some(bad) = numbers.iter().find(|n| n.len() != digits) {
            return Err(Error::InvalidInput(format!(
                "{method} was trained on {digits}-digit numbers, cannot probe {bad}"
            )));
        }
        if numbers.is_empty() {
            continue;
        }
        let values: Vec<f64> = numbers
            .iter()
            .flat_map(|n| encode_number(n, model.encoding()))
            .collect();
        let x = FeatureMatrix::from_values(digits, model.encoding(), numbers.len(), values)?;
        let pred: PredictionMatrix = model.predict(&x)?;
        for (i, number) in numbers.iter().enumerate() {
            let raw: [f64; OUTPUTS] = pred.row(i).try_into().expect("ten outputs");
            report.results.push(ProbeResult {
                method,
                number: number.clone(),
                raw,
                classified: raw.map(|v| classify_value(v, digits, Rounding::default())),
                truth: count_digits(number).0,
            });
        }
        for (i, pair) in numbers.windows(2).enumerate() {
            if pair[1].value().checked_sub(pair[0].value()) == Some(1) {
                let bits = |r: usize| pred.row(r).iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                report.pairs.push(PairCheck {
                    method,
                    first: pair[0].clone(),
                    second: pair[1].clone(),
                    identical: bits(i) == bits(i + 1),
                });
            }
        }
    }
    Ok(report)
}

/// Predicts `d / 10` for every entry, the mean count under uniform digits.
/// For ten digits the classified prediction is the all-ones vector.
pub fn constant_baseline(digits: usize, samples: &[DigitSample]) -> Result<EvalReport> {
    if digits == 0 {
        return Err(Error::Config("baseline needs at least one digit".into()));
    }
    let truth: Vec<_> = samples.iter().map(|s| s.label).collect();
    let pred = PredictionMatrix::new(samples.len(), vec![digits as f64 / 10.0; samples.len() * OUTPUTS])?;
    evaluate(&truth, &pred, digits)
}
