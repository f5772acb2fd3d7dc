//! Synthetic digit-count datasets: generation, splitting and feature encodings.

mod io;

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};
use crate::OUTPUTS;

pub use io::{manifest_path, read_dataset, write_dataset, DatasetFile, DatasetManifest};

/// Largest supported digit length. Numbers must stay exactly representable
/// as `f64` for the single-column encoding.
pub const MAX_DIGITS: usize = 15;

/// Sample count used for both reproduction datasets.
pub const PAPER_SAMPLE_COUNT: usize = 150_000;

/// A fixed-width decimal number, most significant digit first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DigitString {
    digits: Vec<u8>,
}

impl DigitString {
    pub fn new(digits: Vec<u8>) -> Result<Self> {
        if digits.is_empty() || digits.len() > MAX_DIGITS {
            return Err(Error::InvalidInput(format!(
                "digit length {} outside 1..={MAX_DIGITS}",
                digits.len()
            )));
        }
        if let Some(bad) = digits.iter().find(|&&d| d > 9) {
            return Err(Error::InvalidInput(format!("digit {bad} outside 0..=9")));
        }
        Ok(Self { digits })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let digits = text
            .trim()
            .bytes()
            .map(|b| match b {
                b'0'..=b'9' => Ok(b - b'0'),
                _ => Err(Error::InvalidInput(format!("{text:?} is not a digit string"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(digits)
    }

    /// Zero-pads `value` to width `width`.
    pub fn from_value(value: u64, width: usize) -> Result<Self> {
        if width == 0 || width > MAX_DIGITS || value >= 10u64.pow(width as u32) {
            return Err(Error::InvalidInput(format!(
                "{value} does not fit in {width} digits"
            )));
        }
        let mut digits = vec![0u8; width];
        let mut rest = value;
        for slot in digits.iter_mut().rev() {
            *slot = (rest % 10) as u8;
            rest /= 10;
        }
        Ok(Self { digits })
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits
    }

    pub fn value(&self) -> u64 {
        self.digits.iter().fold(0u64, |acc, &d| acc * 10 + d as u64)
    }
}

impl fmt::Display for DigitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.digits {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl TryFrom<String> for DigitString {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::parse(&value)
    }
}

impl From<DigitString> for String {
    fn from(value: DigitString) -> Self {
        value.to_string()
    }
}

/// Occurrence count of each digit; index `j` counts digit `j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountVector(pub [u8; OUTPUTS]);

impl CountVector {
    pub fn as_array(&self) -> &[u8; OUTPUTS] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|&c| c as usize).sum()
    }

    pub fn to_f64(&self) -> [f64; OUTPUTS] {
        self.0.map(f64::from)
    }
}

/// Histogram of the digits of `number`.
pub fn count_digits(number: &DigitString) -> CountVector {
    let mut counts = [0u8; OUTPUTS];
    for &d in number.digits() {
        counts[d as usize] += 1;
    }
    CountVector(counts)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitSample {
    pub number: DigitString,
    pub label: CountVector,
}

impl DigitSample {
    pub fn new(number: DigitString) -> Self {
        let label = count_digits(&number);
        Self { number, label }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub digits: usize,
    pub count: usize,
    pub seed: u64,
    /// Draw from the full `[0, 10^d)` range. When false the leading digit is
    /// never zero.
    #[serde(default = "default_true")]
    pub leading_zeros: bool,
}

fn default_true() -> bool {
    true
}

impl DatasetSpec {
    pub fn new(digits: usize, count: usize, seed: u64) -> Self {
        Self {
            digits,
            count,
            seed,
            leading_zeros: true,
        }
    }

    pub fn paper(digits: usize, seed: u64) -> Self {
        Self::new(digits, PAPER_SAMPLE_COUNT, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("dataset sample count must be at least 1".into()));
        }
        if self.digits == 0 || self.digits > MAX_DIGITS {
            return Err(Error::Config(format!(
                "digit length {} outside 1..={MAX_DIGITS}",
                self.digits
            )));
        }
        Ok(())
    }

    /// Whether this spec matches one of the two reproduction datasets.
    pub fn is_paper_profile(&self) -> bool {
        matches!(self.digits, 6 | 10) && self.count == PAPER_SAMPLE_COUNT && self.leading_zeros
    }
}

const GENERATION_CHUNK: usize = 8192;

/// Draws `spec.count` numbers uniformly with replacement and labels them.
///
/// Generation is chunked; chunk `c` uses its own stream derived from
/// `(seed, c)`, so the output is a pure function of the spec.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<DigitSample>> {
    spec.validate()?;
    if !spec.is_paper_profile() {
        log::debug!("generating non-reproduction dataset profile {spec:?}");
    }
    let upper = 10u64.pow(spec.digits as u32);
    let lower = if spec.leading_zeros { 0 } else { upper / 10 };
    let chunks = spec.count.div_ceil(GENERATION_CHUNK);

    let samples = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = rng_from_seed(derive_seed(spec.seed, &[chunk as u64]));
            let len = GENERATION_CHUNK.min(spec.count - chunk * GENERATION_CHUNK);
            (0..len)
                .map(|_| {
                    let value = rng.random_range(lower..upper);
                    let number = DigitString::from_value(value, spec.digits)
                        .expect("value below 10^d");
                    DigitSample::new(number)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(samples)
}

/// Train/validation/test proportions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const PAPER: SplitRatios = SplitRatios {
        train: 0.6,
        validation: 0.2,
        test: 0.2,
    };

    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self> {
        let ratios = Self {
            train,
            validation,
            test,
        };
        ratios.validate()?;
        Ok(ratios)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Config(format!("split ratios must be non-negative: {self:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Partition sizes for `n` samples: validation and test are floored,
    /// the remainder goes to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((n as f64 * r) + 1e-9).floor() as usize;
        let validation = floor(self.validation).min(n);
        let test = floor(self.test).min(n - validation);
        (n - validation - test, validation, test)
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self::PAPER
    }
}

/// Which partition of a split to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    #[serde(alias = "val")]
    Validation,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        }
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Partition::Train),
            "val" | "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<DigitSample>,
    pub validation: Vec<DigitSample>,
    pub test: Vec<DigitSample>,
    pub ratios: SplitRatios,
    /// Source indices of each partition, in partition order.
    pub indices: [Vec<usize>; 3],
}

impl SplitDataset {
    pub fn partition(&self, which: Partition) -> &[DigitSample] {
        match which {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Shuffles `samples` with `seed` and cuts them into train/validation/test.
pub fn split_dataset(samples: &[DigitSample], ratios: SplitRatios, seed: u64) -> Result<SplitDataset> {
    ratios.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));

    let (n_train, n_val, _) = ratios.sizes(n);
    let test_idx = order.split_off(n_train + n_val);
    let val_idx = order.split_off(n_train);
    let train_idx = order;

    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok(SplitDataset {
        train: pick(&train_idx),
        validation: pick(&val_idx),
        test: pick(&test_idx),
        ratios,
        indices: [train_idx, val_idx, test_idx],
    })
}

/// Feature layout handed to the models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// One column holding the number itself.
    Original,
    /// One column per digit position, most significant first.
    Modified,
}

impl Encoding {
    pub fn width(self, digits: usize) -> usize {
        match self {
            Encoding::Original => 1,
            Encoding::Modified => digits,
        }
    }

    pub fn column_name(self, column: usize) -> String {
        match self {
            Encoding::Original => "Number".to_string(),
            Encoding::Modified => format!("Digit {}", column + 1),
        }
    }
}

impl std::str::FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(Encoding::Original),
            "modified" => Ok(Encoding::Modified),
            other => Err(Error::Config(format!("unknown encoding {other:?}"))),
        }
    }
}

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    digits: usize,
    encoding: Encoding,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_values(digits: usize, encoding: Encoding, rows: usize, values: Vec<f64>) -> Result<Self> {
        let cols = encoding.width(digits);
        if values.len() != rows * cols {
            return Err(Error::shape("feature matrix", rows * cols, values.len()));
        }
        Ok(Self {
            rows,
            cols,
            digits,
            encoding,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn digits(&self) -> usize {
        self.digits
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }
}

/// Feature row for a single number.
pub fn encode_number(number: &DigitString, encoding: Encoding) -> Vec<f64> {
    match encoding {
        Encoding::Original => vec![number.value() as f64],
        Encoding::Modified => number.digits().iter().map(|&d| d as f64).collect(),
    }
}

pub fn encode(samples: &[DigitSample], encoding: Encoding) -> Result<FeatureMatrix> {
    let digits = uniform_digits(samples)?;
    let mut values = Vec::with_capacity(samples.len() * encoding.width(digits));
    for s in samples {
        values.extend(encode_number(&s.number, encoding));
    }
    FeatureMatrix::from_values(digits, encoding, samples.len(), values)
}

/// Digit length shared by every sample; mixed lengths are rejected.
pub fn uniform_digits(samples: &[DigitSample]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("no samples".into()))?
        .number
        .len();
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.number.len() != first) {
        return Err(Error::InvalidInput(format!(
            "mixed digit lengths: sample 0 has {first}, sample {i} has {}",
            s.number.len()
        )));
    }
    Ok(first)
}

/// Encoded features paired with their count labels.
#[derive(Clone, Debug)]
pub struct LabeledMatrix {
    pub x: FeatureMatrix,
    pub y: Vec<CountVector>,
}

impl LabeledMatrix {
    pub fn from_samples(samples: &[DigitSample], encoding: Encoding) -> Result<Self> {
        Ok(Self {
            x: encode(samples, encoding)?,
            y: samples.iter().map(|s| s.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}
