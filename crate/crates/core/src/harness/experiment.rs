use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::method::{MethodId, ModelConfig};
use crate::cart::{fit_tree, RegressionTree};
use crate::data::{manifest_path, read_dataset, DatasetManifest};
use crate::data::{
    generate_dataset, split_dataset, DatasetSpec, DigitSample, Encoding, FeatureMatrix, LabeledMatrix,
    Partition, SplitDataset, SplitRatios,
};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, fit_predict_forest, ForestConfig, RandomForest};
use crate::metrics::{evaluate, EvalReport, PredictionMatrix};
use crate::nn::{predict_nn, train, LossHistory, MlpModel};
use crate::seed::{derive_seed, rng_from_seed};

/// Where the samples of an experiment come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Generate(DatasetSpec),
    /// A CSV written by `generate`; its manifest supplies the split when present.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "paper_ratios")]
    pub split_ratios: SplitRatios,
    pub method: MethodId,
    /// `None` uses the published hyperparameters for the method.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Defaults to 5 on validation and 1 on test.
    #[serde(default)]
    pub n_runs: Option<usize>,
    #[serde(default = "default_split")]
    pub split: Partition,
    /// Master seed from which every run seed is derived.
    #[serde(default)]
    pub seed: u64,
}

fn paper_ratios() -> SplitRatios {
    SplitRatios::PAPER
}

fn default_split() -> Partition {
    Partition::Validation
}

/// Five runs on validation, one on test or train.
pub fn default_runs(split: Partition) -> usize {
    match split {
        Partition::Validation => 5,
        _ => 1,
    }
}

impl ExperimentConfig {
    pub fn new(data: DataSource, method: MethodId, split: Partition) -> Self {
        Self {
            data,
            split_seed: 0,
            split_ratios: SplitRatios::PAPER,
            method,
            model: None,
            n_runs: None,
            split,
            seed: 0,
        }
    }

    pub fn runs(&self) -> usize {
        self.n_runs.unwrap_or_else(|| default_runs(self.split))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs() == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        self.split_ratios.validate()?;
        if let DataSource::Generate(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let config: Self = serde_json::from_reader(BufReader::new(file))?;
        config.validate()?;
        Ok(config)
    }

    pub fn prepare(&self) -> Result<PreparedData> {
        self.validate()?;
        match &self.data {
            DataSource::Generate(spec) => PreparedData::generate(spec, self.split_ratios, self.split_seed),
            DataSource::File(path) => PreparedData::load(path, Some((self.split_ratios, self.split_seed))),
        }
    }
}

/// A split dataset with both encodings of every partition materialised.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub digits: usize,
    /// Provenance of the samples, when known.
    pub spec: Option<DatasetSpec>,
    pub split_seed: u64,
    pub split: SplitDataset,
    original: [LabeledMatrix; 3],
    modified: [LabeledMatrix; 3],
}

fn slot(partition: Partition) -> usize {
    match partition {
        Partition::Train => 0,
        Partition::Validation => 1,
        Partition::Test => 2,
    }
}

impl PreparedData {
    pub fn generate(spec: &DatasetSpec, ratios: SplitRatios, split_seed: u64) -> Result<Self> {
        let samples = generate_dataset(spec)?;
        Self::from_samples(&samples, Some(spec.clone()), ratios, split_seed)
    }

    /// Reads a dataset CSV. The manifest next to it, when present, fixes the
    /// split; otherwise `fallback` does (paper ratios and seed 0 if `None`).
    pub fn load(path: &Path, fallback: Option<(SplitRatios, u64)>) -> Result<Self> {
        let file = read_dataset(path)?;
        let manifest_file = manifest_path(path);
        let (spec, ratios, split_seed) = if manifest_file.exists() {
            let m = DatasetManifest::read(&manifest_file)?;
            if m.digits != file.digits || m.count != file.samples.len() {
                return Err(Error::Format {
                    path: manifest_file,
                    message: format!(
                        "manifest describes {} rows of {} digits, file has {} rows of {}",
                        m.count,
                        m.digits,
                        file.samples.len(),
                        file.digits
                    ),
                });
            }
            let spec = DatasetSpec {
                digits: m.digits,
                count: m.count,
                seed: m.seed,
                leading_zeros: m.leading_zeros,
            };
            (Some(spec), m.split_ratios, m.split_seed)
        } else {
            let (ratios, seed) = fallback.unwrap_or((SplitRatios::PAPER, 0));
            (None, ratios, seed)
        };
        Self::from_samples(&file.samples, spec, ratios, split_seed)
    }

    pub fn from_samples(
        samples: &[DigitSample],
        spec: Option<DatasetSpec>,
        ratios: SplitRatios,
        split_seed: u64,
    ) -> Result<Self> {
        let digits = crate::data::uniform_digits(samples)?;
        let split = split_dataset(samples, ratios, split_seed)?;
        let encode_all = |enc| -> Result<[LabeledMatrix; 3]> {
            Ok([
                LabeledMatrix::from_samples(&split.train, enc)?,
                LabeledMatrix::from_samples(&split.validation, enc)?,
                LabeledMatrix::from_samples(&split.test, enc)?,
            ])
        };
        Ok(Self {
            digits,
            spec,
            split_seed,
            original: encode_all(Encoding::Original)?,
            modified: encode_all(Encoding::Modified)?,
            split,
        })
    }

    pub fn labeled(&self, partition: Partition, encoding: Encoding) -> &LabeledMatrix {
        match encoding {
            Encoding::Original => &self.original[slot(partition)],
            Encoding::Modified => &self.modified[slot(partition)],
        }
    }

    pub fn samples(&self, partition: Partition) -> &[DigitSample] {
        self.split.partition(partition)
    }
}

/// Any fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    Tree(RegressionTree),
    Forest(RandomForest),
    Network(MlpModel),
}

impl TrainedModel {
    pub fn encoding(&self) -> Encoding {
        match self {
            TrainedModel::Tree(t) => t.encoding(),
            TrainedModel::Forest(f) => f.encoding(),
            TrainedModel::Network(_) => Encoding::Modified,
        }
    }

    pub fn digits(&self) -> usize {
        match self {
            TrainedModel::Tree(t) => t.digits(),
            TrainedModel::Forest(f) => f.digits(),
            TrainedModel::Network(m) => m.config().digits,
        }
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<PredictionMatrix> {
        if x.encoding() != self.encoding() || x.digits() != self.digits() {
            return Err(Error::InvalidInput(format!(
                "model expects {}-digit {:?} inputs, got {}-digit {:?}",
                self.digits(),
                self.encoding(),
                x.digits(),
                x.encoding()
            )));
        }
        match self {
            TrainedModel::Tree(t) => t.predict_matrix(x),
            TrainedModel::Forest(f) => f.predict_matrix(x),
            TrainedModel::Network(m) => predict_nn(m, x),
        }
    }
}

/// On-disk form of a trained model with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub method: MethodId,
    pub digits: usize,
    pub seed: u64,
    pub trained: TrainedModel,
}

impl ModelEnvelope {
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

/// Seed of run `run` of `method`, independent of which other methods run.
pub fn run_seed(master: u64, method: MethodId, run: usize) -> u64 {
    derive_seed(master, &[method.index(), run as u64])
}

fn seeded(config: ModelConfig, seed: u64) -> ModelConfig {
    match config {
        ModelConfig::Forest(c) => ModelConfig::Forest(ForestConfig { seed, ..c }),
        ModelConfig::Network(c) => ModelConfig::Network(crate::nn::MlpConfig { seed, ..c }),
        tree => tree,
    }
}

fn resolved_config(method: MethodId, model: Option<&ModelConfig>, digits: usize) -> Result<ModelConfig> {
    model
        .cloned()
        .unwrap_or_else(|| ModelConfig::paper(method, digits))
        .resolve(method, digits)
}

/// Fits `method` on the training partition with the given run seed.
pub fn train_method(
    data: &PreparedData,
    method: MethodId,
    model: Option<&ModelConfig>,
    seed: u64,
) -> Result<(TrainedModel, Option<LossHistory>)> {
    let config = seeded(resolved_config(method, model, data.digits)?, seed);
    let tr = data.labeled(Partition::Train, method.encoding());
    match config {
        ModelConfig::Tree(c) => Ok((TrainedModel::Tree(fit_tree(&tr.x, &tr.y, &c, &mut rng_from_seed(seed))?), None)),
        ModelConfig::Forest(c) => Ok((TrainedModel::Forest(fit_forest(&tr.x, &tr.y, &c)?), None)),
        ModelConfig::Network(c) => {
            let va = data.labeled(Partition::Validation, Encoding::Modified);
            let (m, history) = train(&c, tr, va)?;
            Ok((TrainedModel::Network(m), Some(history)))
        }
    }
}

/// Outcome of one seeded run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub run: usize,
    pub seed: u64,
    pub report: EvalReport,
    pub history: Option<LossHistory>,
}

/// Trains and evaluates one run. Forests are evaluated while fitting so that
/// only one member tree is held in memory at a time.
pub fn run_once(
    data: &PreparedData,
    method: MethodId,
    model: Option<&ModelConfig>,
    split: Partition,
    seed: u64,
) -> Result<(EvalReport, Option<LossHistory>)> {
    let eval = data.labeled(split, method.encoding());
    let config = seeded(resolved_config(method, model, data.digits)?, seed);
    let (pred, history) = match &config {
        ModelConfig::Forest(c) => {
            let tr = data.labeled(Partition::Train, method.encoding());
            (fit_predict_forest(&tr.x, &tr.y, c, &eval.x)?, None)
        }
        _ => {
            let (trained, history) = train_method(data, method, Some(&config), seed)?;
            (trained.predict(&eval.x)?, history)
        }
    };
    Ok((evaluate(&eval.y, &pred, data.digits)?, history))
}

/// One run of `config`: run index 0 of its method under its master seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<EvalReport> {
    let data = config.prepare()?;
    let seed = run_seed(config.seed, config.method, 0);
    Ok(run_once(&data, config.method, config.model.as_ref(), config.split, seed)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PreparedData {
        PreparedData::generate(&DatasetSpec::new(4, 3000, 1), SplitRatios::PAPER, 2).unwrap()
    }

    #[test]
    fn prepared_partitions() {
        let data = small();
        assert_eq!(data.labeled(Partition::Train, Encoding::Original).len(), 1800);
        assert_eq!(data.labeled(Partition::Test, Encoding::Modified).x.cols(), 4);
        assert_eq!(data.samples(Partition::Validation).len(), 600);
    }

    #[test]
    fn tree_memorises_training_split() {
        let data = small();
        let (r, h) = run_once(&data, MethodId::Dt1, None, Partition::Train, 0).unwrap();
        assert!(h.is_none());
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn forest_run_matches_stored_model() {
        let data = small();
        let model = ModelConfig::Forest(ForestConfig {
            n_trees: 4,
            ..ForestConfig::default()
        });
        let (r, _) = run_once(&data, MethodId::Rf2, Some(&model), Partition::Validation, 8).unwrap();
        let (trained, _) = train_method(&data, MethodId::Rf2, Some(&model), 8).unwrap();
        let va = data.labeled(Partition::Validation, Encoding::Modified);
        let stored = evaluate(&va.y, &trained.predict(&va.x).unwrap(), 4).unwrap();
        assert_eq!(r, stored);
    }

    #[test]
    fn model_predict_checks_encoding() {
        let data = small();
        let (trained, _) = train_method(&data, MethodId::Dt1, None, 0).unwrap();
        let wrong = data.labeled(Partition::Test, Encoding::Modified);
        assert!(trained.predict(&wrong.x).is_err());
    }

    #[test]
    fn config_json_defaults() {
        let text = r#"{"data": {"generate": {"digits": 6, "count": 1000, "seed": 3}}, "method": "DT2"}"#;
        let config: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(config.split, Partition::Validation);
        assert_eq!(config.runs(), 5);
        assert_eq!(config.split_ratios, SplitRatios::PAPER);
        let test = ExperimentConfig {
            split: Partition::Test,
            ..config.clone()
        };
        assert_eq!(test.runs(), 1);
        let zero = ExperimentConfig {
            n_runs: Some(0),
            ..config
        };
        assert!(matches!(zero.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn run_seeds_differ_by_method_and_run() {
        let a = run_seed(1, MethodId::Nn, 0);
        assert_ne!(a, run_seed(1, MethodId::Nn, 1));
        assert_ne!(a, run_seed(1, MethodId::NnEmb, 0));
        assert_eq!(a, run_seed(1, MethodId::Nn, 0));
    }

    #[test]
    fn envelope_round_trip() {
        let data = small();
        let (trained, _) = train_method(&data, MethodId::Dt2, None, 0).unwrap();
        let env = ModelEnvelope {
            method: MethodId::Dt2,
            digits: 4,
            seed: 0,
            trained,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        env.write(&path).unwrap();
        assert_eq!(ModelEnvelope::read(&path).unwrap(), env);
    }
}
