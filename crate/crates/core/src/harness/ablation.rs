use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{run_once, run_seed, PreparedData};
use super::method::{MethodId, ModelConfig};
use crate::data::{DatasetSpec, Partition, SplitRatios, PAPER_SAMPLE_COUNT};
use crate::error::{Error, Result};
use crate::metrics::format_percent;
use crate::nn::MlpConfig;

/// One network configuration to evaluate on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub method: MethodId,
    pub digits: usize,
    pub learning_rate: f64,
    pub hidden_layers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    #[serde(default)]
    pub cells: Vec<AblationCell>,
    /// Samples per generated dataset.
    #[serde(default = "paper_count")]
    pub count: usize,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub seed: u64,
}

fn paper_count() -> usize {
    PAPER_SAMPLE_COUNT
}

impl AblationGrid {
    /// The three alternative settings reported for the test sets.
    pub fn preset() -> Self {
        let cell = |method, digits, learning_rate, width| AblationCell {
            method,
            digits,
            learning_rate,
            hidden_layers: vec![width; 3],
        };
        Self {
            cells: vec![
                cell(MethodId::NnEmb, 6, 1e-5, 96),
                cell(MethodId::Nn, 10, 0.003, 128),
                cell(MethodId::NnEmb, 10, 5e-3, 256),
            ],
            count: PAPER_SAMPLE_COUNT,
            data_seed: 0,
            split_seed: 0,
            seed: 0,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let grid: Self = serde_json::from_reader(BufReader::new(file))?;
        for c in &grid.cells {
            if !c.method.is_network() {
                return Err(Error::Config(format!("ablation cells must be NN or NN_EMB, got {}", c.method)));
            }
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub seed: u64,
    pub error: Option<String>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn has_failures(&self) -> bool {
        self.rows.iter().any(|r| r.error.is_some())
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Method | Dataset | Hyperparameters | RMSE | MAE | Accuracy | Seed |\n|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let metrics = match (&r.error, r.rmse, r.mae, r.accuracy) {
                (None, Some(rmse), Some(mae), Some(acc)) => format!("{rmse:.3} | {mae:.3} | {}", format_percent(acc)),
                (err, ..) => format!("failed: {} | - | -", err.as_deref().unwrap_or("no result")),
            };
            out.push_str(&format!(
                "| {} | {}-digit test | lr = {}, layers = {:?} | {metrics} | {} |\n",
                r.cell.method.display_name(),
                r.cell.digits,
                r.cell.learning_rate,
                r.cell.hidden_layers,
                r.seed
            ));
        }
        out
    }
}

/// Evaluates every cell on the test split. `prepared` is searched for data of
/// the cell's digit count before generating it from the grid's seeds. A
/// failing cell is recorded and the grid continues.
pub fn run_ablation(grid: &AblationGrid, prepared: &[&PreparedData]) -> Result<AblationReport> {
    let mut generated: Vec<PreparedData> = Vec::new();
    let mut report = AblationReport::default();
    for cell in &grid.cells {
        if !cell.method.is_network() {
            return Err(Error::Config(format!("ablation cells must be NN or NN_EMB, got {}", cell.method)));
        }
        let data = match prepared.iter().find(|d| d.digits == cell.digits) {
            Some(d) => *d,
            None => {
                if !generated.iter().any(|d| d.digits == cell.digits) {
                    let spec = DatasetSpec::new(cell.digits, grid.count, grid.data_seed);
                    generated.push(PreparedData::generate(&spec, SplitRatios::PAPER, grid.split_seed)?);
                }
                generated.iter().find(|d| d.digits == cell.digits).expect("just generated")
            }
        };
        let model = ModelConfig::Network(MlpConfig::new(cell.digits, cell.hidden_layers.clone(), cell.learning_rate));
        let seed = run_seed(grid.seed, cell.method, 0);
        log::info!("ablation {cell:?}");
        let mut row = AblationRow {
            cell: cell.clone(),
            seed,
            error: None,
            rmse: None,
            mae: None,
            accuracy: None,
        };
        match run_once(data, cell.method, Some(&model), Partition::Test, seed) {
            Ok((r, _)) => {
                row.rmse = Some(r.rmse);
                row.mae = Some(r.mae);
                row.accuracy = Some(r.accuracy);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        report.rows.push(row);
    }
    Ok(report)
}
