use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{default_runs, run_once, run_seed, PreparedData};
use super::method::{MethodId, ModelConfig};
use crate::data::Partition;
use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, format_percent, EvalReport};
use crate::nn::LossHistory;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteSettings {
    /// Defaults to 5 on validation and 1 on test.
    pub n_runs: Option<usize>,
    pub master_seed: u64,
    /// Per-method overrides of the published hyperparameters.
    pub models: BTreeMap<MethodId, ModelConfig>,
    /// Loss curves of network methods are written here when set.
    pub loss_dir: Option<PathBuf>,
}

/// One evaluated run inside a suite row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub rmse: f64,
    pub mae: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub method: MethodId,
    pub model: String,
    pub dataset: String,
    pub split: Partition,
    /// Set when any run of this method failed; metric fields are then absent.
    pub error: Option<String>,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
    pub mae_mean: Option<f64>,
    pub mae_std: Option<f64>,
    pub acc_mean: Option<f64>,
    pub acc_std: Option<f64>,
    pub n_runs: usize,
    pub runs: Vec<RunRecord>,
    /// Wall time of all runs of this row. Not serialised, so reports of
    /// identical runs are byte-identical apart from their timestamp.
    #[serde(skip)]
    pub elapsed: std::time::Duration,
}

impl SuiteRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Per-method results for one dataset and split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub dataset: String,
    pub digits: usize,
    pub split: Partition,
    pub n_runs: usize,
    pub master_seed: u64,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn row(&self, method: MethodId) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn has_failures(&self) -> bool {
        self.rows.iter().any(SuiteRow::failed)
    }

    /// Pretty JSON wrapped with a creation timestamp that carries no results.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Stamped<'a> {
            created_unix: u64,
            #[serde(flatten)]
            report: &'a SuiteReport,
        }
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(serde_json::to_string_pretty(&Stamped {
            created_unix,
            report: self,
        })?)
    }

    /// Table with the four published columns plus run provenance.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "### {} {} set ({} run{} per method, master seed {})\n\n",
            self.dataset,
            self.split.name(),
            self.n_runs,
            if self.n_runs == 1 { "" } else { "s" },
            self.master_seed
        );
        out.push_str("| Method | RMSE | MAE | Accuracy | Runs | Run seeds |\n");
        out.push_str("|---|---|---|---|---|---|\n");
        for row in &self.rows {
            let seeds = row
                .runs
                .iter()
                .map(|r| r.seed.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            let cells = match (&row.error, row.rmse_mean, row.mae_mean, row.acc_mean) {
                (None, Some(rmse), Some(mae), Some(acc)) => {
                    let with_std = |mean: f64, std: Option<f64>| {
                        if row.n_runs > 1 {
                            format!("{mean:.3}±{:.3}", std.unwrap_or(0.0))
                        } else {
                            format!("{mean:.3}")
                        }
                    };
                    format!(
                        "{} | {} | {}",
                        with_std(rmse, row.rmse_std),
                        with_std(mae, row.mae_std),
                        format_percent(acc)
                    )
                }
                (err, ..) => format!(
                    "failed: {} | - | -",
                    err.as_deref().unwrap_or("no result").replace('|', "/")
                ),
            };
            out.push_str(&format!(
                "| {} | {cells} | {} | {seeds} |\n",
                row.model, row.n_runs
            ));
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.md` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        let md = dir.join(format!("{stem}.md"));
        fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))?;
        fs::write(&md, self.to_markdown()).map_err(|e| Error::io(&md, e))?;
        Ok((json, md))
    }
}

/// Strips the creation timestamp so two report files can be compared.
pub fn strip_timestamp(json: &str) -> Result<serde_json::Value> {
    let mut value: serde_json::Value = serde_json::from_str(json)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("created_unix");
    }
    Ok(value)
}

pub fn dataset_label(digits: usize) -> String {
    format!("{digits}-digit")
}

/// Writes the per-epoch losses as `epoch,train_mse,val_mse`.
pub fn emit_loss_curves(history: &LossHistory, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    history.write_csv(path)
}

pub fn loss_curve_path(dir: &Path, method: MethodId, digits: usize) -> PathBuf {
    dir.join(format!("loss_{}_{digits}digit.csv", method.code().to_ascii_lowercase()))
}

pub(crate) fn summarize(
    method: MethodId,
    digits: usize,
    split: Partition,
    n_runs: usize,
    outcome: Result<Vec<(usize, u64, EvalReport)>>,
) -> SuiteRow {
    let mut row = SuiteRow {
        method,
        model: method.display_name().to_string(),
        dataset: dataset_label(digits),
        split,
        error: None,
        rmse_mean: None,
        rmse_std: None,
        mae_mean: None,
        mae_std: None,
        acc_mean: None,
        acc_std: None,
        n_runs,
        runs: Vec::new(),
        elapsed: std::time::Duration::ZERO,
    };
    let runs = match outcome {
        Ok(runs) => runs,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.runs = runs
        .iter()
        .map(|(run, seed, r)| RunRecord {
            run: *run,
            seed: *seed,
            rmse: r.rmse,
            mae: r.mae,
            accuracy: r.accuracy,
        })
        .collect();
    let reports: Vec<EvalReport> = runs.iter().map(|(_, _, r)| *r).collect();
    match aggregate_runs(&reports) {
        Ok(agg) => {
            row.rmse_mean = Some(agg.rmse.mean);
            row.rmse_std = Some(agg.rmse.std);
            row.mae_mean = Some(agg.mae.mean);
            row.mae_std = Some(agg.mae.std);
            row.acc_mean = Some(agg.accuracy.mean);
            row.acc_std = Some(agg.accuracy.std);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every method `n_runs` times on `split`. A failing method is recorded
/// in its row and the remaining methods still run.
pub fn run_suite(
    data: &PreparedData,
    methods: &[MethodId],
    split: Partition,
    settings: &SuiteSettings,
) -> Result<SuiteReport> {
    let n_runs = settings.n_runs.unwrap_or_else(|| default_runs(split));
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        log::info!("{} digits, {}: {method} x{n_runs}", data.digits, split.name());
        let model = settings.models.get(&method);
        let started = std::time::Instant::now();
        let outcome = (0..n_runs)
            .map(|run| {
                let seed = run_seed(settings.master_seed, method, run);
                let (report, history) = run_once(data, method, model, split, seed)?;
                if let (Some(dir), Some(h), 0) = (&settings.loss_dir, &history, run) {
                    emit_loss_curves(h, &loss_curve_path(dir, method, data.digits))?;
                }
                Ok((run, seed, report))
            })
            .collect::<Result<Vec<_>>>();
        if let Err(e) = &outcome {
            log::warn!("{method} failed: {e}");
        }
        let mut row = summarize(method, data.digits, split, n_runs, outcome);
        row.elapsed = started.elapsed();
        rows.push(row);
    }
    Ok(SuiteReport {
        dataset: dataset_label(data.digits),
        digits: data.digits,
        split,
        n_runs,
        master_seed: settings.master_seed,
        rows,
    })
}
