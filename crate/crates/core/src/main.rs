use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use digitfreq::data::{
    generate_dataset, manifest_path, write_dataset, DatasetManifest, DatasetSpec, DigitString, Encoding, Partition,
    SplitRatios,
};
use digitfreq::harness::{
    constant_baseline, emit_loss_curves, loss_curve_path, probe_special_cases, run_ablation, run_seed, run_suite,
    train_method, AblationGrid, ExperimentConfig, MethodId, ModelEnvelope, PreparedData, SuiteSettings, TrainedModel,
    SPECIAL_CASES,
};
use digitfreq::metrics::format_percent;
use digitfreq::{Error, Result};

#[derive(Parser)]
#[command(name = "digitfreq", version, about = "Digit-frequency counting benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "DIGITFREQ_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Dataset CSV written by `generate`. Without it a dataset is generated.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Digits per number when generating.
    #[arg(long, default_value_t = 6)]
    digits: usize,
    #[arg(long, default_value_t = digitfreq::data::PAPER_SAMPLE_COUNT)]
    count: usize,
    /// Seed of the generated dataset.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Seed of the train/validation/test split when generating.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long)]
    no_leading_zeros: bool,
}

impl DataArgs {
    fn prepare(&self) -> Result<PreparedData> {
        match &self.dataset {
            Some(path) => PreparedData::load(path, Some((SplitRatios::PAPER, self.split_seed))),
            None => {
                let spec = DatasetSpec {
                    leading_zeros: !self.no_leading_zeros,
                    ..DatasetSpec::new(self.digits, self.count, self.data_seed)
                };
                PreparedData::generate(&spec, SplitRatios::PAPER, self.split_seed)
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled dataset CSV and its manifest.
    Generate {
        #[arg(long)]
        digits: usize,
        #[arg(long, default_value_t = digitfreq::data::PAPER_SAMPLE_COUNT)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Split seed recorded in the manifest (defaults to the seed).
        #[arg(long)]
        split_seed: Option<u64>,
        #[arg(long, default_value = "modified")]
        encoding: Encoding,
        #[arg(long)]
        no_leading_zeros: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run several methods on one dataset and split and write a report.
    Suite {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "val")]
        split: Partition,
        /// Comma-separated method codes or `all`.
        #[arg(long, default_value = "all")]
        methods: String,
        /// Runs per method (default 5 on validation, 1 on test).
        #[arg(long)]
        runs: Option<usize>,
        /// Master seed for run seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Train one method from a JSON experiment config and save the model.
    Train {
        /// Overrides the method named in the config.
        #[arg(long)]
        method: Option<MethodId>,
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Predict special numbers with every saved model in a directory.
    Probe {
        #[arg(long)]
        models: PathBuf,
        /// Comma-separated numbers; defaults to the two consecutive pairs.
        #[arg(long)]
        numbers: Option<String>,
    },
    /// Print the top of a saved tree, breadth first.
    InspectTree {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 15)]
        nodes: usize,
        /// Member index when the model is a forest.
        #[arg(long, default_value_t = 0)]
        tree: usize,
    },
    /// Evaluate a grid of network settings on the test split.
    Ablate {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        grid: Option<PathBuf>,
        /// Use the three published alternative settings.
        #[arg(long)]
        preset: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Score the constant `d / 10` predictor.
    Baseline {
        #[arg(long)]
        digits: usize,
        #[arg(long, default_value = "test")]
        split: Partition,
        #[arg(long, default_value_t = digitfreq::data::PAPER_SAMPLE_COUNT)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Ok(true) when every cell succeeded.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate {
            digits,
            count,
            seed,
            split_seed,
            encoding,
            no_leading_zeros,
            out,
        } => {
            let spec = DatasetSpec {
                leading_zeros: !no_leading_zeros,
                ..DatasetSpec::new(digits, count, seed)
            };
            let samples = generate_dataset(&spec)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            write_dataset(&samples, encoding, &out)?;
            let manifest = DatasetManifest {
                digits,
                count,
                seed,
                leading_zeros: spec.leading_zeros,
                encoding,
                split_ratios: SplitRatios::PAPER,
                split_seed: split_seed.unwrap_or(seed),
            };
            manifest.write(&manifest_path(&out))?;
            println!("wrote {count} rows to {}", out.display());
            Ok(true)
        }
        Command::Suite {
            data,
            split,
            methods,
            runs,
            seed,
            out,
        } => {
            let methods = MethodId::parse_list(&methods)?;
            let prepared = data.prepare()?;
            let settings = SuiteSettings {
                n_runs: runs,
                master_seed: seed,
                loss_dir: Some(out.out.join("loss_curves")),
                ..SuiteSettings::default()
            };
            let report = run_suite(&prepared, &methods, split, &settings)?;
            let stem = format!("suite_{}digit_{}", prepared.digits, split.name());
            let (json, md) = report.write(&out.out, &stem)?;
            print!("{}", report.to_markdown());
            println!("\nwrote {} and {}", json.display(), md.display());
            Ok(!report.has_failures())
        }
        Command::Train { method, config, out } => {
            let mut config = ExperimentConfig::from_json_file(&config)?;
            if let Some(m) = method {
                config.method = m;
            }
            let data = config.prepare()?;
            let seed = run_seed(config.seed, config.method, 0);
            let (trained, history) = train_method(&data, config.method, config.model.as_ref(), seed)?;
            let eval = data.labeled(config.split, config.method.encoding());
            let report = digitfreq::metrics::evaluate(&eval.y, &trained.predict(&eval.x)?, data.digits)?;
            create_dir(&out.out)?;
            let stem = format!("{}_{}digit", config.method.code().to_ascii_lowercase(), data.digits);
            let model_path = out.out.join(format!("{stem}.model.json"));
            ModelEnvelope {
                method: config.method,
                digits: data.digits,
                seed,
                trained,
            }
            .write(&model_path)?;
            write_text(&out.out.join(format!("{stem}.metrics.json")), &serde_json::to_string_pretty(&report)?)?;
            if let Some(h) = history {
                emit_loss_curves(&h, &loss_curve_path(&out.out, config.method, data.digits))?;
            }
            println!(
                "{} on {}-digit {}: RMSE {:.3} MAE {:.3} accuracy {}",
                config.method.display_name(),
                data.digits,
                config.split.name(),
                report.rmse,
                report.mae,
                format_percent(report.accuracy)
            );
            println!("saved {}", model_path.display());
            Ok(true)
        }
        Command::Probe { models, numbers } => {
            let numbers: Vec<DigitString> = match numbers {
                Some(list) => list
                    .split(',')
                    .map(|s| DigitString::parse(s.trim()))
                    .collect::<Result<_>>()
                    .map_err(|e| Error::Config(e.to_string()))?,
                None => SPECIAL_CASES.iter().map(|s| DigitString::parse(s).expect("valid")).collect(),
            };
            let mut envelopes = Vec::new();
            let entries = fs::read_dir(&models).map_err(|e| Error::Io {
                path: models.clone(),
                source: e,
            })?;
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.to_string_lossy().ends_with(".model.json"))
                .collect();
            paths.sort();
            for p in paths {
                envelopes.push(ModelEnvelope::read(&p)?);
            }
            let mut printed = false;
            for env in &envelopes {
                let matching: Vec<DigitString> = numbers.iter().filter(|n| n.len() == env.digits).cloned().collect();
                if matching.is_empty() {
                    continue;
                }
                let report = probe_special_cases(&[(env.method, &env.trained)], &matching)?;
                print!("{}", report.to_markdown());
                println!();
                printed = true;
            }
            if !printed {
                return Err(Error::Config(format!(
                    "no saved model in {} matches the probe numbers' length",
                    models.display()
                )));
            }
            Ok(true)
        }
        Command::InspectTree { model, nodes, tree } => {
            let env = ModelEnvelope::read(&model)?;
            let t = match &env.trained {
                TrainedModel::Tree(t) => t,
                TrainedModel::Forest(f) => f
                    .trees()
                    .get(tree)
                    .ok_or_else(|| Error::Config(format!("forest has {} trees", f.trees().len())))?,
                TrainedModel::Network(_) => {
                    return Err(Error::Config(format!("{} holds a network, not a tree", model.display())))
                }
            };
            println!("{:?}", t.stats());
            print!("{}", t.dump(nodes));
            Ok(true)
        }
        Command::Ablate { grid, preset, out } => {
            let grid = match grid {
                Some(path) if !preset => AblationGrid::from_json_file(&path)?,
                _ => AblationGrid::preset(),
            };
            let report = run_ablation(&grid, &[])?;
            create_dir(&out.out)?;
            write_text(&out.out.join("ablation.json"), &serde_json::to_string_pretty(&report)?)?;
            write_text(&out.out.join("ablation.md"), &report.to_markdown())?;
            print!("{}", report.to_markdown());
            Ok(!report.has_failures())
        }
        Command::Baseline {
            digits,
            split,
            count,
            data_seed,
            split_seed,
        } => {
            let data = PreparedData::generate(&DatasetSpec::new(digits, count, data_seed), SplitRatios::PAPER, split_seed)?;
            let r = constant_baseline(digits, data.samples(split))?;
            println!(
                "constant baseline ({digits} digits, {} split, n={}): RMSE {:.3} MAE {:.3} accuracy {}",
                split.name(),
                r.n,
                r.rmse,
                r.mae,
                format_percent(r.accuracy)
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
