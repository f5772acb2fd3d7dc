use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::MlpConfig;
use super::model::{mse_loss, MlpModel, Normalization};
use crate::data::{Encoding, FeatureMatrix, LabeledMatrix};
use crate::error::{Error, Result};
use crate::metrics::PredictionMatrix;
use crate::seed::{derive_seed, rng_from_seed};
use crate::OUTPUTS;

pub const LOSS_CSV_HEADER: &str = "epoch,train_mse,val_mse";

/// Per-epoch losses. `train_mse` is the batch-weighted running mean seen
/// during the epoch, `val_mse` a full pass after it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
}

impl LossHistory {
    pub fn epochs(&self) -> usize {
        self.train_mse.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOSS_CSV_HEADER);
        out.push('\n');
        for (i, (t, v)) in self.train_mse.iter().zip(&self.val_mse).enumerate() {
            out.push_str(&format!("{},{t},{v}\n", i + 1));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

fn as_array(x: &FeatureMatrix) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((x.rows(), x.cols()), x.values()).expect("row-major matrix")
}

fn targets(data: &LabeledMatrix) -> Array2<f64> {
    Array2::from_shape_fn((data.len(), OUTPUTS), |(i, j)| data.y[i].0[j] as f64)
}

fn check_inputs(config: &MlpConfig, data: &LabeledMatrix, name: &str) -> Result<()> {
    if data.x.encoding() != Encoding::Modified {
        return Err(Error::Config(format!(
            "the network consumes the per-digit encoding; {name} set is {:?}",
            data.x.encoding()
        )));
    }
    if data.x.digits() != config.digits {
        return Err(Error::shape("network digit count", config.digits, data.x.digits()));
    }
    if data.is_empty() {
        return Err(Error::InvalidInput(format!("{name} set is empty")));
    }
    Ok(())
}

fn full_mse(model: &MlpModel, x: ArrayView2<f64>, y: &Array2<f64>) -> Result<f64> {
    let pred = predict_array(model, x)?;
    Ok(mse_loss(pred.view(), y.view())?.0)
}

fn predict_array(model: &MlpModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    const CHUNK: usize = 4096;
    let mut out = Array2::zeros((x.nrows(), OUTPUTS));
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + CHUNK).min(x.nrows());
        let part = model.predict(x.slice(ndarray::s![start..end, ..]))?;
        out.slice_mut(ndarray::s![start..end, ..]).assign(&part);
        start = end;
    }
    Ok(out)
}

/// Mini-batch training with the configured optimizer. Batches are reshuffled
/// every epoch from a stream derived from `config.seed`.
pub fn train(config: &MlpConfig, train_set: &LabeledMatrix, val_set: &LabeledMatrix) -> Result<(MlpModel, LossHistory)> {
    config.validate()?;
    check_inputs(config, train_set, "training")?;
    check_inputs(config, val_set, "validation")?;

    let mut model = MlpModel::new(config.clone())?;
    let x = as_array(&train_set.x);
    if config.normalize_inputs && !config.use_embedding {
        model.set_normalization(Some(Normalization::fit(x)))?;
    }
    let y = targets(train_set);
    let val_x = as_array(&val_set.x);
    let val_y = targets(val_set);

    let n = train_set.len();
    let d = config.digits;
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng_from_seed(derive_seed(config.seed, &[1]));
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.epochs;
    let mut step = 0;
    let mut history = LossHistory::default();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut weighted = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut bx = Array2::zeros((batch.len(), d));
            let mut by = Array2::zeros((batch.len(), OUTPUTS));
            for (r, &i) in batch.iter().enumerate() {
                bx.row_mut(r).assign(&x.row(i));
                by.row_mut(r).assign(&y.row(i));
            }
            let (pred, cache) = model.forward(bx.view())?;
            let (loss, grad) = mse_loss(pred.view(), by.view())?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            weighted += loss * batch.len() as f64;
            let grads = model.backward(&cache, grad.view())?;
            let lr = config.schedule.rate(config.learning_rate, step, total_steps);
            model.apply_gradients(&grads, lr)?;
            step += 1;
        }
        let val = full_mse(&model, val_x, &val_y)?;
        if !val.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        log::debug!("epoch {epoch}: train_mse {:.6} val_mse {val:.6}", weighted / n as f64);
        history.train_mse.push(weighted / n as f64);
        history.val_mse.push(val);
    }
    Ok((model, history))
}

/// Raw (unrounded) network outputs for every row of `x`.
pub fn predict_nn(model: &MlpModel, x: &FeatureMatrix) -> Result<PredictionMatrix> {
    if x.encoding() != Encoding::Modified {
        return Err(Error::Config("the network consumes the per-digit encoding".into()));
    }
    let out = predict_array(model, as_array(x))?;
    PredictionMatrix::new(x.rows(), out.into_raw_vec_and_offset().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, DatasetSpec};

    fn data(n: usize, seed: u64) -> LabeledMatrix {
        let samples = generate_dataset(&DatasetSpec::new(4, n, seed)).unwrap();
        LabeledMatrix::from_samples(&samples, Encoding::Modified).unwrap()
    }

    fn config() -> MlpConfig {
        MlpConfig {
            digits: 4,
            hidden_layers: vec![16, 16],
            epochs: 3,
            batch_size: 32,
            seed: 4,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_loss_flat() {
        let (tr, va) = (data(300, 1), data(100, 2));
        let cfg = MlpConfig {
            learning_rate: 0.0,
            ..config()
        };
        let (model, hist) = train(&cfg, &tr, &va).unwrap();
        let fresh = MlpModel::new(cfg.clone()).unwrap();
        assert_eq!(model.layers(), fresh.layers());
        assert!(hist.val_mse.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn deterministic_and_improving() {
        let (tr, va) = (data(2000, 1), data(300, 2));
        let cfg = MlpConfig {
            epochs: 5,
            ..config()
        };
        let (a, ha) = train(&cfg, &tr, &va).unwrap();
        let (b, hb) = train(&cfg, &tr, &va).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a.layers(), b.layers());
        assert!(ha.val_mse.last().unwrap() < &ha.val_mse[0]);
        assert_eq!(ha.epochs(), 5);

        let csv = ha.to_csv();
        assert!(csv.starts_with("epoch,train_mse,val_mse\n1,"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn divergence_is_reported() {
        let (tr, va) = (data(300, 1), data(100, 2));
        let cfg = MlpConfig {
            learning_rate: 1e200,
            optimizer: crate::nn::OptimizerKind::Sgd,
            ..config()
        };
        assert!(matches!(train(&cfg, &tr, &va), Err(Error::Divergence { .. })));
    }

    #[test]
    fn rejects_wrong_inputs() {
        let samples = generate_dataset(&DatasetSpec::new(4, 50, 1)).unwrap();
        let orig = LabeledMatrix::from_samples(&samples, Encoding::Original).unwrap();
        assert!(train(&config(), &orig, &orig).is_err());
        let tr = data(50, 1);
        let empty = LabeledMatrix::from_samples(&[], Encoding::Modified);
        if let Ok(empty) = empty {
            assert!(train(&config(), &tr, &empty).is_err());
        }
        let wide = MlpConfig {
            digits: 5,
            ..config()
        };
        assert!(train(&wide, &tr, &tr).is_err());
    }
}
