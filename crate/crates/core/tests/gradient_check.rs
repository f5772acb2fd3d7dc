//! Analytic gradients against central finite differences.

mod common;

use common::{FLOOR, H};
use digitfreq::nn::{mse_loss, MlpConfig, MlpModel};
use digitfreq::seed::rng_from_seed;
use ndarray::Array2;
use rand::Rng;

const TOLERANCE: f64 = 1e-4;

fn loss(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    mse_loss(model.predict(x.view()).unwrap().view(), y.view()).unwrap().0
}

#[test]
fn gradients_match_finite_differences() {
    let mut worst = (0.0, String::new());
    for seed in 0..100 {
        let result = common::gradient_trial(seed);
        if result.0 > worst.0 {
            worst = result;
        }
    }
    assert!(worst.0 <= TOLERANCE, "max relative error {:e} at {}", worst.0, worst.1);
}

#[test]
fn paper_sized_check_on_two_layer_model() {
    // Two hidden layers of width 8, 16 samples.
    let config = MlpConfig {
        digits: 6,
        hidden_layers: vec![8, 8],
        seed: 3,
        ..MlpConfig::default()
    };
    let mut model = MlpModel::new(config).unwrap();
    let mut rng = rng_from_seed(11);
    let x = Array2::from_shape_fn((16, 6), |_| rng.random_range(0..10) as f64 / 3.0);
    let y = Array2::from_shape_fn((16, 10), |_| rng.random_range(0..=6) as f64);
    let (pred, cache) = model.forward(x.view()).unwrap();
    let (_, grad_out) = mse_loss(pred.view(), y.view()).unwrap();
    let grads = model.backward(&cache, grad_out.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    for (t, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = model.parameter_tensors_mut()[t][i];
            model.parameter_tensors_mut()[t][i] = original + H;
            let up = loss(&model, &x, &y);
            model.parameter_tensors_mut()[t][i] = original - H;
            let down = loss(&model, &x, &y);
            model.parameter_tensors_mut()[t][i] = original;
            let numeric = (up - down) / (2.0 * H);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            assert!(err <= TOLERANCE, "tensor {t} entry {i}: {a} vs {numeric}");
        }
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut rng = rng_from_seed(5);
    let pred = Array2::from_shape_fn((8, 10), |_| rng.random_range(-2.0..2.0));
    let target = Array2::from_shape_fn((8, 10), |_| rng.random_range(0..4) as f64);
    let (_, grad) = mse_loss(pred.view(), target.view()).unwrap();
    for i in 0..8 {
        for j in 0..10 {
            let mut up = pred.clone();
            up[[i, j]] += H;
            let mut down = pred.clone();
            down[[i, j]] -= H;
            let numeric = (mse_loss(up.view(), target.view()).unwrap().0
                - mse_loss(down.view(), target.view()).unwrap().0)
                / (2.0 * H);
            let rel = (grad[[i, j]] - numeric).abs() / grad[[i, j]].abs().max(FLOOR);
            assert!(rel < 1e-6, "entry ({i},{j}): {} vs {numeric}", grad[[i, j]]);
        }
    }
}
