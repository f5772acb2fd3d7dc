//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use digitfreq::cart::{best_split, TreeConfig};
use digitfreq::data::{CountVector, Encoding, FeatureMatrix};
use digitfreq::nn::{mse_loss, MlpConfig, MlpModel, Normalization};
use digitfreq::seed::{rng_from_seed, Rng as SeededRng};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Finite-difference step.
pub const H: f64 = 1e-5;
/// Gradients below this magnitude are compared absolutely.
pub const FLOOR: f64 = 1e-6;

/// Digit counts by scanning the decimal text.
pub fn count_oracle(text: &str) -> [u8; 10] {
    let mut counts = [0u8; 10];
    for ch in text.chars() {
        let d = ch.to_digit(10).expect("decimal digit") as usize;
        counts[d] += 1;
    }
    counts
}

/// Round half away from zero, then clamp to `[0, d]`; NaN maps to 0.
pub fn classify_reference(x: f64, d: usize) -> u8 {
    if x.is_nan() {
        return 0;
    }
    let r = if x >= 0.0 { (x + 0.5).floor() } else { (x - 0.5).ceil() };
    // Large magnitudes: x + 0.5 is exact only below 2^52.
    let r = if x.abs() >= 4_503_599_627_370_496.0 { x } else { r };
    if r <= 0.0 {
        0
    } else if r >= d as f64 {
        d as u8
    } else {
        r as u8
    }
}

fn batch_loss(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    mse_loss(model.predict(x.view()).unwrap().view(), y.view()).unwrap().0
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter of one random small model.
pub fn gradient_trial(seed: u64) -> (f64, String) {
    let mut rng = rng_from_seed(seed);
    let digits = rng.random_range(1..=4);
    let use_embedding = seed % 3 == 2;
    let hidden: Vec<usize> = match seed % 3 {
        0 => vec![],
        1 => vec![8; rng.random_range(1..=2)],
        _ => vec![8],
    };
    let config = MlpConfig {
        digits,
        hidden_layers: hidden.clone(),
        use_embedding,
        embedding_dim: 3,
        seed,
        ..MlpConfig::default()
    };
    let mut model = MlpModel::new(config).unwrap();
    let normal = Normal::new(0.0, 0.5).unwrap();
    for t in model.parameter_tensors_mut() {
        for v in t.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }
    if !use_embedding {
        model
            .set_normalization(Some(Normalization {
                mean: (0..digits).map(|_| rng.random_range(3.0..6.0)).collect(),
                std: (0..digits).map(|_| rng.random_range(2.0..3.5)).collect(),
            }))
            .unwrap();
    }

    let batch = 16;
    let x = Array2::from_shape_fn((batch, digits), |_| rng.random_range(0..10) as f64);
    let y = Array2::from_shape_fn((batch, 10), |_| rng.random_range(0..=digits) as f64);

    let (pred, cache) = model.forward(x.view()).unwrap();
    let (_, grad_out) = mse_loss(pred.view(), y.view()).unwrap();
    let grads = model.backward(&cache, grad_out.view()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    if let Some(table) = &grads.embedding {
        for digit in 0..10 {
            if !x.iter().any(|&v| v as usize == digit) {
                assert!(table.row(digit).iter().all(|&g| g == 0.0), "untouched row {digit} has gradient");
            }
        }
    }

    let mut worst = (0.0, String::new());
    for (t, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = model.parameter_tensors_mut()[t][i];
            model.parameter_tensors_mut()[t][i] = original + H;
            let up = batch_loss(&model, &x, &y);
            model.parameter_tensors_mut()[t][i] = original - H;
            let down = batch_loss(&model, &x, &y);
            model.parameter_tensors_mut()[t][i] = original;
            let numeric = (up - down) / (2.0 * H);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            if err > worst.0 {
                worst = (
                    err,
                    format!("seed {seed} tensor {t} entry {i}: analytic {a:e} numeric {numeric:e} (hidden {hidden:?}, embedding {use_embedding})"),
                );
            }
        }
    }
    worst
}

/// Exact weighted child SSE as a fraction `num / den`.
struct Score {
    num: i128,
    den: i128,
}

impl Score {
    fn less_than(&self, other: &Score) -> bool {
        self.num * other.den < other.num * self.den
    }
}

/// `sum_i sum_j (n y_ij - S_j)^2 / n^2`, computed from deviations.
fn child_sse(labels: &[&CountVector]) -> (i128, i128) {
    let n = labels.len() as i128;
    let mut sums = [0i128; 10];
    for y in labels {
        for j in 0..10 {
            sums[j] += y.0[j] as i128;
        }
    }
    let mut num = 0i128;
    for y in labels {
        for j in 0..10 {
            let dev = n * y.0[j] as i128 - sums[j];
            num += dev * dev;
        }
    }
    (num, n * n)
}

fn pair_score(left: &[&CountVector], right: &[&CountVector]) -> Score {
    let (a, b) = child_sse(left);
    let (c, d) = child_sse(right);
    Score {
        num: a * d + c * b,
        den: b * d,
    }
}

pub struct OracleSplit {
    pub feature: usize,
    pub threshold: f64,
    pub decrease: f64,
}

/// Tries every midpoint of every listed feature. Ties keep the lowest
/// feature, then the lowest threshold; only strict improvements count.
pub fn exhaustive_split(x: &[Vec<f64>], y: &[CountVector], features: &[usize], min_leaf: usize) -> Option<OracleSplit> {
    let n = y.len();
    let all: Vec<&CountVector> = y.iter().collect();
    let (pn, pd) = child_sse(&all);
    let parent = Score { num: pn, den: pd };
    let mut best: Option<(Score, usize, f64)> = None;
    let mut sorted = features.to_vec();
    sorted.sort_unstable();
    for f in sorted {
        let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<&CountVector> = (0..n).filter(|&i| x[i][f] <= t).map(|i| &y[i]).collect();
            let right: Vec<&CountVector> = (0..n).filter(|&i| x[i][f] > t).map(|i| &y[i]).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let s = pair_score(&left, &right);
            if best.as_ref().is_none_or(|(b, _, _)| s.less_than(b)) {
                best = Some((s, f, t));
            }
        }
    }
    let (score, feature, threshold) = best?;
    if !score.less_than(&parent) {
        return None;
    }
    let sse = |s: &Score| s.num as f64 / s.den as f64;
    Some(OracleSplit {
        feature,
        threshold,
        decrease: (sse(&parent) - sse(&score)) / (10.0 * n as f64),
    })
}

/// Draws one random instance (n <= 64, k <= 3) and compares the greedy
/// search with enumeration. Returns whether a split existed.
pub fn split_instance(rng: &mut SeededRng, instance: usize) -> Result<bool, String> {
    let n = rng.random_range(1..=64);
    let k = rng.random_range(1..=3);
    // Small value ranges produce many tied feature values and tied scores.
    let range = rng.random_range(1..=10);
    let label_max = rng.random_range(0..=6u8);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..k).map(|_| rng.random_range(0..range) as f64).collect())
        .collect();
    let y: Vec<CountVector> = (0..n)
        .map(|_| CountVector(std::array::from_fn(|_| rng.random_range(0..=label_max))))
        .collect();
    let min_leaf = rng.random_range(1..=4);
    let features: Vec<usize> = if rng.random_bool(0.7) {
        (0..k).collect()
    } else {
        let mut f: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.6)).collect();
        if f.is_empty() {
            f.push(k - 1);
        }
        f
    };

    let matrix = FeatureMatrix::from_values(k, Encoding::Modified, n, x.concat()).unwrap();
    let config = TreeConfig {
        min_samples_leaf: min_leaf,
        ..TreeConfig::default()
    };
    let rows: Vec<usize> = (0..n).collect();
    let got = best_split(&matrix, &y, &rows, &features, &config);
    let want = exhaustive_split(&x, &y, &features, min_leaf);
    let ctx = format!("instance {instance}: n={n} k={k} min_leaf={min_leaf}");
    match (got, want) {
        (None, None) => Ok(false),
        (Some(g), Some(w)) => {
            if (g.feature, g.threshold) != (w.feature, w.threshold) {
                return Err(format!(
                    "{ctx}: greedy ({}, {}) vs exhaustive ({}, {})",
                    g.feature, g.threshold, w.feature, w.threshold
                ));
            }
            if (g.impurity_decrease - w.decrease).abs() > 1e-9 * w.decrease.max(1.0) {
                return Err(format!("{ctx}: decrease {} vs {}", g.impurity_decrease, w.decrease));
            }
            Ok(true)
        }
        (g, w) => Err(format!(
            "{ctx}: greedy {:?} vs exhaustive {:?}",
            g.map(|s| (s.feature, s.threshold)),
            w.map(|s| (s.feature, s.threshold))
        )),
    }
}
