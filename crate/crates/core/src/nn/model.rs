use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{MlpConfig, OptimizerKind, EMBEDDING_CATEGORIES};
use super::optim::{adam_step, sgd_step, AdamState};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};
use crate::OUTPUTS;

/// Affine layer `x W + b` with `W` stored `fan_in x fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

/// Per-column standardisation fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
        let std = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(c, m)| {
                let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                if var.sqrt() > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    config: MlpConfig,
    layers: Vec<Dense>,
    embedding: Option<Array2<f64>>,
    normalization: Option<Normalization>,
    adam: Vec<AdamState>,
    /// Bumped on every parameter mutation; caches from older versions are stale.
    version: u64,
}

/// Activations kept from [`MlpModel::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    batch: usize,
    digit_indices: Option<Vec<usize>>,
    /// Input to each dense layer; entry `l > 0` is the ReLU output of layer `l - 1`.
    layer_inputs: Vec<Array2<f64>>,
}

/// Gradients mirroring the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
    pub embedding: Option<Array2<f64>>,
}

impl Gradients {
    /// Flat views in the same order as [`MlpModel::parameter_tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(e) = &self.embedding {
            out.push(e.as_slice().expect("standard layout"));
        }
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }
}

/// Looks up each digit's row of `table` and concatenates them position-major.
pub fn embed(digits: &[usize], table: &Array2<f64>) -> Result<Array1<f64>> {
    let dim = table.ncols();
    let mut out = Array1::zeros(digits.len() * dim);
    for (p, &d) in digits.iter().enumerate() {
        if d >= table.nrows() {
            return Err(Error::InvalidInput(format!(
                "digit {d} outside embedding vocabulary of {}",
                table.nrows()
            )));
        }
        out.slice_mut(s![p * dim..(p + 1) * dim]).assign(&table.row(d));
    }
    Ok(out)
}

/// Mean squared error over every entry and its gradient
/// `2 (pred - target) / (rows * cols)`.
pub fn mse_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(
            "mse loss",
            format!("{:?}", target.dim()),
            format!("{:?}", pred.dim()),
        ));
    }
    let count = pred.len().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;
    Ok((loss, diff * (2.0 / count)))
}

impl MlpModel {
    /// He-normal weights, zero biases, embedding entries N(0, 0.01).
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_from_seed(derive_seed(config.seed, &[0]));
        let widths = config.widths();
        let layers = widths
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("valid std");
                Dense {
                    weight: Array2::from_shape_simple_fn((w[0], w[1]), || normal.sample(&mut rng)),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        let embedding = config.use_embedding.then(|| {
            let normal = Normal::new(0.0, 0.01).expect("valid std");
            Array2::from_shape_simple_fn((EMBEDDING_CATEGORIES, config.embedding_dim), || {
                normal.sample(&mut rng)
            })
        });
        let mut model = Self {
            config,
            layers,
            embedding,
            normalization: None,
            adam: Vec::new(),
            version: 0,
        };
        if model.config.optimizer == OptimizerKind::Adam {
            model.adam = model
                .parameter_tensors_mut()
                .iter()
                .map(|t| AdamState::new(t.len()))
                .collect();
            model.version = 0;
        }
        Ok(model)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn embedding(&self) -> Option<&Array2<f64>> {
        self.embedding.as_ref()
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn adam_states(&self) -> &[AdamState] {
        &self.adam
    }

    pub fn set_normalization(&mut self, norm: Option<Normalization>) -> Result<()> {
        if let Some(n) = &norm {
            if n.mean.len() != self.config.digits || n.std.len() != self.config.digits {
                return Err(Error::shape("normalization", self.config.digits, n.mean.len()));
            }
        }
        self.normalization = norm;
        self.version += 1;
        Ok(())
    }

    /// Mutable flat views of every parameter tensor: embedding first (if
    /// any), then weight and bias of each layer. Invalidates caches.
    pub fn parameter_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out = Vec::new();
        if let Some(e) = self.embedding.as_mut() {
            out.push(e.as_slice_mut().expect("standard layout"));
        }
        for l in self.layers.iter_mut() {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    fn digit_indices(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        let mut indices = Vec::with_capacity(x.len());
        for &v in x.iter() {
            if v.fract() != 0.0 || !(0.0..EMBEDDING_CATEGORIES as f64).contains(&v) {
                return Err(Error::InvalidInput(format!("embedding input {v} is not a digit")));
            }
            indices.push(v as usize);
        }
        Ok(indices)
    }

    /// Pre-activation of the first dense layer. On the embedding path the
    /// concatenated lookup is never materialised: each position's block of
    /// the first weight matrix is folded into the table (`10 x width`) and
    /// rows are summed, which equals `embed(row) W + b`.
    fn first_layer(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>, Option<Vec<usize>>)> {
        let d = self.config.digits;
        if x.ncols() != d {
            return Err(Error::shape("network input columns", d, x.ncols()));
        }
        let layer = &self.layers[0];
        if let Some(table) = &self.embedding {
            let indices = self.digit_indices(x)?;
            let dim = table.ncols();
            let mut z = Array2::zeros((x.nrows(), layer.bias.len()));
            for p in 0..d {
                let folded = table.dot(&layer.weight.slice(s![p * dim..(p + 1) * dim, ..]));
                for (b, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
                    row += &folded.row(indices[b * d + p]);
                }
            }
            z += &layer.bias;
            return Ok((z, Array2::zeros((0, 0)), Some(indices)));
        }
        let mut input = x.to_owned();
        if let Some(norm) = &self.normalization {
            for (mut col, (m, s)) in input.axis_iter_mut(Axis(1)).zip(norm.mean.iter().zip(&norm.std)) {
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        let mut z = input.dot(&layer.weight);
        z += &layer.bias;
        Ok((z, input, None))
    }

    fn run_layers(&self, x: ArrayView2<f64>, mut keep: Option<&mut Vec<Array2<f64>>>) -> Result<(Array2<f64>, Option<Vec<usize>>)> {
        let (mut z, input, indices) = self.first_layer(x)?;
        if let Some(store) = keep.as_deref_mut() {
            store.push(input);
        }
        for layer in &self.layers[1..] {
            z.mapv_inplace(|v| v.max(0.0));
            let mut next = z.dot(&layer.weight);
            next += &layer.bias;
            let a = std::mem::replace(&mut z, next);
            if let Some(store) = keep.as_deref_mut() {
                store.push(a);
            }
        }
        Ok((z, indices))
    }

    /// Affine/ReLU stack with an unbounded affine output layer.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let (out, digit_indices) = self.run_layers(x, Some(&mut layer_inputs))?;
        Ok((
            out,
            ForwardCache {
                version: self.version,
                batch: x.nrows(),
                digit_indices,
                layer_inputs,
            },
        ))
    }

    /// Forward pass without keeping activations.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.run_layers(x, None)?.0)
    }

    /// Exact gradients of the loss whose output gradient is `grad_out`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::StaleCache {
                cache: cache.version,
                model: self.version,
            });
        }
        if grad_out.dim() != (cache.batch, OUTPUTS) {
            return Err(Error::shape(
                "output gradient",
                format!("({}, {OUTPUTS})", cache.batch),
                format!("{:?}", grad_out.dim()),
            ));
        }
        let mut g = grad_out.to_owned();
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().skip(1).rev() {
            let input = &cache.layer_inputs[l];
            grads.push(Dense {
                weight: input.t().dot(&g),
                bias: g.sum_axis(Axis(0)),
            });
            let mut dx = g.dot(&layer.weight.t());
            dx.zip_mut_with(input, |d, &a| {
                if a <= 0.0 {
                    *d = 0.0
                }
            });
            g = dx;
        }

        let first = &self.layers[0];
        let bias = g.sum_axis(Axis(0));
        let embedding = match (&self.embedding, &cache.digit_indices) {
            (Some(table), Some(indices)) => {
                // Per position, sum the upstream rows by digit (10 x width);
                // both gradients then follow from small products.
                let d = self.config.digits;
                let dim = table.ncols();
                let mut weight = Array2::zeros(first.weight.dim());
                let mut table_grad = Array2::zeros(table.dim());
                for p in 0..d {
                    let mut by_digit = Array2::zeros((EMBEDDING_CATEGORIES, g.ncols()));
                    for (b, row) in g.axis_iter(Axis(0)).enumerate() {
                        let mut target = by_digit.row_mut(indices[b * d + p]);
                        target += &row;
                    }
                    let block = first.weight.slice(s![p * dim..(p + 1) * dim, ..]);
                    weight
                        .slice_mut(s![p * dim..(p + 1) * dim, ..])
                        .assign(&table.t().dot(&by_digit));
                    table_grad += &by_digit.dot(&block.t());
                }
                grads.push(Dense { weight, bias });
                Some(table_grad)
            }
            _ => {
                grads.push(Dense {
                    weight: cache.layer_inputs[0].t().dot(&g),
                    bias,
                });
                None
            }
        };
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            embedding,
        })
    }

    /// Applies one optimizer step with learning rate `lr`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        let kind = self.config.optimizer;
        let mut adam = std::mem::take(&mut self.adam);
        let result = (|| {
            let grad_tensors = grads.tensors();
            let mut params = self.parameter_tensors_mut();
            if grad_tensors.len() != params.len() {
                return Err(Error::shape("gradient tensors", params.len(), grad_tensors.len()));
            }
            for (i, (p, g)) in params.iter_mut().zip(&grad_tensors).enumerate() {
                match kind {
                    OptimizerKind::Sgd => sgd_step(p, g, lr)?,
                    OptimizerKind::Adam => adam_step(p, g, &mut adam[i], lr)?,
                }
            }
            Ok(())
        })();
        self.adam = adam;
        result
    }
}

/// Serialised parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk form of a trained network. Optimizer moments are not kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub config: MlpConfig,
    pub normalization: Option<Normalization>,
    pub tensors: Vec<TensorRecord>,
}

impl From<&MlpModel> for MlpCheckpoint {
    fn from(model: &MlpModel) -> Self {
        let mut tensors = Vec::new();
        if let Some(e) = &model.embedding {
            tensors.push(TensorRecord {
                name: "embedding".into(),
                shape: e.shape().to_vec(),
                data: e.iter().copied().collect(),
            });
        }
        for (i, l) in model.layers.iter().enumerate() {
            tensors.push(TensorRecord {
                name: format!("layer{i}.weight"),
                shape: l.weight.shape().to_vec(),
                data: l.weight.iter().copied().collect(),
            });
            tensors.push(TensorRecord {
                name: format!("layer{i}.bias"),
                shape: l.bias.shape().to_vec(),
                data: l.bias.to_vec(),
            });
        }
        Self {
            config: model.config.clone(),
            normalization: model.normalization.clone(),
            tensors,
        }
    }
}

impl From<MlpModel> for MlpCheckpoint {
    fn from(model: MlpModel) -> Self {
        (&model).into()
    }
}

impl TryFrom<MlpCheckpoint> for MlpModel {
    type Error = Error;

    fn try_from(ck: MlpCheckpoint) -> Result<Self> {
        let mut model = MlpModel::new(ck.config)?;
        let mut expected: Vec<Vec<usize>> = Vec::new();
        if let Some(e) = &model.embedding {
            expected.push(e.shape().to_vec());
        }
        for l in &model.layers {
            expected.push(l.weight.shape().to_vec());
            expected.push(l.bias.shape().to_vec());
        }
        if ck.tensors.len() != expected.len() {
            return Err(Error::shape("checkpoint tensors", expected.len(), ck.tensors.len()));
        }
        for (rec, shape) in ck.tensors.iter().zip(&expected) {
            if &rec.shape != shape || rec.data.len() != shape.iter().product::<usize>() {
                return Err(Error::shape(
                    "checkpoint tensor",
                    format!("{shape:?}"),
                    format!("{} {:?}", rec.name, rec.shape),
                ));
            }
        }
        for (dst, rec) in model.parameter_tensors_mut().into_iter().zip(&ck.tensors) {
            dst.copy_from_slice(&rec.data);
        }
        model.set_normalization(ck.normalization)?;
        Ok(model)
    }
}

impl Serialize for MlpModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        MlpCheckpoint::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MlpModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let ck = MlpCheckpoint::deserialize(deserializer)?;
        MlpModel::try_from(ck).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small(embedding: bool) -> MlpModel {
        let config = MlpConfig {
            digits: 3,
            hidden_layers: vec![5, 4],
            use_embedding: embedding,
            embedding_dim: 2,
            seed: 9,
            ..MlpConfig::default()
        };
        MlpModel::new(config).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut m = small(false);
        for t in m.parameter_tensors_mut() {
            t.fill(0.0);
        }
        let (out, _) = m.forward(array![[1.0, 5.0, 9.0], [0.0, 0.0, 0.0]].view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert_eq!(out.dim(), (2, OUTPUTS));
    }

    #[test]
    fn identity_affine_layer_copies_input() {
        let config = MlpConfig {
            digits: 3,
            hidden_layers: vec![],
            normalize_inputs: false,
            ..MlpConfig::default()
        };
        let mut m = MlpModel::new(config).unwrap();
        m.layers[0] = Dense::zeros(3, OUTPUTS);
        for i in 0..3 {
            m.layers[0].weight[[i, i]] = 1.0;
        }
        let out = m.predict(array![[4.0, -2.0, 7.0]].view()).unwrap();
        assert_eq!(out.slice(s![0, ..3]).to_vec(), vec![4.0, -2.0, 7.0]);
    }

    #[test]
    fn relu_clips_negatives() {
        // One hidden unit per input, identity weights, then identity readout.
        let config = MlpConfig {
            digits: 3,
            hidden_layers: vec![3],
            ..MlpConfig::default()
        };
        let mut m = MlpModel::new(config).unwrap();
        m.layers[0] = Dense::zeros(3, 3);
        m.layers[1] = Dense::zeros(3, OUTPUTS);
        for i in 0..3 {
            m.layers[0].weight[[i, i]] = 1.0;
            m.layers[1].weight[[i, i]] = 1.0;
        }
        let out = m.predict(array![[-1.0, 0.0, 2.0]].view()).unwrap();
        assert_eq!(out.slice(s![0, ..3]).to_vec(), vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn embedding_lookup() {
        let table = Array2::from_shape_fn((10, 100), |(r, c)| (r * 100 + c) as f64);
        let out = embed(&[1, 7, 5, 3, 2, 2], &table).unwrap();
        assert_eq!(out.len(), 600);
        assert_eq!(out.slice(s![400..500]), out.slice(s![500..600]));
        assert_eq!(out[100], 700.0);
        assert!(embed(&[10], &table).is_err());

        let mut zeroed = table.clone();
        zeroed.row_mut(0).fill(0.0);
        assert!(embed(&[0; 6], &zeroed).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_path_rejects_non_digits() {
        let m = small(true);
        assert!(m.forward(array![[1.0, 2.5, 3.0]].view()).is_err());
        assert!(m.forward(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn mse_loss_values() {
        let p = array![[1.0, 2.0], [3.0, 4.0]];
        let (l, g) = mse_loss(p.view(), p.view()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
        let t = &p - 1.0;
        let (l, g) = mse_loss(p.view(), t.view()).unwrap();
        assert_eq!(l, 1.0);
        assert!(g.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert!(mse_loss(p.view(), array![[1.0]].view()).is_err());
    }

    #[test]
    fn backward_guards() {
        let mut m = small(true);
        let x = array![[1.0, 2.0, 3.0], [4.0, 4.0, 0.0]];
        let (_, cache) = m.forward(x.view()).unwrap();
        let zero = Array2::zeros((2, OUTPUTS));
        let grads = m.backward(&cache, zero.view()).unwrap();
        assert!(grads.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(m.backward(&cache, Array2::zeros((3, OUTPUTS)).view()).is_err());

        let ones = Array2::ones((2, OUTPUTS));
        let grads = m.backward(&cache, ones.view()).unwrap();
        let table = grads.embedding.as_ref().unwrap();
        for untouched in [5usize, 6, 7, 8, 9] {
            assert!(table.row(untouched).iter().all(|&v| v == 0.0));
        }

        m.apply_gradients(&grads, 0.01).unwrap();
        assert!(matches!(
            m.backward(&cache, ones.view()),
            Err(Error::StaleCache { .. })
        ));
    }

    #[test]
    fn adam_state_mirrors_parameters() {
        let mut m = small(true);
        let shapes: Vec<usize> = m.parameter_tensors_mut().iter().map(|t| t.len()).collect();
        let state: Vec<usize> = m.adam_states().iter().map(|s| s.m.len()).collect();
        assert_eq!(shapes, state);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = small(true);
        m.set_normalization(Some(Normalization {
            mean: vec![1.0, 2.0, 3.0],
            std: vec![1.0, 1.0, 2.0],
        }))
        .unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: MlpModel = serde_json::from_str(&text).unwrap();
        let x = array![[1.0, 2.0, 3.0]];
        assert_eq!(back.predict(x.view()).unwrap(), m.predict(x.view()).unwrap());
        assert_eq!(back.layers(), m.layers());
    }
}
