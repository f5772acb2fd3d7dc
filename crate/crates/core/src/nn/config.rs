use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vocabulary of the digit embedding table.
pub const EMBEDDING_CATEGORIES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Learning-rate schedule over the whole run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine warm-up from `lr / div_factor` to `lr` over the first
    /// `pct_start` of steps, then cosine decay to `lr / (div_factor * final_div_factor)`.
    OneCycle {
        pct_start: f64,
        div_factor: f64,
        final_div_factor: f64,
    },
}

impl LrSchedule {
    pub fn one_cycle() -> Self {
        LrSchedule::OneCycle {
            pct_start: 0.25,
            div_factor: 25.0,
            final_div_factor: 1e5,
        }
    }

    /// Rate for zero-based `step` out of `total` steps.
    pub fn rate(&self, base: f64, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::OneCycle {
                pct_start,
                div_factor,
                final_div_factor,
            } => {
                let cos = |from: f64, to: f64, t: f64| {
                    to + (from - to) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
                };
                let total = total.max(1) as f64;
                let warm = (pct_start * total).max(1.0);
                let step = step as f64;
                let start = base / div_factor;
                if step < warm {
                    cos(start, base, step / warm)
                } else {
                    let rest = (total - warm).max(1.0);
                    cos(base, start / final_div_factor, ((step - warm) / rest).min(1.0))
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Digit positions per input row.
    pub digits: usize,
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub use_embedding: bool,
    pub embedding_dim: usize,
    pub seed: u64,
    /// Standardise raw digit columns with training-set statistics. Ignored
    /// on the embedding path, which consumes raw digit indices.
    pub normalize_inputs: bool,
    pub schedule: LrSchedule,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            digits: 6,
            hidden_layers: vec![96, 96, 96],
            learning_rate: 0.01,
            epochs: 16,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            use_embedding: false,
            embedding_dim: 100,
            seed: 0,
            normalize_inputs: true,
            schedule: LrSchedule::Constant,
        }
    }
}

impl MlpConfig {
    pub fn new(digits: usize, hidden_layers: Vec<usize>, learning_rate: f64) -> Self {
        Self {
            digits,
            hidden_layers,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn input_width(&self) -> usize {
        if self.use_embedding {
            self.digits * self.embedding_dim
        } else {
            self.digits
        }
    }

    /// Layer widths from input to the 10 outputs.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(&self.hidden_layers);
        w.push(crate::OUTPUTS);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.digits == 0 {
            return fail("network digit count must be at least 1".into());
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            return fail(format!("hidden widths must be >= 1: {:?}", self.hidden_layers));
        }
        // Zero is accepted and freezes the parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be >= 1".into());
        }
        if self.use_embedding && self.embedding_dim == 0 {
            return fail("embedding_dim must be >= 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_and_validation() {
        let mut c = MlpConfig::new(6, vec![96, 96, 96], 0.01);
        assert_eq!(c.widths(), vec![6, 96, 96, 96, 10]);
        c.use_embedding = true;
        assert_eq!(c.input_width(), 600);
        assert!(c.validate().is_ok());
        c.hidden_layers = vec![0];
        assert!(c.validate().is_err());
        let c = MlpConfig {
            learning_rate: -1.0,
            ..MlpConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn one_cycle_shape() {
        let s = LrSchedule::one_cycle();
        let total = 1000;
        assert!((s.rate(0.01, 0, total) - 0.01 / 25.0).abs() < 1e-12);
        assert!((s.rate(0.01, 250, total) - 0.01).abs() < 1e-12);
        assert!(s.rate(0.01, 999, total) < 1e-5);
        assert_eq!(LrSchedule::Constant.rate(0.3, 17, total), 0.3);
    }
}
