use alloc::vec::Vec;

use super::layers::{Layer, LayerKind, LayerSpec, Param};
use super::{Matrix, Mode, NeuralError};
use crate::rng::SeededRng;

/// A feed-forward stack of layers. Parameters are initialized from `seed`,
/// and dropout masks come from a generator derived from the same seed.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub mode: Mode,
    pub seed: u64,
    rng: SeededRng,
}

impl MlpModel {
    pub fn new(specs: &[LayerSpec], seed: u64) -> Result<Self, NeuralError> {
        if specs.is_empty() {
            return Err(NeuralError::InvalidSpec("model has no layers"));
        }
        for (i, w) in specs.windows(2).enumerate() {
            if w[1].in_dim != w[0].out_dim {
                return Err(NeuralError::BrokenChain { index: i + 1, expected: w[1].in_dim, got: w[0].out_dim });
            }
        }
        let mut init_rng = SeededRng::derived(seed, 1);
        let layers = specs.iter().map(|&s| Layer::init(s, &mut init_rng)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { layers, mode: Mode::Train, seed, rng: SeededRng::derived(seed, 2) })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.out_dim
    }

    pub fn train(&mut self) {
        self.mode = Mode::Train;
    }

    pub fn eval(&mut self) {
        self.mode = Mode::Eval;
    }

    /// Reseeds the dropout generator.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.rng = SeededRng::derived(seed, 2);
    }

    /// Forward pass in the current mode, caching activations for backward.
    pub fn forward(&mut self, x: &Matrix) -> Result<Matrix, NeuralError> {
        self.run(x, true)
    }

    /// Eval-mode forward pass that leaves caches and running stats alone.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix, NeuralError> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    fn run(&mut self, x: &Matrix, keep_cache: bool) -> Result<Matrix, NeuralError> {
        let mode = self.mode;
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode, &mut self.rng, keep_cache)?;
        }
        Ok(h)
    }

    /// Backpropagates `grad` (d loss / d output), accumulating parameter
    /// gradients. Returns d loss / d input.
    pub fn backward(&mut self, grad: &Matrix) -> Result<Matrix, NeuralError> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| l.params.iter()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.spec.kind == LayerKind::BatchNorm)
    }

    /// Parameters then batch-norm running stats, in layer order.
    pub fn state_vector(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            for p in &l.params {
                out.extend_from_slice(&p.value);
            }
            out.extend_from_slice(&l.running_mean);
            out.extend_from_slice(&l.running_var);
        }
        out
    }

    pub fn state_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.params.iter().map(|p| p.value.len()).sum::<usize>() + l.running_mean.len() + l.running_var.len())
            .sum()
    }

    pub fn load_state_vector(&mut self, state: &[f64]) -> Result<(), NeuralError> {
        let expected = self.state_len();
        if state.len() != expected {
            return Err(NeuralError::StateLength { expected, got: state.len() });
        }
        let mut off = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&state[off..off + dst.len()]);
            off += dst.len();
        };
        for l in &mut self.layers {
            for p in &mut l.params {
                take(&mut p.value);
            }
            take(&mut l.running_mean);
            take(&mut l.running_var);
            l.clear_cache();
        }
        Ok(())
    }
}
