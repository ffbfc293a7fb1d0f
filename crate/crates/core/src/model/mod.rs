//! The kriging network: a linear input map, `L` blocks of self-loop-free
//! spatio-temporal graph convolution each followed by reference-based feature
//! fusion, and a linear readout; plus the two-pass cycle procedure and the
//! training loss.
//!
//! Features live in `[R, D]` matrices whose rows are ordered
//! `(sample, time step, node)`, i.e. `row = (s·t + τ)·N + n`.

mod checkpoint;
mod forward;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{
    kriging_forward, kriging_forward_traced, loss, loss_with_target, ncr_pass, pairing, predict, rff_forward,
    stgc_forward, GraphOp, KrigingOutput, Layout, Pairing, RffOutput,
};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{KitsError, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature dimension `D`.
    pub dim: usize,
    /// Temporal window radius `m`; each convolution sees `2m + 1` steps.
    pub window: usize,
    /// Number of convolution + fusion blocks.
    pub layers: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { dim: 64, window: 1, layers: 2 }
    }
}

const PER_LAYER: usize = 6;

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: Vec<(String, Tensor)>,
}

fn expected_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.dim;
    let mut out = vec![("input.weight".to_string(), vec![1, d]), ("input.bias".to_string(), vec![d])];
    for l in 0..cfg.layers {
        out.push((format!("stgc{}.gc.weight", l), vec![(2 * cfg.window + 1) * d, d]));
        out.push((format!("stgc{}.gc.bias", l), vec![d]));
        out.push((format!("stgc{}.fc.weight", l), vec![d, d]));
        out.push((format!("stgc{}.fc.bias", l), vec![d]));
        out.push((format!("rff{}.weight", l), vec![2 * d, d]));
        out.push((format!("rff{}.bias", l), vec![d]));
    }
    out.push(("readout.weight".to_string(), vec![d, 1]));
    out.push(("readout.bias".to_string(), vec![1]));
    out
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        if config.dim == 0 || config.layers == 0 {
            return Err(KitsError::Config("model needs dim >= 1 and layers >= 1".into()));
        }
        let tensors = expected_shapes(&config)
            .into_iter()
            .map(|(name, shape)| {
                let t = if shape.len() == 2 {
                    let limit = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                    let data = (0..shape[0] * shape[1]).map(|_| dist.sample(rng)).collect();
                    Tensor::new(shape, data).expect("shape matches")
                } else {
                    Tensor::zeros(&shape)
                };
                (name, t)
            })
            .collect();
        Ok(Self { config, tensors })
    }

    /// Rebuilds parameters from named tensors, inferring the architecture
    /// from their shapes.
    pub fn from_named(tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let find = |name: &str| tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t);
        let dim = match find("input.weight").map(|t| t.shape().to_vec()) {
            Some(s) if s.len() == 2 && s[0] == 1 => s[1],
            _ => return Err(KitsError::Config("parameters lack a [1, D] input.weight".into())),
        };
        let layers = (0..).take_while(|l| find(&format!("stgc{}.gc.weight", l)).is_some()).count();
        let rows = find("stgc0.gc.weight").map_or(0, |t| t.shape()[0]);
        if layers == 0 || dim == 0 || rows % dim != 0 || (rows / dim) % 2 == 0 {
            return Err(KitsError::Config("cannot infer the architecture from the parameter shapes".into()));
        }
        let config = ModelConfig { dim, window: (rows / dim - 1) / 2, layers };
        let expected = expected_shapes(&config);
        if expected.len() != tensors.len() {
            return Err(KitsError::Config(format!(
                "expected {} parameter tensors, found {}",
                expected.len(),
                tensors.len()
            )));
        }
        let mut ordered = Vec::with_capacity(expected.len());
        for (name, shape) in expected {
            match find(&name) {
                Some(t) if t.shape() == shape.as_slice() => ordered.push((name, t.clone())),
                Some(t) => {
                    return Err(KitsError::Config(format!("{} has shape {:?}, expected {:?}", name, t.shape(), shape)))
                }
                None => return Err(KitsError::Config(format!("missing parameter {}", name))),
            }
        }
        Ok(Self { config, tensors: ordered })
    }

    pub fn config(&self) -> ModelConfig {
        self.config
    }

    pub fn named(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.tensors.iter_mut().map(|(_, t)| t)
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|(_, t)| t.is_finite())
    }

    /// Registers every tensor on `tape`, as parameters or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self.tensors.iter().map(|(_, t)| tape.leaf(t.clone(), trainable)).collect();
        Bound { config: self.config, vars }
    }
}

/// Parameter handles on one tape, in [`ModelParams`] order.
#[derive(Clone, Debug)]
pub struct Bound {
    pub config: ModelConfig,
    pub vars: Vec<Var>,
}

/// Handles of one convolution + fusion block.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub gc_weight: Var,
    pub gc_bias: Var,
    pub fc_weight: Var,
    pub fc_bias: Var,
    pub rff_weight: Var,
    pub rff_bias: Var,
}

impl Bound {
    /// Wraps handles created elsewhere, e.g. by a gradient checker.
    pub fn from_vars(config: ModelConfig, vars: Vec<Var>) -> Result<Self> {
        let expected = 4 + PER_LAYER * config.layers;
        if vars.len() != expected {
            return Err(KitsError::Dimension(format!("{} parameter handles, expected {}", vars.len(), expected)));
        }
        Ok(Self { config, vars })
    }

    pub fn input(&self) -> (Var, Var) {
        (self.vars[0], self.vars[1])
    }

    pub fn layer(&self, l: usize) -> LayerVars {
        let v = &self.vars[2 + PER_LAYER * l..2 + PER_LAYER * (l + 1)];
        LayerVars { gc_weight: v[0], gc_bias: v[1], fc_weight: v[2], fc_bias: v[3], rff_weight: v[4], rff_bias: v[5] }
    }

    pub fn readout(&self) -> (Var, Var) {
        let k = self.vars.len();
        (self.vars[k - 2], self.vars[k - 1])
    }
}
