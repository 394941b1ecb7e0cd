//! Adaptive-moment optimizer with bias correction.
//!
//! Frozen output units (trainable flag false) are skipped outright: their
//! parameters and moment accumulators stay bitwise untouched no matter how
//! many steps run.

use super::{Gradients, ModelParams};
use crate::error::{Error, Result};

use super::{DenseLayer, LayerGradient};

#[derive(Debug, Clone)]
struct LayerMoments {
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

impl LayerMoments {
    fn for_layer(layer: &DenseLayer) -> Self {
        LayerMoments {
            m_w: vec![0.0; layer.weights.len()],
            v_w: vec![0.0; layer.weights.len()],
            m_b: vec![0.0; layer.biases.len()],
            v_b: vec![0.0; layer.biases.len()],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Hyper {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

/// Shared update core: skips frozen rows entirely so their parameters and
/// accumulators never change.
fn update_layer(layer: &mut DenseLayer, g: &LayerGradient, mom: &mut LayerMoments, h: Hyper, t: i32) {
    let bias1 = 1.0 - h.beta1.powi(t);
    let bias2 = 1.0 - h.beta2.powi(t);
    let inp = layer.input_size;
    for o in 0..layer.output_size {
        if !layer.trainable[o] {
            continue;
        }
        for k in o * inp..(o + 1) * inp {
            let grad = g.d_weights[k];
            mom.m_w[k] = h.beta1 * mom.m_w[k] + (1.0 - h.beta1) * grad;
            mom.v_w[k] = h.beta2 * mom.v_w[k] + (1.0 - h.beta2) * grad * grad;
            let m_hat = mom.m_w[k] / bias1;
            let v_hat = mom.v_w[k] / bias2;
            layer.weights[k] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
        }
        let grad = g.d_biases[o];
        mom.m_b[o] = h.beta1 * mom.m_b[o] + (1.0 - h.beta1) * grad;
        mom.v_b[o] = h.beta2 * mom.v_b[o] + (1.0 - h.beta2) * grad * grad;
        let m_hat = mom.m_b[o] / bias1;
        let v_hat = mom.v_b[o] / bias2;
        layer.biases[o] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
    }
}

/// Optimizer state for one model: first/second moment accumulators that
/// mirror the parameter shapes, plus the step counter and hyperparameters.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moments: Vec<LayerMoments>,
}

impl OptimizerState {
    pub fn new(model: &ModelParams, learning_rate: f64) -> Self {
        OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: model.layers.iter().map(LayerMoments::for_layer).collect(),
        }
    }

    fn hyper(&self) -> Hyper {
        Hyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Optimizer state for one standalone layer (the serial compression blocks
/// are trained this way).
#[derive(Debug, Clone)]
pub struct LayerOptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    moments: LayerMoments,
}

impl LayerOptimizerState {
    pub fn new(layer: &DenseLayer, learning_rate: f64) -> Self {
        LayerOptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: LayerMoments::for_layer(layer),
        }
    }
}

/// One optimizer step on a standalone layer.
pub fn optimizer_step_layer(
    layer: &mut DenseLayer,
    grads: &LayerGradient,
    state: &mut LayerOptimizerState,
) -> Result<()> {
    if grads.d_weights.len() != layer.weights.len() || grads.d_biases.len() != layer.biases.len() {
        return Err(Error::argument("gradient shape does not match layer"));
    }
    state.step += 1;
    let h = Hyper {
        learning_rate: state.learning_rate,
        beta1: state.beta1,
        beta2: state.beta2,
        epsilon: state.epsilon,
    };
    update_layer(layer, grads, &mut state.moments, h, state.step as i32);
    Ok(())
}

/// One optimizer step. Deterministic given (params, grads, state).
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    if grads.layers.len() != params.layers.len() || state.moments.len() != params.layers.len() {
        return Err(Error::argument("gradient/state shape does not match model"));
    }
    for ((layer, g), mom) in params
        .layers
        .iter()
        .zip(&grads.layers)
        .zip(&state.moments)
    {
        if g.d_weights.len() != layer.weights.len()
            || g.d_biases.len() != layer.biases.len()
            || mom.m_w.len() != layer.weights.len()
        {
            return Err(Error::argument("gradient/state shape does not match model"));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let h = state.hyper();
    for ((layer, g), mom) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.moments.iter_mut())
    {
        update_layer(layer, g, mom, h, t);
    }
    Ok(())
}
