use serde::{Deserialize, Serialize};

use super::{GradientSet, StbpError};
use crate::snn::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for every learnable weight tensor. Biases are frozen and
/// carry no state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &NetworkSpec, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = net
            .layers
            .iter()
            .map(|l| {
                if l.is_learnable() {
                    vec![0.0; l.weights.len()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn check(&self, net: &NetworkSpec, grads: &GradientSet) -> Result<(), StbpError> {
        if self.m.len() != net.layers.len() || grads.layers.len() != net.layers.len() {
            return Err(StbpError::ShapeMismatch {
                expected: net.layers.len(),
                got: grads.layers.len(),
            });
        }
        for ((l, g), m) in net.layers.iter().zip(&grads.layers).zip(&self.m) {
            let want = if l.is_learnable() { l.weights.len() } else { 0 };
            if g.weights.len() != want {
                return Err(StbpError::ShapeMismatch {
                    expected: want,
                    got: g.weights.len(),
                });
            }
            if m.len() != want {
                return Err(StbpError::ShapeMismatch {
                    expected: want,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update of the weights. Biases are left untouched.
pub fn adam_step(
    net: &mut NetworkSpec,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), StbpError> {
    state.check(net, grads)?;
    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let c1 = 1.0 - beta1.powf(state.step as f64);
    let c2 = 1.0 - beta2.powf(state.step as f64);
    for (n, layer) in net.layers.iter_mut().enumerate() {
        if !layer.is_learnable() {
            continue;
        }
        let (m, v) = (&mut state.m[n], &mut state.v[n]);
        for (i, w) in layer.weights.iter_mut().enumerate() {
            let g = grads.layers[n].weights[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            *w -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::{LifParams, NetworkBuilder, Shape};

    fn net() -> NetworkSpec {
        let mut n = NetworkBuilder::new(Shape::flat(2))
            .dense(2)
            .build_zeroed(LifParams::default());
        n.layers[0].weights = vec![0.1, -0.2, 0.3, 0.4];
        n
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut n = net();
        let before = n.clone();
        let mut st = AdamState::new(&n, AdamConfig::default());
        let g = GradientSet::zeros(&n);
        adam_step(&mut n, &g, &mut st, 1e-3).unwrap();
        assert_eq!(n, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let mut n = net();
        let mut st = AdamState::new(&n, AdamConfig::default());
        let mut g = GradientSet::zeros(&n);
        g.layers[0].weights = vec![0.5, -2.0, 1e-3, 7.0];
        for _ in 0..1000 {
            let before = n.layers[0].weights.clone();
            adam_step(&mut n, &g, &mut st, 1e-3).unwrap();
            if st.step == 1000 {
                for (a, b) in before.iter().zip(&n.layers[0].weights) {
                    assert!(((a - b).abs() - 1e-3).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn bias_is_frozen() {
        let mut n = net();
        let mut st = AdamState::new(&n, AdamConfig::default());
        let mut g = GradientSet::zeros(&n);
        g.layers[0].bias = vec![3.0, -3.0];
        adam_step(&mut n, &g, &mut st, 1e-2).unwrap();
        assert_eq!(n.layers[0].bias, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let mut n = net();
        let before = n.clone();
        let mut st = AdamState::new(&n, AdamConfig::default());
        let mut g = GradientSet::zeros(&n);
        g.layers[0].weights = vec![1.0; 4];
        adam_step(&mut n, &g, &mut st, 0.0).unwrap();
        assert_eq!(n, before);
    }

    #[test]
    fn shape_mismatch() {
        let mut n = net();
        let mut st = AdamState::new(&n, AdamConfig::default());
        let mut g = GradientSet::zeros(&n);
        g.layers[0].weights.pop();
        assert!(matches!(
            adam_step(&mut n, &g, &mut st, 1e-3),
            Err(StbpError::ShapeMismatch { .. })
        ));
    }
}
