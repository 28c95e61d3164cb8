use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. Moment estimates are keyed by parameter
/// name, so one optimizer can own any subset of a model's parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, state: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every `(name, param, grad)` triple.
    pub fn step<'a>(&mut self, lr: f64, items: impl IntoIterator<Item = (&'a str, &'a mut Tensor, &'a Tensor)>) {
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (name, param, grad) in items {
            assert_eq!(param.shape(), grad.shape(), "gradient shape mismatch for {name}");
            let st = self
                .state
                .entry(name.to_string())
                .or_insert_with(|| Moments { m: vec![0.0; param.len()], v: vec![0.0; param.len()] });
            for i in 0..param.len() {
                let g = grad.data[i];
                st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
                st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
                let mhat = st.m[i] / c1;
                let vhat = st.v[i] / c2;
                param.data[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// One Adam step over whole parameter/gradient maps. Parameters without
/// a gradient are left untouched.
pub fn adam_step(params: &mut BTreeMap<String, Tensor>, grads: &BTreeMap<String, Tensor>, state: &mut Adam, lr: f64) {
    let items = params.iter_mut().filter_map(|(name, p)| grads.get(name).map(|g| (name.as_str(), p, g)));
    state.step(lr, items);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_run(lr: f64, steps: usize) -> f64 {
        let mut params = BTreeMap::from([("w".to_string(), Tensor::scalar(1.0))]);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..steps {
            let w = params["w"].item();
            let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(2.0 * w))]);
            adam_step(&mut params, &grads, &mut adam, lr);
        }
        params["w"].item()
    }

    /// Textbook Adam recurrence on f(w) = w², written out scalar by scalar.
    fn reference_quadratic(lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=steps {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        w
    }

    #[test]
    fn quadratic_converges_like_reference() {
        let w = quadratic_run(0.1, 200);
        assert!(w.abs() < 1e-2, "w = {w}");
        assert_eq!(w, reference_quadratic(0.1, 200));
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = BTreeMap::from([("w".to_string(), Tensor::from_vec(1, 2, vec![0.3, -2.0]))]);
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default());
        let grads = BTreeMap::from([("w".to_string(), Tensor::zeros(1, 2))]);
        for _ in 0..10 {
            adam_step(&mut params, &grads, &mut adam, 0.01);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [3.0, -0.02, 1e3] {
            let mut params = BTreeMap::from([("w".to_string(), Tensor::scalar(0.0))]);
            let mut adam = Adam::new(AdamConfig::default());
            let grads = BTreeMap::from([("w".to_string(), Tensor::scalar(g))]);
            adam_step(&mut params, &grads, &mut adam, 0.05);
            let dw = params["w"].item();
            // m̂ = g and v̂ = g², so Δw = −lr·g/(|g| + eps)
            assert!((dw + 0.05 * g.signum()).abs() < 1e-6, "g={g} dw={dw}");
        }
    }
}
