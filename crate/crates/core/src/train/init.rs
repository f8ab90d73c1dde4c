use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::model::{param_specs, InitKind, ModelConfig, ModelParams};

/// Glorot-uniform half-width for a tensor of this shape. Vectors are treated
/// as `[n × 1]`.
pub fn glorot_limit(shape: &[usize]) -> f64 {
    let (fan_out, fan_in) = match shape {
        [n] => (*n, 1),
        [r, c] => (*r, *c),
        _ => (shape.iter().product(), 1),
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fresh parameters: encoder embeddings uniform in [-1, 1), biases zero,
/// everything else Glorot-uniform. Identical seeds give identical tensors.
pub fn init_params(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = param_specs(config)
        .into_iter()
        .map(|spec| {
            let n: usize = spec.shape.iter().product();
            let data: Vec<f64> = match spec.init {
                InitKind::Zero => vec![0.0; n],
                InitKind::Embedding => (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                InitKind::Glorot => {
                    let a = glorot_limit(&spec.shape);
                    (0..n).map(|_| rng.gen_range(-a..a)).collect()
                }
            };
            let t = Tensor::new(spec.shape, data).expect("spec shapes are valid");
            (spec.name, t)
        })
        .collect();
    ModelParams::from_named(entries)
}
