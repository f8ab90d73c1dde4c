use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::EncodedTable;
use crate::model::{ModelConfig, ModelParams, Variant};

pub fn tiny_config(variant: Variant, widths: Vec<usize>, n_types: usize, vocab: usize) -> ModelConfig {
    ModelConfig {
        variant,
        attr_embed_dim: 3,
        type_embed_dim: 3,
        gru_dim: 4,
        static_attn_dim: 3,
        attn_dim: 3,
        dec_embed_dim: 2,
        record_embed_dim: None,
        vocab_size: vocab,
        num_record_types: n_types,
        attr_widths: widths,
    }
}

pub fn random_params(config: &ModelConfig, seed: u64, scale: f64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::zeros(config);
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
    }
    p
}

pub fn random_table(config: &ModelConfig, t: usize, seed: u64) -> EncodedTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attrs = Vec::new();
    let mut types = Vec::new();
    let mut type_ids = Vec::new();
    for _ in 0..t {
        attrs.push(
            config.attr_widths.iter().map(|&w| (0..w).map(|_| f64::from(rng.gen_range(0..2u8))).collect()).collect(),
        );
        let k = rng.gen_range(0..config.num_record_types);
        let mut u = vec![0.0; config.num_record_types];
        u[k] = 1.0;
        types.push(u);
        type_ids.push(k);
    }
    EncodedTable { attrs, types, type_ids }
}
