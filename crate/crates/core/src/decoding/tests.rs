use super::*;
use crate::ingest::NUM_SENTINELS;
use crate::model::{ModelConfig, Variant};
use crate::testutil::{random_params, random_table, tiny_config};

fn model(seed: u64, vocab: usize, scale: f64) -> (Model, EncodedTable) {
    let c = tiny_config(Variant::Mham, vec![2, 3], 2, vocab);
    let m = Model::new(c.clone(), random_params(&c, seed, scale)).unwrap();
    (m, random_table(&c, 3, seed + 100))
}

fn rigged(eos_bias: f64) -> (Model, EncodedTable) {
    let c = tiny_config(Variant::Nhm, vec![2], 1, 8);
    let mut p = random_params(&c, 3, 0.5);
    p.get_mut("out.b").unwrap().data_mut()[EOS] = eos_bias;
    let table = random_table(&c, 2, 0);
    (Model::new(c, p).unwrap(), table)
}

/// Scores every completion of `prefix` reachable within `max_len` tokens by
/// stepping the model directly, and returns the best one.
fn exhaustive(model: &Model, table: &EncodedTable, max_len: usize) -> Hypothesis {
    fn walk(
        model: &Model,
        table: &EncodedTable,
        prefix: &mut Vec<usize>,
        lp: f64,
        max_len: usize,
        out: &mut Vec<Hypothesis>,
    ) {
        if prefix.len() == max_len {
            out.push(Hypothesis { tokens: prefix.clone(), log_prob: lp, finished: false });
            return;
        }
        let mut s = model.session(table, None).unwrap();
        let mut state = s.initial_state();
        let mut prev = BOS;
        for &t in prefix.iter() {
            state = s.step(state, prev).unwrap().state;
            prev = t;
        }
        let step = s.step(state, prev).unwrap();
        let probs = s.log_probs(&step);
        for id in (0..probs.len()).filter(|&i| i != PAD && i != BOS) {
            if id == EOS {
                out.push(Hypothesis { tokens: prefix.clone(), log_prob: lp + probs[id], finished: true });
            } else {
                prefix.push(id);
                walk(model, table, prefix, lp + probs[id], max_len, out);
                prefix.pop();
            }
        }
    }
    let mut all = Vec::new();
    walk(model, table, &mut Vec::new(), 0.0, max_len, &mut all);
    all.into_iter().max_by(|a, b| a.score().total_cmp(&b.score())).unwrap()
}

#[test]
fn eos_first_gives_empty_summary() {
    let (m, t) = rigged(1e3);
    let h = greedy_decode(&m, &t, 10).unwrap();
    assert!(h.tokens.is_empty());
    assert!(h.finished);
    assert_eq!(beam_decode(&m, &t, 3, 10).unwrap().best.tokens, Vec::<usize>::new());
}

#[test]
fn length_bound_truncates() {
    let (m, t) = rigged(-1e3);
    let h = greedy_decode(&m, &t, 3).unwrap();
    assert_eq!(h.tokens.len(), 3);
    assert!(!h.finished);
    assert!(beam_decode(&m, &t, 4, 3).unwrap().beam.iter().all(|h| h.tokens.len() == 3));
}

#[test]
fn beam_of_one_is_greedy() {
    for seed in 0..50 {
        let (m, t) = model(seed, 9, 1.5);
        let g = greedy_decode(&m, &t, 12).unwrap();
        let b = beam_decode(&m, &t, 1, 12).unwrap();
        assert_eq!(b.best, g, "seed {seed}");
        assert_eq!(decode(&m, &t, &DecodeConfig::greedy(12)).unwrap(), g);
    }
}

#[test]
fn full_width_matches_exhaustive_search() {
    for seed in 0..10 {
        let (m, t) = model(seed, 6, 2.0);
        let best = beam_decode(&m, &t, 6, 2).unwrap().best;
        let oracle = exhaustive(&m, &t, 2);
        assert_eq!(best.tokens, oracle.tokens, "seed {seed}");
        assert!((best.score() - oracle.score()).abs() < 1e-12);
    }
}

#[test]
fn unbounded_width_matches_exhaustive_search() {
    for (v, len) in [(5, 3), (6, 3), (6, 2)] {
        for seed in 0..4 {
            let (m, t) = model(seed + 40, v, 2.0);
            let width = v.pow(len as u32);
            let best = beam_decode(&m, &t, width, len).unwrap().best;
            let oracle = exhaustive(&m, &t, len);
            assert_eq!(best.tokens, oracle.tokens);
            assert!((best.score() - oracle.score()).abs() < 1e-12);
        }
    }
}

#[test]
fn wider_beams_on_random_models() {
    // Not a theorem for pruned beam search; checked on seeded models.
    let mut violations = 0;
    for seed in 0..40 {
        let (m, t) = model(seed + 500, 10, 1.5);
        let s: Vec<f64> = [1, 2, 5].iter().map(|&w| beam_decode(&m, &t, w, 6).unwrap().best.score()).collect();
        if s[1] < s[0] - 1e-12 || s[2] < s[1] - 1e-12 {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn emitted_ids_are_valid() {
    for seed in 0..20 {
        let (m, t) = model(seed + 900, 7, 2.0);
        for h in beam_decode(&m, &t, 4, 8).unwrap().beam {
            assert!(h.tokens.iter().all(|&id| id < 7 && id != PAD && id != BOS && id != EOS));
        }
    }
}

#[test]
fn parallel_decoding_keeps_order() {
    let c: ModelConfig = tiny_config(Variant::Nhm, vec![2, 2], 3, NUM_SENTINELS + 6);
    let m = Model::new(c.clone(), random_params(&c, 7, 1.2)).unwrap();
    let tables: Vec<_> = (0..12).map(|i| random_table(&c, 2 + i % 3, i as u64)).collect();
    let cfg = DecodeConfig { strategy: Strategy::Beam, beam_width: 3, max_len: 10 };
    let all = decode_all(&m, &tables, &cfg).unwrap();
    for (t, h) in tables.iter().zip(&all) {
        assert_eq!(&decode(&m, t, &cfg).unwrap(), h);
    }
    assert!(DecodeConfig { beam_width: 0, ..cfg }.validate().is_err());
}
