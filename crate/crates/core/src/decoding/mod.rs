//! Greedy and beam-search generation.
//!
//! A hypothesis is scored by its summed token log-probability divided by the
//! number of decoder steps it took (EOS counts as a step). PAD and BOS are
//! never emitted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::ingest::{EncodedTable, BOS, EOS, PAD};
use crate::model::{Model, ModelError, Session};

pub const DEFAULT_BEAM_WIDTH: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Greedy,
    Beam,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub beam_width: usize,
    /// Upper bound on emitted tokens, EOS excluded.
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { strategy: Strategy::Beam, beam_width: DEFAULT_BEAM_WIDTH, max_len: DEFAULT_MAX_LEN }
    }
}

impl DecodeConfig {
    pub fn greedy(max_len: usize) -> Self {
        DecodeConfig { strategy: Strategy::Greedy, beam_width: 1, max_len }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.beam_width == 0 || self.max_len == 0 {
            return Err(ModelError::Config("beam width and max length must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids, EOS excluded.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    /// Whether generation ended with EOS rather than at the length bound.
    pub finished: bool,
}

impl Hypothesis {
    pub fn steps(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    /// Length-normalised log-probability.
    pub fn score(&self) -> f64 {
        self.log_prob / self.steps().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamResult {
    pub best: Hypothesis,
    /// Every completed hypothesis, best first.
    pub beam: Vec<Hypothesis>,
}

fn emittable(id: usize) -> bool {
    id != PAD && id != BOS
}

/// Always picks the most probable next token, lowest id on ties.
pub fn greedy_decode(model: &Model, table: &EncodedTable, max_len: usize) -> Result<Hypothesis, ModelError> {
    let mut s = model.session(table, None)?;
    let mut state = s.initial_state();
    let mut prev = BOS;
    let mut hyp = Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false };
    while hyp.tokens.len() < max_len {
        let step = s.step(state, prev)?;
        let lp = s.log_probs(&step);
        let mut best = None::<(usize, f64)>;
        for (id, &l) in lp.iter().enumerate().filter(|(id, _)| emittable(*id)) {
            if best.is_none_or(|(_, b)| l > b) {
                best = Some((id, l));
            }
        }
        let (id, l) = best.ok_or_else(|| ModelError::Contract("vocabulary has no emittable token".into()))?;
        hyp.log_prob += l;
        if id == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(id);
        state = step.state;
        prev = id;
    }
    Ok(hyp)
}

struct Live {
    hyp: Hypothesis,
    state: Var,
}

/// `(cumulative log-prob, step log-prob, parent, token, state)`
type Candidate = (f64, f64, usize, usize, Var);

fn expand(s: &mut Session<'_>, live: &[Live]) -> Result<Vec<Candidate>, ModelError> {
    let mut cands = Vec::new();
    for (pi, l) in live.iter().enumerate() {
        let prev = l.hyp.tokens.last().copied().unwrap_or(BOS);
        let step = s.step(l.state, prev)?;
        for (id, lp) in s.log_probs(&step).into_iter().enumerate().filter(|(id, _)| emittable(*id)) {
            cands.push((l.hyp.log_prob + lp, lp, pi, id, step.state));
        }
    }
    // ties: earlier parent, then the more probable step, then the lower id
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(b.1.total_cmp(&a.1)).then(a.3.cmp(&b.3)));
    Ok(cands)
}

/// Beam search of the given width. Each step keeps the `width` best
/// extensions by cumulative log-probability; extensions ending in EOS, and
/// hypotheses that reach `max_len`, leave the beam as completed. The
/// completed hypothesis with the best length-normalised score wins.
pub fn beam_decode(
    model: &Model,
    table: &EncodedTable,
    width: usize,
    max_len: usize,
) -> Result<BeamResult, ModelError> {
    DecodeConfig { strategy: Strategy::Beam, beam_width: width, max_len }.validate()?;
    let mut s = model.session(table, None)?;
    let mut live =
        vec![Live { hyp: Hypothesis { tokens: Vec::new(), log_prob: 0.0, finished: false }, state: s.initial_state() }];
    let mut done: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() {
        let cands = expand(&mut s, &live)?;
        let mut next = Vec::with_capacity(width);
        for (lp, _, pi, id, state) in cands.into_iter().take(width) {
            let mut tokens = live[pi].hyp.tokens.clone();
            if id == EOS {
                done.push(Hypothesis { tokens, log_prob: lp, finished: true });
                continue;
            }
            tokens.push(id);
            let hyp = Hypothesis { tokens, log_prob: lp, finished: false };
            if hyp.tokens.len() >= max_len {
                done.push(hyp);
            } else {
                next.push(Live { hyp, state });
            }
        }
        live = next;
    }
    // stable: among equal scores the earlier-completed hypothesis wins
    done.sort_by(|a, b| b.score().total_cmp(&a.score()));
    let best = done[0].clone();
    Ok(BeamResult { best, beam: done })
}

/// Decodes one table according to `config`.
pub fn decode(model: &Model, table: &EncodedTable, config: &DecodeConfig) -> Result<Hypothesis, ModelError> {
    config.validate()?;
    match config.strategy {
        Strategy::Greedy => greedy_decode(model, table, config.max_len),
        Strategy::Beam => Ok(beam_decode(model, table, config.beam_width, config.max_len)?.best),
    }
}

/// Decodes many tables in parallel; output order follows input order.
pub fn decode_all(
    model: &Model,
    tables: &[EncodedTable],
    config: &DecodeConfig,
) -> Result<Vec<Hypothesis>, ModelError> {
    tables.par_iter().map(|t| decode(model, t, config)).collect()
}

#[cfg(test)]
mod tests;
