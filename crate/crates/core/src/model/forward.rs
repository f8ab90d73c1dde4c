use serde::{Deserialize, Serialize};

use super::audit::OpCounter;
use super::params::{layout, Bound, GruIdx, Layout};
use super::{ModelConfig, ModelError, ModelParams, ParamGrads, Variant};
use crate::autodiff::{gru_cell, GruVars, Tape, Tensor, Var};
use crate::ingest::{EncodedTable, BOS, EOS, UNK};

/// Below this total gate mass the gated record weights fall back to the
/// ungated ones.
pub const GATE_FLOOR: f64 = 1e-30;

/// A configuration together with parameters that match it.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    layout: Layout,
}

impl Model {
    pub fn new(config: ModelConfig, params: ModelParams) -> Result<Self, ModelError> {
        config.validate()?;
        params.check(&config)?;
        let (layout, _) = layout(&config);
        Ok(Model { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Direct access for optimisers. Shapes must not change.
    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn into_parts(self) -> (ModelConfig, ModelParams) {
        (self.config, self.params)
    }

    /// Encodes `table` onto a fresh tape, ready for decoder steps.
    pub fn session<'m>(
        &'m self,
        table: &EncodedTable,
        counter: Option<&'m OpCounter>,
    ) -> Result<Session<'m>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let mut s = Session {
            model: self,
            tape,
            bound,
            counter,
            records: Vec::new(),
            context: Var(0),
            context_proj: Var(0),
            gates: Var(0),
            final_state: Var(0),
        };
        s.encode(table)?;
        Ok(s)
    }

    /// Summed cross-entropy of `summary` (ids, without BOS/EOS) under teacher
    /// forcing. EOS is appended as the final target.
    pub fn loss(&self, table: &EncodedTable, summary: &[usize]) -> Result<f64, ModelError> {
        let mut s = self.session(table, None)?;
        let (loss, _) = s.teacher_forced(summary)?;
        Ok(s.tape.value(loss).item())
    }

    /// Like [`Model::loss`], and adds the parameter gradient into `grads`.
    pub fn loss_and_grad(
        &self,
        table: &EncodedTable,
        summary: &[usize],
        grads: &mut ParamGrads,
    ) -> Result<f64, ModelError> {
        let mut s = self.session(table, None)?;
        let (loss, _) = s.teacher_forced(summary)?;
        let g = s.tape.backward(loss)?;
        for (i, acc) in grads.tensors.iter_mut().enumerate() {
            if let Some(t) = g.get(s.bound.var(i)) {
                acc.add_assign(t);
            }
        }
        Ok(s.tape.value(loss).item())
    }

    /// Teacher-forced attention weights for heat maps.
    pub fn attention_dump(&self, table: &EncodedTable, summary: &[usize]) -> Result<AttentionDump, ModelError> {
        let mut s = self.session(table, None)?;
        let (_, steps) = s.teacher_forced(summary)?;
        Ok(s.dump(&steps))
    }
}

/// Tape handles for one record's static attention.
#[derive(Clone, Copy, Debug)]
struct RecordVars {
    /// `[e × M]` matrix of embedded attributes (MHAM only).
    attr_stack: Option<Var>,
    type_embed: Option<Var>,
    alpha: Option<Var>,
}

/// Encoder state for one table plus the tape that holds it.
pub struct Session<'m> {
    model: &'m Model,
    pub tape: Tape<'m>,
    bound: Bound,
    counter: Option<&'m OpCounter>,
    records: Vec<RecordVars>,
    /// `C = [c_1 … c_T]`, shape `[context_dim × T]`.
    context: Var,
    /// `W_c C`, shared by every decoder step.
    context_proj: Var,
    gates: Var,
    final_state: Var,
}

/// Handles produced by one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct Step {
    pub state: Var,
    pub logits: Var,
    pub beta: Var,
    pub w: Var,
    pub gamma: Var,
    pub z: Var,
}

/// Static encoder quantities, as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    /// `c_r` per record.
    pub contexts: Vec<Vec<f64>>,
    pub gates: Vec<f64>,
    /// Attribute weights per record; empty for NHM.
    pub alpha: Vec<Vec<f64>>,
    /// `B^r` per record, after the optional re-projection.
    pub records: Vec<Vec<f64>>,
}

/// Record attention of one decoder step, as plain values.
#[derive(Clone, Debug, PartialEq)]
pub struct StepAttention {
    pub beta: Vec<f64>,
    pub w: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
}

/// Per-instance attention weights in the heat-map JSON layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub alpha: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    /// One row per decoder step, one column per record.
    pub gamma: Vec<Vec<f64>>,
}

/// Static attribute attention over embedded attributes `attrs` for a record
/// whose embedded type is `u`. Returns `(α, B, [Ā_1 … Ā_M])`.
pub fn attribute_attention(
    tape: &mut Tape<'_>,
    attrs: &[Var],
    u: Var,
    counter: Option<&OpCounter>,
) -> Result<(Var, Var, Var), ModelError> {
    if attrs.is_empty() {
        return Err(ModelError::Contract("attribute attention needs at least one attribute".into()));
    }
    let stack = tape.stack_cols(attrs)?;
    let scores = tape.matmul(u, stack)?;
    if let Some(c) = counter.filter(|c| !c.is_fully_dynamic()) {
        c.add_attr_scores(attrs.len());
    }
    let alpha = tape.softmax(scores, 0)?;
    let b = tape.matmul(stack, alpha)?;
    Ok((alpha, b, stack))
}

/// `γ_r = g_r w_r / Σ g w`, or `w` itself when the gated mass underflows.
pub fn gate_record_weights(tape: &mut Tape<'_>, g: Var, w: Var) -> Result<Var, ModelError> {
    let gw = tape.mul(g, w)?;
    let total = tape.sum(gw)?;
    if tape.value(total).item() < GATE_FLOOR {
        Ok(w)
    } else {
        Ok(tape.div_scalar(gw, total)?)
    }
}

fn gru_vars(bound: &Bound, g: &GruIdx) -> GruVars {
    GruVars {
        w_r: bound.var(g.w_r),
        u_r: bound.var(g.u_r),
        b_r: bound.var(g.b_r),
        w_z: bound.var(g.w_z),
        u_z: bound.var(g.u_z),
        b_z: bound.var(g.b_z),
        w_h: bound.var(g.w_h),
        u_h: bound.var(g.u_h),
        b_h: bound.var(g.b_h),
    }
}

fn values(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

fn columns(t: &Tensor) -> Vec<Vec<f64>> {
    let (rows, cols) = (t.shape()[0], t.shape()[1]);
    (0..cols).map(|c| (0..rows).map(|r| t.at(r, c)).collect()).collect()
}

impl<'m> Session<'m> {
    fn var(&self, idx: usize) -> Var {
        self.bound.var(idx)
    }

    fn encode(&mut self, table: &EncodedTable) -> Result<(), ModelError> {
        let cfg = &self.model.config;
        let lay = &self.model.layout;
        if table.num_records() == 0 {
            return Err(ModelError::Contract("table has no records".into()));
        }
        let mut h = self.tape.leaf(Tensor::zeros(&[cfg.gru_dim]));
        let enc_gru = gru_vars(&self.bound, &lay.enc_gru);
        let mut cols = Vec::with_capacity(table.num_records());
        for (r, (attrs, ty)) in table.attrs.iter().zip(&table.types).enumerate() {
            if attrs.len() != cfg.num_attributes() || ty.len() != cfg.num_record_types {
                return Err(ModelError::Config(format!(
                    "record {r} has {} attributes and {} types, model expects {} and {}",
                    attrs.len(),
                    ty.len(),
                    cfg.num_attributes(),
                    cfg.num_record_types
                )));
            }
            let (b, rv) = match cfg.variant {
                Variant::Mham => self.embed_mham(r, attrs, ty)?,
                Variant::Nhm => {
                    (self.embed_nhm(attrs, ty)?, RecordVars { attr_stack: None, type_embed: None, alpha: None })
                }
            };
            let x = match lay.record_proj {
                Some(p) => self.tape.matmul(self.var(p), b)?,
                None => b,
            };
            h = gru_cell(&mut self.tape, x, h, &enc_gru)?;
            cols.push(self.tape.concat(&[h, x])?);
            self.records.push(rv);
        }
        self.final_state = h;
        self.context = self.tape.stack_cols(&cols)?;
        let pc = self.tape.matmul(self.var(lay.static_p), self.context)?;
        let th = self.tape.tanh(pc)?;
        let pre = self.tape.matmul(self.var(lay.static_q), th)?;
        self.gates = self.tape.sigmoid(pre)?;
        self.context_proj = self.tape.matmul(self.var(lay.attn_wc), self.context)?;
        Ok(())
    }

    fn embed_mham(&mut self, r: usize, attrs: &[Vec<f64>], ty: &[f64]) -> Result<(Var, RecordVars), ModelError> {
        let lay = &self.model.layout;
        let mut embedded = Vec::with_capacity(attrs.len());
        for (j, a) in attrs.iter().enumerate() {
            let w = self.var(lay.attr_embed[j]);
            if self.model.config.attr_widths[j] != a.len() {
                return Err(ModelError::Config(format!(
                    "record {r} attribute {j} has width {}, expected {}",
                    a.len(),
                    self.model.config.attr_widths[j]
                )));
            }
            let leaf = self.tape.leaf(Tensor::vector(a.clone()));
            embedded.push(self.tape.matmul(w, leaf)?);
        }
        let u_leaf = self.tape.leaf(Tensor::vector(ty.to_vec()));
        let u = self.tape.matmul(self.var(lay.type_embed.expect("MHAM layout")), u_leaf)?;
        let (alpha, b, stack) = attribute_attention(&mut self.tape, &embedded, u, self.counter)?;
        Ok((b, RecordVars { attr_stack: Some(stack), type_embed: Some(u), alpha: Some(alpha) }))
    }

    /// `B^r = W · [A_1; …; A_M; u]`.
    fn embed_nhm(&mut self, attrs: &[Vec<f64>], ty: &[f64]) -> Result<Var, ModelError> {
        let flat: Vec<f64> = attrs.iter().flatten().chain(ty).copied().collect();
        let leaf = self.tape.leaf(Tensor::vector(flat));
        let proj = self.var(self.model.layout.nhm_proj.expect("NHM layout"));
        Ok(self.tape.matmul(proj, leaf)?)
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    /// Decoder start state: the last encoder state.
    pub fn initial_state(&self) -> Var {
        self.final_state
    }

    /// One decoder step from `state` after emitting `prev`. Ids outside the
    /// vocabulary are read as UNK.
    pub fn step(&mut self, state: Var, prev: usize) -> Result<Step, ModelError> {
        let lay = &self.model.layout;
        let prev = if prev < self.model.config.vocab_size { prev } else { UNK };

        if let Some(c) = self.counter.filter(|c| c.is_fully_dynamic()) {
            // audit only: what re-scoring attributes at every step would cost
            for rv in self.records.clone() {
                if let (Some(stack), Some(u)) = (rv.attr_stack, rv.type_embed) {
                    self.tape.matmul(u, stack)?;
                    c.add_attr_scores(self.tape.value(stack).shape()[1]);
                }
            }
        }

        let ws = self.tape.matmul(self.var(lay.attn_ws), state)?;
        let pre = self.tape.add_col_broadcast(self.context_proj, ws)?;
        let th = self.tape.tanh(pre)?;
        let beta = self.tape.matmul(self.var(lay.attn_v), th)?;
        if let Some(c) = self.counter {
            c.add_record_scores(self.records.len());
        }
        let w = self.tape.softmax(beta, 0)?;
        let gamma = gate_record_weights(&mut self.tape, self.gates, w)?;
        let z = self.tape.matmul(self.context, gamma)?;

        let emb = self.tape.row(self.var(lay.dec_embed), prev)?;
        let x = self.tape.concat(&[z, emb])?;
        let dec_gru = gru_vars(&self.bound, &lay.dec_gru);
        let s = gru_cell(&mut self.tape, x, state, &dec_gru)?;

        let l1 = self.tape.matmul(self.var(lay.out_w1), s)?;
        let l2 = self.tape.matmul(self.var(lay.out_w2), z)?;
        let l = self.tape.add(l1, l2)?;
        let logits = self.tape.add(l, self.var(lay.out_b))?;
        Ok(Step { state: s, logits, beta, w, gamma, z })
    }

    /// Runs the decoder over `BOS, y_1 … y_n` with targets `y_1 … y_n, EOS`.
    /// Returns the summed negative log-likelihood and every step.
    pub fn teacher_forced(&mut self, summary: &[usize]) -> Result<(Var, Vec<Step>), ModelError> {
        let v = self.model.config.vocab_size;
        let clamp = |id: usize| if id < v { id } else { UNK };
        let mut state = self.initial_state();
        let mut prev = BOS;
        let mut steps = Vec::with_capacity(summary.len() + 1);
        let mut loss: Option<Var> = None;
        for &target in summary.iter().chain(std::iter::once(&EOS)) {
            let target = clamp(target);
            let step = self.step(state, prev)?;
            let nll = self.tape.nll_softmax(step.logits, target)?;
            loss = Some(match loss {
                Some(acc) => self.tape.add(acc, nll)?,
                None => nll,
            });
            steps.push(step);
            state = step.state;
            prev = target;
        }
        Ok((loss.expect("at least the EOS step"), steps))
    }

    /// Log-probabilities of the next token.
    pub fn log_probs(&self, step: &Step) -> Vec<f64> {
        let l = self.tape.value(step.logits).data();
        let lse = crate::autodiff::log_sum_exp(l);
        l.iter().map(|x| x - lse).collect()
    }

    pub fn encoder_output(&self) -> EncoderOutput {
        let rd = self.model.config.record_dim();
        let contexts = columns(self.tape.value(self.context));
        let records = contexts.iter().map(|c| c[c.len() - rd..].to_vec()).collect();
        EncoderOutput {
            contexts,
            gates: values(self.tape.value(self.gates)),
            alpha: self.records.iter().filter_map(|r| r.alpha.map(|a| values(self.tape.value(a)))).collect(),
            records,
        }
    }

    pub fn step_attention(&self, step: &Step) -> StepAttention {
        StepAttention {
            beta: values(self.tape.value(step.beta)),
            w: values(self.tape.value(step.w)),
            gamma: values(self.tape.value(step.gamma)),
            z: values(self.tape.value(step.z)),
        }
    }

    pub fn dump(&self, steps: &[Step]) -> AttentionDump {
        let enc = self.encoder_output();
        AttentionDump {
            alpha: enc.alpha,
            g: enc.gates,
            gamma: steps.iter().map(|s| values(self.tape.value(s.gamma))).collect(),
        }
    }
}
