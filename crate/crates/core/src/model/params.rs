use crate::autodiff::{Tape, Tensor, Var};

use super::{ModelConfig, ModelError, Variant};

/// How a parameter is initialised.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// Encoder embedding: uniform in [-1, 1).
    Embedding,
    Glorot,
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GruIdx {
    pub w_r: usize,
    pub u_r: usize,
    pub b_r: usize,
    pub w_z: usize,
    pub u_z: usize,
    pub b_z: usize,
    pub w_h: usize,
    pub u_h: usize,
    pub b_h: usize,
}

/// Position of every parameter role in the ordered parameter list.
#[derive(Clone, Debug)]
pub(crate) struct Layout {
    pub type_embed: Option<usize>,
    pub attr_embed: Vec<usize>,
    pub nhm_proj: Option<usize>,
    pub record_proj: Option<usize>,
    pub enc_gru: GruIdx,
    pub static_p: usize,
    pub static_q: usize,
    pub attn_ws: usize,
    pub attn_wc: usize,
    pub attn_v: usize,
    pub dec_embed: usize,
    pub dec_gru: GruIdx,
    pub out_w1: usize,
    pub out_w2: usize,
    pub out_b: usize,
}

struct Builder {
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn add(&mut self, name: impl Into<String>, shape: &[usize], init: InitKind) -> usize {
        self.specs.push(ParamSpec { name: name.into(), shape: shape.to_vec(), init });
        self.specs.len() - 1
    }

    fn gru(&mut self, prefix: &str, d_in: usize, d_h: usize) -> GruIdx {
        let mut gate = |g: &str| {
            (
                self.add(format!("{prefix}.w_{g}"), &[d_h, d_in], InitKind::Glorot),
                self.add(format!("{prefix}.u_{g}"), &[d_h, d_h], InitKind::Glorot),
                self.add(format!("{prefix}.b_{g}"), &[d_h], InitKind::Zero),
            )
        };
        let (w_r, u_r, b_r) = gate("r");
        let (w_z, u_z, b_z) = gate("z");
        let (w_h, u_h, b_h) = gate("h");
        GruIdx { w_r, u_r, b_r, w_z, u_z, b_z, w_h, u_h, b_h }
    }
}

pub(crate) fn layout(config: &ModelConfig) -> (Layout, Vec<ParamSpec>) {
    let mut b = Builder { specs: Vec::new() };
    let e = config.attr_embed_dim;
    let rd = config.record_dim();
    let dc = config.context_dim();
    let (g, a, v) = (config.gru_dim, config.attn_dim, config.vocab_size);

    let (type_embed, attr_embed, nhm_proj) = match config.variant {
        Variant::Mham => {
            let t = b.add("type_embed", &[config.type_embed_dim, config.num_record_types], InitKind::Embedding);
            let attrs = config
                .attr_widths
                .iter()
                .enumerate()
                .map(|(j, &w)| b.add(format!("attr_embed.{j}"), &[e, w], InitKind::Embedding))
                .collect();
            (Some(t), attrs, None)
        }
        Variant::Nhm => {
            let width: usize = config.attr_widths.iter().sum::<usize>() + config.num_record_types;
            (None, Vec::new(), Some(b.add("nhm_proj", &[e, width], InitKind::Glorot)))
        }
    };
    let record_proj = config.record_embed_dim.map(|k| b.add("record_proj", &[k, e], InitKind::Glorot));
    let enc_gru = b.gru("enc_gru", rd, g);
    let static_p = b.add("static.P", &[config.static_attn_dim, dc], InitKind::Glorot);
    let static_q = b.add("static.q", &[config.static_attn_dim], InitKind::Glorot);
    let attn_ws = b.add("attn.W_s", &[a, g], InitKind::Glorot);
    let attn_wc = b.add("attn.W_c", &[a, dc], InitKind::Glorot);
    let attn_v = b.add("attn.v", &[a], InitKind::Glorot);
    let dec_embed = b.add("dec_embed", &[v, config.dec_embed_dim], InitKind::Glorot);
    let dec_gru = b.gru("dec_gru", dc + config.dec_embed_dim, g);
    let out_w1 = b.add("out.W_1", &[v, g], InitKind::Glorot);
    let out_w2 = b.add("out.W_2", &[v, dc], InitKind::Glorot);
    let out_b = b.add("out.b", &[v], InitKind::Zero);

    let layout = Layout {
        type_embed,
        attr_embed,
        nhm_proj,
        record_proj,
        enc_gru,
        static_p,
        static_q,
        attn_ws,
        attn_wc,
        attn_v,
        dec_embed,
        dec_gru,
        out_w1,
        out_w2,
        out_b,
    };
    (layout, b.specs)
}

/// Parameter names, shapes and initialisers implied by a configuration, in
/// storage order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    layout(config).1
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn from_named(entries: Vec<(String, Tensor)>) -> Self {
        let (names, tensors) = entries.into_iter().unzip();
        ModelParams { names, tensors }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        ModelParams::from_named(param_specs(config).into_iter().map(|s| (s.name, Tensor::zeros(&s.shape))).collect())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Checks names and shapes against what `config` requires.
    pub fn check(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let specs = param_specs(config);
        if specs.len() != self.len() {
            return Err(ModelError::Params(format!("expected {} tensors, found {}", specs.len(), self.len())));
        }
        for (spec, (name, t)) in specs.iter().zip(self.iter()) {
            if spec.name != name || spec.shape != t.shape() {
                return Err(ModelError::Params(format!(
                    "expected {} {:?}, found {} {:?}",
                    spec.name,
                    spec.shape,
                    name,
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(ModelError::Params(format!("{name} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Binds every tensor as a borrowed leaf; returns the handle of the first.
    pub(crate) fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Bound {
        let base = tape.len();
        for t in &self.tensors {
            tape.bind(t);
        }
        Bound { base }
    }
}

/// Tape handles of a bound parameter set.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Bound {
    pub base: usize,
}

impl Bound {
    pub fn var(&self, idx: usize) -> Var {
        Var(self.base + idx)
    }
}

/// Gradient accumulator aligned with a [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub tensors: Vec<Tensor>,
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        ParamGrads { tensors: params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::squared_norm).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= c);
        }
    }
}
