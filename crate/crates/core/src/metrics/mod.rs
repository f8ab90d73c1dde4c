//! Corpus BLEU, number-tolerant BLEU and Rouge-L.
//!
//! Every metric takes `(hypothesis, reference)` token pairs with one reference
//! per instance and reports scores on a 0–100 scale.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub const MAX_N: usize = 4;
pub const ROUGE_BETA: f64 = 1.2;
pub const DEFAULT_NUMBER_TOLERANCE: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("metrics need at least one hypothesis/reference pair")]
    NoPairs,
    #[error("tolerance must be a non-negative number, got {0}")]
    BadTolerance(f64),
}

/// A hypothesis and its single reference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPair {
    pub hyp: Vec<String>,
    pub reference: Vec<String>,
}

impl EvalPair {
    pub fn new<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Self {
        let own = |xs: &[S]| xs.iter().map(|s| s.as_ref().to_string()).collect();
        EvalPair { hyp: own(hyp), reference: own(reference) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuOptions {
    /// Add one to matched and total counts for n ≥ 2.
    pub smooth: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BleuReport {
    /// Modified precision for n = 1..4, as fractions.
    pub precisions: [f64; MAX_N],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// 0–100.
    pub score: f64,
}

#[derive(Clone, Copy, Default)]
struct Counts {
    matched: [u64; MAX_N],
    total: [u64; MAX_N],
    hyp_len: u64,
    ref_len: u64,
}

impl Counts {
    fn merge(mut self, o: Counts) -> Counts {
        for n in 0..MAX_N {
            self.matched[n] += o.matched[n];
            self.total[n] += o.total[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
        self
    }
}

fn ngram_counts<S: AsRef<str>>(toks: &[S], n: usize) -> HashMap<Vec<&str>, u64> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    m
}

fn pair_counts<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Counts {
    let mut c = Counts { hyp_len: hyp.len() as u64, ref_len: reference.len() as u64, ..Counts::default() };
    for n in 1..=MAX_N {
        let h = ngram_counts(hyp, n);
        let r = ngram_counts(reference, n);
        c.total[n - 1] = h.values().sum();
        c.matched[n - 1] = h.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    }
    c
}

fn report(c: Counts, opts: BleuOptions) -> BleuReport {
    let mut precisions = [0.0; MAX_N];
    for n in 0..MAX_N {
        let add = if opts.smooth && n > 0 { 1 } else { 0 };
        let (m, t) = (c.matched[n] + add, c.total[n] + add);
        precisions[n] = if t == 0 { 0.0 } else { m as f64 / t as f64 };
    }
    let (hyp_len, ref_len) = (c.hyp_len as usize, c.ref_len as usize);
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.contains(&0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_N as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    BleuReport { precisions, brevity_penalty, hyp_len, ref_len, score }
}

fn corpus_bleu<S: AsRef<str> + Sync>(pairs: &[(&[S], &[S])], opts: BleuOptions) -> Result<BleuReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoPairs);
    }
    let counts = pairs.par_iter().map(|(h, r)| pair_counts(h, r)).reduce(Counts::default, Counts::merge);
    Ok(report(counts, opts))
}

/// Corpus-level BLEU-4 with n-gram counts pooled over all pairs.
pub fn sbleu(pairs: &[EvalPair], opts: BleuOptions) -> Result<BleuReport, MetricsError> {
    let refs: Vec<(&[String], &[String])> = pairs.iter().map(|p| (&p.hyp[..], &p.reference[..])).collect();
    corpus_bleu(&refs, opts)
}

/// A token is numeric when it is an optionally signed integer or decimal.
pub fn parse_number(tok: &str) -> Option<f64> {
    let body = tok.strip_prefix(['-', '+']).unwrap_or(tok);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let ok = digits(int) && frac.is_none_or(|f| digits(f) && !f.is_empty()) && !int.is_empty();
    if ok {
        tok.parse().ok()
    } else {
        None
    }
}

/// Rewrites numeric hypothesis tokens to reference numbers within `tol`.
///
/// Hypothesis numbers that already appear verbatim in the reference are kept
/// and use up one such reference occurrence. The rest are aligned one-to-one
/// to unused reference numbers, nearest first; ties go to the earlier
/// reference position, then the earlier hypothesis position.
pub fn align_numbers(hyp: &[String], reference: &[String], tol: f64) -> Vec<String> {
    let mut ref_used = vec![false; reference.len()];
    let mut pending = Vec::new();
    for (i, h) in hyp.iter().enumerate() {
        let Some(hv) = parse_number(h) else { continue };
        let exact = reference.iter().enumerate().position(|(k, r)| !ref_used[k] && r == h);
        match exact {
            Some(k) => ref_used[k] = true,
            None if reference.contains(h) => {}
            None => pending.push((i, hv)),
        }
    }
    let mut cands = Vec::new();
    for &(i, hv) in &pending {
        for (k, r) in reference.iter().enumerate() {
            if ref_used[k] {
                continue;
            }
            if let Some(rv) = parse_number(r) {
                let d = (hv - rv).abs();
                if d <= tol {
                    cands.push((d, k, i));
                }
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = hyp.to_vec();
    let mut hyp_done = vec![false; hyp.len()];
    for (_, k, i) in cands {
        if !ref_used[k] && !hyp_done[i] {
            ref_used[k] = true;
            hyp_done[i] = true;
            out[i] = reference[k].clone();
        }
    }
    out
}

/// BLEU after replacing hypothesis numbers within `tol` of a reference number
/// by that number.
pub fn cbleu(pairs: &[EvalPair], tol: f64, opts: BleuOptions) -> Result<BleuReport, MetricsError> {
    if !(tol >= 0.0) {
        return Err(MetricsError::BadTolerance(tol));
    }
    let aligned: Vec<Vec<String>> = pairs.iter().map(|p| align_numbers(&p.hyp, &p.reference, tol)).collect();
    let refs: Vec<(&[String], &[String])> =
        aligned.iter().zip(pairs).map(|(h, p)| (&h[..], &p.reference[..])).collect();
    corpus_bleu(&refs, opts)
}

/// Length of the longest common subsequence.
pub fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure of one pair, as a fraction.
pub fn rouge_l_pair<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> f64 {
    let l = lcs_len(hyp, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / hyp.len() as f64;
    let r = l as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean per-pair Rouge-L F, 0–100.
pub fn rouge_l(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::NoPairs);
    }
    let scores: Vec<f64> = pairs.par_iter().map(|p| rouge_l_pair(&p.hyp, &p.reference)).collect();
    // summed in order so the result does not depend on thread scheduling
    let total: f64 = scores.iter().sum();
    Ok(100.0 * total / pairs.len() as f64)
}

/// Everything the evaluation report carries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub sbleu: f64,
    pub cbleu: f64,
    pub rouge_l: f64,
    pub precisions: [f64; MAX_N],
    pub bp: f64,
    pub n_pairs: usize,
}

pub fn evaluate(pairs: &[EvalPair], tol: f64, opts: BleuOptions) -> Result<EvalReport, MetricsError> {
    let s = sbleu(pairs, opts)?;
    let c = cbleu(pairs, tol, opts)?;
    Ok(EvalReport {
        sbleu: s.score,
        cbleu: c.score,
        rouge_l: rouge_l(pairs)?,
        precisions: s.precisions,
        bp: s.brevity_penalty,
        n_pairs: pairs.len(),
    })
}
