//! A small pre-norm transformer usable as a bidirectional encoder or a
//! causal decoder, with an optional low-rank wrapper on the query and value
//! projections.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::params::{ParamId, ParamStore};
use crate::tape::{Mat, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub causal: bool,
    /// 0 disables the wrapper.
    pub lora_rank: usize,
    pub lora_alpha: f64,
}

#[derive(Debug, Clone)]
struct Lora {
    a: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layer {
    ln1: (ParamId, ParamId),
    q: (ParamId, ParamId),
    k: (ParamId, ParamId),
    v: (ParamId, ParamId),
    o: (ParamId, ParamId),
    ln2: (ParamId, ParamId),
    ff1: (ParamId, ParamId),
    ff2: (ParamId, ParamId),
    lora_q: Option<Lora>,
    lora_v: Option<Lora>,
}

#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: TransformerConfig,
    tok: ParamId,
    pos: ParamId,
    layers: Vec<Layer>,
    ln_f: (ParamId, ParamId),
    mlm_bias: ParamId,
}

/// Parameters of one forward pass placed on a tape.
pub struct Bound {
    vars: Vec<Option<Var>>,
}

impl Bound {
    /// Places every parameter of `store` on the tape; frozen ones become
    /// constants.
    pub fn all(tape: &mut Tape, store: &ParamStore) -> Self {
        let vars = store
            .ids()
            .map(|id| {
                Some(if store.is_trainable(id) {
                    tape.param(store, id)
                } else {
                    tape.constant(store.value(id).clone())
                })
            })
            .collect();
        Bound { vars }
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.0].expect("parameter bound")
    }
}

fn normal(rng: &mut impl Rng, rows: usize, cols: usize, std: f64) -> Mat {
    let d = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| d.sample(rng))
}

impl Transformer {
    pub fn new(config: TransformerConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Self {
        assert!(config.d_model.is_multiple_of(config.heads), "d_model must divide into heads");
        let d = config.d_model;
        let std = 0.02;
        let base_trainable = config.lora_rank == 0;
        let linear = |store: &mut ParamStore, name: String, i: usize, o: usize, rng: &mut _| {
            (
                store.add(format!("{name}.w"), normal(rng, i, o, std), base_trainable),
                store.add(format!("{name}.b"), Mat::zeros((1, o)), base_trainable),
            )
        };
        let norm = |store: &mut ParamStore, name: String| {
            (
                store.add(format!("{name}.g"), Mat::ones((1, d)), base_trainable),
                store.add(format!("{name}.b"), Mat::zeros((1, d)), base_trainable),
            )
        };
        let tok = store.add("tok_emb", normal(rng, config.vocab_size, d, std), base_trainable);
        let pos = store.add("pos_emb", normal(rng, config.max_len, d, std), base_trainable);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("layer{l}");
            let lora = |store: &mut ParamStore, name: &str, rng: &mut _| {
                (config.lora_rank > 0).then(|| Lora {
                    a: store.add(format!("{p}.lora_{name}.a"), normal(rng, d, config.lora_rank, std), true),
                    b: store.add(format!("{p}.lora_{name}.b"), Mat::zeros((config.lora_rank, d)), true),
                })
            };
            layers.push(Layer {
                ln1: norm(store, format!("{p}.ln1")),
                q: linear(store, format!("{p}.q"), d, d, rng),
                k: linear(store, format!("{p}.k"), d, d, rng),
                v: linear(store, format!("{p}.v"), d, d, rng),
                o: linear(store, format!("{p}.o"), d, d, rng),
                ln2: norm(store, format!("{p}.ln2")),
                ff1: linear(store, format!("{p}.ff1"), d, config.ffn, rng),
                ff2: linear(store, format!("{p}.ff2"), config.ffn, d, rng),
                lora_q: lora(store, "q", rng),
                lora_v: lora(store, "v", rng),
            });
        }
        let ln_f = norm(store, "ln_f".into());
        let mlm_bias = store.add("mlm_bias", Mat::zeros((1, config.vocab_size)), base_trainable);
        Transformer {
            config,
            tok,
            pos,
            layers,
            ln_f,
            mlm_bias,
        }
    }

    /// Every parameter id owned by the model.
    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.tok, self.pos];
        for l in &self.layers {
            for (a, b) in [l.ln1, l.q, l.k, l.v, l.o, l.ln2, l.ff1, l.ff2] {
                ids.extend([a, b]);
            }
            for lora in [&l.lora_q, &l.lora_v].into_iter().flatten() {
                ids.extend([lora.a, lora.b]);
            }
        }
        ids.extend([self.ln_f.0, self.ln_f.1, self.mlm_bias]);
        ids
    }

    fn norm(&self, tape: &mut Tape, b: &Bound, x: Var, (g, beta): (ParamId, ParamId)) -> Var {
        let n = tape.layer_norm(x);
        let s = tape.mul_row(n, b.get(g));
        tape.add_row(s, b.get(beta))
    }

    fn linear(&self, tape: &mut Tape, b: &Bound, x: Var, (w, bias): (ParamId, ParamId)) -> Var {
        let y = tape.matmul(x, b.get(w));
        tape.add_row(y, b.get(bias))
    }

    fn wrapped(&self, tape: &mut Tape, b: &Bound, x: Var, base: (ParamId, ParamId), lora: &Option<Lora>) -> Var {
        let y = self.linear(tape, b, x, base);
        match lora {
            None => y,
            Some(l) => {
                let xa = tape.matmul(x, b.get(l.a));
                let xab = tape.matmul(xa, b.get(l.b));
                let scaled = tape.scale(xab, self.config.lora_alpha / self.config.lora_rank as f64);
                tape.add(y, scaled)
            }
        }
    }

    /// Final-layer hidden states, one row per token.
    pub fn forward(&self, tape: &mut Tape, b: &Bound, ids: &[u32]) -> Var {
        let n = ids.len();
        assert!(n > 0 && n <= self.config.max_len, "sequence length {n} outside 1..={}", self.config.max_len);
        let tok_ids: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let te = tape.gather(b.get(self.tok), &tok_ids);
        let positions: Vec<usize> = (0..n).collect();
        let pe = tape.gather(b.get(self.pos), &positions);
        let mut x = tape.add(te, pe);

        let heads = self.config.heads;
        let dh = self.config.d_model / heads;
        let mask = self.config.causal.then(|| {
            tape.constant(Mat::from_shape_fn((n, n), |(i, j)| if j > i { -1e9 } else { 0.0 }))
        });
        for layer in &self.layers {
            let h = self.norm(tape, b, x, layer.ln1);
            let q = self.wrapped(tape, b, h, layer.q, &layer.lora_q);
            let k = self.linear(tape, b, h, layer.k);
            let v = self.wrapped(tape, b, h, layer.v, &layer.lora_v);
            let mut outs = Vec::with_capacity(heads);
            for hd in 0..heads {
                let (s, e) = (hd * dh, (hd + 1) * dh);
                let (qh, kh, vh) = (tape.slice_cols(q, s, e), tape.slice_cols(k, s, e), tape.slice_cols(v, s, e));
                let scores = tape.matmul_t(qh, kh);
                let mut scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
                if let Some(m) = mask {
                    scores = tape.add(scores, m);
                }
                let attn = tape.softmax(scores);
                outs.push(tape.matmul(attn, vh));
            }
            let cat = if heads == 1 { outs[0] } else { tape.concat_cols(&outs) };
            let o = self.linear(tape, b, cat, layer.o);
            x = tape.add(x, o);
            let h2 = self.norm(tape, b, x, layer.ln2);
            let f = self.linear(tape, b, h2, layer.ff1);
            let f = tape.gelu(f);
            let f = self.linear(tape, b, f, layer.ff2);
            x = tape.add(x, f);
        }
        self.norm(tape, b, x, self.ln_f)
    }

    /// Vocabulary logits from hidden rows, with the output projection tied to
    /// the token embedding.
    pub fn lm_logits(&self, tape: &mut Tape, b: &Bound, hidden: Var) -> Var {
        let l = tape.matmul_t(hidden, b.get(self.tok));
        tape.add_row(l, b.get(self.mlm_bias))
    }
}
