//! The adapter, classifier and loss terms as tape operations.

use citss_core::head::{AdapterParams, ClassifierParams, Matrix};
use citss_nn::tape::{Mat, Tape, Var};
use citss_nn::transformer::Bound;
use citss_nn::{ParamId, ParamStore};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal};

#[derive(Debug, Clone)]
pub struct Head {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub w3: ParamId,
    pub b3: ParamId,
    pub d_x: usize,
    pub d: usize,
    pub d_z: usize,
    pub classes: usize,
}

fn init(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let d = Normal::new(0.0, (1.0 / cols as f64).sqrt()).expect("positive std");
    Array2::from_shape_fn((rows, cols), |_| d.sample(rng))
}

impl Head {
    pub fn new(store: &mut ParamStore, d_x: usize, d: usize, d_z: usize, classes: usize, rng: &mut impl Rng) -> Self {
        Head {
            w1: store.add("head.w1", init(rng, d, d_x), true),
            b1: store.add("head.b1", Mat::zeros((1, d)), true),
            w2: store.add("head.w2", init(rng, d_z, d), true),
            b2: store.add("head.b2", Mat::zeros((1, d_z)), true),
            w3: store.add("head.w3", init(rng, classes, d_z), true),
            b3: store.add("head.b3", Mat::zeros((1, classes)), true),
            d_x,
            d,
            d_z,
            classes,
        }
    }

    pub fn param_ids(&self) -> [ParamId; 6] {
        [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
    }

    /// `Z = LN(GeLU(X·W1ᵀ + b1))·W2ᵀ + b2` for an `n×d_x` batch. With a
    /// dropout rate and a random source, a fresh inverted-dropout mask is
    /// applied after the activation.
    pub fn adapter(&self, tape: &mut Tape, b: &Bound, x: Var, dropout: Option<(f64, &mut dyn rand::RngCore)>) -> Var {
        let h = tape.matmul_t(x, b.get(self.w1));
        let h = tape.add_row(h, b.get(self.b1));
        let mut h = tape.gelu(h);
        if let Some((p, rng)) = dropout {
            if p > 0.0 {
                let keep = Bernoulli::new(1.0 - p).expect("rate in [0,1)");
                let (r, c) = tape.shape(h);
                let mask = Array2::from_shape_fn((r, c), |_| if keep.sample(rng) { 1.0 / (1.0 - p) } else { 0.0 });
                h = tape.dropout(h, mask);
            }
        }
        let h = tape.layer_norm(h);
        let z = tape.matmul_t(h, b.get(self.w2));
        tape.add_row(z, b.get(self.b2))
    }

    /// `n×C` logits `Z·W3ᵀ + b3`.
    pub fn logits(&self, tape: &mut Tape, b: &Bound, z: Var) -> Var {
        let l = tape.matmul_t(z, b.get(self.w3));
        tape.add_row(l, b.get(self.b3))
    }

    pub fn adapter_params(&self, store: &ParamStore) -> AdapterParams {
        AdapterParams {
            w1: to_matrix(store.value(self.w1)),
            b1: store.value(self.b1).iter().copied().collect(),
            w2: to_matrix(store.value(self.w2)),
            b2: store.value(self.b2).iter().copied().collect(),
        }
    }

    pub fn classifier_params(&self, store: &ParamStore) -> ClassifierParams {
        ClassifierParams {
            w3: to_matrix(store.value(self.w3)),
            b3: store.value(self.b3).iter().copied().collect(),
        }
    }
}

pub fn to_matrix(m: &Mat) -> Matrix {
    Matrix {
        rows: m.nrows(),
        cols: m.ncols(),
        data: m.iter().copied().collect(),
    }
}

/// Summed cross-entropy over the batch.
pub fn cls_loss(tape: &mut Tape, logits: Var, labels: &[usize]) -> Var {
    let lp = tape.log_softmax(logits);
    let picked = tape.pick(lp, labels);
    let s = tape.sum(picked);
    tape.scale(s, -1.0)
}

/// In-batch InfoNCE with raw dot-product similarity over temperature `tau`.
pub fn infonce(tape: &mut Tape, z: Var, z_pos: Var, tau: f64) -> Var {
    let n = tape.shape(z).0;
    let sim = tape.matmul_t(z, z_pos);
    let sim = tape.scale(sim, 1.0 / tau);
    let lp = tape.log_softmax(sim);
    let diag: Vec<usize> = (0..n).collect();
    let picked = tape.pick(lp, &diag);
    let s = tape.sum(picked);
    tape.scale(s, -1.0 / n as f64)
}

/// `λ1·L_sc + λ2·L_kp + L_cls`. The penalty term is handled by decoupled
/// weight decay in the optimizer and only reported.
pub fn weighted(tape: &mut Tape, l_cls: Var, sc: Option<(Var, f64)>, kp: Option<(Var, f64)>) -> Var {
    let mut total = l_cls;
    for (l, w) in [sc, kp].into_iter().flatten() {
        let s = tape.scale(l, w);
        total = tape.add(total, s);
    }
    total
}
