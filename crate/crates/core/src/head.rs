//! Reference numerics for the task head: the MLP adapter, the softmax
//! classifier, the summed cross-entropy, InfoNCE, and the weighted total loss.
//!
//! Everything here is plain `f64` with hand-derived gradients. The trainer
//! runs the same maths on its autodiff tape in `f32`; these functions are the
//! ground truth it is checked against.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Layer-normalization epsilon.
pub const LN_EPS: f64 = 1e-5;
/// Lower clamp on the probability of the true class in cross-entropy.
pub const CE_CLAMP: f64 = 1e-12;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "{}x{} matrix times vector of {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `selfᵀ * y`.
    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
        out
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Standard normal CDF.
pub fn normal_cdf(u: f64) -> f64 {
    0.5 * (1.0 + erf(u / std::f64::consts::SQRT_2))
}

/// Exact GeLU, `u * Φ(u)`.
pub fn gelu(u: f64) -> f64 {
    u * normal_cdf(u)
}

pub fn gelu_grad(u: f64) -> f64 {
    let pdf = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    normal_cdf(u) + u * pdf
}

/// Layer normalization without affine parameters. Returns the normalized
/// vector and `1 / sqrt(var + eps)`.
pub fn layer_norm(h: &[f64]) -> (Vec<f64>, f64) {
    let n = h.len() as f64;
    let mean = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + LN_EPS).sqrt();
    (h.iter().map(|v| (v - mean) * inv_std).collect(), inv_std)
}

fn layer_norm_backward(y: &[f64], inv_std: f64, dy: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let mean_dy = dy.iter().sum::<f64>() / n;
    let mean_dy_y = dot(dy, y) / n;
    y.iter()
        .zip(dy)
        .map(|(yi, dyi)| inv_std * (dyi - mean_dy - yi * mean_dy_y))
        .collect()
}

/// `f(x) = W2 · LN(GeLU(W1 x + b1)) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl AdapterParams {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        let p = AdapterParams { w1, b1, w2, b2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.w1.rows;
        if d == 0 || self.w2.rows == 0 {
            return Err(Error::Dimension("adapter widths must be positive".into()));
        }
        if self.b1.len() != d || self.w2.cols != d || self.b2.len() != self.w2.rows {
            return Err(Error::Dimension(format!(
                "adapter shapes W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                self.w1.rows,
                self.w1.cols,
                self.b1.len(),
                self.w2.rows,
                self.w2.cols,
                self.b2.len()
            )));
        }
        let finite = self.w1.is_finite()
            && self.w2.is_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Invalid("non-finite adapter parameter".into()));
        }
        Ok(())
    }

    /// Input width `d_x`.
    pub fn input_dim(&self) -> usize {
        self.w1.cols
    }

    /// Hidden width `d`.
    pub fn hidden_dim(&self) -> usize {
        self.w1.rows
    }

    /// Output width `d_z`.
    pub fn output_dim(&self) -> usize {
        self.w2.rows
    }
}

struct AdapterTrace {
    pre: Vec<f64>,
    normed: Vec<f64>,
    inv_std: f64,
    z: Vec<f64>,
}

fn adapter_trace(x: &[f64], p: &AdapterParams) -> Result<AdapterTrace> {
    p.validate()?;
    let pre: Vec<f64> = p
        .w1
        .matvec(x)?
        .into_iter()
        .zip(&p.b1)
        .map(|(v, b)| v + b)
        .collect();
    let act: Vec<f64> = pre.iter().map(|&u| gelu(u)).collect();
    let (normed, inv_std) = layer_norm(&act);
    let z = p
        .w2
        .matvec(&normed)?
        .into_iter()
        .zip(&p.b2)
        .map(|(v, b)| v + b)
        .collect();
    Ok(AdapterTrace {
        pre,
        normed,
        inv_std,
        z,
    })
}

pub fn adapter_forward(x: &[f64], p: &AdapterParams) -> Result<Vec<f64>> {
    Ok(adapter_trace(x, p)?.z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdapterGrad {
    pub x: Vec<f64>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Gradients of `dz · f(x)` with respect to the input and every parameter.
pub fn adapter_backward(x: &[f64], p: &AdapterParams, dz: &[f64]) -> Result<AdapterGrad> {
    let t = adapter_trace(x, p)?;
    if dz.len() != t.z.len() {
        return Err(Error::Dimension(format!(
            "upstream gradient of {} for output of {}",
            dz.len(),
            t.z.len()
        )));
    }
    let mut w2 = Matrix::zeros(p.w2.rows, p.w2.cols);
    for (r, &g) in dz.iter().enumerate() {
        for (c, &n) in t.normed.iter().enumerate() {
            w2.data[r * w2.cols + c] = g * n;
        }
    }
    let d_normed = p.w2.matvec_t(dz);
    let d_act = layer_norm_backward(&t.normed, t.inv_std, &d_normed);
    let d_pre: Vec<f64> = d_act
        .iter()
        .zip(&t.pre)
        .map(|(g, &u)| g * gelu_grad(u))
        .collect();
    let mut w1 = Matrix::zeros(p.w1.rows, p.w1.cols);
    for (r, &g) in d_pre.iter().enumerate() {
        for (c, &xi) in x.iter().enumerate() {
            w1.data[r * w1.cols + c] = g * xi;
        }
    }
    Ok(AdapterGrad {
        x: p.w1.matvec_t(&d_pre),
        w1,
        b1: d_pre,
        w2,
        b2: dz.to_vec(),
    })
}

/// `softmax(W3 z + b3)` over the six labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub w3: Matrix,
    pub b3: Vec<f64>,
}

impl ClassifierParams {
    pub fn new(w3: Matrix, b3: Vec<f64>) -> Result<Self> {
        if w3.rows != b3.len() {
            return Err(Error::Dimension(format!(
                "classifier W3 has {} rows, b3 has {}",
                w3.rows,
                b3.len()
            )));
        }
        Ok(ClassifierParams { w3, b3 })
    }

    pub fn zeros(classes: usize, d_z: usize) -> Self {
        ClassifierParams {
            w3: Matrix::zeros(classes, d_z),
            b3: vec![0.0; classes],
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn classifier_logits(z: &[f64], p: &ClassifierParams) -> Result<Vec<f64>> {
    Ok(p.w3
        .matvec(z)?
        .into_iter()
        .zip(&p.b3)
        .map(|(v, b)| v + b)
        .collect())
}

pub fn classify(z: &[f64], p: &ClassifierParams) -> Result<Vec<f64>> {
    Ok(softmax(&classifier_logits(z, p)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClsLoss {
    pub value: f64,
    /// Rows whose true-class probability fell below [`CE_CLAMP`].
    pub clamped: usize,
}

/// Cross-entropy summed (not averaged) over the batch.
pub fn cls_loss(probs: &[Vec<f64>], labels: &[usize]) -> Result<ClsLoss> {
    if probs.is_empty() {
        return Err(Error::Empty("classification batch"));
    }
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: labels.len(),
        });
    }
    let mut value = 0.0;
    let mut clamped = 0;
    for (row, &y) in probs.iter().zip(labels) {
        let p = *row
            .get(y)
            .ok_or_else(|| Error::Dimension(format!("label {y} outside {} classes", row.len())))?;
        if p < CE_CLAMP {
            clamped += 1;
        }
        value -= p.max(CE_CLAMP).ln();
    }
    if clamped > 0 {
        log::warn!("{clamped} probabilities clamped in cross-entropy");
    }
    Ok(ClsLoss { value, clamped })
}

fn check_pairs(z: &[Vec<f64>], z_pos: &[Vec<f64>], tau: f64) -> Result<()> {
    if z.is_empty() {
        return Err(Error::Empty("contrastive batch"));
    }
    if z.len() != z_pos.len() {
        return Err(Error::LengthMismatch {
            left: z.len(),
            right: z_pos.len(),
        });
    }
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::Invalid(format!("temperature must be positive, got {tau}")));
    }
    let dim = z[0].len();
    if z.iter().chain(z_pos).any(|v| v.len() != dim) {
        return Err(Error::Dimension("contrastive vectors differ in width".into()));
    }
    Ok(())
}

fn similarity_rows(z: &[Vec<f64>], z_pos: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    z.iter()
        .map(|zi| z_pos.iter().map(|zj| dot(zi, zj) / tau).collect())
        .collect()
}

/// In-batch InfoNCE with raw dot-product similarity:
/// `-(1/|B|) Σ_i log softmax_j(z_i·z̃_j / τ)[i]`.
pub fn infonce(z: &[Vec<f64>], z_pos: &[Vec<f64>], tau: f64) -> Result<f64> {
    check_pairs(z, z_pos, tau)?;
    let sims = similarity_rows(z, z_pos, tau);
    let n = z.len() as f64;
    Ok(sims
        .iter()
        .enumerate()
        .map(|(i, row)| log_sum_exp(row) - row[i])
        .sum::<f64>()
        / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceGrad {
    pub value: f64,
    pub z: Vec<Vec<f64>>,
    pub z_pos: Vec<Vec<f64>>,
}

pub fn infonce_with_grad(z: &[Vec<f64>], z_pos: &[Vec<f64>], tau: f64) -> Result<InfoNceGrad> {
    check_pairs(z, z_pos, tau)?;
    let sims = similarity_rows(z, z_pos, tau);
    let n = z.len();
    let dim = z[0].len();
    let mut value = 0.0;
    let mut gz = vec![vec![0.0; dim]; n];
    let mut gp = vec![vec![0.0; dim]; n];
    for (i, row) in sims.iter().enumerate() {
        value += log_sum_exp(row) - row[i];
        let soft = softmax(row);
        for (j, &s) in soft.iter().enumerate() {
            // d loss / d sim_ij, with the 1/|B| mean and 1/τ scale folded in
            let g = (s - if i == j { 1.0 } else { 0.0 }) / (n as f64 * tau);
            for k in 0..dim {
                gz[i][k] += g * z_pos[j][k];
                gp[j][k] += g * z[i][k];
            }
        }
    }
    Ok(InfoNceGrad {
        value: value / n as f64,
        z: gz,
        z_pos: gp,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub omega: f64,
    pub tau1: f64,
    pub tau2: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("omega", self.omega),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [("tau1", self.tau1), ("tau2", self.tau2)] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub cls: f64,
    pub sc: f64,
    pub kp: f64,
    /// Weight-decay penalty `½‖θ‖²` over the decayed parameters.
    pub pnt: f64,
}

/// `L = L_cls + λ1 L_sc + λ2 L_kp + ω L_pnt`.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> f64 {
    c.cls + w.lambda1 * c.sc + w.lambda2 * c.kp + w.omega * c.pnt
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_adapter(rng: &mut impl Rng, dx: usize, d: usize, dz: usize) -> AdapterParams {
        AdapterParams::new(
            random_matrix(rng, d, dx),
            random_vec(rng, d),
            random_matrix(rng, dz, d),
            random_vec(rng, dz),
        )
        .unwrap()
    }

    /// Scalar reference written independently of the matrix helpers.
    fn adapter_scalar_reference(x: &[f64], p: &AdapterParams) -> Vec<f64> {
        let d = p.w1.rows;
        let mut act = Vec::with_capacity(d);
        for r in 0..d {
            let mut u = p.b1[r];
            for (c, xc) in x.iter().enumerate() {
                u += p.w1.data[r * p.w1.cols + c] * xc;
            }
            act.push(0.5 * u * (1.0 + erf(u / 2f64.sqrt())));
        }
        let mean = act.iter().sum::<f64>() / d as f64;
        let var = act.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / d as f64;
        let normed: Vec<f64> = act.iter().map(|a| (a - mean) / (var + 1e-5).sqrt()).collect();
        (0..p.w2.rows)
            .map(|r| p.b2[r] + (0..d).map(|c| p.w2.data[r * d + c] * normed[c]).sum::<f64>())
            .collect()
    }

    #[test]
    fn adapter_bias_only_hidden_maps_to_unit_pair() {
        // GeLU(1) ≈ 0.841345, GeLU(-1) ≈ -0.158655; LN maps the pair to ±1
        // up to the epsilon.
        let p = AdapterParams::new(
            Matrix::zeros(2, 3),
            vec![1.0, -1.0],
            Matrix::identity(2),
            vec![0.0, 0.0],
        )
        .unwrap();
        let z = adapter_forward(&[0.3, -2.0, 5.0], &p).unwrap();
        let half_gap: f64 = 0.5;
        let expected = half_gap / (half_gap * half_gap + 1e-5).sqrt();
        assert!((z[0] - expected).abs() < 1e-12);
        assert!((z[1] + expected).abs() < 1e-12);
        assert!((z[0] - 1.0).abs() < 5e-5);
        assert!((gelu(1.0) - 0.841_344_746).abs() < 1e-8);
        assert!((gelu(-1.0) + 0.158_655_254).abs() < 1e-8);
    }

    #[test]
    fn adapter_zero_path_returns_bias() {
        let p = AdapterParams::new(
            Matrix::zeros(4, 3),
            vec![0.0; 4],
            Matrix::zeros(2, 4),
            vec![0.25, -3.0],
        )
        .unwrap();
        assert_eq!(adapter_forward(&[1.0, 2.0, 3.0], &p).unwrap(), vec![0.25, -3.0]);
    }

    #[test]
    fn adapter_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_adapter(&mut rng, 6, 8, 4);
            let x = random_vec(&mut rng, 6);
            let got = adapter_forward(&x, &p).unwrap();
            let want = adapter_scalar_reference(&x, &p);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn adapter_rejects_bad_shapes() {
        let p = AdapterParams::new(Matrix::zeros(2, 3), vec![0.0; 3], Matrix::zeros(1, 2), vec![0.0]);
        assert!(matches!(p, Err(Error::Dimension(_))));
        let p = AdapterParams::new(Matrix::zeros(2, 3), vec![0.0; 2], Matrix::zeros(1, 2), vec![0.0])
            .unwrap();
        assert!(adapter_forward(&[1.0], &p).is_err());
        let bad = AdapterParams::new(
            Matrix::zeros(2, 3),
            vec![f64::NAN, 0.0],
            Matrix::zeros(1, 2),
            vec![0.0],
        );
        assert!(bad.is_err());
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn adapter_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (dx, d, dz) = (5, 8, 4);
        let p = random_adapter(&mut rng, dx, d, dz);
        let x = random_vec(&mut rng, dx);
        let up = random_vec(&mut rng, dz);
        let objective = |x: &[f64], p: &AdapterParams| dot(&adapter_forward(x, p).unwrap(), &up);
        let g = adapter_backward(&x, &p, &up).unwrap();
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        for i in 0..dx {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (objective(&a, &p) - objective(&b, &p)) / (2.0 * h);
            worst = worst.max(rel_err(fd, g.x[i]));
        }
        for i in 0..p.w1.data.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.w1.data[i] += h;
            b.w1.data[i] -= h;
            let fd = (objective(&x, &a) - objective(&x, &b)) / (2.0 * h);
            worst = worst.max(rel_err(fd, g.w1.data[i]));
        }
        for i in 0..d {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.b1[i] += h;
            b.b1[i] -= h;
            let fd = (objective(&x, &a) - objective(&x, &b)) / (2.0 * h);
            worst = worst.max(rel_err(fd, g.b1[i]));
        }
        for i in 0..p.w2.data.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            a.w2.data[i] += h;
            b.w2.data[i] -= h;
            let fd = (objective(&x, &a) - objective(&x, &b)) / (2.0 * h);
            worst = worst.max(rel_err(fd, g.w2.data[i]));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn uniform_classifier() {
        let p = ClassifierParams::zeros(6, 4);
        for v in classify(&[1.0, 2.0, 3.0, 4.0], &p).unwrap() {
            assert!((v - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_bias_dominates() {
        let mut p = ClassifierParams::zeros(6, 2);
        p.b3[0] = 60.0;
        let probs = classify(&[0.5, 0.5], &p).unwrap();
        assert!(1.0 - probs[0] < 1e-24 || probs[1..].iter().sum::<f64>() < 1e-24);
        assert!(probs.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn classify_sums_to_one_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let p = ClassifierParams::new(random_matrix(&mut rng, 6, 5), random_vec(&mut rng, 6)).unwrap();
            let z: Vec<f64> = random_vec(&mut rng, 5).iter().map(|v| v * 10.0).collect();
            let probs = classify(&z, &p).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let logits = classifier_logits(&z, &p).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|l| l + 123.0).collect();
            let argmax = |v: &[f64]| {
                v.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0
            };
            assert_eq!(argmax(&probs), argmax(&softmax(&shifted)));
        }
    }

    #[test]
    fn cross_entropy_values() {
        let one_hot = vec![vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0]];
        assert_eq!(cls_loss(&one_hot, &[1]).unwrap().value, 0.0);
        let uniform = vec![1.0 / 6.0; 6];
        let l1 = cls_loss(std::slice::from_ref(&uniform), &[3]).unwrap().value;
        assert!((l1 - 6f64.ln()).abs() < 1e-12);
        assert!((l1 - 1.79176).abs() < 1e-5);
        let l2 = cls_loss(&[uniform.clone(), uniform], &[0, 5]).unwrap().value;
        assert!((l2 - 2.0 * 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_clamps_zero() {
        let r = cls_loss(&[vec![1.0, 0.0]], &[1]).unwrap();
        assert_eq!(r.clamped, 1);
        assert!((r.value - (-CE_CLAMP.ln())).abs() < 1e-9);
        assert!(cls_loss(&[], &[]).is_err());
        assert!(cls_loss(&[vec![1.0]], &[0, 0]).is_err());
    }

    #[test]
    fn infonce_single_pair_is_zero() {
        assert_eq!(infonce(&[vec![3.0, -1.0]], &[vec![0.2, 7.0]], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn infonce_equal_similarities_is_log_batch() {
        // every z_i · z̃_j = 1
        let z = vec![vec![1.0, 0.0]; 4];
        let zp = vec![vec![1.0, 5.0]; 4];
        let l = infonce(&z, &zp, 1.0).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-9);
        assert!((l - 1.38629).abs() < 1e-5);
    }

    #[test]
    fn infonce_permutation_invariant_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let z: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 3)).collect();
            let zp: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 3)).collect();
            let l = infonce(&z, &zp, 0.7).unwrap();
            assert!(l >= 0.0);
            let perm = [3, 0, 4, 1, 2];
            let zq: Vec<_> = perm.iter().map(|&i| z[i].clone()).collect();
            let zpq: Vec<_> = perm.iter().map(|&i| zp[i].clone()).collect();
            assert!((l - infonce(&zq, &zpq, 0.7).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn infonce_rejects_mismatch() {
        assert!(matches!(
            infonce(&[vec![1.0]], &[vec![1.0], vec![2.0]], 1.0),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(infonce(&[vec![1.0]], &[vec![1.0]], 0.0).is_err());
        assert!(infonce(&[], &[], 1.0).is_err());
    }

    #[test]
    fn infonce_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let z: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 8)).collect();
        let zp: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, 8)).collect();
        let tau = 0.8;
        let g = infonce_with_grad(&z, &zp, tau).unwrap();
        assert!((g.value - infonce(&z, &zp, tau).unwrap()).abs() < 1e-12);
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        for i in 0..4 {
            for k in 0..8 {
                let (mut a, mut b) = (z.clone(), z.clone());
                a[i][k] += h;
                b[i][k] -= h;
                let fd = (infonce(&a, &zp, tau).unwrap() - infonce(&b, &zp, tau).unwrap()) / (2.0 * h);
                worst = worst.max(rel_err(fd, g.z[i][k]));
                let (mut a, mut b) = (zp.clone(), zp.clone());
                a[i][k] += h;
                b[i][k] -= h;
                let fd = (infonce(&z, &a, tau).unwrap() - infonce(&z, &b, tau).unwrap()) / (2.0 * h);
                worst = worst.max(rel_err(fd, g.z_pos[i][k]));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    fn weights(l1: f64, l2: f64, om: f64) -> LossWeights {
        LossWeights {
            lambda1: l1,
            lambda2: l2,
            omega: om,
            tau1: 1.0,
            tau2: 1.0,
        }
    }

    #[test]
    fn total_loss_examples() {
        let c = LossComponents {
            cls: 0.7,
            sc: 3.0,
            kp: 9.0,
            pnt: 100.0,
        };
        assert_eq!(total_loss(&c, &weights(0.0, 0.0, 0.0)), 0.7);
        let unit = LossComponents {
            cls: 1.0,
            sc: 1.0,
            kp: 1.0,
            pnt: 1.0,
        };
        assert!((total_loss(&unit, &weights(0.2, 0.1, 0.01)) - 1.31).abs() < 1e-12);
        let mut other = c;
        other.kp = -42.0;
        assert_eq!(
            total_loss(&c, &weights(0.3, 0.0, 0.1)),
            total_loss(&other, &weights(0.3, 0.0, 0.1))
        );
    }

    #[test]
    fn total_loss_is_linear() {
        let w = weights(0.2, 0.1, 0.01);
        let a = LossComponents { cls: 1.0, sc: 2.0, kp: 3.0, pnt: 4.0 };
        let b = LossComponents { cls: -0.5, sc: 0.25, kp: 7.0, pnt: 0.0 };
        let sum = LossComponents {
            cls: a.cls + 2.0 * b.cls,
            sc: a.sc + 2.0 * b.sc,
            kp: a.kp + 2.0 * b.kp,
            pnt: a.pnt + 2.0 * b.pnt,
        };
        let lhs = total_loss(&sum, &w);
        let rhs = total_loss(&a, &w) + 2.0 * total_loss(&b, &w);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn weights_validation() {
        assert!(weights(0.2, 0.1, 0.01).validate().is_ok());
        assert!(weights(-0.1, 0.1, 0.01).validate().is_err());
        let mut w = weights(0.2, 0.1, 0.01);
        w.tau2 = 0.0;
        assert!(w.validate().is_err());
    }
}
