//! Reverse-mode automatic differentiation over row-major `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter
//! through [`Tape::param`], inputs through [`Tape::constant`]; calling
//! [`Tape::backward`] on a `1×1` result returns the gradient of every
//! parameter that took part.

use ndarray::{s, Array2, Axis};

use crate::params::{ParamId, ParamStore};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    /// Row-wise normalization without affine terms; keeps `1/σ` per row.
    LayerNorm(Var, Vec<f64>),
    Softmax(Var),
    LogSoftmax(Var),
    Gather(Var, Vec<usize>),
    SelectRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    Dropout(Var, Mat),
    Pick(Var, Vec<usize>),
    Sum(Var),
    SumSquares(Var),
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
    /// Whether any parameter lies upstream.
    requires: bool,
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Param(_) => Vec::new(),
            Op::MatMul(a, b) | Op::MatMulT(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::MulRow(a, b) | Op::Mul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::LayerNorm(a, _)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::Gather(a, _)
            | Op::SelectRows(a, _)
            | Op::SliceCols(a, _, _)
            | Op::Dropout(a, _)
            | Op::Pick(a, _)
            | Op::Sum(a)
            | Op::SumSquares(a) => vec![*a],
            Op::ConcatRows(parts) | Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub const LN_EPS: f64 = 1e-5;

fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu(x: f64) -> f64 {
    x * phi(x)
}

fn gelu_grad(x: f64) -> f64 {
    phi(x) + x * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn softmax_rows(x: &Mat) -> Mat {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    y
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let requires = matches!(op, Op::Param(_)) || op.parents().iter().any(|p| self.nodes[p.0].requires);
        self.nodes.push(Node { value, op, requires });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1×m` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1×m` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) * self.value(row);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut y = x.clone();
        let mut inv = Vec::with_capacity(x.nrows());
        for mut row in y.rows_mut() {
            let n = row.len() as f64;
            let mean = row.sum() / n;
            let var = row.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv.push(is);
        }
        self.push(y, Op::LayerNorm(a, inv))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut y = self.value(a).clone();
        for mut row in y.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.fold(0.0, |acc, &v| acc + (v - m).exp()).ln();
            row.mapv_inplace(|v| v - lse);
        }
        self.push(y, Op::LogSoftmax(a))
    }

    /// Rows `ids` of a table, e.g. an embedding matrix.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        self.select_like(table, ids, true)
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        self.select_like(a, rows, false)
    }

    fn select_like(&mut self, a: Var, rows: &[usize], gather: bool) -> Var {
        let src = self.value(a);
        let mut v = Mat::zeros((rows.len(), src.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            v.row_mut(i).assign(&src.row(r));
        }
        let op = if gather {
            Op::Gather(a, rows.to_vec())
        } else {
            Op::SelectRows(a, rows.to_vec())
        };
        self.push(v, op)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    /// Multiplies by a fixed mask (already scaled by `1/(1-p)`).
    pub fn dropout(&mut self, a: Var, mask: Mat) -> Var {
        let v = self.value(a) * &mask;
        self.push(v, Op::Dropout(a, mask))
    }

    /// `n×1` column holding `a[i, cols[i]]`.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Var {
        let src = self.value(a);
        let v = Mat::from_shape_fn((cols.len(), 1), |(i, _)| src[[i, cols[i]]]);
        self.push(v, Op::Pick(a, cols.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).iter().map(|x| x * x).sum());
        self.push(v, Op::SumSquares(a))
    }

    /// Gradients of the scalar `out` with respect to every parameter leaf,
    /// summed over repeated uses of the same parameter.
    pub fn backward(&self, out: Var, store: &ParamStore) -> Vec<Option<Mat>> {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar");
        let mut grads: Vec<Option<Mat>> = (0..=out.0).map(|_| None).collect();
        grads[out.0] = Some(Mat::from_elem((1, 1), 1.0));
        let mut param_grads: Vec<Option<Mat>> = vec![None; store.len()];

        let need = |v: &Var| self.nodes[v.0].requires;
        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if !node.requires {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => match &mut param_grads[id.0] {
                    Some(existing) => *existing += &g,
                    slot => *slot = Some(g),
                },
                Op::MatMul(a, b) => {
                    if need(a) {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if need(b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if need(a) {
                        acc(&mut grads, *a, g.dot(self.value(*b)));
                    }
                    if need(b) {
                        acc(&mut grads, *b, g.t().dot(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, r) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, g);
                }
                Op::MulRow(a, r) => {
                    let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ga = &g * self.value(*r);
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, ga);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g * *k),
                Op::Gelu(a) => {
                    let mut ga = self.value(*a).mapv(gelu_grad);
                    ga *= &g;
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm(a, inv) => {
                    let y = &node.value;
                    let mut ga = g.clone();
                    for (r, mut row) in ga.rows_mut().into_iter().enumerate() {
                        let n = row.len() as f64;
                        let yr = y.row(r);
                        let mean_g = row.sum() / n;
                        let mean_gy = row.iter().zip(yr.iter()).map(|(a, b)| a * b).sum::<f64>() / n;
                        for (gv, yv) in row.iter_mut().zip(yr.iter()) {
                            *gv = inv[r] * (*gv - mean_g - yv * mean_gy);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = &g * y;
                    for (r, mut row) in ga.rows_mut().into_iter().enumerate() {
                        let dot: f64 = row.sum();
                        for (gv, yv) in row.iter_mut().zip(y.row(r).iter()) {
                            *gv -= yv * dot;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LogSoftmax(a) => {
                    let p = node.value.mapv(f64::exp);
                    let mut ga = g.clone();
                    for (r, mut row) in ga.rows_mut().into_iter().enumerate() {
                        let total = g.row(r).sum();
                        for (gv, pv) in row.iter_mut().zip(p.row(r).iter()) {
                            *gv -= pv * total;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Gather(a, rows) | Op::SelectRows(a, rows) => {
                    let mut ga = Mat::zeros(self.value(*a).dim());
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dst = ga.row_mut(r);
                        dst += &g.row(i);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        acc(&mut grads, *p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., start..start + n]).to_owned());
                        start += n;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Mat::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::Dropout(a, mask) => acc(&mut grads, *a, g * mask),
                Op::Pick(a, cols) => {
                    let mut ga = Mat::zeros(self.value(*a).dim());
                    for (i, &c) in cols.iter().enumerate() {
                        ga[[i, c]] += g[[i, 0]];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Mat::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::SumSquares(a) => {
                    let ga = self.value(*a) * (2.0 * g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
            }
        }
        param_grads
    }
}
