//! Minimal reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! replays it in reverse. Vectors are `n x 1` matrices and scalars `1 x 1`.
//! Besides the dense algebra the tape knows a handful of graph operations on
//! an unordered pair list ([`Pairs`]): pairwise dot products, scatter/gather
//! between pairs and nodes, and a symmetric sparse propagation with a
//! diagonal term, which together express normalized graph convolution with
//! differentiable edge weights.

use std::rc::Rc;

use ndarray::{Array1, Array2, Axis, Zip};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Unordered node pairs `(src[e], dst[e])` over `n` nodes, with
/// `src[e] != dst[e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairs {
    pub n: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
}

impl Pairs {
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (src, dst) = pairs.into_iter().unzip();
        Pairs { n, src, dst }
    }

    /// All `n (n - 1) / 2` pairs `u < v` in row-major order.
    pub fn complete(n: usize) -> Self {
        Pairs::new(n, (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))))
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log { x: Var, lo: f64, hi: f64 },
    Logit { x: Var, eps: f64 },
    Powf(Var, f64),
    Sum(Var),
    RowSum(Var),
    Diag(Var),
    RowNormalize(Var),
    SoftmaxRows(Var),
    PickCols(Var, Rc<Vec<usize>>),
    PairDot(Var, Rc<Pairs>),
    PairProduct(Var, Rc<Pairs>),
    ScatterPairs(Var, Rc<Pairs>),
    Spmm { coef: Var, diag: Var, x: Var, pairs: Rc<Pairs> },
    StraightThrough(Var),
    InfoNce { a: Var, b: Var, tau: f64 },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient for `v`; `None` when no path from the output reaches it.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zeros of `shape` when unreachable.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.get(v).cloned().unwrap_or_else(|| Array2::zeros(shape))
    }
}

fn col(v: Vec<f64>) -> Array2<f64> {
    let n = v.len();
    Array2::from_shape_vec((n, 1), v).expect("column shape")
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

    fn push(&mut self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        let value = if value.is_standard_layout() {
            value
        } else {
            value.as_standard_layout().into_owned()
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape");
        let v = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape");
        let v = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape");
        let v = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Mul(a, b), rg)
    }

    /// `a (n x k) + row (1 x k)` broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row).0, 1);
        let v = self.value(a) + self.value(row);
        let rg = self.rg(a) || self.rg(row);
        self.push(v, Op::AddRow(a, row), rg)
    }

    /// `a (n x k) * c (n x 1)` broadcast over columns.
    pub fn mul_col(&mut self, a: Var, c: Var) -> Var {
        assert_eq!(self.shape(c), (self.shape(a).0, 1));
        let v = self.value(a) * self.value(c);
        let rg = self.rg(a) || self.rg(c);
        self.push(v, Op::MulCol(a, c), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, s), rg)
    }

    /// `a + c` for a scalar constant `c`.
    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        let rg = self.rg(a);
        self.push(v, Op::Shift(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        let rg = self.rg(a);
        self.push(v, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        let rg = self.rg(a);
        self.push(v, Op::Exp(a), rg)
    }

    /// `ln(clamp(a, lo, hi))`; zero gradient where the clamp is active.
    pub fn log_clamped(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi).ln());
        let rg = self.rg(a);
        self.push(v, Op::Log { x: a, lo, hi }, rg)
    }

    /// `ln(c / (1 - c))` with `c = clamp(a, eps, 1 - eps)`.
    pub fn logit_clamped(&mut self, a: Var, eps: f64) -> Var {
        let v = self.value(a).mapv(|x| logit(x.clamp(eps, 1.0 - eps)));
        let rg = self.rg(a);
        self.push(v, Op::Logit { x: a, eps }, rg)
    }

    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let v = self.value(a).mapv(|x| x.powf(p));
        let rg = self.rg(a);
        self.push(v, Op::Powf(a, p), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let count = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / count)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(v, Op::RowSum(a), rg)
    }

    pub fn diag(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(n, m, "diag of non-square matrix");
        let v = col(self.value(a).diag().to_vec());
        let rg = self.rg(a);
        self.push(v, Op::Diag(a), rg)
    }

    /// Scales each row to unit L2 norm; all-zero rows stay zero.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut r in v.rows_mut() {
            let norm = r.dot(&r).sqrt();
            if norm > 0.0 {
                r /= norm;
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::RowNormalize(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut r in v.rows_mut() {
            let max = r.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            r.mapv_inplace(|x| (x - max).exp());
            let s = r.sum();
            r /= s;
        }
        let rg = self.rg(a);
        self.push(v, Op::SoftmaxRows(a), rg)
    }

    /// `out[i] = a[i, idx[i]]` as an `n x 1` column.
    pub fn pick_cols(&mut self, a: Var, idx: Rc<Vec<usize>>) -> Var {
        let av = self.value(a);
        assert_eq!(av.nrows(), idx.len());
        let v = col(idx.iter().enumerate().map(|(i, &j)| av[[i, j]]).collect());
        let rg = self.rg(a);
        self.push(v, Op::PickCols(a, idx), rg)
    }

    /// `out[e] = t[src[e]] . t[dst[e]]`.
    pub fn pair_dot(&mut self, t: Var, pairs: Rc<Pairs>) -> Var {
        let tv = self.value(t);
        assert_eq!(tv.nrows(), pairs.n);
        let k = tv.ncols();
        let ts = tv.as_slice().expect("standard layout");
        let v = col(pairs.iter().map(|(a, b)| dot(row(ts, k, a), row(ts, k, b))).collect());
        let rg = self.rg(t);
        self.push(v, Op::PairDot(t, pairs), rg)
    }

    /// `out[e] = c[src[e]] * c[dst[e]]` for a node column `c`.
    pub fn pair_product(&mut self, c: Var, pairs: Rc<Pairs>) -> Var {
        let cv = self.value(c);
        assert_eq!(cv.dim(), (pairs.n, 1));
        let v = col(pairs.iter().map(|(a, b)| cv[[a, 0]] * cv[[b, 0]]).collect());
        let rg = self.rg(c);
        self.push(v, Op::PairProduct(c, pairs), rg)
    }

    /// Node column `out[i] = sum of w[e] over pairs touching i`.
    pub fn scatter_pairs(&mut self, w: Var, pairs: Rc<Pairs>) -> Var {
        let wv = self.value(w);
        assert_eq!(wv.dim(), (pairs.len(), 1));
        let mut out = vec![0.0; pairs.n];
        for (e, (a, b)) in pairs.iter().enumerate() {
            out[a] += wv[[e, 0]];
            out[b] += wv[[e, 0]];
        }
        let rg = self.rg(w);
        self.push(col(out), Op::ScatterPairs(w, pairs), rg)
    }

    /// Symmetric sparse product `M x` where `M[a,b] = M[b,a] = coef[e]` for
    /// each pair `e = (a, b)` and `M[i,i] = diag[i]`.
    pub fn spmm(&mut self, coef: Var, diag: Var, x: Var, pairs: Rc<Pairs>) -> Var {
        assert_eq!(self.shape(coef), (pairs.len(), 1));
        assert_eq!(self.shape(diag), (pairs.n, 1));
        assert_eq!(self.shape(x).0, pairs.n);
        let v = spmm_raw(self.value(coef), self.value(diag), self.value(x), &pairs);
        let rg = self.rg(coef) || self.rg(diag) || self.rg(x);
        self.push(v, Op::Spmm { coef, diag, x, pairs }, rg)
    }

    /// Forward value `1[soft > 0.5]`; the backward pass treats the op as
    /// identity so gradients flow into `soft`.
    pub fn straight_through(&mut self, soft: Var) -> Var {
        let v = self.value(soft).mapv(|s| if s > 0.5 { 1.0 } else { 0.0 });
        let rg = self.rg(soft);
        self.push(v, Op::StraightThrough(soft), rg)
    }

    /// Symmetric InfoNCE between paired rows of `a` and `b`, scored by the
    /// dot product `a_i . b_j / tau` (cosine similarity for unit rows).
    /// Negatives for row `i` are every row of its own view and every other
    /// row of the opposite view. Equivalent to composing matmuls, exp and
    /// row sums on the tape, but holds only a handful of `n x n` buffers.
    pub fn info_nce(&mut self, a: Var, b: Var, tau: f64) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "info_nce: shape mismatch");
        assert!(tau > 0.0, "info_nce: tau must be positive");
        let loss = info_nce_forward(self.value(a), self.value(b), tau);
        let rg = self.rg(a) || self.rg(b);
        self.push(Array2::from_elem((1, 1), loss), Op::InfoNce { a, b, tau }, rg)
    }

    /// Reverse pass from the scalar `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array2::ones((1, 1)));
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, d: Array2<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot @ None => *slot = Some(d),
            }
        };
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    acc(*a, g.dot(&val(*b).t()));
                }
                if needs(*b) {
                    acc(*b, val(*a).t().dot(g));
                }
            }
            Op::Transpose(a) => acc(*a, g.t().as_standard_layout().into_owned()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    acc(*a, g * val(*b));
                }
                if needs(*b) {
                    acc(*b, g * val(*a));
                }
            }
            Op::AddRow(a, r) => {
                acc(*a, g.clone());
                if needs(*r) {
                    acc(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::MulCol(a, c) => {
                if needs(*a) {
                    acc(*a, g * val(*c));
                }
                if needs(*c) {
                    acc(*c, (g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1)));
                }
            }
            Op::Scale(a, s) => acc(*a, g * *s),
            Op::Shift(a) => acc(*a, g.clone()),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                acc(*a, d);
            }
            Op::Exp(a) => acc(*a, g * &node.value),
            Op::Log { x, lo, hi } => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*x)).for_each(|d, &x| {
                    *d = if x >= *lo && x <= *hi { *d / x } else { 0.0 };
                });
                acc(*x, d);
            }
            Op::Logit { x, eps } => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*x)).for_each(|d, &x| {
                    *d = if x >= *eps && x <= 1.0 - *eps {
                        *d / (x * (1.0 - x))
                    } else {
                        0.0
                    };
                });
                acc(*x, d);
            }
            Op::Powf(a, p) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(val(*a)).for_each(|d, &x| *d *= p * x.powf(p - 1.0));
                acc(*a, d);
            }
            Op::Sum(a) => acc(*a, Array2::from_elem(val(*a).dim(), g[[0, 0]])),
            Op::RowSum(a) => {
                let (n, k) = val(*a).dim();
                let d = Array2::from_shape_fn((n, k), |(i, _)| g[[i, 0]]);
                acc(*a, d);
            }
            Op::Diag(a) => {
                let n = val(*a).nrows();
                let mut d = Array2::zeros((n, n));
                for i in 0..n {
                    d[[i, i]] = g[[i, 0]];
                }
                acc(*a, d);
            }
            Op::RowNormalize(a) => {
                let x = val(*a);
                let y = &node.value;
                let mut d = Array2::zeros(x.dim());
                for i in 0..x.nrows() {
                    let norm = x.row(i).dot(&x.row(i)).sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let yg = y.row(i).dot(&g.row(i));
                    let mut r = d.row_mut(i);
                    r.assign(&g.row(i));
                    r.scaled_add(-yg, &y.row(i));
                    r /= norm;
                }
                acc(*a, d);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = g.clone();
                for i in 0..y.nrows() {
                    let gy = g.row(i).dot(&y.row(i));
                    let mut r = d.row_mut(i);
                    r -= gy;
                    r *= &y.row(i);
                }
                acc(*a, d);
            }
            Op::PickCols(a, idx) => {
                let mut d = Array2::zeros(val(*a).dim());
                for (i, &j) in idx.iter().enumerate() {
                    d[[i, j]] = g[[i, 0]];
                }
                acc(*a, d);
            }
            Op::PairDot(t, pairs) => {
                let tv = val(*t);
                let k = tv.ncols();
                let ts = tv.as_slice().expect("standard layout");
                let mut d = Array2::zeros(tv.dim());
                let ds = d.as_slice_mut().expect("standard layout");
                for (e, (a, b)) in pairs.iter().enumerate() {
                    let ge = g[[e, 0]];
                    if ge == 0.0 {
                        continue;
                    }
                    axpy(row_mut(ds, k, a), ge, row(ts, k, b));
                    axpy(row_mut(ds, k, b), ge, row(ts, k, a));
                }
                acc(*t, d);
            }
            Op::PairProduct(c, pairs) => {
                let cv = val(*c);
                let mut d = vec![0.0; pairs.n];
                for (e, (a, b)) in pairs.iter().enumerate() {
                    d[a] += g[[e, 0]] * cv[[b, 0]];
                    d[b] += g[[e, 0]] * cv[[a, 0]];
                }
                acc(*c, col(d));
            }
            Op::ScatterPairs(w, pairs) => {
                let d = pairs.iter().map(|(a, b)| g[[a, 0]] + g[[b, 0]]).collect();
                acc(*w, col(d));
            }
            Op::Spmm { coef, diag, x, pairs } => {
                let xv = val(*x);
                if needs(*x) {
                    acc(*x, spmm_raw(val(*coef), val(*diag), g, pairs));
                }
                let k = xv.ncols();
                let xs = xv.as_slice().expect("standard layout");
                let gs = g.as_slice().expect("standard layout");
                if needs(*coef) {
                    let d = pairs
                        .iter()
                        .map(|(a, b)| dot(row(gs, k, a), row(xs, k, b)) + dot(row(gs, k, b), row(xs, k, a)))
                        .collect();
                    acc(*coef, col(d));
                }
                if needs(*diag) {
                    let d = (0..pairs.n).map(|i| dot(row(gs, k, i), row(xs, k, i))).collect();
                    acc(*diag, col(d));
                }
            }
            Op::StraightThrough(s) => acc(*s, g.clone()),
            Op::InfoNce { a, b, tau } => {
                let (da, db) = info_nce_backward(val(*a), val(*b), *tau);
                let g0 = g[[0, 0]];
                acc(*a, da * g0);
                acc(*b, db * g0);
            }
        }
    }
}

fn spmm_raw(coef: &Array2<f64>, diag: &Array2<f64>, x: &Array2<f64>, pairs: &Pairs) -> Array2<f64> {
    let k = x.ncols();
    let xs = x.as_slice().expect("standard layout");
    let mut out = (x * diag).as_standard_layout().into_owned();
    let os = out.as_slice_mut().expect("standard layout");
    for (e, (a, b)) in pairs.iter().enumerate() {
        let c = coef[[e, 0]];
        if c == 0.0 {
            continue;
        }
        axpy(row_mut(os, k, a), c, row(xs, k, b));
        axpy(row_mut(os, k, b), c, row(xs, k, a));
    }
    out
}

fn row(s: &[f64], k: usize, i: usize) -> &[f64] {
    &s[i * k..(i + 1) * k]
}

fn row_mut(s: &mut [f64], k: usize, i: usize) -> &mut [f64] {
    &mut s[i * k..(i + 1) * k]
}

/// Dot product with four partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for j in 0..4 {
            acc[j] += x[j] * y[j];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

struct InfoNceParts {
    e11: Array2<f64>,
    e12: Array2<f64>,
    e22: Array2<f64>,
    den1: Array1<f64>,
    den2: Array1<f64>,
    loss: f64,
}

/// Exponentiated similarities shifted by the largest score, the two
/// denominators per row and the loss.
fn info_nce_parts(a: &Array2<f64>, b: &Array2<f64>, tau: f64) -> InfoNceParts {
    let n = a.nrows();
    let s11 = a.dot(&a.t());
    let s12 = a.dot(&b.t());
    let s22 = b.dot(&b.t());
    let top = s11
        .iter()
        .chain(s12.iter())
        .chain(s22.iter())
        .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let ex = |m: Array2<f64>| m.mapv_into(|x| ((x - top) / tau).exp());
    let pos: Vec<f64> = (0..n).map(|i| s12[[i, i]]).collect();
    let e11 = ex(s11);
    let e12 = ex(s12);
    let e22 = ex(s22);
    let r12 = e12.sum_axis(Axis(1));
    let c12 = e12.sum_axis(Axis(0));
    let mut den1 = e11.sum_axis(Axis(1));
    let mut den2 = e22.sum_axis(Axis(1));
    let mut loss = 0.0;
    for i in 0..n {
        den1[i] += r12[i] - e12[[i, i]];
        den2[i] += c12[i] - e12[[i, i]];
        loss += den1[i].ln() + den2[i].ln() + 2.0 * (top - pos[i]) / tau;
    }
    InfoNceParts { e11, e12, e22, den1, den2, loss: loss / (2.0 * n as f64) }
}

fn info_nce_forward(a: &Array2<f64>, b: &Array2<f64>, tau: f64) -> f64 {
    info_nce_parts(a, b, tau).loss
}

fn info_nce_backward(a: &Array2<f64>, b: &Array2<f64>, tau: f64) -> (Array2<f64>, Array2<f64>) {
    let n = a.nrows();
    let c = 1.0 / (2.0 * n as f64 * tau);
    let InfoNceParts { mut e11, mut e12, mut e22, den1, den2, .. } = info_nce_parts(a, b, tau);
    for i in 0..n {
        let (s1, s2) = (c / den1[i], c / den2[i]);
        e11.row_mut(i).mapv_inplace(|x| x * s1);
        e22.row_mut(i).mapv_inplace(|x| x * s2);
    }
    // Cross term: row-normalised by den1 for the first direction and
    // column-normalised by den2 for the transposed second direction.
    for i in 0..n {
        for j in 0..n {
            let e = e12[[i, j]];
            e12[[i, j]] = if i == j { -2.0 * c } else { e * (c / den1[i] + c / den2[j]) };
        }
    }
    let mut da = e11.dot(a);
    da += &e11.t().dot(a);
    da += &e12.dot(b);
    let mut db = e22.dot(b);
    db += &e22.t().dot(b);
    db += &e12.t().dot(a);
    (da, db)
}


pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_gradients, GradCheck};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Uniform};

    fn rand_mat(rows: usize, cols: usize, seed: u64, lo: f64, hi: f64) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(lo, hi).unwrap();
        Array2::from_shape_fn((rows, cols), |_| u.sample(&mut rng))
    }

    fn assert_check(r: GradCheck) {
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn dense_ops_match_finite_differences() {
        let a = rand_mat(3, 4, 1, -1.0, 1.0);
        let b = rand_mat(4, 2, 2, -1.0, 1.0);
        let r = rand_mat(1, 2, 3, -1.0, 1.0);
        let r = check_gradients(&[a, b, r], |t, v| {
            let m = t.matmul(v[0], v[1]);
            let m = t.add_row(m, v[2]);
            let s = t.sigmoid(m);
            let e = t.exp(s);
            let tr = t.transpose(e);
            let p = t.matmul(e, tr);
            let sm = t.softmax_rows(p);
            let d = t.diag(sm);
            let l = t.log_clamped(d, 1e-8, 1.0);
            t.sum(l)
        });
        assert_check(r);
    }

    #[test]
    fn normalize_mulcol_pow_match_finite_differences() {
        let a = rand_mat(4, 3, 4, -2.0, 2.0);
        let c = rand_mat(4, 1, 5, 0.5, 2.0);
        let r = check_gradients(&[a, c], |t, v| {
            let n = t.row_normalize(v[0]);
            let m = t.mul_col(n, v[1]);
            let p = t.powf(v[1], -0.5);
            let rs = t.row_sum(m);
            let q = t.mul(rs, p);
            let z = t.relu(q);
            let s = t.scale(z, 3.0);
            let s = t.shift(s, 1.0);
            let w = t.sub(s, rs);
            t.sum(w)
        });
        assert_check(r);
    }

    #[test]
    fn graph_ops_match_finite_differences() {
        let pairs = Rc::new(Pairs::new(4, vec![(0, 1), (1, 2), (0, 3), (2, 3), (1, 3)]));
        let w = rand_mat(5, 1, 6, 0.1, 0.9);
        let x = rand_mat(4, 3, 7, -1.0, 1.0);
        let r = check_gradients(&[w, x], |t, v| {
            let deg = t.scatter_pairs(v[0], pairs.clone());
            let deg = t.shift(deg, 1.0);
            let c = t.powf(deg, -0.5);
            let cc = t.pair_product(c, pairs.clone());
            let coef = t.mul(v[0], cc);
            let diag = t.mul(c, c);
            let h = t.spmm(coef, diag, v[1], pairs.clone());
            let pd = t.pair_dot(h, pairs.clone());
            let s = t.sigmoid(pd);
            let lg = t.logit_clamped(s, 1e-8);
            t.sum(lg)
        });
        assert_check(r);
    }

    #[test]
    fn pick_cols_and_straight_through() {
        let mut t = Tape::new();
        let a = t.param(array![[0.2, 0.8], [0.6, 0.4]]);
        let picked = t.pick_cols(a, Rc::new(vec![1, 0]));
        assert_eq!(t.value(picked), &array![[0.8], [0.6]]);
        let hard = t.straight_through(a);
        assert_eq!(t.value(hard), &array![[0.0, 1.0], [1.0, 0.0]]);
        let s = t.sum(hard);
        let g = t.backward(s);
        assert_eq!(g.get(a).unwrap(), &Array2::<f64>::ones((2, 2)));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let a = t.constant(array![[1.0, 2.0]]);
        let b = t.param(array![[3.0, 4.0]]);
        let m = t.mul(a, b);
        let s = t.sum(m);
        let g = t.backward(s);
        assert!(g.get(a).is_none());
        assert_eq!(g.get(b).unwrap(), &array![[1.0, 2.0]]);
    }

    #[test]
    fn spmm_matches_dense_product() {
        let pairs = Rc::new(Pairs::new(3, vec![(0, 1), (1, 2)]));
        let mut t = Tape::new();
        let coef = t.constant(array![[2.0], [3.0]]);
        let diag = t.constant(array![[1.0], [1.0], [1.0]]);
        let x = t.constant(array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let y = t.spmm(coef, diag, x, pairs);
        let m = array![[1.0, 2.0, 0.0], [2.0, 1.0, 3.0], [0.0, 3.0, 1.0]];
        assert_eq!(t.value(y), &m.dot(&array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]));
    }
}
