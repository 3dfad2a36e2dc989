//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records operations eagerly: every op computes its value when it
//! is created, so a tape doubles as a plain forward evaluator. Parameters are
//! read by reference from a [`ParamStore`] and never copied onto the tape.
//! Vectors are `1 × n` row matrices throughout.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::params::{GradBuffer, ParamId, ParamStore};

pub type Mat = Array2<f64>;

/// Lower clamp for probabilities inside the cross-entropy.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    #[default]
    Tanh,
    Logistic,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Logistic => logistic(x),
        }
    }

    /// d(act)/dx written in terms of the activation's output.
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Logistic => y * (1.0 - y),
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Param(ParamId),
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Activate(Var, Activation),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Rows(Var, Vec<usize>),
    MeanRows(Var),
    NeighborMean(Var, Arc<Vec<Vec<usize>>>),
    PairSum(Var, Var),
    SoftmaxAll(Var),
    SumAll(Var),
    MeanAll(Var),
    Square(Var),
    BceSum(Var, Mat),
}

struct Node {
    op: Op,
    value: Option<Mat>,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

static EMPTY_STORE: ParamStore = ParamStore::new();

impl Tape<'static> {
    /// A tape without parameters, for evaluating constant expressions.
    pub fn detached() -> Self {
        Tape::new(&EMPTY_STORE)
    }
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::with_capacity(256),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (_, Some(m)) => m,
            (Op::Param(id), None) => self.store.get(*id),
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Mat::zeros((rows, cols)))
    }

    pub fn row_vector(&mut self, values: &[f64]) -> Var {
        self.constant(Mat::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape"))
    }

    /// Each parameter is recorded once per tape.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.ncols(), vb.nrows(), "matmul inner dimensions");
        let out = va.dot(vb);
        self.push(Op::MatMul(a, b), out)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(Op::Transpose(a), out)
    }

    /// Elementwise sum. `b` may also be a `1 × n` row (broadcast over rows)
    /// or a `1 × 1` scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let out = if va.dim() == vb.dim() {
            va + vb
        } else if vb.dim() == (1, 1) {
            va + vb[[0, 0]]
        } else {
            assert!(vb.nrows() == 1 && vb.ncols() == va.ncols(), "add broadcast shape");
            va + &vb.row(0)
        };
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.dim(), vb.dim(), "sub shapes");
        let out = va - vb;
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.dim(), vb.dim(), "mul shapes");
        let out = va * vb;
        self.push(Op::Mul(a, b), out)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(Op::Scale(a, c), out)
    }

    pub fn activate(&mut self, a: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return a;
        }
        let out = self.value(a).mapv(|x| act.apply(x));
        self.push(Op::Activate(a, act), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Tanh)
    }

    pub fn logistic(&mut self, a: Var) -> Var {
        self.activate(a, Activation::Logistic)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols row counts");
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("concat_rows column counts");
        self.push(Op::ConcatRows(parts.to_vec()), out)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols(a, start), out)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let out = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(Op::SliceRows(a, start), out)
    }

    /// Gathers rows by index (repeats allowed).
    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let out = self.value(a).select(Axis(0), idx);
        self.push(Op::Rows(a, idx.to_vec()), out)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out = va.mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        self.push(Op::MeanRows(a), out)
    }

    /// `out[v] = mean(a[v], a[u] for u in neighbors[v])`.
    pub fn neighbor_mean(&mut self, a: Var, neighbors: Arc<Vec<Vec<usize>>>) -> Var {
        let va = self.value(a);
        assert_eq!(va.nrows(), neighbors.len(), "one neighbor list per row");
        let mut out = va.clone();
        for (v, nb) in neighbors.iter().enumerate() {
            let mut row = out.row_mut(v);
            for &u in nb {
                row += &va.row(u);
            }
            row /= (1 + nb.len()) as f64;
        }
        self.push(Op::NeighborMean(a, neighbors), out)
    }

    /// `out[i][j] = u[i] + v[j]` for column vectors `u` (n × 1) and `v` (m × 1).
    pub fn pair_sum(&mut self, u: Var, v: Var) -> Var {
        let (vu, vv) = (self.value(u), self.value(v));
        assert!(vu.ncols() == 1 && vv.ncols() == 1, "pair_sum takes column vectors");
        let out = Mat::from_shape_fn((vu.nrows(), vv.nrows()), |(i, j)| vu[[i, 0]] + vv[[j, 0]]);
        self.push(Op::PairSum(u, v), out)
    }

    /// Softmax over every entry of the matrix jointly.
    pub fn softmax_all(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let max = va.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let mut out = va.mapv(|x| (x - max).exp());
        let z = out.sum();
        out /= z;
        self.push(Op::SoftmaxAll(a), out)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(Op::SumAll(a), out)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let out = Mat::from_elem((1, 1), self.value(a).mean().unwrap_or(0.0));
        self.push(Op::MeanAll(a), out)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x * x);
        self.push(Op::Square(a), out)
    }

    /// Summed binary cross-entropy of probabilities `p` against same-shaped
    /// 0/1 targets, with `p` clamped to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn bce_sum(&mut self, p: Var, targets: Mat) -> Var {
        let vp = self.value(p);
        assert_eq!(vp.dim(), targets.dim(), "bce shapes");
        let loss: f64 = vp
            .iter()
            .zip(targets.iter())
            .map(|(&p, &t)| {
                let pc = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
                -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
            })
            .sum();
        self.push(Op::BceSum(p, targets), Mat::from_elem((1, 1), loss))
    }

    /// Gradients of a scalar node.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        self.backward_seeded(vec![(loss, Mat::from_elem((1, 1), 1.0))])
    }

    /// Reverse pass starting from arbitrary upstream gradients.
    pub fn backward_seeded(&self, seeds: Vec<(Var, Mat)>) -> Grads {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (v, g) in seeds {
            assert_eq!(g.dim(), self.shape(v), "seed shape");
            last = last.max(v.0);
            accumulate(&mut grads, v, g);
        }
        for idx in (0..=last).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, idx: usize, g: &Mat, grads: &mut [Option<Mat>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Param(_) | Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.dot(&vb.t()));
                accumulate(grads, *b, va.t().dot(g));
            }
            Op::Transpose(a) => accumulate(grads, *a, g.t().to_owned()),
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                let (ra, rb) = (self.shape(*a), self.shape(*b));
                let gb = if ra == rb {
                    g.clone()
                } else if rb == (1, 1) {
                    Mat::from_elem((1, 1), g.sum())
                } else {
                    g.sum_axis(Axis(0)).insert_axis(Axis(0))
                };
                accumulate(grads, *b, gb);
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, -g);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g * vb);
                accumulate(grads, *b, g * va);
            }
            Op::Scale(a, c) => accumulate(grads, *a, g * *c),
            Op::Activate(a, act) => {
                let y = node.value.as_ref().expect("value");
                let mut ga = g.clone();
                ga.zip_mut_with(y, |gi, &yi| *gi *= act.derivative_at_output(yi));
                accumulate(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    accumulate(grads, p, g.slice(s![.., start..start + w]).to_owned());
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let h = self.shape(p).0;
                    accumulate(grads, p, g.slice(s![start..start + h, ..]).to_owned());
                    start += h;
                }
            }
            Op::SliceCols(a, start) => {
                let mut ga = Mat::zeros(self.shape(*a));
                ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                accumulate(grads, *a, ga);
            }
            Op::SliceRows(a, start) => {
                let mut ga = Mat::zeros(self.shape(*a));
                ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                accumulate(grads, *a, ga);
            }
            Op::Rows(a, idx) => {
                let mut ga = Mat::zeros(self.shape(*a));
                for (k, &i) in idx.iter().enumerate() {
                    let mut row = ga.row_mut(i);
                    row += &g.row(k);
                }
                accumulate(grads, *a, ga);
            }
            Op::MeanRows(a) => {
                let (r, c) = self.shape(*a);
                let ga = Mat::from_shape_fn((r, c), |(_, j)| g[[0, j]] / r as f64);
                accumulate(grads, *a, ga);
            }
            Op::NeighborMean(a, neighbors) => {
                let mut ga = Mat::zeros(self.shape(*a));
                for (v, nb) in neighbors.iter().enumerate() {
                    let share = g.row(v).mapv(|x| x / (1 + nb.len()) as f64);
                    let mut row = ga.row_mut(v);
                    row += &share;
                    for &u in nb {
                        let mut row = ga.row_mut(u);
                        row += &share;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::PairSum(u, v) => {
                accumulate(grads, *u, g.sum_axis(Axis(1)).insert_axis(Axis(1)));
                accumulate(grads, *v, g.sum_axis(Axis(0)).insert_axis(Axis(1)));
            }
            Op::SoftmaxAll(a) => {
                let y = node.value.as_ref().expect("value");
                let inner = (g * y).sum();
                let mut ga = g.clone();
                ga.zip_mut_with(y, |gi, &yi| *gi = yi * (*gi - inner));
                accumulate(grads, *a, ga);
            }
            Op::SumAll(a) => {
                accumulate(grads, *a, Mat::from_elem(self.shape(*a), g[[0, 0]]));
            }
            Op::MeanAll(a) => {
                let (r, c) = self.shape(*a);
                accumulate(grads, *a, Mat::from_elem((r, c), g[[0, 0]] / (r * c) as f64));
            }
            Op::Square(a) => accumulate(grads, *a, self.value(*a) * g * 2.0),
            Op::BceSum(p, targets) => {
                let vp = self.value(*p);
                let up = g[[0, 0]];
                let mut gp = Mat::zeros(vp.dim());
                for ((gi, &pi), &ti) in gp.iter_mut().zip(vp.iter()).zip(targets.iter()) {
                    if pi > PROB_EPS && pi < 1.0 - PROB_EPS {
                        *gi = up * (-ti / pi + (1.0 - ti) / (1.0 - pi));
                    }
                }
                accumulate(grads, *p, gp);
            }
        }
    }

    /// Adds this tape's parameter gradients into `buffer`.
    pub fn accumulate_param_grads(&self, grads: &Grads, buffer: &mut GradBuffer) {
        for (&id, &var) in &self.param_vars {
            if let Some(g) = grads.get(var) {
                buffer.add(id, g);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Result of a reverse pass.
pub struct Grads {
    grads: Vec<Option<Mat>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Mat, f: impl Fn(&Mat) -> f64) -> Mat {
        let eps = 1e-6;
        let mut g = Mat::zeros(x.dim());
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut p = x.clone();
                p[[i, j]] += eps;
                let mut m = x.clone();
                m[[i, j]] -= eps;
                g[[i, j]] = (f(&p) - f(&m)) / (2.0 * eps);
            }
        }
        g
    }

    fn check(x: Mat, build: impl Fn(&mut Tape, Var) -> Var) {
        let f = |m: &Mat| {
            let mut t = Tape::detached();
            let v = t.constant(m.clone());
            let out = build(&mut t, v);
            t.scalar(out)
        };
        let mut t = Tape::detached();
        let v = t.constant(x.clone());
        let out = build(&mut t, v);
        let g = t.backward(out);
        let analytic = g.get(v).cloned().unwrap_or_else(|| Mat::zeros(x.dim()));
        let numeric = numeric_grad(&x, f);
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "analytic {a} vs numeric {n}");
        }
    }

    fn sample() -> Mat {
        arr2(&[[0.3, -0.7, 1.1], [0.5, 0.2, -0.4]])
    }

    #[test]
    fn elementwise_ops() {
        check(sample(), |t, x| {
            let y = t.tanh(x);
            let z = t.logistic(x);
            let w = t.mul(y, z);
            let q = t.square(w);
            let d = t.sub(q, x);
            let e = t.scale(d, 0.7);
            t.sum_all(e)
        });
    }

    #[test]
    fn matrix_ops() {
        check(sample(), |t, x| {
            let xt = t.transpose(x);
            let g = t.matmul(x, xt);
            let r = t.rows(x, &[1, 0, 1]);
            let m = t.mean_rows(r);
            let b = t.add(x, m);
            let c = t.concat_cols(&[b, x]);
            let sl = t.slice_cols(c, 1, 3);
            let cr = t.concat_rows(&[sl, x]);
            let sr = t.slice_rows(cr, 1, 2);
            let s1 = t.mean_all(sr);
            let s2 = t.sum_all(g);
            let one = t.constant(Mat::from_elem((1, 1), 0.5));
            let s3 = t.add(s1, one);
            let tot = t.add(s2, s3);
            t.scale(tot, 1.0)
        });
    }

    #[test]
    fn attention_ops() {
        check(arr2(&[[0.3], [-0.9], [0.4]]), |t, u| {
            let v = t.slice_rows(u, 0, 2);
            let p = t.pair_sum(u, v);
            let a = t.softmax_all(p);
            let sq = t.square(p);
            let l = t.logistic(sq);
            let m = t.mul(a, l);
            t.sum_all(m)
        });
    }

    #[test]
    fn neighbor_mean_and_bce() {
        let nb = Arc::new(vec![vec![1], vec![0], vec![]]);
        check(arr2(&[[0.3, 0.1], [-0.2, 0.6], [0.9, -0.5]]), move |t, x| {
            let m = t.neighbor_mean(x, nb.clone());
            let p = t.logistic(m);
            t.bce_sum(p, arr2(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
        });
    }

    #[test]
    fn params_are_referenced_and_collected() {
        let mut store = ParamStore::new();
        let w = store.add("w", arr2(&[[1.0, 2.0], [3.0, 4.0]]));
        let mut t = Tape::new(&store);
        let x = t.row_vector(&[1.0, 1.0]);
        let pw = t.param(w);
        assert_eq!(t.param(w), pw);
        let y = t.matmul(x, pw);
        let l = t.sum_all(y);
        assert_eq!(t.scalar(l), 10.0);
        let g = t.backward(l);
        let mut buf = GradBuffer::zeros_like(&store);
        t.accumulate_param_grads(&g, &mut buf);
        assert_eq!(buf.get(w), &Mat::from_elem((2, 2), 1.0));
    }
}
