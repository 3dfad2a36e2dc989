//! Parameter storage, gradient buffers, initialization and the Adam optimizer.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KtError, Result};

type Mat = Array2<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named, dense parameter matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamStore {
    pub const fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Mat::len).sum()
    }

    pub fn snapshot(&self) -> Vec<NamedMatrix> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(name, m)| NamedMatrix {
                name: name.clone(),
                rows: m.nrows(),
                cols: m.ncols(),
                data: m.iter().copied().collect(),
            })
            .collect()
    }

    /// Overwrites values from a snapshot; names and shapes must match.
    pub fn restore(&mut self, snapshot: &[NamedMatrix]) -> Result<()> {
        if snapshot.len() != self.values.len() {
            return Err(KtError::Shape(format!(
                "snapshot has {} parameters, model has {}",
                snapshot.len(),
                self.values.len()
            )));
        }
        for (i, nm) in snapshot.iter().enumerate() {
            if nm.name != self.names[i] || (nm.rows, nm.cols) != self.values[i].dim() {
                return Err(KtError::Shape(format!(
                    "parameter {} ({}x{}) does not match {} {:?}",
                    nm.name,
                    nm.rows,
                    nm.cols,
                    self.names[i],
                    self.values[i].dim()
                )));
            }
            self.values[i] = Mat::from_shape_vec((nm.rows, nm.cols), nm.data.clone())
                .map_err(|e| KtError::Shape(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMatrix {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// One gradient matrix per parameter.
#[derive(Clone, Debug)]
pub struct GradBuffer(Vec<Mat>);

impl GradBuffer {
    pub fn zeros_like(store: &ParamStore) -> Self {
        GradBuffer(store.values.iter().map(|m| Mat::zeros(m.dim())).collect())
    }

    pub fn add(&mut self, id: ParamId, g: &Mat) {
        self.0[id.0] += g;
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.0[id.0]
    }

    pub fn merge(&mut self, other: &GradBuffer) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Uniform Glorot initialization.
pub fn xavier<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rows, cols, bound, rng)
}

pub fn uniform<R: Rng>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Mat {
    Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..=bound))
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: i32,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Mat> = store.values.iter().map(|m| Mat::zeros(m.dim())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &GradBuffer) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (i, value) in store.values.iter_mut().enumerate() {
            let g = &grads.0[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            ndarray::Zip::from(value)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}
