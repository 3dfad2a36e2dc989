//! Skill modes: the difficulty-ordered skills-graph submatrix of a question,
//! flattened and zero-padded to a fixed width, plus the autoencoder that
//! compresses it into a dense embedding.
//!
//! Reconstruction is measured against the *decoded* embedding, so the
//! autoencoder carries an explicit decoder. Comparing the embedding with the
//! raw mode vector directly would mix two spaces of different widths.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Axis;
use rand::Rng;

use crate::corpus::QsMatrix;
use crate::error::{KtError, Result};
use crate::params::{xavier, ParamId, ParamStore};
use crate::skillgraph::{DifficultyVector, SkillsGraph};
use crate::tape::{Activation, Mat, Tape, Var};

/// Sorts a skill set by difficulty (ascending), breaking ties by index.
pub fn difficulty_order(sset: &[usize], diff: &DifficultyVector) -> Result<Vec<usize>> {
    if sset.is_empty() {
        return Err(KtError::InvalidArgument("empty skill set".into()));
    }
    let mut idx = sset.to_vec();
    idx.sort_by(|&a, &b| diff.get(a).total_cmp(&diff.get(b)).then(a.cmp(&b)));
    Ok(idx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeVector {
    /// Row-major `SS[idx × idx]`, zero-padded to `h_max²`.
    pub m: Vec<f64>,
    pub h: usize,
    pub idx: Vec<usize>,
}

pub fn extract_mode_vector(ss: &SkillsGraph, idx: &[usize], h_max: usize) -> Result<ModeVector> {
    let h = idx.len();
    if h > h_max {
        return Err(KtError::InvalidArgument(format!(
            "skill path of length {h} exceeds H_max = {h_max}"
        )));
    }
    if let Some(&bad) = idx.iter().find(|&&s| s >= ss.n_skills()) {
        return Err(KtError::InvalidArgument(format!("skill {bad} out of range")));
    }
    let mut m = vec![0.0; h_max * h_max];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            m[r * h + c] = ss.ss[[i, j]];
        }
    }
    Ok(ModeVector {
        m,
        h,
        idx: idx.to_vec(),
    })
}

/// Mode vectors for every question.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeTable {
    pub h_max: usize,
    pub vectors: Vec<ModeVector>,
}

impl ModeTable {
    pub fn build(qs: &QsMatrix, graph: &SkillsGraph, diff: &DifficultyVector) -> Result<Self> {
        let skill_sets = qs.skill_sets();
        let h_max = skill_sets.iter().map(Vec::len).max().unwrap_or(0);
        let vectors = skill_sets
            .iter()
            .map(|sset| extract_mode_vector(graph, &difficulty_order(sset, diff)?, h_max))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModeTable { h_max, vectors })
    }

    pub fn width(&self) -> usize {
        self.h_max * self.h_max
    }

    /// `[n_q × h_max²]`, one mode vector per row.
    pub fn matrix(&self) -> Mat {
        let w = self.width();
        let mut out = Mat::zeros((self.vectors.len(), w));
        for (q, mv) in self.vectors.iter().enumerate() {
            out.row_mut(q)
                .iter_mut()
                .zip(&mv.m)
                .for_each(|(o, &v)| *o = v);
        }
        out
    }

    /// `question_id,h,m_0..m_{H²-1}` rows.
    pub fn write_csv(&self, question_ids: &[String], path: &Path) -> Result<()> {
        let mut out = String::from("question_id,h");
        for i in 0..self.width() {
            let _ = write!(out, ",m_{i}");
        }
        out.push('\n');
        for (q, mv) in self.vectors.iter().enumerate() {
            let _ = write!(out, "{},{}", question_ids[q], mv.h);
            for v in &mv.m {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| KtError::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeEmbedding(pub Vec<f64>);

/// Plain-value autoencoder weights. Matrices are stored input-major
/// (`enc_w` is `[h_max² × d_m]`) so that row vectors multiply on the left.
#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderParams {
    pub enc_w: Mat,
    pub enc_b: Vec<f64>,
    pub dec_w: Mat,
    pub dec_b: Vec<f64>,
    pub encoder_activation: Activation,
    pub decoder_activation: Activation,
}

impl AutoencoderParams {
    pub fn zeros(width: usize, d_m: usize) -> Self {
        AutoencoderParams {
            enc_w: Mat::zeros((width, d_m)),
            enc_b: vec![0.0; d_m],
            dec_w: Mat::zeros((d_m, width)),
            dec_b: vec![0.0; width],
            encoder_activation: Activation::Tanh,
            decoder_activation: Activation::Tanh,
        }
    }

    pub fn input_width(&self) -> usize {
        self.enc_w.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.enc_w.ncols()
    }
}

fn affine(x: &[f64], w: &Mat, b: &[f64], act: Activation) -> Vec<f64> {
    (0..w.ncols())
        .map(|j| {
            let z: f64 = x.iter().zip(w.column(j)).map(|(a, b)| a * b).sum::<f64>() + b[j];
            act.apply(z)
        })
        .collect()
}

/// `M = σ(W_M m + b_M)`.
pub fn encode_mode(m: &ModeVector, p: &AutoencoderParams) -> Result<ModeEmbedding> {
    if m.m.len() != p.input_width() || p.enc_b.len() != p.embedding_dim() {
        return Err(KtError::Shape(format!(
            "mode vector of width {} vs encoder input {}",
            m.m.len(),
            p.input_width()
        )));
    }
    Ok(ModeEmbedding(affine(&m.m, &p.enc_w, &p.enc_b, p.encoder_activation)))
}

/// `m̂ = σ(W_D M + b_D)`.
pub fn decode_mode(emb: &ModeEmbedding, p: &AutoencoderParams) -> Result<Vec<f64>> {
    if emb.0.len() != p.dec_w.nrows() || p.dec_b.len() != p.dec_w.ncols() {
        return Err(KtError::Shape(format!(
            "embedding of width {} vs decoder input {}",
            emb.0.len(),
            p.dec_w.nrows()
        )));
    }
    Ok(affine(&emb.0, &p.dec_w, &p.dec_b, p.decoder_activation))
}

/// Mean over the batch of each pair's mean squared error.
pub fn reconstruction_loss(batch: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(KtError::InvalidArgument("empty reconstruction batch".into()));
    }
    let mut total = 0.0;
    for (m, m_hat) in batch {
        if m.len() != m_hat.len() || m.is_empty() {
            return Err(KtError::Shape(format!(
                "reconstruction pair of lengths {} and {}",
                m.len(),
                m_hat.len()
            )));
        }
        let se: f64 = m.iter().zip(m_hat).map(|(a, b)| (a - b) * (a - b)).sum();
        total += se / m.len() as f64;
    }
    Ok(total / batch.len() as f64)
}

/// Trainable autoencoder whose weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ModeAutoencoder {
    pub enc_w: ParamId,
    pub enc_b: ParamId,
    pub dec_w: ParamId,
    pub dec_b: ParamId,
    pub encoder_activation: Activation,
    pub decoder_activation: Activation,
}

impl ModeAutoencoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        width: usize,
        d_m: usize,
        encoder_activation: Activation,
        decoder_activation: Activation,
        rng: &mut R,
    ) -> Self {
        ModeAutoencoder {
            enc_w: store.add("mode_enc_w", xavier(width, d_m, rng)),
            enc_b: store.add("mode_enc_b", Mat::zeros((1, d_m))),
            dec_w: store.add("mode_dec_w", xavier(d_m, width, rng)),
            dec_b: store.add("mode_dec_b", Mat::zeros((1, width))),
            encoder_activation,
            decoder_activation,
        }
    }

    /// Rows of `x` are mode vectors; returns the embeddings row-wise.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Var {
        let (w, b) = (tape.param(self.enc_w), tape.param(self.enc_b));
        let z = tape.matmul(x, w);
        let z = tape.add(z, b);
        tape.activate(z, self.encoder_activation)
    }

    pub fn decode(&self, tape: &mut Tape, emb: Var) -> Var {
        let (w, b) = (tape.param(self.dec_w), tape.param(self.dec_b));
        let z = tape.matmul(emb, w);
        let z = tape.add(z, b);
        tape.activate(z, self.decoder_activation)
    }

    /// Returns `(embeddings, reconstruction loss)` for a batch of mode rows.
    pub fn forward(&self, tape: &mut Tape, x: Var) -> (Var, Var) {
        let emb = self.encode(tape, x);
        let recon = self.decode(tape, emb);
        let diff = tape.sub(recon, x);
        let sq = tape.square(diff);
        (emb, tape.mean_all(sq))
    }

    pub fn values(&self, store: &ParamStore) -> AutoencoderParams {
        AutoencoderParams {
            enc_w: store.get(self.enc_w).clone(),
            enc_b: store.get(self.enc_b).index_axis(Axis(0), 0).to_vec(),
            dec_w: store.get(self.dec_w).clone(),
            dec_b: store.get(self.dec_b).index_axis(Axis(0), 0).to_vec(),
            encoder_activation: self.encoder_activation,
            decoder_activation: self.decoder_activation,
        }
    }
}
