//! Question, skill and answer embeddings and mean-aggregation propagation
//! over the question–skill bigraph.
//!
//! Questions and skills share one node table: rows `0..n_q` are questions
//! and rows `n_q..n_q + n_s` are skills. A question's neighbors are its
//! skills and a skill's neighbors are the questions that use it, so each
//! layer alternates between the two sides of the graph.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::QsMatrix;
use crate::params::{xavier, ParamId, ParamStore};
use crate::tape::{Activation, Tape, Var};

/// Base embeddings, randomly initialized.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub questions: ParamId,
    pub skills: ParamId,
    pub answers: ParamId,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn new<R: Rng>(store: &mut ParamStore, n_q: usize, n_s: usize, dim: usize, rng: &mut R) -> Self {
        EmbeddingTable {
            questions: store.add("emb_question", xavier(n_q, dim, rng)),
            skills: store.add("emb_skill", xavier(n_s, dim, rng)),
            answers: store.add("emb_answer", xavier(2, dim, rng)),
            dim,
        }
    }

    /// Embedding row of a 0/1 answer.
    pub fn answer(&self, tape: &mut Tape, correct: bool) -> Var {
        let table = tape.param(self.answers);
        tape.rows(table, &[usize::from(correct)])
    }
}

/// Sampled neighbor lists of the joint question/skill node table.
#[derive(Clone, Debug, PartialEq)]
pub struct BigraphNeighborhood {
    pub n_questions: usize,
    pub n_skills: usize,
    pub neighbors: Arc<Vec<Vec<usize>>>,
}

impl BigraphNeighborhood {
    /// Lists longer than `cap` are subsampled once, deterministically from `seed`.
    pub fn build(qs: &QsMatrix, cap: usize, seed: u64) -> Self {
        let (n_q, n_s) = (qs.n_questions(), qs.n_skills());
        let mut lists = vec![Vec::new(); n_q + n_s];
        for q in 0..n_q {
            for s in qs.skills_of(q) {
                lists[q].push(n_q + s);
                lists[n_q + s].push(q);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for list in &mut lists {
            if list.len() > cap {
                let mut picked: Vec<usize> = list.choose_multiple(&mut rng, cap).copied().collect();
                picked.sort_unstable();
                *list = picked;
            }
        }
        BigraphNeighborhood {
            n_questions: n_q,
            n_skills: n_s,
            neighbors: Arc::new(lists),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_questions + self.n_skills
    }
}

/// `out_v = σ(mean(in_v, in_u for sampled neighbors u) · W)`.
pub fn propagate_layer(
    tape: &mut Tape,
    nodes: Var,
    neighborhood: &BigraphNeighborhood,
    weight: Var,
    activation: Activation,
) -> Var {
    let agg = tape.neighbor_mean(nodes, neighborhood.neighbors.clone());
    let z = tape.matmul(agg, weight);
    tape.activate(z, activation)
}

/// One square weight per propagation layer.
#[derive(Clone, Debug)]
pub struct GcnLayers {
    pub weights: Vec<ParamId>,
    pub activation: Activation,
}

impl GcnLayers {
    pub fn new<R: Rng>(store: &mut ParamStore, n_layers: usize, dim: usize, activation: Activation, rng: &mut R) -> Self {
        GcnLayers {
            weights: (0..n_layers)
                .map(|l| store.add(format!("gcn_w{l}"), xavier(dim, dim, rng)))
                .collect(),
            activation,
        }
    }
}

/// Returns `(q̃, s̃)`. With zero layers the base tables come back unchanged.
pub fn aggregate_embeddings(
    tape: &mut Tape,
    table: &EmbeddingTable,
    neighborhood: &BigraphNeighborhood,
    layers: &GcnLayers,
) -> (Var, Var) {
    let q = tape.param(table.questions);
    let s = tape.param(table.skills);
    if layers.weights.is_empty() {
        return (q, s);
    }
    let mut x = tape.concat_rows(&[q, s]);
    for &w in &layers.weights {
        let w = tape.param(w);
        x = propagate_layer(tape, x, neighborhood, w, layers.activation);
    }
    let n_q = neighborhood.n_questions;
    (
        tape.slice_rows(x, 0, n_q),
        tape.slice_rows(x, n_q, neighborhood.n_skills),
    )
}
