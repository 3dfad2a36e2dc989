//! Student-state evolution, history recap and the attention-weighted
//! interaction readout, for the full model and its two ablations.
//!
//! Prediction for step `t` only sees the state after step `t - 1`: the
//! answer at `t` enters the recurrent cells after `p_t` has been formed.
//! The skills branch consumes `[q̃_t, a_t]`, the modes branch `[M_t, a_t]`,
//! and their states are concatenated (skills first) into the higher-order
//! state, which a learned affine map brings back to width `d`.
//!
//! When `mode_query` is on, the current question's mode embedding, mapped
//! to width `d`, joins the question-side set of the readout. Without it the
//! current question's mode could only influence later predictions.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionLog, InteractionRecord, QsMatrix};
use crate::embed::{aggregate_embeddings, BigraphNeighborhood, EmbeddingTable, GcnLayers};
use crate::error::{KtError, Result};
use crate::modes::{ModeAutoencoder, ModeTable};
use crate::params::{xavier, GradBuffer, ParamId, ParamStore};
use crate::skillgraph::{build_skill_graph, skill_difficulty, DifficultyVector, SkillsGraph};
use crate::tape::{Activation, Mat, Tape, Var, PROB_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Skills branch, modes branch and reconstruction objective.
    Apgkt,
    /// Skills branch only; the GIKT-style ablation.
    ApgktNoModes,
    /// Plain LSTM over question/answer embeddings with a per-question output layer.
    DktBaseline,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Apgkt => "apgkt",
            Variant::ApgktNoModes => "apgkt-no-modes",
            Variant::DktBaseline => "dkt-baseline",
        }
    }

    pub fn uses_modes(self) -> bool {
        self == Variant::Apgkt
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = KtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apgkt" => Ok(Variant::Apgkt),
            "apgkt-no-modes" => Ok(Variant::ApgktNoModes),
            "dkt-baseline" => Ok(Variant::DktBaseline),
            other => Err(KtError::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecapMode {
    Hard,
    Soft,
}

impl std::str::FromStr for RecapMode {
    type Err = KtError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(RecapMode::Hard),
            "soft" => Ok(RecapMode::Soft),
            other => Err(KtError::InvalidArgument(format!("unknown recap mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub d: usize,
    pub d_m: usize,
    pub n_layers: usize,
    pub neighbor_cap: usize,
    pub recap: RecapMode,
    pub k: usize,
    pub att_bound: f64,
    pub gcn_activation: Activation,
    pub encoder_activation: Activation,
    pub decoder_activation: Activation,
    pub mode_query: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Apgkt,
            d: 100,
            d_m: 100,
            n_layers: 2,
            neighbor_cap: 10,
            recap: RecapMode::Soft,
            k: 5,
            att_bound: 0.5,
            gcn_activation: Activation::Tanh,
            encoder_activation: Activation::Tanh,
            decoder_activation: Activation::Tanh,
            mode_query: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_m == 0 {
            return Err(KtError::InvalidArgument("embedding sizes must be positive".into()));
        }
        if self.neighbor_cap == 0 {
            return Err(KtError::InvalidArgument("neighbor_cap must be positive".into()));
        }
        if !self.att_bound.is_finite() {
            return Err(KtError::InvalidArgument("att_bound must be finite".into()));
        }
        Ok(())
    }
}

/// Everything the model derives from the data before training: the skills
/// graph, training-split difficulty, mode vectors and the bigraph.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    pub question_skills: Vec<Vec<usize>>,
    pub graph: SkillsGraph,
    pub difficulty: DifficultyVector,
    pub modes: ModeTable,
    pub mode_matrix: Mat,
    pub neighborhood: BigraphNeighborhood,
}

impl GraphInputs {
    pub fn prepare(qs: &QsMatrix, train: &InteractionLog, neighbor_cap: usize, seed: u64) -> Result<Self> {
        let graph = build_skill_graph(qs);
        let difficulty = skill_difficulty(train, qs);
        let modes = ModeTable::build(qs, &graph, &difficulty)?;
        let mode_matrix = modes.matrix();
        Ok(GraphInputs {
            question_skills: qs.skill_sets(),
            graph,
            difficulty,
            modes,
            mode_matrix,
            neighborhood: BigraphNeighborhood::build(qs, neighbor_cap, seed),
        })
    }

    pub fn n_questions(&self) -> usize {
        self.question_skills.len()
    }

    pub fn n_skills(&self) -> usize {
        self.graph.n_skills()
    }
}

/// LSTM cell with fused gate weights `[input + hidden, 4 · hidden]`,
/// gate order input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut b = Mat::zeros((1, 4 * hidden));
        b.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        LstmCell {
            w: store.add(format!("{name}_w"), xavier(input + hidden, 4 * hidden, rng)),
            b: store.add(format!("{name}_b"), b),
            hidden,
        }
    }

    pub fn step(&self, tape: &mut Tape, x: Var, h: Var, c: Var) -> (Var, Var) {
        let n = self.hidden;
        let xh = tape.concat_cols(&[x, h]);
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        let z = tape.matmul(xh, w);
        let z = tape.add(z, b);
        let zi = tape.slice_cols(z, 0, n);
        let zf = tape.slice_cols(z, n, n);
        let zg = tape.slice_cols(z, 2 * n, n);
        let zo = tape.slice_cols(z, 3 * n, n);
        let i = tape.logistic(zi);
        let f = tape.logistic(zf);
        let g = tape.tanh(zg);
        let o = tape.logistic(zo);
        let keep = tape.mul(f, c);
        let write = tape.mul(i, g);
        let c_next = tape.add(keep, write);
        let tc = tape.tanh(c_next);
        (tape.mul(o, tc), c_next)
    }
}

/// Recurrent state on a tape.
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub h: Var,
    pub c: Var,
    pub big_h: Var,
    pub c_mode: Var,
    pub hoc: Var,
    pub hoc_proj: Var,
}

/// Plain values of a [`StateVars`].
#[derive(Clone, Debug, PartialEq)]
pub struct StudentState {
    pub h: Vec<f64>,
    pub big_h: Vec<f64>,
    pub hoc: Vec<f64>,
    pub hoc_proj: Vec<f64>,
}

impl StudentState {
    pub fn read(tape: &Tape, vars: &StateVars) -> Self {
        let row = |v: Var| tape.value(v).iter().copied().collect();
        StudentState {
            h: row(vars.h),
            big_h: row(vars.big_h),
            hoc: row(vars.hoc),
            hoc_proj: row(vars.hoc_proj),
        }
    }
}

/// `[h, H]`, skills state first.
pub fn higher_order_state(h: &[f64], big_h: &[f64]) -> Result<Vec<f64>> {
    if h.len() != big_h.len() {
        return Err(KtError::Shape(format!(
            "state halves differ in length: {} vs {}",
            h.len(),
            big_h.len()
        )));
    }
    Ok(h.iter().chain(big_h).copied().collect())
}

/// Timesteps selected for the readout, ascending.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RecapSet {
    pub timesteps: Vec<usize>,
}

impl RecapSet {
    pub fn len(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timesteps.is_empty()
    }
}

/// Selects past steps relevant to `current`.
///
/// `history[i]` is the question answered at timestep `i`. Hard selection
/// keeps every step whose question has exactly the current skill set. Soft
/// selection ranks steps by the inner product of aggregated question
/// embeddings (`q_tilde` rows), keeps those at or above `att_bound` and
/// returns at most `k`, preferring more recent steps on equal similarity.
pub fn recap_history(
    current: usize,
    history: &[usize],
    question_skills: &[Vec<usize>],
    q_tilde: &Mat,
    mode: RecapMode,
    k: usize,
    att_bound: f64,
) -> RecapSet {
    let timesteps = match mode {
        RecapMode::Hard => {
            let target = &question_skills[current];
            history
                .iter()
                .enumerate()
                .filter(|(_, &q)| &question_skills[q] == target)
                .map(|(t, _)| t)
                .collect()
        }
        RecapMode::Soft => {
            let cur = q_tilde.row(current);
            let mut scored: Vec<(f64, usize)> = history
                .iter()
                .enumerate()
                .map(|(t, &q)| (q_tilde.row(q).dot(&cur), t))
                .filter(|(sim, _)| *sim >= att_bound)
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
            let mut picked: Vec<usize> = scored.into_iter().take(k).map(|(_, t)| t).collect();
            picked.sort_unstable();
            picked
        }
    };
    RecapSet { timesteps }
}

/// Readout weights: `W = [w_state; w_query]` and scalar bias.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionValues {
    pub w_state: Vec<f64>,
    pub w_query: Vec<f64>,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub p: f64,
    /// `[|f_i| × |f_j|]`, sums to 1.
    pub alpha: Mat,
}

/// Attention readout on a tape. Rows of `fi` are state-side members, rows
/// of `fj` question-side members. Returns `(p, alpha)`.
pub fn attention_readout(tape: &mut Tape, fi: Var, fj: Var, w_state: Var, w_query: Var, b: Var) -> (Var, Var) {
    let u = tape.matmul(fi, w_state);
    let v = tape.matmul(fj, w_query);
    let scores = tape.pair_sum(u, v);
    let scores = tape.add(scores, b);
    let alpha = tape.softmax_all(scores);
    let fjt = tape.transpose(fj);
    let g = tape.matmul(fi, fjt);
    let sg = tape.logistic(g);
    let weighted = tape.mul(alpha, sg);
    (tape.sum_all(weighted), alpha)
}

/// `p = Σ α_ij · logistic(⟨f_i, f_j⟩)` with `α = softmax(W·[f_i, f_j] + b)`
/// over the full cross product.
pub fn interaction_predict(fi: &Mat, fj: &Mat, att: &AttentionValues) -> Result<Prediction> {
    let d = att.w_state.len();
    if fi.nrows() == 0 || fj.nrows() == 0 {
        return Err(KtError::InvalidArgument("readout sets must be non-empty".into()));
    }
    if fi.ncols() != d || fj.ncols() != d || att.w_query.len() != d {
        return Err(KtError::Shape("readout members and weights must share width".into()));
    }
    let mut tape = Tape::detached();
    let vi = tape.constant(fi.clone());
    let vj = tape.constant(fj.clone());
    let wi = tape.constant(Mat::from_shape_vec((d, 1), att.w_state.clone()).expect("shape"));
    let wj = tape.constant(Mat::from_shape_vec((d, 1), att.w_query.clone()).expect("shape"));
    let b = tape.constant(Mat::from_elem((1, 1), att.b));
    let (p, alpha) = attention_readout(&mut tape, vi, vj, wi, wj, b);
    Ok(Prediction {
        p: tape.scalar(p),
        alpha: tape.value(alpha).clone(),
    })
}

/// `-Σ (a log p + (1 - a) log(1 - p))` with `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(predictions: &[f64], answers: &[bool]) -> Result<f64> {
    if predictions.len() != answers.len() {
        return Err(KtError::Shape(format!(
            "{} predictions for {} answers",
            predictions.len(),
            answers.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(answers)
        .map(|(&p, &a)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if a {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum())
}

pub fn total_loss(bce: f64, reloss: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(KtError::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(bce + lambda * reloss)
}

#[derive(Clone, Debug)]
struct GraphLayout {
    table: EmbeddingTable,
    gcn: GcnLayers,
    autoencoder: Option<ModeAutoencoder>,
    cell_skill: LstmCell,
    cell_mode: Option<LstmCell>,
    proj_w: ParamId,
    proj_b: ParamId,
    mode_query: Option<ParamId>,
    att_w_state: ParamId,
    att_w_query: ParamId,
    att_b: ParamId,
}

#[derive(Clone, Debug)]
struct DktLayout {
    emb_question: ParamId,
    emb_answer: ParamId,
    cell: LstmCell,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Clone, Debug)]
enum Layout {
    Graph(Box<GraphLayout>),
    Dkt(DktLayout),
}

/// Shared-stage outputs on a tape.
#[derive(Clone, Copy, Debug, Default)]
pub struct SharedStage {
    pub q_tilde: Option<Var>,
    pub s_tilde: Option<Var>,
    pub modes: Option<Var>,
    pub reloss: Option<Var>,
}

/// Shared-stage values, computed once per batch and read by every sequence.
#[derive(Clone, Debug, Default)]
pub struct SharedValues {
    pub q_tilde: Mat,
    pub s_tilde: Mat,
    pub modes: Mat,
    pub reloss: f64,
}

#[derive(Default)]
struct RowLeaves {
    q: BTreeMap<usize, Var>,
    s: BTreeMap<usize, Var>,
    m: BTreeMap<usize, Var>,
}

fn row_leaf(tape: &mut Tape, cache: &mut BTreeMap<usize, Var>, table: &Mat, idx: usize) -> Var {
    *cache
        .entry(idx)
        .or_insert_with(|| tape.constant(table.row(idx).to_owned().insert_axis(Axis(0))))
}

fn scatter_rows(tape_grads: &crate::tape::Grads, cache: &BTreeMap<usize, Var>, into: &mut Mat) {
    for (&idx, &var) in cache {
        if let Some(g) = tape_grads.get(var) {
            let mut row = into.row_mut(idx);
            row += &g.row(0);
        }
    }
}

/// Loss components of one batch. `bce` is the mean per interaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub bce: f64,
    pub reloss: f64,
    pub total: f64,
    pub n_interactions: usize,
}

/// A trainable knowledge-tracing model of any [`Variant`].
#[derive(Clone, Debug)]
pub struct KtModel {
    config: ModelConfig,
    inputs: Arc<GraphInputs>,
    pub store: ParamStore,
    layout: Layout,
}

impl KtModel {
    pub fn new(config: ModelConfig, inputs: Arc<GraphInputs>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (n_q, n_s, d) = (inputs.n_questions(), inputs.n_skills(), config.d);
        let layout = match config.variant {
            Variant::DktBaseline => Layout::Dkt(DktLayout {
                emb_question: store.add("emb_question", xavier(n_q, d, &mut rng)),
                emb_answer: store.add("emb_answer", xavier(2, d, &mut rng)),
                cell: LstmCell::new(&mut store, "cell_skill", 2 * d, d, &mut rng),
                out_w: store.add("out_w", xavier(n_q, d, &mut rng)),
                out_b: store.add("out_b", Mat::zeros((n_q, 1))),
            }),
            variant => {
                let table = EmbeddingTable::new(&mut store, n_q, n_s, d, &mut rng);
                let gcn = GcnLayers::new(&mut store, config.n_layers, d, config.gcn_activation, &mut rng);
                let cell_skill = LstmCell::new(&mut store, "cell_skill", 2 * d, d, &mut rng);
                let proj_w = store.add("proj_w", xavier(2 * d, d, &mut rng));
                let proj_b = store.add("proj_b", Mat::zeros((1, d)));
                let att_w_state = store.add("att_w_state", xavier(d, 1, &mut rng));
                let att_w_query = store.add("att_w_query", xavier(d, 1, &mut rng));
                let att_b = store.add("att_b", Mat::zeros((1, 1)));
                let (autoencoder, cell_mode, mode_query) = if variant.uses_modes() {
                    let ae = ModeAutoencoder::new(
                        &mut store,
                        inputs.modes.width(),
                        config.d_m,
                        config.encoder_activation,
                        config.decoder_activation,
                        &mut rng,
                    );
                    let cell = LstmCell::new(&mut store, "cell_mode", config.d_m + d, d, &mut rng);
                    let mq = config
                        .mode_query
                        .then(|| store.add("mode_query_w", xavier(config.d_m, d, &mut rng)));
                    (Some(ae), Some(cell), mq)
                } else {
                    (None, None, None)
                };
                Layout::Graph(Box::new(GraphLayout {
                    table,
                    gcn,
                    autoencoder,
                    cell_skill,
                    cell_mode,
                    proj_w,
                    proj_b,
                    mode_query,
                    att_w_state,
                    att_w_query,
                    att_b,
                }))
            }
        };
        Ok(KtModel {
            config,
            inputs,
            store,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn inputs(&self) -> &GraphInputs {
        &self.inputs
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    /// Question/skill aggregation and mode encoding, shared by all students.
    pub fn shared_forward(&self, tape: &mut Tape) -> SharedStage {
        let Layout::Graph(g) = &self.layout else {
            return SharedStage::default();
        };
        let (q, s) = aggregate_embeddings(tape, &g.table, &self.inputs.neighborhood, &g.gcn);
        let (modes, reloss) = match &g.autoencoder {
            Some(ae) => {
                let x = tape.constant(self.inputs.mode_matrix.clone());
                let (m, r) = ae.forward(tape, x);
                (Some(m), Some(r))
            }
            None => (None, None),
        };
        SharedStage {
            q_tilde: Some(q),
            s_tilde: Some(s),
            modes,
            reloss,
        }
    }

    pub fn shared_values(&self) -> SharedValues {
        let mut tape = Tape::new(&self.store);
        let stage = self.shared_forward(&mut tape);
        read_shared(&tape, &stage)
    }

    /// Fresh state before any answer.
    pub fn initial_state(&self, tape: &mut Tape) -> StateVars {
        let d = self.config.d;
        let h = tape.zeros(1, d);
        let c = tape.zeros(1, d);
        let big_h = tape.zeros(1, d);
        let c_mode = tape.zeros(1, d);
        let hoc = tape.concat_cols(&[h, big_h]);
        let hoc_proj = self.project(tape, hoc);
        StateVars {
            h,
            c,
            big_h,
            c_mode,
            hoc,
            hoc_proj,
        }
    }

    fn project(&self, tape: &mut Tape, hoc: Var) -> Var {
        match &self.layout {
            Layout::Graph(g) => {
                let (w, b) = (tape.param(g.proj_w), tape.param(g.proj_b));
                let z = tape.matmul(hoc, w);
                tape.add(z, b)
            }
            Layout::Dkt(_) => hoc,
        }
    }

    /// Advances both branches by one answered question. `mode` is ignored
    /// by variants without a modes branch.
    pub fn step_state(&self, tape: &mut Tape, prev: &StateVars, q_tilde: Var, mode: Option<Var>, correct: bool) -> StateVars {
        let Layout::Graph(g) = &self.layout else {
            panic!("step_state is defined for the graph variants");
        };
        let a = g.table.answer(tape, correct);
        let x = tape.concat_cols(&[q_tilde, a]);
        let (h, c) = g.cell_skill.step(tape, x, prev.h, prev.c);
        let (big_h, c_mode) = match (&g.cell_mode, mode) {
            (Some(cell), Some(m)) => {
                let xm = tape.concat_cols(&[m, a]);
                cell.step(tape, xm, prev.big_h, prev.c_mode)
            }
            _ => (prev.big_h, prev.c_mode),
        };
        let hoc = tape.concat_cols(&[h, big_h]);
        let hoc_proj = self.project(tape, hoc);
        StateVars {
            h,
            c,
            big_h,
            c_mode,
            hoc,
            hoc_proj,
        }
    }

    pub fn attention_values(&self) -> Option<AttentionValues> {
        let Layout::Graph(g) = &self.layout else { return None };
        Some(AttentionValues {
            w_state: self.store.get(g.att_w_state).iter().copied().collect(),
            w_query: self.store.get(g.att_w_query).iter().copied().collect(),
            b: self.store.get(g.att_b)[[0, 0]],
        })
    }

    fn sequence_forward(
        &self,
        tape: &mut Tape,
        shared: &SharedValues,
        records: &[InteractionRecord],
        leaves: &mut RowLeaves,
    ) -> Vec<Var> {
        match &self.layout {
            Layout::Graph(g) => self.graph_sequence(g, tape, shared, records, leaves),
            Layout::Dkt(l) => dkt_sequence(l, tape, records),
        }
    }

    fn graph_sequence(
        &self,
        g: &GraphLayout,
        tape: &mut Tape,
        shared: &SharedValues,
        records: &[InteractionRecord],
        leaves: &mut RowLeaves,
    ) -> Vec<Var> {
        let n_q = self.inputs.n_questions();
        let mut state = self.initial_state(tape);
        let mut asked: Vec<usize> = Vec::with_capacity(records.len());
        let mut past_states: Vec<Var> = Vec::with_capacity(records.len());
        let mut preds = Vec::with_capacity(records.len());
        let (wi, wj, b) = (tape.param(g.att_w_state), tape.param(g.att_w_query), tape.param(g.att_b));
        for rec in records {
            let q = rec.question;
            let q_row = row_leaf(tape, &mut leaves.q, &shared.q_tilde, q);
            let m_row = g
                .autoencoder
                .as_ref()
                .map(|_| row_leaf(tape, &mut leaves.m, &shared.modes, q));

            let recap = recap_history(
                q,
                &asked,
                &self.inputs.question_skills,
                &shared.q_tilde,
                self.config.recap,
                self.config.k,
                self.config.att_bound,
            );
            let mut fi_parts: Vec<Var> = recap.timesteps.iter().map(|&t| past_states[t]).collect();
            fi_parts.push(state.hoc_proj);
            let fi = tape.concat_rows(&fi_parts);

            let mut fj_parts: Vec<Var> = self.inputs.question_skills[q]
                .iter()
                .map(|&s| row_leaf(tape, &mut leaves.s, &shared.s_tilde, s))
                .collect();
            fj_parts.push(q_row);
            if let (Some(mq), Some(m)) = (g.mode_query, m_row) {
                let w = tape.param(mq);
                fj_parts.push(tape.matmul(m, w));
            }
            let fj = tape.concat_rows(&fj_parts);
            let (p, _) = attention_readout(tape, fi, fj, wi, wj, b);
            preds.push(p);

            state = self.step_state(tape, &state, q_row, m_row, rec.correct);
            asked.push(q);
            past_states.push(state.hoc_proj);
            debug_assert!(q < n_q);
        }
        preds
    }

    /// Teacher-forced predictions for one sequence.
    pub fn predict_sequence(&self, shared: &SharedValues, records: &[InteractionRecord]) -> Vec<f64> {
        let mut tape = Tape::new(&self.store);
        let mut leaves = RowLeaves::default();
        let preds = self.sequence_forward(&mut tape, shared, records, &mut leaves);
        preds.into_iter().map(|p| tape.scalar(p)).collect()
    }

    /// Pooled `(scores, labels)` over every interaction of a log.
    pub fn predict_log(&self, log: &InteractionLog) -> (Vec<f64>, Vec<bool>) {
        let shared = self.shared_values();
        let mut scores = Vec::with_capacity(log.n_interactions());
        let mut labels = Vec::with_capacity(log.n_interactions());
        for seq in log.sequences() {
            scores.extend(self.predict_sequence(&shared, &seq.records));
            labels.extend(seq.records.iter().map(|r| r.correct));
        }
        (scores, labels)
    }

    /// Forward pass only.
    pub fn batch_loss(&self, batch: &[&[InteractionRecord]], lambda: f64) -> BatchLoss {
        let shared = self.shared_values();
        let n: usize = batch.iter().map(|s| s.len()).sum();
        let mut bce = 0.0;
        for seq in batch {
            let preds = self.predict_sequence(&shared, seq);
            let answers: Vec<bool> = seq.iter().map(|r| r.correct).collect();
            bce += bce_loss(&preds, &answers).expect("equal lengths");
        }
        self.finish_loss(bce, n, shared.reloss, lambda)
    }

    fn finish_loss(&self, bce_sum: f64, n: usize, reloss: f64, lambda: f64) -> BatchLoss {
        let bce = if n == 0 { 0.0 } else { bce_sum / n as f64 };
        BatchLoss {
            bce,
            reloss,
            total: bce + lambda * reloss,
            n_interactions: n,
        }
    }

    /// Loss `mean BCE + λ · reloss` and its gradient for every parameter.
    pub fn batch_gradients(&self, batch: &[&[InteractionRecord]], lambda: f64) -> (BatchLoss, GradBuffer) {
        let mut buf = GradBuffer::zeros_like(&self.store);
        let mut shared_tape = Tape::new(&self.store);
        let stage = self.shared_forward(&mut shared_tape);
        let shared = read_shared(&shared_tape, &stage);
        let n: usize = batch.iter().map(|s| s.len()).sum();
        let inv_n = if n == 0 { 0.0 } else { 1.0 / n as f64 };

        let mut q_grad = Mat::zeros(shared.q_tilde.dim());
        let mut s_grad = Mat::zeros(shared.s_tilde.dim());
        let mut m_grad = Mat::zeros(shared.modes.dim());
        let mut bce_sum = 0.0;
        for seq in batch.iter().filter(|s| !s.is_empty()) {
            let mut tape = Tape::new(&self.store);
            let mut leaves = RowLeaves::default();
            let preds = self.sequence_forward(&mut tape, &shared, seq, &mut leaves);
            let p = tape.concat_cols(&preds);
            let targets = Mat::from_shape_fn((1, seq.len()), |(_, t)| f64::from(u8::from(seq[t].correct)));
            let loss = tape.bce_sum(p, targets);
            bce_sum += tape.scalar(loss);
            let scaled = tape.scale(loss, inv_n);
            let grads = tape.backward(scaled);
            tape.accumulate_param_grads(&grads, &mut buf);
            scatter_rows(&grads, &leaves.q, &mut q_grad);
            scatter_rows(&grads, &leaves.s, &mut s_grad);
            scatter_rows(&grads, &leaves.m, &mut m_grad);
        }

        let mut seeds = Vec::new();
        if let Some(v) = stage.q_tilde {
            seeds.push((v, q_grad));
        }
        if let Some(v) = stage.s_tilde {
            seeds.push((v, s_grad));
        }
        if let Some(v) = stage.modes {
            seeds.push((v, m_grad));
        }
        if let Some(v) = stage.reloss {
            seeds.push((v, Mat::from_elem((1, 1), lambda)));
        }
        if !seeds.is_empty() {
            let grads = shared_tape.backward_seeded(seeds);
            shared_tape.accumulate_param_grads(&grads, &mut buf);
        }
        (self.finish_loss(bce_sum, n, shared.reloss, lambda), buf)
    }
}

fn read_shared(tape: &Tape, stage: &SharedStage) -> SharedValues {
    let get = |v: Option<Var>| v.map(|v| tape.value(v).clone()).unwrap_or_else(|| Mat::zeros((0, 0)));
    SharedValues {
        q_tilde: get(stage.q_tilde),
        s_tilde: get(stage.s_tilde),
        modes: get(stage.modes),
        reloss: stage.reloss.map(|v| tape.scalar(v)).unwrap_or(0.0),
    }
}

fn dkt_sequence(l: &DktLayout, tape: &mut Tape, records: &[InteractionRecord]) -> Vec<Var> {
    let d = l.cell.hidden;
    let mut h = tape.zeros(1, d);
    let mut c = tape.zeros(1, d);
    let (eq, ea, ow, ob) = (
        tape.param(l.emb_question),
        tape.param(l.emb_answer),
        tape.param(l.out_w),
        tape.param(l.out_b),
    );
    let mut preds = Vec::with_capacity(records.len());
    for rec in records {
        let q = rec.question;
        let w = tape.rows(ow, &[q]);
        let wt = tape.transpose(w);
        let logit = tape.matmul(h, wt);
        let bias = tape.rows(ob, &[q]);
        let logit = tape.add(logit, bias);
        preds.push(tape.logistic(logit));
        let xq = tape.rows(eq, &[q]);
        let xa = tape.rows(ea, &[usize::from(rec.correct)]);
        let x = tape.concat_cols(&[xq, xa]);
        (h, c) = l.cell.step(tape, x, h, c);
    }
    preds
}
