//! Frequency-based skills graph and per-skill difficulty.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::corpus::{InteractionLog, QsMatrix};
use crate::error::{KtError, Result};

/// Difficulty assigned to skills that never appear in the training answers.
pub const UNATTEMPTED_DIFFICULTY: f64 = 0.5;

/// Row-normalized skill co-occurrence graph.
///
/// `ss[i][j]` is the share of skill `i`'s co-occurrences that are with skill
/// `j`. Rows are independent, so `ss` is generally asymmetric. The diagonal
/// is zero and rows of skills that never share a question stay all-zero.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillsGraph {
    pub ss: Array2<f64>,
    pub cooccurrence: Array2<u64>,
}

impl SkillsGraph {
    pub fn n_skills(&self) -> usize {
        self.ss.nrows()
    }
}

pub fn build_skill_graph(qs: &QsMatrix) -> SkillsGraph {
    let n_s = qs.n_skills();
    let mut counts = Array2::<u64>::zeros((n_s, n_s));
    for q in 0..qs.n_questions() {
        let skills = qs.skills_of(q);
        for &i in &skills {
            for &j in &skills {
                if i != j {
                    counts[[i, j]] += 1;
                }
            }
        }
    }
    let mut ss = Array2::<f64>::zeros((n_s, n_s));
    for i in 0..n_s {
        let total: u64 = counts.row(i).sum();
        if total > 0 {
            for j in 0..n_s {
                ss[[i, j]] = counts[[i, j]] as f64 / total as f64;
            }
        }
    }
    SkillsGraph {
        ss,
        cooccurrence: counts,
    }
}

/// Wrong-answer rate per skill over the given (training) log.
#[derive(Clone, Debug, PartialEq)]
pub struct DifficultyVector(pub Vec<f64>);

impl DifficultyVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, skill: usize) -> f64 {
        self.0[skill]
    }
}

pub fn skill_difficulty(train_log: &InteractionLog, qs: &QsMatrix) -> DifficultyVector {
    let n_s = qs.n_skills();
    let mut wrong = vec![0u64; n_s];
    let mut total = vec![0u64; n_s];
    for rec in train_log.records() {
        for s in qs.skills_of(rec.question) {
            total[s] += 1;
            if !rec.correct {
                wrong[s] += 1;
            }
        }
    }
    DifficultyVector(
        wrong
            .iter()
            .zip(&total)
            .map(|(&w, &n)| {
                if n == 0 {
                    UNATTEMPTED_DIFFICULTY
                } else {
                    w as f64 / n as f64
                }
            })
            .collect(),
    )
}

/// Row-major CSV, one matrix row per line, shortest round-trip decimals.
pub fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

pub fn write_ss_csv(graph: &SkillsGraph, path: &Path) -> Result<()> {
    fs::write(path, matrix_csv(&graph.ss)).map_err(|e| KtError::io(path, e))
}

/// `skill,difficulty` rows.
pub fn write_difficulty_csv(diff: &DifficultyVector, path: &Path) -> Result<()> {
    let mut out = String::from("skill,difficulty\n");
    for (s, d) in diff.0.iter().enumerate() {
        let _ = writeln!(out, "{s},{d}");
    }
    fs::write(path, out).map_err(|e| KtError::io(path, e))
}
