//! Synthetic logs where a correct answer needs both skill mastery and a
//! usable associative path through the question's skills.
//!
//! A hidden skills graph `SS*` is drawn first. Most questions take their
//! skill sets from short random walks on it, the rest from uniformly drawn
//! skills, so some questions chain skills along existing edges and others
//! ask for combinations the graph barely supports. For each answer
//!
//! ```text
//! P(correct) = Π_s mastery[s] · ((1 - γ) + γ · Π SS*[prev, next])
//! ```
//!
//! where the second product runs over consecutive skills sorted by their
//! hidden difficulty (easiest first). An empty path product is 1.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_interactions, InteractionLog, InteractionRecord, StudentSequence};
use crate::error::{KtError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_students: usize,
    pub n_questions: usize,
    pub n_skills: usize,
    /// Largest skill set per question.
    pub h_max: usize,
    /// Smallest skill set per question.
    pub h_min: usize,
    pub answers_per_student: usize,
    /// Path-gate strength γ.
    pub gamma: f64,
    /// Probability that a question's skill set is a walk on `SS*`.
    pub walk_fraction: f64,
    /// Probability of an edge between two skills in the base of `SS*`.
    pub edge_density: f64,
    /// Spread of the per-student ability offset.
    pub ability_spread: f64,
    /// Shift added to every logit of mastery.
    pub mastery_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_students: 400,
            n_questions: 2000,
            n_skills: 30,
            h_max: 2,
            h_min: 2,
            answers_per_student: 40,
            gamma: 1.0,
            walk_fraction: 0.7,
            edge_density: 0.08,
            ability_spread: 2.0,
            mastery_shift: 2.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(KtError::InvalidArgument(m.to_string()));
        if self.n_skills < 2 {
            return bad("synthetic data needs at least 2 skills");
        }
        if self.n_students == 0 || self.n_questions == 0 || self.answers_per_student == 0 {
            return bad("student, question and answer counts must be positive");
        }
        if self.h_min == 0 || self.h_min > self.h_max || self.h_max > self.n_skills {
            return bad("need 1 <= h_min <= h_max <= n_skills");
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("walk_fraction", self.walk_fraction),
            ("edge_density", self.edge_density),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(KtError::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !self.ability_spread.is_finite() || self.ability_spread < 0.0 || !self.mastery_shift.is_finite() {
            return bad("ability_spread must be finite and >= 0, mastery_shift finite");
        }
        Ok(())
    }
}

/// The hidden process behind a generated log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub gamma: f64,
    /// Row-stochastic, zero diagonal.
    pub ss_star: Vec<Vec<f64>>,
    pub skill_difficulty: Vec<f64>,
    /// `[student][skill]` probabilities.
    pub mastery: Vec<Vec<f64>>,
    pub question_skills: Vec<Vec<usize>>,
    /// Path term of every question.
    pub path_term: Vec<f64>,
}

impl GroundTruth {
    /// Skills of a question ordered easiest first, ties by index.
    pub fn path(&self, question: usize) -> Vec<usize> {
        let mut p = self.question_skills[question].clone();
        p.sort_by(|&a, &b| self.skill_difficulty[a].total_cmp(&self.skill_difficulty[b]).then(a.cmp(&b)));
        p
    }

    pub fn p_correct(&self, student: usize, question: usize) -> f64 {
        let mastery: f64 = self.question_skills[question]
            .iter()
            .map(|&s| self.mastery[student][s])
            .product();
        mastery * ((1.0 - self.gamma) + self.gamma * self.path_term[question])
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub log: InteractionLog,
    pub truth: GroundTruth,
}

impl SyntheticData {
    /// Writes `interactions.csv`, `qmatrix.csv` and `ground_truth.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| KtError::io(dir, e))?;
        write_interactions(&self.log, &dir.join("interactions.csv"), &dir.join("qmatrix.csv"))?;
        let path = dir.join("ground_truth.json");
        let json = serde_json::to_string_pretty(&self.truth)?;
        fs::write(&path, json).map_err(|e| KtError::io(&path, e))
    }
}

/// Product of `ss[a][b]` over consecutive pairs of `path`.
pub fn path_product(ss: &[Vec<f64>], path: &[usize]) -> f64 {
    path.windows(2).map(|w| ss[w[0]][w[1]]).product()
}

fn random_ss<R: Rng>(n: usize, density: f64, rng: &mut R) -> Vec<Vec<f64>> {
    let mut base = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                let w = -(1.0 - rng.gen::<f64>()).ln();
                base[i][j] = w;
                base[j][i] = w;
            }
        }
    }
    for i in 0..n {
        if base[i].iter().all(|&w| w == 0.0) {
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let w = -(1.0 - rng.gen::<f64>()).ln();
            base[i][j] = w;
            base[j][i] = w;
        }
    }
    for row in &mut base {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= total);
    }
    base
}

fn walk_skills<R: Rng>(ss: &[Vec<f64>], len: usize, rng: &mut R) -> Vec<usize> {
    let n = ss.len();
    let mut path = vec![rng.gen_range(0..n)];
    while path.len() < len {
        let cur = *path.last().expect("non-empty");
        let options: Vec<(usize, f64)> = (0..n)
            .filter(|s| !path.contains(s) && ss[cur][*s] > 0.0)
            .map(|s| (s, ss[cur][s]))
            .collect();
        let next = if options.is_empty() {
            let free: Vec<usize> = (0..n).filter(|s| !path.contains(s)).collect();
            *free.choose(rng).expect("len <= n")
        } else {
            options.choose_weighted(rng, |o| o.1).expect("positive weights").0
        };
        path.push(next);
    }
    path
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_s = config.n_skills;
    let ss_star = random_ss(n_s, config.edge_density, &mut rng);
    let skill_difficulty: Vec<f64> = (0..n_s).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let question_skills: Vec<Vec<usize>> = (0..config.n_questions)
        .map(|_| {
            let h = rng.gen_range(config.h_min..=config.h_max);
            let mut skills = if rng.gen_bool(config.walk_fraction) {
                walk_skills(&ss_star, h, &mut rng)
            } else {
                rand::seq::index::sample(&mut rng, n_s, h).into_vec()
            };
            skills.sort_unstable();
            skills
        })
        .collect();

    let mut truth = GroundTruth {
        gamma: config.gamma,
        ss_star,
        skill_difficulty,
        mastery: Vec::with_capacity(config.n_students),
        question_skills,
        path_term: Vec::new(),
    };
    truth.path_term = (0..config.n_questions)
        .map(|q| path_product(&truth.ss_star, &truth.path(q)))
        .collect();

    let width = config.n_students.to_string().len();
    let mut sequences = Vec::with_capacity(config.n_students);
    for u in 0..config.n_students {
        let ability = rng.gen_range(-1.0..=1.0) * config.ability_spread;
        let mastery: Vec<f64> = truth
            .skill_difficulty
            .iter()
            .map(|&d| logistic(config.mastery_shift + ability - d))
            .collect();
        truth.mastery.push(mastery);
        let records = (0..config.answers_per_student)
            .map(|position| {
                let question = rng.gen_range(0..config.n_questions);
                let correct = rng.gen_bool(truth.p_correct(u, question).clamp(0.0, 1.0));
                InteractionRecord {
                    question,
                    correct,
                    position,
                }
            })
            .collect();
        sequences.push(StudentSequence {
            student_id: format!("u{u:0width$}"),
            records,
        });
    }
    let log = InteractionLog::from_parts(truth.question_skills.clone(), n_s, sequences)?;
    Ok(SyntheticData { log, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(gamma: f64) -> SynthConfig {
        SynthConfig {
            n_students: 20,
            n_questions: 30,
            n_skills: 6,
            answers_per_student: 10,
            gamma,
            seed: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn ss_star_is_row_stochastic() {
        let data = generate_synthetic(&small(1.0)).unwrap();
        for (i, row) in data.truth.ss_star.iter().enumerate() {
            assert_eq!(row[i], 0.0);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_config_is_rejected() {
        let cfg = SynthConfig {
            n_skills: 1,
            h_min: 1,
            h_max: 1,
            ..small(1.0)
        };
        assert!(generate_synthetic(&cfg).is_err());
        assert!(generate_synthetic(&SynthConfig { gamma: 1.5, ..small(1.0) }).is_err());
    }

    #[test]
    fn gamma_zero_ignores_path() {
        let data = generate_synthetic(&small(0.0)).unwrap();
        let t = &data.truth;
        let q = 0;
        let m: f64 = t.question_skills[q].iter().map(|&s| t.mastery[0][s]).product();
        assert_eq!(t.p_correct(0, q), m);
    }

    #[test]
    fn empty_path_and_hard_gate() {
        let mut t = generate_synthetic(&small(1.0)).unwrap().truth;
        assert_eq!(path_product(&t.ss_star, &[2]), 1.0);
        t.question_skills[0] = vec![0, 1];
        t.ss_star[0][1] = 0.0;
        t.ss_star[1][0] = 0.0;
        t.path_term[0] = path_product(&t.ss_star, &t.path(0));
        assert_eq!(t.p_correct(0, 0), 0.0);
    }

    #[test]
    fn same_seed_same_log() {
        let a = generate_synthetic(&small(1.0)).unwrap();
        let b = generate_synthetic(&small(1.0)).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.truth, b.truth);
    }
}
