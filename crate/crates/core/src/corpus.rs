//! Interaction logs, the question–skill relation and train/test splitting.
//!
//! Two canonical CSV files feed the toolkit:
//!
//! * interaction log, header `student_id,question_id,correct,position`
//! * Q-matrix, header `question_id,skill_ids` with `;`-separated skill ids
//!
//! Question and skill ids are densely re-indexed from 0 in a stable order
//! (numeric ids sort numerically, anything else lexicographically), and the
//! mapping is kept on the log so it can be persisted next to run outputs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{KtError, Result};

pub const LOG_HEADER: [&str; 4] = ["student_id", "question_id", "correct", "position"];
pub const QMATRIX_HEADER: [&str; 2] = ["question_id", "skill_ids"];

/// One answer. The question's skill set lives on the owning [`InteractionLog`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InteractionRecord {
    pub question: usize,
    pub correct: bool,
    /// Order within the student's sequence, gap-free from 0.
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StudentSequence {
    pub student_id: String,
    pub records: Vec<InteractionRecord>,
}

impl StudentSequence {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Dense index -> original identifier, for questions and skills.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct IdMaps {
    pub questions: Vec<String>,
    pub skills: Vec<String>,
}

impl IdMaps {
    fn identity(n_q: usize, n_s: usize) -> Self {
        IdMaps {
            questions: (0..n_q).map(|i| i.to_string()).collect(),
            skills: (0..n_s).map(|i| i.to_string()).collect(),
        }
    }

    pub fn question_map(&self) -> BTreeMap<String, usize> {
        invert(&self.questions)
    }

    pub fn skill_map(&self) -> BTreeMap<String, usize> {
        invert(&self.skills)
    }
}

fn invert(ids: &[String]) -> BTreeMap<String, usize> {
    ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect()
}

/// Validated, per-student ordered answer sequences plus question metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionLog {
    sequences: Vec<StudentSequence>,
    question_skills: Vec<Vec<usize>>,
    n_skills: usize,
    ids: IdMaps,
}

impl InteractionLog {
    /// Builds a log from already-dense parts. Skill lists are sorted and
    /// deduplicated; positions are renumbered from 0 in the given order.
    pub fn from_parts(
        question_skills: Vec<Vec<usize>>,
        n_skills: usize,
        sequences: Vec<StudentSequence>,
    ) -> Result<Self> {
        let ids = IdMaps::identity(question_skills.len(), n_skills);
        Self::with_ids(question_skills, n_skills, sequences, ids)
    }

    fn with_ids(
        mut question_skills: Vec<Vec<usize>>,
        n_skills: usize,
        mut sequences: Vec<StudentSequence>,
        ids: IdMaps,
    ) -> Result<Self> {
        for (q, skills) in question_skills.iter_mut().enumerate() {
            skills.sort_unstable();
            skills.dedup();
            if skills.is_empty() {
                return Err(KtError::Validation(format!(
                    "question {} has an empty skill list",
                    ids.questions.get(q).map(String::as_str).unwrap_or("?")
                )));
            }
            if let Some(&s) = skills.iter().find(|&&s| s >= n_skills) {
                return Err(KtError::Validation(format!(
                    "question {q} references skill {s} but n_s = {n_skills}"
                )));
            }
        }
        for seq in &mut sequences {
            if seq.records.is_empty() {
                return Err(KtError::Validation(format!(
                    "student {} has an empty sequence",
                    seq.student_id
                )));
            }
            for (pos, rec) in seq.records.iter_mut().enumerate() {
                if rec.question >= question_skills.len() {
                    return Err(KtError::Validation(format!(
                        "student {} answers unknown question {}",
                        seq.student_id, rec.question
                    )));
                }
                rec.position = pos;
            }
        }
        Ok(InteractionLog {
            sequences,
            question_skills,
            n_skills,
            ids,
        })
    }

    pub fn sequences(&self) -> &[StudentSequence] {
        &self.sequences
    }

    pub fn n_students(&self) -> usize {
        self.sequences.len()
    }

    pub fn n_questions(&self) -> usize {
        self.question_skills.len()
    }

    pub fn n_skills(&self) -> usize {
        self.n_skills
    }

    pub fn n_interactions(&self) -> usize {
        self.sequences.iter().map(StudentSequence::len).sum()
    }

    /// Sorted skill indices of a question.
    pub fn skills_of(&self, question: usize) -> &[usize] {
        &self.question_skills[question]
    }

    pub fn question_skills(&self) -> &[Vec<usize>] {
        &self.question_skills
    }

    pub fn ids(&self) -> &IdMaps {
        &self.ids
    }

    /// Largest skill-set size over all questions.
    pub fn max_skills_per_question(&self) -> usize {
        self.question_skills.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn records(&self) -> impl Iterator<Item = &InteractionRecord> {
        self.sequences.iter().flat_map(|s| s.records.iter())
    }

    /// Same question metadata, different students.
    /// The first `n` students and the remaining ones, sharing metadata.
    pub fn split_students(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.sequences.len());
        (
            self.with_sequences(self.sequences[..n].to_vec()),
            self.with_sequences(self.sequences[n..].to_vec()),
        )
    }

    fn with_sequences(&self, sequences: Vec<StudentSequence>) -> Self {
        InteractionLog {
            sequences,
            question_skills: self.question_skills.clone(),
            n_skills: self.n_skills,
            ids: self.ids.clone(),
        }
    }
}

/// Binary question × skill incidence matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct QsMatrix {
    matrix: Array2<u8>,
}

impl QsMatrix {
    pub fn from_skill_sets(skill_sets: &[Vec<usize>], n_skills: usize) -> Result<Self> {
        let mut matrix = Array2::zeros((skill_sets.len(), n_skills));
        for (q, skills) in skill_sets.iter().enumerate() {
            if skills.is_empty() {
                return Err(KtError::Validation(format!("question {q} has no skills")));
            }
            for &s in skills {
                if s >= n_skills {
                    return Err(KtError::Validation(format!(
                        "question {q} references skill {s} but n_s = {n_skills}"
                    )));
                }
                matrix[[q, s]] = 1;
            }
        }
        Ok(QsMatrix { matrix })
    }

    pub fn n_questions(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_skills(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn get(&self, question: usize, skill: usize) -> u8 {
        self.matrix[[question, skill]]
    }

    pub fn as_array(&self) -> &Array2<u8> {
        &self.matrix
    }

    /// Nonzero columns of a row, ascending.
    pub fn skills_of(&self, question: usize) -> Vec<usize> {
        self.matrix
            .row(question)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(s, _)| s)
            .collect()
    }

    pub fn skill_sets(&self) -> Vec<Vec<usize>> {
        (0..self.n_questions()).map(|q| self.skills_of(q)).collect()
    }
}

pub fn build_qs_matrix(log: &InteractionLog) -> QsMatrix {
    QsMatrix::from_skill_sets(&log.question_skills, log.n_skills)
        .expect("a validated log always has a valid QS relation")
}

/// Numeric ids sort numerically and before non-numeric ones.
fn id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn dense_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let set: BTreeSet<&str> = ids.collect();
    let mut v: Vec<String> = set.into_iter().map(str::to_owned).collect();
    v.sort_by(|a, b| id_order(a, b));
    v
}

fn check_header(rdr: &mut csv::Reader<fs::File>, expected: &[&str], file: &str) -> Result<()> {
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(KtError::Parse {
            file: file.to_owned(),
            line: 1,
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    if !path.exists() {
        return Err(KtError::MissingFile(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|e| KtError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

/// Reads the canonical log and Q-matrix CSV pair into a validated log.
pub fn load_interactions(log_path: &Path, qs_path: &Path) -> Result<InteractionLog> {
    let qs_name = qs_path.display().to_string();
    let log_name = log_path.display().to_string();

    let mut rdr = open_csv(qs_path)?;
    let mut rdr_log = open_csv(log_path)?;
    check_header(&mut rdr, &QMATRIX_HEADER, &qs_name)?;

    let mut raw_questions: Vec<(String, Vec<String>)> = Vec::new();
    let mut seen = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| KtError::Parse {
            file: qs_name.clone(),
            line,
            message,
        };
        if row.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", row.len())));
        }
        let qid = row[0].trim().to_owned();
        if qid.is_empty() {
            return Err(parse_err("empty question_id".into()));
        }
        let mut skills = Vec::new();
        for tok in row[1].split(';').map(str::trim).filter(|t| !t.is_empty()) {
            tok.parse::<i64>()
                .map_err(|_| parse_err(format!("skill id `{tok}` is not an integer")))?;
            skills.push(tok.to_owned());
        }
        if skills.is_empty() {
            return Err(KtError::Validation(format!(
                "{qs_name}:{line}: question {qid} has an empty skill list"
            )));
        }
        if seen.insert(qid.clone(), line).is_some() {
            return Err(KtError::Validation(format!(
                "{qs_name}:{line}: question {qid} listed twice"
            )));
        }
        raw_questions.push((qid, skills));
    }

    let question_ids = dense_ids(raw_questions.iter().map(|(q, _)| q.as_str()));
    let skill_ids = dense_ids(raw_questions.iter().flat_map(|(_, s)| s.iter().map(String::as_str)));
    let q_index = invert(&question_ids);
    let s_index = invert(&skill_ids);
    let mut question_skills = vec![Vec::new(); question_ids.len()];
    for (qid, skills) in &raw_questions {
        question_skills[q_index[qid]] = skills.iter().map(|s| s_index[s]).collect();
    }

    check_header(&mut rdr_log, &LOG_HEADER, &log_name)?;
    let mut by_student: HashMap<String, Vec<(u64, InteractionRecord, usize)>> = HashMap::new();
    for row in rdr_log.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| KtError::Parse {
            file: log_name.clone(),
            line,
            message,
        };
        if row.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", row.len())));
        }
        let student = row[0].trim();
        if student.is_empty() {
            return Err(parse_err("empty student_id".into()));
        }
        let qid = row[1].trim();
        let question = *q_index.get(qid).ok_or_else(|| {
            KtError::Validation(format!(
                "{log_name}:{line}: question {qid} is missing from the Q-matrix"
            ))
        })?;
        let correct_raw: i64 = row[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("correct `{}` is not an integer", row[2].trim())))?;
        let correct = match correct_raw {
            0 => false,
            1 => true,
            other => {
                return Err(KtError::Validation(format!(
                    "{log_name}:{line}: correct must be 0 or 1, found {other}"
                )))
            }
        };
        let position: u64 = row[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("position `{}` is not a non-negative integer", row[3].trim())))?;
        by_student.entry(student.to_owned()).or_default().push((
            position,
            InteractionRecord {
                question,
                correct,
                position: 0,
            },
            line,
        ));
    }

    let mut students: Vec<String> = by_student.keys().cloned().collect();
    students.sort_by(|a, b| id_order(a, b));
    let mut sequences = Vec::with_capacity(students.len());
    for sid in students {
        let mut rows = by_student.remove(&sid).unwrap_or_default();
        rows.sort_by_key(|(pos, _, _)| *pos);
        if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(KtError::Validation(format!(
                "{log_name}:{}: student {sid} has duplicate position {}",
                w[1].2, w[1].0
            )));
        }
        sequences.push(StudentSequence {
            student_id: sid,
            records: rows.into_iter().map(|(_, r, _)| r).collect(),
        });
    }

    InteractionLog::with_ids(
        question_skills,
        skill_ids.len(),
        sequences,
        IdMaps {
            questions: question_ids,
            skills: skill_ids,
        },
    )
}

/// Writes the log back out in the canonical CSV pair, using original ids.
pub fn write_interactions(log: &InteractionLog, log_path: &Path, qs_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(qs_path)?;
    w.write_record(QMATRIX_HEADER)?;
    for (q, skills) in log.question_skills.iter().enumerate() {
        let joined: Vec<&str> = skills.iter().map(|&s| log.ids.skills[s].as_str()).collect();
        w.write_record([log.ids.questions[q].as_str(), &joined.join(";")])?;
    }
    w.flush().map_err(|e| KtError::io(qs_path, e))?;

    let mut w = csv::Writer::from_path(log_path)?;
    w.write_record(LOG_HEADER)?;
    for seq in &log.sequences {
        for rec in &seq.records {
            w.write_record([
                seq.student_id.as_str(),
                log.ids.questions[rec.question].as_str(),
                if rec.correct { "1" } else { "0" },
                &rec.position.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| KtError::io(log_path, e))?;
    Ok(())
}

/// Persists `question_ids.json` and `skill_ids.json` (`{original_id: dense_index}`).
pub fn write_id_maps(log: &InteractionLog, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| KtError::io(dir, e))?;
    for (name, map) in [
        ("question_ids.json", log.ids.question_map()),
        ("skill_ids.json", log.ids.skill_map()),
    ] {
        let path = dir.join(name);
        let text = serde_json::to_string_pretty(&map)?;
        fs::write(&path, text).map_err(|e| KtError::io(&path, e))?;
    }
    Ok(())
}

/// Student-level split. The train side receives `round(ratio * n)` students
/// (clamped so both sides are non-empty), chosen by a seeded shuffle.
pub fn split_train_test(
    log: &InteractionLog,
    ratio: f64,
    seed: u64,
) -> Result<(InteractionLog, InteractionLog)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(KtError::InvalidArgument(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let n = log.n_students();
    if n < 2 {
        return Err(KtError::InvalidArgument(format!(
            "need at least 2 students to split, got {n}"
        )));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| log.sequences[i].clone()).collect();
    Ok((
        log.with_sequences(pick(&order[..n_train])),
        log.with_sequences(pick(&order[n_train..])),
    ))
}

/// Keeps only records on questions with at least two skills, then
/// re-densifies question and skill ids.
pub fn filter_multi_skill(log: &InteractionLog) -> Result<InteractionLog> {
    let kept_questions: Vec<usize> = (0..log.n_questions())
        .filter(|&q| log.question_skills[q].len() >= 2)
        .collect();
    let mut q_new = vec![None; log.n_questions()];
    for (new, &old) in kept_questions.iter().enumerate() {
        q_new[old] = Some(new);
    }
    let kept_skills: BTreeSet<usize> = kept_questions
        .iter()
        .flat_map(|&q| log.question_skills[q].iter().copied())
        .collect();
    let s_new: HashMap<usize, usize> = kept_skills.iter().enumerate().map(|(n, &o)| (o, n)).collect();

    let sequences: Vec<StudentSequence> = log
        .sequences
        .iter()
        .filter_map(|seq| {
            let records: Vec<InteractionRecord> = seq
                .records
                .iter()
                .filter_map(|r| {
                    q_new[r.question].map(|question| InteractionRecord {
                        question,
                        correct: r.correct,
                        position: 0,
                    })
                })
                .collect();
            (!records.is_empty()).then(|| StudentSequence {
                student_id: seq.student_id.clone(),
                records,
            })
        })
        .collect();
    if sequences.is_empty() {
        return Err(KtError::Validation("no multi-skill questions".into()));
    }
    let question_skills = kept_questions
        .iter()
        .map(|&q| log.question_skills[q].iter().map(|s| s_new[s]).collect())
        .collect();
    let ids = IdMaps {
        questions: kept_questions.iter().map(|&q| log.ids.questions[q].clone()).collect(),
        skills: kept_skills.iter().map(|&s| log.ids.skills[s].clone()).collect(),
    };
    InteractionLog::with_ids(question_skills, kept_skills.len(), sequences, ids)
}

/// Splits sequences longer than `max_len` into consecutive chunks, each
/// treated as its own sequence with positions restarting at 0.
pub fn chunk_sequences(log: &InteractionLog, max_len: usize) -> InteractionLog {
    let max_len = max_len.max(1);
    let sequences = log
        .sequences
        .iter()
        .flat_map(|seq| {
            seq.records.chunks(max_len).map(move |chunk| StudentSequence {
                student_id: seq.student_id.clone(),
                records: chunk
                    .iter()
                    .enumerate()
                    .map(|(i, r)| InteractionRecord { position: i, ..*r })
                    .collect(),
            })
        })
        .collect();
    log.with_sequences(sequences)
}
