//! Naive reference implementations and random instances shared by the
//! oracle tests and the acceptance run.
#![allow(dead_code)]

use apgkt::corpus::{InteractionLog, InteractionRecord, QsMatrix, StudentSequence};
use apgkt::harness::compute_auc;
use apgkt::modes::{difficulty_order, extract_mode_vector};
use apgkt::skillgraph::{build_skill_graph, skill_difficulty, DifficultyVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub qs: QsMatrix,
    pub log: InteractionLog,
}

/// Random QS (n_s ≤ 8, n_q ≤ 20) and a small log over it.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_s = rng.gen_range(1..=8);
    let n_q = rng.gen_range(1..=20);
    let sets: Vec<Vec<usize>> = (0..n_q)
        .map(|_| {
            let mask = rng.gen_range(1u32..(1 << n_s));
            (0..n_s).filter(|s| mask & (1 << s) != 0).collect()
        })
        .collect();
    let n_students = rng.gen_range(1..=4);
    let seqs = (0..n_students)
        .map(|u| StudentSequence {
            student_id: format!("u{u}"),
            records: (0..rng.gen_range(1..=12))
                .map(|position| InteractionRecord {
                    question: rng.gen_range(0..n_q),
                    correct: rng.gen_bool(0.6),
                    position,
                })
                .collect(),
        })
        .collect();
    Instance {
        qs: QsMatrix::from_skill_sets(&sets, n_s).unwrap(),
        log: InteractionLog::from_parts(sets, n_s, seqs).unwrap(),
    }
}

pub fn naive_ss(qs: &QsMatrix) -> Vec<Vec<f64>> {
    let (n_q, n_s) = (qs.n_questions(), qs.n_skills());
    let mut n = vec![vec![0u64; n_s]; n_s];
    for i in 0..n_s {
        for j in 0..n_s {
            if i == j {
                continue;
            }
            for q in 0..n_q {
                if qs.get(q, i) == 1 && qs.get(q, j) == 1 {
                    n[i][j] += 1;
                }
            }
        }
    }
    n.iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
                .collect()
        })
        .collect()
}

pub fn naive_difficulty(log: &InteractionLog, qs: &QsMatrix) -> Vec<f64> {
    (0..qs.n_skills())
        .map(|s| {
            let mut attempts = 0u64;
            let mut wrong = 0u64;
            for seq in log.sequences() {
                for r in &seq.records {
                    if qs.get(r.question, s) == 1 {
                        attempts += 1;
                        wrong += u64::from(!r.correct);
                    }
                }
            }
            if attempts == 0 {
                0.5
            } else {
                wrong as f64 / attempts as f64
            }
        })
        .collect()
}

/// Each skill's slot is the number of skills that come before it.
pub fn naive_order(sset: &[usize], diff: &[f64]) -> Vec<usize> {
    let mut out = vec![usize::MAX; sset.len()];
    for &a in sset {
        let before = sset
            .iter()
            .filter(|&&b| diff[b] < diff[a] || (diff[b] == diff[a] && b < a))
            .count();
        out[before] = a;
    }
    out
}

pub fn naive_mode(ss: &[Vec<f64>], idx: &[usize], h_max: usize) -> Vec<f64> {
    let h = idx.len();
    (0..h_max * h_max)
        .map(|k| if k < h * h { ss[idx[k / h]][idx[k % h]] } else { 0.0 })
        .collect()
}

pub fn naive_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// Mismatch counts of the four deterministic builders over `trials`
/// random instances.
#[derive(Debug, Default)]
pub struct OracleTally {
    pub skill_graph: usize,
    pub difficulty: usize,
    pub order: usize,
    pub mode_vector: usize,
}

pub fn graph_oracles(trials: usize, seed: u64) -> OracleTally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = OracleTally::default();
    for _ in 0..trials {
        let inst = random_instance(&mut rng);
        let graph = build_skill_graph(&inst.qs);
        let ss: Vec<Vec<f64>> = graph.ss.rows().into_iter().map(|r| r.to_vec()).collect();
        t.skill_graph += usize::from(ss != naive_ss(&inst.qs));

        let diff = skill_difficulty(&inst.log, &inst.qs);
        t.difficulty += usize::from(diff.0 != naive_difficulty(&inst.log, &inst.qs));

        // Coarse difficulties so ties are common.
        let coarse = DifficultyVector((0..inst.qs.n_skills()).map(|_| rng.gen_range(0..4) as f64 / 4.0).collect());
        let h_max = inst.qs.skill_sets().iter().map(Vec::len).max().unwrap() + rng.gen_range(0..2);
        let mut bad_order = false;
        let mut bad_mode = false;
        for sset in inst.qs.skill_sets() {
            let idx = difficulty_order(&sset, &coarse).unwrap();
            bad_order |= idx != naive_order(&sset, &coarse.0);
            let m = extract_mode_vector(&graph, &idx, h_max).unwrap();
            bad_mode |= m.m != naive_mode(&ss, &idx, h_max);
        }
        t.order += usize::from(bad_order);
        t.mode_vector += usize::from(bad_mode);
    }
    t
}

/// Largest |fast − pairwise| AUC difference over `trials` random sets.
pub fn auc_oracle(trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < trials {
        let n = rng.gen_range(2..=60);
        let levels = rng.gen_range(2..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        let fast = compute_auc(&scores, &labels).unwrap();
        worst = worst.max((fast - naive_auc(&scores, &labels)).abs());
        done += 1;
    }
    worst
}

pub mod grad {
    use std::sync::Arc;

    use apgkt::corpus::{InteractionLog, InteractionRecord, QsMatrix, StudentSequence};
    use apgkt::model::{GraphInputs, KtModel, ModelConfig, RecapMode, Variant};
    use apgkt::modes::ModeAutoencoder;
    use apgkt::params::{GradBuffer, ParamStore};
    use apgkt::tape::{Activation, Mat, Tape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-6;

    /// Two students, three steps each.
    pub fn toy() -> (InteractionLog, QsMatrix) {
        let sets = vec![vec![0, 1], vec![1, 2], vec![0, 1, 2], vec![2]];
        let rec = |question, correct| InteractionRecord { question, correct, position: 0 };
        let seqs = vec![
            StudentSequence {
                student_id: "a".into(),
                records: vec![rec(0, true), rec(2, false), rec(0, true)],
            },
            StudentSequence {
                student_id: "b".into(),
                records: vec![rec(1, false), rec(3, true), rec(2, true)],
            },
        ];
        let log = InteractionLog::from_parts(sets.clone(), 3, seqs).unwrap();
        (log, QsMatrix::from_skill_sets(&sets, 3).unwrap())
    }

    pub fn toy_model(variant: Variant, recap: RecapMode) -> (InteractionLog, KtModel) {
        let (log, qs) = toy();
        let inputs = Arc::new(GraphInputs::prepare(&qs, &log, 10, 1).unwrap());
        let cfg = ModelConfig {
            variant,
            d: 4,
            d_m: 3,
            n_layers: 2,
            recap,
            k: 2,
            att_bound: -10.0,
            ..ModelConfig::default()
        };
        (log, KtModel::new(cfg, inputs, 11).unwrap())
    }

    fn numeric(store: &mut ParamStore, loss: &dyn Fn(&ParamStore) -> f64) -> Vec<Mat> {
        let ids: Vec<_> = store.ids().collect();
        ids.into_iter()
            .map(|id| {
                let mut g = Mat::zeros(store.get(id).dim());
                for ((r, c), slot) in g.indexed_iter_mut() {
                    let orig = store.get(id)[[r, c]];
                    store.get_mut(id)[[r, c]] = orig + EPS;
                    let up = loss(store);
                    store.get_mut(id)[[r, c]] = orig - EPS;
                    let down = loss(store);
                    store.get_mut(id)[[r, c]] = orig;
                    *slot = (up - down) / (2.0 * EPS);
                }
                g
            })
            .collect()
    }

    /// Worst per-parameter `‖a − n‖ / max(‖a‖, ‖n‖)` with its parameter name.
    /// Parameters whose gradient vanishes on both sides report the absolute gap.
    pub fn model_error(variant: Variant, recap: RecapMode, lambda: f64) -> (f64, String) {
        let (log, mut model) = toy_model(variant, recap);
        let batch: Vec<&[InteractionRecord]> = log.sequences().iter().map(|s| s.records.as_slice()).collect();
        let (_, grads) = model.batch_gradients(&batch, lambda);
        let probe = model.clone();
        let num = numeric(&mut model.store, &|store: &ParamStore| {
            let mut m = probe.clone();
            m.store = store.clone();
            m.batch_loss(&batch, lambda).total
        });
        worst(&model.store, &grads, &num)
    }

    fn worst(store: &ParamStore, analytic: &GradBuffer, numeric: &[Mat]) -> (f64, String) {
        let norm = |m: &Mat| m.mapv(|v| v * v).sum().sqrt();
        let mut out = (0.0, String::new());
        for (id, n) in store.ids().zip(numeric) {
            let a = analytic.get(id);
            let diff = norm(&(a - n));
            let scale = norm(a).max(norm(n));
            let rel = if scale < 1e-10 { diff } else { diff / scale };
            if rel > out.0 {
                out = (rel, store.name(id).to_string());
            }
        }
        out
    }

    /// Worst elementwise relative error of the reconstruction loss gradient.
    pub fn autoencoder_error() -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let ae = ModeAutoencoder::new(&mut store, 9, 4, Activation::Tanh, Activation::Tanh, &mut rng);
        let x = Mat::from_shape_fn((6, 9), |(i, j)| {
            if (i + j) % 3 == 0 {
                0.0
            } else {
                ((i * 9 + j) as f64 * 0.37).sin().abs()
            }
        });
        let reloss = |store: &ParamStore| {
            let mut t = Tape::new(store);
            let xv = t.constant(x.clone());
            let (_, r) = ae.forward(&mut t, xv);
            t.scalar(r)
        };
        let mut grads = GradBuffer::zeros_like(&store);
        {
            let mut t = Tape::new(&store);
            let xv = t.constant(x.clone());
            let (_, r) = ae.forward(&mut t, xv);
            let g = t.backward(r);
            t.accumulate_param_grads(&g, &mut grads);
        }
        let num = numeric(&mut store, &reloss);
        let mut worst: f64 = 0.0;
        for (id, n) in store.ids().zip(&num) {
            for (a, n) in grads.get(id).iter().zip(n) {
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
            }
        }
        worst
    }
}
