use apgkt::corpus::{
    filter_multi_skill, load_interactions, split_train_test, write_interactions, InteractionLog, InteractionRecord,
    QsMatrix, StudentSequence,
};
use apgkt::harness::compute_auc;
use apgkt::model::{higher_order_state, interaction_predict, AttentionValues};
use apgkt::modes::extract_mode_vector;
use apgkt::skillgraph::build_skill_graph;
use apgkt::synth::{generate_synthetic, SynthConfig};
use apgkt::tape::Mat;
use proptest::prelude::*;

fn skill_sets() -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (1usize..=8).prop_flat_map(|n_s| {
        let set = proptest::collection::btree_set(0..n_s, 1..=n_s).prop_map(|s| s.into_iter().collect::<Vec<_>>());
        (Just(n_s), proptest::collection::vec(set, 1..=20))
    })
}

fn logs() -> impl Strategy<Value = InteractionLog> {
    skill_sets().prop_flat_map(|(n_s, sets)| {
        let n_q = sets.len();
        let seq = proptest::collection::vec((0..n_q, any::<bool>()), 1..10);
        proptest::collection::vec(seq, 2..12).prop_map(move |students| {
            let seqs = students
                .into_iter()
                .enumerate()
                .map(|(u, recs)| StudentSequence {
                    student_id: format!("s{u}"),
                    records: recs
                        .into_iter()
                        .enumerate()
                        .map(|(position, (question, correct))| InteractionRecord { question, correct, position })
                        .collect(),
                })
                .collect();
            InteractionLog::from_parts(sets.clone(), n_s, seqs).unwrap()
        })
    })
}

fn matrix(rows: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Mat> {
    rows.prop_flat_map(move |r| {
        proptest::collection::vec(-3.0f64..3.0, r * d).prop_map(move |v| Mat::from_shape_vec((r, d), v).unwrap())
    })
}

proptest! {
    #[test]
    fn ss_rows_sum_to_zero_or_one((n_s, sets) in skill_sets()) {
        let g = build_skill_graph(&QsMatrix::from_skill_sets(&sets, n_s).unwrap());
        for (i, row) in g.ss.rows().into_iter().enumerate() {
            let s: f64 = row.sum();
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
            prop_assert_eq!(row[i], 0.0);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn mode_vectors_pad_with_zeros((n_s, sets) in skill_sets(), extra in 0usize..3) {
        let qs = QsMatrix::from_skill_sets(&sets, n_s).unwrap();
        let g = build_skill_graph(&qs);
        let h_max = sets.iter().map(Vec::len).max().unwrap() + extra;
        for s in &sets {
            let m = extract_mode_vector(&g, s, h_max).unwrap();
            prop_assert_eq!(m.m.len(), h_max * h_max);
            prop_assert!(m.m[s.len() * s.len()..].iter().all(|&v| v == 0.0));
        }
        prop_assert!(extract_mode_vector(&g, &(0..n_s).collect::<Vec<_>>(), n_s - 1).is_err());
    }

    #[test]
    fn concatenation_recovers_halves(h in proptest::collection::vec(-5.0f64..5.0, 1..16), seed in any::<u64>()) {
        let big_h: Vec<f64> = h.iter().map(|v| v * 0.5 + (seed % 7) as f64).collect();
        let hoc = higher_order_state(&h, &big_h).unwrap();
        prop_assert_eq!(&hoc[..h.len()], &h[..]);
        prop_assert_eq!(&hoc[h.len()..], &big_h[..]);
    }

    #[test]
    fn attention_normalizes_and_p_is_a_probability(
        fi in matrix(1..=6, 4),
        fj in matrix(1..=5, 4),
        w in proptest::collection::vec(-2.0f64..2.0, 8),
        b in -3.0f64..3.0,
    ) {
        let att = AttentionValues { w_state: w[..4].to_vec(), w_query: w[4..].to_vec(), b };
        let pred = interaction_predict(&fi, &fj, &att).unwrap();
        prop_assert_eq!(pred.alpha.dim(), (fi.nrows(), fj.nrows()));
        prop_assert!((pred.alpha.sum() - 1.0).abs() < 1e-9);
        prop_assert!(pred.p > 0.0 && pred.p < 1.0);
    }

    #[test]
    fn auc_is_invariant_under_monotone_maps(
        data in proptest::collection::vec((0u8..10, any::<bool>()), 2..80),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 10.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let base = compute_auc(&scores, &labels).unwrap();
        let mapped: Vec<f64> = scores.iter().map(|s| (s * scale + shift).exp()).collect();
        prop_assert!((compute_auc(&mapped, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn split_partitions_students(log in logs(), ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let (a, b) = split_train_test(&log, ratio, seed).unwrap();
        let n = log.n_students();
        prop_assert_eq!(a.n_students() + b.n_students(), n);
        prop_assert_eq!(a.n_students(), ((ratio * n as f64).round() as usize).clamp(1, n - 1));
        let mut ids: Vec<&str> = a.sequences().iter().chain(b.sequences()).map(|s| s.student_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), n);
        let (a2, b2) = split_train_test(&log, ratio, seed).unwrap();
        prop_assert_eq!(a, a2);
        prop_assert_eq!(b, b2);
    }

    #[test]
    fn multi_skill_filter_is_idempotent(log in logs()) {
        if let Ok(once) = filter_multi_skill(&log) {
            prop_assert!(once.question_skills().iter().all(|s| s.len() >= 2));
            let twice = filter_multi_skill(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn csv_round_trip(log in logs()) {
        let dir = tempfile::tempdir().unwrap();
        let (lp, qp) = (dir.path().join("log.csv"), dir.path().join("qs.csv"));
        write_interactions(&log, &lp, &qp).unwrap();
        let back = load_interactions(&lp, &qp).unwrap();
        prop_assert_eq!(back.n_students(), log.n_students());
        let flat = |l: &InteractionLog| -> Vec<(String, Vec<String>, bool)> {
            l.sequences()
                .iter()
                .flat_map(|s| s.records.iter().map(move |r| {
                    let skills = l.skills_of(r.question).iter().map(|&k| l.ids().skills[k].clone()).collect();
                    (format!("{}:{}", s.student_id, l.ids().questions[r.question]), skills, r.correct)
                }))
                .collect()
        };
        let mut a = flat(&log);
        let mut b = flat(&back);
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn synthetic_generation_is_seed_deterministic(seed in any::<u64>(), gamma in 0.0f64..=1.0) {
        let cfg = SynthConfig { n_students: 15, n_questions: 25, n_skills: 6, answers_per_student: 8, gamma, seed, ..SynthConfig::default() };
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            generate_synthetic(&cfg).unwrap().write(d.path()).unwrap();
        }
        for f in ["interactions.csv", "qmatrix.csv", "ground_truth.json"] {
            let a = std::fs::read(dirs[0].path().join(f)).unwrap();
            let b = std::fs::read(dirs[1].path().join(f)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn synthetic_rates_match_the_analytic_probability() {
    // One student answering the same two questions many times: the
    // empirical rate sits within a 4-sigma binomial band.
    let cfg = SynthConfig { n_students: 1, n_questions: 2, n_skills: 4, answers_per_student: 20_000, seed: 9, ..SynthConfig::default() };
    let data = generate_synthetic(&cfg).unwrap();
    for q in 0..2 {
        let recs: Vec<bool> = data.log.records().filter(|r| r.question == q).map(|r| r.correct).collect();
        let p = data.truth.p_correct(0, q);
        let rate = recs.iter().filter(|&&c| c).count() as f64 / recs.len() as f64;
        let sigma = (p * (1.0 - p) / recs.len() as f64).sqrt();
        assert!((rate - p).abs() <= 4.0 * sigma + 1e-12, "q{q}: rate {rate}, p {p}");
    }
}
