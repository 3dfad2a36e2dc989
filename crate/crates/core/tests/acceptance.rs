//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Real-data criteria read `<data>/<Name>/interactions.csv` and
//! `<data>/<Name>/qmatrix.csv`, where `<data>` is `$APGKT_DATA_DIR` or
//! `data/` at the workspace root. When a dataset is absent its criterion is
//! reported as FAIL (unavailable) and does not abort the run; every other
//! failure makes the process exit non-zero.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use apgkt::harness::{nemenyi_test, reference_table, run_experiment, run_on_log, Alpha, ExperimentConfig};
use apgkt::model::{higher_order_state, interaction_predict, AttentionValues, RecapMode, Variant};
use apgkt::modes::extract_mode_vector;
use apgkt::skillgraph::build_skill_graph;
use apgkt::synth::{generate_synthetic, SynthConfig};
use apgkt::tape::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances.
const FRCSUB_REFERENCE: f64 = 0.9059;
const MATH1_REFERENCE: f64 = 0.8922;
const REPRO_BAND: f64 = 0.04;
const FRCSUB_FLOOR: f64 = 0.86;
const FRCSUB_BUDGET_SECS: f64 = 15.0 * 60.0;
const MATH1_BUDGET_SECS: f64 = 20.0 * 60.0;
const SYNTH_GAP_GATED: f64 = 0.02;
const SYNTH_GAP_UNGATED: f64 = 0.01;
const GRAD_END_TO_END: f64 = 1e-3;
const GRAD_AUTOENCODER: f64 = 1e-4;
const AUC_ORACLE_TOL: f64 = 1e-9;
const ALPHA_TOL: f64 = 1e-9;
const ORACLE_TRIALS: usize = 1000;
const AUC_TRIALS: usize = 10_000;
const SYNTH_TRAIN_SEEDS: [u64; 3] = [1, 2, 3];
const FRCSUB_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

enum Outcome {
    Pass(String),
    Fail(String),
    Unavailable(String),
}

fn data_dir() -> PathBuf {
    std::env::var_os("APGKT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Default config for a real dataset, or the path that is missing.
fn dataset_config(name: &str, seed: u64) -> Result<ExperimentConfig, PathBuf> {
    let dir = data_dir().join(name);
    let cfg = ExperimentConfig {
        name: name.into(),
        log_path: dir.join("interactions.csv"),
        qs_path: dir.join("qmatrix.csv"),
        output_dir: std::env::temp_dir().join(format!("apgkt-acceptance-{name}-{seed}")),
        seed,
        ..ExperimentConfig::default()
    };
    for p in [&cfg.log_path, &cfg.qs_path] {
        if !p.exists() {
            return Err(p.clone());
        }
    }
    Ok(cfg)
}

fn reproduction(name: &str, reference: f64, floor: Option<f64>, budget: f64) -> Outcome {
    let cfg = match dataset_config(name, 0) {
        Ok(c) => c,
        Err(p) => return Outcome::Unavailable(format!("dataset not found at {}", p.display())),
    };
    let start = Instant::now();
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("run failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let ok = (report.test_auc - reference).abs() <= REPRO_BAND && floor.map_or(true, |f| report.test_auc >= f) && secs <= budget;
    let msg = format!("AUC {:.4} (reference {reference}, band ±{REPRO_BAND}), {secs:.0}s of {budget:.0}s", report.test_auc);
    if ok {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn synthetic_config(variant: Variant, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        name: "synthetic".into(),
        seed,
        max_epochs: 30,
        ..ExperimentConfig::default()
    };
    cfg.model.variant = variant;
    cfg.model.d = 32;
    cfg.model.d_m = 16;
    cfg
}

/// Mean AUC(apgkt) − AUC(apgkt-no-modes) over the training seeds.
fn synthetic_gap(gamma: f64) -> f64 {
    let data = generate_synthetic(&SynthConfig { gamma, ..SynthConfig::default() }).expect("synthetic data");
    let gaps: Vec<f64> = SYNTH_TRAIN_SEEDS
        .iter()
        .map(|&seed| {
            let full = run_on_log(&synthetic_config(Variant::Apgkt, seed), &data.log).expect("apgkt run");
            let ablated = run_on_log(&synthetic_config(Variant::ApgktNoModes, seed), &data.log).expect("ablation run");
            full.report.test_auc - ablated.report.test_auc
        })
        .collect();
    gaps.iter().sum::<f64>() / gaps.len() as f64
}

fn ablation_ordering() -> Outcome {
    let gated = synthetic_gap(1.0);
    let ungated = synthetic_gap(0.0);
    let synth_ok = gated >= SYNTH_GAP_GATED && ungated.abs() < SYNTH_GAP_UNGATED;
    let synth = format!("synthetic gap γ=1 {gated:+.4} (need ≥ {SYNTH_GAP_GATED}), γ=0 {ungated:+.4} (need |·| < {SYNTH_GAP_UNGATED})");

    let mut means = [0.0; 2];
    for &seed in &FRCSUB_SEEDS {
        let cfg = match dataset_config("FrcSub", seed) {
            Ok(c) => c,
            Err(p) => {
                let msg = format!("{synth}; FrcSub part: dataset not found at {}", p.display());
                return if synth_ok { Outcome::Unavailable(msg) } else { Outcome::Fail(msg) };
            }
        };
        for (slot, variant) in [Variant::Apgkt, Variant::ApgktNoModes].into_iter().enumerate() {
            let mut c = cfg.clone();
            c.model.variant = variant;
            c.output_dir = c.output_dir.join(variant.as_str());
            match run_experiment(&c) {
                Ok(r) => means[slot] += r.test_auc / FRCSUB_SEEDS.len() as f64,
                Err(e) => return Outcome::Fail(format!("{synth}; FrcSub run failed: {e}")),
            }
        }
    }
    let msg = format!("{synth}; FrcSub mean AUC apgkt {:.4} vs no-modes {:.4}", means[0], means[1]);
    if synth_ok && means[0] >= means[1] {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn graph_oracles() -> Outcome {
    let t = common::graph_oracles(ORACLE_TRIALS, 2024);
    let msg = format!(
        "mismatches over {ORACLE_TRIALS} instances: skills graph {}, difficulty {}, order {}, mode vector {}",
        t.skill_graph, t.difficulty, t.order, t.mode_vector
    );
    if t.skill_graph + t.difficulty + t.order + t.mode_vector == 0 {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn gradients() -> Outcome {
    let mut worst = (0.0, String::new());
    for (variant, recap, lambda) in [
        (Variant::Apgkt, RecapMode::Soft, 1.0),
        (Variant::Apgkt, RecapMode::Hard, 0.5),
        (Variant::ApgktNoModes, RecapMode::Soft, 1.0),
        (Variant::DktBaseline, RecapMode::Soft, 0.0),
    ] {
        let (e, name) = common::grad::model_error(variant, recap, lambda);
        if e >= worst.0 {
            worst = (e, format!("{variant}/{name}"));
        }
    }
    let ae = common::grad::autoencoder_error();
    let msg = format!(
        "end-to-end worst {:.2e} at {} (< {GRAD_END_TO_END:.0e}), autoencoder {ae:.2e} (< {GRAD_AUTOENCODER:.0e})",
        worst.0, worst.1
    );
    if worst.0 < GRAD_END_TO_END && ae < GRAD_AUTOENCODER {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn auc_oracle() -> Outcome {
    let worst = common::auc_oracle(AUC_TRIALS, 77);
    let msg = format!("max |fast − pairwise| = {worst:.1e} over {AUC_TRIALS} sets");
    if worst <= AUC_ORACLE_TOL {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn nemenyi() -> Outcome {
    let table = reference_table();
    let r = nemenyi_test(&table, Alpha::P05).expect("reference table");
    let best = r.models[r.best()].clone();
    let msg = format!("CD = {} (k=5, N=5, α=0.05), best average rank {best} ({:.2})", r.critical_difference, r.average_ranks[r.best()]);
    if r.critical_difference == 2.728 && best == "APGKT" {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(msg)
    }
}

fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    let trials = 1000;

    let (mut alpha_bad, mut p_bad) = (0, 0);
    for _ in 0..trials {
        let d = rng.gen_range(1..=6);
        let (ni, nj) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let fi = Mat::from_shape_fn((ni, d), |_| rng.gen_range(-4.0..4.0));
        let fj = Mat::from_shape_fn((nj, d), |_| rng.gen_range(-4.0..4.0));
        let att = AttentionValues {
            w_state: (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            w_query: (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            b: rng.gen_range(-2.0..2.0),
        };
        let pred = interaction_predict(&fi, &fj, &att).expect("valid shapes");
        alpha_bad += usize::from((pred.alpha.sum() - 1.0).abs() > ALPHA_TOL);
        p_bad += usize::from(!(pred.p > 0.0 && pred.p < 1.0));
    }
    if alpha_bad > 0 {
        failures.push(format!("α normalization {alpha_bad}"));
    }
    if p_bad > 0 {
        failures.push(format!("p range {p_bad}"));
    }

    let (mut rows_bad, mut pad_bad, mut cat_bad) = (0, 0, 0);
    for _ in 0..trials {
        let inst = common::random_instance(&mut rng);
        let g = build_skill_graph(&inst.qs);
        rows_bad += g.ss.rows().into_iter().filter(|r| {
            let s = r.sum();
            !(s == 0.0 || (s - 1.0).abs() < 1e-12)
        }).count();
        let sets = inst.qs.skill_sets();
        let h_max = sets.iter().map(Vec::len).max().unwrap() + rng.gen_range(0..3);
        for s in &sets {
            let m = extract_mode_vector(&g, s, h_max).expect("fits");
            pad_bad += usize::from(m.m[s.len() * s.len()..].iter().any(|&v| v != 0.0));
        }
        let n = rng.gen_range(1..10);
        let h: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let big: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let hoc = higher_order_state(&h, &big).expect("same width");
        cat_bad += usize::from(hoc[..n] != h[..] || hoc[n..] != big[..]);
    }
    for (name, bad) in [("SS row sums", rows_bad), ("mode padding", pad_bad), ("concatenation", cat_bad)] {
        if bad > 0 {
            failures.push(format!("{name} {bad}"));
        }
    }

    let small = SynthConfig { n_students: 40, n_questions: 40, n_skills: 8, answers_per_student: 10, ..SynthConfig::default() };
    let a = generate_synthetic(&small).expect("synthetic");
    let b = generate_synthetic(&small).expect("synthetic");
    let mut cfg = synthetic_config(Variant::Apgkt, 5);
    cfg.max_epochs = 2;
    let r1 = run_on_log(&cfg, &a.log).expect("run").report;
    let r2 = run_on_log(&cfg, &b.log).expect("run").report;
    if a.log != b.log || r1.test_auc != r2.test_auc || r1.epochs != r2.epochs {
        failures.push("seed determinism".into());
    }

    let msg = format!("{trials} randomized trials per property");
    if failures.is_empty() {
        Outcome::Pass(msg)
    } else {
        Outcome::Fail(format!("{msg}; failing: {}", failures.join(", ")))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("AC1 FrcSub reproduction", || reproduction("FrcSub", FRCSUB_REFERENCE, Some(FRCSUB_FLOOR), FRCSUB_BUDGET_SECS)),
        ("AC2 Math1 reproduction", || reproduction("Math1", MATH1_REFERENCE, None, MATH1_BUDGET_SECS)),
        ("AC3 ablation ordering", ablation_ordering),
        ("AC4 graph oracles", graph_oracles),
        ("AC5 gradient integrity", gradients),
        ("AC6 AUC oracle", auc_oracle),
        ("AC7 Nemenyi", nemenyi),
        ("AC8 invariant suite", invariants),
    ];
    let mut hard_failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (status, detail) = match check() {
            Outcome::Pass(m) => ("PASS", m),
            Outcome::Fail(m) => {
                hard_failures += 1;
                ("FAIL", m)
            }
            Outcome::Unavailable(m) => ("FAIL (unavailable)", m),
        };
        println!("{status:<18} {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
    }
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
