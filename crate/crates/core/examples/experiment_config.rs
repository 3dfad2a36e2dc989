//! Config-driven run end to end: write a dataset and a JSON config, run it,
//! then restore the checkpoint and score the same test split.

use std::sync::Arc;

use apgkt::harness::experiment::{graph_inputs, load_dataset, read_metrics};
use apgkt::harness::{evaluate_auc, run_experiment, Checkpoint, ExperimentConfig};
use apgkt::synth::{generate_synthetic, SynthConfig};
use apgkt::split_train_test;

fn main() -> apgkt::Result<()> {
    let root = std::env::temp_dir().join("apgkt-experiment");
    generate_synthetic(&SynthConfig { n_students: 80, n_questions: 200, n_skills: 10, ..SynthConfig::default() })?
        .write(&root.join("data"))?;

    let mut cfg = ExperimentConfig {
        name: "demo".into(),
        log_path: "data/interactions.csv".into(),
        qs_path: "data/qmatrix.csv".into(),
        output_dir: "runs/demo".into(),
        max_epochs: 5,
        ..ExperimentConfig::default()
    };
    cfg.model.d = 16;
    cfg.model.d_m = 8;
    let path = root.join("demo.json");
    cfg.save(&path)?;
    println!("config {} (hash {})", path.display(), &cfg.hash()[..12]);

    // Relative paths resolve against the config file's directory.
    let cfg = ExperimentConfig::load(&path)?;
    let report = run_experiment(&cfg)?;
    let metrics = read_metrics(&cfg.output_dir.join("metrics.json"))?;
    println!("test AUC {:.4} after {} epochs", metrics.test_auc, metrics.epochs.len());
    assert_eq!(metrics, report);

    let log = load_dataset(&cfg)?;
    let (train, test) = split_train_test(&log, cfg.split_ratio, cfg.seed)?;
    let inputs = Arc::new(graph_inputs(&cfg, &log, &train)?);
    let model = Checkpoint::read(&cfg.output_dir.join("checkpoint.json"))?.restore(inputs)?;
    println!("restored checkpoint scores {:.4}", evaluate_auc(&model, &test)?);
    Ok(())
}
