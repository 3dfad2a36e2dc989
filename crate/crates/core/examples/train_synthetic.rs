//! Train the full model, the no-modes ablation and the recurrent baseline
//! on one synthetic dataset and compare test AUC.

use apgkt::harness::{run_on_log, ExperimentConfig};
use apgkt::model::Variant;
use apgkt::synth::{generate_synthetic, SynthConfig};

fn main() -> apgkt::Result<()> {
    let data = generate_synthetic(&SynthConfig { n_students: 200, ..SynthConfig::default() })?;
    for variant in [Variant::Apgkt, Variant::ApgktNoModes, Variant::DktBaseline] {
        let mut cfg = ExperimentConfig { name: "synthetic".into(), max_epochs: 15, seed: 1, ..ExperimentConfig::default() };
        cfg.model.variant = variant;
        cfg.model.d = 32;
        cfg.model.d_m = 16;
        let run = run_on_log(&cfg, &data.log)?;
        let r = &run.report;
        println!(
            "{:<16} AUC {:.4}  best epoch {:>2}/{}  {} params  {:.1}s",
            variant.as_str(),
            r.test_auc,
            r.best_epoch,
            r.epochs.len(),
            r.n_parameters,
            r.wall_clock_secs
        );
    }
    Ok(())
}
