//! Generate a synthetic dataset whose answers depend on paths through a
//! hidden skill graph, and write it in the loader's CSV layout.

use apgkt::corpus::load_interactions;
use apgkt::synth::{generate_synthetic, SynthConfig};

fn main() -> apgkt::Result<()> {
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("apgkt-synth"));
    for gamma in [1.0, 0.0] {
        let cfg = SynthConfig { n_students: 100, gamma, ..SynthConfig::default() };
        let data = generate_synthetic(&cfg)?;
        let correct = data.log.records().filter(|r| r.correct).count();
        println!(
            "gamma {gamma}: {} students, {} interactions, {:.1}% correct",
            data.log.n_students(),
            data.log.n_interactions(),
            100.0 * correct as f64 / data.log.n_interactions() as f64
        );
        let q = 0;
        println!("  q{q} path {:?}, p(correct | u0) = {:.3}", data.truth.path(q), data.truth.p_correct(0, q));
        let out = dir.join(format!("gamma{gamma}"));
        data.write(&out)?;
        let back = load_interactions(&out.join("interactions.csv"), &out.join("qmatrix.csv"))?;
        println!("  wrote {} and reloaded {} interactions", out.display(), back.n_interactions());
    }
    Ok(())
}
