//! Knowledge-mode vectors for each question and a small autoencoder fitted
//! to them with the reconstruction loss.

use apgkt::corpus::build_qs_matrix;
use apgkt::modes::{decode_mode, encode_mode, reconstruction_loss, ModeAutoencoder, ModeTable};
use apgkt::params::{Adam, GradBuffer, ParamStore};
use apgkt::skillgraph::{build_skill_graph, skill_difficulty};
use apgkt::synth::{generate_synthetic, SynthConfig};
use apgkt::tape::{Activation, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> apgkt::Result<()> {
    let cfg = SynthConfig { n_students: 50, n_questions: 60, n_skills: 6, h_min: 1, h_max: 3, ..SynthConfig::default() };
    let log = generate_synthetic(&cfg)?.log;
    let qs = build_qs_matrix(&log);
    let graph = build_skill_graph(&qs);
    let diff = skill_difficulty(&log, &qs);
    let table = ModeTable::build(&qs, &graph, &diff)?;
    println!("h_max = {}, vectors of width {}", table.h_max, table.width());
    for (q, mv) in table.vectors.iter().take(3).enumerate() {
        println!("q{q}: skills by difficulty {:?} -> {:?}", mv.idx, mv.m.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let ae = ModeAutoencoder::new(&mut store, table.width(), 4, Activation::Tanh, Activation::Tanh, &mut rng);
    let mut opt = Adam::new(&store, 0.01);
    let x = table.matrix();
    for epoch in 0..=400 {
        let mut tape = Tape::new(&store);
        let input = tape.constant(x.clone());
        let (_, loss) = ae.forward(&mut tape, input);
        if epoch % 100 == 0 {
            println!("epoch {epoch:>3}: reloss {:.5}", tape.scalar(loss));
        }
        let g = tape.backward(loss);
        let mut buf = GradBuffer::zeros_like(&store);
        tape.accumulate_param_grads(&g, &mut buf);
        drop(tape);
        opt.step(&mut store, &buf);
    }

    // The standalone encode/decode path agrees with the tape.
    let p = ae.values(&store);
    let pairs = table
        .vectors
        .iter()
        .map(|mv| Ok((mv.m.clone(), decode_mode(&encode_mode(mv, &p)?, &p)?)))
        .collect::<apgkt::Result<Vec<_>>>()?;
    println!("final reloss {:.5}", reconstruction_loss(&pairs)?);
    Ok(())
}
