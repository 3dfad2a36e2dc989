//! Mean-aggregation propagation over the question–skill bigraph.

use apgkt::corpus::QsMatrix;
use apgkt::embed::{aggregate_embeddings, BigraphNeighborhood, EmbeddingTable, GcnLayers};
use apgkt::params::ParamStore;
use apgkt::tape::{Activation, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> apgkt::Result<()> {
    let qs = QsMatrix::from_skill_sets(&[vec![0], vec![0, 1], vec![1, 2], vec![2]], 3)?;
    let hood = BigraphNeighborhood::build(&qs, 10, 0);
    for (node, list) in hood.neighbors.iter().enumerate() {
        let label = if node < hood.n_questions { format!("q{node}") } else { format!("s{}", node - hood.n_questions) };
        println!("{label} <- {list:?}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let table = EmbeddingTable::new(&mut store, qs.n_questions(), qs.n_skills(), 4, &mut rng);
    for n_layers in [0, 1, 2] {
        let mut s = store.clone();
        let layers = GcnLayers::new(&mut s, n_layers, 4, Activation::Tanh, &mut rng);
        let mut tape = Tape::new(&s);
        let (q, sk) = aggregate_embeddings(&mut tape, &table, &hood, &layers);
        println!("{n_layers} layer(s): q̃0 = {:.3}, s̃0 = {:.3}", tape.value(q).row(0), tape.value(sk).row(0));
    }
    Ok(())
}
