//! Attention-weighted interaction readout over pairs of state and query features.

use apgkt::model::{interaction_predict, AttentionValues};
use ndarray::array;

fn main() -> apgkt::Result<()> {
    // Two historical states and one current state on the f_i side,
    // the question and two of its skills on the f_j side.
    let fi = array![[0.4, -0.2, 0.1], [0.0, 0.3, -0.5], [0.6, 0.1, 0.2]];
    let fj = array![[0.5, 0.0, 0.3], [0.2, -0.4, 0.1], [-0.1, 0.2, 0.6]];
    let att = AttentionValues { w_state: vec![0.5, -0.3, 0.2], w_query: vec![0.1, 0.4, -0.2], b: 0.0 };
    let pred = interaction_predict(&fi, &fj, &att)?;
    println!("p(correct) = {:.4}", pred.p);
    println!("pair weights (rows f_i, columns f_j), sum {:.6}:", pred.alpha.sum());
    for row in pred.alpha.rows() {
        println!("  {:.4}", row);
    }
    Ok(())
}
