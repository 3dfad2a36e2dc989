//! Average ranks and critical difference over a table of AUCs.

use apgkt::harness::nemenyi::{critical_difference, AucTable};
use apgkt::harness::{nemenyi_test, reference_table, Alpha};

fn show(title: &str, table: &AucTable, alpha: Alpha) -> apgkt::Result<()> {
    let r = nemenyi_test(table, alpha)?;
    println!("{title} (alpha {}, CD {:.3})", alpha.value(), r.critical_difference);
    for (m, rank) in r.models.iter().zip(&r.average_ranks) {
        println!("  {m:<10} {rank:.2}");
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reference = reference_table();
    show("reference table", &reference, Alpha::P05)?;
    show("reference table", &reference, Alpha::P10)?;

    // Ties share the mean of the ranks they span.
    let tied = AucTable {
        models: vec!["a".into(), "b".into(), "c".into()],
        datasets: vec!["x".into(), "y".into()],
        values: vec![vec![0.8, 0.7], vec![0.8, 0.9], vec![0.6, 0.9]],
    };
    show("tied table", &tied, Alpha::P05)?;

    for k in 2..=6 {
        println!("CD(k={k}, N=10) = {:.3}", critical_difference(k, 10, Alpha::P05)?);
    }
    let svg = std::env::temp_dir().join("apgkt-cd.svg");
    std::fs::write(&svg, nemenyi_test(&reference, Alpha::P05)?.to_svg())?;
    println!("diagram -> {}", svg.display());
    Ok(())
}
