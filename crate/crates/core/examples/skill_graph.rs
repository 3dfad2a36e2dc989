//! Skill co-occurrence graph and per-skill difficulty on a hand-built log.

use apgkt::corpus::{build_qs_matrix, InteractionLog, InteractionRecord, StudentSequence};
use apgkt::skillgraph::{build_skill_graph, matrix_csv, skill_difficulty};

fn student(id: &str, answers: &[(usize, bool)]) -> StudentSequence {
    let records = answers
        .iter()
        .enumerate()
        .map(|(position, &(question, correct))| InteractionRecord { question, correct, position })
        .collect();
    StudentSequence { student_id: id.into(), records }
}

fn main() -> apgkt::Result<()> {
    // q0 {s0,s1}, q1 {s1,s2}, q2 {s0,s1,s2}, q3 {s3}
    let log = InteractionLog::from_parts(
        vec![vec![0, 1], vec![1, 2], vec![0, 1, 2], vec![3]],
        4,
        vec![
            student("ann", &[(0, true), (1, false), (2, false)]),
            student("bob", &[(1, true), (2, true), (0, true)]),
        ],
    )?;
    let qs = build_qs_matrix(&log);
    let graph = build_skill_graph(&qs);
    println!("co-occurrence counts:\n{}", matrix_csv(&graph.cooccurrence.mapv(|c| c as f64)));
    println!("row-normalized SS (s3 never co-occurs, so its row stays zero):\n{}", matrix_csv(&graph.ss));

    let diff = skill_difficulty(&log, &qs);
    for (s, d) in diff.0.iter().enumerate() {
        println!("skill {s}: difficulty {d:.3}");
    }
    Ok(())
}
