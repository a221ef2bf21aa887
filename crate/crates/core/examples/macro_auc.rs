//! Macro-AUC with both tie rules, and forgetting from an accuracy matrix.

use maucl::eval::{class_auc, forgetting, macro_auc, ForgettingConvention, RunRecord, TieRule};
use maucl::loss::ScoreMatrix;

fn main() -> maucl::Result<()> {
    let scores = [0.9, 0.5, 0.5, 0.2];
    let labels = [true, true, false, false];
    for ties in [TieRule::Strict, TieRule::Half] {
        println!("{ties:?}: AUC {:.3}", class_auc(&scores, &labels, ties).unwrap());
    }

    // Class 2 has no positives and is skipped.
    let s = ScoreMatrix::from_rows(&[vec![0.8, 0.1, 0.3], vec![0.2, 0.7, 0.1], vec![0.4, 0.6, 0.2]]);
    let y: [&[u8]; 3] = [&[1, 0, 0], &[0, 1, 0], &[0, 0, 0]];
    let rep = macro_auc(&s, &y, &[0, 1, 2], TieRule::Strict);
    println!("macro {:?}, skipped {:?}", rep.macro_auc, rep.skipped);

    let mut run = RunRecord::default();
    run.push_checkpoint(vec![0.90]);
    run.push_checkpoint(vec![0.86, 0.92]);
    // Task 1 ends above its earlier best, which only the previous-best
    // convention reports as negative forgetting.
    run.push_checkpoint(vec![0.95, 0.89, 0.91]);
    for conv in [ForgettingConvention::RunningMax, ForgettingConvention::PreviousBest] {
        let f = forgetting(&run, 3, conv)?;
        let per: Vec<String> = f.per_task.iter().map(|v| format!("{v:+.3}")).collect();
        println!("{conv:?}: per task [{}], mean {:+.3}", per.join(", "), f.mean);
    }
    Ok(())
}
