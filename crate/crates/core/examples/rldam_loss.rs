//! RLDAM margins and risk on a hand-made batch, next to RU and BCE.

use maucl::loss::{build_margins, task_risk_with_grad, ClassWeights, LossConfig, LossKind, ScoreMatrix};

fn main() -> maucl::Result<()> {
    // Class 0 is rare (1 positive of 6), class 1 is balanced.
    let labels: Vec<Vec<u8>> = vec![
        vec![1, 1],
        vec![0, 1],
        vec![0, 1],
        vec![0, 0],
        vec![0, 0],
        vec![0, 0],
    ];
    let scores = ScoreMatrix::from_rows(&[
        vec![0.3, 1.2],
        vec![0.1, 0.4],
        vec![-0.2, 0.9],
        vec![-0.5, -0.3],
        vec![0.4, 0.2],
        vec![-1.0, -0.8],
    ]);
    let ls: Vec<&[u8]> = labels.iter().map(Vec::as_slice).collect();
    let classes = [0, 1];
    let weights = ClassWeights::from_view(&ls, &classes);

    let sched = build_margins([(0, 1), (1, 3)], 1.0)?;
    for (k, m) in sched.iter() {
        println!("class {k}: margin {:.3}", m.pos);
    }

    for loss in [LossKind::Rldam, LossKind::Ru, LossKind::Bce] {
        let cfg = LossConfig { loss, ..LossConfig::default() };
        let r = task_risk_with_grad(&scores, &ls, &classes, &weights, &sched, &cfg, None)?;
        println!("{loss:?}: risk {:.4}", r.value);
    }
    Ok(())
}
