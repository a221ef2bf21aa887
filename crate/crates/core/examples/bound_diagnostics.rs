//! Trains batch RLDAM models at several margin scales and evaluates the
//! generalization bound terms. Without margins the complexity term is
//! unbounded.

use maucl::dataset::{class_stats, generate_synthetic, GeneratorConfig, ImbalanceProfile};
use maucl::eval::{batch_bound, bound_inputs, evaluate, TieRule};
use maucl::loss::{build_margins, BaseLoss, LossConfig, LossKind};
use maucl::model::{train_task, Scorer, SgdConfig};

fn main() -> maucl::Result<()> {
    let ds = generate_synthetic(&GeneratorConfig {
        dim: 8,
        num_classes: 4,
        num_tasks: 1,
        n_per_task: 1000,
        imbalance_profile: ImbalanceProfile::LogSpaced { log_spaced: [0.03, 0.4] },
        label_correlation: 0.2,
        seed: 9,
        prototype_scale: 3.0,
        noise: 1.0,
    })?;
    let sgd = SgdConfig { eta: 0.05, batch_size: 32, epochs: 20, weight_decay: 1e-5, momentum: 0.0, seed: 1 };
    let stats = class_stats(&ds);

    for lambda in [0.25, 0.5, 1.0, 2.0] {
        let sched = build_margins(stats.iter().map(|s| (s.class, s.pos)), lambda)?;
        let cfg = LossConfig { loss: LossKind::Rldam, base: BaseLoss::Hinge, lambda, ..LossConfig::default() };
        let mut scorer = Scorer::zeros(ds.num_classes(), ds.dim(), Some(5.0));
        train_task(&mut scorer, 1, &ds, None, &cfg, &sgd)?;
        let auc = evaluate(&scorer, &ds, TieRule::Strict)?.macro_auc.unwrap_or(f64::NAN);
        let inputs = bound_inputs(&scorer, &ds, &sched, cfg.base, 0.05)?;
        let b = batch_bound(&inputs, 0.0)?;
        println!(
            "lambda {lambda:<4}: train Macro-AUC {auc:.4}, complexity {:.3}, confidence {:.3}",
            b.complexity, b.confidence
        );
    }
    Ok(())
}
