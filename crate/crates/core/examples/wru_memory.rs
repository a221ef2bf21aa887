//! Weight Retain Updating versus random selection: how well does a small
//! memory preserve each class's positive-to-negative ratio?
//!
//! A new task is selected greedily; older shares shrink by random removal,
//! so the latest task shows the selection quality most directly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use maucl::dataset::{generate_synthetic, split_tasks, ClassCount, GeneratorConfig, ImbalanceProfile, SplitConfig};
use maucl::memory::{ratio_discrepancy, MemoryBuffer, UpdatePolicy, DEFAULT_WRU_SUBSET};

fn main() -> maucl::Result<()> {
    let ds = generate_synthetic(&GeneratorConfig {
        dim: 8,
        num_classes: 8,
        num_tasks: 2,
        n_per_task: 500,
        imbalance_profile: ImbalanceProfile::LogSpaced { log_spaced: [0.03, 0.4] },
        label_correlation: 0.2,
        seed: 4,
        prototype_scale: 3.0,
        noise: 1.0,
    })?;
    let seq = split_tasks(&ds, &SplitConfig { num_tasks: 2, seed: 5, negative_padding: Default::default() })?;

    for (name, policy) in [
        ("wru", UpdatePolicy::Wru { subset: Some(DEFAULT_WRU_SUBSET) }),
        ("random", UpdatePolicy::Random),
    ] {
        let mut mem = MemoryBuffer::new(60)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for task in &seq.tasks {
            mem.update(policy, task.id, &task.data, &mut rng)?;
        }
        println!("{name}: {} examples stored", mem.len());
        for task in &seq.tasks {
            let stored = mem.task(task.id).expect("every task keeps a share");
            let view = stored.view_counts();
            let target: Vec<ClassCount> = task.classes().iter().map(|&k| task.data.count(k)).collect();
            let kept: Vec<ClassCount> = task.classes().iter().map(|&k| view[&k]).collect();
            println!(
                "  task {}: {} kept, ratio discrepancy {:.4}, original counts retained: {}",
                task.id,
                stored.examples.len(),
                ratio_discrepancy(&target, &kept),
                stored.stored_counts.is_some(),
            );
        }
    }
    Ok(())
}
