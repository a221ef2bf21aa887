//! Generate an imbalanced multi-label dataset and split it into tasks with
//! disjoint class sets.

use maucl::dataset::{class_stats, generate_synthetic, split_tasks, GeneratorConfig, ImbalanceProfile, SplitConfig};

fn main() -> maucl::Result<()> {
    let ds = generate_synthetic(&GeneratorConfig {
        dim: 16,
        num_classes: 9,
        num_tasks: 3,
        n_per_task: 400,
        imbalance_profile: ImbalanceProfile::LogSpaced { log_spaced: [0.03, 0.4] },
        label_correlation: 0.2,
        seed: 1,
        prototype_scale: 3.0,
        noise: 1.0,
    })?;
    println!("{} examples, {} classes", ds.len(), ds.num_classes());
    for s in class_stats(&ds) {
        println!("class {:>2}: {:>4} pos {:>5} neg  tau {:.3}", s.class, s.pos, s.neg, s.tau);
    }

    let seq = split_tasks(&ds, &SplitConfig { num_tasks: 3, seed: 2, negative_padding: Default::default() })?;
    for task in &seq.tasks {
        println!("task {}: classes {:?}, {} examples", task.id, task.classes(), task.data.len());
    }
    Ok(())
}
