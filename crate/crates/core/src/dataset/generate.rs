use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Example, MultiLabelDataset};
use crate::rng;
use crate::{Error, Result};

/// Per-class positive rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImbalanceProfile {
    /// Explicit rate per class.
    Rates(Vec<f64>),
    /// `K` rates geometrically spaced from `min` to `max`.
    LogSpaced { log_spaced: [f64; 2] },
}

impl ImbalanceProfile {
    pub fn rates(&self, num_classes: usize) -> Vec<f64> {
        match self {
            ImbalanceProfile::Rates(r) => r.clone(),
            ImbalanceProfile::LogSpaced {
                log_spaced: [lo, hi],
            } => {
                if num_classes == 1 {
                    return vec![*lo];
                }
                let step = (hi / lo).ln() / (num_classes - 1) as f64;
                (0..num_classes)
                    .map(|k| lo * (step * k as f64).exp())
                    .collect()
            }
        }
    }
}

fn default_prototype_scale() -> f64 {
    3.0
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "K")]
    pub num_classes: usize,
    #[serde(rename = "T")]
    pub num_tasks: usize,
    pub n_per_task: usize,
    pub imbalance_profile: ImbalanceProfile,
    pub label_correlation: f64,
    pub seed: u64,
    /// Norm of every class prototype.
    #[serde(default = "default_prototype_scale")]
    pub prototype_scale: f64,
    /// Standard deviation of the isotropic feature noise.
    #[serde(default = "default_noise")]
    pub noise: f64,
}

impl GeneratorConfig {
    /// Total number of generated examples.
    pub fn num_examples(&self) -> usize {
        self.n_per_task * self.num_tasks
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim == 0 || self.num_classes == 0 || self.num_tasks == 0 {
            return bad("d, K and T must be positive".into());
        }
        if self.num_classes < self.num_tasks {
            return bad(format!(
                "K = {} must be at least T = {}",
                self.num_classes, self.num_tasks
            ));
        }
        if self.n_per_task < 4 {
            return bad(format!("n_per_task = {} must be >= 4", self.n_per_task));
        }
        if !(0.0..=1.0).contains(&self.label_correlation) {
            return bad(format!(
                "label_correlation {} outside [0, 1]",
                self.label_correlation
            ));
        }
        if !(self.prototype_scale.is_finite() && self.noise.is_finite() && self.noise >= 0.0) {
            return bad("prototype_scale and noise must be finite, noise >= 0".into());
        }
        let rates = self.imbalance_profile.rates(self.num_classes);
        if rates.len() != self.num_classes {
            return bad(format!(
                "imbalance_profile has {} rates, expected {}",
                rates.len(),
                self.num_classes
            ));
        }
        let n = self.num_examples() as f64;
        for (k, &r) in rates.iter().enumerate() {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("rate {r} of class {k} not in (0, 1)"));
            }
            if r * n < 2.0 {
                return bad(format!(
                    "class {k} expects {:.3} positives (< 2) with rate {r} over {n} examples",
                    r * n
                ));
            }
        }
        Ok(())
    }
}

/// Draws an imbalanced multi-label dataset in which every class is linearly
/// detectable along its own prototype direction.
///
/// Labels are independent Bernoulli draws at the profile rates. With
/// probability `label_correlation`, an example with at least one relevant
/// label gains one more, drawn among its irrelevant classes proportionally to
/// their rates. Features are `sum_k y_k * mu_k + noise * eps` with prototypes
/// `mu_k` uniform on the sphere of radius `prototype_scale`.
pub fn generate_synthetic(cfg: &GeneratorConfig) -> Result<MultiLabelDataset> {
    cfg.validate()?;
    let rates = cfg.imbalance_profile.rates(cfg.num_classes);
    let mut rng = rng::stream(cfg.seed, &[rng::GENERATE]);

    let prototypes: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| {
            let v: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| cfg.prototype_scale * x / norm).collect()
        })
        .collect();

    let mut examples = Vec::with_capacity(cfg.num_examples());
    for _ in 0..cfg.num_examples() {
        let mut labels: Vec<u8> = rates.iter().map(|&r| u8::from(rng.random_bool(r))).collect();
        let relevant = labels.contains(&1);
        if relevant && rng.random_bool(cfg.label_correlation) {
            if let Some(k) = pick_additional(&labels, &rates, &mut rng) {
                labels[k] = 1;
            }
        }
        let mut features: Vec<f64> = (0..cfg.dim)
            .map(|_| cfg.noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for (k, proto) in prototypes.iter().enumerate() {
            if labels[k] == 1 {
                for (f, p) in features.iter_mut().zip(proto) {
                    *f += p;
                }
            }
        }
        examples.push(Example::new(features, labels));
    }
    MultiLabelDataset::new(
        cfg.dim,
        cfg.num_classes,
        (0..cfg.num_classes).collect(),
        examples,
    )
}

fn pick_additional<R: Rng>(labels: &[u8], rates: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = rates
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 0)
        .map(|(r, _)| r)
        .sum();
    if total <= 0.0 {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (k, (&r, &y)) in rates.iter().zip(labels).enumerate() {
        if y == 1 {
            continue;
        }
        last = Some(k);
        if u < r {
            return Some(k);
        }
        u -= r;
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(rates: Vec<f64>, n: usize, corr: f64) -> GeneratorConfig {
        GeneratorConfig {
            dim: 4,
            num_classes: rates.len(),
            num_tasks: 1,
            n_per_task: n,
            imbalance_profile: ImbalanceProfile::Rates(rates),
            label_correlation: corr,
            seed: 11,
            prototype_scale: 3.0,
            noise: 1.0,
        }
    }

    #[test]
    fn balanced_rates_stay_balanced() {
        let ds = generate_synthetic(&cfg(vec![0.5, 0.5], 100, 0.0)).unwrap();
        for k in 0..2 {
            let p = ds.pos_index(k).len();
            assert!((35..=65).contains(&p), "class {k}: {p}");
        }
    }

    #[test]
    fn rare_class_within_binomial_band() {
        // 3-sigma band of Binomial(1000, 0.05).
        let (n, p) = (1000.0_f64, 0.05_f64);
        let mean = n * p;
        let sd = (n * p * (1.0 - p)).sqrt();
        let (lo, hi) = (mean - 3.0 * sd, mean + 3.0 * sd);
        assert!(lo >= 25.0 && hi <= 75.0);
        let ds = generate_synthetic(&cfg(vec![0.05, 0.3], 1000, 0.0)).unwrap();
        let got = ds.pos_index(0).len() as f64;
        assert!(got >= lo && got <= hi, "{got} not in [{lo}, {hi}]");
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(vec![0.2, 0.1, 0.4], 200, 0.3);
        assert_eq!(generate_synthetic(&c).unwrap(), generate_synthetic(&c).unwrap());
        let mut other = c.clone();
        other.seed += 1;
        assert_ne!(generate_synthetic(&c).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn correlation_creates_multi_label_examples() {
        let ds = generate_synthetic(&cfg(vec![0.1, 0.1], 400, 1.0)).unwrap();
        let both = ds
            .examples()
            .iter()
            .filter(|e| e.positives_in(&[0, 1]) == 2)
            .count();
        assert!(both > 20);
    }

    #[test]
    fn rejects_too_rare_classes() {
        assert!(generate_synthetic(&cfg(vec![0.001, 0.5], 100, 0.0)).is_err());
        assert!(generate_synthetic(&cfg(vec![0.0, 0.5], 100, 0.0)).is_err());
        let mut c = cfg(vec![0.5], 3, 0.0);
        assert!(c.validate().is_err());
        c.n_per_task = 10;
        c.num_tasks = 2;
        assert!(c.validate().is_err(), "K < T");
    }

    #[test]
    fn log_spaced_profile_endpoints() {
        let r = ImbalanceProfile::LogSpaced {
            log_spaced: [0.02, 0.4],
        }
        .rates(12);
        assert_eq!(r.len(), 12);
        assert!((r[0] - 0.02).abs() < 1e-15);
        assert!((r[11] - 0.4).abs() < 1e-12);
        assert!(r.windows(2).all(|w| w[0] < w[1]));
    }
}
