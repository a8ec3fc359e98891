//! Incident-type embeddings learned from walks over failure-impact graphs.

pub mod sgns;
pub mod train;
pub mod walks;

use crate::error::{Error, Result};

pub use sgns::{emb_softmax, sgns_gradient, sgns_loss, SgnsGrad};
pub use train::{train, SgnsModel};
pub use walks::{generate_walks, WalkCorpus};

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub walk_length: usize,
    pub walks_per_start: usize,
    /// Skip-gram context radius.
    pub window: usize,
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    /// Initial step size, decayed linearly to near zero.
    pub learning_rate: f64,
    pub seed: u64,
    /// 1 trains deterministically; more uses lock-free shared updates.
    pub workers: usize,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 40,
            walks_per_start: 10,
            window: 10,
            dim: 128,
            epochs: 5,
            negatives: 5,
            learning_rate: 0.025,
            seed: 0,
            workers: 1,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("walk_length", self.walk_length),
            ("walks_per_start", self.walks_per_start),
            ("window", self.window),
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("negatives", self.negatives),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.window > self.walk_length {
            return Err(Error::Config("window must not exceed walk_length".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
        let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        d / (na * nb)
    }

    fn small_cfg() -> WalkConfig {
        WalkConfig {
            dim: 32,
            window: 5,
            ..WalkConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(WalkConfig::default().validate().is_ok());
        let bad = WalkConfig {
            window: 50,
            ..WalkConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = WalkConfig {
            dim: 0,
            ..WalkConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn singleton_vocabulary_rejected() {
        let c = WalkCorpus::from_named(&[vec!["A"; 40]]);
        assert!(train(&c, &small_cfg()).is_err());
        assert!(train(&WalkCorpus::default(), &small_cfg()).is_err());
    }

    #[test]
    fn alternating_pair_attracts() {
        let mut seqs: Vec<Vec<&str>> = (0..100)
            .map(|_| {
                (0..40)
                    .map(|i| if i % 2 == 0 { "A" } else { "B" })
                    .collect()
            })
            .collect();
        seqs.extend((0..100).map(|_| vec!["C"; 40]));
        seqs.extend((0..100).map(|k| (0..40).map(|i| ["D", "E", "F", "G"][(i + k) % 4]).collect()));
        let corpus = WalkCorpus::from_named(&seqs);
        let emb = train(&corpus, &WalkConfig::default()).unwrap();
        let v = |n| emb.vector_of(n).unwrap();
        let ab = cosine(v("A"), v("B"));
        assert!(ab > 0.9, "cos(A,B) = {ab}");
        assert!(ab > cosine(v("A"), v("C")));
    }

    #[test]
    fn single_worker_is_bit_identical() {
        let seqs: Vec<Vec<&str>> = (0..20)
            .map(|k| {
                (0..40)
                    .map(|i| ["A", "B", "C"][(i * k + i / 3) % 3])
                    .collect()
            })
            .collect();
        let corpus = WalkCorpus::from_named(&seqs);
        let a = train(&corpus, &small_cfg()).unwrap();
        let b = train(&corpus, &small_cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.types().names(), &["A", "B", "C"]);
    }

    #[test]
    fn multi_worker_trains() {
        let seqs: Vec<Vec<&str>> = (0..100)
            .map(|_| {
                (0..40)
                    .map(|i| if i % 2 == 0 { "A" } else { "B" })
                    .collect()
            })
            .collect();
        let corpus = WalkCorpus::from_named(&seqs);
        let cfg = WalkConfig {
            workers: 3,
            ..small_cfg()
        };
        let emb = train(&corpus, &cfg).unwrap();
        assert!(emb.vector_of("A").unwrap().iter().all(|x| x.is_finite()));
    }
}
