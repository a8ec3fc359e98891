//! Skip-gram training with negative sampling.

use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sgns::sigmoid;
use super::walks::WalkCorpus;
use super::WalkConfig;
use crate::error::{Error, Result};
use crate::model::{IncidentEmbedding, Interner};

const MIN_LR_FRACTION: f32 = 1e-4;

/// Parameter storage seen by the update loop.
trait Params {
    fn get(&self, i: usize) -> f32;
    fn add(&mut self, i: usize, d: f32);
}

struct Plain<'a>(&'a mut [f32]);

impl Params for Plain<'_> {
    #[inline(always)]
    fn get(&self, i: usize) -> f32 {
        self.0[i]
    }
    #[inline(always)]
    fn add(&mut self, i: usize, d: f32) {
        self.0[i] += d;
    }
}

/// Lock-free shared storage; concurrent updates may be lost.
struct Shared<'a>(&'a [AtomicU32]);

impl Params for Shared<'_> {
    #[inline(always)]
    fn get(&self, i: usize) -> f32 {
        f32::from_bits(self.0[i].load(Ordering::Relaxed))
    }
    #[inline(always)]
    fn add(&mut self, i: usize, d: f32) {
        let v = self.get(i) + d;
        self.0[i].store(v.to_bits(), Ordering::Relaxed);
    }
}

/// Center and context vectors during training.
#[derive(Debug, Clone)]
pub struct SgnsModel {
    pub vocab: Interner,
    pub dim: usize,
    pub center: Vec<f32>,
    pub context: Vec<f32>,
    cfg: WalkConfig,
    noise: WeightedIndex<f64>,
    total_tokens: usize,
    processed: usize,
}

impl SgnsModel {
    pub fn new(corpus: &WalkCorpus, cfg: &WalkConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.token_count() == 0 {
            return Err(Error::InvalidInput("empty walk corpus".into()));
        }
        let v = corpus.vocab.len();
        if v < 2 {
            return Err(Error::InvalidInput(
                "vocabulary of size 1 has nothing to contrast".into(),
            ));
        }
        let dim = cfg.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let half = 0.5 / dim as f32;
        let center = (0..v * dim)
            .map(|_| rng.random_range(-half..half))
            .collect();
        let weights: Vec<f64> = corpus
            .counts()
            .iter()
            .map(|&c| (c as f64).powf(0.75))
            .collect();
        let noise = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidInput(format!("negative sampling table: {e}")))?;
        Ok(Self {
            vocab: corpus.vocab.clone(),
            dim,
            center,
            context: vec![0.0; v * dim],
            cfg: cfg.clone(),
            noise,
            total_tokens: corpus.token_count() * cfg.epochs,
            processed: 0,
        })
    }

    fn lr_at(&self, processed: usize) -> f32 {
        let frac = 1.0 - processed as f32 / (self.total_tokens as f32 + 1.0);
        self.cfg.learning_rate as f32 * frac.max(MIN_LR_FRACTION)
    }

    /// One pass over the corpus.
    pub fn train_epoch(&mut self, corpus: &WalkCorpus, epoch: usize) {
        if self.cfg.workers <= 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            rng.set_stream(1 + epoch as u64);
            let total = self.total_tokens;
            let lr0 = self.cfg.learning_rate as f32;
            let mut processed = self.processed;
            let (dim, window, negatives) = (self.dim, self.cfg.window, self.cfg.negatives);
            let noise = &self.noise;
            let mut center = Plain(&mut self.center);
            let mut context = Plain(&mut self.context);
            for seq in &corpus.sequences {
                let frac = 1.0 - processed as f32 / (total as f32 + 1.0);
                let lr = lr0 * frac.max(MIN_LR_FRACTION);
                train_sequence(
                    seq,
                    dim,
                    window,
                    negatives,
                    lr,
                    noise,
                    &mut rng,
                    &mut center,
                    &mut context,
                );
                processed += seq.len();
            }
            self.processed = processed;
        } else {
            self.train_epoch_shared(corpus, epoch);
        }
    }

    fn train_epoch_shared(&mut self, corpus: &WalkCorpus, epoch: usize) {
        let to_atomic = |v: &[f32]| -> Vec<AtomicU32> {
            v.iter().map(|x| AtomicU32::new(x.to_bits())).collect()
        };
        let center = to_atomic(&self.center);
        let context = to_atomic(&self.context);
        let processed = AtomicUsize::new(self.processed);
        let workers = self.cfg.workers;
        let chunk = corpus.sequences.len().div_ceil(workers).max(1);
        let this = &*self;
        std::thread::scope(|s| {
            for (w, part) in corpus.sequences.chunks(chunk).enumerate() {
                let (center, context, processed) = (&center, &context, &processed);
                s.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(this.cfg.seed);
                    rng.set_stream(((1 + epoch as u64) << 16) | w as u64);
                    let mut c = Shared(center);
                    let mut x = Shared(context);
                    for seq in part {
                        let lr = this.lr_at(processed.load(Ordering::Relaxed));
                        train_sequence(
                            seq,
                            this.dim,
                            this.cfg.window,
                            this.cfg.negatives,
                            lr,
                            &this.noise,
                            &mut rng,
                            &mut c,
                            &mut x,
                        );
                        processed.fetch_add(seq.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let back = |v: Vec<AtomicU32>| -> Vec<f32> {
            v.into_iter()
                .map(|a| f32::from_bits(a.into_inner()))
                .collect()
        };
        self.center = back(center);
        self.context = back(context);
        self.processed = processed.into_inner();
    }

    /// Mean SGNS loss over fixed `(center, context, negatives)` triples.
    pub fn loss(&self, batch: &[(u32, u32, Vec<u32>)]) -> f64 {
        let vec64 = |v: &[f32], i: u32| -> Vec<f64> {
            v[i as usize * self.dim..(i as usize + 1) * self.dim]
                .iter()
                .map(|&x| x as f64)
                .collect()
        };
        let mut total = 0.0;
        for (c, x, negs) in batch {
            let cv = vec64(&self.center, *c);
            let xv = vec64(&self.context, *x);
            let nv: Vec<Vec<f64>> = negs.iter().map(|&n| vec64(&self.context, n)).collect();
            let nr: Vec<&[f64]> = nv.iter().map(|v| v.as_slice()).collect();
            total += super::sgns::sgns_loss(&cv, &xv, &nr);
        }
        total / batch.len().max(1) as f64
    }

    pub fn into_embedding(self) -> Result<IncidentEmbedding> {
        IncidentEmbedding::new(self.dim, self.vocab, self.center)
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn train_sequence<P: Params>(
    seq: &[u32],
    dim: usize,
    window: usize,
    negatives: usize,
    lr: f32,
    noise: &WeightedIndex<f64>,
    rng: &mut ChaCha8Rng,
    center: &mut P,
    context: &mut P,
) {
    let mut cbuf = vec![0.0f32; dim];
    let mut grad = vec![0.0f32; dim];
    for (pos, &w) in seq.iter().enumerate() {
        let lo = pos.saturating_sub(window);
        let hi = (pos + window + 1).min(seq.len());
        let cbase = w as usize * dim;
        for (j, &x) in seq.iter().enumerate().take(hi).skip(lo) {
            if j == pos {
                continue;
            }
            for (d, b) in cbuf.iter_mut().enumerate() {
                *b = center.get(cbase + d);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            update_target(&cbuf, &mut grad, context, x as usize * dim, 1.0, lr);
            for _ in 0..negatives {
                let k = noise.sample(rng) as u32;
                if k == x {
                    continue;
                }
                update_target(&cbuf, &mut grad, context, k as usize * dim, 0.0, lr);
            }
            for (d, &g) in grad.iter().enumerate() {
                center.add(cbase + d, g);
            }
        }
    }
}

#[inline(always)]
fn update_target<P: Params>(
    cbuf: &[f32],
    grad: &mut [f32],
    context: &mut P,
    base: usize,
    label: f32,
    lr: f32,
) {
    let mut f = 0.0f32;
    for (d, &c) in cbuf.iter().enumerate() {
        f += c * context.get(base + d);
    }
    // descent step on -log s(f) (label 1) or -log s(-f) (label 0)
    let g = (label - sigmoid(f)) * lr;
    for (d, &c) in cbuf.iter().enumerate() {
        grad[d] += g * context.get(base + d);
        context.add(base + d, g * c);
    }
}

/// Trains center vectors on the corpus. With one worker the result is a
/// pure function of `(corpus, cfg)`.
pub fn train(corpus: &WalkCorpus, cfg: &WalkConfig) -> Result<IncidentEmbedding> {
    let mut model = SgnsModel::new(corpus, cfg)?;
    for e in 0..cfg.epochs {
        model.train_epoch(corpus, e);
    }
    model.into_embedding()
}
