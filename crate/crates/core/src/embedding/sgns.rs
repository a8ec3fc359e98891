//! Skip-gram negative-sampling objective for one (center, context) pair
//! and the full-softmax visiting probability used for evaluation.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::IncidentEmbedding;

#[inline]
pub fn sigmoid<F: Float>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `log(sigmoid(x))` without overflow.
#[inline]
pub fn log_sigmoid<F: Float>(x: F) -> F {
    -((-x).max(F::zero()) + (-x.abs()).exp().ln_1p())
}

#[inline]
fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |s, (&x, &y)| s + x * y)
}

/// `-log s(c.ctx) - sum_k log s(-c.neg_k)`.
pub fn sgns_loss<F: Float>(center: &[F], context: &[F], negs: &[&[F]]) -> F {
    let mut l = -log_sigmoid(dot(center, context));
    for n in negs {
        l = l - log_sigmoid(-dot(center, n));
    }
    l
}

/// Gradients of [`sgns_loss`] with respect to every input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGrad<F> {
    pub center: Vec<F>,
    pub context: Vec<F>,
    pub negs: Vec<Vec<F>>,
}

pub fn sgns_gradient<F: Float>(center: &[F], context: &[F], negs: &[&[F]]) -> SgnsGrad<F> {
    let dim = center.len();
    let mut g = SgnsGrad {
        center: vec![F::zero(); dim],
        context: vec![F::zero(); dim],
        negs: vec![vec![F::zero(); dim]; negs.len()],
    };
    // d/dx of -log s(x) is s(x) - 1; of -log s(-x) is s(x)
    let gp = sigmoid(dot(center, context)) - F::one();
    for d in 0..dim {
        g.center[d] = gp * context[d];
        g.context[d] = gp * center[d];
    }
    for (k, n) in negs.iter().enumerate() {
        let gn = sigmoid(dot(center, n));
        for d in 0..dim {
            g.center[d] = g.center[d] + gn * n[d];
            g.negs[k][d] = gn * center[d];
        }
    }
    g
}

/// Probability of visiting type `j` from type `i` under a full softmax over
/// the vocabulary.
pub fn emb_softmax(emb: &IncidentEmbedding, i: &str, j: &str) -> Result<f64> {
    let vi = emb.vector_of(i)?;
    let jx = emb
        .index_of(j)
        .ok_or_else(|| Error::UnknownType(j.to_string()))?;
    let logits: Vec<f64> = (0..emb.len())
        .map(|k| {
            emb.vector(k)
                .iter()
                .zip(vi)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum()
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    Ok((logits[jx] - max).exp() / z)
}
