use rand::Rng;

use super::policy::ACTIONS;
use super::NnError;

/// Softmax over the legal entries of a logit vector; illegal entries have
/// probability exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedCategorical {
    mask: [bool; ACTIONS],
    probs: [f64; ACTIONS],
    log_probs: [f64; ACTIONS],
    entropy: f64,
}

impl MaskedCategorical {
    pub fn new(logits: &[f64; ACTIONS], mask: &[bool; ACTIONS]) -> Result<Self, NnError> {
        let max = logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(NnError::AllMasked);
        }
        let mut sum = 0.0;
        for (&l, &m) in logits.iter().zip(mask) {
            if m {
                sum += (l - max).exp();
            }
        }
        let log_norm = max + sum.ln();
        let mut probs = [0.0; ACTIONS];
        let mut log_probs = [f64::NEG_INFINITY; ACTIONS];
        let mut entropy = 0.0;
        for k in 0..ACTIONS {
            if mask[k] {
                log_probs[k] = logits[k] - log_norm;
                probs[k] = log_probs[k].exp();
                if probs[k] > 0.0 {
                    entropy -= probs[k] * log_probs[k];
                }
            }
        }
        Ok(MaskedCategorical {
            mask: *mask,
            probs,
            log_probs,
            entropy,
        })
    }

    /// Masked uniform distribution.
    pub fn uniform(mask: &[bool; ACTIONS]) -> Result<Self, NnError> {
        Self::new(&[0.0; ACTIONS], mask)
    }

    pub fn probs(&self) -> &[f64; ACTIONS] {
        &self.probs
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut last = 0;
        for k in 0..ACTIONS {
            if self.mask[k] && self.probs[k] > 0.0 {
                cumulative += self.probs[k];
                last = k;
                if u < cumulative {
                    return k;
                }
            }
        }
        last
    }

    /// d log p(action) / d logits.
    pub fn grad_log_prob(&self, action: usize) -> [f64; ACTIONS] {
        let mut g = [0.0; ACTIONS];
        for k in 0..ACTIONS {
            if self.mask[k] {
                g[k] = -self.probs[k];
            }
        }
        g[action] += 1.0;
        g
    }

    /// d entropy / d logits.
    pub fn grad_entropy(&self) -> [f64; ACTIONS] {
        let mut g = [0.0; ACTIONS];
        for k in 0..ACTIONS {
            if self.mask[k] && self.probs[k] > 0.0 {
                g[k] = -self.probs[k] * (self.log_probs[k] + self.entropy);
            }
        }
        g
    }
}

/// Samples an action from masked logits, returning `(action, log_prob, entropy)`.
pub fn sample_categorical<R: Rng>(
    logits: &[f64; ACTIONS],
    mask: &[bool; ACTIONS],
    rng: &mut R,
) -> Result<(usize, f64, f64), NnError> {
    let dist = MaskedCategorical::new(logits, mask)?;
    let a = dist.sample(rng);
    Ok((a, dist.log_prob(a), dist.entropy()))
}
