//! Two-agent, one-step problem small enough to enumerate exactly.
//!
//! Agent `i` (door already open) chooses between `drop` and `hold`; agent `j`
//! chooses between `open` and `other`. Both receive the collective reward iff
//! `i` drops and `j` opens. Policies are tabular softmaxes over two logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::correction::{CollectiveObjective, CorrectionEstimator, CorrectionMode, DEFAULT_PSI_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySpec {
    /// Logits of agent `i` over `[drop, hold]`.
    pub logits_i: [f64; 2],
    /// Logits of agent `j` over `[open, other]`.
    pub logits_j: [f64; 2],
    pub collective_reward: f64,
    pub psi_floor: f64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            logits_i: [0.0, 0.0],
            logits_j: [0.0, 0.0],
            collective_reward: 1.0,
            psi_floor: DEFAULT_PSI_FLOOR,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub spec: ToySpec,
    /// `∇_{Θ^i} J_c` by enumeration.
    pub left: [f64; 2],
    /// `E[∇_{Θ^i} ∇_{Θ^j} J_c Ψ]`, contracted over the coordinates of `Θ^j`.
    pub right: [f64; 2],
    pub psi: [f64; 2],
    pub max_abs_diff: f64,
    /// The expected score of `j` fell below the floor in some coordinate, so Ψ was clamped.
    pub degenerate: bool,
}

fn softmax2(l: [f64; 2]) -> [f64; 2] {
    let m = l[0].max(l[1]);
    let e = [(l[0] - m).exp(), (l[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

/// d log π(a) / d logits for a two-way softmax.
fn score(p: [f64; 2], a: usize) -> [f64; 2] {
    let mut s = [-p[0], -p[1]];
    s[a] += 1.0;
    s
}

impl ToySpec {
    pub fn random<R: Rng>(rng: &mut R, max_gap: f64) -> Self {
        let base_i: f64 = rng.gen_range(-1.0..1.0);
        let base_j: f64 = rng.gen_range(-1.0..1.0);
        let gi = rng.gen_range(-max_gap..max_gap);
        let gj = rng.gen_range(-max_gap..max_gap);
        ToySpec {
            logits_i: [base_i + gi, base_i],
            logits_j: [base_j + gj, base_j],
            ..ToySpec::default()
        }
    }

    fn reward(&self, a_i: usize, a_j: usize) -> f64 {
        if a_i == 0 && a_j == 0 {
            self.collective_reward
        } else {
            0.0
        }
    }

    /// Enumerates `(P, R, s_i, s_j)` over the four joint outcomes.
    fn outcomes(&self, logits_j: [f64; 2]) -> Vec<(f64, f64, [f64; 2], [f64; 2])> {
        let pi = softmax2(self.logits_i);
        let pj = softmax2(logits_j);
        let mut out = Vec::with_capacity(4);
        for a_i in 0..2 {
            for a_j in 0..2 {
                out.push((pi[a_i] * pj[a_j], self.reward(a_i, a_j), score(pi, a_i), score(pj, a_j)));
            }
        }
        out
    }

    /// `J_c = Σ P R`.
    pub fn collective_objective(&self) -> f64 {
        self.outcomes(self.logits_j).iter().map(|(p, r, _, _)| p * r).sum()
    }

    fn grad_i(&self, logits_j: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (p, r, si, _) in self.outcomes(logits_j) {
            g[0] += p * r * si[0];
            g[1] += p * r * si[1];
        }
        g
    }

    fn expected_collective_score(&self, logits_j: [f64; 2]) -> Option<[f64; 2]> {
        let mut num = [0.0; 2];
        let mut den = 0.0;
        for (p, r, _, sj) in self.outcomes(logits_j) {
            num[0] += p * r * sj[0];
            num[1] += p * r * sj[1];
            den += p * r;
        }
        (den != 0.0).then(|| [num[0] / den, num[1] / den])
    }
}

/// Both sides of the correction identity on the toy, from exact enumeration.
pub fn verify_theorem1(spec: &ToySpec) -> TheoremReport {
    let left = spec.grad_i(spec.logits_j);
    let estimator = CorrectionEstimator {
        psi_floor: spec.psi_floor,
        ..CorrectionEstimator::new(CorrectionMode::Cross, 1.0)
    };
    let (psi, degenerate) = match spec.expected_collective_score(spec.logits_j) {
        Some(m) => {
            let p = estimator.psi(&m);
            ([p[0], p[1]], m.iter().any(|v| v.abs() < spec.psi_floor))
        }
        None => ([0.0; 2], true),
    };
    // M = Σ P R s_i s_jᵀ; right = M Ψ / d.
    let mut right = [0.0; 2];
    for (p, r, si, sj) in spec.outcomes(spec.logits_j) {
        let contraction = (sj[0] * psi[0] + sj[1] * psi[1]) / 2.0;
        right[0] += p * r * si[0] * contraction;
        right[1] += p * r * si[1] * contraction;
    }
    let max_abs_diff = (left[0] - right[0]).abs().max((left[1] - right[1]).abs());
    TheoremReport {
        spec: *spec,
        left,
        right,
        psi,
        max_abs_diff,
        degenerate,
    }
}

/// The toy seen from agent `i`, with agent `j`'s logits as the surrogate.
pub struct ToyObjective {
    pub spec: ToySpec,
}

impl CollectiveObjective for ToyObjective {
    fn output_len(&self) -> usize {
        2
    }

    fn gradient(&self, surrogate: &[f64]) -> Vec<f64> {
        self.spec.grad_i([surrogate[0], surrogate[1]]).to_vec()
    }

    fn collective_score(&self, surrogate: &[f64]) -> Option<Vec<f64>> {
        self.spec
            .expected_collective_score([surrogate[0], surrogate[1]])
            .map(|m| m.to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn symmetric_logits_satisfy_identity() {
        let r = verify_theorem1(&ToySpec::default());
        assert!(r.left.iter().chain(&r.right).all(|v| v.is_finite()));
        assert!(r.max_abs_diff < 1e-6, "{r:?}");
        assert!(!r.degenerate);
        // J_c = 1/4, ∇_i J_c = P(drop,open)·r·(1 - p_drop, -p_hold)
        assert!((r.left[0] - 0.125).abs() < 1e-15 && (r.left[1] + 0.125).abs() < 1e-15);
    }

    #[test]
    fn hessian_estimator_reproduces_enumerated_right_side() {
        let mut rng = seed::rng_from(11);
        for _ in 0..20 {
            let spec = ToySpec::random(&mut rng, 2.0);
            let report = verify_theorem1(&spec);
            let est = CorrectionEstimator {
                psi_floor: spec.psi_floor,
                ..CorrectionEstimator::new(CorrectionMode::Cross, 1.0)
            };
            let adj = est.estimate(&ToyObjective { spec }, &spec.logits_j);
            for k in 0..2 {
                assert!((adj[k] - report.right[k]).abs() < 1e-6);
                assert!((adj[k] - report.left[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn saturated_partner_is_flagged() {
        let spec = ToySpec {
            logits_j: [40.0, 0.0],
            ..ToySpec::default()
        };
        assert!(verify_theorem1(&spec).degenerate);
    }
}
