//! Finite-difference audit of every analytic gradient in the crate.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::finite_diff::{finite_diff_coords, relative_error};
use super::{CriticNet, MaskedCategorical, RecurrentPolicyNet, ACTIONS};
use crate::seed;

pub const TOLERANCE: f64 = 1e-4;
pub const EPSILON: f64 = 1e-5;
/// Denominator floor of the relative error. Differencing a 150-step episode
/// objective at `EPSILON` carries about 1e-9 of rounding noise, so
/// coordinates with gradients below this floor are judged by absolute error
/// (`TOLERANCE * ERROR_FLOOR` = 1e-8).
pub const ERROR_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSettings {
    pub configurations: usize,
    pub seed: u64,
    /// Episode length for the full-size recurrent cases.
    pub full_steps: usize,
    /// Coordinates sampled per full-size case.
    pub sampled_coords: usize,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        GradcheckSettings {
            configurations: 100,
            seed: 0,
            full_steps: 150,
            sampled_coords: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub params: usize,
    pub coords_checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub cases: Vec<CaseResult>,
}

impl GradcheckReport {
    pub fn worst(&self) -> Option<&CaseResult> {
        self.cases
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.max_rel_error < self.tolerance)
    }
}

fn random_vec<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn random_mask<R: Rng>(rng: &mut R) -> [bool; ACTIONS] {
    if rng.gen_bool(0.5) {
        [true; ACTIONS]
    } else {
        [true, true, true, true, false, false]
    }
}

fn max_error(analytic: &[f64], numeric: &[f64], coords: &[usize]) -> f64 {
    coords
        .iter()
        .zip(numeric)
        .map(|(&k, &n)| relative_error(analytic[k], n, ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// Episode log-likelihood of recorded actions under masks, through BPTT.
fn policy_case<R: Rng>(
    rng: &mut R,
    name: &str,
    input: usize,
    hidden: usize,
    steps: usize,
    sampled: Option<usize>,
) -> CaseResult {
    let net = RecurrentPolicyNet::new(input, hidden, rng);
    let obs: Vec<Vec<f64>> = (0..steps).map(|_| random_vec(rng, input, 0.0, 1.0)).collect();
    let h0 = random_vec(rng, hidden, -0.5, 0.5);
    let actions: Vec<usize> = (0..steps).map(|_| rng.gen_range(0..4)).collect();
    let masks: Vec<[bool; ACTIONS]> = (0..steps).map(|_| random_mask(rng)).collect();
    let weights = random_vec(rng, steps, -1.0, 1.0);
    let inputs: Vec<&[f64]> = obs.iter().map(Vec::as_slice).collect();
    let objective = |p: &[f64]| -> f64 {
        let tapes = net.unroll(p, &inputs, &h0).expect("dimensions fixed above");
        tapes
            .iter()
            .enumerate()
            .map(|(t, tape)| {
                weights[t]
                    * MaskedCategorical::new(&tape.logits, &masks[t])
                        .expect("legal mask")
                        .log_prob(actions[t])
            })
            .sum()
    };
    let params = net.params().values();
    let tapes = net.unroll(params, &inputs, &h0).expect("dimensions fixed above");
    let out: Vec<[f64; ACTIONS]> = tapes
        .iter()
        .enumerate()
        .map(|(t, tape)| {
            let g = MaskedCategorical::new(&tape.logits, &masks[t])
                .expect("legal mask")
                .grad_log_prob(actions[t]);
            g.map(|v| v * weights[t])
        })
        .collect();
    let (analytic, _) = net.backward(params, &tapes, &out).expect("tapes from one unroll");
    let coords: Vec<usize> = match sampled {
        Some(k) => sample(rng, params.len(), k.min(params.len())).into_vec(),
        None => (0..params.len()).collect(),
    };
    let numeric = finite_diff_coords(objective, params, EPSILON, &coords);
    CaseResult {
        name: name.into(),
        params: params.len(),
        coords_checked: coords.len(),
        max_rel_error: max_error(&analytic, &numeric, &coords),
    }
}

fn critic_case<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> CaseResult {
    let net = CriticNet::new(input, hidden, rng);
    let obs = random_vec(rng, input, 0.0, 1.0);
    let params = net.params().values();
    let tape = net.forward_with(params, &obs).expect("dimensions fixed above");
    let mut analytic = vec![0.0; params.len()];
    net.backward_into(params, &tape, 1.0, &mut analytic);
    let coords: Vec<usize> = (0..params.len()).collect();
    let numeric = finite_diff_coords(
        |p| net.forward_with(p, &obs).expect("fixed").value,
        params,
        EPSILON,
        &coords,
    );
    CaseResult {
        name: "critic".into(),
        params: params.len(),
        coords_checked: coords.len(),
        max_rel_error: max_error(&analytic, &numeric, &coords),
    }
}

fn categorical_case<R: Rng>(rng: &mut R) -> CaseResult {
    let logits: Vec<f64> = random_vec(rng, ACTIONS, -3.0, 3.0);
    let mask = random_mask(rng);
    let a = rng.gen_range(0..4);
    let beta = rng.gen_range(0.0..1.0);
    let f = |l: &[f64]| {
        let d = MaskedCategorical::new(&l.try_into().expect("six logits"), &mask).expect("legal mask");
        d.log_prob(a) + beta * d.entropy()
    };
    let d = MaskedCategorical::new(&logits.clone().try_into().expect("six logits"), &mask).expect("legal mask");
    let glp = d.grad_log_prob(a);
    let gh = d.grad_entropy();
    let analytic: Vec<f64> = (0..ACTIONS).map(|k| glp[k] + beta * gh[k]).collect();
    let coords: Vec<usize> = (0..ACTIONS).collect();
    let numeric = finite_diff_coords(f, &logits, EPSILON, &coords);
    CaseResult {
        name: "categorical".into(),
        params: ACTIONS,
        coords_checked: ACTIONS,
        max_rel_error: max_error(&analytic, &numeric, &coords),
    }
}

/// Cycles through small recurrent nets (every coordinate), full-size
/// recurrent nets over long episodes (sampled coordinates), critics and the
/// categorical head.
pub fn run_gradcheck(settings: &GradcheckSettings) -> GradcheckReport {
    let mut rng = seed::rng_from(settings.seed);
    let mut cases = Vec::with_capacity(settings.configurations);
    let full_inputs = [27, 29, 33, 35];
    for k in 0..settings.configurations {
        let case = match k % 5 {
            0 | 1 => {
                let steps = rng.gen_range(1..=4);
                policy_case(&mut rng, "policy_small", 3, 4, steps, None)
            }
            2 => {
                let input = full_inputs[(k / 5) % full_inputs.len()];
                policy_case(
                    &mut rng,
                    "policy_full",
                    input,
                    64,
                    settings.full_steps,
                    Some(settings.sampled_coords),
                )
            }
            3 => critic_case(&mut rng, 4, 6),
            _ => categorical_case(&mut rng),
        };
        cases.push(case);
    }
    GradcheckReport {
        tolerance: TOLERANCE,
        cases,
    }
}
