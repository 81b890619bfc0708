//! Recurrent actor: `obs -> ReLU(linear) -> GRU -> linear -> 6 logits`.
//!
//! The GRU follows the usual reset/update-gate formulation
//!
//! ```text
//! r  = sigmoid(W_ir e + b_ir + W_hr h + b_hr)
//! z  = sigmoid(W_iz e + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in e + b_in + r * (W_hn h + b_hn))
//! h' = (1 - z) * n + z * h
//! ```
//!
//! with the three gate blocks stacked (r, z, n) in `gru.weight_ih` and
//! `gru.weight_hh`.

use rand::Rng;

use super::kernels::{accumulate_affine_grad, affine, sigmoid, transpose_matvec_acc};
use super::{NnError, ParameterSet};
use crate::env::Action;

pub const ACTIONS: usize = Action::COUNT;
pub const DEFAULT_HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PolicyLayout {
    input_dim: usize,
    hidden: usize,
    w_in: usize,
    b_in: usize,
    w_ih: usize,
    b_ih: usize,
    w_hh: usize,
    b_hh: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl PolicyLayout {
    fn build(input_dim: usize, hidden: usize) -> (Self, ParameterSet) {
        let mut p = ParameterSet::new();
        let w_in = p.push_segment("input.weight", hidden, input_dim);
        let b_in = p.push_segment("input.bias", hidden, 1);
        let w_ih = p.push_segment("gru.weight_ih", 3 * hidden, hidden);
        let b_ih = p.push_segment("gru.bias_ih", 3 * hidden, 1);
        let w_hh = p.push_segment("gru.weight_hh", 3 * hidden, hidden);
        let b_hh = p.push_segment("gru.bias_hh", 3 * hidden, 1);
        let w_out = p.push_segment("head.weight", ACTIONS, hidden);
        let b_out = p.push_segment("head.bias", ACTIONS, 1);
        let layout = PolicyLayout {
            input_dim,
            hidden,
            w_in,
            b_in,
            w_ih,
            b_ih,
            w_hh,
            b_hh,
            w_out,
            b_out,
            total: p.len(),
        };
        (layout, p)
    }
}

/// Cached activations of one forward step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTape {
    pub input: Vec<f64>,
    pub h_prev: Vec<f64>,
    pre_embed: Vec<f64>,
    embed: Vec<f64>,
    reset: Vec<f64>,
    update: Vec<f64>,
    candidate: Vec<f64>,
    hidden_candidate: Vec<f64>,
    pub h_new: Vec<f64>,
    pub logits: [f64; ACTIONS],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentPolicyNet {
    layout: PolicyLayout,
    params: ParameterSet,
}

impl RecurrentPolicyNet {
    /// Zero-initialised network.
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let (layout, params) = PolicyLayout::build(input_dim, hidden);
        RecurrentPolicyNet { layout, params }
    }

    /// Weights uniform in +-1/sqrt(fan_in), biases zero.
    pub fn new<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden);
        net.params.init_uniform(rng);
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.layout.hidden
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn initial_hidden(&self) -> Vec<f64> {
        vec![0.0; self.layout.hidden]
    }

    fn check_dims(&self, params: &[f64], obs: &[f64], hidden: &[f64]) -> Result<(), NnError> {
        if params.len() != self.layout.total {
            return Err(NnError::Dimension {
                what: "policy parameters",
                expected: self.layout.total,
                got: params.len(),
            });
        }
        if obs.len() != self.layout.input_dim {
            return Err(NnError::Dimension {
                what: "observation",
                expected: self.layout.input_dim,
                got: obs.len(),
            });
        }
        if hidden.len() != self.layout.hidden {
            return Err(NnError::Dimension {
                what: "hidden state",
                expected: self.layout.hidden,
                got: hidden.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, obs: &[f64], hidden: &[f64]) -> Result<StepTape, NnError> {
        self.forward_with(self.params.values(), obs, hidden)
    }

    /// Forward step using an external parameter vector of this network's layout.
    pub fn forward_with(&self, params: &[f64], obs: &[f64], hidden: &[f64]) -> Result<StepTape, NnError> {
        self.check_dims(params, obs, hidden)?;
        let l = &self.layout;
        let h = l.hidden;

        let mut pre_embed = vec![0.0; h];
        affine(&params[l.w_in..l.b_in], &params[l.b_in..l.w_ih], obs, &mut pre_embed);
        let embed: Vec<f64> = pre_embed.iter().map(|&v| v.max(0.0)).collect();

        let mut gi = vec![0.0; 3 * h];
        affine(&params[l.w_ih..l.b_ih], &params[l.b_ih..l.w_hh], &embed, &mut gi);
        let mut gh = vec![0.0; 3 * h];
        affine(&params[l.w_hh..l.b_hh], &params[l.b_hh..l.w_out], hidden, &mut gh);

        let mut reset = vec![0.0; h];
        let mut update = vec![0.0; h];
        let mut candidate = vec![0.0; h];
        let mut h_new = vec![0.0; h];
        for k in 0..h {
            reset[k] = sigmoid(gi[k] + gh[k]);
            update[k] = sigmoid(gi[h + k] + gh[h + k]);
            candidate[k] = (gi[2 * h + k] + reset[k] * gh[2 * h + k]).tanh();
            h_new[k] = (1.0 - update[k]) * candidate[k] + update[k] * hidden[k];
        }
        let hidden_candidate = gh[2 * h..].to_vec();

        let mut logits = [0.0; ACTIONS];
        affine(
            &params[l.w_out..l.b_out],
            &params[l.b_out..l.total],
            &h_new,
            &mut logits,
        );

        Ok(StepTape {
            input: obs.to_vec(),
            h_prev: hidden.to_vec(),
            pre_embed,
            embed,
            reset,
            update,
            candidate,
            hidden_candidate,
            h_new,
            logits,
        })
    }

    /// Runs a whole sequence from `h0`.
    pub fn unroll(&self, params: &[f64], inputs: &[&[f64]], h0: &[f64]) -> Result<Vec<StepTape>, NnError> {
        let mut tapes = Vec::with_capacity(inputs.len());
        let mut h = h0.to_vec();
        for obs in inputs {
            let tape = self.forward_with(params, obs, &h)?;
            h.clone_from(&tape.h_new);
            tapes.push(tape);
        }
        Ok(tapes)
    }

    /// Recomputes a taped step from its recorded inputs.
    pub fn replay(&self, params: &[f64], tape: &StepTape) -> Result<StepTape, NnError> {
        self.forward_with(params, &tape.input, &tape.h_prev)
    }

    /// Backpropagation through time over one contiguous episode.
    ///
    /// `output_grads[t]` is the gradient of the scalar objective with respect
    /// to the logits of step `t`. Parameter gradients are accumulated into
    /// `grad`; the gradient with respect to the initial hidden state is
    /// returned.
    pub fn backward_into(
        &self,
        params: &[f64],
        tapes: &[StepTape],
        output_grads: &[[f64; ACTIONS]],
        grad: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        if tapes.len() != output_grads.len() {
            return Err(NnError::Dimension {
                what: "per-step output gradients",
                expected: tapes.len(),
                got: output_grads.len(),
            });
        }
        if grad.len() != self.layout.total || params.len() != self.layout.total {
            return Err(NnError::Dimension {
                what: "gradient buffer",
                expected: self.layout.total,
                got: grad.len().min(params.len()),
            });
        }
        for w in tapes.windows(2) {
            if w[1].h_prev != w[0].h_new {
                return Err(NnError::BrokenTape);
            }
        }

        let l = self.layout;
        let h = l.hidden;
        let (g_w_in, rest) = grad.split_at_mut(l.b_in);
        let (g_b_in, rest) = rest.split_at_mut(l.w_ih - l.b_in);
        let (g_w_ih, rest) = rest.split_at_mut(l.b_ih - l.w_ih);
        let (g_b_ih, rest) = rest.split_at_mut(l.w_hh - l.b_ih);
        let (g_w_hh, rest) = rest.split_at_mut(l.b_hh - l.w_hh);
        let (g_b_hh, rest) = rest.split_at_mut(l.w_out - l.b_hh);
        let (g_w_out, g_b_out) = rest.split_at_mut(l.b_out - l.w_out);
        let w_ih = &params[l.w_ih..l.b_ih];
        let w_hh = &params[l.w_hh..l.b_hh];
        let w_out = &params[l.w_out..l.b_out];

        let mut dh = vec![0.0; h];
        let mut dgi = vec![0.0; 3 * h];
        let mut dgh = vec![0.0; 3 * h];
        let mut d_embed = vec![0.0; h];
        let mut dh_prev = vec![0.0; h];

        for (tape, dlogits) in tapes.iter().zip(output_grads).rev() {
            // head
            accumulate_affine_grad(g_w_out, g_b_out, dlogits, &tape.h_new);
            transpose_matvec_acc(w_out, dlogits, &mut dh);

            // GRU cell
            for k in 0..h {
                let (r, z, n) = (tape.reset[k], tape.update[k], tape.candidate[k]);
                let d_cand = dh[k] * (1.0 - z);
                let d_update = dh[k] * (tape.h_prev[k] - n);
                dh_prev[k] = dh[k] * z;
                let d_cand_pre = d_cand * (1.0 - n * n);
                let d_reset = d_cand_pre * tape.hidden_candidate[k];
                let d_update_pre = d_update * z * (1.0 - z);
                let d_reset_pre = d_reset * r * (1.0 - r);
                dgi[k] = d_reset_pre;
                dgi[h + k] = d_update_pre;
                dgi[2 * h + k] = d_cand_pre;
                dgh[k] = d_reset_pre;
                dgh[h + k] = d_update_pre;
                dgh[2 * h + k] = d_cand_pre * r;
            }
            accumulate_affine_grad(g_w_ih, g_b_ih, &dgi, &tape.embed);
            accumulate_affine_grad(g_w_hh, g_b_hh, &dgh, &tape.h_prev);
            d_embed.iter_mut().for_each(|v| *v = 0.0);
            transpose_matvec_acc(w_ih, &dgi, &mut d_embed);
            transpose_matvec_acc(w_hh, &dgh, &mut dh_prev);

            // input layer
            for (d, &pre) in d_embed.iter_mut().zip(&tape.pre_embed) {
                if pre <= 0.0 {
                    *d = 0.0;
                }
            }
            accumulate_affine_grad(g_w_in, g_b_in, &d_embed, &tape.input);

            std::mem::swap(&mut dh, &mut dh_prev);
        }
        Ok(dh)
    }

    /// Returns `(parameter gradient, gradient w.r.t. the initial hidden state)`.
    pub fn backward(
        &self,
        params: &[f64],
        tapes: &[StepTape],
        output_grads: &[[f64; ACTIONS]],
    ) -> Result<(Vec<f64>, Vec<f64>), NnError> {
        let mut grad = vec![0.0; self.layout.total];
        let dh0 = self.backward_into(params, tapes, output_grads, &mut grad)?;
        Ok((grad, dh0))
    }
}
