use rand::Rng;

use super::kernels::{accumulate_affine_grad, affine, transpose_matvec_acc};
use super::{NnError, ParameterSet};

/// Feed-forward value network `obs -> 64 -> 64 -> 1` with ReLU between layers.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticNet {
    input_dim: usize,
    hidden: usize,
    params: ParameterSet,
    offsets: [usize; 6],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticTape {
    input: Vec<f64>,
    pre1: Vec<f64>,
    act1: Vec<f64>,
    pre2: Vec<f64>,
    act2: Vec<f64>,
    pub value: f64,
}

impl CriticNet {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        let mut p = ParameterSet::new();
        let offsets = [
            p.push_segment("l1.weight", hidden, input_dim),
            p.push_segment("l1.bias", hidden, 1),
            p.push_segment("l2.weight", hidden, hidden),
            p.push_segment("l2.bias", hidden, 1),
            p.push_segment("l3.weight", 1, hidden),
            p.push_segment("l3.bias", 1, 1),
        ];
        CriticNet {
            input_dim,
            hidden,
            params: p,
            offsets,
        }
    }

    pub fn new<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden);
        net.params.init_uniform(rng);
        net
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn slices<'a>(&self, params: &'a [f64]) -> [&'a [f64]; 6] {
        let o = self.offsets;
        [
            &params[o[0]..o[1]],
            &params[o[1]..o[2]],
            &params[o[2]..o[3]],
            &params[o[3]..o[4]],
            &params[o[4]..o[5]],
            &params[o[5]..],
        ]
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64, NnError> {
        Ok(self.forward_with(self.params.values(), obs)?.value)
    }

    pub fn forward_with(&self, params: &[f64], obs: &[f64]) -> Result<CriticTape, NnError> {
        if obs.len() != self.input_dim {
            return Err(NnError::Dimension {
                what: "observation",
                expected: self.input_dim,
                got: obs.len(),
            });
        }
        if params.len() != self.params.len() {
            return Err(NnError::Dimension {
                what: "critic parameters",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        let [w1, b1, w2, b2, w3, b3] = self.slices(params);
        let mut pre1 = vec![0.0; self.hidden];
        affine(w1, b1, obs, &mut pre1);
        let act1: Vec<f64> = pre1.iter().map(|v| v.max(0.0)).collect();
        let mut pre2 = vec![0.0; self.hidden];
        affine(w2, b2, &act1, &mut pre2);
        let act2: Vec<f64> = pre2.iter().map(|v| v.max(0.0)).collect();
        let mut out = [0.0];
        affine(w3, b3, &act2, &mut out);
        Ok(CriticTape {
            input: obs.to_vec(),
            pre1,
            act1,
            pre2,
            act2,
            value: out[0],
        })
    }

    /// Accumulates `d_value * dV/dtheta` into `grad`.
    pub fn backward_into(&self, params: &[f64], tape: &CriticTape, d_value: f64, grad: &mut [f64]) {
        let o = self.offsets;
        let [_, _, w2, _, w3, _] = self.slices(params);
        let (g1w, rest) = grad.split_at_mut(o[1]);
        let (g1b, rest) = rest.split_at_mut(o[2] - o[1]);
        let (g2w, rest) = rest.split_at_mut(o[3] - o[2]);
        let (g2b, rest) = rest.split_at_mut(o[4] - o[3]);
        let (g3w, g3b) = rest.split_at_mut(o[5] - o[4]);

        let dy = [d_value];
        accumulate_affine_grad(g3w, g3b, &dy, &tape.act2);
        let mut d2 = vec![0.0; self.hidden];
        transpose_matvec_acc(w3, &dy, &mut d2);
        for (d, &p) in d2.iter_mut().zip(&tape.pre2) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        accumulate_affine_grad(g2w, g2b, &d2, &tape.act1);
        let mut d1 = vec![0.0; self.hidden];
        transpose_matvec_acc(w2, &d2, &mut d1);
        for (d, &p) in d1.iter_mut().zip(&tape.pre1) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        accumulate_affine_grad(g1w, g1b, &d1, &tape.input);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::finite_diff::finite_diff_grad;
    use crate::seed;

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = seed::rng_from(8);
        let net = CriticNet::new(4, 5, &mut rng);
        let obs: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
        let tape = net.forward_with(net.params().values(), &obs).unwrap();
        let mut g = vec![0.0; net.num_params()];
        net.backward_into(net.params().values(), &tape, 1.0, &mut g);
        let numeric = finite_diff_grad(
            |p| net.forward_with(p, &obs).unwrap().value,
            net.params().values(),
            1e-5,
        );
        for (a, n) in g.iter().zip(&numeric) {
            assert!((a - n).abs() <= 1e-4 * a.abs().max(n.abs()).max(1e-6), "{a} vs {n}");
        }
    }

    #[test]
    fn scalar_output_and_dims() {
        let net = CriticNet::zeros(27, 64);
        assert_eq!(net.value(&[0.0; 27]).unwrap(), 0.0);
        assert!(net.value(&[0.0; 3]).is_err());
        assert_eq!(net.num_params(), 27 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
    }
}
