//! Central-difference oracles.

/// `(f(θ+εe_k) − f(θ−εe_k)) / 2ε` for every coordinate.
pub fn finite_diff_grad<F>(f: F, params: &[f64], epsilon: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let coords: Vec<usize> = (0..params.len()).collect();
    finite_diff_coords(f, params, epsilon, &coords)
}

/// Central differences restricted to `coords`, in that order.
pub fn finite_diff_coords<F>(f: F, params: &[f64], epsilon: f64, coords: &[usize]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut theta = params.to_vec();
    coords
        .iter()
        .map(|&k| {
            let orig = theta[k];
            theta[k] = orig + epsilon;
            let up = f(&theta);
            theta[k] = orig - epsilon;
            let down = f(&theta);
            theta[k] = orig;
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}

/// Hessian-vector product `H w` from central differences of an exact
/// gradient: `(∇f(θ+εw) − ∇f(θ−εw)) / 2ε`.
pub fn grad_of_grad<G>(gradient: G, params: &[f64], direction: &[f64], epsilon: f64) -> Vec<f64>
where
    G: Fn(&[f64]) -> Vec<f64>,
{
    assert_eq!(params.len(), direction.len(), "direction must match parameter count");
    if direction.iter().all(|&w| w == 0.0) {
        return vec![0.0; params.len()];
    }
    let plus: Vec<f64> = params.iter().zip(direction).map(|(p, w)| p + epsilon * w).collect();
    let minus: Vec<f64> = params.iter().zip(direction).map(|(p, w)| p - epsilon * w).collect();
    let gp = gradient(&plus);
    let gm = gradient(&minus);
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * epsilon)).collect()
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: [[f64; 3]; 3] = [[2.0, -1.0, 0.5], [-1.0, 3.0, 0.25], [0.5, 0.25, 1.5]];

    fn quad_grad(t: &[f64]) -> Vec<f64> {
        (0..3).map(|i| (0..3).map(|j| A[i][j] * t[j]).sum()).collect()
    }

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff_grad(|t| t[0] * t[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn linear_is_exact_for_any_epsilon() {
        for eps in [1e-6, 1e-2, 0.5, 4.0] {
            let g = finite_diff_grad(|t| 2.0 * t[0] - 0.25 * t[1], &[1.0, -2.0], eps);
            assert!((g[0] - 2.0).abs() < 1e-9 && (g[1] + 0.25).abs() < 1e-9, "{g:?}");
        }
    }

    #[test]
    fn hessian_vector_product_of_quadratic() {
        let theta = [0.3, -0.7, 1.1];
        let hv = grad_of_grad(quad_grad, &theta, &[1.0, 0.0, 0.0], 1e-5);
        for i in 0..3 {
            assert!((hv[i] - A[i][0]).abs() < 1e-6);
        }
        assert_eq!(grad_of_grad(quad_grad, &theta, &[0.0; 3], 1e-5), vec![0.0; 3]);
        let w = [0.4, -1.3, 2.2];
        let neg = [-0.4, 1.3, -2.2];
        let a = grad_of_grad(quad_grad, &theta, &w, 1e-5);
        let b = grad_of_grad(quad_grad, &theta, &neg, 1e-5);
        for i in 0..3 {
            assert!((a[i] + b[i]).abs() < 1e-9);
        }
    }
}
