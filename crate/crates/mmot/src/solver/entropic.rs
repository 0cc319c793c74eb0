//! Dense log-domain iterative proportional fitting.
//!
//! The regularized coupling is `gamma(x) = exp((sum_a phi_a(x_a) - c(x)) / eps)`.
//! One sweep performs, for each axis in order, the exact marginal projection
//! `phi_a += eps * (ln w_a - ln marginal_a)`; after a full sweep the maximum
//! L1 marginal violation decides convergence. All per-axis reductions are
//! log-sum-exp, so small `eps` never underflows.

use crate::measures::Shape;
use crate::{Error, Result};

#[derive(Debug)]
pub struct DenseScaleOutcome {
    /// Coupling masses in row-major cell order.
    pub gamma: Vec<f64>,
    pub axis_marginals: Vec<Vec<f64>>,
    pub objective: f64,
    pub sweeps: u64,
    /// Scaling potentials in cost units.
    pub potentials: Vec<Vec<f64>>,
}

/// Run sweeps until the largest per-axis L1 marginal violation is `<= tol`.
pub fn scale_dense(
    weights: &[Vec<f64>],
    cost: &[f64],
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<DenseScaleOutcome> {
    if eps <= 0.0 {
        return Err(Error::NonPositiveEpsilon);
    }
    let m = weights.len();
    let shape = Shape::new(weights.iter().map(|w| w.len()).collect());
    let n_cells = shape.len();
    debug_assert_eq!(cost.len(), n_cells);
    let logw: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| w.iter().map(|&x| x.ln()).collect())
        .collect();
    let mut phi: Vec<Vec<f64>> = weights.iter().map(|w| vec![0.0; w.len()]).collect();

    let exponent = |l: usize, phi: &[Vec<f64>]| -> f64 {
        let mut t = -cost[l];
        for a in 0..m {
            t += phi[a][shape.axis_index(l, a)];
        }
        t / eps
    };

    let log_axis_marginal = |axis: usize, phi: &[Vec<f64>]| -> Vec<f64> {
        let n = shape.dims[axis];
        let mut max_t = vec![f64::NEG_INFINITY; n];
        for l in 0..n_cells {
            let j = shape.axis_index(l, axis);
            let t = exponent(l, phi);
            if t > max_t[j] {
                max_t[j] = t;
            }
        }
        let mut acc = vec![0.0f64; n];
        for l in 0..n_cells {
            let j = shape.axis_index(l, axis);
            acc[j] += (exponent(l, phi) - max_t[j]).exp();
        }
        (0..n).map(|j| max_t[j] + acc[j].ln()).collect()
    };

    let mut sweeps = 0u64;
    let mut violation = f64::INFINITY;
    for _ in 0..max_iter {
        for axis in 0..m {
            let lm = log_axis_marginal(axis, &phi);
            for j in 0..shape.dims[axis] {
                phi[axis][j] += eps * (logw[axis][j] - lm[j]);
            }
        }
        sweeps += 1;
        // One pass computing every axis marginal of the updated coupling.
        let mut marginals: Vec<Vec<f64>> =
            (0..m).map(|a| vec![0.0; shape.dims[a]]).collect();
        for l in 0..n_cells {
            let mass = exponent(l, &phi).exp();
            for a in 0..m {
                marginals[a][shape.axis_index(l, a)] += mass;
            }
        }
        violation = 0.0;
        for a in 0..m {
            let l1: f64 = marginals[a]
                .iter()
                .zip(&weights[a])
                .map(|(g, w)| (g - w).abs())
                .sum();
            violation = violation.max(l1);
        }
        if violation <= tol {
            let mut gamma = vec![0.0; n_cells];
            let mut objective = 0.0;
            for l in 0..n_cells {
                let mass = exponent(l, &phi).exp();
                gamma[l] = mass;
                objective += mass * cost[l];
            }
            return Ok(DenseScaleOutcome {
                gamma,
                axis_marginals: marginals,
                objective,
                sweeps,
                potentials: phi,
            });
        }
    }
    Err(Error::NoConvergence {
        max_iter,
        violation,
        tol,
    })
}
