//! Structure-exploiting entropic scaling for block-decomposable costs.
//!
//! When the cost is a sum of low-arity blocks whose interaction graph is a
//! tree (singleton separators) or a single cycle, every axis marginal of the
//! regularized coupling is computable by sequential block contraction:
//! sum-product message passing on the tree, or conditioning on one axis of
//! the cycle (linear in that axis's grid). The sweep schedule and stopping
//! rule are identical to the dense scaler, so both converge to the same
//! fixed point; only the marginalization differs.
//!
//! Block kernels are materialized once, so the number of cost evaluations is
//! the sum of block tensor sizes instead of the full product-grid size.

use crate::costs::CostModel;
use crate::measures::{DiscreteMarginal, Shape};
use crate::{Error, Result};

#[derive(Debug)]
pub struct StructuredOutcome {
    pub axis_marginals: Vec<Vec<f64>>,
    pub objective: f64,
    pub sweeps: u64,
    pub cost_evals: u64,
    /// Scaling potentials in cost units.
    pub potentials: Vec<Vec<f64>>,
}

struct Factor {
    axes: Vec<usize>,
    shape: Shape,
    cost: Vec<f64>,
    /// `-cost / eps`.
    logk: Vec<f64>,
}

enum Topology {
    Tree,
    /// Cycle order: `cycle_axes[t]` couples to `cycle_axes[t+1]` through
    /// oriented factor `t`; the last factor closes back to `cycle_axes[0]`.
    Cycle {
        cycle_axes: Vec<usize>,
        oriented_cost: Vec<Vec<f64>>,
        oriented_logk: Vec<Vec<f64>>,
    },
}

struct Model {
    dims: Vec<usize>,
    factors: Vec<Factor>,
    axis_factors: Vec<Vec<usize>>,
    topology: Topology,
}

fn log_sum_exp(acc_max: f64, acc_sum: f64) -> f64 {
    if acc_max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        acc_max + acc_sum.ln()
    }
}

/// Two-pass LSE reduction of `values[i] -> bucket[key roles]`.
fn lse_reduce(keys: &[usize], values: &[f64], n_out: usize) -> Vec<f64> {
    let mut max_v = vec![f64::NEG_INFINITY; n_out];
    for (&k, &v) in keys.iter().zip(values) {
        if v > max_v[k] {
            max_v[k] = v;
        }
    }
    let mut sum_v = vec![0.0f64; n_out];
    for (&k, &v) in keys.iter().zip(values) {
        if max_v[k] != f64::NEG_INFINITY {
            sum_v[k] += (v - max_v[k]).exp();
        }
    }
    (0..n_out).map(|j| log_sum_exp(max_v[j], sum_v[j])).collect()
}

impl Model {
    fn build(marginals: &[DiscreteMarginal], cost: &CostModel, eps: f64) -> Result<(Self, u64)> {
        let blocks = cost.blocks().ok_or(Error::NoBlockStructure)?;
        let m = marginals.len();
        let dims: Vec<usize> = marginals.iter().map(|w| w.len()).collect();
        let mut factors = Vec::new();
        let mut cost_evals = 0u64;
        for block in &blocks {
            let shape = Shape::new(block.axes.iter().map(|&a| dims[a]).collect());
            let mut values = Vec::with_capacity(shape.len());
            let mut coords = vec![0.0; block.axes.len()];
            for cell in 0..shape.len() {
                for (pos, &axis) in block.axes.iter().enumerate() {
                    coords[pos] = marginals[axis].grid.points[shape.axis_index(cell, pos)];
                }
                values.push(block.cost.eval(&coords)?);
            }
            cost_evals += shape.len() as u64;
            let logk = values.iter().map(|&c| -c / eps).collect();
            factors.push(Factor {
                axes: block.axes.clone(),
                shape,
                cost: values,
                logk,
            });
        }
        let mut axis_factors: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (f, factor) in factors.iter().enumerate() {
            for &a in &factor.axes {
                axis_factors[a].push(f);
            }
        }
        if axis_factors.iter().any(|fs| fs.is_empty()) {
            return Err(Error::NoBlockStructure);
        }
        // Connectivity over the bipartite axis/factor graph.
        let mut seen_axis = vec![false; m];
        let mut seen_factor = vec![false; factors.len()];
        let mut stack = vec![0usize];
        seen_axis[0] = true;
        while let Some(a) = stack.pop() {
            for &f in &axis_factors[a] {
                if !seen_factor[f] {
                    seen_factor[f] = true;
                    for &b in &factors[f].axes {
                        if !seen_axis[b] {
                            seen_axis[b] = true;
                            stack.push(b);
                        }
                    }
                }
            }
        }
        if seen_axis.iter().any(|&s| !s) || seen_factor.iter().any(|&s| !s) {
            return Err(Error::NoBlockStructure);
        }
        let edge_count: usize = factors.iter().map(|f| f.axes.len()).sum();
        let node_count = m + factors.len();
        let topology = if edge_count == node_count - 1 {
            Topology::Tree
        } else if factors.iter().all(|f| f.axes.len() == 2)
            && axis_factors.iter().all(|fs| fs.len() == 2)
            && factors.len() == m
        {
            // Walk the cycle starting from axis 0 through its lower factor.
            let mut cycle_axes = vec![0usize];
            let mut oriented_cost = Vec::new();
            let mut oriented_logk = Vec::new();
            let mut prev_factor = usize::MAX;
            let mut axis = 0usize;
            loop {
                let &f = axis_factors[axis]
                    .iter()
                    .find(|&&f| f != prev_factor)
                    .expect("degree-2 axis has another factor");
                let factor = &factors[f];
                let other = if factor.axes[0] == axis {
                    factor.axes[1]
                } else {
                    factor.axes[0]
                };
                let (na, nb) = (dims[axis], dims[other]);
                let mut cost_o = vec![0.0; na * nb];
                let mut logk_o = vec![0.0; na * nb];
                for ja in 0..na {
                    for jb in 0..nb {
                        let cell = if factor.axes[0] == axis {
                            ja * nb + jb
                        } else {
                            jb * na + ja
                        };
                        cost_o[ja * nb + jb] = factor.cost[cell];
                        logk_o[ja * nb + jb] = factor.logk[cell];
                    }
                }
                oriented_cost.push(cost_o);
                oriented_logk.push(logk_o);
                prev_factor = f;
                axis = other;
                if axis == 0 {
                    break;
                }
                cycle_axes.push(axis);
            }
            if cycle_axes.len() != m {
                return Err(Error::NoBlockStructure);
            }
            Topology::Cycle {
                cycle_axes,
                oriented_cost,
                oriented_logk,
            }
        } else {
            return Err(Error::NoBlockStructure);
        };
        Ok((
            Model {
                dims,
                factors,
                axis_factors,
                topology,
            },
            cost_evals,
        ))
    }

    /// Sum-product message from `factor` toward its member axis `target`,
    /// in log domain, under scaled unaries `psi[a][j] = phi[a][j] / eps`.
    fn tree_message(&self, factor: usize, target: usize, psi: &[Vec<f64>]) -> Vec<f64> {
        let f = &self.factors[factor];
        let tpos = f
            .axes
            .iter()
            .position(|&a| a == target)
            .expect("target axis belongs to factor");
        let inbound: Vec<Option<Vec<f64>>> = f
            .axes
            .iter()
            .enumerate()
            .map(|(pos, &axis)| {
                if pos == tpos {
                    return None;
                }
                let mut v = psi[axis].clone();
                for &g in &self.axis_factors[axis] {
                    if g != factor {
                        let msg = self.tree_message(g, axis, psi);
                        for (out, add) in v.iter_mut().zip(&msg) {
                            *out += add;
                        }
                    }
                }
                Some(v)
            })
            .collect();
        let keys: Vec<usize> = (0..f.shape.len())
            .map(|cell| f.shape.axis_index(cell, tpos))
            .collect();
        let values: Vec<f64> = (0..f.shape.len())
            .map(|cell| {
                let mut t = f.logk[cell];
                for (pos, inb) in inbound.iter().enumerate() {
                    if let Some(v) = inb {
                        t += v[f.shape.axis_index(cell, pos)];
                    }
                }
                t
            })
            .collect();
        lse_reduce(&keys, &values, self.dims[target])
    }

    fn tree_log_marginal(&self, axis: usize, psi: &[Vec<f64>]) -> Vec<f64> {
        let mut lm = psi[axis].clone();
        for &f in &self.axis_factors[axis] {
            let msg = self.tree_message(f, axis, psi);
            for (out, add) in lm.iter_mut().zip(&msg) {
                *out += add;
            }
        }
        lm
    }

    /// Forward/backward path contractions of the cycle conditioned on the
    /// first cycle axis taking grid index `j0`.
    ///
    /// `alpha[p]` accumulates factors `0..p` (unaries of interior axes
    /// `1..p` included); `beta[p]` accumulates factors `p..L` (unaries of
    /// interior axes `p+1..L-1` included). The slice log-marginal at path
    /// position `p` is `alpha[p] + psi[p] + beta[p]`.
    fn cycle_slices(
        &self,
        j0: usize,
        psi: &[Vec<f64>],
        cycle_axes: &[usize],
        logk: &[Vec<f64>],
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let len = cycle_axes.len();
        let mut alpha: Vec<Vec<f64>> = Vec::with_capacity(len);
        alpha.push(Vec::new());
        let n1 = self.dims[cycle_axes[1]];
        let n0 = self.dims[cycle_axes[0]];
        alpha.push((0..n1).map(|j| logk[0][j0 * n1 + j]).collect());
        for p in 1..len - 1 {
            let axis = cycle_axes[p];
            let next = cycle_axes[p + 1];
            let (na, nb) = (self.dims[axis], self.dims[next]);
            let mut keys = Vec::with_capacity(na * nb);
            let mut values = Vec::with_capacity(na * nb);
            for ja in 0..na {
                let head = alpha[p][ja] + psi[axis][ja];
                for jb in 0..nb {
                    keys.push(jb);
                    values.push(head + logk[p][ja * nb + jb]);
                }
            }
            alpha.push(lse_reduce(&keys, &values, nb));
        }
        let mut beta: Vec<Vec<f64>> = vec![Vec::new(); len];
        let last = len - 1;
        let n_last = self.dims[cycle_axes[last]];
        beta[last] = (0..n_last).map(|j| logk[last][j * n0 + j0]).collect();
        for p in (1..last).rev() {
            let axis = cycle_axes[p];
            let next = cycle_axes[p + 1];
            let (na, nb) = (self.dims[axis], self.dims[next]);
            let mut keys = Vec::with_capacity(na * nb);
            let mut values = Vec::with_capacity(na * nb);
            for ja in 0..na {
                for jb in 0..nb {
                    keys.push(ja);
                    values.push(logk[p][ja * nb + jb] + psi[next][jb] + beta[p + 1][jb]);
                }
            }
            beta[p] = lse_reduce(&keys, &values, na);
        }
        (alpha, beta)
    }

    fn cycle_log_marginal(
        &self,
        axis: usize,
        psi: &[Vec<f64>],
        cycle_axes: &[usize],
        logk: &[Vec<f64>],
    ) -> Vec<f64> {
        let n0 = self.dims[cycle_axes[0]];
        if axis == cycle_axes[0] {
            let mut out = Vec::with_capacity(n0);
            for j0 in 0..n0 {
                let (alpha, beta) = self.cycle_slices(j0, psi, cycle_axes, logk);
                let a1 = cycle_axes[1];
                let vals: Vec<f64> = (0..self.dims[a1])
                    .map(|j| alpha[1][j] + psi[a1][j] + beta[1][j])
                    .collect();
                let keys = vec![0usize; vals.len()];
                let z = lse_reduce(&keys, &vals, 1)[0];
                out.push(psi[axis][j0] + z);
            }
            return out;
        }
        let p = cycle_axes
            .iter()
            .position(|&a| a == axis)
            .expect("axis on cycle");
        let n = self.dims[axis];
        let mut max_v = vec![f64::NEG_INFINITY; n];
        let mut slices: Vec<Vec<f64>> = Vec::with_capacity(n0);
        for j0 in 0..n0 {
            let (alpha, beta) = self.cycle_slices(j0, psi, cycle_axes, logk);
            let base = psi[cycle_axes[0]][j0];
            let slice: Vec<f64> = (0..n)
                .map(|j| base + alpha[p][j] + psi[axis][j] + beta[p][j])
                .collect();
            for (j, &v) in slice.iter().enumerate() {
                if v > max_v[j] {
                    max_v[j] = v;
                }
            }
            slices.push(slice);
        }
        let mut sum_v = vec![0.0f64; n];
        for slice in &slices {
            for (j, &v) in slice.iter().enumerate() {
                if max_v[j] != f64::NEG_INFINITY {
                    sum_v[j] += (v - max_v[j]).exp();
                }
            }
        }
        (0..n).map(|j| log_sum_exp(max_v[j], sum_v[j])).collect()
    }

    fn log_marginal(&self, axis: usize, psi: &[Vec<f64>]) -> Vec<f64> {
        match &self.topology {
            Topology::Tree => self.tree_log_marginal(axis, psi),
            Topology::Cycle {
                cycle_axes,
                oriented_logk,
                ..
            } => self.cycle_log_marginal(axis, psi, cycle_axes, oriented_logk),
        }
    }

    /// `sum_blocks E_gamma[c_block]` from block beliefs.
    fn objective(&self, psi: &[Vec<f64>]) -> f64 {
        match &self.topology {
            Topology::Tree => {
                let mut total = 0.0;
                for (fid, f) in self.factors.iter().enumerate() {
                    let inbound: Vec<Vec<f64>> = f
                        .axes
                        .iter()
                        .map(|&axis| {
                            let mut v = psi[axis].clone();
                            for &g in &self.axis_factors[axis] {
                                if g != fid {
                                    let msg = self.tree_message(g, axis, psi);
                                    for (out, add) in v.iter_mut().zip(&msg) {
                                        *out += add;
                                    }
                                }
                            }
                            v
                        })
                        .collect();
                    for cell in 0..f.shape.len() {
                        let mut t = f.logk[cell];
                        for (pos, inb) in inbound.iter().enumerate() {
                            t += inb[f.shape.axis_index(cell, pos)];
                        }
                        total += t.exp() * f.cost[cell];
                    }
                }
                total
            }
            Topology::Cycle {
                cycle_axes,
                oriented_cost,
                oriented_logk,
            } => {
                let len = cycle_axes.len();
                let n0 = self.dims[cycle_axes[0]];
                let mut total = 0.0;
                for j0 in 0..n0 {
                    let (alpha, beta) =
                        self.cycle_slices(j0, psi, cycle_axes, oriented_logk);
                    let base = psi[cycle_axes[0]][j0];
                    for t in 0..len {
                        let a = cycle_axes[t];
                        let b = cycle_axes[(t + 1) % len];
                        let (na, nb) = (self.dims[a], self.dims[b]);
                        for ja in 0..na {
                            for jb in 0..nb {
                                let lb = if t == 0 {
                                    if ja != j0 {
                                        continue;
                                    }
                                    base + oriented_logk[0][j0 * nb + jb]
                                        + psi[b][jb]
                                        + beta[1][jb]
                                } else if t == len - 1 {
                                    if jb != j0 {
                                        continue;
                                    }
                                    base + alpha[t][ja]
                                        + psi[a][ja]
                                        + oriented_logk[t][ja * nb + jb]
                                } else {
                                    base + alpha[t][ja]
                                        + psi[a][ja]
                                        + oriented_logk[t][ja * nb + jb]
                                        + psi[b][jb]
                                        + beta[t + 1][jb]
                                };
                                total += lb.exp() * oriented_cost[t][ja * nb + jb];
                            }
                        }
                    }
                }
                total
            }
        }
    }
}

/// Entropic scaling with structured marginalization; same sweep schedule,
/// update, and stopping rule as the dense scaler.
pub fn scale_structured(
    marginals: &[DiscreteMarginal],
    cost: &CostModel,
    eps: f64,
    max_iter: usize,
    tol: f64,
) -> Result<StructuredOutcome> {
    if eps <= 0.0 {
        return Err(Error::NonPositiveEpsilon);
    }
    let (model, cost_evals) = Model::build(marginals, cost, eps)?;
    let m = marginals.len();
    let weights: Vec<&Vec<f64>> = marginals.iter().map(|w| &w.weights).collect();
    let logw: Vec<Vec<f64>> = weights
        .iter()
        .map(|w| w.iter().map(|&x| x.ln()).collect())
        .collect();
    let mut phi: Vec<Vec<f64>> = (0..m).map(|a| vec![0.0; model.dims[a]]).collect();
    let mut sweeps = 0u64;
    let mut violation = f64::INFINITY;
    for _ in 0..max_iter {
        for axis in 0..m {
            let psi: Vec<Vec<f64>> = phi
                .iter()
                .map(|u| u.iter().map(|&v| v / eps).collect())
                .collect();
            let lm = model.log_marginal(axis, &psi);
            for j in 0..model.dims[axis] {
                phi[axis][j] += eps * (logw[axis][j] - lm[j]);
            }
        }
        sweeps += 1;
        let psi: Vec<Vec<f64>> = phi
            .iter()
            .map(|u| u.iter().map(|&v| v / eps).collect())
            .collect();
        let axis_marginals: Vec<Vec<f64>> = (0..m)
            .map(|a| {
                model
                    .log_marginal(a, &psi)
                    .iter()
                    .map(|&lm| lm.exp())
                    .collect()
            })
            .collect();
        violation = 0.0;
        for a in 0..m {
            let l1: f64 = axis_marginals[a]
                .iter()
                .zip(weights[a])
                .map(|(g, w)| (g - w).abs())
                .sum();
            violation = violation.max(l1);
        }
        if violation <= tol {
            let objective = model.objective(&psi);
            return Ok(StructuredOutcome {
                axis_marginals,
                objective,
                sweeps,
                cost_evals,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{
        make_chain_cost, make_counterexample_cost, make_cycle_cost, ChainSpec, PartitionSpec,
    };
    use crate::measures::discretize_density;
    use crate::solver::entropic::scale_dense;

    fn uniform_marginals(m: usize, n: usize) -> Vec<DiscreteMarginal> {
        (0..m)
            .map(|_| discretize_density(|_| 1.0, (0.0, 1.0), n).unwrap())
            .collect()
    }

    fn pair_block() -> CostModel {
        crate::costs::make_bilinear_partition_cost(
            PartitionSpec::new(&[0], &[1], &[], 1, -1.0).unwrap(),
        )
        .unwrap()
    }

    fn dense_reference(
        marginals: &[DiscreteMarginal],
        cost: &CostModel,
        eps: f64,
    ) -> crate::solver::entropic::DenseScaleOutcome {
        let shape = Shape::from_marginals(marginals);
        let mut cost_vec = Vec::with_capacity(shape.len());
        for l in 0..shape.len() {
            let coords: Vec<f64> = (0..marginals.len())
                .map(|a| marginals[a].grid.points[shape.axis_index(l, a)])
                .collect();
            cost_vec.push(cost.eval(&coords).unwrap());
        }
        let weights: Vec<Vec<f64>> = marginals.iter().map(|m| m.weights.clone()).collect();
        scale_dense(&weights, &cost_vec, eps, 50_000, 1e-11).unwrap()
    }

    #[test]
    fn chain_marginals_match_dense_oracle() {
        let marginals = uniform_marginals(3, 10);
        let cost = make_chain_cost(ChainSpec::Consecutive {
            cuts: vec![0, 1, 2],
            blocks: vec![pair_block(), pair_block()],
        })
        .unwrap();
        let structured = scale_structured(&marginals, &cost, 0.1, 50_000, 1e-11).unwrap();
        let dense = dense_reference(&marginals, &cost, 0.1);
        for a in 0..3 {
            for j in 0..10 {
                assert!(
                    (structured.axis_marginals[a][j] - dense.axis_marginals[a][j]).abs()
                        <= 1e-10,
                    "axis {a} atom {j}"
                );
            }
        }
        assert!((structured.objective - dense.objective).abs() <= 1e-9);
        assert_eq!(structured.cost_evals, 200);
    }

    #[test]
    fn single_block_reduces_to_two_marginal_scaling() {
        let marginals = uniform_marginals(2, 6);
        let cost = make_chain_cost(ChainSpec::Consecutive {
            cuts: vec![0, 1],
            blocks: vec![pair_block()],
        })
        .unwrap();
        let structured = scale_structured(&marginals, &cost, 0.2, 50_000, 1e-11).unwrap();
        let dense = dense_reference(&marginals, &cost, 0.2);
        for a in 0..2 {
            for j in 0..6 {
                assert!(
                    (structured.axis_marginals[a][j] - dense.axis_marginals[a][j]).abs()
                        <= 1e-10
                );
            }
        }
    }

    #[test]
    fn cycle_marginals_match_dense_oracle() {
        let marginals = uniform_marginals(4, 5);
        let cost = make_cycle_cost([pair_block(), pair_block(), pair_block(), pair_block()])
            .unwrap();
        let structured = scale_structured(&marginals, &cost, 0.2, 50_000, 1e-11).unwrap();
        let dense = dense_reference(&marginals, &cost, 0.2);
        for a in 0..4 {
            for j in 0..5 {
                assert!(
                    (structured.axis_marginals[a][j] - dense.axis_marginals[a][j]).abs()
                        <= 1e-10,
                    "axis {a} atom {j}: {} vs {}",
                    structured.axis_marginals[a][j],
                    dense.axis_marginals[a][j]
                );
            }
        }
        assert!((structured.objective - dense.objective).abs() <= 1e-9);
    }

    #[test]
    fn twisted_chain_with_singleton_couplings_is_supported() {
        let marginals = uniform_marginals(4, 5);
        let head = crate::costs::make_submodular_graph_cost(
            &std::collections::BTreeMap::from([
                ((0, 1), -1.0),
                ((0, 2), -1.0),
                ((1, 2), -1.0),
            ]),
            &crate::costs::SimpleGraph::complete(3).unwrap(),
        )
        .unwrap();
        let cost = make_chain_cost(ChainSpec::Twisted {
            s: 3,
            t_seq: vec![1],
            y_sets: vec![vec![1]],
            blocks: vec![head, pair_block()],
        })
        .unwrap();
        let structured = scale_structured(&marginals, &cost, 0.2, 50_000, 1e-11).unwrap();
        let dense = dense_reference(&marginals, &cost, 0.2);
        for a in 0..4 {
            for j in 0..5 {
                assert!(
                    (structured.axis_marginals[a][j] - dense.axis_marginals[a][j]).abs()
                        <= 1e-10
                );
            }
        }
    }

    #[test]
    fn undecomposable_cost_is_rejected() {
        let marginals = uniform_marginals(3, 4);
        let err = scale_structured(&marginals, &make_counterexample_cost(), 0.1, 100, 1e-11)
            .unwrap_err();
        assert!(matches!(err, Error::NoBlockStructure));
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let marginals = uniform_marginals(3, 4);
        let cost = make_chain_cost(ChainSpec::Consecutive {
            cuts: vec![0, 1, 2],
            blocks: vec![pair_block(), pair_block()],
        })
        .unwrap();
        assert!(matches!(
            scale_structured(&marginals, &cost, 0.0, 100, 1e-11),
            Err(Error::NonPositiveEpsilon)
        ));
    }
}
