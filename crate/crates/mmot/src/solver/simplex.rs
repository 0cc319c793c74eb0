//! Transportation simplex on product grids with strictly complementary
//! dual recovery.
//!
//! The constraint matrix of the multi-marginal transportation polytope has
//! one row per grid atom per axis and rank `sum(n_i) - (m - 1)`. We work
//! with a square gauge-augmented system: the basis columns plus one unit
//! column per axis `a >= 1` pinning `u_a(first atom) = 0`. Solving the
//! transposed system yields gauge-fixed duals; the forward system yields
//! pivot directions.
//!
//! `strictify` post-processes optimal duals into a strictly complementary
//! pair: its equality set is exactly the union of all optimal supports, so
//! downstream equality-set probes see the whole optimal face instead of one
//! vertex's accidents.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::measures::Shape;
use crate::{Error, Result};

/// Dense LU factorization with partial pivoting.
struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    fn factor(mut a: Vec<f64>, n: usize) -> Result<Self> {
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut best = k;
            let mut best_abs = a[k * n + k].abs();
            for r in (k + 1)..n {
                let v = a[r * n + k].abs();
                if v > best_abs {
                    best = r;
                    best_abs = v;
                }
            }
            if best_abs < 1e-12 {
                return Err(Error::Numerical(format!(
                    "singular basis system at column {k}"
                )));
            }
            if best != k {
                for c in 0..n {
                    a.swap(k * n + c, best * n + c);
                }
                perm.swap(k, best);
            }
            let pivot = a[k * n + k];
            for r in (k + 1)..n {
                let factor = a[r * n + k] / pivot;
                a[r * n + k] = factor;
                if factor != 0.0 {
                    for c in (k + 1)..n {
                        a[r * n + c] -= factor * a[k * n + c];
                    }
                }
            }
        }
        Ok(Lu { n, lu: a, perm })
    }

    /// Solve `A x = b`.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 1..n {
            let mut acc = x[r];
            for c in 0..r {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc;
        }
        for r in (0..n).rev() {
            let mut acc = x[r];
            for c in (r + 1)..n {
                acc -= self.lu[r * n + c] * x[c];
            }
            x[r] = acc / self.lu[r * n + r];
        }
        x
    }

    /// Solve `A^T x = b`.
    fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        // A = P^T L U, so A^T = U^T L^T P: forward with U^T, back with L^T,
        // then undo the permutation.
        let mut y = b.to_vec();
        for r in 0..n {
            let mut acc = y[r];
            for c in 0..r {
                acc -= self.lu[c * n + r] * y[c];
            }
            y[r] = acc / self.lu[r * n + r];
        }
        for r in (0..n).rev() {
            let mut acc = y[r];
            for c in (r + 1)..n {
                acc -= self.lu[c * n + r] * y[c];
            }
            y[r] = acc;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

/// One basic cell: linear index into the product grid plus its mass.
pub type Basis = Vec<(usize, f64)>;

/// The transportation LP over a product grid.
pub struct TransportLp {
    pub weights: Vec<Vec<f64>>,
    pub shape: Shape,
    /// Row offset of each axis block in the stacked constraint system.
    pub offs: Vec<usize>,
    /// Total constraint rows, `sum(n_i)`.
    pub rows: usize,
}

/// Outcome of a simplex run.
pub struct LpOutcome {
    pub basis: Basis,
    /// Gauge-fixed duals per axis: `duals[a][j]`, with the first atom of
    /// every axis `a >= 1` pinned to zero.
    pub duals: Vec<Vec<f64>>,
    pub objective: f64,
    pub pivots: u64,
}

/// Strictly complementary dual post-processing result.
pub struct StrictOutcome {
    /// Adjusted duals whose equality set is the union of optimal supports.
    pub duals: Vec<Vec<f64>>,
    /// Linear indices of cells used by at least one optimal plan, sorted.
    pub optimal_support: Vec<usize>,
    /// Equality cells of the input duals that no optimal plan uses.
    pub dead_cells: Vec<usize>,
    /// Step length applied to the adjustment direction.
    pub step: f64,
    pub probe_pivots: u64,
}

const RC_TOL: f64 = 1e-9;
const RATIO_TIE: f64 = 1e-12;
const DEGENERATE_STEP: f64 = 1e-13;
const BLAND_TRIGGER: usize = 60;
const MAX_PIVOTS: u64 = 500_000;

impl TransportLp {
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidMarginal(
                "need at least two marginals".into(),
            ));
        }
        let dims: Vec<usize> = weights.iter().map(|w| w.len()).collect();
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::InvalidMarginal("empty marginal axis".into()));
        }
        let shape = Shape::new(dims.clone());
        let mut offs = vec![0usize; dims.len()];
        for a in 1..dims.len() {
            offs[a] = offs[a - 1] + dims[a - 1];
        }
        let rows = offs[dims.len() - 1] + dims[dims.len() - 1];
        Ok(TransportLp {
            weights,
            shape,
            offs,
            rows,
        })
    }

    pub fn num_axes(&self) -> usize {
        self.shape.ndim()
    }

    pub fn num_cells(&self) -> usize {
        self.shape.len()
    }

    fn basis_size(&self) -> usize {
        self.rows - self.num_axes() + 1
    }

    /// Greedy monotone starting basis: walk the product grid from the first
    /// corner, loading each cell with the least remaining axis mass and
    /// advancing exactly one exhausted axis per step. Produces exactly
    /// `sum(n_i) - m + 1` basic cells (some possibly with zero mass).
    pub fn greedy_basis(&self) -> Basis {
        let m = self.num_axes();
        let mut rem: Vec<Vec<f64>> = self.weights.clone();
        let mut ptr = vec![0usize; m];
        let mut basis = Basis::new();
        loop {
            let mass = (0..m)
                .map(|a| rem[a][ptr[a]])
                .fold(f64::INFINITY, f64::min)
                .max(0.0);
            basis.push((self.shape.ravel(&ptr), mass));
            for a in 0..m {
                rem[a][ptr[a]] -= mass;
            }
            if (0..m).all(|a| ptr[a] == self.shape.dims[a] - 1) {
                break;
            }
            let next = (0..m)
                .find(|&a| ptr[a] < self.shape.dims[a] - 1 && rem[a][ptr[a]] <= 1e-15);
            match next {
                Some(a) => ptr[a] += 1,
                None => {
                    // Remaining mass is numerically stuck; advance the first
                    // non-terminal axis to preserve the basis count.
                    let a = (0..m)
                        .find(|&a| ptr[a] < self.shape.dims[a] - 1)
                        .expect("loop guard ensures a non-terminal axis");
                    ptr[a] += 1;
                }
            }
        }
        debug_assert_eq!(basis.len(), self.basis_size());
        basis
    }

    fn build_basis_matrix(&self, basis: &Basis) -> Vec<f64> {
        let r = self.rows;
        let b = basis.len();
        let m = self.num_axes();
        let mut mat = vec![0.0; r * r];
        for (col, &(cell, _)) in basis.iter().enumerate() {
            for a in 0..m {
                let row = self.offs[a] + self.shape.axis_index(cell, a);
                mat[row * r + col] += 1.0;
            }
        }
        for a in 1..m {
            mat[self.offs[a] * r + (b + a - 1)] = 1.0;
        }
        mat
    }

    /// Reduced-cost gaps `c - sum_a u_a` for every cell.
    pub fn gaps(&self, cost: &[f64], duals: &[Vec<f64>]) -> Vec<f64> {
        let m = self.num_axes();
        (0..self.num_cells())
            .map(|l| {
                let mut g = cost[l];
                for a in 0..m {
                    g -= duals[a][self.shape.axis_index(l, a)];
                }
                g
            })
            .collect()
    }

    /// Primal simplex from `start` (or the greedy basis). `allowed`, when
    /// given, restricts entering candidates to the marked cells.
    pub fn solve(
        &self,
        cost: &[f64],
        seed: u64,
        start: Option<&Basis>,
        allowed: Option<&[bool]>,
    ) -> Result<LpOutcome> {
        let m = self.num_axes();
        let n_cells = self.num_cells();
        if cost.len() != n_cells {
            return Err(Error::Numerical(format!(
                "cost vector length {} vs {} cells",
                cost.len(),
                n_cells
            )));
        }
        let mut basis = match start {
            Some(b) => b.clone(),
            None => self.greedy_basis(),
        };
        if basis.len() != self.basis_size() {
            return Err(Error::Numerical(format!(
                "basis has {} cells, expected {}",
                basis.len(),
                self.basis_size()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tie_rank: Vec<usize> = {
            let mut perm: Vec<usize> = (0..n_cells).collect();
            perm.shuffle(&mut rng);
            let mut rank = vec![0usize; n_cells];
            for (r, &l) in perm.iter().enumerate() {
                rank[l] = r;
            }
            rank
        };
        let mut bland = false;
        let mut degen_run = 0usize;
        let mut pivots = 0u64;
        let duals: Vec<Vec<f64>>;
        loop {
            let lu = Lu::factor(self.build_basis_matrix(&basis), self.rows)?;
            let mut rhs = vec![0.0; self.rows];
            for (col, &(cell, _)) in basis.iter().enumerate() {
                rhs[col] = cost[cell];
            }
            let u = lu.solve_transpose(&rhs);
            let current: Vec<Vec<f64>> = (0..m)
                .map(|a| u[self.offs[a]..self.offs[a] + self.shape.dims[a]].to_vec())
                .collect();

            let mut in_basis = vec![false; n_cells];
            for &(cell, _) in &basis {
                in_basis[cell] = true;
            }
            let reduced = |l: usize| {
                let mut rc = cost[l];
                for a in 0..m {
                    rc -= current[a][self.shape.axis_index(l, a)];
                }
                rc
            };
            let eligible = |l: usize| {
                !in_basis[l] && allowed.map_or(true, |mask| mask[l])
            };
            let mut enter: Option<usize> = None;
            if bland {
                enter = (0..n_cells).find(|&l| eligible(l) && reduced(l) < -RC_TOL);
            } else {
                let mut best = f64::INFINITY;
                for l in 0..n_cells {
                    if eligible(l) {
                        best = best.min(reduced(l));
                    }
                }
                if best < -RC_TOL {
                    let mut best_rank = usize::MAX;
                    for l in 0..n_cells {
                        if eligible(l)
                            && reduced(l) <= best + RATIO_TIE
                            && tie_rank[l] < best_rank
                        {
                            best_rank = tie_rank[l];
                            enter = Some(l);
                        }
                    }
                }
            }
            let Some(enter) = enter else {
                duals = current;
                break;
            };

            let mut col = vec![0.0; self.rows];
            for a in 0..m {
                col[self.offs[a] + self.shape.axis_index(enter, a)] += 1.0;
            }
            let z = lu.solve(&col);
            let mut theta = f64::INFINITY;
            for (bcol, &(_, mass)) in basis.iter().enumerate() {
                if z[bcol] > 1e-11 {
                    theta = theta.min(mass / z[bcol]);
                }
            }
            if !theta.is_finite() {
                return Err(Error::Numerical(
                    "unbounded pivot direction in a bounded polytope".into(),
                ));
            }
            let mut leave = None;
            for (bcol, &(_, mass)) in basis.iter().enumerate() {
                if z[bcol] > 1e-11 && mass / z[bcol] <= theta + RATIO_TIE {
                    leave = Some(bcol);
                    break;
                }
            }
            let leave =
                leave.expect("ratio test found theta, so a blocking column exists");
            for (bcol, entry) in basis.iter_mut().enumerate() {
                if bcol == leave {
                    continue;
                }
                entry.1 = (entry.1 - theta * z[bcol]).max(0.0);
            }
            basis[leave] = (enter, theta.max(0.0));
            pivots += 1;
            if pivots > MAX_PIVOTS {
                return Err(Error::Numerical(format!(
                    "simplex exceeded {MAX_PIVOTS} pivots"
                )));
            }
            if theta <= DEGENERATE_STEP {
                degen_run += 1;
                if degen_run > BLAND_TRIGGER {
                    bland = true;
                }
            } else {
                degen_run = 0;
                bland = false;
            }
        }
        let objective = basis.iter().map(|&(cell, mass)| mass * cost[cell]).sum();
        Ok(LpOutcome {
            basis,
            duals,
            objective,
            pivots,
        })
    }

    /// Replace optimal duals with a strictly complementary pair.
    ///
    /// Every equality cell of the input duals that also carries mass in some
    /// optimal plan keeps gap zero; equality cells no optimal plan uses get a
    /// strictly positive gap. For each candidate cell we maximize its mass
    /// over the equality-restricted face (warm-started from the final basis);
    /// a zero maximum certifies the cell dead and the probe's own duals are a
    /// separating direction. The summed direction is applied with a step
    /// small enough to leave all non-equality gaps strictly positive.
    pub fn strictify(
        &self,
        cost: &[f64],
        basis: &Basis,
        duals: &[Vec<f64>],
    ) -> Result<StrictOutcome> {
        let m = self.num_axes();
        let n_cells = self.num_cells();
        let g0 = self.gaps(cost, duals);
        let scale = 1.0 + cost.iter().fold(0.0f64, |acc, &c| acc.max(c.abs()));
        let mut allowed = vec![false; n_cells];
        for (l, &g) in g0.iter().enumerate() {
            if g <= 1e-9 * scale {
                allowed[l] = true;
            }
        }
        for &(cell, _) in basis {
            allowed[cell] = true;
        }
        let mut in_union = vec![false; n_cells];
        for &(cell, mass) in basis {
            if mass > 1e-9 {
                in_union[cell] = true;
            }
        }
        let mut direction: Vec<Vec<f64>> =
            (0..m).map(|a| vec![0.0; self.shape.dims[a]]).collect();
        let mut dead = Vec::new();
        let mut probe_pivots = 0u64;
        let candidates: Vec<usize> =
            (0..n_cells).filter(|&l| allowed[l]).collect();
        for &e in &candidates {
            if in_union[e] {
                continue;
            }
            let mut probe_cost = vec![0.0; n_cells];
            probe_cost[e] = -1.0;
            let probe = self.solve(&probe_cost, 7, Some(basis), Some(&allowed))?;
            probe_pivots += probe.pivots;
            if -probe.objective > 1e-9 {
                for &(cell, mass) in &probe.basis {
                    if mass > 1e-9 {
                        in_union[cell] = true;
                    }
                }
            } else {
                // Probe duals y satisfy sum_a y_a <= 0 on the face and
                // <= -1 at e, with equality on every optimal-support cell.
                dead.push(e);
                for a in 0..m {
                    for j in 0..self.shape.dims[a] {
                        direction[a][j] += probe.duals[a][j];
                    }
                }
            }
        }
        let step = if dead.is_empty() {
            0.0
        } else {
            let mut max_shift = 0.0f64;
            for l in 0..n_cells {
                let mut s = 0.0;
                for a in 0..m {
                    s += direction[a][self.shape.axis_index(l, a)];
                }
                max_shift = max_shift.max(s.abs());
            }
            let mut gmin = f64::INFINITY;
            for (l, &g) in g0.iter().enumerate() {
                if !allowed[l] {
                    gmin = gmin.min(g);
                }
            }
            if gmin.is_finite() {
                (gmin / (2.0 * (max_shift + 1.0))).min(1e-6)
            } else {
                1e-6
            }
        };
        let strict: Vec<Vec<f64>> = (0..m)
            .map(|a| {
                (0..self.shape.dims[a])
                    .map(|j| duals[a][j] + step * direction[a][j])
                    .collect()
            })
            .collect();
        let optimal_support: Vec<usize> =
            (0..n_cells).filter(|&l| in_union[l]).collect();
        Ok(StrictOutcome {
            duals: strict,
            optimal_support,
            dead_cells: dead,
            step,
            probe_pivots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn lu_round_trip() {
        let a = vec![2.0, 1.0, -1.0, -3.0, -1.0, 2.0, -2.0, 1.0, 2.0];
        let lu = Lu::factor(a.clone(), 3).unwrap();
        let x = lu.solve(&[8.0, -11.0, -3.0]);
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x[2], -1.0, epsilon = 1e-12);
        // Transpose solve agrees with solving the transposed matrix.
        let bt = [1.0, 2.0, 3.0];
        let xt = lu.solve_transpose(&bt);
        for r in 0..3 {
            let mut acc = 0.0;
            for c in 0..3 {
                acc += a[c * 3 + r] * xt[c];
            }
            assert_abs_diff_eq!(acc, bt[r], epsilon = 1e-12);
        }
    }

    #[test]
    fn greedy_basis_has_expected_count_and_feasibility() {
        let lp = TransportLp::new(vec![uniform(3), uniform(4), uniform(5)]).unwrap();
        let basis = lp.greedy_basis();
        assert_eq!(basis.len(), 3 + 4 + 5 - 3 + 1);
        let mut sums = vec![vec![0.0; 5]; 3];
        for &(cell, mass) in &basis {
            assert!(mass >= 0.0);
            for a in 0..3 {
                sums[a][lp.shape.axis_index(cell, a)] += mass;
            }
        }
        for a in 0..3 {
            for j in 0..lp.shape.dims[a] {
                assert_abs_diff_eq!(sums[a][j], lp.weights[a][j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn two_marginal_product_cost_selects_diagonal() {
        let lp = TransportLp::new(vec![uniform(2), uniform(2)]).unwrap();
        // Grid {0, 1}, cost -x*y: only cell (1,1) has cost -1.
        let cost = vec![0.0, 0.0, 0.0, -1.0];
        let out = lp.solve(&cost, 0, None, None).unwrap();
        assert_abs_diff_eq!(out.objective, -0.5, epsilon = 1e-12);
        let support: Vec<usize> = out
            .basis
            .iter()
            .filter(|&&(_, mass)| mass > 1e-9)
            .map(|&(cell, _)| cell)
            .collect();
        assert_eq!(support, vec![0, 3]);
        // Dual feasibility and complementary slackness.
        let gaps = lp.gaps(&cost, &out.duals);
        for (l, &g) in gaps.iter().enumerate() {
            assert!(g >= -1e-9, "cell {l} gap {g}");
        }
        assert!(gaps[0].abs() <= 1e-9 && gaps[3].abs() <= 1e-9);
        // Gauge: second axis first atom pinned.
        assert_abs_diff_eq!(out.duals[1][0], 0.0);
    }

    #[test]
    fn duals_are_deterministic_across_seeds_for_unique_optimum() {
        let n = 6;
        let lp = TransportLp::new(vec![uniform(n), uniform(n)]).unwrap();
        let pts: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
        let cost: Vec<f64> = (0..n * n)
            .map(|l| {
                let i = l / n;
                let j = l % n;
                -pts[i] * pts[j]
            })
            .collect();
        let a = lp.solve(&cost, 1, None, None).unwrap();
        let b = lp.solve(&cost, 99, None, None).unwrap();
        assert_abs_diff_eq!(a.objective, b.objective, epsilon = 1e-12);
        let sa: Vec<usize> = a.basis.iter().filter(|e| e.1 > 1e-9).map(|e| e.0).collect();
        let sb: Vec<usize> = b.basis.iter().filter(|e| e.1 > 1e-9).map(|e| e.0).collect();
        assert_eq!(sa, sb);
    }

    #[test]
    fn adversarial_pivoting_reaches_optimum() {
        // Non-uniform weights and a cost with many near-ties force pivoting
        // away from the greedy start.
        let w1 = vec![0.1, 0.3, 0.2, 0.4];
        let w2 = vec![0.25, 0.25, 0.2, 0.3];
        let lp = TransportLp::new(vec![w1.clone(), w2.clone()]).unwrap();
        let cost: Vec<f64> = (0..16)
            .map(|l| {
                let i = (l / 4) as f64;
                let j = (l % 4) as f64;
                (i - j).abs().powi(2) * 0.5 + ((i * 7.0 + j * 3.0) % 2.0) * 1e-6
            })
            .collect();
        let out = lp.solve(&cost, 42, None, None).unwrap();
        let brute = {
            // Oracle: this is a 4x4 transportation problem; check against a
            // fine-grained LP via the same solver from a different start is
            // circular, so verify dual feasibility + complementary slackness
            // instead, which certifies optimality.
            let gaps = lp.gaps(&cost, &out.duals);
            let mut ok = true;
            for (l, &g) in gaps.iter().enumerate() {
                if g < -1e-9 {
                    ok = false;
                }
                let in_support = out.basis.iter().any(|&(c, m)| c == l && m > 1e-9);
                if in_support && g.abs() > 1e-9 {
                    ok = false;
                }
            }
            ok
        };
        assert!(brute);
        let mut sums = vec![0.0; 4];
        for &(cell, mass) in &out.basis {
            sums[cell / 4] += mass;
        }
        for j in 0..4 {
            assert_abs_diff_eq!(sums[j], w1[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn strictify_opens_gap_on_dead_cells_only() {
        // Uniform two-marginal strictly supermodular cost: unique optimum on
        // the diagonal, greedy degenerate cells are dead.
        let n = 4;
        let lp = TransportLp::new(vec![uniform(n), uniform(n)]).unwrap();
        let pts: Vec<f64> = (0..n).map(|j| (j as f64 + 0.5) / n as f64).collect();
        let cost: Vec<f64> = (0..n * n)
            .map(|l| -pts[l / n] * pts[l % n])
            .collect();
        let out = lp.solve(&cost, 0, None, None).unwrap();
        let strict = lp.strictify(&cost, &out.basis, &out.duals).unwrap();
        let diag: Vec<usize> = (0..n).map(|j| j * n + j).collect();
        assert_eq!(strict.optimal_support, diag);
        assert!(!strict.dead_cells.is_empty());
        assert!(strict.step > 0.0);
        let gaps = lp.gaps(&cost, &strict.duals);
        for (l, &g) in gaps.iter().enumerate() {
            if diag.contains(&l) {
                assert!(g.abs() <= 1e-9, "support cell {l} gap {g}");
            } else {
                assert!(g >= strict.step * 0.5, "cell {l} gap {g} not opened");
            }
        }
    }

    #[test]
    fn strictify_keeps_whole_face_on_degenerate_cost() {
        // Zero cost: every cell is optimal; nothing is dead and duals stay.
        let lp = TransportLp::new(vec![uniform(2), uniform(2)]).unwrap();
        let cost = vec![0.0; 4];
        let out = lp.solve(&cost, 0, None, None).unwrap();
        let strict = lp.strictify(&cost, &out.basis, &out.duals).unwrap();
        assert!(strict.dead_cells.is_empty());
        assert_eq!(strict.optimal_support, vec![0, 1, 2, 3]);
        assert_abs_diff_eq!(strict.step, 0.0);
    }

    #[test]
    fn three_axis_solve_matches_hand_optimum() {
        // m=3 uniform on {0,1}: cost -x*y*z style interaction via pair sums.
        // c = -(xy + xz + yz) on {0,1}^3; optimal couples all ones together:
        // 0.5 mass at (0,0,0) and 0.5 at (1,1,1), objective -1.5.
        let lp = TransportLp::new(vec![uniform(2), uniform(2), uniform(2)]).unwrap();
        let cost: Vec<f64> = (0..8)
            .map(|l| {
                let x = (l >> 2) as f64;
                let y = ((l >> 1) & 1) as f64;
                let z = (l & 1) as f64;
                -(x * y + x * z + y * z)
            })
            .collect();
        let out = lp.solve(&cost, 0, None, None).unwrap();
        assert_abs_diff_eq!(out.objective, -1.5, epsilon = 1e-12);
        let gaps = lp.gaps(&cost, &out.duals);
        for &g in &gaps {
            assert!(g >= -1e-9);
        }
    }
}
