//! Splitting potentials: gap evaluation, conjugate updates, and certificate
//! verification.
//!
//! A family of potentials `u_1..u_m` (one vector per marginal grid) is a
//! splitting family for a candidate set `S` when `sum_i u_i(x_i) <= c(x)`
//! holds on the whole product grid and with equality on `S`. The gap
//! `c - sum u` is therefore nonnegative with zeros exactly on the equality
//! set; all verification below reduces to scanning that gap.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::CostModel;
use crate::measures::{DiscreteMarginal, ProductIndex, Shape};
use crate::{Error, Result};

/// Additive-constant convention attached to a potential family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gauge {
    /// First atom of every axis except the first pinned to zero (LP duals).
    FirstAtomZero,
    /// No convention claimed.
    Free,
}

/// One potential vector per marginal grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Potentials {
    pub values: Vec<Vec<f64>>,
    pub gauge: Gauge,
}

impl Potentials {
    pub fn zeros(marginals: &[DiscreteMarginal]) -> Self {
        Potentials {
            values: marginals.iter().map(|m| vec![0.0; m.len()]).collect(),
            gauge: Gauge::FirstAtomZero,
        }
    }

    pub fn from_lp_duals(values: Vec<Vec<f64>>) -> Self {
        Potentials {
            values,
            gauge: Gauge::FirstAtomZero,
        }
    }

    pub fn free(values: Vec<Vec<f64>>) -> Self {
        Potentials {
            values,
            gauge: Gauge::Free,
        }
    }

    pub fn num_axes(&self) -> usize {
        self.values.len()
    }

    /// `sum_i u_i(x_i)` at a grid index tuple.
    pub fn sum_at(&self, idx: &[usize]) -> f64 {
        idx.iter()
            .zip(&self.values)
            .map(|(&j, u)| u[j])
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }
}

fn ensure_consistent(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
) -> Result<()> {
    let m = marginals.len();
    if cost.arity() != m {
        return Err(Error::ArityMismatch {
            expected: cost.arity(),
            got: m,
        });
    }
    if potentials.num_axes() != m {
        return Err(Error::ArityMismatch {
            expected: m,
            got: potentials.num_axes(),
        });
    }
    for (a, (u, marg)) in potentials.values.iter().zip(marginals).enumerate() {
        if u.len() != marg.len() {
            return Err(Error::InvalidConfig(format!(
                "potential on axis {a} has {} entries for {} atoms",
                u.len(),
                marg.len()
            )));
        }
    }
    Ok(())
}

/// `c(x) - sum_i u_i(x_i)` at one grid point.
pub fn splitting_gap(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    idx: &ProductIndex,
) -> Result<f64> {
    ensure_consistent(potentials, cost, marginals)?;
    let coords = idx.coords(marginals);
    Ok(cost.eval(&coords)? - potentials.sum_at(&idx.0))
}

/// The full gap tensor `c - (+) u` in row-major cell order.
pub fn gap_tensor(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
) -> Result<Vec<f64>> {
    ensure_consistent(potentials, cost, marginals)?;
    let shape = Shape::from_marginals(marginals);
    let m = marginals.len();
    let mut out = Vec::with_capacity(shape.len());
    let mut coords = vec![0.0; m];
    for l in 0..shape.len() {
        let mut usum = 0.0;
        for a in 0..m {
            let j = shape.axis_index(l, a);
            coords[a] = marginals[a].grid.points[j];
            usum += potentials.values[a][j];
        }
        out.push(cost.eval(&coords)? - usum);
    }
    Ok(out)
}

/// Verdict of a splitting-certificate scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplittingReport {
    /// Minimum gap over the scanned grid (must be `>= -tol`).
    pub min_gap: f64,
    pub min_gap_at: ProductIndex,
    pub min_gap_at_coords: Vec<f64>,
    /// Maximum |gap| over the candidate set (must be `<= tol`).
    pub max_abs_gap_on_set: f64,
    pub worst_set_member: ProductIndex,
    pub worst_set_member_coords: Vec<f64>,
    pub splitting: bool,
    /// True when the grid exceeded the scan cap and only a seeded sample of
    /// grid points was checked.
    pub partial: bool,
    pub tol: f64,
    pub scanned_cells: usize,
}

pub const DEFAULT_SCAN_CAP: usize = 2_000_000;

/// Check the two splitting clauses: `gap >= -tol` over the grid (full scan,
/// or a seeded sample flagged `partial` past `scan_cap`) and `|gap| <= tol`
/// on every point of `set`.
pub fn verify_splitting_set(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    set: &[ProductIndex],
    tol: f64,
    scan_cap: usize,
) -> Result<SplittingReport> {
    ensure_consistent(potentials, cost, marginals)?;
    if set.is_empty() {
        return Err(Error::InvalidConfig(
            "splitting check needs a nonempty candidate set".into(),
        ));
    }
    let shape = Shape::from_marginals(marginals);
    let n_cells = shape.len();
    let gap_at = |idx: &[usize]| -> Result<f64> {
        let coords: Vec<f64> = idx
            .iter()
            .zip(marginals)
            .map(|(&j, m)| m.grid.points[j])
            .collect();
        Ok(cost.eval(&coords)? - potentials.sum_at(idx))
    };
    let mut min_gap = f64::INFINITY;
    let mut min_at = vec![0usize; marginals.len()];
    let partial = n_cells > scan_cap;
    let mut scanned = 0usize;
    if partial {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5ca1e);
        for _ in 0..scan_cap {
            let idx: Vec<usize> = marginals
                .iter()
                .map(|m| rng.gen_range(0..m.len()))
                .collect();
            let g = gap_at(&idx)?;
            if g < min_gap {
                min_gap = g;
                min_at = idx;
            }
            scanned += 1;
        }
    } else {
        for l in 0..n_cells {
            let idx = shape.unravel(l);
            let g = gap_at(&idx)?;
            if g < min_gap {
                min_gap = g;
                min_at = idx;
            }
            scanned += 1;
        }
    }
    let mut max_abs = -1.0f64;
    let mut worst = set[0].clone();
    for p in set {
        let g = gap_at(&p.0)?.abs();
        if g > max_abs {
            max_abs = g;
            worst = p.clone();
        }
    }
    let min_gap_at = ProductIndex(min_at);
    Ok(SplittingReport {
        min_gap_at_coords: min_gap_at.coords(marginals),
        min_gap,
        min_gap_at,
        max_abs_gap_on_set: max_abs,
        worst_set_member_coords: worst.coords(marginals),
        worst_set_member: worst,
        splitting: min_gap >= -tol && max_abs <= tol,
        partial,
        tol,
        scanned_cells: scanned,
    })
}

/// Result of one conjugate update: the new potentials plus, per atom of the
/// updated axis, every complementary tuple realizing the minimum (ties
/// within `1e-12` of the minimum are all recorded).
pub struct ConjugateUpdate {
    pub potentials: Potentials,
    pub argmins: Vec<Vec<ProductIndex>>,
}

/// Replace `u_axis` with the exact grid conjugate
/// `x -> min over the complementary grid of (c - sum_{j != axis} u_j)`.
pub fn c_conjugate_update(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    axis: usize,
    scan_cap: usize,
) -> Result<ConjugateUpdate> {
    ensure_consistent(potentials, cost, marginals)?;
    let m = marginals.len();
    if axis >= m {
        return Err(Error::InvalidConfig(format!(
            "axis {axis} out of range for {m} marginals"
        )));
    }
    let shape = Shape::from_marginals(marginals);
    if shape.len() > scan_cap {
        return Err(Error::TooLarge {
            cells: shape.len(),
            cap: scan_cap,
        });
    }
    let n_axis = marginals[axis].len();
    let mut best = vec![f64::INFINITY; n_axis];
    let mut coords = vec![0.0; m];
    let value_at = |l: usize, coords: &mut [f64]| -> Result<(usize, f64)> {
        let mut usum = 0.0;
        for a in 0..m {
            let j = shape.axis_index(l, a);
            coords[a] = marginals[a].grid.points[j];
            if a != axis {
                usum += potentials.values[a][j];
            }
        }
        Ok((shape.axis_index(l, axis), cost.eval(coords)? - usum))
    };
    for l in 0..shape.len() {
        let (j_axis, val) = value_at(l, &mut coords)?;
        if val < best[j_axis] {
            best[j_axis] = val;
        }
    }
    let mut argmins: Vec<Vec<ProductIndex>> = vec![Vec::new(); n_axis];
    for l in 0..shape.len() {
        let (j_axis, val) = value_at(l, &mut coords)?;
        if val <= best[j_axis] + 1e-12 {
            argmins[j_axis].push(ProductIndex(shape.unravel(l)));
        }
    }
    let mut values = potentials.values.clone();
    values[axis] = best;
    Ok(ConjugateUpdate {
        potentials: Potentials {
            values,
            gauge: Gauge::Free,
        },
        argmins,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConjugateConvergence {
    pub sweeps_run: usize,
    pub last_change: f64,
    pub converged: bool,
}

/// Round-robin conjugate updates until the sup-norm change of a full sweep
/// is `<= 1e-10` or `sweeps` is exhausted. `sweeps = 0` returns the input.
pub fn conjugate_iterate(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    sweeps: usize,
    scan_cap: usize,
) -> Result<(Potentials, ConjugateConvergence)> {
    ensure_consistent(potentials, cost, marginals)?;
    let mut current = potentials.clone();
    let mut report = ConjugateConvergence {
        sweeps_run: 0,
        last_change: f64::INFINITY,
        converged: false,
    };
    for _ in 0..sweeps {
        let before = current.clone();
        for axis in 0..marginals.len() {
            current = c_conjugate_update(&current, cost, marginals, axis, scan_cap)?.potentials;
        }
        let mut change = 0.0f64;
        for (ua, ub) in before.values.iter().zip(&current.values) {
            for (a, b) in ua.iter().zip(ub) {
                change = change.max((a - b).abs());
            }
        }
        report.sweeps_run += 1;
        report.last_change = change;
        if change <= 1e-10 {
            report.converged = true;
            break;
        }
    }
    Ok((current, report))
}
