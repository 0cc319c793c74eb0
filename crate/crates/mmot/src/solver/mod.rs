//! Optimal-coupling solvers: exact transportation simplex at desk scale,
//! entropic scaling beyond it, and a structure-exploiting entropic variant
//! for block-decomposable costs.

pub mod entropic;
pub mod simplex;
pub mod structured;

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::costs::CostModel;
use crate::duality::Potentials;
use crate::measures::{DiscreteMarginal, ProductIndex, Shape};
use crate::{Error, Result};

pub use simplex::TransportLp;

/// Default cell cap for the exact LP.
pub const DEFAULT_LP_CAP: usize = 200_000;
/// Mass threshold below which a cell does not count as support.
pub const SUPPORT_MASS_TOL: f64 = 1e-9;
pub const DEFAULT_ENTROPIC_TOL: f64 = 1e-11;
pub const DEFAULT_ENTROPIC_MAX_ITER: usize = 50_000;

/// A sparse nonnegative tensor over the product grid.
#[derive(Debug, Clone)]
pub struct Coupling {
    pub shape: Shape,
    /// Strictly positive masses only.
    pub entries: BTreeMap<ProductIndex, f64>,
}

impl Coupling {
    pub fn axis_marginals(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self.shape.dims.iter().map(|&n| vec![0.0; n]).collect();
        for (idx, &mass) in &self.entries {
            for (a, &j) in idx.0.iter().enumerate() {
                out[a][j] += mass;
            }
        }
        out
    }

    /// Entries with mass above [`SUPPORT_MASS_TOL`], in index order.
    pub fn support(&self) -> Vec<ProductIndex> {
        self.entries
            .iter()
            .filter(|(_, &mass)| mass > SUPPORT_MASS_TOL)
            .map(|(idx, _)| idx.clone())
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveStats {
    /// Simplex pivots or scaling sweeps.
    pub iterations: u64,
    pub cost_evals: u64,
    pub runtime_ms: u128,
}

#[derive(Debug)]
pub struct SolveResult {
    /// Absent for the structured entropic solver, which never materializes
    /// the full coupling tensor.
    pub coupling: Option<Coupling>,
    pub objective: f64,
    /// Exact axis marginals of the computed coupling, before any support
    /// thresholding.
    pub axis_marginals: Vec<Vec<f64>>,
    /// Dual potentials (exact LP) or scaling potentials (entropic).
    pub potentials: Option<Potentials>,
    /// Strictly complementary adjustment of the LP duals, equality set equal
    /// to the union of optimal supports.
    pub strict_potentials: Option<Potentials>,
    /// Cells used by at least one optimal plan (exact LP only).
    pub optimal_support: Option<Vec<ProductIndex>>,
    /// Equality cells of the raw LP duals carried by no optimal plan.
    pub dead_cells: usize,
    pub stats: SolveStats,
}

fn ensure_cost_arity(marginals: &[DiscreteMarginal], cost: &CostModel) -> Result<()> {
    if cost.arity() != marginals.len() {
        return Err(Error::ArityMismatch {
            expected: cost.arity(),
            got: marginals.len(),
        });
    }
    Ok(())
}

/// Dense row-major evaluation of `cost` on the product grid.
pub fn cost_tensor(marginals: &[DiscreteMarginal], cost: &CostModel) -> Result<Vec<f64>> {
    ensure_cost_arity(marginals, cost)?;
    let shape = Shape::from_marginals(marginals);
    let m = marginals.len();
    let mut out = Vec::with_capacity(shape.len());
    let mut coords = vec![0.0; m];
    for l in 0..shape.len() {
        for (a, c) in coords.iter_mut().enumerate() {
            *c = marginals[a].grid.points[shape.axis_index(l, a)];
        }
        out.push(cost.eval(&coords)?);
    }
    Ok(out)
}

fn coupling_from_cells(shape: &Shape, cells: &[(usize, f64)]) -> Coupling {
    let mut entries = BTreeMap::new();
    for &(lin, mass) in cells {
        if mass > SUPPORT_MASS_TOL {
            entries.insert(ProductIndex(shape.unravel(lin)), mass);
        }
    }
    Coupling {
        shape: shape.clone(),
        entries,
    }
}

fn basis_axis_marginals(shape: &Shape, basis: &[(usize, f64)]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = shape.dims.iter().map(|&n| vec![0.0; n]).collect();
    for &(lin, mass) in basis {
        for a in 0..shape.dims.len() {
            out[a][shape.axis_index(lin, a)] += mass;
        }
    }
    out
}

/// Exact LP solve under the default cell cap.
pub fn solve_exact_lp(
    marginals: &[DiscreteMarginal],
    cost: &CostModel,
    tie_break_seed: u64,
) -> Result<SolveResult> {
    solve_exact_lp_capped(marginals, cost, tie_break_seed, DEFAULT_LP_CAP)
}

/// Exact LP: vertex-optimal plan, gauge-fixed duals, and a strictly
/// complementary dual adjustment identifying the union of optimal supports.
pub fn solve_exact_lp_capped(
    marginals: &[DiscreteMarginal],
    cost: &CostModel,
    tie_break_seed: u64,
    cap: usize,
) -> Result<SolveResult> {
    ensure_cost_arity(marginals, cost)?;
    let shape = Shape::from_marginals(marginals);
    if shape.len() > cap {
        return Err(Error::TooLarge {
            cells: shape.len(),
            cap,
        });
    }
    let start = Instant::now();
    let cost_vec = cost_tensor(marginals, cost)?;
    let lp = TransportLp::new(marginals.iter().map(|w| w.weights.clone()).collect())?;
    let outcome = lp.solve(&cost_vec, tie_break_seed, None, None)?;
    let strict = lp.strictify(&cost_vec, &outcome.basis, &outcome.duals)?;
    let coupling = coupling_from_cells(&shape, &outcome.basis);
    let axis_marginals = basis_axis_marginals(&shape, &outcome.basis);
    let optimal_support = strict
        .optimal_support
        .iter()
        .map(|&lin| ProductIndex(shape.unravel(lin)))
        .collect();
    Ok(SolveResult {
        coupling: Some(coupling),
        objective: outcome.objective,
        axis_marginals,
        potentials: Some(Potentials::from_lp_duals(outcome.duals)),
        strict_potentials: Some(Potentials::from_lp_duals(strict.duals)),
        optimal_support: Some(optimal_support),
        dead_cells: strict.dead_cells.len(),
        stats: SolveStats {
            iterations: outcome.pivots + strict.probe_pivots,
            cost_evals: shape.len() as u64,
            runtime_ms: start.elapsed().as_millis(),
        },
    })
}

/// Dense entropic solve; the returned coupling drops cells at or below
/// [`SUPPORT_MASS_TOL`] while `axis_marginals` keeps the exact sums.
pub fn solve_entropic(
    marginals: &[DiscreteMarginal],
    cost: &CostModel,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SolveResult> {
    ensure_cost_arity(marginals, cost)?;
    let start = Instant::now();
    let shape = Shape::from_marginals(marginals);
    let cost_vec = cost_tensor(marginals, cost)?;
    let weights: Vec<Vec<f64>> = marginals.iter().map(|w| w.weights.clone()).collect();
    let outcome = entropic::scale_dense(&weights, &cost_vec, epsilon, max_iter, tol)?;
    let cells: Vec<(usize, f64)> = outcome
        .gamma
        .iter()
        .enumerate()
        .map(|(l, &g)| (l, g))
        .collect();
    let coupling = coupling_from_cells(&shape, &cells);
    Ok(SolveResult {
        coupling: Some(coupling),
        objective: outcome.objective,
        axis_marginals: outcome.axis_marginals,
        potentials: Some(Potentials::free(outcome.potentials)),
        strict_potentials: None,
        optimal_support: None,
        dead_cells: 0,
        stats: SolveStats {
            iterations: outcome.sweeps,
            cost_evals: shape.len() as u64,
            runtime_ms: start.elapsed().as_millis(),
        },
    })
}

/// Entropic solve by block contraction; same fixed point as
/// [`solve_entropic`] but never materializes the coupling tensor, so
/// `coupling` is `None` and `cost_evals` counts block-kernel entries only.
pub fn solve_entropic_structured(
    marginals: &[DiscreteMarginal],
    cost: &CostModel,
    epsilon: f64,
    max_iter: usize,
    tol: f64,
) -> Result<SolveResult> {
    ensure_cost_arity(marginals, cost)?;
    let start = Instant::now();
    let outcome = structured::scale_structured(marginals, cost, epsilon, max_iter, tol)?;
    Ok(SolveResult {
        coupling: None,
        objective: outcome.objective,
        axis_marginals: outcome.axis_marginals,
        potentials: Some(Potentials::free(outcome.potentials)),
        strict_potentials: None,
        optimal_support: None,
        dead_cells: 0,
        stats: SolveStats {
            iterations: outcome.sweeps,
            cost_evals: outcome.cost_evals,
            runtime_ms: start.elapsed().as_millis(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UniquenessVerdict {
    UniqueAtTolerance,
    MultipleOptima,
}

impl std::fmt::Display for UniquenessVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UniquenessVerdict::UniqueAtTolerance => write!(f, "unique-at-tolerance"),
            UniquenessVerdict::MultipleOptima => write!(f, "multiple optima"),
        }
    }
}

#[derive(Debug)]
pub struct UniquenessReport {
    pub verdict: UniquenessVerdict,
    pub base_objective: f64,
    /// Largest |unperturbed objective - base objective| over kept trials.
    pub objective_spread: f64,
    /// Trials whose plan stayed optimal for the unperturbed cost.
    pub kept_trials: usize,
    pub base_support: Vec<ProductIndex>,
    /// Two couplings of equal unperturbed objective with different supports;
    /// present exactly when the verdict is `MultipleOptima`.
    pub witnesses: Option<(Coupling, Coupling)>,
}

/// Probe the optimal face of the exact LP by re-solving under small random
/// cost perturbations and distinct pivot tie-breaks, keeping only plans that
/// remain optimal for the unperturbed cost.
pub fn uniqueness_probe(
    marginals: &[DiscreteMarginal],
    cost: &CostModel,
    trials: usize,
    delta: f64,
    seed: u64,
) -> Result<UniquenessReport> {
    if trials < 2 {
        return Err(Error::TooFewTrials);
    }
    if delta <= 0.0 {
        return Err(Error::InvalidConfig("perturbation delta must be positive".into()));
    }
    ensure_cost_arity(marginals, cost)?;
    let shape = Shape::from_marginals(marginals);
    if shape.len() > DEFAULT_LP_CAP {
        return Err(Error::TooLarge {
            cells: shape.len(),
            cap: DEFAULT_LP_CAP,
        });
    }
    let cost_vec = cost_tensor(marginals, cost)?;
    let lp = TransportLp::new(marginals.iter().map(|w| w.weights.clone()).collect())?;
    let base = lp.solve(&cost_vec, seed, None, None)?;
    let base_coupling = coupling_from_cells(&shape, &base.basis);
    let base_support: Vec<ProductIndex> = base_coupling.support();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objective_spread = 0.0f64;
    let mut kept = 0usize;
    let mut witness: Option<Coupling> = None;
    for trial in 0..trials {
        let perturbed: Vec<f64> = cost_vec
            .iter()
            .map(|&c| c + rng.gen_range(-delta..=delta))
            .collect();
        let outcome = lp.solve(&perturbed, seed.wrapping_add(1 + trial as u64), None, None)?;
        let unperturbed_obj: f64 = outcome
            .basis
            .iter()
            .map(|&(lin, mass)| mass * cost_vec[lin])
            .sum();
        if unperturbed_obj > base.objective + 1e-9 {
            continue;
        }
        kept += 1;
        objective_spread = objective_spread.max((unperturbed_obj - base.objective).abs());
        let coupling = coupling_from_cells(&shape, &outcome.basis);
        if witness.is_none() && coupling.support() != base_support {
            witness = Some(coupling);
        }
    }
    let (verdict, witnesses) = match witness {
        Some(other) => (
            UniquenessVerdict::MultipleOptima,
            Some((base_coupling, other)),
        ),
        None => (UniquenessVerdict::UniqueAtTolerance, None),
    };
    Ok(UniquenessReport {
        verdict,
        base_objective: base.objective,
        objective_spread,
        kept_trials: kept,
        base_support,
        witnesses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{make_counterexample_cost, make_submodular_graph_cost, CostModel, SimpleGraph};
    use crate::duality::verify_splitting_set;
    use crate::measures::{discretize_density, DiscreteMarginal, Grid1D};
    use std::collections::BTreeMap as Map;

    fn two_point_uniform() -> DiscreteMarginal {
        DiscreteMarginal::new(
            Grid1D {
                points: vec![0.0, 1.0],
                h: 1.0,
                lo: -0.5,
                hi: 1.5,
            },
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    fn neg_product_pair() -> CostModel {
        make_submodular_graph_cost(
            &Map::from([((0, 1), -1.0)]),
            &SimpleGraph::new(2, &[(0, 1)], &[]).unwrap(),
        )
        .unwrap()
    }

    fn three_point_uniform() -> DiscreteMarginal {
        DiscreteMarginal::new(
            Grid1D {
                points: vec![-1.0, 0.0, 1.0],
                h: 1.0,
                lo: -1.5,
                hi: 1.5,
            },
            vec![1.0 / 3.0; 3],
        )
        .unwrap()
    }

    #[test]
    fn pair_instance_solves_to_monotone_vertex() {
        let marginals = vec![two_point_uniform(), two_point_uniform()];
        let result = solve_exact_lp(&marginals, &neg_product_pair(), 0).unwrap();
        assert!((result.objective - (-0.5)).abs() <= 1e-12);
        let coupling = result.coupling.unwrap();
        let support = coupling.support();
        assert_eq!(
            support,
            vec![ProductIndex(vec![0, 0]), ProductIndex(vec![1, 1])]
        );
        for idx in &support {
            assert!((coupling.entries[idx] - 0.5).abs() <= 1e-12);
        }
        let report = verify_splitting_set(
            result.potentials.as_ref().unwrap(),
            &neg_product_pair(),
            &marginals,
            &support,
            1e-8,
            crate::duality::DEFAULT_SCAN_CAP,
        )
        .unwrap();
        assert!(report.splitting);
    }

    #[test]
    fn zero_cost_objective_is_zero() {
        let marginals = vec![two_point_uniform(), two_point_uniform(), two_point_uniform()];
        let result = solve_exact_lp(&marginals, &CostModel::Zero { m: 3 }, 1).unwrap();
        assert!(result.objective.abs() <= 1e-12);
        let sums = result.axis_marginals;
        for axis in &sums {
            for &v in axis {
                assert!((v - 0.5).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn counterexample_reaches_zero_objective() {
        let marginals = vec![three_point_uniform(); 3];
        let result = solve_exact_lp(&marginals, &make_counterexample_cost(), 2).unwrap();
        assert!(result.objective.abs() <= 1e-10);
    }

    #[test]
    fn lp_cap_rejects_oversized_grids() {
        let marginals: Vec<DiscreteMarginal> = (0..3)
            .map(|_| discretize_density(|_| 1.0, (0.0, 1.0), 60).unwrap())
            .collect();
        let cost = CostModel::Zero { m: 3 };
        let err = solve_exact_lp(&marginals, &cost, 0).unwrap_err();
        match err {
            Error::TooLarge { cells, cap } => {
                assert_eq!(cells, 216_000);
                assert_eq!(cap, DEFAULT_LP_CAP);
            }
            other => panic!("expected TooLarge, got {other:?}"),
        }
    }

    #[test]
    fn entropic_matches_lp_band_on_pair_instance() {
        let marginals = vec![two_point_uniform(), two_point_uniform()];
        let result =
            solve_entropic(&marginals, &neg_product_pair(), 0.05, 400_000, 1e-11).unwrap();
        assert!(result.objective >= -0.5 - 1e-12);
        assert!(result.objective <= -0.5 + 0.05 * (2.0f64).ln() * 2.0);
        let coupling = result.coupling.unwrap();
        let sums = coupling.axis_marginals();
        for axis in &sums {
            for &v in axis {
                assert!((v - 0.5).abs() <= 1e-6);
            }
        }
        for axis in &result.axis_marginals {
            for &v in axis {
                assert!((v - 0.5).abs() <= 1e-11);
            }
        }
    }

    #[test]
    fn structured_result_reports_block_cost_evals() {
        let marginals: Vec<DiscreteMarginal> = (0..3)
            .map(|_| discretize_density(|_| 1.0, (0.0, 1.0), 10).unwrap())
            .collect();
        let pair = crate::costs::make_bilinear_partition_cost(
            crate::costs::PartitionSpec::new(&[0], &[1], &[], 1, -1.0).unwrap(),
        )
        .unwrap();
        let cost = crate::costs::make_chain_cost(crate::costs::ChainSpec::Consecutive {
            cuts: vec![0, 1, 2],
            blocks: vec![pair.clone(), pair],
        })
        .unwrap();
        let result = solve_entropic_structured(&marginals, &cost, 0.1, 50_000, 1e-11).unwrap();
        assert!(result.coupling.is_none());
        assert_eq!(result.stats.cost_evals, 200);
        let dense = solve_entropic(&marginals, &cost, 0.1, 50_000, 1e-11).unwrap();
        assert!((result.objective - dense.objective).abs() <= 1e-9);
    }

    #[test]
    fn probe_reports_unique_optimum_on_pair_instance() {
        let marginals = vec![two_point_uniform(), two_point_uniform()];
        let report = uniqueness_probe(&marginals, &neg_product_pair(), 4, 1e-7, 0).unwrap();
        assert_eq!(report.verdict, UniquenessVerdict::UniqueAtTolerance);
        assert!(report.witnesses.is_none());
        assert!(report.kept_trials >= 1);
        assert!(report.objective_spread <= 1e-9);
    }

    #[test]
    fn probe_detects_flat_face_of_counterexample() {
        let marginals = vec![three_point_uniform(); 3];
        let report =
            uniqueness_probe(&marginals, &make_counterexample_cost(), 8, 1e-7, 3).unwrap();
        assert_eq!(report.verdict, UniquenessVerdict::MultipleOptima);
        let (a, b) = report.witnesses.as_ref().unwrap();
        let obj = |c: &Coupling| -> f64 {
            c.entries
                .iter()
                .map(|(idx, &mass)| {
                    let x = idx.coords(&marginals);
                    mass * make_counterexample_cost().eval(&x).unwrap()
                })
                .sum()
        };
        assert!(obj(a).abs() <= 1e-9);
        assert!(obj(b).abs() <= 1e-9);
        assert_ne!(a.support(), b.support());
    }

    #[test]
    fn one_trial_is_rejected() {
        let marginals = vec![two_point_uniform(), two_point_uniform()];
        let err = uniqueness_probe(&marginals, &neg_product_pair(), 1, 1e-7, 0).unwrap_err();
        assert!(matches!(err, Error::TooFewTrials));
    }
}
