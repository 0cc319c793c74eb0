//! Experiment configuration, the verification pipeline, config batteries,
//! and the structured-solver benchmark.
//!
//! A pipeline run solves one configured instance, then walks the verifier
//! stages in a fixed order: splitting certificate, cyclical monotonicity,
//! graphicality, twist probe, uniqueness probe. Verdicts are compared
//! against per-config expectations so negative instances (multiple optima,
//! gradient collisions) pass as first-class tests. `report.json` contains no
//! timing data and is byte-identical across reruns with the same seed;
//! wall-clock numbers go to `timings.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::costs::{
    make_bilinear_partition_cost, make_chain_cost, make_counterexample_cost, make_cycle_cost,
    make_submodular_graph_cost, ChainSpec, CostModel, PartitionSpec, SimpleGraph,
};
use crate::duality::{conjugate_iterate, verify_splitting_set, ConjugateConvergence, Potentials,
    SplittingReport, DEFAULT_SCAN_CAP};
use crate::measures::{density_by_name, discretize_density, DiscreteMarginal};
use crate::solver::{
    solve_entropic, solve_entropic_structured, solve_exact_lp_capped, uniqueness_probe, Coupling,
    SolveResult, DEFAULT_ENTROPIC_MAX_ITER, DEFAULT_ENTROPIC_TOL, DEFAULT_LP_CAP,
};
use crate::verify::{
    check_ccm, check_graphical, twist_probe, CcmReport, GraphReport, SupportSet, TwistReport,
    TwistVerdict, DEFAULT_CCM_WORK_CAP,
};
use crate::{Error, Result};

pub const DEFAULT_GAP_TOL: f64 = 1e-8;
pub const DEFAULT_MASS_TOL: f64 = 1e-9;
/// Differentiability-proxy tolerance as a multiple of the grid spacing.
pub const DEFAULT_DIFF_FACTOR: f64 = 10.0;
pub const DEFAULT_UNIQUENESS_TRIALS: usize = 8;
pub const DEFAULT_UNIQUENESS_DELTA: f64 = 1e-7;
pub const DEFAULT_CCM_P_MAX: usize = 3;
/// Cells above which the benchmark skips the dense reference solve.
pub const DENSE_BENCH_CAP: u128 = 200_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub density: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub bounds: (f64, f64),
    pub n: usize,
}

impl MarginalSpec {
    pub fn build(&self) -> Result<DiscreteMarginal> {
        let density = density_by_name(&self.density, &self.params)?;
        discretize_density(|x| density(x), self.bounds, self.n)
    }
}

/// One low-arity quadratic block `sum a_ij y_i y_j` over local axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSpec {
    pub arity: usize,
    /// Local axis pairs with strictly negative coefficients.
    pub coeffs: Vec<(usize, usize, f64)>,
}

impl BlockSpec {
    fn build(&self) -> Result<CostModel> {
        let coeffs: BTreeMap<(usize, usize), f64> = self
            .coeffs
            .iter()
            .map(|&(i, j, a)| ((i.min(j), i.max(j)), a))
            .collect();
        let edges: Vec<(usize, usize)> = coeffs.keys().copied().collect();
        make_submodular_graph_cost(&coeffs, &SimpleGraph::new(self.arity, &edges, &[])?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CostSpec {
    /// `sum_{i<j} a_ij x_i x_j` with every listed pair an interaction edge.
    QuadraticGraph {
        m: usize,
        coeffs: Vec<(usize, usize, f64)>,
    },
    BilinearPartition {
        i1: Vec<usize>,
        i2: Vec<usize>,
        i3: Vec<usize>,
        p: usize,
        coeff: f64,
    },
    Cycle {
        blocks: Vec<BlockSpec>,
    },
    ConsecutiveChain {
        cuts: Vec<usize>,
        blocks: Vec<BlockSpec>,
    },
    TwistedChain {
        s: usize,
        t_seq: Vec<usize>,
        y_sets: Vec<Vec<usize>>,
        blocks: Vec<BlockSpec>,
    },
    Counterexample,
    Zero {
        m: usize,
    },
}

impl CostSpec {
    pub fn build(&self) -> Result<CostModel> {
        match self {
            CostSpec::QuadraticGraph { m, coeffs } => {
                let map: BTreeMap<(usize, usize), f64> = coeffs
                    .iter()
                    .map(|&(i, j, a)| ((i.min(j), i.max(j)), a))
                    .collect();
                let edges: Vec<(usize, usize)> = map.keys().copied().collect();
                make_submodular_graph_cost(&map, &SimpleGraph::new(*m, &edges, &[])?)
            }
            CostSpec::BilinearPartition { i1, i2, i3, p, coeff } => {
                make_bilinear_partition_cost(PartitionSpec::new(i1, i2, i3, *p, *coeff)?)
            }
            CostSpec::Cycle { blocks } => {
                if blocks.len() != 4 {
                    return Err(Error::InvalidConfig(format!(
                        "cycle needs exactly 4 blocks, got {}",
                        blocks.len()
                    )));
                }
                let built: Vec<CostModel> =
                    blocks.iter().map(|b| b.build()).collect::<Result<_>>()?;
                let arr: [CostModel; 4] = built
                    .try_into()
                    .map_err(|_| Error::InvalidConfig("cycle needs 4 blocks".into()))?;
                make_cycle_cost(arr)
            }
            CostSpec::ConsecutiveChain { cuts, blocks } => {
                let built = blocks.iter().map(|b| b.build()).collect::<Result<_>>()?;
                make_chain_cost(ChainSpec::Consecutive {
                    cuts: cuts.clone(),
                    blocks: built,
                })
            }
            CostSpec::TwistedChain { s, t_seq, y_sets, blocks } => {
                let built = blocks.iter().map(|b| b.build()).collect::<Result<_>>()?;
                make_chain_cost(ChainSpec::Twisted {
                    s: *s,
                    t_seq: t_seq.clone(),
                    y_sets: y_sets.clone(),
                    blocks: built,
                })
            }
            CostSpec::Counterexample => Ok(make_counterexample_cost()),
            CostSpec::Zero { m } => Ok(CostModel::Zero { m: *m }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSpec {
    ExactLp {
        #[serde(default)]
        cap: Option<usize>,
    },
    Entropic {
        epsilon: f64,
        #[serde(default)]
        max_iter: Option<usize>,
        #[serde(default)]
        tol: Option<f64>,
    },
    EntropicStructured {
        epsilon: f64,
        #[serde(default)]
        max_iter: Option<usize>,
        #[serde(default)]
        tol: Option<f64>,
    },
}

impl SolverSpec {
    fn label(&self) -> &'static str {
        match self {
            SolverSpec::ExactLp { .. } => "exact-lp",
            SolverSpec::Entropic { .. } => "entropic",
            SolverSpec::EntropicStructured { .. } => "entropic-structured",
        }
    }
}

fn default_true() -> bool {
    true
}

/// Stage toggles; disabled stages get no verdict and no expectation check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifySpec {
    #[serde(default = "default_true")]
    pub splitting: bool,
    #[serde(default = "default_true")]
    pub ccm: bool,
    #[serde(default)]
    pub ccm_p_max: Option<usize>,
    #[serde(default = "default_true")]
    pub graphical: bool,
    #[serde(default = "default_true")]
    pub twist: bool,
    /// Designated twist axes (0-based, each in `1..m`).
    #[serde(default)]
    pub twist_vars: Vec<usize>,
    #[serde(default = "default_true")]
    pub uniqueness: bool,
    #[serde(default)]
    pub uniqueness_trials: Option<usize>,
    #[serde(default)]
    pub uniqueness_delta: Option<f64>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            splitting: true,
            ccm: true,
            ccm_p_max: None,
            graphical: true,
            twist: true,
            twist_vars: Vec::new(),
            uniqueness: true,
            uniqueness_trials: None,
            uniqueness_delta: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ToleranceSpec {
    #[serde(default)]
    pub gap: Option<f64>,
    #[serde(default)]
    pub mass: Option<f64>,
    /// Differentiability-proxy tolerance as a multiple of grid spacing.
    #[serde(default)]
    pub diff_factor: Option<f64>,
    /// Absolute gradient-collision tolerance; derived from the gradient
    /// scale when absent.
    #[serde(default)]
    pub grad: Option<f64>,
}

/// Expected verdict strings; omitted entries default to the positive
/// outcome (splitting, cyclically-monotone, graph, unique-at-tolerance, and
/// either injectivity verdict for the twist stage).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Expectations {
    #[serde(default)]
    pub splitting: Option<String>,
    #[serde(default)]
    pub ccm: Option<String>,
    #[serde(default)]
    pub graphical: Option<String>,
    #[serde(default)]
    pub twist: Option<String>,
    #[serde(default)]
    pub uniqueness: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub marginals: Vec<MarginalSpec>,
    pub cost: CostSpec,
    pub solver: SolverSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub expect: Expectations,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        if config.name.is_empty() {
            return Err(Error::InvalidConfig("config name must be nonempty".into()));
        }
        Ok(config)
    }
}

/// Tolerances with every default resolved, as used by the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedTolerances {
    pub gap: f64,
    pub mass: f64,
    pub diff: f64,
    pub grad: f64,
    pub ccm_p_max: usize,
    pub uniqueness_trials: usize,
    pub uniqueness_delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub objective: f64,
    pub support_size: Option<usize>,
    pub iterations: u64,
    pub cost_evals: u64,
    pub dead_cells: usize,
    pub max_marginal_violation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniquenessSummary {
    pub verdict: String,
    pub base_objective: f64,
    pub objective_spread: f64,
    pub kept_trials: usize,
    pub base_support_size: usize,
    pub witness_support_sizes: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub name: String,
    pub seed: u64,
    pub solver: String,
    pub tolerances: Option<ResolvedTolerances>,
    pub solve: Option<SolveSummary>,
    pub conjugate: Option<ConjugateConvergence>,
    pub splitting: Option<SplittingReport>,
    pub ccm: Option<CcmReport>,
    pub graphical: Option<GraphReport>,
    pub twist: Option<TwistReport>,
    pub uniqueness: Option<UniquenessSummary>,
    /// Stage name to verdict string, enabled stages only.
    pub verdicts: BTreeMap<String, String>,
    /// Stage name to the verdict(s) accepted for exit code 0, `|`-separated.
    pub expected: BTreeMap<String, String>,
    pub as_expected: bool,
    /// True when a stage error aborted the pipeline early.
    pub incomplete: bool,
    pub error: Option<String>,
}

fn resolve_tolerances(
    config: &ExperimentConfig,
    marginals: &[DiscreteMarginal],
    cost: &CostModel,
) -> Result<ResolvedTolerances> {
    let gap = config.tolerances.gap.unwrap_or(DEFAULT_GAP_TOL);
    let mass = config.tolerances.mass.unwrap_or(DEFAULT_MASS_TOL);
    let diff_factor = config.tolerances.diff_factor.unwrap_or(DEFAULT_DIFF_FACTOR);
    let mut h_max = marginals[0].grid.h;
    for &k in &config.verify.twist_vars {
        if k < marginals.len() {
            h_max = h_max.max(marginals[k].grid.h);
        }
    }
    let grad = match config.tolerances.grad {
        Some(g) => g,
        None => {
            let mut scale = 0.0f64;
            let shape = crate::measures::Shape::from_marginals(marginals);
            if shape.len() <= DEFAULT_SCAN_CAP {
                let m = marginals.len();
                let mut coords = vec![0.0; m];
                for l in 0..shape.len() {
                    for (a, c) in coords.iter_mut().enumerate() {
                        *c = marginals[a].grid.points[shape.axis_index(l, a)];
                    }
                    scale = scale.max(cost.partial(0, &coords)?.abs());
                }
            }
            1e-7 * (1.0 + scale)
        }
    };
    Ok(ResolvedTolerances {
        gap,
        mass,
        diff: diff_factor * h_max,
        grad,
        ccm_p_max: config.verify.ccm_p_max.unwrap_or(DEFAULT_CCM_P_MAX),
        uniqueness_trials: config
            .verify
            .uniqueness_trials
            .unwrap_or(DEFAULT_UNIQUENESS_TRIALS),
        uniqueness_delta: config
            .verify
            .uniqueness_delta
            .unwrap_or(DEFAULT_UNIQUENESS_DELTA),
    })
}

fn write_coupling_csv(
    path: &Path,
    coupling: &Coupling,
    marginals: &[DiscreteMarginal],
) -> Result<()> {
    let m = marginals.len();
    let mut out = String::new();
    for a in 0..m {
        out.push_str(&format!("i{},", a + 1));
    }
    for a in 0..m {
        out.push_str(&format!("x{},", a + 1));
    }
    out.push_str("mass\n");
    for (idx, &mass) in &coupling.entries {
        for &j in &idx.0 {
            out.push_str(&format!("{j},"));
        }
        for x in idx.coords(marginals) {
            out.push_str(&format!("{x},"));
        }
        out.push_str(&format!("{mass}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_potentials_csv(
    dir: &Path,
    potentials: &Potentials,
    marginals: &[DiscreteMarginal],
) -> Result<()> {
    for (a, values) in potentials.values.iter().enumerate() {
        let mut out = String::from("index,x,u\n");
        for (j, &u) in values.iter().enumerate() {
            out.push_str(&format!("{j},{},{u}\n", marginals[a].grid.points[j]));
        }
        fs::write(dir.join(format!("potentials_axis{}.csv", a + 1)), out)?;
    }
    Ok(())
}

fn max_marginal_violation(axis_marginals: &[Vec<f64>], marginals: &[DiscreteMarginal]) -> f64 {
    let mut worst = 0.0f64;
    for (got, want) in axis_marginals.iter().zip(marginals) {
        for (g, w) in got.iter().zip(&want.weights) {
            worst = worst.max((g - w).abs());
        }
    }
    worst
}

struct StageClock {
    timings: BTreeMap<String, u128>,
}

impl StageClock {
    fn new() -> Self {
        StageClock {
            timings: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings
            .insert(stage.to_string(), start.elapsed().as_millis());
        out
    }
}

fn default_expectation(stage: &str) -> String {
    match stage {
        "splitting" => "splitting".into(),
        "ccm" => "cyclically-monotone".into(),
        "graphical" => "graph".into(),
        "twist" => "singleton|twisted-at-tolerance".into(),
        "uniqueness" => "unique-at-tolerance".into(),
        other => panic!("unknown stage {other}"),
    }
}

fn expectation_for(config: &ExperimentConfig, stage: &str) -> String {
    let declared = match stage {
        "splitting" => &config.expect.splitting,
        "ccm" => &config.expect.ccm,
        "graphical" => &config.expect.graphical,
        "twist" => &config.expect.twist,
        "uniqueness" => &config.expect.uniqueness,
        other => panic!("unknown stage {other}"),
    };
    declared.clone().unwrap_or_else(|| default_expectation(stage))
}

fn meets_expectation(expected: &str, verdict: &str) -> bool {
    expected.split('|').any(|e| e == verdict)
}

/// Solve one configured instance and run the enabled verifier stages in
/// order, writing `report.json`, `coupling.csv`, `potentials_axis<i>.csv`,
/// and `timings.json` under `out_dir`. Stage errors abort the remaining
/// stages and flag the report `incomplete`; config errors fail before
/// anything is solved.
pub fn run_pipeline(config: &ExperimentConfig, out_dir: &Path) -> Result<PipelineReport> {
    let marginals: Vec<DiscreteMarginal> = config
        .marginals
        .iter()
        .map(|spec| spec.build())
        .collect::<Result<_>>()?;
    if marginals.is_empty() {
        return Err(Error::InvalidConfig("at least one marginal required".into()));
    }
    let cost = config.cost.build()?;
    if cost.arity() != marginals.len() {
        return Err(Error::ArityMismatch {
            expected: cost.arity(),
            got: marginals.len(),
        });
    }
    let tolerances = resolve_tolerances(config, &marginals, &cost)?;
    fs::create_dir_all(out_dir)?;

    let mut report = PipelineReport {
        name: config.name.clone(),
        seed: config.seed,
        solver: config.solver.label().to_string(),
        tolerances: Some(tolerances.clone()),
        solve: None,
        conjugate: None,
        splitting: None,
        ccm: None,
        graphical: None,
        twist: None,
        uniqueness: None,
        verdicts: BTreeMap::new(),
        expected: BTreeMap::new(),
        as_expected: true,
        incomplete: false,
        error: None,
    };
    let mut clock = StageClock::new();

    let run = (|| -> Result<()> {
        let result: SolveResult = clock.time("solve", || match &config.solver {
            SolverSpec::ExactLp { cap } => solve_exact_lp_capped(
                &marginals,
                &cost,
                config.seed,
                cap.unwrap_or(DEFAULT_LP_CAP),
            ),
            SolverSpec::Entropic { epsilon, max_iter, tol } => solve_entropic(
                &marginals,
                &cost,
                *epsilon,
                max_iter.unwrap_or(DEFAULT_ENTROPIC_MAX_ITER),
                tol.unwrap_or(DEFAULT_ENTROPIC_TOL),
            ),
            SolverSpec::EntropicStructured { epsilon, max_iter, tol } => {
                solve_entropic_structured(
                    &marginals,
                    &cost,
                    *epsilon,
                    max_iter.unwrap_or(DEFAULT_ENTROPIC_MAX_ITER),
                    tol.unwrap_or(DEFAULT_ENTROPIC_TOL),
                )
            }
        })?;
        report.solve = Some(SolveSummary {
            objective: result.objective,
            support_size: result.coupling.as_ref().map(|c| c.support().len()),
            iterations: result.stats.iterations,
            cost_evals: result.stats.cost_evals,
            dead_cells: result.dead_cells,
            max_marginal_violation: max_marginal_violation(&result.axis_marginals, &marginals),
        });
        if let Some(coupling) = &result.coupling {
            write_coupling_csv(&out_dir.join("coupling.csv"), coupling, &marginals)?;
        }
        if let Some(potentials) = &result.potentials {
            write_potentials_csv(out_dir, potentials, &marginals)?;
        }

        if let Some(potentials) = &result.potentials {
            if matches!(config.solver, SolverSpec::ExactLp { .. }) {
                let (_, convergence) = clock.time("conjugate", || {
                    conjugate_iterate(potentials, &cost, &marginals, 2, DEFAULT_SCAN_CAP)
                })?;
                report.conjugate = Some(convergence);
            }
        }

        if config.verify.splitting {
            let support = result
                .coupling
                .as_ref()
                .map(|c| c.support())
                .filter(|s| !s.is_empty());
            match (&result.potentials, support) {
                (Some(potentials), Some(support)) => {
                    let splitting = clock.time("splitting", || {
                        verify_splitting_set(
                            potentials,
                            &cost,
                            &marginals,
                            &support,
                            tolerances.gap,
                            DEFAULT_SCAN_CAP,
                        )
                    })?;
                    let verdict = if splitting.splitting {
                        "splitting"
                    } else {
                        "not-splitting"
                    };
                    report.verdicts.insert("splitting".into(), verdict.into());
                    report.splitting = Some(splitting);
                }
                _ => {
                    return Err(Error::InvalidConfig(
                        "splitting check needs potentials and a nonempty coupling".into(),
                    ))
                }
            }
        }

        if config.verify.ccm {
            let coupling = result.coupling.as_ref().ok_or_else(|| {
                Error::InvalidConfig("cyclical-monotonicity check needs a coupling".into())
            })?;
            let support = SupportSet::from_coupling(coupling);
            let ccm = clock.time("ccm", || {
                check_ccm(
                    &support,
                    &cost,
                    &marginals,
                    tolerances.ccm_p_max,
                    DEFAULT_CCM_WORK_CAP,
                )
            })?;
            let verdict = if ccm.passed {
                "cyclically-monotone"
            } else {
                "violation"
            };
            report.verdicts.insert("ccm".into(), verdict.into());
            report.ccm = Some(ccm);
        }

        if config.verify.graphical {
            let coupling = result.coupling.as_ref().ok_or_else(|| {
                Error::InvalidConfig("graphicality check needs a coupling".into())
            })?;
            let graphical = clock.time("graphical", || {
                check_graphical(coupling, &marginals, tolerances.mass)
            });
            let verdict = if graphical.is_graph { "graph" } else { "not-graph" };
            report.verdicts.insert("graphical".into(), verdict.into());
            report.graphical = Some(graphical);
        }

        if config.verify.twist {
            let potentials = result
                .strict_potentials
                .as_ref()
                .or(result.potentials.as_ref())
                .ok_or_else(|| {
                    Error::InvalidConfig("twist probe needs potentials".into())
                })?;
            let twist = clock.time("twist", || {
                twist_probe(
                    potentials,
                    &cost,
                    &marginals,
                    &config.verify.twist_vars,
                    tolerances.gap,
                    tolerances.diff,
                    tolerances.grad,
                )
            })?;
            let verdict = match twist.verdict {
                TwistVerdict::Singleton => "singleton",
                TwistVerdict::TwistedAtTolerance => "twisted-at-tolerance",
                TwistVerdict::Collision => "collision",
            };
            report.verdicts.insert("twist".into(), verdict.into());
            report.twist = Some(twist);
        }

        if config.verify.uniqueness {
            let probe = clock.time("uniqueness", || {
                uniqueness_probe(
                    &marginals,
                    &cost,
                    tolerances.uniqueness_trials,
                    tolerances.uniqueness_delta,
                    config.seed,
                )
            })?;
            let verdict = probe.verdict.to_string();
            report.verdicts.insert("uniqueness".into(), verdict.clone());
            if let Some((a, b)) = &probe.witnesses {
                write_coupling_csv(&out_dir.join("witness_a.csv"), a, &marginals)?;
                write_coupling_csv(&out_dir.join("witness_b.csv"), b, &marginals)?;
            }
            report.uniqueness = Some(UniquenessSummary {
                verdict,
                base_objective: probe.base_objective,
                objective_spread: probe.objective_spread,
                kept_trials: probe.kept_trials,
                base_support_size: probe.base_support.len(),
                witness_support_sizes: probe
                    .witnesses
                    .as_ref()
                    .map(|(a, b)| (a.support().len(), b.support().len())),
            });
        }
        Ok(())
    })();

    if let Err(err) = run {
        report.incomplete = true;
        report.error = Some(err.to_string());
    }
    for stage in report.verdicts.keys() {
        report
            .expected
            .insert(stage.clone(), expectation_for(config, stage));
    }
    report.as_expected = !report.incomplete
        && report.verdicts.iter().all(|(stage, verdict)| {
            meets_expectation(&report.expected[stage], verdict)
        });

    fs::write(
        out_dir.join("report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    fs::write(
        out_dir.join("timings.json"),
        serde_json::to_vec_pretty(&clock.timings)?,
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryRow {
    pub name: String,
    pub file: String,
    pub objective: Option<f64>,
    pub verdicts: BTreeMap<String, String>,
    pub expected: BTreeMap<String, String>,
    pub as_expected: bool,
    pub incomplete: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatterySummary {
    pub rows: Vec<BatteryRow>,
    pub all_as_expected: bool,
}

/// Run every `*.json` config in `config_dir` concurrently, writing each
/// pipeline's artifacts to `out_dir/<name>` and a deterministic summary
/// (CSV + JSON) to `out_dir`. Per-config errors become rows; duplicate
/// config names fail the whole battery.
pub fn run_battery(config_dir: &Path, out_dir: &Path) -> Result<BatterySummary> {
    let mut files: Vec<std::path::PathBuf> = fs::read_dir(config_dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    files.sort();
    fs::create_dir_all(out_dir)?;

    let mut parsed: Vec<(String, std::result::Result<ExperimentConfig, String>)> = Vec::new();
    for file in &files {
        let label = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match ExperimentConfig::from_path(file) {
            Ok(config) => parsed.push((label, Ok(config))),
            Err(err) => parsed.push((label, Err(err.to_string()))),
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for (_, config) in &parsed {
        if let Ok(config) = config {
            if !seen.insert(config.name.clone()) {
                return Err(Error::DuplicateConfigName(config.name.clone()));
            }
        }
    }

    let mut rows: Vec<BatteryRow> = Vec::with_capacity(parsed.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = parsed
            .iter()
            .map(|(file, config)| {
                scope.spawn(move || match config {
                    Ok(config) => {
                        let dir = out_dir.join(&config.name);
                        match run_pipeline(config, &dir) {
                            Ok(report) => BatteryRow {
                                name: config.name.clone(),
                                file: file.clone(),
                                objective: report.solve.as_ref().map(|s| s.objective),
                                verdicts: report.verdicts,
                                expected: report.expected,
                                as_expected: report.as_expected,
                                incomplete: report.incomplete,
                                error: report.error,
                            },
                            Err(err) => BatteryRow {
                                name: config.name.clone(),
                                file: file.clone(),
                                objective: None,
                                verdicts: BTreeMap::new(),
                                expected: BTreeMap::new(),
                                as_expected: false,
                                incomplete: true,
                                error: Some(err.to_string()),
                            },
                        }
                    }
                    Err(err) => BatteryRow {
                        name: file.clone(),
                        file: file.clone(),
                        objective: None,
                        verdicts: BTreeMap::new(),
                        expected: BTreeMap::new(),
                        as_expected: false,
                        incomplete: true,
                        error: Some(err.clone()),
                    },
                })
            })
            .collect();
        for handle in handles {
            rows.push(handle.join().expect("pipeline thread panicked"));
        }
    });
    rows.sort_by(|a, b| a.name.cmp(&b.name));
    let all_as_expected = rows.iter().all(|r| r.as_expected);
    let summary = BatterySummary {
        rows,
        all_as_expected,
    };

    let mut csv = String::from(
        "name,objective,splitting,ccm,graphical,twist,uniqueness,as_expected,error\n",
    );
    for row in &summary.rows {
        let verdict = |stage: &str| row.verdicts.get(stage).cloned().unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            row.name,
            row.objective.map(|o| o.to_string()).unwrap_or_default(),
            verdict("splitting"),
            verdict("ccm"),
            verdict("graphical"),
            verdict("twist"),
            verdict("uniqueness"),
            row.as_expected,
            row.error.clone().unwrap_or_default().replace(',', ";"),
        ));
    }
    fs::write(out_dir.join("summary.csv"), csv)?;
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_vec_pretty(&summary)?,
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub dense_cells: u128,
    pub structured_cost_evals: u64,
    pub sweeps: u64,
    pub structured_ms: u128,
    pub dense_ms: Option<u128>,
    /// Max per-atom axis-marginal difference between the two solvers; only
    /// when the dense side ran.
    pub max_marginal_discrepancy: Option<f64>,
    pub note: Option<String>,
}

/// Time the structured entropic solver across grid sizes, comparing against
/// the dense solver whenever the product grid fits under [`DENSE_BENCH_CAP`].
pub fn bench_structured(
    config: &ExperimentConfig,
    sizes: &[usize],
    out_dir: &Path,
) -> Result<Vec<BenchRow>> {
    if sizes.is_empty() {
        return Err(Error::EmptySizes);
    }
    let (epsilon, max_iter, tol) = match &config.solver {
        SolverSpec::Entropic { epsilon, max_iter, tol }
        | SolverSpec::EntropicStructured { epsilon, max_iter, tol } => (
            *epsilon,
            max_iter.unwrap_or(DEFAULT_ENTROPIC_MAX_ITER),
            tol.unwrap_or(DEFAULT_ENTROPIC_TOL),
        ),
        SolverSpec::ExactLp { .. } => {
            return Err(Error::InvalidConfig(
                "benchmark needs an entropic solver spec".into(),
            ))
        }
    };
    let cost = config.cost.build()?;
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let marginals: Vec<DiscreteMarginal> = config
            .marginals
            .iter()
            .map(|spec| {
                let mut spec = spec.clone();
                spec.n = n;
                spec.build()
            })
            .collect::<Result<_>>()?;
        let start = Instant::now();
        let structured = solve_entropic_structured(&marginals, &cost, epsilon, max_iter, tol)?;
        let structured_ms = start.elapsed().as_millis();
        let dense_cells = marginals
            .iter()
            .fold(1u128, |acc, m| acc.saturating_mul(m.len() as u128));
        let (dense_ms, discrepancy, note) = if dense_cells <= DENSE_BENCH_CAP {
            let start = Instant::now();
            let dense = solve_entropic(&marginals, &cost, epsilon, max_iter, tol)?;
            let ms = start.elapsed().as_millis();
            let mut worst = 0.0f64;
            for (a, axis) in structured.axis_marginals.iter().enumerate() {
                for (j, &v) in axis.iter().enumerate() {
                    worst = worst.max((v - dense.axis_marginals[a][j]).abs());
                }
            }
            (Some(ms), Some(worst), None)
        } else {
            (
                None,
                None,
                Some(format!(
                    "dense skipped: {dense_cells} cells exceeds cap {DENSE_BENCH_CAP}"
                )),
            )
        };
        rows.push(BenchRow {
            n,
            dense_cells,
            structured_cost_evals: structured.stats.cost_evals,
            sweeps: structured.stats.iterations,
            structured_ms,
            dense_ms,
            max_marginal_discrepancy: discrepancy,
            note,
        });
    }
    let mut csv = String::from(
        "n,dense_cells,structured_cost_evals,sweeps,structured_ms,dense_ms,max_marginal_discrepancy,note\n",
    );
    for row in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.n,
            row.dense_cells,
            row.structured_cost_evals,
            row.sweeps,
            row.structured_ms,
            row.dense_ms.map(|v| v.to_string()).unwrap_or_default(),
            row.max_marginal_discrepancy
                .map(|v| v.to_string())
                .unwrap_or_default(),
            row.note.clone().unwrap_or_default().replace(',', ";"),
        ));
    }
    fs::write(out_dir.join("bench.csv"), csv)?;
    fs::write(out_dir.join("bench.json"), serde_json::to_vec_pretty(&rows)?)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn uniform_marginal(n: usize) -> MarginalSpec {
        MarginalSpec {
            density: "uniform".into(),
            params: BTreeMap::new(),
            bounds: (0.0, 1.0),
            n,
        }
    }

    fn pair_block() -> BlockSpec {
        BlockSpec {
            arity: 2,
            coeffs: vec![(0, 1, -1.0)],
        }
    }

    fn complete_quadratic_config(name: &str, n: usize) -> ExperimentConfig {
        ExperimentConfig {
            name: name.into(),
            seed: 7,
            marginals: vec![uniform_marginal(n); 3],
            cost: CostSpec::QuadraticGraph {
                m: 3,
                coeffs: vec![(0, 1, -1.0), (0, 2, -1.0), (1, 2, -1.0)],
            },
            solver: SolverSpec::ExactLp { cap: None },
            verify: VerifySpec::default(),
            tolerances: ToleranceSpec::default(),
            expect: Expectations::default(),
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let config = complete_quadratic_config("round-trip", 5);
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.name, "round-trip");
        assert_eq!(back.marginals.len(), 3);
        assert!(matches!(back.solver, SolverSpec::ExactLp { cap: None }));
    }

    #[test]
    fn positive_instance_passes_every_stage() {
        let dir = tempdir().unwrap();
        let config = complete_quadratic_config("complete-m3-n5-test", 5);
        let report = run_pipeline(&config, dir.path()).unwrap();
        assert!(!report.incomplete, "error: {:?}", report.error);
        assert_eq!(report.verdicts["splitting"], "splitting");
        assert_eq!(report.verdicts["ccm"], "cyclically-monotone");
        assert_eq!(report.verdicts["graphical"], "graph");
        assert_eq!(report.verdicts["twist"], "singleton");
        assert_eq!(report.verdicts["uniqueness"], "unique-at-tolerance");
        assert!(report.as_expected);
        assert!(dir.path().join("report.json").exists());
        assert!(dir.path().join("coupling.csv").exists());
        assert!(dir.path().join("potentials_axis1.csv").exists());
        assert!(dir.path().join("timings.json").exists());
    }

    #[test]
    fn counterexample_reports_multiple_optima() {
        let dir = tempdir().unwrap();
        let config = ExperimentConfig {
            name: "counterexample-test".into(),
            seed: 11,
            marginals: vec![
                MarginalSpec {
                    density: "uniform".into(),
                    params: BTreeMap::new(),
                    bounds: (-1.5, 1.5),
                    n: 3,
                };
                3
            ],
            cost: CostSpec::Counterexample,
            solver: SolverSpec::ExactLp { cap: None },
            verify: VerifySpec {
                graphical: false,
                twist: false,
                ..VerifySpec::default()
            },
            tolerances: ToleranceSpec::default(),
            expect: Expectations {
                uniqueness: Some("multiple optima".into()),
                ..Expectations::default()
            },
        };
        let report = run_pipeline(&config, dir.path()).unwrap();
        assert!(!report.incomplete, "error: {:?}", report.error);
        assert_eq!(report.verdicts["uniqueness"], "multiple optima");
        assert!(report.as_expected);
        assert!(report.solve.unwrap().objective.abs() <= 1e-10);
    }

    #[test]
    fn arity_mismatch_fails_before_solving() {
        let dir = tempdir().unwrap();
        let mut config = complete_quadratic_config("bad-arity", 5);
        config.marginals.pop();
        let err = run_pipeline(&config, dir.path()).unwrap_err();
        assert!(matches!(err, Error::ArityMismatch { .. }));
        assert!(!dir.path().join("report.json").exists());
    }

    #[test]
    fn battery_handles_empty_directory() {
        let configs = tempdir().unwrap();
        let out = tempdir().unwrap();
        let summary = run_battery(configs.path(), out.path()).unwrap();
        assert!(summary.rows.is_empty());
        assert!(summary.all_as_expected);
        assert!(out.path().join("summary.csv").exists());
    }

    #[test]
    fn battery_rejects_duplicate_names() {
        let configs = tempdir().unwrap();
        let out = tempdir().unwrap();
        let config = complete_quadratic_config("dupe", 5);
        let text = serde_json::to_string(&config).unwrap();
        fs::write(configs.path().join("a.json"), &text).unwrap();
        fs::write(configs.path().join("b.json"), &text).unwrap();
        let err = run_battery(configs.path(), out.path()).unwrap_err();
        assert!(matches!(err, Error::DuplicateConfigName(name) if name == "dupe"));
    }

    #[test]
    fn battery_records_parse_failures_and_continues() {
        let configs = tempdir().unwrap();
        let out = tempdir().unwrap();
        let good = complete_quadratic_config("good", 5);
        fs::write(
            configs.path().join("good.json"),
            serde_json::to_string(&good).unwrap(),
        )
        .unwrap();
        fs::write(configs.path().join("broken.json"), "{not json").unwrap();
        let summary = run_battery(configs.path(), out.path()).unwrap();
        assert_eq!(summary.rows.len(), 2);
        assert!(!summary.all_as_expected);
        let broken = summary.rows.iter().find(|r| r.name == "broken.json").unwrap();
        assert!(broken.error.is_some());
        let good_row = summary.rows.iter().find(|r| r.name == "good").unwrap();
        assert!(good_row.as_expected);
    }

    #[test]
    fn bench_rejects_empty_sizes() {
        let out = tempdir().unwrap();
        let config = ExperimentConfig {
            name: "bench-test".into(),
            seed: 1,
            marginals: vec![uniform_marginal(5); 3],
            cost: CostSpec::ConsecutiveChain {
                cuts: vec![0, 1, 2],
                blocks: vec![pair_block(), pair_block()],
            },
            solver: SolverSpec::EntropicStructured {
                epsilon: 0.1,
                max_iter: None,
                tol: None,
            },
            verify: VerifySpec::default(),
            tolerances: ToleranceSpec::default(),
            expect: Expectations::default(),
        };
        let err = bench_structured(&config, &[], out.path()).unwrap_err();
        assert!(matches!(err, Error::EmptySizes));
        let rows = bench_structured(&config, &[5], out.path()).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].max_marginal_discrepancy.unwrap() <= 1e-10);
        assert!(rows[0].dense_ms.is_some());
    }

    #[test]
    fn report_json_is_byte_identical_across_reruns() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let config = complete_quadratic_config("determinism-test", 5);
        run_pipeline(&config, dir_a.path()).unwrap();
        run_pipeline(&config, dir_b.path()).unwrap();
        let a = fs::read(dir_a.path().join("report.json")).unwrap();
        let b = fs::read(dir_b.path().join("report.json")).unwrap();
        assert_eq!(a, b);
        let ca = fs::read(dir_a.path().join("coupling.csv")).unwrap();
        let cb = fs::read(dir_b.path().join("coupling.csv")).unwrap();
        assert_eq!(ca, cb);
    }
}
