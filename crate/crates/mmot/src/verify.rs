//! Structural checks on solved couplings: cyclical monotonicity of the
//! support, graphicality over the first axis, potential equality sets with a
//! differentiability proxy, gradient-injectivity (twist) probes, and the
//! envelope identity tying potential slopes to cost gradients.

use std::collections::BTreeMap;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::costs::CostModel;
use crate::duality::{splitting_gap, verify_splitting_set, Potentials, DEFAULT_SCAN_CAP};
use crate::measures::{DiscreteMarginal, ProductIndex};
use crate::solver::Coupling;
use crate::{Error, Result};

pub const DEFAULT_CCM_WORK_CAP: u128 = 10_000_000;
/// Rearrangement slack: original tour cost may exceed a permuted tour by at
/// most this much before it counts as a violation.
pub const CCM_TOL: f64 = 1e-9;

/// A set of product-grid points, sorted and deduplicated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportSet {
    points: Vec<ProductIndex>,
}

impl SupportSet {
    pub fn new(mut points: Vec<ProductIndex>) -> Self {
        points.sort();
        points.dedup();
        SupportSet { points }
    }

    /// Entries of the coupling with mass above the support threshold.
    pub fn from_coupling(coupling: &Coupling) -> Self {
        SupportSet::new(coupling.support())
    }

    pub fn points(&self) -> &[ProductIndex] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcmViolation {
    pub points: Vec<ProductIndex>,
    pub coords: Vec<Vec<f64>>,
    /// One permutation of `0..p` per axis `1..m`, applied to the points.
    pub permutations: Vec<Vec<usize>>,
    pub original: f64,
    pub rearranged: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcmReport {
    pub passed: bool,
    pub rearrangements_checked: u64,
    pub violation: Option<CcmViolation>,
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let mut out: u128 = 1;
    for i in 0..k {
        out = out.saturating_mul(n - i) / (i + 1);
    }
    out
}

fn factorial(n: u128) -> u128 {
    (1..=n).fold(1u128, |acc, v| acc.saturating_mul(v))
}

/// Cost evaluations needed to exhaust all point collections of size
/// `2..=p_max` and all per-axis rearrangements of each.
pub fn ccm_work_estimate(support_size: usize, arity: usize, p_max: usize) -> u128 {
    let mut total: u128 = 0;
    for p in 2..=p_max.min(support_size) {
        let tuples = factorial(p as u128).saturating_pow(arity as u32 - 1);
        let per_subset = tuples.saturating_mul(p as u128);
        total = total.saturating_add(
            binomial(support_size as u128, p as u128).saturating_mul(per_subset),
        );
    }
    total
}

/// Exhaustive cyclical-monotonicity check: for every collection of up to
/// `p_max` support points and every tuple of per-axis permutations (axis 0
/// fixed), the original cost sum must not beat the rearranged sum by more
/// than [`CCM_TOL`]. The first violating rearrangement is returned.
pub fn check_ccm(
    support: &SupportSet,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    p_max: usize,
    work_cap: u128,
) -> Result<CcmReport> {
    let m = marginals.len();
    if cost.arity() != m {
        return Err(Error::ArityMismatch {
            expected: cost.arity(),
            got: m,
        });
    }
    let estimate = ccm_work_estimate(support.len(), m, p_max);
    if estimate > work_cap {
        return Err(Error::WorkCapExceeded {
            estimate,
            cap: work_cap,
        });
    }
    let coords: Vec<Vec<f64>> = support
        .points()
        .iter()
        .map(|idx| idx.coords(marginals))
        .collect();
    let mut checked = 0u64;
    for p in 2..=p_max.min(support.len()) {
        let perms: Vec<Vec<usize>> = (0..p).permutations(p).collect();
        for subset in (0..support.len()).combinations(p) {
            let mut original = 0.0;
            for &s in &subset {
                original += cost.eval(&coords[s])?;
            }
            // Mixed-radix counter over one permutation choice per axis 1..m.
            let mut sigma = vec![0usize; m - 1];
            loop {
                if sigma.iter().any(|&s| s != 0) {
                    let mut rearranged = 0.0;
                    let mut x = vec![0.0; m];
                    for t in 0..p {
                        x[0] = coords[subset[t]][0];
                        for a in 1..m {
                            x[a] = coords[subset[perms[sigma[a - 1]][t]]][a];
                        }
                        rearranged += cost.eval(&x)?;
                    }
                    checked += 1;
                    if original > rearranged + CCM_TOL {
                        let points: Vec<ProductIndex> = subset
                            .iter()
                            .map(|&s| support.points()[s].clone())
                            .collect();
                        let point_coords =
                            points.iter().map(|p| p.coords(marginals)).collect();
                        let permutations =
                            sigma.iter().map(|&s| perms[s].clone()).collect();
                        return Ok(CcmReport {
                            passed: false,
                            rearrangements_checked: checked,
                            violation: Some(CcmViolation {
                                points,
                                coords: point_coords,
                                permutations,
                                original,
                                rearranged,
                            }),
                        });
                    }
                }
                let mut carry = true;
                for slot in sigma.iter_mut() {
                    *slot += 1;
                    if *slot == perms.len() {
                        *slot = 0;
                    } else {
                        carry = false;
                        break;
                    }
                }
                if carry {
                    break;
                }
            }
        }
    }
    Ok(CcmReport {
        passed: true,
        rearrangements_checked: checked,
        violation: None,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphViolation {
    pub x1: usize,
    pub x1_coord: f64,
    pub branches: Vec<(ProductIndex, Vec<f64>, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphReport {
    pub is_graph: bool,
    /// First-axis grid index to the remaining indices; present iff
    /// `is_graph`.
    pub map: Option<BTreeMap<usize, Vec<usize>>>,
    pub violations: Vec<GraphViolation>,
}

/// A coupling is graphical when every first-axis atom with mass above
/// `mass_tol` carries exactly one support tuple.
pub fn check_graphical(
    coupling: &Coupling,
    marginals: &[DiscreteMarginal],
    mass_tol: f64,
) -> GraphReport {
    let mut branches: BTreeMap<usize, Vec<(ProductIndex, f64)>> = BTreeMap::new();
    for (idx, &mass) in &coupling.entries {
        if mass > mass_tol {
            branches.entry(idx.0[0]).or_default().push((idx.clone(), mass));
        }
    }
    let violations: Vec<GraphViolation> = branches
        .iter()
        .filter(|(_, b)| b.len() > 1)
        .map(|(&x1, b)| GraphViolation {
            x1,
            x1_coord: marginals[0].grid.points[x1],
            branches: b
                .iter()
                .map(|(idx, mass)| (idx.clone(), idx.coords(marginals), *mass))
                .collect(),
        })
        .collect();
    if violations.is_empty() {
        let map = branches
            .iter()
            .map(|(&x1, b)| (x1, b[0].0 .0[1..].to_vec()))
            .collect();
        GraphReport {
            is_graph: true,
            map: Some(map),
            violations,
        }
    } else {
        GraphReport {
            is_graph: false,
            map: None,
            violations,
        }
    }
}

/// One-sided difference quotients of grid samples at an interior atom.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiffProxy {
    pub forward: f64,
    pub backward: f64,
    pub passes: bool,
}

/// Compare the one-sided quotients of `values` at atom `j`; `None` on
/// boundary atoms, which never pass.
pub fn diff_proxy(values: &[f64], points: &[f64], j: usize, diff_tol: f64) -> Option<DiffProxy> {
    if j == 0 || j + 1 >= values.len() {
        return None;
    }
    let forward = (values[j + 1] - values[j]) / (points[j + 1] - points[j]);
    let backward = (values[j] - values[j - 1]) / (points[j] - points[j - 1]);
    let mid = 0.5 * (forward + backward);
    let passes = (forward - backward).abs() <= diff_tol * (1.0 + mid.abs());
    Some(DiffProxy {
        forward,
        backward,
        passes,
    })
}

/// The equality set of a potential tuple over one first-axis anchor,
/// filtered by the differentiability proxy at the designated axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MSet {
    /// First-axis grid index.
    pub anchor: usize,
    /// Designated axes (each in `1..m`).
    pub vars: Vec<usize>,
    /// Members as grid-index tuples over axes `1..m`.
    pub members: Vec<Vec<usize>>,
    pub gap_tol: f64,
    pub diff_tol: f64,
}

impl MSet {
    /// Full product-grid index of member `i`.
    pub fn full_index(&self, i: usize) -> ProductIndex {
        let mut idx = Vec::with_capacity(self.members[i].len() + 1);
        idx.push(self.anchor);
        idx.extend_from_slice(&self.members[i]);
        ProductIndex(idx)
    }
}

fn validate_vars(vars: &[usize], m: usize) -> Result<Vec<usize>> {
    let mut sorted: Vec<usize> = vars.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != vars.len() {
        return Err(Error::InvalidConfig("duplicate designated axis".into()));
    }
    for &k in &sorted {
        if k == 0 || k >= m {
            return Err(Error::InvalidConfig(format!(
                "designated axis {k} outside 1..{m}"
            )));
        }
    }
    Ok(sorted)
}

/// Scan the product slice over first-axis atom `anchor`: members have
/// `|gap| <= gap_tol` and pass the differentiability proxy of `u_k` at each
/// designated axis `k` (boundary atoms excluded).
pub fn build_m_set(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    anchor: usize,
    vars: &[usize],
    gap_tol: f64,
    diff_tol: f64,
) -> Result<MSet> {
    let m = marginals.len();
    let vars = validate_vars(vars, m)?;
    if anchor >= marginals[0].len() {
        return Err(Error::InvalidConfig(format!(
            "anchor {anchor} outside first-axis grid of {} atoms",
            marginals[0].len()
        )));
    }
    let proxy_ok: BTreeMap<usize, Vec<bool>> = vars
        .iter()
        .map(|&k| {
            let ok = (0..marginals[k].len())
                .map(|j| {
                    diff_proxy(
                        &potentials.values[k],
                        &marginals[k].grid.points,
                        j,
                        diff_tol,
                    )
                    .map(|p| p.passes)
                    .unwrap_or(false)
                })
                .collect();
            (k, ok)
        })
        .collect();
    let tail_dims: Vec<usize> = (1..m).map(|a| marginals[a].len()).collect();
    let mut members = Vec::new();
    let mut tail = vec![0usize; m - 1];
    'scan: loop {
        let mut admissible = true;
        for &k in &vars {
            if !proxy_ok[&k][tail[k - 1]] {
                admissible = false;
                break;
            }
        }
        if admissible {
            let mut idx = Vec::with_capacity(m);
            idx.push(anchor);
            idx.extend_from_slice(&tail);
            let gap = splitting_gap(potentials, cost, marginals, &ProductIndex(idx))?;
            if gap.abs() <= gap_tol {
                members.push(tail.clone());
            }
        }
        for a in (0..m - 1).rev() {
            tail[a] += 1;
            if tail[a] < tail_dims[a] {
                continue 'scan;
            }
            tail[a] = 0;
        }
        break;
    }
    Ok(MSet {
        anchor,
        vars,
        members,
        gap_tol,
        diff_tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwistVerdict {
    /// Every anchor's equality set has at most one member.
    Singleton,
    /// No two members of any equality set share a first-axis cost gradient.
    TwistedAtTolerance,
    Collision,
}

impl std::fmt::Display for TwistVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TwistVerdict::Singleton => write!(f, "singleton"),
            TwistVerdict::TwistedAtTolerance => write!(f, "twisted-at-tolerance"),
            TwistVerdict::Collision => write!(f, "collision"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollisionPair {
    pub member_a: Vec<usize>,
    pub member_b: Vec<usize>,
    /// Coordinates over axes `1..m` of the two members.
    pub member_a_coords: Vec<f64>,
    pub member_b_coords: Vec<f64>,
    pub grad_a: f64,
    pub grad_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnchorReport {
    pub anchor: usize,
    pub anchor_coord: f64,
    pub m_size: usize,
    pub collisions: Vec<CollisionPair>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwistReport {
    pub vars: Vec<usize>,
    pub anchors: Vec<AnchorReport>,
    /// First-axis atoms whose own proxy failed (boundary included); no
    /// equality set is built there.
    pub skipped_anchors: Vec<usize>,
    pub verdict: TwistVerdict,
    pub grad_tol: f64,
}

/// Probe injectivity of the first-axis cost gradient on the equality sets:
/// anchors are the first-axis atoms whose `u_1` proxy passes; at each, any
/// two members whose gradients agree within `grad_tol` form a collision.
pub fn twist_probe(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    vars: &[usize],
    gap_tol: f64,
    diff_tol: f64,
    grad_tol: f64,
) -> Result<TwistReport> {
    let vars = validate_vars(vars, marginals.len())?;
    let mut anchors = Vec::new();
    let mut skipped = Vec::new();
    let mut all_singleton = true;
    let mut any_collision = false;
    for anchor in 0..marginals[0].len() {
        let proxy = diff_proxy(
            &potentials.values[0],
            &marginals[0].grid.points,
            anchor,
            diff_tol,
        );
        if !proxy.map(|p| p.passes).unwrap_or(false) {
            skipped.push(anchor);
            continue;
        }
        let mset = build_m_set(potentials, cost, marginals, anchor, &vars, gap_tol, diff_tol)?;
        let grads: Vec<f64> = (0..mset.members.len())
            .map(|i| {
                let coords = mset.full_index(i).coords(marginals);
                cost.partial(0, &coords)
            })
            .collect::<Result<_>>()?;
        let member_coords = |i: usize| -> Vec<f64> {
            mset.members[i]
                .iter()
                .enumerate()
                .map(|(a, &j)| marginals[a + 1].grid.points[j])
                .collect()
        };
        let mut collisions = Vec::new();
        for i in 0..grads.len() {
            for j in i + 1..grads.len() {
                if (grads[i] - grads[j]).abs() <= grad_tol {
                    collisions.push(CollisionPair {
                        member_a: mset.members[i].clone(),
                        member_b: mset.members[j].clone(),
                        member_a_coords: member_coords(i),
                        member_b_coords: member_coords(j),
                        grad_a: grads[i],
                        grad_b: grads[j],
                    });
                }
            }
        }
        if mset.members.len() > 1 {
            all_singleton = false;
        }
        if !collisions.is_empty() {
            any_collision = true;
        }
        anchors.push(AnchorReport {
            anchor,
            anchor_coord: marginals[0].grid.points[anchor],
            m_size: mset.members.len(),
            collisions,
        });
    }
    let verdict = if all_singleton {
        TwistVerdict::Singleton
    } else if !any_collision {
        TwistVerdict::TwistedAtTolerance
    } else {
        TwistVerdict::Collision
    };
    Ok(TwistReport {
        vars,
        anchors,
        skipped_anchors: skipped,
        verdict,
        grad_tol,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// Central difference quotient of `u_k` at the point.
    pub quotient: f64,
    /// Analytic cost partial along axis `k` at the point.
    pub analytic: f64,
    pub delta: f64,
    pub h: f64,
    /// `c_factor * h`.
    pub bound: f64,
    pub pass: bool,
}

/// At an equality point with `x_k` interior, the central difference of `u_k`
/// must match the analytic cost partial along axis `k` within `c_factor * h`.
pub fn check_envelope(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    point: &ProductIndex,
    axis: usize,
    gap_tol: f64,
    c_factor: f64,
) -> Result<EnvelopeReport> {
    let m = marginals.len();
    if axis >= m {
        return Err(Error::InvalidConfig(format!(
            "axis {axis} outside 0..{m}"
        )));
    }
    let j = point.0[axis];
    if j == 0 || j + 1 >= marginals[axis].len() {
        return Err(Error::InteriorRequired);
    }
    let gap = splitting_gap(potentials, cost, marginals, point)?;
    if gap.abs() > gap_tol {
        return Err(Error::NotEqualityPoint {
            gap: gap.abs(),
            tol: gap_tol,
        });
    }
    let points = &marginals[axis].grid.points;
    let u = &potentials.values[axis];
    let quotient = (u[j + 1] - u[j - 1]) / (points[j + 1] - points[j - 1]);
    let analytic = cost.partial(axis, &point.coords(marginals))?;
    let delta = (quotient - analytic).abs();
    let h = 0.5 * (points[j + 1] - points[j - 1]);
    let bound = c_factor * h;
    Ok(EnvelopeReport {
        quotient,
        analytic,
        delta,
        h,
        bound,
        pass: delta <= bound,
    })
}

/// Check that the support members at `anchor` passing the equality and proxy
/// filters all appear in the scanned equality set, and that each equality-set
/// member forms a singleton splitting set of its own.
pub fn check_w_subset_m(
    potentials: &Potentials,
    cost: &CostModel,
    marginals: &[DiscreteMarginal],
    support: &SupportSet,
    anchor: usize,
    vars: &[usize],
    gap_tol: f64,
    diff_tol: f64,
) -> Result<bool> {
    if support.is_empty() {
        return Ok(true);
    }
    let mset = build_m_set(potentials, cost, marginals, anchor, vars, gap_tol, diff_tol)?;
    let members: std::collections::BTreeSet<&Vec<usize>> = mset.members.iter().collect();
    for point in support.points() {
        if point.0[0] != anchor {
            continue;
        }
        let gap = splitting_gap(potentials, cost, marginals, point)?;
        if gap.abs() > gap_tol {
            continue;
        }
        let mut proxied = true;
        for &k in &mset.vars {
            let ok = diff_proxy(
                &potentials.values[k],
                &marginals[k].grid.points,
                point.0[k],
                diff_tol,
            )
            .map(|p| p.passes)
            .unwrap_or(false);
            if !ok {
                proxied = false;
                break;
            }
        }
        if proxied && !members.contains(&point.0[1..].to_vec()) {
            return Ok(false);
        }
    }
    for i in 0..mset.members.len() {
        let singleton = vec![mset.full_index(i)];
        let report = verify_splitting_set(
            potentials,
            cost,
            marginals,
            &singleton,
            gap_tol,
            DEFAULT_SCAN_CAP,
        )?;
        if !report.splitting {
            return Ok(false);
        }
    }
    Ok(true)
}
