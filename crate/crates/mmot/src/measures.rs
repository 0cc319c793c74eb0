//! Grids, discretized marginal measures, and product-grid indexing.
//!
//! A marginal measure is a strictly positive probability vector over the
//! midpoints of a uniform subdivision of a compact interval. Atoms with zero
//! mass are dropped at construction so that every grid index of a valid
//! marginal carries mass.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::{Error, Result};

/// A sorted one-dimensional grid on a compact interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub points: Vec<f64>,
    /// Uniform spacing; 0.0 when the grid is a single point or irregular.
    pub h: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Grid1D {
    /// Midpoints of `n` equal cells of `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::GridTooSmall(n));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidMarginal(format!(
                "bad bounds [{lo}, {hi}]"
            )));
        }
        let h = (hi - lo) / n as f64;
        let points = (0..n).map(|j| lo + (j as f64 + 0.5) * h).collect();
        Ok(Grid1D {
            points,
            h,
            lo,
            hi,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether index `j` is strictly inside the grid (has both neighbors).
    pub fn is_interior(&self, j: usize) -> bool {
        j > 0 && j + 1 < self.points.len()
    }

    /// Check the stated invariants; used by tests and marginal validation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for w in self.points.windows(2) {
            if !(w[1] > w[0]) {
                out.push(format!("points not strictly increasing at {} vs {}", w[0], w[1]));
                break;
            }
        }
        if let (Some(first), Some(last)) = (self.points.first(), self.points.last()) {
            if *first < self.lo - 1e-12 || *last > self.hi + 1e-12 {
                out.push("points outside bounds".into());
            }
        }
        if self.h > 0.0 {
            for w in self.points.windows(2) {
                if ((w[1] - w[0]) - self.h).abs() > 1e-12 {
                    out.push(format!(
                        "declared uniform spacing {} violated: gap {}",
                        self.h,
                        w[1] - w[0]
                    ));
                    break;
                }
            }
        }
        out
    }
}

/// A strictly positive probability vector over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    pub grid: Grid1D,
    pub weights: Vec<f64>,
}

impl DiscreteMarginal {
    /// Build from raw atoms, dropping zero-mass atoms and validating.
    pub fn new(grid: Grid1D, weights: Vec<f64>) -> Result<Self> {
        if grid.len() != weights.len() {
            return Err(Error::InvalidMarginal(format!(
                "{} points vs {} weights",
                grid.len(),
                weights.len()
            )));
        }
        let kept: Vec<(f64, f64)> = grid
            .points
            .iter()
            .zip(&weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(&x, &w)| (x, w))
            .collect();
        if kept.len() != grid.len() {
            // Dropping atoms can break declared uniform spacing; re-tag.
            let points: Vec<f64> = kept.iter().map(|p| p.0).collect();
            let weights: Vec<f64> = kept.iter().map(|p| p.1).collect();
            let grid = Grid1D {
                points,
                h: 0.0,
                lo: grid.lo,
                hi: grid.hi,
            };
            let m = DiscreteMarginal { grid, weights };
            if let Some(v) = m.violations().into_iter().next() {
                return Err(Error::InvalidMarginal(v));
            }
            return Ok(m);
        }
        let m = DiscreteMarginal { grid, weights };
        if let Some(v) = m.violations().into_iter().next() {
            return Err(Error::InvalidMarginal(v));
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// All invariant violations, first-priority first; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.grid.len() != self.weights.len() {
            out.push("length mismatch between grid and weights".into());
            return out;
        }
        if self.weights.is_empty() {
            out.push("empty marginal".into());
            return out;
        }
        for (j, &w) in self.weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                out.push(format!("negative or non-finite weight at {j}: {w}"));
                return out;
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            out.push(format!("sum != 1: {sum}"));
        }
        if self.weights.iter().any(|&w| w == 0.0) {
            out.push("zero-mass atom".into());
        }
        out.extend(self.grid.violations());
        out
    }
}

/// Validate a marginal, returning the list of violated invariants.
///
/// Valid marginals return an empty list; violations are values, not errors.
pub fn validate_marginal(m: &DiscreteMarginal) -> Vec<String> {
    m.violations()
}

/// Midpoint-rule discretization of a density on `[lo, hi]` into `n` cells.
///
/// Weights are `density(midpoint) * h`, renormalized to sum to one, so any
/// positive rescaling of the density yields identical weights.
pub fn discretize_density<F: Fn(f64) -> f64>(
    density: F,
    bounds: (f64, f64),
    n: usize,
) -> Result<DiscreteMarginal> {
    let grid = Grid1D::uniform(bounds.0, bounds.1, n)?;
    let mut weights: Vec<f64> = grid.points.iter().map(|&x| density(x) * grid.h).collect();
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::InvalidMarginal(
            "density produced negative or non-finite mass".into(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateDensity);
    }
    for w in &mut weights {
        *w /= total;
    }
    DiscreteMarginal::new(grid, weights)
}

/// A point of the product grid, stored as one index per axis.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProductIndex(pub Vec<usize>);

impl ProductIndex {
    pub fn coords(&self, marginals: &[DiscreteMarginal]) -> Vec<f64> {
        self.0
            .iter()
            .zip(marginals)
            .map(|(&j, m)| m.grid.points[j])
            .collect()
    }
}

/// Row-major linear indexing over a product grid shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    pub dims: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Self {
        let m = dims.len();
        let mut strides = vec![1usize; m];
        for a in (0..m.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let len = dims.iter().product();
        Shape { dims, strides, len }
    }

    pub fn from_marginals(marginals: &[DiscreteMarginal]) -> Self {
        Shape::new(marginals.iter().map(|m| m.len()).collect())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Grid index of `lin` along `axis`.
    #[inline]
    pub fn axis_index(&self, lin: usize, axis: usize) -> usize {
        (lin / self.strides[axis]) % self.dims[axis]
    }

    #[inline]
    pub fn unravel(&self, lin: usize) -> Vec<usize> {
        (0..self.dims.len()).map(|a| self.axis_index(lin, a)).collect()
    }

    #[inline]
    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(&i, &s)| i * s).sum()
    }
}

/// Aggregate fine-grid weights onto a coarser grid with half the cells.
///
/// Used by refinement-consistency tests: for smooth densities the aggregated
/// weights match the coarse discretization to second order in the spacing.
pub fn aggregate_halved(fine: &DiscreteMarginal) -> Result<Vec<f64>> {
    if fine.len() % 2 != 0 {
        return Err(Error::InvalidMarginal(
            "refinement aggregation needs an even cell count".into(),
        ));
    }
    Ok(fine
        .weights
        .chunks(2)
        .map(|pair| pair.iter().sum())
        .collect())
}

/// Named density families for config files.
///
/// `params` keys: `"slope_lo"`/`"slope_hi"` scale the `linear` family's
/// endpoint values (defaults 0 and 1); `truncated_gaussian` reads `"mu"` and
/// `"sigma"`.
pub fn density_by_name(
    name: &str,
    params: &BTreeMap<String, f64>,
) -> Result<Box<dyn Fn(f64) -> f64>> {
    match name {
        "uniform" => Ok(Box::new(|_| 1.0)),
        "linear" => {
            let lo = params.get("slope_lo").copied().unwrap_or(0.0);
            let hi = params.get("slope_hi").copied().unwrap_or(1.0);
            Ok(Box::new(move |x| lo + (hi - lo) * x))
        }
        "truncated_gaussian" => {
            let mu = params.get("mu").copied().unwrap_or(0.0);
            let sigma = params.get("sigma").copied().unwrap_or(1.0);
            if sigma <= 0.0 {
                return Err(Error::InvalidMarginal(format!("sigma must be > 0, got {sigma}")));
            }
            Ok(Box::new(move |x| {
                (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp()
            }))
        }
        other => Err(Error::InvalidMarginal(format!("unknown density: {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_density_gives_equal_weights() {
        let m = discretize_density(|_| 1.0, (0.0, 1.0), 4).unwrap();
        assert_eq!(m.weights, vec![0.25; 4]);
        assert_eq!(m.grid.points, vec![0.125, 0.375, 0.625, 0.875]);
    }

    #[test]
    fn linear_density_two_cells() {
        // Midpoint rule on 2x over [0,1]: masses 2*0.25*0.5 and 2*0.75*0.5,
        // renormalized to (0.25, 0.75).
        let m = discretize_density(|x| 2.0 * x, (0.0, 1.0), 2).unwrap();
        assert_abs_diff_eq!(m.weights[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(m.weights[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn single_cell_is_rejected() {
        assert!(matches!(
            discretize_density(|_| 1.0, (0.0, 1.0), 1),
            Err(Error::GridTooSmall(1))
        ));
    }

    #[test]
    fn zero_density_is_degenerate() {
        assert!(matches!(
            discretize_density(|_| 0.0, (0.0, 1.0), 8),
            Err(Error::DegenerateDensity)
        ));
    }

    #[test]
    fn validate_flags_bad_sum_and_zero_atoms() {
        let grid = Grid1D::uniform(0.0, 1.0, 2).unwrap();
        let ok = DiscreteMarginal {
            grid: grid.clone(),
            weights: vec![0.5, 0.5],
        };
        assert!(validate_marginal(&ok).is_empty());

        let bad_sum = DiscreteMarginal {
            grid: grid.clone(),
            weights: vec![0.6, 0.6],
        };
        assert!(validate_marginal(&bad_sum)[0].contains("sum != 1"));

        let zero_atom = DiscreteMarginal {
            grid,
            weights: vec![1.0, 0.0],
        };
        assert!(validate_marginal(&zero_atom)
            .iter()
            .any(|v| v.contains("zero-mass atom")));
    }

    #[test]
    fn constructor_drops_zero_atoms() {
        let grid = Grid1D::uniform(0.0, 1.0, 3).unwrap();
        let m = DiscreteMarginal::new(grid, vec![0.5, 0.0, 0.5]).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m.violations().is_empty());
    }

    #[test]
    fn shape_round_trips_indices() {
        let shape = Shape::new(vec![3, 4, 5]);
        assert_eq!(shape.len(), 60);
        for lin in 0..shape.len() {
            let idx = shape.unravel(lin);
            assert_eq!(shape.ravel(&idx), lin);
            for a in 0..3 {
                assert_eq!(shape.axis_index(lin, a), idx[a]);
            }
        }
    }

    #[test]
    fn refinement_consistency_for_smooth_density() {
        let density = |x: f64| 1.0 + 0.5 * (3.0 * x).sin();
        let coarse = discretize_density(density, (0.0, 1.0), 16).unwrap();
        let fine = discretize_density(density, (0.0, 1.0), 32).unwrap();
        let agg = aggregate_halved(&fine).unwrap();
        let h = coarse.grid.h;
        for (a, b) in agg.iter().zip(&coarse.weights) {
            assert!((a - b).abs() < 4.0 * h * h, "aggregated {a} vs coarse {b}");
        }
    }

    #[test]
    fn named_densities_resolve() {
        let params = BTreeMap::new();
        assert!(density_by_name("uniform", &params).is_ok());
        assert!(density_by_name("linear", &params).is_ok());
        let mut g = BTreeMap::new();
        g.insert("mu".to_string(), 0.4);
        g.insert("sigma".to_string(), 0.2);
        assert!(density_by_name("truncated_gaussian", &g).is_ok());
        assert!(density_by_name("cauchy", &params).is_err());
    }
}
