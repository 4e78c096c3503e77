//! Orthogonally monotone hull of safe samples and the conservative
//! threshold it induces.
//!
//! The hull of a point set in the positive orthant is the union of the boxes
//! `[0, p]`. Only Pareto-maximal points matter, so those are all that is kept.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::relunet::ReluNet;

/// Diagonal affine map `x ↦ scale ⊙ x + shift` into coordinates where danger
/// grows with every coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientMap {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl OrientMap {
    pub fn new(scale: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        check_dim(scale.len(), shift.len())?;
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("scale", "orientation scales must be positive and finite"));
        }
        Ok(Self { scale, shift })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            scale: vec![1.0; d],
            shift: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.scale.iter().zip(&self.shift))
            .map(|(x, (s, b))| s * x + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneHull {
    pub dim: usize,
    /// No corner is coordinatewise below another.
    pub corners: Vec<Vec<f64>>,
}

fn first_negative(x: &[f64]) -> Option<(usize, f64)> {
    x.iter().copied().enumerate().find(|(_, v)| *v < 0.0)
}

fn leq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Pareto-maximal subset of `safe_points`; each must be coordinatewise
/// nonnegative.
pub fn build_hull(safe_points: &[Vec<f64>], dim: usize) -> Result<MonotoneHull> {
    for (i, p) in safe_points.iter().enumerate() {
        check_dim(dim, p.len())?;
        if let Some((coord, value)) = first_negative(p) {
            return Err(Error::NegativeCoordinate {
                point: i,
                coord,
                value,
            });
        }
    }
    // a point can only be dominated by one with a larger or equal sum
    let mut order: Vec<usize> = (0..safe_points.len()).collect();
    let sums: Vec<f64> = safe_points.iter().map(|p| p.iter().sum()).collect();
    order.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]).then(a.cmp(&b)));
    let mut corners: Vec<Vec<f64>> = Vec::new();
    for i in order {
        let p = &safe_points[i];
        if !corners.iter().any(|c| leq(p, c)) {
            corners.push(p.clone());
        }
    }
    Ok(MonotoneHull { dim, corners })
}

impl MonotoneHull {
    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    /// Whether `x` lies under some corner.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        check_dim(self.dim, x.len())?;
        if let Some((coord, value)) = first_negative(x) {
            return Err(Error::NegativeCoordinate {
                point: 0,
                coord,
                value,
            });
        }
        Ok(self.covers(x))
    }

    fn covers(&self, x: &[f64]) -> bool {
        self.corners.iter().any(|c| leq(x, c))
    }
}

/// Largest threshold keeping every candidate outside the hull in
/// `{g ≥ κ}`: the minimum score over those candidates, or `floor` when the
/// hull covers them all. `floor` defaults to the minimum candidate score
/// minus one. Candidates with a negative oriented coordinate count as
/// outside.
pub fn tune_kappa(
    net: &ReluNet,
    hull: &MonotoneHull,
    orient: &OrientMap,
    candidates: &[Vec<f64>],
    floor: Option<f64>,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(invalid("candidates", "need at least one candidate"));
    }
    check_dim(hull.dim, orient.dim())?;
    let mut min_all = f64::INFINITY;
    let mut min_outside = f64::INFINITY;
    for x in candidates {
        check_dim(net.input_dim(), x.len())?;
        let s = net.score(x);
        min_all = min_all.min(s);
        let y = orient.apply(x);
        if first_negative(&y).is_some() || !hull.covers(&y) {
            min_outside = min_outside.min(s);
        }
    }
    if min_outside.is_finite() {
        Ok(min_outside)
    } else {
        Ok(floor.unwrap_or(min_all - 1.0))
    }
}
