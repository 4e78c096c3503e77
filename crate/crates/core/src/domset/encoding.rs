//! Interval bounds and the big-M encoding of a ReLU network.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::nature::GaussianNature;
use crate::relunet::ReluNet;

/// Axis-aligned search box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SearchBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("search box"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(invalid("box", "lower corner exceeds upper corner"));
        }
        Ok(Self { lower, upper })
    }

    /// `mean ± radius · marginal std`.
    pub fn around(nature: &GaussianNature, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("box_radius", "must be positive"));
        }
        let sd = nature.std_devs();
        let m = nature.mean();
        Self::new(
            m.iter().zip(&sd).map(|(m, s)| m - radius * s).collect(),
            m.iter().zip(&sd).map(|(m, s)| m + radius * s).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// True when some coordinate sits within `tol` (relative to the box
    /// width) of a face.
    pub fn touches_boundary(&self, x: &[f64], tol: f64) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).any(|(v, (l, u))| {
            let w = (u - l).max(1e-300);
            (v - l).abs() <= tol * w || (u - v).abs() <= tol * w
        })
    }
}

/// Per-neuron pre-activation bounds over a search box and the resulting
/// big-M constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BigMEncoding {
    pub search_box: SearchBox,
    /// `pre_lower[i][r]` bounds the pre-activation of unit `r` in hidden
    /// layer `i`.
    pub pre_lower: Vec<Vec<f64>>,
    pub pre_upper: Vec<Vec<f64>>,
    pub big_m: Vec<Vec<f64>>,
    pub score_lower: f64,
    pub score_upper: f64,
}

/// Interval propagation, layer by layer.
pub fn propagate_bounds(net: &ReluNet, search_box: &SearchBox) -> Result<BigMEncoding> {
    check_dim(net.input_dim(), search_box.dim())?;
    if net.params().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network parameters"));
    }
    let mut lo = search_box.lower.clone();
    let mut hi = search_box.upper.clone();
    let mut pre_lower = Vec::new();
    let mut pre_upper = Vec::new();
    let mut big_m = Vec::new();
    let layers = net.layers();
    for (i, layer) in layers.iter().enumerate() {
        let mut pl = Vec::with_capacity(layer.rows());
        let mut pu = Vec::with_capacity(layer.rows());
        for r in 0..layer.rows() {
            let (mut a, mut b) = (layer.bias()[r], layer.bias()[r]);
            for (c, &w) in layer.row(r).iter().enumerate() {
                if w >= 0.0 {
                    a += w * lo[c];
                    b += w * hi[c];
                } else {
                    a += w * hi[c];
                    b += w * lo[c];
                }
            }
            pl.push(a);
            pu.push(b);
        }
        if i + 1 == layers.len() {
            return Ok(BigMEncoding {
                search_box: search_box.clone(),
                pre_lower,
                pre_upper,
                big_m,
                score_lower: pl[0],
                score_upper: pu[0],
            });
        }
        big_m.push(
            pl.iter()
                .zip(&pu)
                .map(|(l, u): (&f64, &f64)| u.max(-l).max(1.0))
                .collect(),
        );
        lo = pl.iter().map(|v| v.max(0.0)).collect();
        hi = pu.iter().map(|v| v.max(0.0)).collect();
        pre_lower.push(pl);
        pre_upper.push(pu);
    }
    unreachable!("network has at least one layer")
}

/// Activity status of each hidden unit implied by the bounds alone:
/// `Some(true)` always active, `Some(false)` never active, `None` unstable.
pub fn stable_status(enc: &BigMEncoding) -> Vec<Option<bool>> {
    enc.pre_lower
        .iter()
        .zip(&enc.pre_upper)
        .flat_map(|(l, u)| {
            l.iter().zip(u).map(|(l, u)| {
                if *l >= 0.0 {
                    Some(true)
                } else if *u <= 0.0 {
                    Some(false)
                } else {
                    None
                }
            })
        })
        .collect()
}

impl BigMEncoding {
    /// Checks an assignment `(x, s, z)` against the big-M system
    ///
    /// ```text
    /// s_L ≥ κ (score),  s_i ≤ W_i s_{i-1} + b_i + M(1 − z_i),
    /// s_i ≥ W_i s_{i-1} + b_i,  s_i ≤ M z_i,  s_i ≥ 0,  s_0 = x
    /// ```
    ///
    /// with slack `tol`.
    pub fn satisfies(
        &self,
        net: &ReluNet,
        x: &[f64],
        post: &[Vec<f64>],
        pattern: &[Vec<bool>],
        kappa: f64,
        tol: f64,
    ) -> bool {
        let layers = net.layers();
        let hidden = layers.len() - 1;
        if post.len() != hidden || pattern.len() != hidden {
            return false;
        }
        let mut prev: &[f64] = x;
        for i in 0..hidden {
            let layer = &layers[i];
            for r in 0..layer.rows() {
                let pre: f64 = layer.row(r).iter().zip(prev).map(|(w, v)| w * v).sum::<f64>()
                    + layer.bias()[r];
                let s = post[i][r];
                let z = if pattern[i][r] { 1.0 } else { 0.0 };
                let m = self.big_m[i][r];
                if s > pre + m * (1.0 - z) + tol || s < pre - tol || s > m * z + tol || s < -tol {
                    return false;
                }
            }
            prev = &post[i];
        }
        let last = &layers[hidden];
        let score: f64 = last.row(0).iter().zip(prev).map(|(w, v)| w * v).sum::<f64>() + last.bias()[0];
        score >= kappa - tol
    }

    /// Post-activations forced by fixing the binaries to `pattern`: active
    /// units copy their pre-activation, inactive units are zero.
    pub fn post_for_pattern(net: &ReluNet, x: &[f64], pattern: &[Vec<bool>]) -> Vec<Vec<f64>> {
        let layers = net.layers();
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut prev = x.to_vec();
        for (i, layer) in layers[..layers.len() - 1].iter().enumerate() {
            let s: Vec<f64> = (0..layer.rows())
                .map(|r| {
                    if pattern[i][r] {
                        layer.row(r).iter().zip(&prev).map(|(w, v)| w * v).sum::<f64>() + layer.bias()[r]
                    } else {
                        0.0
                    }
                })
                .collect();
            prev = s.clone();
            out.push(s);
        }
        out
    }

    /// Score implied by a pattern-fixed assignment.
    pub fn score_for_pattern(net: &ReluNet, x: &[f64], pattern: &[Vec<bool>]) -> f64 {
        let post = Self::post_for_pattern(net, x, pattern);
        let last = net.layers().last().unwrap();
        let prev: &[f64] = post.last().map(|v| v.as_slice()).unwrap_or(x);
        last.row(0).iter().zip(prev).map(|(w, v)| w * v).sum::<f64>() + last.bias()[0]
    }
}
