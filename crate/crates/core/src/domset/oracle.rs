//! Exhaustive reference for the dominating-point loop: every activation
//! pattern is fixed in turn and its convex piece solved directly.

use nalgebra::{DMatrix, DVector};

use crate::domset::encoding::SearchBox;
use crate::domset::Cut;
use crate::error::{check_dim, Error, Result};
use crate::nature::GaussianNature;
use crate::qp::{self, QpProblem};
use crate::relunet::ReluNet;

pub const ORACLE_MAX_HIDDEN: usize = 16;

/// Linear constraints `rows · x ≤ rhs` describing the piece of `{g ≥ κ}`
/// on which the network follows `pattern` (bit `j` = hidden unit `j`).
fn piece(net: &ReluNet, pattern: u64, kappa: f64) -> (DMatrix<f64>, DVector<f64>) {
    let d = net.input_dim();
    let mut a = DMatrix::<f64>::identity(d, d);
    let mut c = DVector::<f64>::zeros(d);
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let layers = net.layers();
    let mut bit = 0;
    for layer in &layers[..layers.len() - 1] {
        let w = DMatrix::from_fn(layer.rows(), layer.cols(), |r, k| layer.weight(r, k));
        let b = DVector::from_column_slice(layer.bias());
        let mut pa = &w * &a;
        let mut pc = &w * &c + b;
        for r in 0..layer.rows() {
            let active = pattern >> bit & 1 == 1;
            bit += 1;
            let row = pa.row(r).transpose();
            if active {
                rows.push(-row);
                rhs.push(pc[r]);
            } else {
                rows.push(row);
                rhs.push(-pc[r]);
                pa.row_mut(r).fill(0.0);
                pc[r] = 0.0;
            }
        }
        a = pa;
        c = pc;
    }
    let out = layers.last().unwrap();
    let w = DVector::from_column_slice(out.row(0));
    rows.push(-(a.transpose() * &w));
    rhs.push(w.dot(&c) + out.bias()[0] - kappa);
    let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    (m, DVector::from_vec(rhs))
}

fn solve_piece(
    nature: &GaussianNature,
    rows: &DMatrix<f64>,
    rhs: &DVector<f64>,
    bx: &SearchBox,
    cuts: &[Cut],
) -> Result<Option<(Vec<f64>, f64)>> {
    let d = nature.dim();
    let chol = nature.chol();
    let mean = DVector::from_column_slice(nature.mean());
    let mut qp = QpProblem::new(vec![1.0; d]);
    // a·x ≤ β with x = λ + C u
    let mut push = |a: DVector<f64>, beta: f64| {
        let row = chol.transpose() * &a;
        qp.leq(row.iter().copied().collect(), beta - a.dot(&mean));
    };
    for i in 0..rows.nrows() {
        push(rows.row(i).transpose(), rhs[i]);
    }
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        push(e.clone(), bx.upper[j]);
        push(-e, -bx.lower[j]);
    }
    for cut in cuts {
        let n = DVector::from_column_slice(&cut.normal);
        let anchor = DVector::from_column_slice(&cut.anchor);
        let beta = n.dot(&anchor) - cut.margin;
        push(n, beta);
    }
    Ok(qp::solve(&qp)?.optimal().map(|s| {
        let rate = s.x.iter().map(|v| v * v).sum();
        (nature.unwhiten(&s.x), rate)
    }))
}

/// Replays the sequential cut loop over all `2^H` activation pieces. At
/// most `max_points` points are returned.
pub fn enumerate_dominating_oracle(
    net: &ReluNet,
    nature: &GaussianNature,
    kappa: f64,
    bx: &SearchBox,
    tau: f64,
    max_points: usize,
) -> Result<Vec<Vec<f64>>> {
    check_dim(nature.dim(), net.input_dim())?;
    check_dim(nature.dim(), bx.dim())?;
    let hidden = net.hidden_count();
    if hidden > ORACLE_MAX_HIDDEN {
        return Err(Error::TooManyNeurons {
            hidden,
            limit: ORACLE_MAX_HIDDEN,
        });
    }
    // Cuts only shrink a piece, so uncut minima are lower bounds that let
    // later rounds skip pieces.
    let mut pieces = Vec::new();
    for pattern in 0..1u64 << hidden {
        let (rows, rhs) = piece(net, pattern, kappa);
        if let Some((_, rate)) = solve_piece(nature, &rows, &rhs, bx, &[])? {
            pieces.push((rate, rows, rhs));
        }
    }
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut cuts: Vec<Cut> = Vec::new();
    let mut points = Vec::new();
    while points.len() < max_points {
        let mut best: Option<(Vec<f64>, f64)> = None;
        for (floor, rows, rhs) in &pieces {
            if best.as_ref().is_some_and(|b| *floor >= b.1) {
                break;
            }
            if let Some((x, rate)) = solve_piece(nature, rows, rhs, bx, &cuts)? {
                if best.as_ref().is_none_or(|b| rate < b.1) {
                    best = Some((x, rate));
                }
            }
        }
        let Some((x, _)) = best else { break };
        cuts.push(Cut::new(nature, x.clone(), tau)?);
        points.push(x);
    }
    Ok(points)
}
