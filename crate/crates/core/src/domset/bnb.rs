//! Branch-and-bound for the minimum-rate point of `{g ≥ κ}` under cuts.
//!
//! Works in whitened coordinates `u = C⁻¹(x − λ)`, so the rate is `‖u‖²`.
//! A node fixes a subset of hidden units to active or inactive; fixed units
//! turn into affine expressions of the remaining variables, unfixed units
//! get a post-activation variable bounded by the triangle envelope of their
//! interval bounds. Post-activation variables are scaled by their upper
//! bound and carry a tiny quadratic weight so the Hessian stays diagonal
//! and positive; the node bound subtracts the largest value that weight can
//! contribute.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use crate::domset::encoding::{stable_status, BigMEncoding};
use crate::domset::Cut;
use crate::error::{check_dim, Error, Result};
use crate::nature::GaussianNature;
use crate::qp::{self, QpProblem};
use crate::relunet::ReluNet;

/// Weight on each scaled post-activation variable.
const REG: f64 = 1e-8;
/// Violation below which a relaxed unit counts as exact.
const EXACT: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct MinRateOptions {
    /// Absolute optimality gap on the rate.
    pub gap: f64,
    pub max_nodes: usize,
}

impl Default for MinRateOptions {
    fn default() -> Self {
        Self {
            gap: 1e-6,
            max_nodes: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinRatePoint {
    pub x: Vec<f64>,
    pub rate: f64,
    pub pattern: Vec<Vec<bool>>,
    /// Optimum sits on the face of the search box.
    pub touches_box: bool,
    pub nodes: usize,
}

#[derive(Clone)]
struct Affine {
    coef: Vec<f64>,
    constant: f64,
}

impl Affine {
    fn zero(n: usize) -> Self {
        Self {
            coef: vec![0.0; n],
            constant: 0.0,
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        self.constant + self.coef.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    fn axpy(&mut self, alpha: f64, other: &Affine) {
        if alpha == 0.0 {
            return;
        }
        for (a, b) in self.coef.iter_mut().zip(&other.coef) {
            *a += alpha * b;
        }
        self.constant += alpha * other.constant;
    }
}

struct Built {
    qp: QpProblem,
    /// Per unfixed unit: (global id, variable index, scale, pre-activation).
    relaxed: Vec<(usize, usize, f64, Affine)>,
}

pub(crate) struct Formulation<'a> {
    net: &'a ReluNet,
    nature: &'a GaussianNature,
    enc: &'a BigMEncoding,
    kappa: f64,
    /// Whitened cut anchors and their right-hand sides.
    cuts: Vec<(Vec<f64>, f64)>,
    d: usize,
}

impl<'a> Formulation<'a> {
    pub(crate) fn new(
        net: &'a ReluNet,
        nature: &'a GaussianNature,
        cuts: &[Cut],
        kappa: f64,
        enc: &'a BigMEncoding,
    ) -> Result<Self> {
        let d = nature.dim();
        check_dim(d, net.input_dim())?;
        check_dim(d, enc.search_box.dim())?;
        let mut wc = Vec::with_capacity(cuts.len());
        for c in cuts {
            check_dim(d, c.anchor.len())?;
            let w: Vec<f64> = nature.whiten(&c.anchor)?.iter().copied().collect();
            let ww: f64 = w.iter().map(|v| v * v).sum();
            wc.push((w, ww - c.margin));
        }
        Ok(Self {
            net,
            nature,
            enc,
            kappa,
            cuts: wc,
            d,
        })
    }

    fn build(&self, status: &[Option<bool>]) -> Built {
        let d = self.d;
        let unfixed = status.iter().filter(|s| s.is_none()).count();
        let n = d + unfixed;
        let mut hdiag = vec![1.0; d];
        hdiag.extend(std::iter::repeat_n(REG, unfixed));
        let mut qp = QpProblem::new(hdiag);

        let chol = self.nature.chol();
        let mean = self.nature.mean();
        let bx = &self.enc.search_box;
        let mut cur: Vec<Affine> = (0..d)
            .map(|j| {
                let mut e = Affine::zero(n);
                for k in 0..=j {
                    e.coef[k] = chol[(j, k)];
                }
                e.constant = mean[j];
                e
            })
            .collect();
        for (j, e) in cur.iter().enumerate() {
            qp.leq(e.coef.clone(), bx.upper[j] - e.constant);
            qp.leq(e.coef.iter().map(|v| -v).collect(), e.constant - bx.lower[j]);
        }
        for (w, rhs) in &self.cuts {
            let mut row = w.clone();
            row.resize(n, 0.0);
            qp.leq(row, *rhs);
        }

        let layers = self.net.layers();
        let mut relaxed = Vec::with_capacity(unfixed);
        let mut gid = 0;
        let mut next_var = d;
        for (i, layer) in layers[..layers.len() - 1].iter().enumerate() {
            let mut post = Vec::with_capacity(layer.rows());
            for r in 0..layer.rows() {
                let mut pre = Affine::zero(n);
                pre.constant = layer.bias()[r];
                for (c, w) in layer.row(r).iter().enumerate() {
                    pre.axpy(*w, &cur[c]);
                }
                match status[gid] {
                    Some(true) => {
                        qp.leq(pre.coef.iter().map(|v| -v).collect(), pre.constant);
                        post.push(pre);
                    }
                    Some(false) => {
                        qp.leq(pre.coef.clone(), -pre.constant);
                        post.push(Affine::zero(n));
                    }
                    None => {
                        let lo = self.enc.pre_lower[i][r];
                        let hi = self.enc.pre_upper[i][r];
                        let v = next_var;
                        next_var += 1;
                        // s = hi · t with t ∈ [0, 1]
                        let mut s = Affine::zero(n);
                        s.coef[v] = hi;
                        let mut row = vec![0.0; n];
                        row[v] = -1.0;
                        qp.leq(row, 0.0);
                        // pre − s ≤ 0
                        let mut row = pre.coef.clone();
                        row[v] -= hi;
                        qp.leq(row, -pre.constant);
                        // s ≤ k (pre − lo)
                        let k = hi / (hi - lo);
                        let mut row: Vec<f64> = pre.coef.iter().map(|c| -k * c).collect();
                        row[v] += hi;
                        qp.leq(row, k * (pre.constant - lo));
                        relaxed.push((gid, v, hi, pre));
                        post.push(s);
                    }
                }
                gid += 1;
            }
            cur = post;
        }
        let last = layers.last().expect("nonempty");
        let mut score = Affine::zero(n);
        score.constant = last.bias()[0];
        for (c, w) in last.row(0).iter().enumerate() {
            score.axpy(*w, &cur[c]);
        }
        qp.leq(score.coef.iter().map(|v| -v).collect(), score.constant - self.kappa);
        Built { qp, relaxed }
    }

    /// Minimum rate with every unit fixed, as `(x, rate)`.
    pub(crate) fn solve_leaf(&self, pattern: &[bool]) -> Result<Option<(Vec<f64>, f64)>> {
        let status: Vec<Option<bool>> = pattern.iter().map(|b| Some(*b)).collect();
        let built = self.build(&status);
        Ok(qp::solve(&built.qp)?.optimal().map(|s| {
            let u = &s.x[..self.d];
            let rate = u.iter().map(|v| v * v).sum();
            (self.nature.unwhiten(u), rate)
        }))
    }
}

struct Node {
    bound: f64,
    id: usize,
    status: Vec<Option<bool>>,
    /// Unit to branch on.
    branch: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then smallest id
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'f, 'a> {
    form: &'f Formulation<'a>,
    best: Option<(Vec<f64>, f64, Vec<bool>)>,
    tried: HashSet<Vec<bool>>,
    nodes: usize,
}

enum Relaxed {
    Infeasible,
    Node { bound: f64, branch: Option<usize>, x: Vec<f64> },
}

impl Search<'_, '_> {
    fn incumbent(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.1)
    }

    fn offer_leaf(&mut self, pattern: Vec<bool>) -> Result<()> {
        if !self.tried.insert(pattern.clone()) {
            return Ok(());
        }
        if let Some((x, rate)) = self.form.solve_leaf(&pattern)? {
            if rate < self.incumbent() {
                self.best = Some((x, rate, pattern));
            }
        }
        Ok(())
    }

    fn relax(&mut self, status: &[Option<bool>]) -> Result<Relaxed> {
        self.nodes += 1;
        let built = self.form.build(status);
        let Some(sol) = qp::solve(&built.qp)?.optimal() else {
            return Ok(Relaxed::Infeasible);
        };
        let u = &sol.x[..self.form.d];
        let bound = 2.0 * sol.objective - REG * built.relaxed.len() as f64;
        let mut branch = None;
        let mut worst = EXACT;
        for (gid, v, scale, pre) in &built.relaxed {
            let s = sol.x[*v] * scale;
            let p = pre.eval(&sol.x);
            let viol = s.min(s - p);
            if viol > worst {
                worst = viol;
                branch = Some(*gid);
            }
        }
        if branch.is_none() {
            branch = built.relaxed.first().map(|r| r.0);
        }
        Ok(Relaxed::Node {
            bound,
            branch,
            x: self.form.nature.unwhiten(u),
        })
    }

    /// Leaf pattern agreeing with `status` on fixed units and with the
    /// forward pass at `x` elsewhere.
    fn completion(&self, status: &[Option<bool>], x: &[f64]) -> Vec<bool> {
        let fwd: Vec<bool> = self
            .form
            .net
            .activation_pattern(x)
            .expect("dimension checked")
            .into_iter()
            .flatten()
            .collect();
        status
            .iter()
            .zip(fwd)
            .map(|(s, f)| s.unwrap_or(f))
            .collect()
    }
}

fn unflatten(net: &ReluNet, flat: &[bool]) -> Vec<Vec<bool>> {
    let mut out = Vec::new();
    let mut it = flat.iter().copied();
    for w in net.hidden_widths() {
        out.push(it.by_ref().take(w).collect());
    }
    out
}

/// Global minimiser of the rate over `{x in box : g(x) ≥ κ, all cuts}`, or
/// `None` when that set is empty.
pub fn solve_min_rate(
    net: &ReluNet,
    nature: &GaussianNature,
    cuts: &[Cut],
    kappa: f64,
    enc: &BigMEncoding,
    opts: &MinRateOptions,
) -> Result<Option<MinRatePoint>> {
    if kappa > enc.score_upper {
        return Ok(None);
    }
    let form = Formulation::new(net, nature, cuts, kappa, enc)?;
    let mut search = Search {
        form: &form,
        best: None,
        tried: HashSet::new(),
        nodes: 0,
    };
    let root = stable_status(enc);
    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;

    let mut consider = |search: &mut Search, heap: &mut BinaryHeap<Node>, status: Vec<Option<bool>>| -> Result<()> {
        if status.iter().all(|s| s.is_some()) {
            search.nodes += 1;
            return search.offer_leaf(status.into_iter().map(|s| s.unwrap()).collect());
        }
        if let Relaxed::Node { bound, branch, x } = search.relax(&status)? {
            let leaf = search.completion(&status, &x);
            search.offer_leaf(leaf)?;
            if bound < search.incumbent() - opts.gap {
                heap.push(Node {
                    bound,
                    id: next_id,
                    status,
                    branch: branch.expect("node has an unfixed unit"),
                });
                next_id += 1;
            }
        }
        Ok(())
    };

    consider(&mut search, &mut heap, root)?;
    while let Some(node) = heap.pop() {
        if node.bound >= search.incumbent() - opts.gap {
            break;
        }
        if search.nodes > opts.max_nodes {
            return Err(Error::Solver(format!(
                "branch-and-bound exceeded {} nodes",
                opts.max_nodes
            )));
        }
        for value in [false, true] {
            let mut child = node.status.clone();
            child[node.branch] = Some(value);
            consider(&mut search, &mut heap, child)?;
        }
    }

    let nodes = search.nodes;
    Ok(search.best.map(|(x, _, pattern)| {
        let rate = nature.rate(&x).expect("dimension checked");
        MinRatePoint {
            touches_box: enc.search_box.touches_boundary(&x, 1e-9),
            pattern: unflatten(net, &pattern),
            x,
            rate,
            nodes,
        }
    }))
}
