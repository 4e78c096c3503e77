//! Dense strictly convex QP with a diagonal Hessian.
//!
//! Solves
//!
//! ```text
//! minimize    ½ Σ g_i z_i² + cᵀz
//! subject to  a_kᵀ z ≤ b_k      (inequalities)
//!             a_kᵀ z = b_k      (equalities)
//! ```
//!
//! with the Goldfarb–Idnani dual active-set method. The method starts from
//! the unconstrained minimiser and adds violated constraints one at a time,
//! so the dual objective grows monotonically; it proves infeasibility when a
//! violated constraint cannot be satisfied by any primal or dual step.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    /// Diagonal of the Hessian; every entry must be positive.
    pub hessian_diag: Vec<f64>,
    pub linear: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub equality: Vec<bool>,
    /// Known upper bound on the optimum of any feasible instance. Crossing it
    /// certifies infeasibility early.
    pub objective_cap: Option<f64>,
}

impl QpProblem {
    pub fn new(hessian_diag: Vec<f64>) -> Self {
        let n = hessian_diag.len();
        Self {
            hessian_diag,
            linear: vec![0.0; n],
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.hessian_diag.len()
    }

    /// Adds `row · z ≤ rhs`.
    pub fn leq(&mut self, row: Vec<f64>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
        self.equality.push(false);
    }

    /// Adds `row · z = rhs`.
    pub fn eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
        self.equality.push(true);
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.hessian_diag)
            .zip(&self.linear)
            .map(|((zi, gi), ci)| 0.5 * gi * zi * zi + ci * zi)
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint (zero when inactive). Satisfies
    /// `G x + c + Σ λ_k a_k = 0`.
    pub multipliers: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub enum QpOutcome {
    Optimal(QpSolution),
    Infeasible,
}

impl QpOutcome {
    pub fn optimal(self) -> Option<QpSolution> {
        match self {
            QpOutcome::Optimal(s) => Some(s),
            QpOutcome::Infeasible => None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct State<'a> {
    p: &'a QpProblem,
    n: usize,
    // columns of J
    j: Vec<Vec<f64>>,
    // columns of the upper-triangular R
    r: Vec<Vec<f64>>,
    active: Vec<usize>,
    u: Vec<f64>,
    x: Vec<f64>,
}

impl<'a> State<'a> {
    /// Normal of constraint `k` in `n·z ≥ b` form.
    fn normal(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.p.rows[k].iter().map(|v| -v)
    }

    fn slack(&self, k: usize) -> f64 {
        -dot(&self.p.rows[k], &self.x) + self.p.rhs[k]
    }

    fn jt_times(&self, k: usize) -> Vec<f64> {
        let nk: Vec<f64> = self.normal(k).collect();
        self.j.iter().map(|col| dot(col, &nk)).collect()
    }

    fn q(&self) -> usize {
        self.active.len()
    }

    fn step_dirs(&self, d: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let q = self.q();
        let mut z = vec![0.0; self.n];
        for (col, &dj) in self.j.iter().zip(d).skip(q) {
            if dj != 0.0 {
                for (zi, ci) in z.iter_mut().zip(col) {
                    *zi += dj * ci;
                }
            }
        }
        let mut r = vec![0.0; q];
        for i in (0..q).rev() {
            let mut acc = d[i];
            for (jj, rj) in r.iter().enumerate().skip(i + 1) {
                acc -= self.r[jj][i] * rj;
            }
            r[i] = acc / self.r[i][i];
        }
        let dz: f64 = d[q..].iter().map(|v| v * v).sum();
        (z, r, dz)
    }

    fn rotate_j(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let (lo, hi) = self.j.split_at_mut(b);
        let ja = &mut lo[a];
        let jb = &mut hi[0];
        for (x, y) in ja.iter_mut().zip(jb.iter_mut()) {
            let (xa, yb) = (*x, *y);
            *x = c * xa + s * yb;
            *y = -s * xa + c * yb;
        }
    }

    fn add(&mut self, k: usize, mut d: Vec<f64>, mult: f64) {
        let q = self.q();
        for jj in (q + 1..self.n).rev() {
            if d[jj] == 0.0 {
                continue;
            }
            let h = d[jj - 1].hypot(d[jj]);
            let (c, s) = (d[jj - 1] / h, d[jj] / h);
            d[jj - 1] = h;
            d[jj] = 0.0;
            self.rotate_j(jj - 1, jj, c, s);
        }
        let mut col = vec![0.0; self.n];
        col[..=q].copy_from_slice(&d[..=q]);
        self.r.push(col);
        self.active.push(k);
        self.u.push(mult);
    }

    fn drop(&mut self, pos: usize) {
        self.r.remove(pos);
        self.active.remove(pos);
        self.u.remove(pos);
        let q = self.q();
        for jj in pos..q {
            let a = self.r[jj][jj];
            let b = self.r[jj][jj + 1];
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for m in jj..q {
                let (x, y) = (self.r[m][jj], self.r[m][jj + 1]);
                self.r[m][jj] = c * x + s * y;
                self.r[m][jj + 1] = -s * x + c * y;
            }
            self.rotate_j(jj, jj + 1, c, s);
        }
    }

    fn objective(&self) -> f64 {
        self.p.objective(&self.x)
    }
}

const DEPENDENT: f64 = 1e-24;

/// Solves the problem. `Err` only on malformed input or numerical breakdown.
pub fn solve(p: &QpProblem) -> Result<QpOutcome> {
    let n = p.dim();
    if p.hessian_diag.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(invalid("hessian_diag", "entries must be positive and finite"));
    }
    if p.linear.len() != n || p.rows.len() != p.rhs.len() || p.rows.len() != p.equality.len() {
        return Err(invalid("qp", "inconsistent sizes"));
    }
    if p.rows.iter().any(|r| r.len() != n) {
        return Err(invalid("rows", "constraint width differs from dimension"));
    }
    let m = p.rows.len();
    let norms: Vec<f64> = p.rows.iter().map(|r| dot(r, r).sqrt()).collect();
    let mut st = State {
        p,
        n,
        j: (0..n)
            .map(|i| {
                let mut col = vec![0.0; n];
                col[i] = 1.0 / p.hessian_diag[i].sqrt();
                col
            })
            .collect(),
        r: Vec::new(),
        active: Vec::new(),
        u: Vec::new(),
        x: p.linear.iter().zip(&p.hessian_diag).map(|(c, g)| -c / g).collect(),
    };
    let viol_tol = |k: usize, x: &[f64]| {
        let xs = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        1e-11 * (1.0f64).max(p.rhs[k].abs()).max(norms[k] * xs)
    };
    let cap_hit = |st: &State| p.objective_cap.is_some_and(|c| st.objective() > c);
    let mut iterations = 0usize;
    let limit = 20 * (m + n) + 200;

    if (0..m).any(|k| !p.equality[k] && norms[k] == 0.0 && p.rhs[k] < -1e-12) {
        return Ok(QpOutcome::Infeasible);
    }

    // equalities are added first and never dropped
    for k in (0..m).filter(|&k| p.equality[k]) {
        if norms[k] == 0.0 {
            if p.rhs[k].abs() > 1e-12 {
                return Ok(QpOutcome::Infeasible);
            }
            continue;
        }
        let d = st.jt_times(k);
        let (z, r, dz) = st.step_dirs(&d);
        let s = st.slack(k);
        let dn: f64 = d.iter().map(|v| v * v).sum();
        if dz <= DEPENDENT * dn {
            if s.abs() > viol_tol(k, &st.x) {
                return Ok(QpOutcome::Infeasible);
            }
            continue;
        }
        let t = -s / dz;
        for (xi, zi) in st.x.iter_mut().zip(&z) {
            *xi += t * zi;
        }
        for (ui, ri) in st.u.iter_mut().zip(&r) {
            *ui -= t * ri;
        }
        st.add(k, d, t);
        iterations += 1;
    }

    loop {
        if cap_hit(&st) {
            return Ok(QpOutcome::Infeasible);
        }
        let mut pick: Option<(usize, f64)> = None;
        for k in 0..m {
            if p.equality[k] || norms[k] == 0.0 || st.active.contains(&k) {
                continue;
            }
            let s = st.slack(k);
            if s < -viol_tol(k, &st.x) {
                let scaled = s / norms[k];
                if pick.is_none_or(|(_, b)| scaled < b) {
                    pick = Some((k, scaled));
                }
            }
        }
        let Some((k, _)) = pick else { break };
        let mut s_k = st.slack(k);
        let mut u_k = 0.0;
        loop {
            iterations += 1;
            if iterations > limit {
                return Err(Error::Solver("QP iteration limit reached".into()));
            }
            let d = st.jt_times(k);
            let (z, r, dz) = st.step_dirs(&d);
            let mut t1 = f64::INFINITY;
            let mut drop_pos = None;
            for (pos, (&a, &rj)) in st.active.iter().zip(&r).enumerate() {
                if !p.equality[a] && rj > 0.0 {
                    let ratio = st.u[pos] / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        drop_pos = Some(pos);
                    }
                }
            }
            let dn: f64 = d.iter().map(|v| v * v).sum();
            let t2 = if dz > DEPENDENT * dn { -s_k / dz } else { f64::INFINITY };
            if t1.is_infinite() && t2.is_infinite() {
                return Ok(QpOutcome::Infeasible);
            }
            if t2.is_infinite() {
                for (ui, ri) in st.u.iter_mut().zip(&r) {
                    *ui -= t1 * ri;
                }
                u_k += t1;
                st.drop(drop_pos.unwrap());
                continue;
            }
            let t = t1.min(t2);
            for (xi, zi) in st.x.iter_mut().zip(&z) {
                *xi += t * zi;
            }
            for (ui, ri) in st.u.iter_mut().zip(&r) {
                *ui -= t * ri;
            }
            u_k += t;
            if t2 <= t1 {
                st.add(k, d, u_k);
                break;
            }
            st.drop(drop_pos.unwrap());
            if cap_hit(&st) {
                return Ok(QpOutcome::Infeasible);
            }
            s_k = st.slack(k);
        }
    }

    if st.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite QP iterate".into()));
    }
    let mut multipliers = vec![0.0; m];
    for (&a, &ua) in st.active.iter().zip(&st.u) {
        multipliers[a] = ua;
    }
    Ok(QpOutcome::Optimal(QpSolution {
        objective: st.objective(),
        x: st.x,
        multipliers,
        iterations,
    }))
}
