//! Dense primal-dual interior-point solver for small semidefinite programs in
//! LMI form:
//!
//! ```text
//! minimize    c' y
//! subject to  E y = b
//!             S_j(y) = C_j + sum_i y_i B_ji  is PSD   for every block j
//! ```
//!
//! The dual is `max b' lambda - sum_j <C_j, X_j>` with
//! `sum_j A_j^*(X_j) + E' lambda = c`, `X_j` PSD. Search directions use
//! Nesterov-Todd scaling with Mehrotra's predictor-corrector; the reduced
//! system in `y` is solved by Cholesky with a regularization fallback and the
//! equality rows are eliminated through their Schur complement.

use std::io::{self, Write};

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

/// Upper-triangle entry of a constant matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

pub use crate::poly::LinearEntry;

/// One PSD constraint `C + sum_i y_i B_i`. Only upper-triangle entries
/// (`row <= col`) are stored; the lower triangle is implied by symmetry.
#[derive(Clone, Debug, Default)]
pub struct LmiBlock {
    pub size: usize,
    pub constant: Vec<ConstEntry>,
    pub entries: Vec<LinearEntry>,
}

impl LmiBlock {
    pub fn new(size: usize) -> Self {
        LmiBlock {
            size,
            constant: Vec::new(),
            entries: Vec::new(),
        }
    }

    pub fn add_constant(&mut self, row: usize, col: usize, value: f64) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.constant.push(ConstEntry { row, col, value });
    }

    pub fn add_entry(&mut self, row: usize, col: usize, var: usize, coef: f64) {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        self.entries.push(LinearEntry { row, col, var, coef });
    }

    pub fn constant_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for e in &self.constant {
            m[(e.row, e.col)] += e.value;
        }
        symmetrize_upper(&mut m);
        m
    }

    /// `C + sum_i y_i B_i`.
    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for e in &self.constant {
            m[(e.row, e.col)] += e.value;
        }
        for e in &self.entries {
            m[(e.row, e.col)] += e.coef * y[e.var];
        }
        symmetrize_upper(&mut m);
        m
    }

    /// Linear part only, `sum_i y_i B_i`.
    pub fn apply(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for e in &self.entries {
            m[(e.row, e.col)] += e.coef * y[e.var];
        }
        symmetrize_upper(&mut m);
        m
    }

    /// Accumulates the adjoint `<B_i, X>` into `out`.
    pub fn adjoint_into(&self, x: &DMatrix<f64>, out: &mut [f64]) {
        for e in &self.entries {
            let f = if e.row == e.col { 1.0 } else { 2.0 };
            out[e.var] += f * e.coef * x[(e.row, e.col)];
        }
    }
}

fn symmetrize_upper(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for c in 0..n {
        for r in c + 1..n {
            m[(r, c)] = m[(c, r)];
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub cost: Vec<f64>,
    /// Equality constraints, one row per constraint.
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

impl SdpProblem {
    pub fn new(num_vars: usize) -> Self {
        SdpProblem {
            num_vars,
            cost: vec![0.0; num_vars],
            eq_matrix: DMatrix::zeros(0, num_vars),
            eq_rhs: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn add_equality(&mut self, row: &[f64], rhs: f64) {
        assert_eq!(row.len(), self.num_vars);
        let k = self.eq_matrix.nrows();
        self.eq_matrix = self.eq_matrix.clone().insert_row(k, 0.0);
        for (j, v) in row.iter().enumerate() {
            self.eq_matrix[(k, j)] = *v;
        }
        self.eq_rhs.push(rhs);
    }

    /// Appends many sparse equality rows at once.
    pub fn add_sparse_equalities(&mut self, rows: &[(Vec<(usize, f64)>, f64)]) {
        let k = self.eq_matrix.nrows();
        let mut m = DMatrix::zeros(k + rows.len(), self.num_vars);
        m.rows_mut(0, k).copy_from(&self.eq_matrix);
        for (r, (row, rhs)) in rows.iter().enumerate() {
            for &(j, v) in row {
                m[(k + r, j)] += v;
            }
            self.eq_rhs.push(*rhs);
        }
        self.eq_matrix = m;
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.size).collect()
    }

    pub fn num_equalities(&self) -> usize {
        self.eq_matrix.nrows()
    }

    fn validate(&self) -> Result<(), String> {
        if self.cost.len() != self.num_vars {
            return Err("cost length differs from variable count".into());
        }
        if self.eq_matrix.ncols() != self.num_vars || self.eq_matrix.nrows() != self.eq_rhs.len() {
            return Err("equality dimensions inconsistent".into());
        }
        for (j, b) in self.blocks.iter().enumerate() {
            if b.size == 0 {
                return Err(format!("block {j} is empty"));
            }
            for e in &b.entries {
                if e.var >= self.num_vars || e.row >= b.size || e.col >= b.size {
                    return Err(format!("block {j} entry out of range"));
                }
            }
            for e in &b.constant {
                if e.row >= b.size || e.col >= b.size {
                    return Err(format!("block {j} constant out of range"));
                }
            }
        }
        Ok(())
    }

    /// Plain-text dump: header, cost, equality triplets, then one section per
    /// block listing `var row col coef` (`const` for the constant term).
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "sdp vars {} equalities {} blocks {}",
            self.num_vars,
            self.num_equalities(),
            self.blocks.len()
        )?;
        let sizes: Vec<String> = self.blocks.iter().map(|b| b.size.to_string()).collect();
        writeln!(w, "block_sizes {}", sizes.join(" "))?;
        writeln!(w, "cost")?;
        for (i, c) in self.cost.iter().enumerate() {
            if *c != 0.0 {
                writeln!(w, "{i} {c:e}")?;
            }
        }
        writeln!(w, "equalities")?;
        for r in 0..self.eq_matrix.nrows() {
            for c in 0..self.num_vars {
                let v = self.eq_matrix[(r, c)];
                if v != 0.0 {
                    writeln!(w, "{r} {c} {v:e}")?;
                }
            }
        }
        writeln!(w, "rhs")?;
        for (r, v) in self.eq_rhs.iter().enumerate() {
            writeln!(w, "{r} {v:e}")?;
        }
        for (j, b) in self.blocks.iter().enumerate() {
            writeln!(w, "block {j} size {}", b.size)?;
            for e in &b.constant {
                writeln!(w, "const {} {} {:e}", e.row, e.col, e.value)?;
            }
            for e in &b.entries {
                writeln!(w, "{} {} {} {:e}", e.var, e.row, e.col, e.coef)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    SlowProgress,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

impl SolverStatus {
    /// Whether the returned iterate is meant to be used as a solution.
    pub fn is_usable(self) -> bool {
        matches!(self, SolverStatus::Optimal | SolverStatus::SlowProgress)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SdpOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
    /// Consecutive iterations of insufficient merit decrease before giving up.
    pub stall_window: usize,
    /// Relative merit decrease below which an iteration counts as stalled.
    pub stall_rel_improvement: f64,
    /// Consecutive iterations of growing infeasibility before reporting
    /// `Infeasible`.
    pub divergence_window: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            gap_tol: 1e-9,
            feas_tol: 1e-9,
            max_iter: 200,
            step_fraction: 0.98,
            stall_window: 5,
            stall_rel_improvement: 1e-2,
            divergence_window: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// `S_j(y)` per block.
    pub block_values: Vec<DMatrix<f64>>,
    /// Dual matrices `X_j` per block.
    pub block_duals: Vec<DMatrix<f64>>,
    /// Multipliers of the equality rows (zero for rows removed as redundant).
    pub eq_duals: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|primal - dual| / (1 + |primal|)`.
    pub gap: f64,
    /// Primal infeasibility: `max(||E y - b||_inf, max_j ||C_j + A_j(y) - S_j||_F)`.
    pub primal_residual: f64,
    /// Dual infeasibility `||A^*(X) + E' lambda - c||_inf`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SolverStatus,
    /// Merit (`gap + relative residuals`) at the starting point.
    pub initial_merit: f64,
    /// Merit at the returned iterate.
    pub merit: f64,
}

impl SdpSolution {
    pub fn objective(&self) -> f64 {
        self.primal_objective
    }
}

/// Row-reduced equality system with redundant rows removed.
struct Equalities {
    e: DMatrix<f64>,
    b: DVector<f64>,
    kept: Vec<usize>,
}

fn presolve_equalities(e: &DMatrix<f64>, b: &[f64]) -> Result<Equalities, ()> {
    // modified Gram-Schmidt over rows to detect dependence
    let m = e.nrows();
    let n = e.ncols();
    let mut basis: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut kept = Vec::new();
    let scale = e.amax().max(1.0);
    for r in 0..m {
        let mut v: DVector<f64> = e.row(r).transpose();
        let mut rhs = b[r];
        for (u, ub) in &basis {
            let p = u.dot(&v);
            v.axpy(-p, u, 1.0);
            rhs -= p * ub;
        }
        let norm = v.norm();
        if norm > 1e-10 * scale * (1.0 + e.row(r).norm()) {
            basis.push((v / norm, rhs / norm));
            kept.push(r);
        } else if rhs.abs() > 1e-8 * (1.0 + b[r].abs()) {
            return Err(());
        }
    }
    let mut er = DMatrix::zeros(kept.len(), n);
    let mut br = DVector::zeros(kept.len());
    for (i, &r) in kept.iter().enumerate() {
        er.set_row(i, &e.row(r));
        br[i] = b[r];
    }
    Ok(Equalities { e: er, b: br, kept })
}

/// Per-variable entry lists of one block: `full` holds both triangles, `half`
/// the upper triangle with off-diagonal coefficients doubled.
struct BlockStructure {
    size: usize,
    vars: Vec<(usize, Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>)>,
}

fn block_structure(block: &LmiBlock) -> BlockStructure {
    type Lists = (Vec<(usize, usize, f64)>, Vec<(usize, usize, f64)>);
    let mut by_var: std::collections::BTreeMap<usize, Lists> = std::collections::BTreeMap::new();
    for e in &block.entries {
        let (full, half) = by_var.entry(e.var).or_default();
        full.push((e.row, e.col, e.coef));
        if e.row != e.col {
            full.push((e.col, e.row, e.coef));
            half.push((e.row, e.col, 2.0 * e.coef));
        } else {
            half.push((e.row, e.col, e.coef));
        }
    }
    BlockStructure {
        size: block.size,
        vars: by_var.into_iter().map(|(v, (f, h))| (v, f, h)).collect(),
    }
}

/// NT scaling data of one block: `W = G G'`, `G' S G = G^{-1} X G^{-T} = diag(d)`.
struct Scaling {
    g: DMatrix<f64>,
    g_inv: DMatrix<f64>,
    w: DMatrix<f64>,
    d: DVector<f64>,
}

fn nt_scaling(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<Scaling> {
    let lx = x.clone().cholesky()?.l();
    let ls = s.clone().cholesky()?.l();
    let prod = ls.transpose() * &lx;
    let svd = prod.svd(true, true);
    let u_v_t = svd.v_t?;
    let v = u_v_t.transpose();
    let d = svd.singular_values;
    if d.iter().any(|&di| !(di > 0.0) || !di.is_finite()) {
        return None;
    }
    let n = d.len();
    let mut g = &lx * &v;
    for j in 0..n {
        let f = 1.0 / d[j].sqrt();
        g.column_mut(j).scale_mut(f);
    }
    let lx_inv = lx.solve_lower_triangular(&DMatrix::identity(n, n))?;
    let mut g_inv = v.transpose() * lx_inv;
    for i in 0..n {
        let f = d[i].sqrt();
        g_inv.row_mut(i).scale_mut(f);
    }
    let w = &g * g.transpose();
    Some(Scaling { g, g_inv, w, d })
}

/// Largest `alpha` with `M + alpha * dM` PSD (infinite if unbounded).
fn max_step(m: &DMatrix<f64>, dm: &DMatrix<f64>) -> f64 {
    let l = match m.clone().cholesky() {
        Some(c) => c.l(),
        None => return 0.0,
    };
    let n = m.nrows();
    let linv = match l.solve_lower_triangular(&DMatrix::identity(n, n)) {
        Some(v) => v,
        None => return 0.0,
    };
    let mut t = &linv * dm * linv.transpose();
    t = (&t + t.transpose()) * 0.5;
    let min_eig = t.symmetric_eigenvalues().min();
    if min_eig >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min_eig
    }
}

fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

#[derive(Clone)]
struct Iterate {
    y: DVector<f64>,
    lam: DVector<f64>,
    s: Vec<DMatrix<f64>>,
    x: Vec<DMatrix<f64>>,
}

struct Measures {
    pobj: f64,
    dobj: f64,
    gap: f64,
    pres: f64,
    dres: f64,
    pres_rel: f64,
    dres_rel: f64,
    mu: f64,
    rp: Vec<DMatrix<f64>>,
    re: DVector<f64>,
    rd: DVector<f64>,
}

impl Measures {
    fn merit(&self) -> f64 {
        self.gap + self.pres_rel + self.dres_rel
    }
}

struct Solver<'a> {
    prob: &'a SdpProblem,
    eqs: Equalities,
    structs: Vec<BlockStructure>,
    consts: Vec<DMatrix<f64>>,
    c: DVector<f64>,
    nu: f64,
    norm_b: f64,
    norm_c: f64,
    norm_const: f64,
}

impl<'a> Solver<'a> {
    fn measure(&self, it: &Iterate) -> Measures {
        let y = it.y.as_slice();
        let mut rp = Vec::with_capacity(self.prob.blocks.len());
        let mut rp_norm: f64 = 0.0;
        let mut rd = -self.c.clone();
        let mut xs = 0.0;
        let mut x_const = 0.0;
        for (j, block) in self.prob.blocks.iter().enumerate() {
            let r = block.eval(y) - &it.s[j];
            rp_norm = rp_norm.max(r.norm());
            rp.push(r);
            block.adjoint_into(&it.x[j], rd.as_mut_slice());
            xs += frob_dot(&it.x[j], &it.s[j]);
            x_const += frob_dot(&it.x[j], &self.consts[j]);
        }
        let re = &self.eqs.e * &it.y - &self.eqs.b;
        rd += self.eqs.e.transpose() * &it.lam;
        let pobj = self.c.dot(&it.y);
        let dobj = self.eqs.b.dot(&it.lam) - x_const;
        let gap = (pobj - dobj).abs().max(xs.abs()) / (1.0 + pobj.abs());
        let re_norm = re.amax();
        let pres = rp_norm.max(re_norm);
        let dres = rd.amax();
        Measures {
            pobj,
            dobj,
            gap,
            pres,
            dres,
            pres_rel: (rp_norm / (1.0 + self.norm_const)).max(re_norm / (1.0 + self.norm_b)),
            dres_rel: dres / (1.0 + self.norm_c),
            mu: xs / self.nu,
            rp,
            re,
            rd,
        }
    }

    /// Reduced Hessian `H_ik = sum_j <B_ji, W_j B_jk W_j>`.
    fn schur(&self, scal: &[Scaling]) -> DMatrix<f64> {
        let m = self.prob.num_vars;
        let mut h = DMatrix::zeros(m, m);
        for (bs, sc) in self.structs.iter().zip(scal) {
            let n = bs.size;
            let w = sc.w.as_slice();
            // <B_i, W B_k W> summed over the upper triangle of B_i only; the
            // full B_k makes the inner sum symmetric in (a, b)
            for (ii, (vi, _, ei)) in bs.vars.iter().enumerate() {
                for (vk, ek, _) in &bs.vars[ii..] {
                    let mut acc = 0.0;
                    for &(a, b, v) in ei {
                        let mut inner = 0.0;
                        for &(c, d, u) in ek {
                            inner += u * w[a + c * n] * w[b + d * n];
                        }
                        acc += v * inner;
                    }
                    h[(*vi, *vk)] += acc;
                    if vi != vk {
                        h[(*vk, *vi)] += acc;
                    }
                }
            }
        }
        h
    }

    fn solve(&self, opts: &SdpOptions) -> SdpSolution {
        let prob = self.prob;
        let nb = prob.blocks.len();
        let m = prob.num_vars;
        let xi = 1.0f64.max(self.norm_b).max(self.norm_c).max(self.norm_const);
        let mut it = Iterate {
            y: DVector::zeros(m),
            lam: DVector::zeros(self.eqs.e.nrows()),
            s: prob
                .blocks
                .iter()
                .map(|b| DMatrix::identity(b.size, b.size) * xi)
                .collect(),
            x: prob
                .blocks
                .iter()
                .map(|b| DMatrix::identity(b.size, b.size) * xi)
                .collect(),
        };

        let mut meas = self.measure(&it);
        let initial_merit = meas.merit();
        let mut best = (it.clone(), meas.merit(), 0usize);
        let mut stall = 0usize;
        let mut diverge = 0usize;
        let mut prev_infeas = meas.pres_rel.max(meas.dres_rel);
        let mut status = SolverStatus::MaxIter;
        let mut iterations = 0;

        for iter in 0..=opts.max_iter {
            if meas.gap <= opts.gap_tol && meas.pres_rel <= opts.feas_tol && meas.dres_rel <= opts.feas_tol
            {
                status = SolverStatus::Optimal;
                best = (it.clone(), meas.merit(), iter);
                break;
            }
            if iter == opts.max_iter {
                break;
            }
            iterations = iter + 1;

            let scal: Option<Vec<Scaling>> = (0..nb).map(|j| nt_scaling(&it.x[j], &it.s[j])).collect();
            let Some(scal) = scal else {
                status = SolverStatus::NumericalFailure;
                break;
            };
            let h = self.schur(&scal);
            let Some(kkt) = Kkt::factor(h, &self.eqs.e) else {
                status = SolverStatus::NumericalFailure;
                break;
            };

            // predictor
            let r_aff: Vec<DMatrix<f64>> = scal
                .iter()
                .map(|sc| {
                    let n = sc.d.len();
                    DMatrix::from_fn(n, n, |i, j| if i == j { -sc.d[i] * sc.d[i] } else { 0.0 })
                })
                .collect();
            let Some(dir_aff) = self.direction(&kkt, &scal, &meas, &r_aff) else {
                status = SolverStatus::NumericalFailure;
                break;
            };
            let (ap_aff, ad_aff) = self.step_lengths(&it, &dir_aff, 1.0);
            let mut mu_aff = 0.0;
            for j in 0..nb {
                let xn = &it.x[j] + &dir_aff.dx[j] * ad_aff;
                let sn = &it.s[j] + &dir_aff.ds[j] * ap_aff;
                mu_aff += frob_dot(&xn, &sn);
            }
            mu_aff /= self.nu;
            let sigma = if meas.mu > 0.0 {
                (mu_aff / meas.mu).clamp(0.0, 1.0).powi(3)
            } else {
                0.0
            };

            // corrector
            let r_cor: Vec<DMatrix<f64>> = scal
                .iter()
                .enumerate()
                .map(|(j, sc)| {
                    let n = sc.d.len();
                    let dxs = &sc.g_inv * &dir_aff.dx[j] * sc.g_inv.transpose();
                    let dss = sc.g.transpose() * &dir_aff.ds[j] * &sc.g;
                    let prod = &dxs * &dss;
                    let sym = (&prod + prod.transpose()) * 0.5;
                    let mut r = -sym;
                    for i in 0..n {
                        r[(i, i)] += sigma * meas.mu - sc.d[i] * sc.d[i];
                    }
                    r
                })
                .collect();
            let Some(dir) = self.direction(&kkt, &scal, &meas, &r_cor) else {
                status = SolverStatus::NumericalFailure;
                break;
            };
            let (ap, ad) = self.step_lengths(&it, &dir, opts.step_fraction);
            it.y.axpy(ap, &dir.dy, 1.0);
            it.lam.axpy(ad, &dir.dlam, 1.0);
            for j in 0..nb {
                it.s[j] += &dir.ds[j] * ap;
                it.x[j] += &dir.dx[j] * ad;
                let sj = &it.s[j];
                it.s[j] = (sj + sj.transpose()) * 0.5;
                let xj = &it.x[j];
                it.x[j] = (xj + xj.transpose()) * 0.5;
            }
            meas = self.measure(&it);
            let merit = meas.merit();
            if !merit.is_finite() {
                status = SolverStatus::NumericalFailure;
                break;
            }

            if merit < best.1 * (1.0 - opts.stall_rel_improvement) {
                stall = 0;
            } else {
                stall += 1;
            }
            if merit < best.1 {
                best = (it.clone(), merit, iter + 1);
            }
            let infeas = meas.pres_rel.max(meas.dres_rel);
            if infeas > prev_infeas && infeas > opts.feas_tol {
                diverge += 1;
            } else {
                diverge = 0;
            }
            prev_infeas = infeas;
            if diverge >= opts.divergence_window {
                status = SolverStatus::Infeasible;
                break;
            }
            if stall >= opts.stall_window {
                status = SolverStatus::SlowProgress;
                break;
            }
        }

        let (it, _, _) = best;
        let meas = self.measure(&it);
        let mut eq_duals = vec![0.0; prob.num_equalities()];
        for (i, &r) in self.eqs.kept.iter().enumerate() {
            eq_duals[r] = it.lam[i];
        }
        let block_values = prob.blocks.iter().map(|b| b.eval(it.y.as_slice())).collect();
        SdpSolution {
            y: it.y.as_slice().to_vec(),
            block_values,
            block_duals: it.x.clone(),
            eq_duals,
            primal_objective: meas.pobj,
            dual_objective: meas.dobj,
            gap: meas.gap,
            primal_residual: meas.pres,
            dual_residual: meas.dres,
            iterations,
            status,
            initial_merit,
            merit: meas.merit(),
        }
    }

    fn direction(
        &self,
        kkt: &Kkt,
        scal: &[Scaling],
        meas: &Measures,
        r_scaled: &[DMatrix<f64>],
    ) -> Option<Direction> {
        let nb = self.prob.blocks.len();
        let mut rc = Vec::with_capacity(nb);
        let mut g = meas.rd.clone();
        for j in 0..nb {
            let sc = &scal[j];
            let n = sc.d.len();
            // Lyapunov solve diag(d) Z + Z diag(d) = 2 R
            let z = DMatrix::from_fn(n, n, |a, b| 2.0 * r_scaled[j][(a, b)] / (sc.d[a] + sc.d[b]));
            let rcj = &sc.g * z * sc.g.transpose();
            let t = &rcj - &sc.w * &meas.rp[j] * &sc.w;
            self.prob.blocks[j].adjoint_into(&t, g.as_mut_slice());
            rc.push(rcj);
        }
        let (dy, dlam) = kkt.solve(&g, &(-&meas.re))?;
        let mut ds = Vec::with_capacity(nb);
        let mut dx = Vec::with_capacity(nb);
        for j in 0..nb {
            let dsj = self.prob.blocks[j].apply(dy.as_slice()) + &meas.rp[j];
            let dxj = &rc[j] - &scal[j].w * &dsj * &scal[j].w;
            dx.push((&dxj + dxj.transpose()) * 0.5);
            ds.push(dsj);
        }
        Some(Direction { dy, dlam, ds, dx })
    }

    fn step_lengths(&self, it: &Iterate, dir: &Direction, fraction: f64) -> (f64, f64) {
        let mut ap = f64::INFINITY;
        let mut ad = f64::INFINITY;
        for j in 0..self.prob.blocks.len() {
            ap = ap.min(max_step(&it.s[j], &dir.ds[j]));
            ad = ad.min(max_step(&it.x[j], &dir.dx[j]));
        }
        ((fraction * ap).min(1.0), (fraction * ad).min(1.0))
    }
}

struct Direction {
    dy: DVector<f64>,
    dlam: DVector<f64>,
    ds: Vec<DMatrix<f64>>,
    dx: Vec<DMatrix<f64>>,
}

const KKT_REFINEMENTS: usize = 3;

/// Factorization of `[H, -E'; E, 0]` via Cholesky of `H` and of `E H^-1 E'`.
struct Kkt {
    h_mat: DMatrix<f64>,
    h: Llt<f64>,
    e: DMatrix<f64>,
    hinv_et: DMatrix<f64>,
    schur: Option<Llt<f64>>,
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Cholesky with a growing diagonal shift when the matrix is not numerically
/// positive definite.
fn regularized_llt(mut a: Mat<f64>) -> Option<Llt<f64>> {
    let n = a.nrows();
    let dmax = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut reg = 0.0;
    loop {
        if let Ok(c) = a.llt(Side::Lower) {
            return Some(c);
        }
        let next = if reg == 0.0 { 1e-14 * dmax } else { reg * 100.0 };
        if next > 1e-4 * dmax {
            return None;
        }
        for i in 0..n {
            a[(i, i)] += next - reg;
        }
        reg = next;
    }
}

impl Kkt {
    fn factor(h: DMatrix<f64>, e: &DMatrix<f64>) -> Option<Kkt> {
        let chol = regularized_llt(to_faer(&h))?;
        let hinv_et = from_faer(&chol.solve(to_faer(&e.transpose())));
        let schur = if e.nrows() > 0 {
            let s = e * &hinv_et;
            let s = (&s + s.transpose()) * 0.5;
            Some(regularized_llt(to_faer(&s))?)
        } else {
            None
        };
        Some(Kkt {
            h_mat: h,
            h: chol,
            e: e.clone(),
            hinv_et,
            schur,
        })
    }

    /// Solves `H dy - E' dlam = g`, `E dy = f`, refining against the
    /// unregularized `H` (near the optimum `H` is badly conditioned and an
    /// unrefined solution leaves visible dual infeasibility).
    fn solve(&self, g: &DVector<f64>, f: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let (mut dy, mut dlam) = self.solve_once(g, f);
        let scale = g.amax().max(f.amax()).max(1e-300);
        let mut prev = f64::INFINITY;
        for _ in 0..KKT_REFINEMENTS {
            let mut r1 = g - &self.h_mat * &dy;
            if !dlam.is_empty() {
                r1 += self.e.transpose() * &dlam;
            }
            let r2 = f - &self.e * &dy;
            let res = r1.amax().max(r2.amax());
            if !(res < prev) || res <= 1e-15 * scale {
                break;
            }
            prev = res;
            let (cy, cl) = self.solve_once(&r1, &r2);
            dy += cy;
            dlam += cl;
        }
        if dy.iter().chain(dlam.iter()).all(|v| v.is_finite()) {
            Some((dy, dlam))
        } else {
            None
        }
    }

    fn solve_once(&self, g: &DVector<f64>, f: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let solve_vec = |c: &Llt<f64>, v: &DVector<f64>| {
            let x = c.solve(Mat::from_fn(v.len(), 1, |i, _| v[i]));
            DVector::from_fn(v.len(), |i, _| x[(i, 0)])
        };
        let hg = solve_vec(&self.h, g);
        match &self.schur {
            None => (hg, DVector::zeros(0)),
            Some(s) => {
                let rhs = f - &self.e * &hg;
                let dlam = solve_vec(s, &rhs);
                (hg + &self.hinv_et * &dlam, dlam)
            }
        }
    }
}

/// Solves the SDP. Never panics on numerical trouble; the status field reports
/// what happened and the best iterate seen is returned.
pub fn solve_sdp(prob: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, String> {
    prob.validate()?;
    let eqs = match presolve_equalities(&prob.eq_matrix, &prob.eq_rhs) {
        Ok(e) => e,
        Err(()) => {
            return Ok(SdpSolution {
                y: vec![0.0; prob.num_vars],
                block_values: prob.blocks.iter().map(|b| b.constant_matrix()).collect(),
                block_duals: prob
                    .blocks
                    .iter()
                    .map(|b| DMatrix::zeros(b.size, b.size))
                    .collect(),
                eq_duals: vec![0.0; prob.num_equalities()],
                primal_objective: f64::NAN,
                dual_objective: f64::NAN,
                gap: f64::INFINITY,
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                iterations: 0,
                status: SolverStatus::Infeasible,
                initial_merit: f64::INFINITY,
                merit: f64::INFINITY,
            })
        }
    };
    let structs = prob.blocks.iter().map(block_structure).collect();
    let consts: Vec<DMatrix<f64>> = prob.blocks.iter().map(|b| b.constant_matrix()).collect();
    let norm_const = consts.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let c = DVector::from_column_slice(&prob.cost);
    let solver = Solver {
        prob,
        norm_b: eqs.b.amax(),
        norm_c: c.amax(),
        norm_const,
        eqs,
        structs,
        consts,
        c,
        nu: prob.blocks.iter().map(|b| b.size as f64).sum::<f64>().max(1.0),
    };
    Ok(solver.solve(opts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> SdpProblem {
        // min y  s.t. [[1, y], [y, 1]] PSD
        let mut p = SdpProblem::new(1);
        p.cost[0] = 1.0;
        let mut b = LmiBlock::new(2);
        b.add_constant(0, 0, 1.0);
        b.add_constant(1, 1, 1.0);
        b.add_entry(0, 1, 0, 1.0);
        p.blocks.push(b);
        p
    }

    #[test]
    fn psd_boundary_two_by_two() {
        let sol = solve_sdp(&two_by_two(), &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.y[0] + 1.0).abs() < 1e-7, "y = {}", sol.y[0]);
        assert!((sol.objective() + 1.0).abs() < 1e-7);
    }

    #[test]
    fn linear_program_via_scalar_blocks() {
        // min x1 + 2 x2  s.t. x1 + x2 = 1, x1 >= 0, x2 >= 0  -> x = (1, 0)
        let mut p = SdpProblem::new(2);
        p.cost = vec![1.0, 2.0];
        p.add_equality(&[1.0, 1.0], 1.0);
        for i in 0..2 {
            let mut b = LmiBlock::new(1);
            b.add_entry(0, 0, i, 1.0);
            p.blocks.push(b);
        }
        let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.objective() - 1.0).abs() < 1e-8);
        assert!((sol.y[0] - 1.0).abs() < 1e-7);
        assert!(sol.gap <= 1e-9);
    }

    #[test]
    fn redundant_equalities_are_removed() {
        let mut p = SdpProblem::new(2);
        p.cost = vec![1.0, 2.0];
        p.add_equality(&[1.0, 1.0], 1.0);
        p.add_equality(&[2.0, 2.0], 2.0);
        for i in 0..2 {
            let mut b = LmiBlock::new(1);
            b.add_entry(0, 0, i, 1.0);
            p.blocks.push(b);
        }
        let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Optimal);
        assert!((sol.objective() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = SdpProblem::new(1);
        p.add_equality(&[1.0], 1.0);
        p.add_equality(&[1.0], 2.0);
        let mut b = LmiBlock::new(1);
        b.add_entry(0, 0, 0, 1.0);
        p.blocks.push(b);
        let sol = solve_sdp(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SolverStatus::Infeasible);
    }

    #[test]
    fn invalid_problem_is_rejected() {
        let mut p = two_by_two();
        p.blocks[0].add_entry(0, 5, 0, 1.0);
        assert!(solve_sdp(&p, &SdpOptions::default()).is_err());
    }

    #[test]
    fn deterministic_repeat() {
        let a = solve_sdp(&two_by_two(), &SdpOptions::default()).unwrap();
        let b = solve_sdp(&two_by_two(), &SdpOptions::default()).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.objective().to_bits(), b.objective().to_bits());
    }

    #[test]
    fn merit_never_exceeds_start() {
        let sol = solve_sdp(&two_by_two(), &SdpOptions::default()).unwrap();
        assert!(sol.merit <= sol.initial_merit);
    }

    #[test]
    fn dump_lists_blocks() {
        let mut buf = Vec::new();
        two_by_two().write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("sdp vars 1 equalities 0 blocks 1\n"));
        assert!(text.contains("block 0 size 2"));
        assert!(text.contains("const 0 0 1e0"));
        assert!(text.contains("0 0 1 1e0"));
    }
}
