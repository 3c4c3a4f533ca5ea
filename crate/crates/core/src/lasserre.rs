//! Moment (LMI) relaxations of polynomial optimization problems over basic
//! semi-algebraic sets, the flat-extension rank certificate and minimizer
//! extraction.
//!
//! For `min f(x)` subject to `g_j(x) >= 0`, `h_k(x) = 0`, the order-`t`
//! relaxation optimizes over moment vectors `y` of degree `2t`:
//!
//! ```text
//! min L_y(f)   s.t.  y_0 = 1,  M_t(y) PSD,  M_{t - d_j}(g_j y) PSD,
//!                    L_y(x^a h_k) = 0 for |a| <= 2t - deg h_k
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{
    localizing_entries, moment_matrix, MomentVector, MonomialBasis, MultiIndex, PolyError,
    Polynomial,
};
use crate::sdp::{solve_sdp, LmiBlock, SdpOptions, SdpProblem, SdpSolution, SolverStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LasserreError {
    #[error("relaxation order {order} is below the minimum order {min}")]
    OrderTooLow { order: usize, min: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("invalid SDP: {0}")]
    InvalidSdp(String),
    #[error("minimizer extraction failed: {0}")]
    ExtractionFailed(String),
}

/// `min objective` over `{x : g_j(x) >= 0, h_k(x) = 0}`.
#[derive(Clone, Debug)]
pub struct SemiAlgebraicProblem {
    pub n: usize,
    pub objective: Polynomial,
    pub inequalities: Vec<Polynomial>,
    pub equalities: Vec<Polynomial>,
}

impl SemiAlgebraicProblem {
    pub fn new(objective: Polynomial) -> Self {
        SemiAlgebraicProblem {
            n: objective.nvars(),
            objective,
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn with_inequality(mut self, g: Polynomial) -> Self {
        self.inequalities.push(g);
        self
    }

    pub fn with_equality(mut self, h: Polynomial) -> Self {
        self.equalities.push(h);
        self
    }

    /// `d_K`: the largest half-degree among objective and constraints.
    pub fn min_order(&self) -> usize {
        std::iter::once(&self.objective)
            .chain(&self.inequalities)
            .chain(&self.equalities)
            .map(Polynomial::half_degree)
            .max()
            .unwrap_or(0)
            .max(1)
    }

    fn check(&self) -> Result<(), LasserreError> {
        for p in std::iter::once(&self.objective)
            .chain(&self.inequalities)
            .chain(&self.equalities)
        {
            if p.nvars() != self.n {
                return Err(PolyError::DimensionMismatch {
                    expected: self.n,
                    got: p.nvars(),
                }
                .into());
            }
        }
        Ok(())
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for g in &self.inequalities {
            v = v.max(-g.eval(x).unwrap_or(f64::NAN));
        }
        for h in &self.equalities {
            v = v.max(h.eval(x).unwrap_or(f64::NAN).abs());
        }
        v
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RelaxationOptions {
    /// Relative singular-value threshold used for numerical ranks.
    pub rank_tol: f64,
    pub sdp: SdpOptions,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            rank_tol: 1e-3,
            sdp: SdpOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelaxationResult {
    pub order: usize,
    /// `L_y*(f)`, a lower bound on the global minimum.
    pub optimum: f64,
    pub moments: MomentVector,
    /// `rank M_s(y*)` for `s = 0..=order`.
    pub moment_matrix_ranks: Vec<usize>,
    pub certified: bool,
    /// Global minimizers; non-empty exactly when certified.
    pub minimizers: Vec<Vec<f64>>,
    /// First-order moments, usable as a heuristic when not certified.
    pub candidate: Vec<f64>,
    pub solver_status: SolverStatus,
    pub sdp: SdpSolution,
}

/// Number of singular values above `rank_tol * max(sigma_1, 1)`.
pub fn numerical_rank(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let thresh = rank_tol * sv.max().max(1.0);
    sv.iter().filter(|&&s| s > thresh).count()
}

/// Builds the order-`t` relaxation. Block 0 is the moment matrix, followed by
/// one localizing block per inequality; equality row 0 is `y_0 = 1`.
pub fn build_relaxation(prob: &SemiAlgebraicProblem, t: usize) -> Result<SdpProblem, LasserreError> {
    prob.check()?;
    let min = prob.min_order();
    if t < min {
        return Err(LasserreError::OrderTooLow { order: t, min });
    }
    let full = MonomialBasis::new(prob.n, 2 * t);
    let mut sdp = SdpProblem::new(full.len());
    for (alpha, c) in prob.objective.terms() {
        sdp.cost[full.index_of(alpha).expect("degree within 2t")] += c;
    }

    let one = Polynomial::constant(prob.n, 1.0);
    let mut moment = LmiBlock::new(full.prefix_len(t));
    moment.entries = localizing_entries(&one, t, &full)?;
    sdp.blocks.push(moment);
    for g in &prob.inequalities {
        let tg = t - g.half_degree();
        let mut block = LmiBlock::new(full.prefix_len(tg));
        block.entries = localizing_entries(g, tg, &full)?;
        sdp.blocks.push(block);
    }

    let mut rows = vec![(vec![(0usize, 1.0)], 1.0)];
    for h in &prob.equalities {
        let span = 2 * t - h.degree();
        for alpha in &full.monomials()[..full.prefix_len(span)] {
            let row: Vec<(usize, f64)> = h
                .terms()
                .map(|(g, c)| (full.index_of(&alpha.add(g)).expect("degree within 2t"), c))
                .collect();
            rows.push((row, 0.0));
        }
    }
    sdp.add_sparse_equalities(&rows);
    Ok(sdp)
}

/// Ranks of `M_s(y)` for `s = 0..=t` and whether
/// `rank M_t(y) = rank M_{t - d_k}(y)`.
pub fn check_certificate(
    moments: &MomentVector,
    t: usize,
    d_k: usize,
    rank_tol: f64,
) -> Result<(Vec<usize>, bool), LasserreError> {
    let mut ranks = Vec::with_capacity(t + 1);
    for s in 0..=t {
        ranks.push(numerical_rank(&moment_matrix(moments, s)?, rank_tol));
    }
    let top = ranks[t];
    let certified = top == 1 || (d_k <= t && top == ranks[t - d_k]);
    Ok((ranks, certified))
}

/// Recovers the `r` atoms of a flat moment matrix `M_t(y)`.
pub fn extract_minimizers(
    moments: &MomentVector,
    t: usize,
    r: usize,
) -> Result<Vec<Vec<f64>>, LasserreError> {
    let n = moments.nvars();
    let m = moment_matrix(moments, t)?;
    let s = m.nrows();
    if r == 0 || r > s {
        return Err(LasserreError::ExtractionFailed(format!("invalid rank {r}")));
    }
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    if r == 1 {
        let v = eig.eigenvectors.column(order[0]);
        if v[0].abs() < 1e-12 {
            return Err(LasserreError::ExtractionFailed(
                "dominant eigenvector has no constant component".into(),
            ));
        }
        return Ok(vec![(1..=n).map(|i| v[i] / v[0]).collect()]);
    }

    // M = V V' truncated to rank r
    let mut v = DMatrix::zeros(s, r);
    for (j, &k) in order.iter().take(r).enumerate() {
        let lam = eig.eigenvalues[k];
        if lam <= 0.0 {
            return Err(LasserreError::ExtractionFailed("non-positive eigenvalue".into()));
        }
        v.set_column(j, &(eig.eigenvectors.column(k) * lam.sqrt()));
    }

    // greedy independent rows in basis order
    let scale = v.amax().max(1e-300);
    let mut pivots = Vec::with_capacity(r);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(r);
    for i in 0..s {
        let mut w: DVector<f64> = v.row(i).transpose();
        for q in &ortho {
            let p = q.dot(&w);
            w.axpy(-p, q, 1.0);
        }
        let norm = w.norm();
        if norm > 1e-6 * scale {
            ortho.push(w / norm);
            pivots.push(i);
            if pivots.len() == r {
                break;
            }
        }
    }
    if pivots.len() < r {
        return Err(LasserreError::ExtractionFailed("could not find a monomial basis".into()));
    }
    let basis = moments.basis();
    let vp = DMatrix::from_fn(r, r, |i, j| v[(pivots[i], j)]);
    let vp_inv = vp
        .try_inverse()
        .ok_or_else(|| LasserreError::ExtractionFailed("singular pivot block".into()))?;
    let u = &v * vp_inv;

    let mut mults = Vec::with_capacity(n);
    for k in 0..n {
        let xk = MultiIndex::unit(n, k);
        let mut nk = DMatrix::zeros(r, r);
        for (j, &p) in pivots.iter().enumerate() {
            let shifted = basis.monomial_at(p).add(&xk);
            let row = basis
                .index_of(&shifted)
                .filter(|&i| i < s)
                .ok_or_else(|| LasserreError::ExtractionFailed("basis monomial too high".into()))?;
            nk.set_row(j, &u.row(row));
        }
        mults.push(nk);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut comb = DMatrix::zeros(r, r);
    for (w, nk) in weights.iter().zip(&mults) {
        comb += nk * (*w / total);
    }
    let (q, tri) = comb
        .try_schur(1e-14, 10_000)
        .ok_or_else(|| LasserreError::ExtractionFailed("Schur decomposition did not converge".into()))?
        .unpack();
    let tri_scale = tri.amax().max(1.0);
    for j in 0..r - 1 {
        if tri[(j + 1, j)].abs() > 1e-8 * tri_scale {
            return Err(LasserreError::ExtractionFailed("complex multiplication eigenvalues".into()));
        }
    }
    let mut points = Vec::with_capacity(r);
    for j in 0..r {
        let qj = q.column(j);
        let x: Vec<f64> = mults.iter().map(|nk| qj.dot(&(nk * qj))).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(LasserreError::ExtractionFailed("non-finite atom".into()));
        }
        points.push(x);
    }
    Ok(points)
}

/// Solves the order-`t` relaxation, checks the certificate and extracts
/// minimizers when it holds.
pub fn solve_relaxation(
    prob: &SemiAlgebraicProblem,
    t: usize,
    opts: &RelaxationOptions,
) -> Result<RelaxationResult, LasserreError> {
    let sdp = build_relaxation(prob, t)?;
    let sol = solve_sdp(&sdp, &opts.sdp).map_err(LasserreError::InvalidSdp)?;
    finish(prob, t, opts, sol)
}

/// Builds the certificate and extraction part of a result from an SDP solution
/// of [`build_relaxation`]`(prob, t)`.
pub fn finish(
    prob: &SemiAlgebraicProblem,
    t: usize,
    opts: &RelaxationOptions,
    sol: SdpSolution,
) -> Result<RelaxationResult, LasserreError> {
    let moments = MomentVector::new(MonomialBasis::new(prob.n, 2 * t), sol.y.clone());
    let optimum = sol.primal_objective;
    let candidate = moments.first_order();
    let (ranks, mut certified) = check_certificate(&moments, t, prob.min_order(), opts.rank_tol)?;
    certified &= sol.status.is_usable();
    let mut minimizers = Vec::new();
    if certified {
        match extract_minimizers(&moments, t, ranks[t]) {
            Ok(points) => minimizers = points,
            Err(_) => certified = false,
        }
    }
    Ok(RelaxationResult {
        order: t,
        optimum,
        moments,
        moment_matrix_ranks: ranks,
        certified,
        minimizers,
        candidate,
        solver_status: sol.status,
        sdp: sol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::dirac_moments;

    fn x(i: usize) -> Polynomial {
        Polynomial::var(2, i)
    }

    /// `min -x2` s.t. `3 + 2x2 - x1^2 - x2^2 >= 0`, `-x1 - x2 - x1 x2 >= 0`,
    /// `1 + x1 x2 >= 0`.
    fn example() -> SemiAlgebraicProblem {
        let c = |v| Polynomial::constant(2, v);
        let g1 = &(&(&c(3.0) + &x(1).scale(2.0)) - &(&x(0) * &x(0))) - &(&x(1) * &x(1));
        let g2 = &(&(-&x(0)) - &x(1)) - &(&x(0) * &x(1));
        let g3 = &c(1.0) + &(&x(0) * &x(1));
        SemiAlgebraicProblem::new(-&x(1))
            .with_inequality(g1)
            .with_inequality(g2)
            .with_inequality(g3)
    }

    #[test]
    fn numerical_rank_examples() {
        assert_eq!(numerical_rank(&DMatrix::identity(5, 5), 1e-3), 5);
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(numerical_rank(&(&v * v.transpose()), 1e-3), 1);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-2, 1e-8]));
        assert_eq!(numerical_rank(&d, 1e-3), 2);
    }

    #[test]
    fn relaxation_shapes() {
        let p = example();
        let q1 = build_relaxation(&p, 1).unwrap();
        assert_eq!(q1.block_sizes(), vec![3, 1, 1, 1]);
        assert_eq!(q1.num_vars, 6);
        let q2 = build_relaxation(&p, 2).unwrap();
        assert_eq!(q2.block_sizes(), vec![6, 3, 3, 3]);
        assert_eq!(q2.num_vars, 15);
        assert_eq!(q2.num_equalities(), 1);
        assert!(matches!(
            build_relaxation(&p, 0),
            Err(LasserreError::OrderTooLow { order: 0, min: 1 })
        ));
    }

    #[test]
    fn example_hierarchy() {
        let p = example();
        let opts = RelaxationOptions::default();
        let r1 = solve_relaxation(&p, 1, &opts).unwrap();
        assert!((r1.optimum + 2.0).abs() < 1e-6, "f1 = {}", r1.optimum);
        let r2 = solve_relaxation(&p, 2, &opts).unwrap();
        let golden = -(1.0 + 5f64.sqrt()) / 2.0;
        assert!((r2.optimum - golden).abs() < 1e-6, "f2 = {}", r2.optimum);
        assert!(r1.optimum <= r2.optimum + 1e-7);
        assert!(r2.certified);
        assert_eq!(r2.moment_matrix_ranks[2], 1);
        assert_eq!(r2.minimizers.len(), 1);
        let xs = &r2.minimizers[0];
        assert!((p.objective.eval(xs).unwrap() - golden).abs() < 1e-5);
        assert!(p.violation(xs) < 1e-6);
    }

    #[test]
    fn zero_objective_on_circle() {
        let circle = &(&(&x(0) * &x(0)) + &(&x(1) * &x(1))) - &Polynomial::constant(2, 1.0);
        let p = SemiAlgebraicProblem::new(Polynomial::zero(2)).with_equality(circle);
        let r = solve_relaxation(&p, 1, &RelaxationOptions::default()).unwrap();
        assert!(r.optimum.abs() < 1e-8);
        assert!((r.moments.values()[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn single_feasible_point_round_trip() {
        // x1^2 + x2^2 = 1, x1 = x2, x1 >= 0 -> (1/sqrt 2, 1/sqrt 2)
        let circle = &(&(&x(0) * &x(0)) + &(&x(1) * &x(1))) - &Polynomial::constant(2, 1.0);
        let p = SemiAlgebraicProblem::new(x(0))
            .with_equality(circle)
            .with_equality(&x(0) - &x(1))
            .with_inequality(x(0));
        let r = solve_relaxation(&p, 2, &RelaxationOptions::default()).unwrap();
        assert!(r.certified);
        let h = 0.5f64.sqrt();
        assert!((r.minimizers[0][0] - h).abs() < 1e-6);
        assert!((r.minimizers[0][1] - h).abs() < 1e-6);
    }

    #[test]
    fn dirac_moments_certify() {
        let y = dirac_moments(&[0.3, -1.2], 4);
        let (ranks, ok) = check_certificate(&y, 2, 1, 1e-3).unwrap();
        assert_eq!(ranks, vec![1, 1, 1]);
        assert!(ok);
        let pts = extract_minimizers(&y, 2, 1).unwrap();
        assert!((pts[0][0] - 0.3).abs() < 1e-12 && (pts[0][1] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn two_atoms_are_recovered() {
        let a = [0.5, -1.0];
        let b = [-0.7, 0.8];
        let y = dirac_moments(&a, 4).combine(0.5, &dirac_moments(&b, 4), 0.5);
        let (ranks, ok) = check_certificate(&y, 2, 1, 1e-3).unwrap();
        assert_eq!(ranks[1], 2);
        assert_eq!(ranks[2], 2);
        assert!(ok);
        let mut pts = extract_minimizers(&y, 2, 2).unwrap();
        pts.sort_by(|p, q| p[0].total_cmp(&q[0]));
        for (p, want) in pts.iter().zip([b, a]) {
            assert!((p[0] - want[0]).abs() < 1e-6 && (p[1] - want[1]).abs() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let p = SemiAlgebraicProblem::new(x(0)).with_inequality(Polynomial::var(3, 0));
        assert!(matches!(build_relaxation(&p, 1), Err(LasserreError::Poly(_))));
    }
}
