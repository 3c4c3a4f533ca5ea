//! Two-view projective reconstruction and refinement used to score an
//! estimated fundamental matrix: canonical cameras, optimal triangulation,
//! RMS reprojection error and a Levenberg-Marquardt bundle adjustment.

use std::time::Instant;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, SMatrix, SVector, Vector2, Vector3, Vector4};
use thiserror::Error;

use crate::epipolar::{self, EpipolarError, FMatrix, GlobalOptions, PointMatch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultiviewError {
    #[error("F is not of rank 2 (second singular value {0:e})")]
    RankDeficiencyViolated(f64),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("point {0} projects to infinity")]
    PointAtInfinity(usize),
    #[error("point count {points} differs from match count {matches}")]
    CountMismatch { points: usize, matches: usize },
    #[error(transparent)]
    Estimation(#[from] EpipolarError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPair {
    pub p: Matrix3x4<f64>,
    pub pp: Matrix3x4<f64>,
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Unit right and left null vectors: `F e = 0`, `F^T e' = 0`.
pub fn epipoles(f: &Matrix3<f64>) -> Result<(Vector3<f64>, Vector3<f64>), MultiviewError> {
    let svd = f.svd(true, true);
    let s = svd.singular_values;
    if s[1] <= 1e-10 * s[0].max(1.0) {
        return Err(MultiviewError::RankDeficiencyViolated(s[1]));
    }
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let e: Vector3<f64> = v_t.row(2).transpose();
    let ep: Vector3<f64> = u.column(2).into();
    Ok((e, ep))
}

/// `P = [I | 0]`, `P' = [[e']_x F | e']`.
pub fn canonical_cameras(f: &Matrix3<f64>) -> Result<CameraPair, MultiviewError> {
    let (_, ep) = epipoles(f)?;
    let m = skew(&ep) * f;
    let mut pp = Matrix3x4::zeros();
    pp.fixed_view_mut::<3, 3>(0, 0).copy_from(&m);
    pp.set_column(3, &ep);
    Ok(CameraPair {
        p: Matrix3x4::identity(),
        pp,
    })
}

/// Fundamental matrix of a camera pair, `F = [e']_x P' P^+`, unit norm.
pub fn fundamental_from_cameras(p: &Matrix3x4<f64>, pp: &Matrix3x4<f64>) -> Matrix3<f64> {
    // camera centre: null vector of P
    let mut a = Matrix4::zeros();
    a.fixed_view_mut::<3, 4>(0, 0).copy_from(p);
    let svd = a.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let imin = svd.singular_values.imin();
    let c: Vector4<f64> = v_t.row(imin).transpose();
    let ep = pp * c;
    let pinv = p.transpose() * (p * p.transpose()).try_inverse().expect("P has full row rank");
    let f = skew(&ep) * pp * pinv;
    f / f.norm()
}

/// `min(||A - B||, ||A + B||)` for unit-normalized `A`, `B`.
pub fn distance_up_to_sign(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let a = a / a.norm();
    let b = b / b.norm();
    (a - b).norm().min((a + b).norm())
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// Real parts of the roots of `sum_k c[k] t^k` via companion-matrix eigenvalues.
fn root_real_parts(c: &[f64]) -> Vec<f64> {
    let scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = c.len() - 1;
    while deg > 0 && c[deg].abs() <= 1e-14 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let mut comp = DMatrix::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / c[deg];
    }
    comp.complex_eigenvalues().iter().map(|z| z.re).collect()
}

/// Optimal two-view correction of a match: the pair `(x, x')` closest to the
/// input (in squared image distance) with `x'^T F x = 0` exactly.
pub fn correct_match(f: &Matrix3<f64>, m: &PointMatch) -> Result<(Vector2<f64>, Vector2<f64>), MultiviewError> {
    let (x, y) = (m.q.x, m.q.y);
    let (xp, yp) = (m.qp.x, m.qp.y);
    let t_inv = Matrix3::new(1.0, 0.0, x, 0.0, 1.0, y, 0.0, 0.0, 1.0);
    let tp_inv = Matrix3::new(1.0, 0.0, xp, 0.0, 1.0, yp, 0.0, 0.0, 1.0);
    let mut g = tp_inv.transpose() * f * t_inv;
    g /= g.norm();
    let (e, ep) = epipoles(&g)?;
    let ne = (e.x * e.x + e.y * e.y).sqrt();
    let nep = (ep.x * ep.x + ep.y * ep.y).sqrt();
    if ne <= 1e-12 || nep <= 1e-12 {
        return Err(MultiviewError::NumericalFailure("point coincides with the epipole".into()));
    }
    let e = e / ne;
    let ep = ep / nep;
    let r = Matrix3::new(e.x, e.y, 0.0, -e.y, e.x, 0.0, 0.0, 0.0, 1.0);
    let rp = Matrix3::new(ep.x, ep.y, 0.0, -ep.y, ep.x, 0.0, 0.0, 0.0, 1.0);
    let g = rp * g * r.transpose();
    let (f1, f2) = (e.z, ep.z);
    let (a, b, c, d) = (g[(1, 1)], g[(1, 2)], g[(2, 1)], g[(2, 2)]);

    // g(t) = t((at+b)^2 + f'^2 (ct+d)^2)^2 - (ad-bc)(1+f^2 t^2)^2 (at+b)(ct+d)
    let atb = [b, a];
    let ctd = [d, c];
    let inner = poly_add(&poly_mul(&atb, &atb), &poly_mul(&[f2 * f2 * d, f2 * f2 * c], &ctd));
    let left = poly_mul(&[0.0, 1.0], &poly_mul(&inner, &inner));
    let ft = [1.0, 0.0, f1 * f1];
    let right = poly_mul(&poly_mul(&poly_mul(&ft, &ft), &atb), &ctd);
    let right: Vec<f64> = right.iter().map(|v| -(a * d - b * c) * v).collect();
    let gt = poly_add(&left, &right);

    let cost = |t: f64| {
        t * t / (1.0 + f1 * f1 * t * t) + (c * t + d).powi(2) / ((a * t + b).powi(2) + f2 * f2 * (c * t + d).powi(2))
    };
    let mut best_t: Option<f64> = None;
    let mut best_cost = 1.0 / (f1 * f1) + c * c / (a * a + f2 * f2 * c * c);
    if !best_cost.is_finite() {
        best_cost = f64::INFINITY;
    }
    for t in root_real_parts(&gt) {
        let s = cost(t);
        if s.is_finite() && s < best_cost {
            best_cost = s;
            best_t = Some(t);
        }
    }
    // also consider t = 0, which is a root whenever ad - bc = 0
    if cost(0.0) < best_cost {
        best_t = Some(0.0);
    }
    let (l, lp) = match best_t {
        Some(t) => (
            Vector3::new(t * f1, 1.0, -t),
            Vector3::new(-f2 * (c * t + d), a * t + b, c * t + d),
        ),
        None => (Vector3::new(f1, 0.0, -1.0), Vector3::new(-f2 * c, a, c)),
    };
    let foot = |l: Vector3<f64>| Vector3::new(-l.x * l.z, -l.y * l.z, l.x * l.x + l.y * l.y);
    let xh = t_inv * r.transpose() * foot(l);
    let xph = tp_inv * rp.transpose() * foot(lp);
    if xh.z.abs() < 1e-300 || xph.z.abs() < 1e-300 {
        return Err(MultiviewError::NumericalFailure("corrected point at infinity".into()));
    }
    Ok((xh.xy() / xh.z, xph.xy() / xph.z))
}

/// Linear (DLT) triangulation of an image pair, unit-norm homogeneous result.
pub fn triangulate_linear(cams: &CameraPair, x: &Vector2<f64>, xp: &Vector2<f64>) -> Vector4<f64> {
    let mut a = Matrix4::zeros();
    for (k, (p, pt)) in [(&cams.p, x), (&cams.pp, xp)].into_iter().enumerate() {
        let r0 = p.row(2) * pt.x - p.row(0);
        let r1 = p.row(2) * pt.y - p.row(1);
        let n0 = r0.norm().max(1e-300);
        let n1 = r1.norm().max(1e-300);
        a.set_row(2 * k, &(r0 / n0));
        a.set_row(2 * k + 1, &(r1 / n1));
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let q: Vector4<f64> = v_t.row(svd.singular_values.imin()).transpose();
    q / q.norm()
}

/// Optimal triangulation: epipolar correction keyed to `F`, then DLT.
pub fn triangulate(cams: &CameraPair, m: &PointMatch, f: &Matrix3<f64>) -> Result<Vector4<f64>, MultiviewError> {
    let (x, xp) = correct_match(f, m)?;
    Ok(triangulate_linear(cams, &x, &xp))
}

fn project(p: &Matrix3x4<f64>, q: &Vector4<f64>) -> Option<Vector2<f64>> {
    let h = p * q;
    if h.z.abs() < 1e-12 * h.norm().max(1e-300) || h.z == 0.0 {
        None
    } else {
        Some(h.xy() / h.z)
    }
}

/// `sqrt(sum_i (|pi(P Q_i) - q_i|^2 + |pi(P' Q_i) - q'_i|^2) / (2n))`.
pub fn rms_reprojection(cams: &CameraPair, points: &[Vector4<f64>], matches: &[PointMatch]) -> Result<f64, MultiviewError> {
    if points.len() != matches.len() {
        return Err(MultiviewError::CountMismatch {
            points: points.len(),
            matches: matches.len(),
        });
    }
    let mut ss = 0.0;
    for (i, (q, m)) in points.iter().zip(matches).enumerate() {
        let a = project(&cams.p, q).ok_or(MultiviewError::PointAtInfinity(i))?;
        let b = project(&cams.pp, q).ok_or(MultiviewError::PointAtInfinity(i))?;
        ss += (a - m.q.xy()).norm_squared() + (b - m.qp.xy()).norm_squared();
    }
    Ok((ss / (2.0 * matches.len().max(1) as f64)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaOptions {
    pub max_iter: usize,
    pub rel_cost_tol: f64,
    pub gradient_tol: f64,
    pub step_tol: f64,
    /// Stop once the RMS reprojection error (pixels) is below this.
    pub rms_tol: f64,
    pub max_lambda: f64,
}

impl Default for BaOptions {
    fn default() -> Self {
        BaOptions {
            max_iter: 1000,
            rel_cost_tol: 1e-12,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            rms_tol: 1e-11,
            max_lambda: 1e12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaStatus {
    Converged,
    MaxIterations,
    DivergedLambda,
}

#[derive(Clone, Debug)]
pub struct BaResult {
    pub pp: Matrix3x4<f64>,
    pub points: Vec<Vector4<f64>>,
    /// Jacobian evaluations; `max_iter + 1` when the cap was hit.
    pub iterations: usize,
    pub e_initial: f64,
    pub e_final: f64,
    pub status: BaStatus,
    /// Sum of squared residuals after each accepted step (first entry: start).
    pub cost_trace: Vec<f64>,
}

type Mat4x12 = SMatrix<f64, 4, 12>;

/// Residual blocks of the two-view adjustment with `P = [I | 0]` fixed.
/// The state is `[P' (12, row-major), Q_1 (4), ..., Q_n (4)]`; residuals per
/// point are `(pi(P Q) - q, pi(P' Q) - q')` scaled by per-image weights.
#[derive(Clone, Debug)]
pub struct BaProblem {
    pub matches: Vec<PointMatch>,
    pub weights: [f64; 2],
}

impl BaProblem {
    pub fn new(matches: Vec<PointMatch>) -> Self {
        BaProblem {
            matches,
            weights: [1.0, 1.0],
        }
    }

    pub fn num_params(&self) -> usize {
        12 + 4 * self.matches.len()
    }

    pub fn pack(pp: &Matrix3x4<f64>, points: &[Vector4<f64>]) -> Vec<f64> {
        let mut x = Vec::with_capacity(12 + 4 * points.len());
        for r in 0..3 {
            for c in 0..4 {
                x.push(pp[(r, c)]);
            }
        }
        for q in points {
            x.extend_from_slice(q.as_slice());
        }
        x
    }

    pub fn unpack(x: &[f64]) -> (Matrix3x4<f64>, Vec<Vector4<f64>>) {
        let pp = Matrix3x4::from_row_slice(&x[..12]);
        let points = x[12..].chunks(4).map(Vector4::from_column_slice).collect();
        (pp, points)
    }

    /// Residuals and Jacobian blocks of point `i`: `(r, dr/dP', dr/dQ)`.
    pub fn point_blocks(&self, pp: &Matrix3x4<f64>, q: &Vector4<f64>, i: usize) -> (Vector4<f64>, Mat4x12, Matrix4<f64>) {
        let m = &self.matches[i];
        let (w1, w2) = (self.weights[0], self.weights[1]);
        let mut r = Vector4::zeros();
        let mut jp = Mat4x12::zeros();
        let mut jq = Matrix4::zeros();
        // image 1, P = [I | 0]
        let (u, v, w) = (q[0], q[1], q[2]);
        r[0] = w1 * (u / w - m.q.x);
        r[1] = w1 * (v / w - m.q.y);
        let w2i = 1.0 / (w * w);
        jq[(0, 0)] = w1 / w;
        jq[(0, 2)] = -w1 * u * w2i;
        jq[(1, 1)] = w1 / w;
        jq[(1, 2)] = -w1 * v * w2i;
        // image 2
        let h = pp * q;
        let (u, v, w) = (h.x, h.y, h.z);
        r[2] = w2 * (u / w - m.qp.x);
        r[3] = w2 * (v / w - m.qp.y);
        let wi = 1.0 / w;
        for c in 0..4 {
            jp[(2, c)] = w2 * q[c] * wi;
            jp[(2, 8 + c)] = -w2 * u * q[c] * wi * wi;
            jp[(3, 4 + c)] = w2 * q[c] * wi;
            jp[(3, 8 + c)] = -w2 * v * q[c] * wi * wi;
            jq[(2, c)] = w2 * (pp[(0, c)] * w - u * pp[(2, c)]) * wi * wi;
            jq[(3, c)] = w2 * (pp[(1, c)] * w - v * pp[(2, c)]) * wi * wi;
        }
        (r, jp, jq)
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let (pp, points) = Self::unpack(x);
        let mut out = Vec::with_capacity(4 * points.len());
        for (i, q) in points.iter().enumerate() {
            out.extend_from_slice(self.point_blocks(&pp, q, i).0.as_slice());
        }
        out
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        self.residuals(x).iter().map(|r| r * r).sum()
    }

    /// Dense Jacobian, mainly for verification.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let (pp, points) = Self::unpack(x);
        let n = points.len();
        let mut j = DMatrix::zeros(4 * n, 12 + 4 * n);
        for (i, q) in points.iter().enumerate() {
            let (_, jp, jq) = self.point_blocks(&pp, q, i);
            j.view_mut((4 * i, 0), (4, 12)).copy_from(&jp);
            j.view_mut((4 * i, 12 + 4 * i), (4, 4)).copy_from(&jq);
        }
        j
    }
}

struct Normal {
    u: SMatrix<f64, 12, 12>,
    g_p: SVector<f64, 12>,
    v: Vec<Matrix4<f64>>,
    w: Vec<SMatrix<f64, 12, 4>>,
    g_q: Vec<Vector4<f64>>,
    cost: f64,
}

fn normal_equations(prob: &BaProblem, pp: &Matrix3x4<f64>, points: &[Vector4<f64>]) -> Normal {
    let n = points.len();
    let mut ne = Normal {
        u: SMatrix::zeros(),
        g_p: SVector::zeros(),
        v: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        g_q: Vec::with_capacity(n),
        cost: 0.0,
    };
    for (i, q) in points.iter().enumerate() {
        let (r, jp, jq) = prob.point_blocks(pp, q, i);
        ne.u += jp.transpose() * jp;
        ne.g_p += jp.transpose() * r;
        ne.v.push(jq.transpose() * jq);
        ne.w.push(jp.transpose() * jq);
        ne.g_q.push(jq.transpose() * r);
        ne.cost += r.norm_squared();
    }
    ne
}

/// Solves `(J^T J + lambda I) delta = -J^T r` through the camera Schur complement.
fn damped_step(ne: &Normal, lambda: f64) -> Option<(SVector<f64, 12>, Vec<Vector4<f64>>)> {
    let mut s = ne.u + SMatrix::<f64, 12, 12>::identity() * lambda;
    let mut rhs = -ne.g_p;
    let mut vinv = Vec::with_capacity(ne.v.len());
    for i in 0..ne.v.len() {
        let vi = (ne.v[i] + Matrix4::identity() * lambda).try_inverse()?;
        let wv = ne.w[i] * vi;
        s -= wv * ne.w[i].transpose();
        rhs += wv * ne.g_q[i];
        vinv.push(vi);
    }
    let s = (s + s.transpose()) * 0.5;
    let dp = match s.cholesky() {
        Some(c) => c.solve(&rhs),
        None => s.lu().solve(&rhs)?,
    };
    let dq = (0..ne.v.len())
        .map(|i| vinv[i] * (-ne.g_q[i] - ne.w[i].transpose() * dp))
        .collect();
    Some((dp, dq))
}

/// Levenberg-Marquardt over `P'` and the points with `P = [I | 0]` fixed.
/// Coordinates are standardized internally; residuals are weighted so that
/// the cost equals the pixel reprojection cost.
pub fn bundle_adjust(
    pp: &Matrix3x4<f64>,
    points: &[Vector4<f64>],
    matches: &[PointMatch],
    opts: &BaOptions,
) -> Result<BaResult, MultiviewError> {
    if points.len() != matches.len() {
        return Err(MultiviewError::CountMismatch {
            points: points.len(),
            matches: matches.len(),
        });
    }
    let n = matches.len();
    let (std_matches, st) = epipolar::standardize(matches)?;
    let (s1, s2) = (st.t1[(0, 0)], st.t2[(0, 0)]);
    // Q~ = H Q with H = diag(T1, 1); P~' = T2 P' H^-1
    let mut h = Matrix4::identity();
    h.fixed_view_mut::<3, 3>(0, 0).copy_from(&st.t1);
    let h_inv = h.try_inverse().expect("similarity is invertible");
    let mut cur_pp = st.t2 * pp * h_inv;
    cur_pp /= cur_pp.norm();
    let mut cur_q: Vec<Vector4<f64>> = points
        .iter()
        .map(|q| {
            let v = h * q;
            v / v.norm()
        })
        .collect();
    let prob = BaProblem {
        matches: std_matches,
        weights: [1.0 / s1, 1.0 / s2],
    };
    let rms = |cost: f64| (cost / (2.0 * n as f64)).sqrt();

    let mut ne = normal_equations(&prob, &cur_pp, &cur_q);
    if !ne.cost.is_finite() {
        return Err(MultiviewError::NumericalFailure("non-finite initial reprojection".into()));
    }
    let e_initial = rms(ne.cost);
    let mut trace = vec![ne.cost];
    let mean_diag = {
        let mut t = ne.u.trace();
        for v in &ne.v {
            t += v.trace();
        }
        t / (12 + 4 * n) as f64
    };
    let lambda_floor = 1e-12 * mean_diag.max(1e-300);
    let mut lambda = 1e-3 * mean_diag;
    let mut iterations = 0;
    let mut status = BaStatus::Converged;

    loop {
        if rms(ne.cost) <= opts.rms_tol {
            break;
        }
        let gmax = ne
            .g_p
            .amax()
            .max(ne.g_q.iter().map(|g| g.amax()).fold(0.0, f64::max));
        if gmax < opts.gradient_tol {
            break;
        }
        if iterations == opts.max_iter {
            iterations += 1;
            status = BaStatus::MaxIterations;
            break;
        }
        iterations += 1;
        let mut accepted = None;
        let mut small_step = false;
        loop {
            let Some((dp, dq)) = damped_step(&ne, lambda) else {
                lambda *= 10.0;
                if lambda > opts.max_lambda {
                    break;
                }
                continue;
            };
            let step_norm = (dp.norm_squared() + dq.iter().map(|d| d.norm_squared()).sum::<f64>()).sqrt();
            let x_norm = (cur_pp.norm_squared() + n as f64).sqrt();
            if step_norm < opts.step_tol * (1.0 + x_norm) {
                small_step = true;
                break;
            }
            let mut new_pp = cur_pp;
            for r in 0..3 {
                for c in 0..4 {
                    new_pp[(r, c)] += dp[4 * r + c];
                }
            }
            let new_q: Vec<Vector4<f64>> = cur_q
                .iter()
                .zip(&dq)
                .map(|(q, d)| {
                    let v = q + d;
                    v / v.norm()
                })
                .collect();
            let new_ne = normal_equations(&prob, &new_pp, &new_q);
            if new_ne.cost.is_finite() && new_ne.cost < ne.cost {
                accepted = Some((new_pp, new_q, new_ne));
                lambda = (lambda / 10.0).max(lambda_floor);
                break;
            }
            lambda *= 10.0;
            if lambda > opts.max_lambda {
                break;
            }
        }
        if small_step {
            break;
        }
        let Some((new_pp, new_q, new_ne)) = accepted else {
            status = BaStatus::DivergedLambda;
            break;
        };
        let rel = (ne.cost - new_ne.cost) / ne.cost;
        cur_pp = new_pp;
        cur_q = new_q;
        ne = new_ne;
        trace.push(ne.cost);
        if rel < opts.rel_cost_tol {
            break;
        }
    }

    let out_pp = st.t2.try_inverse().expect("similarity is invertible") * cur_pp * h;
    let out_q = cur_q
        .iter()
        .map(|q| {
            let v = h_inv * q;
            v / v.norm()
        })
        .collect();
    Ok(BaResult {
        pp: out_pp,
        points: out_q,
        iterations,
        e_initial,
        e_final: rms(ne.cost),
        status,
        cost_trace: trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    EightPoint,
    Global,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::EightPoint => "eightpoint",
            Method::Global => "global",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Method::EightPoint => "8pt",
            Method::Global => "Gp",
        }
    }
}

/// Reprojection errors of an estimated F before and after adjustment.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub e_init: f64,
    pub e_ba: f64,
    pub iterations: usize,
    pub ba_status: BaStatus,
    pub cameras: CameraPair,
}

/// Canonical cameras, optimal triangulation, initial error, bundle adjustment.
pub fn evaluate(f: &Matrix3<f64>, matches: &[PointMatch], opts: &BaOptions) -> Result<Evaluation, MultiviewError> {
    let cams = canonical_cameras(f)?;
    let points = matches
        .iter()
        .map(|m| triangulate(&cams, m, f))
        .collect::<Result<Vec<_>, _>>()?;
    let e_init = rms_reprojection(&cams, &points, matches)?;
    let ba = bundle_adjust(&cams.pp, &points, matches, opts)?;
    Ok(Evaluation {
        e_init,
        e_ba: ba.e_final.min(e_init),
        iterations: ba.iterations,
        ba_status: ba.status,
        cameras: CameraPair { p: cams.p, pp: ba.pp },
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub method: Method,
    pub e_init: f64,
    pub e_ba: f64,
    pub iterations: usize,
    /// Seconds spent estimating F (excludes evaluation).
    pub time_s: f64,
}

pub const REPORT_HEADER: &str = "method,e_init,e_ba,iterations,time_s";

impl EvaluationReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.method.name(),
            format_sig(self.e_init, 6),
            format_sig(self.e_ba, 6),
            self.iterations,
            format_sig(self.time_s, 6)
        )
    }
}

/// Estimates F with `method`, timing only the estimation.
pub fn estimate(method: Method, matches: &[PointMatch], gopts: &GlobalOptions) -> Result<(FMatrix, f64), EpipolarError> {
    let start = Instant::now();
    let f = match method {
        Method::EightPoint => epipolar::eight_point(matches)?,
        Method::Global => epipolar::global_f(matches, gopts)?,
    };
    Ok((f, start.elapsed().as_secs_f64()))
}

/// Estimate and evaluate in one call.
pub fn estimate_and_evaluate(
    method: Method,
    matches: &[PointMatch],
    gopts: &GlobalOptions,
    ba: &BaOptions,
) -> Result<(FMatrix, EvaluationReport), MultiviewError> {
    let (f, time_s) = estimate(method, matches, gopts)?;
    let ev = evaluate(&f.m, matches, ba)?;
    Ok((
        f,
        EvaluationReport {
            method,
            e_init: ev.e_init,
            e_ba: ev.e_ba,
            iterations: ev.iterations,
            time_s,
        },
    ))
}

/// `%g`-style formatting with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // take the exponent after rounding (9.9999996 -> 1.00000e1)
    let sci = format!("{:.*e}", digits - 1, x);
    let (mant, e) = sci.split_once('e').expect("exponent present");
    let e: i32 = e.parse().expect("integer exponent");
    if e < -5 || e >= digits as i32 {
        let mant = trim_zeros(mant);
        format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
    } else {
        let decimals = (digits as i32 - 1 - e).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rank2(seed: u64) -> Matrix3<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let svd = m.svd(true, true);
        let mut s = svd.singular_values;
        s[2] = 0.0;
        svd.u.unwrap() * Matrix3::from_diagonal(&s) * svd.v_t.unwrap()
    }

    #[test]
    fn epipoles_of_skew() {
        let ep = Vector3::new(0.3, -0.4, 0.5).normalize();
        let f = skew(&ep);
        let (e, ep2) = epipoles(&f).unwrap();
        assert!((f.transpose() * ep2).norm() < 1e-14);
        assert!((f * e).norm() < 1e-14);
        assert!(distance_up_to_sign(&(ep * ep.transpose()), &(ep2 * ep2.transpose())) < 1e-12);
    }

    #[test]
    fn epipoles_reject_rank_one() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert!(matches!(epipoles(&(v * v.transpose())), Err(MultiviewError::RankDeficiencyViolated(_))));
    }

    #[test]
    fn canonical_round_trip() {
        for seed in 0..50 {
            let f = random_rank2(seed);
            let cams = canonical_cameras(&f).unwrap();
            assert_eq!(cams.p, Matrix3x4::identity());
            let g = fundamental_from_cameras(&cams.p, &cams.pp);
            assert!(distance_up_to_sign(&f, &g) < 1e-8);
            let left = cams.pp.fixed_view::<3, 3>(0, 0).into_owned();
            assert!(left.determinant().abs() < 1e-12);
        }
    }

    #[test]
    fn rms_example() {
        let cams = CameraPair {
            p: Matrix3x4::identity(),
            pp: Matrix3x4::identity(),
        };
        let q = Vector4::new(1.0, 2.0, 1.0, 0.0);
        let m = PointMatch::new(1.0, 2.0, 4.0, 6.0);
        let e = rms_reprojection(&cams, &[q], &[m]).unwrap();
        assert!((e - (12.5f64).sqrt()).abs() < 1e-12);
        let far = Vector4::new(1.0, 2.0, 0.0, 1.0);
        assert_eq!(rms_reprojection(&cams, &[far], &[m]), Err(MultiviewError::PointAtInfinity(0)));
    }

    #[test]
    fn correction_satisfies_epipolar_constraint() {
        let f = random_rank2(7);
        let m = PointMatch::new(0.3, -0.2, 0.5, 0.1);
        let (x, xp) = correct_match(&f, &m).unwrap();
        let a = Vector3::new(x.x, x.y, 1.0).normalize();
        let b = Vector3::new(xp.x, xp.y, 1.0).normalize();
        assert!((b.dot(&(f * a))).abs() < 1e-10);
    }

    #[test]
    fn roots_of_cubic() {
        // (t - 1)(t - 2)(t + 3) = t^3 - 7t + 6
        let mut r = root_real_parts(&[6.0, -7.0, 0.0, 1.0]);
        r.sort_by(f64::total_cmp);
        assert!((r[0] + 3.0).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12 && (r[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(1.0, 6), "1");
        assert_eq!(format_sig(0.00252, 6), "0.00252");
        assert_eq!(format_sig(123456.7, 6), "123457");
        assert_eq!(format_sig(1234567.0, 6), "1.23457e+06");
        assert_eq!(format_sig(1.5e-7, 6), "1.5e-07");
        assert_eq!(format_sig(9.9999996, 6), "10");
        assert_eq!(format_sig(-2.5, 6), "-2.5");
    }

    #[test]
    fn report_row() {
        let r = EvaluationReport {
            method: Method::Global,
            e_init: 0.5,
            e_ba: 0.25,
            iterations: 3,
            time_s: 0.0,
        };
        assert_eq!(r.csv_row(), "global,0.5,0.25,3,0");
    }
}
