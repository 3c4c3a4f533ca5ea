//! Fundamental-matrix estimation from point matches: Hartley standardization,
//! the linear estimate with rank-2 projection (the eight-point method) and the
//! certified global minimizer of the algebraic cost under `det F = 0`,
//! `||F||_F = 1`.

use std::fmt;
use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};
use thiserror::Error;

use crate::lasserre::{finish, build_relaxation, RelaxationOptions, SemiAlgebraicProblem};
use crate::poly::Polynomial;
use crate::sdp::{solve_sdp, SdpOptions, SdpProblem, SolverStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpipolarError {
    #[error("need at least 8 matches, got {0}")]
    TooFewMatches(usize),
    #[error("all points of image {0} coincide")]
    DegenerateCloud(usize),
    #[error("degenerate configuration: design matrix rank {0} < 8")]
    DegenerateConfiguration(usize),
    #[error("input is already rank <= 1; rank-2 projection is ambiguous")]
    RankDeficientInput,
    #[error("solver failure: {0}")]
    Solver(String),
}

/// A correspondence `q <-> q'` in homogeneous pixel coordinates (third entry 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMatch {
    pub q: Vector3<f64>,
    pub qp: Vector3<f64>,
}

impl PointMatch {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        PointMatch {
            q: Vector3::new(x1, y1, 1.0),
            qp: Vector3::new(x2, y2, 1.0),
        }
    }

    /// Epipolar residual `q'^T F q`.
    pub fn residual(&self, f: &Matrix3<f64>) -> f64 {
        self.qp.dot(&(f * self.q))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GlobalCertificate {
    pub certified: bool,
    pub order: usize,
    pub rank: usize,
    /// Relaxation lower bound on the standardized algebraic cost (the smaller
    /// of the SDP primal and dual objectives, so solver inaccuracy errs low).
    pub lower_bound: f64,
    pub solver_status: SolverStatus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FMatrix {
    pub m: Matrix3<f64>,
    pub rank2_certified: bool,
    pub global_certificate: Option<GlobalCertificate>,
}

impl FMatrix {
    fn from_rank2(m: Matrix3<f64>) -> Self {
        FMatrix {
            m: fix_sign(m / m.norm()),
            rank2_certified: true,
            global_certificate: None,
        }
    }

    pub fn det(&self) -> f64 {
        self.m.determinant()
    }

    /// Writes three lines of three values, 17 significant digits each.
    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in 0..3 {
            writeln!(
                w,
                "{:.16e} {:.16e} {:.16e}",
                self.m[(r, 0)],
                self.m[(r, 1)],
                self.m[(r, 2)]
            )?;
        }
        Ok(())
    }

    /// Reads the format produced by [`FMatrix::write`]. The matrix is taken
    /// as is (no normalization); `rank2_certified` reflects `|det| <= 1e-9`.
    pub fn read<R: BufRead>(r: R) -> io::Result<FMatrix> {
        let mut vals = Vec::with_capacity(9);
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, format!("bad number {tok:?}")))?;
                vals.push(v);
            }
        }
        if vals.len() != 9 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("expected 9 values, found {}", vals.len()),
            ));
        }
        let m = Matrix3::from_row_slice(&vals);
        Ok(FMatrix {
            m,
            rank2_certified: m.determinant().abs() <= 1e-9,
            global_certificate: None,
        })
    }
}

impl fmt::Display for FMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

/// Flips the sign so that the largest-magnitude entry is positive.
pub fn fix_sign(m: Matrix3<f64>) -> Matrix3<f64> {
    let k = m.iamax_full();
    if m[k] < 0.0 {
        -m
    } else {
        m
    }
}

/// Similarity transforms `T` (image 1) and `T'` (image 2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Standardization {
    pub t1: Matrix3<f64>,
    pub t2: Matrix3<f64>,
}

impl Standardization {
    pub fn identity() -> Self {
        Standardization {
            t1: Matrix3::identity(),
            t2: Matrix3::identity(),
        }
    }

    /// Maps an F estimated on standardized points back: `T'^T F T`.
    pub fn denormalize(&self, f: &Matrix3<f64>) -> Matrix3<f64> {
        self.t2.transpose() * f * self.t1
    }

    /// Inverse of [`denormalize`](Self::denormalize): `T'^-T F T^-1`.
    pub fn normalize(&self, f: &Matrix3<f64>) -> Matrix3<f64> {
        let t1i = similarity_inverse(&self.t1);
        let t2i = similarity_inverse(&self.t2);
        t2i.transpose() * f * t1i
    }
}

fn similarity_inverse(t: &Matrix3<f64>) -> Matrix3<f64> {
    let s = t[(0, 0)];
    Matrix3::new(1.0 / s, 0.0, -t[(0, 2)] / s, 0.0, 1.0 / s, -t[(1, 2)] / s, 0.0, 0.0, 1.0)
}

fn isotropic(points: impl Iterator<Item = Vector3<f64>> + Clone, image: usize) -> Result<Matrix3<f64>, EpipolarError> {
    let n = points.clone().count() as f64;
    let (mut cx, mut cy) = (0.0, 0.0);
    for p in points.clone() {
        cx += p.x;
        cy += p.y;
    }
    cx /= n;
    cy /= n;
    let mut ss = 0.0;
    for p in points {
        ss += (p.x - cx).powi(2) + (p.y - cy).powi(2);
    }
    let rms = (ss / n).sqrt();
    if !(rms > 1e-12 * (1.0 + cx.abs().max(cy.abs()))) {
        return Err(EpipolarError::DegenerateCloud(image));
    }
    let s = std::f64::consts::SQRT_2 / rms;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Hartley normalization of each image: centroid to the origin, RMS distance
/// to the origin `sqrt(2)`.
pub fn standardize(matches: &[PointMatch]) -> Result<(Vec<PointMatch>, Standardization), EpipolarError> {
    if matches.is_empty() {
        return Err(EpipolarError::DegenerateCloud(1));
    }
    let t1 = isotropic(matches.iter().map(|m| m.q), 1)?;
    let t2 = isotropic(matches.iter().map(|m| m.qp), 2)?;
    let out = matches
        .iter()
        .map(|m| {
            let a = t1 * m.q;
            let b = t2 * m.qp;
            PointMatch::new(a.x, a.y, b.x, b.y)
        })
        .collect();
    Ok((out, Standardization { t1, t2 }))
}

/// `sum_i (q'_i^T F q_i)^2`.
pub fn algebraic_cost(f: &Matrix3<f64>, matches: &[PointMatch]) -> f64 {
    matches.iter().map(|m| m.residual(f).powi(2)).sum()
}

/// Algebraic cost of the unit-norm representative of `F` expressed in the
/// standardized frame of `matches`. This is the quantity both estimators
/// minimize and the one used to compare them.
pub fn standardized_cost(f: &Matrix3<f64>, matches: &[PointMatch]) -> Result<f64, EpipolarError> {
    let (std_matches, st) = standardize(matches)?;
    let g = st.normalize(f);
    Ok(algebraic_cost(&(g / g.norm()), &std_matches))
}

fn design_row(m: &PointMatch) -> SVector<f64, 9> {
    let mut a = SVector::<f64, 9>::zeros();
    for j in 0..3 {
        for k in 0..3 {
            a[3 * j + k] = m.qp[j] * m.q[k];
        }
    }
    a
}

/// Gram matrix `sum_i a_i a_i^T` of the design rows, so that
/// `algebraic_cost(F) = f^T Q f` with `f` the row-major entries of `F`.
pub fn cost_matrix(matches: &[PointMatch]) -> SMatrix<f64, 9, 9> {
    let mut q = SMatrix::<f64, 9, 9>::zeros();
    for m in matches {
        let a = design_row(m);
        q += a * a.transpose();
    }
    q
}

/// Unconstrained-rank minimizer of the algebraic cost with `||F||_F = 1`.
pub fn linear_f(matches: &[PointMatch]) -> Result<Matrix3<f64>, EpipolarError> {
    if matches.len() < 8 {
        return Err(EpipolarError::TooFewMatches(matches.len()));
    }
    let rows = matches.len().max(9);
    let mut a = DMatrix::zeros(rows, 9);
    for (i, m) in matches.iter().enumerate() {
        a.set_row(i, &design_row(m).transpose());
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-8 * smax).count();
    if rank < 8 {
        return Err(EpipolarError::DegenerateConfiguration(rank));
    }
    let imin = sv.imin();
    let f = v_t.row(imin);
    let m = Matrix3::from_row_slice(f.transpose().as_slice());
    Ok(fix_sign(m / m.norm()))
}

/// Closest rank-2 matrix in Frobenius norm, rescaled to unit norm. Also
/// returns the projection distance `sigma_3` (before rescaling).
pub fn project_rank2(f: &Matrix3<f64>) -> Result<(FMatrix, f64), EpipolarError> {
    let svd = f.svd(true, true);
    let mut s = svd.singular_values;
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    // nalgebra sorts singular values in decreasing order
    if s[1] <= 1e-12 * s[0].max(1e-300) || s[1] <= 1e-300 {
        return Err(EpipolarError::RankDeficientInput);
    }
    let dist = s[2];
    s[2] = 0.0;
    let m = u * Matrix3::from_diagonal(&s) * v_t;
    Ok((FMatrix::from_rank2(m), dist))
}

/// The normalized eight-point method.
pub fn eight_point(matches: &[PointMatch]) -> Result<FMatrix, EpipolarError> {
    let (std_matches, st) = standardize(matches)?;
    let ft = linear_f(&std_matches)?;
    let (fhat, _) = project_rank2(&ft)?;
    Ok(FMatrix::from_rank2(st.denormalize(&fhat.m)))
}

#[derive(Clone, Copy, Debug)]
pub struct GlobalOptions {
    pub order: usize,
    pub standardize: bool,
    pub rank_tol: f64,
    pub sdp: SdpOptions,
    /// Restrict the entry of largest magnitude in the linear estimate to be
    /// non-negative, which removes the `F <-> -F` symmetry from the relaxation.
    pub sign_anchor: bool,
    /// Refine the extracted minimizer with Newton steps on the KKT system.
    pub polish: bool,
}

impl Default for GlobalOptions {
    fn default() -> Self {
        GlobalOptions {
            order: 2,
            standardize: true,
            rank_tol: 1e-3,
            sdp: SdpOptions::default(),
            sign_anchor: true,
            polish: true,
        }
    }
}

/// `det F` as a cubic in the nine row-major entries.
pub fn det_polynomial() -> Polynomial {
    let v = |i| Polynomial::var(9, i);
    let minor = |a: usize, b: usize, c: usize, d: usize| &(&v(a) * &v(b)) - &(&v(c) * &v(d));
    let t0 = &v(0) * &minor(4, 8, 5, 7);
    let t1 = &v(1) * &minor(3, 8, 5, 6);
    let t2 = &v(2) * &minor(3, 7, 4, 6);
    &(&t0 - &t1) + &t2
}

/// `f^T Q f` as a polynomial.
pub fn quadratic_form(q: &SMatrix<f64, 9, 9>) -> Polynomial {
    let mut p = Polynomial::zero(9);
    for a in 0..9 {
        for b in a..9 {
            let c = if a == b { q[(a, b)] } else { q[(a, b)] + q[(b, a)] };
            if c != 0.0 {
                let mut e = vec![0u32; 9];
                e[a] += 1;
                e[b] += 1;
                p = &p + &Polynomial::from_terms(9, [(e, c)]);
            }
        }
    }
    p
}

/// `min sum_i (q'_i^T F q_i)^2  s.t.  det F = 0, ||F||_F^2 = 1` over the nine
/// entries of `F` (row-major).
pub fn fundamental_problem(matches: &[PointMatch]) -> SemiAlgebraicProblem {
    let q = cost_matrix(matches);
    let mut norm = Polynomial::constant(9, -1.0);
    for i in 0..9 {
        norm = &norm + &(&Polynomial::var(9, i) * &Polynomial::var(9, i));
    }
    SemiAlgebraicProblem::new(quadratic_form(&q))
        .with_equality(det_polynomial())
        .with_equality(norm)
}

/// Output of [`global_f`] together with the SDP it solved.
#[derive(Clone, Debug)]
pub struct GlobalEstimate {
    pub f: FMatrix,
    pub sdp: SdpProblem,
    pub relaxation: crate::lasserre::RelaxationResult,
}

/// Certified global minimizer of the algebraic cost over rank-2 unit-norm `F`.
pub fn global_f(matches: &[PointMatch], opts: &GlobalOptions) -> Result<FMatrix, EpipolarError> {
    global_f_detailed(matches, opts).map(|g| g.f)
}

pub fn global_f_detailed(matches: &[PointMatch], opts: &GlobalOptions) -> Result<GlobalEstimate, EpipolarError> {
    if matches.len() < 8 {
        return Err(EpipolarError::TooFewMatches(matches.len()));
    }
    let (work, st) = if opts.standardize {
        standardize(matches)?
    } else {
        (matches.to_vec(), Standardization::identity())
    };
    let ft = linear_f(&work)?;
    let q = cost_matrix(&work);
    // scale the objective to unit size for the SDP
    let qscale = q.amax().max(1e-300);
    let mut prob = fundamental_problem(&work);
    prob.objective = quadratic_form(&(q / qscale));
    if opts.sign_anchor {
        let k = ft.transpose().as_slice().iter().enumerate().fold(0, |best, (i, v)| {
            if v.abs() > ft.transpose().as_slice()[best].abs() {
                i
            } else {
                best
            }
        });
        let sign = ft.transpose().as_slice()[k].signum();
        prob = prob.with_inequality(Polynomial::var(9, k).scale(sign));
    }

    let sdp = build_relaxation(&prob, opts.order).map_err(|e| EpipolarError::Solver(e.to_string()))?;
    let sol = solve_sdp(&sdp, &opts.sdp).map_err(EpipolarError::Solver)?;
    if matches!(sol.status, SolverStatus::Infeasible | SolverStatus::NumericalFailure)
        && !sol.merit.is_finite()
    {
        return Err(EpipolarError::Solver(format!("{:?}", sol.status)));
    }
    let ropts = RelaxationOptions {
        rank_tol: opts.rank_tol,
        sdp: opts.sdp,
    };
    let rel = finish(&prob, opts.order, &ropts, sol).map_err(|e| EpipolarError::Solver(e.to_string()))?;

    let raw = if rel.certified {
        // pick the extracted atom with least cost
        rel.minimizers
            .iter()
            .map(|x| Matrix3::from_row_slice(x))
            .min_by(|a, b| {
                let ca = algebraic_cost(&(a / a.norm()), &work);
                let cb = algebraic_cost(&(b / b.norm()), &work);
                ca.total_cmp(&cb)
            })
            .expect("certified results carry minimizers")
    } else {
        Matrix3::from_row_slice(&rel.candidate)
    };
    let raw = if raw.norm() > 1e-12 { raw } else { ft };
    let mut best = project_rank2(&raw).map(|(f, _)| f.m).unwrap_or(ft);
    if opts.polish {
        if let Some(p) = kkt_polish(&q, &best) {
            if let Ok((pf, _)) = project_rank2(&p) {
                if algebraic_cost(&pf.m, &work) <= algebraic_cost(&best, &work) {
                    best = pf.m;
                }
            }
        }
    }
    let mut f = FMatrix::from_rank2(st.denormalize(&best));
    f.rank2_certified = f.det().abs() <= 1e-9;
    f.global_certificate = Some(GlobalCertificate {
        certified: rel.certified,
        order: opts.order,
        rank: rel.moment_matrix_ranks[opts.order],
        lower_bound: rel.optimum.min(rel.sdp.dual_objective) * qscale,
        solver_status: rel.solver_status,
    });
    Ok(GlobalEstimate { f, sdp, relaxation: rel })
}

fn det_gradient(f: &Matrix3<f64>) -> Matrix3<f64> {
    // cofactor matrix
    let mut c = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
            let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
            c[(i, j)] = f[(i1, j1)] * f[(i2, j2)] - f[(i1, j2)] * f[(i2, j1)];
        }
    }
    c
}

fn det_hessian(f: &[f64; 9]) -> SMatrix<f64, 9, 9> {
    let p = det_polynomial();
    let h = p.hessian(f).expect("nine variables");
    SMatrix::<f64, 9, 9>::from_fn(|i, j| h[(i, j)])
}

/// Newton iterations on the Lagrange system of
/// `min f^T Q f  s.t.  ||f||^2 = 1, det f = 0`, started at `f0`.
fn kkt_polish(q: &SMatrix<f64, 9, 9>, f0: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let to_vec = |m: &Matrix3<f64>| SVector::<f64, 9>::from_row_slice(m.transpose().as_slice());
    let to_mat = |v: &SVector<f64, 9>| Matrix3::from_row_slice(v.as_slice());
    let mut f = to_vec(&(f0 / f0.norm()));
    let scale = q.amax().max(1e-300);
    let q = q / scale;

    // initial multipliers by least squares on stationarity
    let grad_det = |f: &SVector<f64, 9>| to_vec(&det_gradient(&to_mat(f)));
    let g = grad_det(&f);
    let qf2 = q * f * 2.0;
    let a = DMatrix::from_columns(&[DVector::from_column_slice((f * 2.0).as_slice()), DVector::from_column_slice(g.as_slice())]);
    let lam = a.svd(true, true).solve(&DVector::from_column_slice(qf2.as_slice()), 1e-14).ok()?;
    let (mut l1, mut l2) = (lam[0], lam[1]);

    let residual = |f: &SVector<f64, 9>, l1: f64, l2: f64| -> DVector<f64> {
        let g = grad_det(f);
        let stat = q * f * 2.0 - f * (2.0 * l1) - g * l2;
        let mut r = DVector::zeros(11);
        r.rows_mut(0, 9).copy_from(&stat);
        r[9] = f.norm_squared() - 1.0;
        r[10] = to_mat(f).determinant();
        r
    };
    let mut r = residual(&f, l1, l2);
    for _ in 0..30 {
        if r.amax() < 1e-15 {
            break;
        }
        let arr: [f64; 9] = f.as_slice().try_into().ok()?;
        let hd = det_hessian(&arr);
        let g = grad_det(&f);
        let mut j = DMatrix::zeros(11, 11);
        let top = q * 2.0 - SMatrix::<f64, 9, 9>::identity() * (2.0 * l1) - hd * l2;
        for a in 0..9 {
            for b in 0..9 {
                j[(a, b)] = top[(a, b)];
            }
            j[(a, 9)] = -2.0 * f[a];
            j[(a, 10)] = -g[a];
            j[(9, a)] = 2.0 * f[a];
            j[(10, a)] = g[a];
        }
        let step = j.lu().solve(&(-&r))?;
        let mut nf = f;
        for a in 0..9 {
            nf[a] += step[a];
        }
        let (nl1, nl2) = (l1 + step[9], l2 + step[10]);
        let nr = residual(&nf, nl1, nl2);
        if !(nr.norm() < r.norm()) {
            break;
        }
        f = nf;
        l1 = nl1;
        l2 = nl2;
        r = nr;
    }
    if f.iter().all(|v| v.is_finite()) {
        Some(to_mat(&f))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_matches() -> Vec<PointMatch> {
        [(0.0, 0.0), (2.0, 0.0), (0.0, 2.0), (2.0, 2.0)]
            .iter()
            .map(|&(x, y)| PointMatch::new(x, y, x, y))
            .collect()
    }

    #[test]
    fn standardize_square() {
        let (out, st) = standardize(&square_matches()).unwrap();
        let rms = (out.iter().map(|m| m.q.x.powi(2) + m.q.y.powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((rms - 2f64.sqrt()).abs() < 1e-12);
        let c: f64 = out.iter().map(|m| m.q.x).sum();
        assert!(c.abs() < 1e-12);
        assert!(((st.t1 * Vector3::new(1.0, 1.0, 1.0)).xy()).norm() < 1e-12);
        let (_, again) = standardize(&out).unwrap();
        assert!((again.t1 - Matrix3::identity()).norm() < 1e-10);
        assert!((again.t2 - Matrix3::identity()).norm() < 1e-10);
    }

    #[test]
    fn standardize_rejects_coincident_points() {
        let m = vec![PointMatch::new(1.0, 1.0, 0.0, 0.0); 8];
        assert_eq!(standardize(&m).unwrap_err(), EpipolarError::DegenerateCloud(1));
    }

    #[test]
    fn cost_examples() {
        let m = [PointMatch::new(1.0, 1.0, 1.0, 1.0)];
        assert_eq!(algebraic_cost(&Matrix3::zeros(), &m), 0.0);
        let f = Matrix3::identity() / 3f64.sqrt();
        assert!((algebraic_cost(&f, &m) - 3.0).abs() < 1e-12);
        let q = cost_matrix(&m);
        let v = SVector::<f64, 9>::from_row_slice(f.transpose().as_slice());
        assert!(((v.transpose() * q * v)[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn projection_of_diagonal() {
        let f = Matrix3::from_diagonal(&Vector3::new(3.0, 2.0, 1.0)) / 14f64.sqrt();
        let (p, d) = project_rank2(&f).unwrap();
        let want = Matrix3::from_diagonal(&Vector3::new(3.0, 2.0, 0.0)) / 13f64.sqrt();
        assert!((p.m - want).norm() < 1e-12);
        assert!((d - 1.0 / 14f64.sqrt()).abs() < 1e-14);
        assert!(p.det().abs() < 1e-15);
    }

    #[test]
    fn projection_rejects_rank_one() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(project_rank2(&(v * v.transpose())).unwrap_err(), EpipolarError::RankDeficientInput);
    }

    #[test]
    fn det_polynomial_matches_determinant() {
        let m = Matrix3::new(0.3, -1.0, 2.0, 0.5, 0.7, -0.2, 1.1, 0.4, 0.9);
        let x: Vec<f64> = m.transpose().as_slice().to_vec();
        assert!((det_polynomial().eval(&x).unwrap() - m.determinant()).abs() < 1e-14);
        let g = det_polynomial().gradient(&x).unwrap();
        let c = det_gradient(&m);
        for i in 0..9 {
            assert!((g[i] - c[(i / 3, i % 3)]).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_form_matches_cost() {
        let ms: Vec<PointMatch> = (0..10)
            .map(|i| {
                let t = i as f64;
                PointMatch::new(t.sin(), t.cos(), (2.0 * t).sin(), t * 0.1)
            })
            .collect();
        let p = quadratic_form(&cost_matrix(&ms));
        let f = Matrix3::new(0.3, -1.0, 2.0, 0.5, 0.7, -0.2, 1.1, 0.4, 0.9);
        let x: Vec<f64> = f.transpose().as_slice().to_vec();
        assert!((p.eval(&x).unwrap() - algebraic_cost(&f, &ms)).abs() < 1e-10);
    }

    #[test]
    fn too_few_matches() {
        let m = vec![PointMatch::new(1.0, 2.0, 3.0, 4.0); 7];
        assert_eq!(linear_f(&m).unwrap_err(), EpipolarError::TooFewMatches(7));
        assert_eq!(
            global_f(&m, &GlobalOptions::default()).unwrap_err(),
            EpipolarError::TooFewMatches(7)
        );
    }

    #[test]
    fn f_file_round_trip() {
        let f = FMatrix::from_rank2(Matrix3::new(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9 + 1e-17));
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        let g = FMatrix::read(&buf[..]).unwrap();
        assert_eq!(f.m, g.m);
        assert!(FMatrix::read("1 2 3\n".as_bytes()).is_err());
    }
}
