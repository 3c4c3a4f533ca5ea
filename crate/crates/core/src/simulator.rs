//! Synthetic two-view scenes: random points in a cube seen by two calibrated
//! cameras, Gaussian pixel noise, and Monte-Carlo sweeps comparing the two
//! estimators.
//!
//! The first camera sits on the negative z axis at `camera_distance` from the
//! cube centre, looking along +z. For a motion `(R, t)` the second camera
//! centre is `C1 + t` and its world-to-camera rotation is `R`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::epipolar::{GlobalOptions, PointMatch};
use crate::multiview::{estimate_and_evaluate, format_sig, skew, BaOptions, Method};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown motion {0} (expected 1 or 2)")]
    InvalidMotion(u8),
    #[error("could not place a point in front of both cameras after 100 attempts")]
    CameraBehindScene,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionSpec {
    pub r: Matrix3<f64>,
    pub t: Vector3<f64>,
}

fn rot_y(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// The two benchmark motions: rotation about the y axis by pi/3 with
/// translation (20, 0, 5), and by pi/6 with translation (6, 0, 0).
pub fn motion(k: u8) -> Result<MotionSpec, SimError> {
    match k {
        1 => Ok(MotionSpec {
            r: rot_y(PI / 3.0),
            t: Vector3::new(20.0, 0.0, 5.0),
        }),
        2 => Ok(MotionSpec {
            r: rot_y(PI / 6.0),
            t: Vector3::new(6.0, 0.0, 0.0),
        }),
        _ => Err(SimError::InvalidMotion(k)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneConfig {
    pub n_points: usize,
    pub cube_side: f64,
    pub camera_distance: f64,
    pub focal: f64,
    pub resolution: (f64, f64),
    pub principal_point: (f64, f64),
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_points: 50,
            cube_side: 10.0,
            camera_distance: 15.0,
            focal: 700.0,
            resolution: (640.0, 480.0),
            principal_point: (320.0, 240.0),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal,
            0.0,
            self.principal_point.0,
            0.0,
            self.focal,
            self.principal_point.1,
            0.0,
            0.0,
            1.0,
        )
    }

    fn validate(&self) -> Result<(), SimError> {
        let pos = [self.cube_side, self.camera_distance, self.focal, self.resolution.0, self.resolution.1];
        if pos.iter().any(|v| !(*v > 0.0)) {
            return Err(SimError::InvalidConfig("sizes must be positive".into()));
        }
        let (cx, cy) = self.principal_point;
        if !(cx > 0.0 && cx < self.resolution.0 && cy > 0.0 && cy < self.resolution.1) {
            return Err(SimError::InvalidConfig("principal point outside the image".into()));
        }
        if self.n_points < 8 {
            return Err(SimError::InvalidConfig("need at least 8 points".into()));
        }
        Ok(())
    }
}

/// Projection matrices and the true fundamental matrix of a configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraRig {
    pub p1: Matrix3x4<f64>,
    pub p2: Matrix3x4<f64>,
    /// `K^-T [t_rel]_x R K^-1`, unit Frobenius norm.
    pub f_true: Matrix3<f64>,
}

pub fn camera_rig(cfg: &SceneConfig, m: &MotionSpec) -> CameraRig {
    let k = cfg.intrinsics();
    let c1 = Vector3::new(0.0, 0.0, -cfg.camera_distance);
    let c2 = c1 + m.t;
    let mut e1 = Matrix3x4::zeros();
    e1.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    e1.set_column(3, &(-c1));
    let mut e2 = Matrix3x4::zeros();
    e2.fixed_view_mut::<3, 3>(0, 0).copy_from(&m.r);
    e2.set_column(3, &(-(m.r * c2)));
    let k_inv = k.try_inverse().expect("focal is positive");
    let t_rel = -(m.r * m.t);
    let f = k_inv.transpose() * skew(&t_rel) * m.r * k_inv;
    CameraRig {
        p1: k * e1,
        p2: k * e2,
        f_true: f / f.norm(),
    }
}

/// `n_points` uniform samples in the cube of side `cube_side` centred at the
/// origin.
pub fn make_scene(cfg: &SceneConfig) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.n_points).map(|_| sample_cube(&mut rng, cfg.cube_side)).collect()
}

fn sample_cube(rng: &mut ChaCha8Rng, side: f64) -> Vector3<f64> {
    let h = side / 2.0;
    Vector3::new(rng.gen_range(-h..h), rng.gen_range(-h..h), rng.gen_range(-h..h))
}

fn visible(cfg: &SceneConfig, p: &Matrix3x4<f64>, x: &Vector3<f64>) -> Option<(f64, f64)> {
    let h = p * x.push(1.0);
    if h.z <= 0.0 {
        return None;
    }
    let (u, v) = (h.x / h.z, h.y / h.z);
    let (w, ht) = cfg.resolution;
    if u < -w / 2.0 || u > 1.5 * w || v < -ht / 2.0 || v > 1.5 * ht {
        return None;
    }
    Some((u, v))
}

/// Exact projections of `points` into both cameras. Points behind a camera or
/// far outside the frame are resampled (deterministically), so the returned
/// point list may differ from the input.
pub fn project_matches(
    points: &[Vector3<f64>],
    m: &MotionSpec,
    cfg: &SceneConfig,
) -> Result<(Vec<Vector3<f64>>, Vec<PointMatch>), SimError> {
    let rig = camera_rig(cfg, m);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa5a5_5a5a_c3c3_3c3c);
    let mut pts = Vec::with_capacity(points.len());
    let mut out = Vec::with_capacity(points.len());
    for x in points {
        let mut x = *x;
        let mut tries = 0;
        loop {
            if let (Some(a), Some(b)) = (visible(cfg, &rig.p1, &x), visible(cfg, &rig.p2, &x)) {
                out.push(PointMatch::new(a.0, a.1, b.0, b.1));
                pts.push(x);
                break;
            }
            tries += 1;
            if tries > 100 {
                return Err(SimError::CameraBehindScene);
            }
            x = sample_cube(&mut rng, cfg.cube_side);
        }
    }
    Ok((pts, out))
}

/// Standard normal sample by the Box-Muller transform.
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // u1 in (0, 1] so the log is finite
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Adds independent `N(0, sigma^2)` noise to every pixel coordinate.
pub fn add_noise(matches: &[PointMatch], sigma: f64, seed: u64) -> Vec<PointMatch> {
    if sigma == 0.0 {
        return matches.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    matches
        .iter()
        .map(|m| {
            let d: [f64; 4] = std::array::from_fn(|_| sigma * gaussian(&mut rng));
            PointMatch::new(m.q.x + d[0], m.q.y + d[1], m.qp.x + d[2], m.qp.y + d[3])
        })
        .collect()
}

/// Noise seed used for a trial seed.
pub fn noise_seed(trial_seed: u64) -> u64 {
    trial_seed.wrapping_add(0x9e37_79b9_7f4a_7c15)
}

/// One noisy instance: scene from `seed`, noise from [`noise_seed`]`(seed)`.
pub fn instance(cfg: &SceneConfig, motion_k: u8, sigma: f64) -> Result<(CameraRig, Vec<PointMatch>), SimError> {
    cfg.validate()?;
    let m = motion(motion_k)?;
    let (_, exact) = project_matches(&make_scene(cfg), &m, cfg)?;
    Ok((camera_rig(cfg, &m), add_noise(&exact, sigma, noise_seed(cfg.seed))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Noise,
    PointCount,
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub motion: u8,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    /// Point count for noise sweeps.
    pub n_points: usize,
    /// Noise level for point-count sweeps.
    pub sigma: f64,
    pub scene: SceneConfig,
    pub global: GlobalOptions,
    pub ba: BaOptions,
}

impl SweepConfig {
    pub fn noise(motion: u8) -> Self {
        SweepConfig {
            kind: SweepKind::Noise,
            motion,
            grid: (0..=8).map(|i| i as f64 * 0.25).collect(),
            trials: 100,
            base_seed: 42,
            n_points: 50,
            sigma: 0.5,
            scene: SceneConfig::default(),
            global: GlobalOptions::default(),
            ba: BaOptions::default(),
        }
    }

    pub fn points(motion: u8) -> Self {
        SweepConfig {
            kind: SweepKind::PointCount,
            grid: (1..=10).map(|i| 10.0 * i as f64).collect(),
            ..SweepConfig::noise(motion)
        }
    }
}

/// Per-trial outcome of one method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub e_init: f64,
    pub e_ba: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub grid_value: f64,
    pub method: Method,
    pub mean_e_init: f64,
    pub mean_e_ba: f64,
    pub mean_iters: f64,
    pub failures: usize,
    pub trials: usize,
    /// Successful trial outcomes in trial order.
    pub outcomes: Vec<Option<TrialOutcome>>,
}

pub const SWEEP_HEADER: &str = "grid_value,method,mean_e_init,mean_e_ba,mean_iters,failures,trials";

impl SweepCell {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            format_sig(self.grid_value, 6),
            self.method.name(),
            format_sig(self.mean_e_init, 6),
            format_sig(self.mean_e_ba, 6),
            format_sig(self.mean_iters, 6),
            self.failures,
            self.trials
        )
    }
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for c in cells {
        s.push_str(&c.csv_row());
        s.push('\n');
    }
    s
}

fn run_trial(cfg: &SweepConfig, value: f64, trial: usize) -> [Option<TrialOutcome>; 2] {
    let (n, sigma) = match cfg.kind {
        SweepKind::Noise => (cfg.n_points, value),
        SweepKind::PointCount => (value.round() as usize, cfg.sigma),
    };
    let scene = SceneConfig {
        n_points: n,
        seed: cfg.base_seed.wrapping_add(trial as u64),
        ..cfg.scene
    };
    let Ok((_, matches)) = instance(&scene, cfg.motion, sigma) else {
        return [None, None];
    };
    [Method::EightPoint, Method::Global].map(|m| {
        estimate_and_evaluate(m, &matches, &cfg.global, &cfg.ba)
            .ok()
            .map(|(_, r)| TrialOutcome {
                e_init: r.e_init,
                e_ba: r.e_ba,
                iterations: r.iterations,
            })
    })
}

/// Runs every (grid value, trial) pair. Trial `i` uses scene seed
/// `base_seed + i`, so the same scenes are reused along the grid. Trials run
/// in parallel; aggregation is in trial order and therefore deterministic.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepCell>, SimError> {
    use rayon::prelude::*;
    if cfg.grid.is_empty() {
        return Err(SimError::InvalidConfig("empty grid".into()));
    }
    motion(cfg.motion)?;
    let mut cells = Vec::with_capacity(2 * cfg.grid.len());
    for &value in &cfg.grid {
        let results: Vec<[Option<TrialOutcome>; 2]> =
            (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, value, i)).collect();
        for (k, method) in [Method::EightPoint, Method::Global].into_iter().enumerate() {
            let outcomes: Vec<Option<TrialOutcome>> = results.iter().map(|r| r[k]).collect();
            let ok: Vec<&TrialOutcome> = outcomes.iter().flatten().collect();
            let cnt = ok.len().max(1) as f64;
            let mean = |f: &dyn Fn(&TrialOutcome) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|o| f(o)).sum::<f64>() / cnt
                }
            };
            cells.push(SweepCell {
                grid_value: value,
                method,
                mean_e_init: mean(&|o| o.e_init),
                mean_e_ba: mean(&|o| o.e_ba),
                mean_iters: mean(&|o| o.iterations as f64),
                failures: cfg.trials - ok.len(),
                trials: cfg.trials,
                outcomes,
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motions() {
        let m1 = motion(1).unwrap();
        let x = m1.r * Vector3::new(1.0, 0.0, 0.0);
        assert!((x - Vector3::new(0.5, 0.0, -(3f64.sqrt()) / 2.0)).norm() < 1e-15);
        assert_eq!(motion(2).unwrap().t, Vector3::new(6.0, 0.0, 0.0));
        for k in [1, 2] {
            let r = motion(k).unwrap().r;
            assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
        assert_eq!(motion(3), Err(SimError::InvalidMotion(3)));
    }

    #[test]
    fn scene_is_deterministic_and_bounded() {
        let cfg = SceneConfig::default();
        let a = make_scene(&cfg);
        assert_eq!(a, make_scene(&cfg));
        assert!(a.iter().all(|p| p.amax() <= 5.0));
    }

    #[test]
    fn exact_matches_satisfy_true_epipolar_geometry() {
        for k in [1, 2] {
            let cfg = SceneConfig::default();
            let m = motion(k).unwrap();
            let rig = camera_rig(&cfg, &m);
            assert!(rig.f_true.determinant().abs() < 1e-12);
            let (pts, matches) = project_matches(&make_scene(&cfg), &m, &cfg).unwrap();
            assert_eq!(matches.len(), 50);
            for (x, mt) in pts.iter().zip(&matches) {
                let a = mt.q / mt.q.norm();
                let b = mt.qp / mt.qp.norm();
                assert!(b.dot(&(rig.f_true * a)).abs() < 1e-12);
                assert!((rig.p1 * x.push(1.0)).z > 0.0);
                assert!((rig.p2 * x.push(1.0)).z > 0.0);
            }
        }
    }

    #[test]
    fn cube_centre_projects_near_image_centre() {
        let cfg = SceneConfig::default();
        for k in [1, 2] {
            let rig = camera_rig(&cfg, &motion(k).unwrap());
            for p in [rig.p1, rig.p2] {
                let h = p * nalgebra::Vector4::new(0.0, 0.0, 0.0, 1.0);
                let (u, v) = (h.x / h.z, h.y / h.z);
                assert!((u - 320.0).abs() < 160.0 && (v - 240.0).abs() < 1e-9, "{u} {v}");
            }
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let m = vec![PointMatch::new(1.0, 2.0, 3.0, 4.0); 3];
        assert_eq!(add_noise(&m, 0.0, 5), m);
        let n = add_noise(&m, 1.0, 5);
        assert!(n.iter().all(|p| p.q.z == 1.0 && p.qp.z == 1.0));
    }

    #[test]
    fn sweep_csv_layout() {
        let cell = SweepCell {
            grid_value: 0.25,
            method: Method::EightPoint,
            mean_e_init: 0.1,
            mean_e_ba: 0.05,
            mean_iters: 4.5,
            failures: 0,
            trials: 2,
            outcomes: vec![],
        };
        assert_eq!(sweep_csv(&[cell]), format!("{SWEEP_HEADER}\n0.25,eightpoint,0.1,0.05,4.5,0,2\n"));
    }
}
