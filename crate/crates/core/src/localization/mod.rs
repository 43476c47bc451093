//! Unscented Kalman filter over `(x, y, yaw, speed)` fed by GNSS positions.
//!
//! The process model is the same kinematic bicycle used by the simulator.
//! Sigma points use the scaled (Van der Merwe) parameterisation; yaw is
//! recombined with a weighted circular mean.

mod track;


use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::step_bicycle;
use crate::scalar::wrap_angle;
use crate::world::DEFAULT_GNSS_SIGMA;
use crate::{Command, Params, Point, State};

pub use track::{
    evaluate, read_track, synthesize_track, tune, urban_commands, urban_track, write_track, ErrorReport,
    SeedErrors, TrackError, TrackRecord, TuneGrid, TuneResult,
};

pub const DIM: usize = 4;
pub const POINTS: usize = 2 * DIM + 1;
const YAW: usize = 2;
const SPEED: usize = 3;
const JITTER: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UkfError {
    #[error("covariance is not positive semi-definite (pivot {pivot} = {value:e})")]
    NotPsd { pivot: usize, value: f64 },
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UkfState {
    /// `(x, y, yaw, speed)`.
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl UkfState {
    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>) -> Self {
        UkfState { mean, cov }
    }

    pub fn from_state(state: &State, cov: Matrix4<f64>) -> Self {
        UkfState {
            mean: Vector4::new(state.pose.x, state.pose.y, state.pose.yaw, state.speed),
            cov,
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.mean[0], self.mean[1])
    }

    pub fn yaw(&self) -> f64 {
        self.mean[YAW]
    }

    pub fn speed(&self) -> f64 {
        self.mean[SPEED]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Process noise added per predict step.
    pub q: Matrix4<f64>,
    /// GNSS measurement noise.
    pub r: Matrix2<f64>,
}

impl UkfParams {
    /// Diagonal noise from per-step standard deviations.
    pub fn diagonal(q_pos: f64, q_yaw: f64, q_speed: f64, r_pos: f64) -> Self {
        UkfParams {
            q: Matrix4::from_diagonal(&Vector4::new(
                q_pos * q_pos,
                q_pos * q_pos,
                q_yaw * q_yaw,
                q_speed * q_speed,
            )),
            r: Matrix2::from_diagonal_element(r_pos * r_pos),
            ..UkfParams::default()
        }
    }

    fn lambda(&self) -> f64 {
        self.alpha * self.alpha * (DIM as f64 + self.kappa) - DIM as f64
    }
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams {
            alpha: 0.1,
            beta: 2.0,
            kappa: 0.0,
            q: Matrix4::from_diagonal(&Vector4::new(1e-6, 1e-6, 1e-6, 1e-4)),
            r: Matrix2::from_diagonal_element(DEFAULT_GNSS_SIGMA * DEFAULT_GNSS_SIGMA),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaPoints {
    pub points: [Vector4<f64>; POINTS],
    pub wm: [f64; POINTS],
    pub wc: [f64; POINTS],
}

/// Lower-triangular `L` with `L Lᵀ = m` for positive semi-definite `m`.
///
/// Pivots that vanish (relative to the diagonal scale) produce zero columns
/// instead of failing, so degenerate covariances are accepted.
pub fn psd_cholesky(m: &Matrix4<f64>) -> Result<Matrix4<f64>, UkfError> {
    let scale = (0..DIM).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-13 * scale;
    let mut l = Matrix4::zeros();
    for j in 0..DIM {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(UkfError::NotPsd { pivot: j, value: d });
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..DIM {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

fn sqrt_with_jitter(m: &Matrix4<f64>) -> Result<Matrix4<f64>, UkfError> {
    psd_cholesky(m).or_else(|_| psd_cholesky(&(m + Matrix4::identity() * JITTER)))
}

pub fn sigma_points(
    mean: &Vector4<f64>,
    cov: &Matrix4<f64>,
    params: &UkfParams,
) -> Result<SigmaPoints, UkfError> {
    let n = DIM as f64;
    let lambda = params.lambda();
    let l = sqrt_with_jitter(&(cov * (n + lambda)))?;
    let mut points = [*mean; POINTS];
    for i in 0..DIM {
        let col = l.column(i);
        points[1 + i] = mean + col;
        points[1 + DIM + i] = mean - col;
    }
    for p in points.iter_mut() {
        p[YAW] = wrap_angle(p[YAW]);
    }
    let w = 1.0 / (2.0 * (n + lambda));
    let mut wm = [w; POINTS];
    let mut wc = [w; POINTS];
    wm[0] = lambda / (n + lambda);
    wc[0] = wm[0] + 1.0 - params.alpha * params.alpha + params.beta;
    Ok(SigmaPoints { points, wm, wc })
}

/// Weighted mean with yaw averaged on the circle.
///
/// The scaled weights can be strongly negative at the center point; if that
/// flips the circular resultant away from the center point the yaw falls back
/// to the weighted mean of residuals about the center.
pub fn weighted_mean(points: &[Vector4<f64>; POINTS], wm: &[f64; POINTS]) -> Vector4<f64> {
    let mut mean = Vector4::zeros();
    let (mut s, mut c) = (0.0, 0.0);
    for (p, &w) in points.iter().zip(wm) {
        mean += p * w;
        s += w * p[YAW].sin();
        c += w * p[YAW].cos();
    }
    let center = points[0][YAW];
    mean[YAW] = if s * center.sin() + c * center.cos() > 0.0 {
        s.atan2(c)
    } else {
        let off: f64 = points
            .iter()
            .zip(wm)
            .map(|(p, &w)| w * wrap_angle(p[YAW] - center))
            .sum();
        wrap_angle(center + off)
    };
    mean
}

fn residual(p: &Vector4<f64>, mean: &Vector4<f64>) -> Vector4<f64> {
    let mut d = p - mean;
    d[YAW] = wrap_angle(d[YAW]);
    d
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

fn process(p: &Vector4<f64>, cmd: &Command, vehicle: &Params, dt: f64) -> Vector4<f64> {
    let s = State::new(p[0], p[1], p[YAW], p[SPEED].max(0.0));
    let n = step_bicycle(&s, cmd, vehicle, dt);
    Vector4::new(n.pose.x, n.pose.y, n.pose.yaw, n.speed)
}

pub fn predict(
    ukf: &UkfState,
    cmd: &Command,
    dt: f64,
    vehicle: &Params,
    params: &UkfParams,
) -> Result<UkfState, UkfError> {
    let sp = sigma_points(&ukf.mean, &ukf.cov, params)?;
    let mut moved = sp.points;
    for p in moved.iter_mut() {
        *p = process(p, cmd, vehicle, dt);
    }
    let mean = weighted_mean(&moved, &sp.wm);
    let mut cov = params.q;
    for (p, &w) in moved.iter().zip(&sp.wc) {
        let d = residual(p, &mean);
        cov += d * d.transpose() * w;
    }
    Ok(UkfState {
        mean,
        cov: symmetrize(&cov),
    })
}

/// Measurement update with `h(state) = (x, y)`. Also returns the innovation.
pub fn update_with_innovation(
    ukf: &UkfState,
    gnss: Point,
    params: &UkfParams,
) -> Result<(UkfState, Vector2<f64>), UkfError> {
    let sp = sigma_points(&ukf.mean, &ukf.cov, params)?;
    let z: Vec<Vector2<f64>> = sp.points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
    let mut z_mean = Vector2::zeros();
    for (zi, &w) in z.iter().zip(&sp.wm) {
        z_mean += zi * w;
    }
    let mut s = params.r;
    let mut cross = Matrix4x2::zeros();
    for ((p, zi), &w) in sp.points.iter().zip(&z).zip(&sp.wc) {
        let dz = zi - z_mean;
        s += dz * dz.transpose() * w;
        cross += residual(p, &ukf.mean) * dz.transpose() * w;
    }
    let s = (s + s.transpose()) * 0.5;
    let s_inv = s.try_inverse().ok_or(UkfError::SingularInnovation)?;
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Err(UkfError::SingularInnovation);
    }
    let k = cross * s_inv;
    let innovation = Vector2::new(gnss.x, gnss.y) - z_mean;
    let mut mean = ukf.mean + k * innovation;
    mean[YAW] = wrap_angle(mean[YAW]);
    let cov = symmetrize(&(ukf.cov - k * s * k.transpose()));
    Ok((UkfState { mean, cov }, innovation))
}

pub fn update(ukf: &UkfState, gnss: Point, params: &UkfParams) -> Result<UkfState, UkfError> {
    update_with_innovation(ukf, gnss, params).map(|(s, _)| s)
}

/// Outcome of filtering one recorded track.
#[derive(Clone, Debug)]
pub struct FilterRun {
    pub estimates: Vec<UkfState>,
    /// Mean Euclidean distance between filtered and true positions.
    pub mean_error: f64,
    /// Mean Euclidean distance between raw GNSS and true positions.
    pub raw_error: f64,
}

/// Initial covariance used by [`run_filter`]: GNSS-level position uncertainty,
/// heading and speed known roughly from the vehicle at rest.
pub fn initial_cov(params: &UkfParams) -> Matrix4<f64> {
    let mut p = Matrix4::from_diagonal(&Vector4::new(0.0, 0.0, 0.05 * 0.05, 0.25 * 0.25));
    p.fixed_view_mut::<2, 2>(0, 0).copy_from(&params.r);
    p
}

/// Alternating predict/update over a track sampled at fixed `dt`.
///
/// The first record initialises the filter from its GNSS fix together with
/// the true heading and speed; each later record's command drives the step
/// that ends at that record.
pub fn run_filter(
    track: &[TrackRecord],
    dt: f64,
    vehicle: &Params,
    params: &UkfParams,
) -> Result<FilterRun, UkfError> {
    let Some(first) = track.first() else {
        return Ok(FilterRun {
            estimates: Vec::new(),
            mean_error: 0.0,
            raw_error: 0.0,
        });
    };
    let init = State::new(first.gnss.x, first.gnss.y, first.truth.pose.yaw, first.truth.speed);
    let mut ukf = UkfState::from_state(&init, initial_cov(params));
    let mut estimates = Vec::with_capacity(track.len());
    estimates.push(ukf);
    for rec in &track[1..] {
        ukf = predict(&ukf, &rec.cmd, dt, vehicle, params)?;
        ukf = update(&ukf, rec.gnss, params)?;
        estimates.push(ukf);
    }
    let n = track.len() as f64;
    let mean_error = estimates
        .iter()
        .zip(track)
        .map(|(e, r)| e.position().distance(r.truth.position()))
        .sum::<f64>()
        / n;
    let raw_error = track
        .iter()
        .map(|r| r.gnss.distance(r.truth.position()))
        .sum::<f64>()
        / n;
    Ok(FilterRun {
        estimates,
        mean_error,
        raw_error,
    })
}

/// Largest asymmetry and smallest eigenvalue of a covariance.
pub fn covariance_health(cov: &Matrix4<f64>) -> (f64, f64) {
    let asym = (cov - cov.transpose()).abs().max();
    let min_eig = symmetrize(cov).symmetric_eigenvalues().min();
    (asym, min_eig)
}
