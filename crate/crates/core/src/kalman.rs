//! Constant-velocity Kalman filter over `[cx, cy, vx, vy, w, h]`.
//!
//! The measurement is the box in center form `[cx, cy, w, h]`, so the
//! observation matrix is a plain selection and the filter stays linear.

use thiserror::Error;

use crate::geometry::BBox;
use crate::scalar::Scalar;

pub const STATE_DIM: usize = 6;
pub const MEAS_DIM: usize = 4;

/// Indices of the measured state components.
const OBSERVED: [usize; MEAS_DIM] = [0, 1, 4, 5];

/// Innovation covariance condition number beyond which an update is refused.
const MAX_CONDITION: f64 = 1e12;

/// Floor applied to the filtered width/height.
const MIN_SIZE: f64 = 1e-3;

type Mat6<S> = [[S; STATE_DIM]; STATE_DIM];
type Mat4<S> = [[S; MEAS_DIM]; MEAS_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KalmanError {
    #[error("innovation covariance is singular or ill-conditioned (cond ~ {0:e})")]
    SingularInnovation(f64),
}

/// Noise model. Process terms are per frame; `r` is per measured component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanModel<S> {
    pub q_pos: S,
    pub q_vel: S,
    pub q_size: S,
    pub r: S,
    pub init_vel_var: S,
}

impl<S: Scalar> Default for KalmanModel<S> {
    fn default() -> Self {
        Self {
            q_pos: S::lit(1.0),
            q_vel: S::lit(0.25),
            q_size: S::lit(1.0),
            r: S::lit(4.0),
            init_vel_var: S::lit(100.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState<S> {
    pub x: [S; STATE_DIM],
    pub p: Mat6<S>,
}

impl<S: Scalar> TrackState<S> {
    pub fn cx(&self) -> S {
        self.x[0]
    }

    pub fn cy(&self) -> S {
        self.x[1]
    }

    pub fn velocity(&self) -> (S, S) {
        (self.x[2], self.x[3])
    }

    /// Current box estimate in corner form.
    pub fn bbox(&self) -> BBox<S> {
        let min = S::lit(MIN_SIZE);
        BBox::from_center(self.x[0], self.x[1], self.x[4].max(min), self.x[5].max(min))
            .unwrap_or(BBox {
                x: self.x[0],
                y: self.x[1],
                w: min,
                h: min,
            })
    }
}

impl<S: Scalar> KalmanModel<S> {
    /// New state at the box center with zero velocity and inflated velocity variance.
    pub fn initiate(&self, z: &BBox<S>) -> TrackState<S> {
        let c = z.center();
        let mut p = zeros6();
        p[0][0] = self.r;
        p[1][1] = self.r;
        p[2][2] = self.init_vel_var;
        p[3][3] = self.init_vel_var;
        p[4][4] = self.r;
        p[5][5] = self.r;
        TrackState {
            x: [c.x, c.y, S::zero(), S::zero(), z.w, z.h],
            p,
        }
    }

    /// Propagate `dt` frames: `x' = F x`, `P' = F P Fᵀ + Q dt`.
    pub fn predict(&self, s: &TrackState<S>, dt: S) -> TrackState<S> {
        let mut x = s.x;
        x[0] += x[2] * dt;
        x[1] += x[3] * dt;

        // F P Fᵀ where F = I + dt (e0 e2ᵀ + e1 e3ᵀ)
        let mut fp = s.p;
        for c in 0..STATE_DIM {
            fp[0][c] += dt * s.p[2][c];
            fp[1][c] += dt * s.p[3][c];
        }
        let mut p = fp;
        for row in p.iter_mut() {
            row[0] += dt * row[2];
            row[1] += dt * row[3];
        }
        let q = [self.q_pos, self.q_pos, self.q_vel, self.q_vel, self.q_size, self.q_size];
        for i in 0..STATE_DIM {
            p[i][i] += q[i] * dt;
        }
        TrackState { x, p: symmetrize(&p) }
    }

    /// Kalman update with the Joseph-form covariance.
    pub fn update(&self, s: &TrackState<S>, z: &BBox<S>) -> Result<TrackState<S>, KalmanError> {
        let c = z.center();
        let meas = [c.x, c.y, z.w, z.h];

        // S = H P Hᵀ + R
        let mut innov_cov: Mat4<S> = [[S::zero(); MEAS_DIM]; MEAS_DIM];
        for (a, &ia) in OBSERVED.iter().enumerate() {
            for (b, &ib) in OBSERVED.iter().enumerate() {
                innov_cov[a][b] = s.p[ia][ib];
            }
            innov_cov[a][a] += self.r;
        }
        let inv = invert4(&innov_cov)?;

        // K = P Hᵀ S⁻¹ (6x4)
        let mut gain = [[S::zero(); MEAS_DIM]; STATE_DIM];
        for (i, row) in gain.iter_mut().enumerate() {
            for (j, g) in row.iter_mut().enumerate() {
                *g = (0..MEAS_DIM).fold(S::zero(), |acc, k| acc + s.p[i][OBSERVED[k]] * inv[k][j]);
            }
        }

        let mut x = s.x;
        let resid: Vec<S> = (0..MEAS_DIM).map(|k| meas[k] - s.x[OBSERVED[k]]).collect();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += (0..MEAS_DIM).fold(S::zero(), |acc, k| acc + gain[i][k] * resid[k]);
        }

        // A = I - K H
        let mut a = identity6();
        for i in 0..STATE_DIM {
            for (k, &col) in OBSERVED.iter().enumerate() {
                a[i][col] -= gain[i][k];
            }
        }
        let apa = mul_abt(&mul(&a, &s.p), &a);
        let mut p = apa;
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                let krk = (0..MEAS_DIM).fold(S::zero(), |acc, k| acc + gain[i][k] * gain[j][k]);
                p[i][j] += self.r * krk;
            }
        }

        let min = S::lit(MIN_SIZE);
        x[4] = x[4].max(min);
        x[5] = x[5].max(min);
        Ok(TrackState { x, p: symmetrize(&p) })
    }
}

fn zeros6<S: Scalar>() -> Mat6<S> {
    [[S::zero(); STATE_DIM]; STATE_DIM]
}

fn identity6<S: Scalar>() -> Mat6<S> {
    let mut m = zeros6();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = S::one();
    }
    m
}

fn mul<S: Scalar>(a: &Mat6<S>, b: &Mat6<S>) -> Mat6<S> {
    let mut out = zeros6();
    for i in 0..STATE_DIM {
        for j in 0..STATE_DIM {
            out[i][j] = (0..STATE_DIM).fold(S::zero(), |acc, k| acc + a[i][k] * b[k][j]);
        }
    }
    out
}

/// `a · bᵀ`
fn mul_abt<S: Scalar>(a: &Mat6<S>, b: &Mat6<S>) -> Mat6<S> {
    let mut out = zeros6();
    for i in 0..STATE_DIM {
        for j in 0..STATE_DIM {
            out[i][j] = (0..STATE_DIM).fold(S::zero(), |acc, k| acc + a[i][k] * b[j][k]);
        }
    }
    out
}

fn symmetrize<S: Scalar>(p: &Mat6<S>) -> Mat6<S> {
    let half = S::lit(0.5);
    let mut out = *p;
    for i in 0..STATE_DIM {
        for j in (i + 1)..STATE_DIM {
            let v = (p[i][j] + p[j][i]) * half;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    out
}

fn norm1<S: Scalar>(m: &Mat4<S>) -> S {
    (0..MEAS_DIM)
        .map(|c| (0..MEAS_DIM).fold(S::zero(), |acc, r| acc + m[r][c].abs()))
        .fold(S::zero(), S::max)
}

/// Gauss–Jordan inverse with partial pivoting and a 1-norm condition check.
fn invert4<S: Scalar>(m: &Mat4<S>) -> Result<Mat4<S>, KalmanError> {
    let mut a = *m;
    let mut inv = [[S::zero(); MEAS_DIM]; MEAS_DIM];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = S::one();
    }
    for col in 0..MEAS_DIM {
        let pivot = (col..MEAS_DIM)
            .max_by(|&x, &y| {
                a[x][col]
                    .abs()
                    .partial_cmp(&a[y][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        let pv = a[pivot][col];
        if !(pv.abs() > S::zero()) || !pv.is_finite() {
            return Err(KalmanError::SingularInnovation(f64::INFINITY));
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        for c in 0..MEAS_DIM {
            a[col][c] /= pv;
            inv[col][c] /= pv;
        }
        for r in 0..MEAS_DIM {
            if r == col {
                continue;
            }
            let f = a[r][col];
            if f == S::zero() {
                continue;
            }
            for c in 0..MEAS_DIM {
                a[r][c] = a[r][c] - f * a[col][c];
                inv[r][c] = inv[r][c] - f * inv[col][c];
            }
        }
    }
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() || cond > S::lit(MAX_CONDITION) {
        return Err(KalmanError::SingularInnovation(cond.to_f64_lossy()));
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: [f64; 6]) -> TrackState<f64> {
        TrackState { x, p: identity6() }
    }

    #[test]
    fn predict_constant_velocity() {
        let km = KalmanModel::<f64>::default();
        let s = km.predict(&state([10., 10., 1., -2., 4., 2.]), 1.0);
        assert_eq!(s.x, [11., 8., 1., -2., 4., 2.]);
    }

    #[test]
    fn predict_zero_dt_is_identity() {
        let km = KalmanModel::<f64>::default();
        let s0 = state([10., 10., 1., -2., 4., 2.]);
        let s = km.predict(&s0, 0.0);
        assert_eq!(s, s0);
    }

    #[test]
    fn predict_covariance_hand_value() {
        // P00 + 2 P02 + P22 + q_pos = 1 + 0 + 1 + 1
        let km = KalmanModel::<f64>::default();
        let s = km.predict(&state([0.; 6]), 1.0);
        assert_eq!(s.p[0][0], 3.0);
        assert_eq!(s.p[0][2], 1.0);
        assert_eq!(s.p[2][2], 1.25);
        assert_eq!(s.p[4][4], 2.0);
    }

    #[test]
    fn scalar_update_hand_value() {
        let km = KalmanModel {
            r: 1.0,
            ..KalmanModel::default()
        };
        let s = state([10., 10., 0., 0., 4., 4.]);
        let z = BBox::from_center(12.0, 10.0, 4.0, 4.0).unwrap();
        let post = km.update(&s, &z).unwrap();
        assert_eq!(post.x[0], 11.0);
        assert_eq!(post.p[0][0], 0.5);
    }

    #[test]
    fn exact_and_useless_measurement_limits() {
        let s = state([10., 20., 1., 1., 8., 6.]);
        let z = BBox::from_center(13.0, 18.0, 10.0, 5.0).unwrap();
        let exact = KalmanModel { r: 1e-9, ..KalmanModel::default() }.update(&s, &z).unwrap();
        for (k, want) in [(0, 13.0), (1, 18.0), (4, 10.0), (5, 5.0)] {
            assert!((exact.x[k] - want).abs() < 1e-6, "component {k}");
        }
        let useless = KalmanModel { r: 1e12, ..KalmanModel::default() }.update(&s, &z).unwrap();
        for k in 0..6 {
            assert!((useless.x[k] - s.x[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_innovation_detected() {
        let km = KalmanModel { r: 0.0, ..KalmanModel::default() };
        let s = TrackState { x: [0., 0., 0., 0., 4., 4.], p: zeros6::<f64>() };
        let z = BBox::from_center(1.0, 1.0, 4.0, 4.0).unwrap();
        assert!(matches!(km.update(&s, &z), Err(KalmanError::SingularInnovation(_))));
    }

    #[test]
    fn size_stays_positive() {
        let km = KalmanModel::<f64>::default();
        let mut s = km.initiate(&BBox::new(0., 0., 0.01, 0.01).unwrap());
        s.x[4] = -5.0;
        let post = km.update(&s, &BBox::new(0., 0., 0.002, 0.002).unwrap()).unwrap();
        assert!(post.x[4] > 0.0 && post.x[5] > 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let km = KalmanModel::<f32>::default();
        let s = km.initiate(&BBox::new(0f32, 0., 4., 4.).unwrap());
        let s = km.predict(&s, 1.0);
        let post = km.update(&s, &BBox::new(1f32, 0., 4., 4.).unwrap()).unwrap();
        assert!(post.x[0] > 2.0 && post.x[0] < 3.0);
    }
}
