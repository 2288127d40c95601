//! Constant-velocity Kalman filter over `(cx, cy, w, h)` box state.
//!
//! State layout: `[cx, cy, w, h, vcx, vcy, vw, vh]`, positions in normalized
//! frame units and velocities in units per sampled frame. Noise standard
//! deviations scale with the box height.

use nalgebra::{SMatrix, SVector};

use crate::model::BBox;

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Vector4 = SVector<f64, 4>;
pub type Matrix4 = SMatrix<f64, 4, 4>;
type Matrix48 = SMatrix<f64, 4, 8>;

const MIN_SIZE: f64 = 1e-6;
const MIN_MEASUREMENT_VAR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vector8,
    pub covariance: Matrix8,
}

impl KalmanState {
    pub fn bbox(&self) -> BBox {
        let m = &self.mean;
        BBox::from_center(m[0], m[1], m[2], m[3])
    }

    pub fn center(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanFilter {
    pub position_noise_scale: f64,
    pub velocity_noise_scale: f64,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        KalmanFilter {
            position_noise_scale: 1.0 / 20.0,
            velocity_noise_scale: 1.0 / 160.0,
        }
    }
}

fn transition() -> Matrix8 {
    let mut f = Matrix8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

fn observation() -> Matrix48 {
    let mut h = Matrix48::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(p: &Matrix8) -> Matrix8 {
    (p + p.transpose()) * 0.5
}

impl KalmanFilter {
    fn height_of(mean: &Vector8) -> f64 {
        mean[3].abs().max(MIN_SIZE)
    }

    /// New state from a first measurement, velocities zero.
    pub fn initiate(&self, bbox: &BBox) -> KalmanState {
        let (cx, cy) = bbox.center();
        let h = bbox.height().max(MIN_SIZE);
        let mean = Vector8::from_column_slice(&[cx, cy, bbox.width(), bbox.height(), 0.0, 0.0, 0.0, 0.0]);
        let p = 2.0 * self.position_noise_scale * h;
        let v = 10.0 * self.velocity_noise_scale * h;
        let std = [p, p, p, p, v, v, v, v];
        let covariance = Matrix8::from_diagonal(&Vector8::from_iterator(std.iter().map(|s| s * s)));
        KalmanState { mean, covariance }
    }

    /// Process noise for the given state; all zero when both scales are zero.
    pub fn process_noise(&self, mean: &Vector8) -> Matrix8 {
        let h = Self::height_of(mean);
        let p = self.position_noise_scale * h;
        let v = self.velocity_noise_scale * h;
        let std = [p, p, p, p, v, v, v, v];
        Matrix8::from_diagonal(&Vector8::from_iterator(std.iter().map(|s| s * s)))
    }

    pub fn predict(&self, state: &KalmanState) -> KalmanState {
        let f = transition();
        let q = self.process_noise(&state.mean);
        KalmanState {
            mean: f * state.mean,
            covariance: symmetrize(&(f * state.covariance * f.transpose() + q)),
        }
    }

    fn measurement_noise(&self, mean: &Vector8) -> Matrix4 {
        let r = self.position_noise_scale * Self::height_of(mean);
        Matrix4::from_diagonal_element((r * r).max(MIN_MEASUREMENT_VAR))
    }

    /// Measurement update with a detected box (Joseph form).
    pub fn update(&self, state: &KalmanState, bbox: &BBox) -> KalmanState {
        let h = observation();
        let (cx, cy) = bbox.center();
        let z = Vector4::new(cx, cy, bbox.width(), bbox.height());
        let r = self.measurement_noise(&state.mean);
        let s = h * state.covariance * h.transpose() + r;
        let s_inv = s
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| s.try_inverse())
            .unwrap_or_else(Matrix4::zeros);
        let gain = state.covariance * h.transpose() * s_inv;
        let innovation = z - h * state.mean;
        let mean = state.mean + gain * innovation;
        let i_kh = Matrix8::identity() - gain * h;
        let covariance = i_kh * state.covariance * i_kh.transpose() + gain * r * gain.transpose();
        KalmanState {
            mean,
            covariance: symmetrize(&covariance),
        }
    }
}
