use nalgebra::{Matrix3, Matrix3x6, Matrix6, SMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::PerceptionError;

/// Constant-velocity noise model: `Q = q_c * I6`, `R = sigma^2 * I3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanParams {
    pub q_c: f64,
    pub sigma: f64,
    /// Velocity variance of a newly created track; large because one
    /// position fix says nothing about velocity.
    pub initial_velocity_var: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            q_c: 0.01,
            sigma: 0.05,
            initial_velocity_var: 1e4,
        }
    }
}

impl KalmanParams {
    pub fn q(&self) -> [[f64; 6]; 6] {
        to_arr6(&(Matrix6::identity() * self.q_c))
    }

    pub fn r(&self) -> [[f64; 3]; 3] {
        let m = Matrix3::identity() * (self.sigma * self.sigma);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = m[(i, j)];
            }
        }
        out
    }
}

/// A tracked object: position and velocity in the world frame with 6x6 covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub track_id: u64,
    pub label: String,
    pub state: [f64; 6],
    pub covariance: [[f64; 6]; 6],
    pub last_p_prime: f64,
    pub last_seen_ms: u64,
}

impl TrackedObject {
    /// New track at `position` with zero velocity; position variance from the
    /// measurement noise.
    pub fn new(
        track_id: u64,
        label: &str,
        position: [f64; 3],
        params: &KalmanParams,
        p_prime: f64,
        at_ms: u64,
    ) -> Self {
        let mut cov = [[0.0; 6]; 6];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = if i < 3 {
                params.sigma * params.sigma
            } else {
                params.initial_velocity_var
            };
        }
        Self {
            track_id,
            label: label.to_string(),
            state: [position[0], position[1], position[2], 0.0, 0.0, 0.0],
            covariance: cov,
            last_p_prime: p_prime,
            last_seen_ms: at_ms,
        }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.state[0], self.state[1], self.state[2]]
    }

    pub fn covariance_trace(&self) -> f64 {
        (0..6).map(|i| self.covariance[i][i]).sum()
    }

    pub fn position_trace(&self) -> f64 {
        (0..3).map(|i| self.covariance[i][i]).sum()
    }
}

fn from_arr6(a: &[[f64; 6]; 6]) -> Matrix6<f64> {
    Matrix6::from_fn(|i, j| a[i][j])
}

fn to_arr6(m: &Matrix6<f64>) -> [[f64; 6]; 6] {
    let mut out = [[0.0; 6]; 6];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

/// Prediction step only.
pub fn track_predict(track: &TrackedObject, dt: f64, q: &[[f64; 6]; 6]) -> TrackedObject {
    let f = transition(dt);
    let x = f * Vector6::from_row_slice(&track.state);
    let p = f * from_arr6(&track.covariance) * f.transpose() + from_arr6(q);
    let p = (p + p.transpose()) * 0.5;
    TrackedObject {
        state: x.into(),
        covariance: to_arr6(&p),
        ..track.clone()
    }
}

/// Constant-velocity predict over `dt`, then a position-only update with
/// `measurement` (Joseph-form covariance update).
pub fn track_update(
    track: &TrackedObject,
    measurement: [f64; 3],
    dt: f64,
    q: &[[f64; 6]; 6],
    r: &[[f64; 3]; 3],
) -> Result<TrackedObject, PerceptionError> {
    if !(dt > 0.0) {
        return Err(PerceptionError::NonPositiveDt);
    }
    let pred = track_predict(track, dt, q);
    let x = Vector6::from_row_slice(&pred.state);
    let p = from_arr6(&pred.covariance);
    let h = Matrix3x6::from_fn(|i, j| if i == j { 1.0 } else { 0.0 });
    let rm = Matrix3::from_fn(|i, j| r[i][j]);
    let z = Vector3::from_row_slice(&measurement);
    let s = h * p * h.transpose() + rm;
    let s_inv = s
        .try_inverse()
        .ok_or(PerceptionError::NumericalDivergence)?;
    let k: SMatrix<f64, 6, 3> = p * h.transpose() * s_inv;
    let x_new = x + k * (z - h * x);
    let i_kh = Matrix6::identity() - k * h;
    let p_new = i_kh * p * i_kh.transpose() + k * rm * k.transpose();
    let p_new = (p_new + p_new.transpose()) * 0.5;
    if x_new.iter().chain(p_new.iter()).any(|v| !v.is_finite()) {
        return Err(PerceptionError::NumericalDivergence);
    }
    Ok(TrackedObject {
        state: x_new.into(),
        covariance: to_arr6(&p_new),
        ..pred
    })
}

/// Tracks owned by one session, associated by label and distance gate.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrackRegistry {
    tracks: Vec<TrackedObject>,
    next_id: u64,
}

/// Time step used when a track is observed twice at the same timestamp.
const MIN_DT_S: f64 = 1e-3;

impl TrackRegistry {
    pub fn new() -> Self {
        Self {
            tracks: Vec::new(),
            next_id: 1,
        }
    }

    /// Fold one localized detection into the registry and return the track id.
    pub fn observe(
        &mut self,
        label: &str,
        position: [f64; 3],
        p_prime: f64,
        at_ms: u64,
        params: &KalmanParams,
        gate_m: f64,
    ) -> u64 {
        if self.next_id == 0 {
            self.next_id = 1;
        }
        let nearest = self
            .tracks
            .iter()
            .enumerate()
            // one detection per track per frame
            .filter(|(_, t)| t.label == label && t.last_seen_ms != at_ms)
            .map(|(i, t)| (i, dist3(t.position(), position)))
            .filter(|(_, d)| *d <= gate_m)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((i, _)) = nearest {
            let t = &self.tracks[i];
            let dt = (at_ms.saturating_sub(t.last_seen_ms) as f64 / 1000.0).max(MIN_DT_S);
            match track_update(t, position, dt, &params.q(), &params.r()) {
                Ok(mut updated) => {
                    updated.last_p_prime = p_prime;
                    updated.last_seen_ms = at_ms;
                    let id = updated.track_id;
                    self.tracks[i] = updated;
                    return id;
                }
                Err(_) => {
                    self.tracks.remove(i);
                }
            }
        }
        let id = self.next_id;
        self.next_id += 1;
        self.tracks.push(TrackedObject::new(
            id, label, position, params, p_prime, at_ms,
        ));
        id
    }

    pub fn get(&self, id: u64) -> Option<&TrackedObject> {
        self.tracks.iter().find(|t| t.track_id == id)
    }

    /// Tracks seen within `ttl_ms` of `now_ms`.
    pub fn live(&self, now_ms: u64, ttl_ms: u64) -> impl Iterator<Item = &TrackedObject> {
        self.tracks
            .iter()
            .filter(move |t| now_ms.saturating_sub(t.last_seen_ms) <= ttl_ms)
    }

    pub fn all(&self) -> &[TrackedObject] {
        &self.tracks
    }

    pub fn clear(&mut self) {
        self.tracks.clear();
    }
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn predict_advances_by_velocity() {
        let mut t = TrackedObject::new(1, "chair", [0.0; 3], &KalmanParams::default(), 1.0, 0);
        t.state[3] = 1.0;
        let p = track_predict(&t, 0.5, &KalmanParams::default().q());
        assert_abs_diff_eq!(p.state[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn stationary_measurements_converge() {
        let params = KalmanParams::default();
        let m = [1.0, 2.0, 0.5];
        let mut t = TrackedObject::new(1, "chair", [0.8, 2.3, 0.4], &params, 1.0, 0);
        let mut last_trace = f64::INFINITY;
        for _ in 0..50 {
            let prior = track_predict(&t, 0.1, &params.q()).covariance_trace();
            t = track_update(&t, m, 0.1, &params.q(), &params.r()).unwrap();
            assert!(t.covariance_trace() < prior);
            assert!(t.position_trace() <= last_trace + 1e-12);
            last_trace = t.position_trace();
        }
        for i in 0..3 {
            assert_abs_diff_eq!(t.state[i], m[i], epsilon = 1e-3);
        }
    }

    #[test]
    fn zero_dt_rejected() {
        let t = TrackedObject::new(1, "x", [0.0; 3], &KalmanParams::default(), 1.0, 0);
        let p = KalmanParams::default();
        assert_eq!(
            track_update(&t, [0.0; 3], 0.0, &p.q(), &p.r()),
            Err(PerceptionError::NonPositiveDt)
        );
    }

    #[test]
    fn registry_associates_within_gate() {
        let p = KalmanParams::default();
        let mut reg = TrackRegistry::new();
        let a = reg.observe("chair", [2.0, 0.0, 0.0], 0.9, 0, &p, 1.0);
        let b = reg.observe("chair", [2.1, 0.0, 0.0], 0.9, 100, &p, 1.0);
        let same_frame = reg.observe("chair", [2.2, 0.0, 0.0], 0.9, 100, &p, 1.0);
        assert_ne!(same_frame, b);
        let c = reg.observe("chair", [5.0, 0.0, 0.0], 0.9, 200, &p, 1.0);
        let d = reg.observe("person", [2.0, 0.0, 0.0], 0.9, 300, &p, 1.0);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(reg.live(300, 150).count(), 2);
    }
}
