//! Visual grounding: label distributions over segmentation masks, uncertainty
//! filtering, depth fusion, 3D localization, Kalman tracking and target
//! selection.

mod geometry;
mod grounding;
mod scoring;
mod source;
mod tracking;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{
    back_project, base_to_world, centroid_depth, convex_hull, mask_centroid, mask_quality, median,
    polygon_area, project, to_base_frame, CameraIntrinsics, DepthFrame, Extrinsics,
    MonocularDepthSource,
};
pub use grounding::{
    grounding_score, select_target, GroundingCandidate, LexicalScorer, Selection, SimilarityScorer,
};
pub use scoring::{class_distribution, energy_score, passes_energy, reweight_degradation};
pub use source::{
    decode_depth, decode_rle, encode_depth, encode_rle, frame_from_json, frame_to_json,
    FixtureSource, MaskObservation, PerceptionFrame, PerceptionSource, SyntheticMonoDepth,
};
pub use tracking::{track_predict, track_update, KalmanParams, TrackRegistry, TrackedObject};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("mask has fewer than 3 pixels or all pixels are collinear")]
    DegenerateMask,
    #[error("label score is not finite")]
    NonFiniteScore,
    #[error("score vector is empty")]
    EmptyScores,
    #[error("vector length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("degradation terms must be finite and non-negative")]
    InvalidDegradation,
    #[error("all probability mass vanished after degradation weighting")]
    AllMassDegraded,
    #[error("no valid depth at the mask centroid and no monocular estimate")]
    NoDepthAvailable,
    #[error("depth must be positive")]
    NonPositiveDepth,
    #[error("rotation is not orthonormal")]
    InvalidTransform,
    #[error("camera intrinsics are invalid")]
    InvalidIntrinsics,
    #[error("time step must be positive")]
    NonPositiveDt,
    #[error("Kalman filter state became non-finite")]
    NumericalDivergence,
    #[error("no localizable candidates")]
    NoCandidates,
    #[error("invalid perception config: {0}")]
    InvalidConfig(String),
    #[error("invalid fixture frame: {0}")]
    InvalidFixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    pub softmax_temperature: f64,
    pub q_thresh: f64,
    pub e_thresh: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub source_confidence_floor: f64,
    pub neighborhood_radius: u32,
    pub kalman: KalmanParams,
    /// Association gate for tracks, meters.
    pub track_gate_m: f64,
    /// Tracks not seen for this long are no longer live.
    pub track_ttl_ms: u64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            softmax_temperature: 0.07,
            q_thresh: 0.6,
            e_thresh: 0.45,
            beta: 1.0,
            lambda1: 0.6,
            lambda2: 0.4,
            source_confidence_floor: 0.4,
            neighborhood_radius: 5,
            kalman: KalmanParams::default(),
            track_gate_m: 1.0,
            track_ttl_ms: 30_000,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let bad = |m: &str| Err(PerceptionError::InvalidConfig(m.to_string()));
        if !(self.softmax_temperature > 0.0) {
            return bad("softmax_temperature must be positive");
        }
        if !(0.0..=1.0).contains(&self.q_thresh) {
            return bad("q_thresh must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.source_confidence_floor) {
            return bad("source_confidence_floor must be in [0, 1]");
        }
        if !(self.lambda1 > 0.0 && self.lambda2 > 0.0) {
            return bad("lambda weights must be positive");
        }
        if !(self.beta >= 0.0) || !self.e_thresh.is_finite() {
            return bad("beta must be non-negative and e_thresh finite");
        }
        if self.neighborhood_radius < 1 {
            return bad("neighborhood_radius must be at least 1");
        }
        if !(self.kalman.q_c >= 0.0 && self.kalman.sigma > 0.0) {
            return bad("kalman noise must be non-negative with positive sigma");
        }
        Ok(())
    }
}

/// A mask that survived every filter and was localized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedCandidate {
    pub mask_id: u32,
    pub track_id: u64,
    pub labels: Vec<String>,
    pub p_prime: Vec<f64>,
    pub best_label: String,
    pub best_p: f64,
    pub quality: f64,
    pub energy: f64,
    pub position_world: [f64; 3],
    /// Planar distance from the robot, meters.
    pub range_m: f64,
    /// Spatial features (centroid pixel and depth); logged, not scored.
    pub centroid_px: (u32, u32),
    pub depth_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub mask_id: u32,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub candidates: Vec<LocalizedCandidate>,
    pub rejected: Vec<Rejection>,
}

impl FrameResult {
    pub fn grounding_candidates(&self) -> Vec<GroundingCandidate> {
        self.candidates
            .iter()
            .map(|c| GroundingCandidate {
                track_id: c.track_id,
                labels: c.labels.clone(),
                p_prime: c.p_prime.clone(),
            })
            .collect()
    }
}

/// Score, filter, localize and track every mask of `frame`.
///
/// Filters run in a fixed order: source confidence, mask quality, energy,
/// degradation reweighting, then depth. Masks are processed by ascending id
/// so the outcome does not depend on input order.
pub fn process_frame(
    frame: &PerceptionFrame,
    cfg: &PerceptionConfig,
    extrinsics: &Extrinsics,
    robot_pose: (f64, f64, f64),
    registry: &mut TrackRegistry,
    mono: Option<&dyn MonocularDepthSource>,
    at_ms: u64,
) -> FrameResult {
    let mut masks: Vec<&MaskObservation> = frame.masks.iter().collect();
    masks.sort_by_key(|m| m.id);
    let mut out = FrameResult::default();
    for m in masks {
        let reject = |reason: String| Rejection {
            mask_id: m.id,
            reason,
        };
        match localize_mask(m, frame, cfg, extrinsics, robot_pose, mono) {
            Ok(mut c) => {
                c.track_id = registry.observe(
                    &c.best_label,
                    c.position_world,
                    c.best_p,
                    at_ms,
                    &cfg.kalman,
                    cfg.track_gate_m,
                );
                out.candidates.push(c);
            }
            Err(reason) => out.rejected.push(reject(reason)),
        }
    }
    out
}

fn localize_mask(
    m: &MaskObservation,
    frame: &PerceptionFrame,
    cfg: &PerceptionConfig,
    extrinsics: &Extrinsics,
    robot_pose: (f64, f64, f64),
    mono: Option<&dyn MonocularDepthSource>,
) -> Result<LocalizedCandidate, String> {
    if m.source_confidence < cfg.source_confidence_floor {
        return Err(format!(
            "source confidence {} below floor",
            m.source_confidence
        ));
    }
    let (q, _, _) = mask_quality(&m.pixels).map_err(|e| e.to_string())?;
    if q < cfg.q_thresh {
        return Err(format!("mask quality {q:.3} below threshold"));
    }
    let energy = energy_score(&m.scores, cfg.softmax_temperature).map_err(|e| e.to_string())?;
    if !passes_energy(energy, cfg.e_thresh) {
        return Err(format!("energy {energy:.3} above threshold"));
    }
    let p = class_distribution(&m.scores, cfg.softmax_temperature).map_err(|e| e.to_string())?;
    let p_prime = reweight_degradation(&p, &m.eta, cfg.beta).map_err(|e| e.to_string())?;
    let z = centroid_depth(&m.pixels, &frame.depth, cfg.neighborhood_radius, mono)
        .map_err(|e| e.to_string())?;
    let (uc, vc) = mask_centroid(&m.pixels);
    let cam =
        back_project(uc as f64, vc as f64, z, &frame.intrinsics).map_err(|e| e.to_string())?;
    let base = to_base_frame(cam, extrinsics).map_err(|e| e.to_string())?;
    let world = base_to_world(base, robot_pose);
    let (best, best_p) = p_prime
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    Ok(LocalizedCandidate {
        mask_id: m.id,
        track_id: 0,
        labels: m.labels.clone(),
        best_label: m.labels[best].clone(),
        best_p,
        p_prime,
        quality: q,
        energy,
        position_world: world,
        range_m: (base[0] * base[0] + base[1] * base[1]).sqrt(),
        centroid_px: (uc, vc),
        depth_m: z,
    })
}
