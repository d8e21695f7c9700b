use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Pose, World};
use crate::perception::{
    project, CameraIntrinsics, DepthFrame, Extrinsics, MaskObservation, PerceptionFrame,
};

/// Similarity between an object's true label and a vocabulary label.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityTable {
    default: f64,
    pairs: BTreeMap<(String, String), f64>,
}

#[derive(Deserialize)]
struct AffinityFile {
    default: f64,
    pairs: Vec<(String, String, f64)>,
}

const BUNDLED_AFFINITY: &str = include_str!("../../data/affinity.json");

impl AffinityTable {
    pub fn bundled() -> Self {
        let f: AffinityFile =
            serde_json::from_str(BUNDLED_AFFINITY).expect("bundled affinity table is valid");
        Self {
            default: f.default,
            pairs: f
                .pairs
                .into_iter()
                .map(|(a, b, s)| ((a, b), s))
                .collect(),
        }
    }

    pub fn affinity(&self, label: &str, vocab: &str) -> f64 {
        if label == vocab {
            return 1.0;
        }
        let key = |a: &str, b: &str| (a.to_string(), b.to_string());
        self.pairs
            .get(&key(label, vocab))
            .or_else(|| self.pairs.get(&key(vocab, label)))
            .copied()
            .unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub intrinsics: CameraIntrinsics,
    /// Camera mount height above the floor, meters.
    pub camera_height: f64,
    pub vocab: Vec<String>,
    pub score_noise: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            camera_height: 0.5,
            vocab: [
                "chair",
                "person",
                "bottle",
                "table",
                "laptop",
                "couch",
                "potted plant",
                "cup",
                "backpack",
                "tv",
                "refrigerator",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            score_noise: 0.05,
            min_range: 0.2,
            max_range: 8.0,
        }
    }
}

impl RenderConfig {
    pub fn extrinsics(&self) -> Extrinsics {
        Extrinsics::forward_camera(self.camera_height)
    }
}

/// `-ln(illumination * (1 - occlusion))`, clamped to `[0, 5]`.
pub fn degradation(illumination: f64, occluded_fraction: f64) -> f64 {
    let v = illumination.clamp(0.0, 1.0) * (1.0 - occluded_fraction.clamp(0.0, 1.0));
    if v <= 0.0 {
        return 5.0;
    }
    (-v.ln()).clamp(0.0, 5.0)
}

fn world_to_camera(p: [f64; 3], pose: Pose, ext: &Extrinsics) -> [f64; 3] {
    let (dx, dy) = (p[0] - pose.x, p[1] - pose.y);
    let (s, c) = pose.theta.sin_cos();
    let base = [c * dx + s * dy, -s * dx + c * dy, p[2]];
    let d = [
        base[0] - ext.translation[0],
        base[1] - ext.translation[1],
        base[2] - ext.translation[2],
    ];
    let r = &ext.rotation;
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (0..3).map(|i| r[i][k] * d[i]).sum();
    }
    out
}

/// Synthesize the perception frame seen from `pose`: one projected disc per
/// visible object, true depth, noisy label affinities and degradation terms.
pub fn render_observation(
    pose: Pose,
    world: &World,
    cfg: &RenderConfig,
    affinity: &AffinityTable,
    seed: u64,
) -> PerceptionFrame {
    let k = cfg.intrinsics;
    let ext = cfg.extrinsics();
    let (w, h) = (k.width as usize, k.height as usize);
    let mut zbuf = vec![f32::NAN; w * h];
    let mut owner = vec![0u32; w * h];
    let mut visible = Vec::new();
    for (idx, obj) in world.objects.iter().enumerate() {
        let cam = world_to_camera([obj.x, obj.y, obj.z], pose, &ext);
        let planar = super::distance_between([pose.x, pose.y], [obj.x, obj.y]);
        if cam[2] < cfg.min_range || planar > cfg.max_range {
            continue;
        }
        if cam[0].atan2(cam[2]).abs() > k.half_hfov() {
            continue;
        }
        let reach = (planar - obj.radius).max(0.0);
        if planar > 0.0 {
            let end = [
                pose.x + (obj.x - pose.x) * reach / planar,
                pose.y + (obj.y - pose.y) * reach / planar,
            ];
            if !world.grid.line_of_sight([pose.x, pose.y], end) {
                continue;
            }
        }
        let Ok((u, v)) = project(cam, &k) else {
            continue;
        };
        let r_px = k.fx * obj.radius / cam[2];
        let z = cam[2] as f32;
        let u0 = (u - r_px).floor().max(0.0) as usize;
        let v0 = (v - r_px).floor().max(0.0) as usize;
        let u1 = ((u + r_px).ceil().max(0.0) as usize).min(w);
        let v1 = ((v + r_px).ceil().max(0.0) as usize).min(h);
        let mut any = false;
        for pv in v0..v1 {
            for pu in u0..u1 {
                let du = pu as f64 + 0.5 - u;
                let dv = pv as f64 + 0.5 - v;
                if du * du + dv * dv > r_px * r_px {
                    continue;
                }
                let i = pv * w + pu;
                if zbuf[i].is_nan() || z < zbuf[i] {
                    zbuf[i] = z;
                    owner[i] = idx as u32 + 1;
                    any = true;
                }
            }
        }
        if any {
            visible.push(idx);
        }
    }
    let mut pixels: BTreeMap<u32, Vec<(u32, u32)>> = BTreeMap::new();
    for (i, &o) in owner.iter().enumerate() {
        if o != 0 {
            pixels
                .entry(o)
                .or_default()
                .push(((i % w) as u32, (i / w) as u32));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks = Vec::new();
    for idx in visible {
        let obj = &world.objects[idx];
        let id = idx as u32 + 1;
        let px = pixels.remove(&id).unwrap_or_default();
        let scores: Vec<f64> = cfg
            .vocab
            .iter()
            .map(|l| {
                let noise = if cfg.score_noise > 0.0 {
                    rng.gen_range(-cfg.score_noise..=cfg.score_noise)
                } else {
                    0.0
                };
                affinity.affinity(&obj.label, l) + noise
            })
            .collect();
        if px.len() < 3 {
            continue;
        }
        let eta = degradation(obj.illumination, obj.occluded_fraction);
        masks.push(MaskObservation {
            id,
            pixels: px,
            labels: cfg.vocab.clone(),
            scores,
            eta: vec![eta; cfg.vocab.len()],
            source_confidence: 0.5 + 0.5 * (1.0 - obj.occluded_fraction.clamp(0.0, 1.0)),
        });
    }
    PerceptionFrame {
        intrinsics: k,
        masks,
        depth: DepthFrame {
            width: k.width,
            height: k.height,
            data: zbuf,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::mask_centroid;
    use crate::simulator::{MapFile, SceneObject};

    fn world(objects: Vec<SceneObject>) -> World {
        let rows = vec![".".repeat(40); 40];
        World::from_map(&MapFile {
            resolution: 0.25,
            origin: [-5.0, -5.0],
            rows,
            destinations: Default::default(),
            objects,
            start: Some([0.0, 0.0, 0.0]),
        })
        .unwrap()
    }

    fn obj(label: &str, x: f64, y: f64) -> SceneObject {
        SceneObject {
            label: label.into(),
            x,
            y,
            z: 0.5,
            radius: 0.3,
            illumination: 1.0,
            occluded_fraction: 0.0,
        }
    }

    #[test]
    fn dead_ahead_projects_to_principal_point() {
        let w = world(vec![obj("chair", 2.0, 0.0)]);
        let cfg = RenderConfig::default();
        let f = render_observation(Pose::new(0.0, 0.0, 0.0), &w, &cfg, &AffinityTable::bundled(), 1);
        assert_eq!(f.masks.len(), 1);
        let (u, v) = mask_centroid(&f.masks[0].pixels);
        assert!((u as f64 - 320.0).abs() <= 1.0 && (v as f64 - 240.0).abs() <= 1.0);
        assert_eq!(f.depth.get(320, 240), Some(2.0));
        let s = &f.masks[0].scores;
        assert!((s[0] - 1.0).abs() <= 0.05);
        assert_eq!(f.masks[0].eta, vec![0.0; cfg.vocab.len()]);
    }

    #[test]
    fn behind_and_empty() {
        let w = world(vec![obj("chair", -2.0, 0.0)]);
        let f = render_observation(
            Pose::new(0.0, 0.0, 0.0),
            &w,
            &RenderConfig::default(),
            &AffinityTable::bundled(),
            1,
        );
        assert!(f.masks.is_empty());
        assert!(f.depth.data.iter().all(|z| z.is_nan()));
    }

    #[test]
    fn walls_hide_objects() {
        let mut map = MapFile {
            resolution: 0.25,
            origin: [-5.0, -5.0],
            rows: vec![".".repeat(40); 40],
            destinations: Default::default(),
            objects: vec![obj("chair", 3.0, 0.0)],
            start: None,
        };
        // wall column at x in [1.0, 1.25)
        for r in map.rows.iter_mut() {
            r.replace_range(24..25, "#");
        }
        let w = World::from_map(&map).unwrap();
        let f = render_observation(
            Pose::new(0.0, 0.0, 0.0),
            &w,
            &RenderConfig::default(),
            &AffinityTable::bundled(),
            1,
        );
        assert!(f.masks.is_empty());
    }

    #[test]
    fn nearer_object_owns_overlap() {
        let w = world(vec![obj("chair", 3.0, 0.0), obj("cup", 1.5, 0.0)]);
        let f = render_observation(
            Pose::new(0.0, 0.0, 0.0),
            &w,
            &RenderConfig::default(),
            &AffinityTable::bundled(),
            3,
        );
        let cup = f.masks.iter().find(|m| m.id == 2).unwrap();
        assert!(cup.pixels.contains(&(320, 240)));
        if let Some(chair) = f.masks.iter().find(|m| m.id == 1) {
            assert!(!chair.pixels.contains(&(320, 240)));
        }
        assert_eq!(f.depth.get(320, 240), Some(1.5));
    }

    #[test]
    fn degradation_terms() {
        assert_eq!(degradation(1.0, 0.0), 0.0);
        assert!((degradation(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(degradation(0.0, 0.0), 5.0);
        assert_eq!(degradation(1e-9, 0.0), 5.0);
    }

    #[test]
    fn affinity_is_symmetric() {
        let a = AffinityTable::bundled();
        assert_eq!(a.affinity("chair", "couch"), a.affinity("couch", "chair"));
        assert_eq!(a.affinity("chair", "chair"), 1.0);
        assert_eq!(a.affinity("chair", "tv"), 0.1);
    }
}
