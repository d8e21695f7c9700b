use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{CameraIntrinsics, DepthFrame, MonocularDepthSource};
use super::PerceptionError;

/// One segmentation mask with its label similarities and degradation terms.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskObservation {
    pub id: u32,
    pub pixels: Vec<(u32, u32)>,
    pub labels: Vec<String>,
    pub scores: Vec<f64>,
    pub eta: Vec<f64>,
    pub source_confidence: f64,
}

/// Everything perception needs from one camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionFrame {
    pub intrinsics: CameraIntrinsics,
    pub masks: Vec<MaskObservation>,
    pub depth: DepthFrame,
}

impl PerceptionFrame {
    pub fn empty(intrinsics: CameraIntrinsics) -> Self {
        Self {
            intrinsics,
            masks: Vec::new(),
            depth: DepthFrame::filled(intrinsics.width, intrinsics.height, f32::NAN),
        }
    }
}

/// Supplies frames to the perception pipeline.
pub trait PerceptionSource {
    fn next_frame(&mut self) -> Option<PerceptionFrame>;
}

/// Replays a fixed list of frames.
#[derive(Debug, Clone, Default)]
pub struct FixtureSource {
    frames: Vec<PerceptionFrame>,
    pos: usize,
}

impl FixtureSource {
    pub fn new(frames: Vec<PerceptionFrame>) -> Self {
        Self { frames, pos: 0 }
    }
}

impl PerceptionSource for FixtureSource {
    fn next_frame(&mut self) -> Option<PerceptionFrame> {
        let f = self.frames.get(self.pos).cloned();
        self.pos += 1;
        f
    }
}

/// Encode pixels as run-length pairs `"start length start length ..."` over
/// the row-major index `v * width + u`.
pub fn encode_rle(pixels: &[(u32, u32)], width: u32) -> String {
    let mut idx: Vec<u64> = pixels
        .iter()
        .map(|&(u, v)| v as u64 * width as u64 + u as u64)
        .collect();
    idx.sort_unstable();
    idx.dedup();
    let mut runs: Vec<(u64, u64)> = Vec::new();
    for i in idx {
        match runs.last_mut() {
            Some((s, l)) if *s + *l == i => *l += 1,
            _ => runs.push((i, 1)),
        }
    }
    runs.iter()
        .map(|(s, l)| format!("{s} {l}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn decode_rle(rle: &str, width: u32, height: u32) -> Result<Vec<(u32, u32)>, PerceptionError> {
    let nums: Vec<u64> = rle
        .split_whitespace()
        .map(|t| t.parse::<u64>())
        .collect::<Result<_, _>>()
        .map_err(|e| PerceptionError::InvalidFixture(format!("bad rle token: {e}")))?;
    if !nums.len().is_multiple_of(2) {
        return Err(PerceptionError::InvalidFixture(
            "rle needs start/length pairs".into(),
        ));
    }
    let total = width as u64 * height as u64;
    let mut out = Vec::new();
    for pair in nums.chunks(2) {
        let (start, len) = (pair[0], pair[1]);
        if start + len > total {
            return Err(PerceptionError::InvalidFixture(
                "rle run outside the image".into(),
            ));
        }
        for i in start..start + len {
            out.push(((i % width as u64) as u32, (i / width as u64) as u32));
        }
    }
    Ok(out)
}

pub fn encode_depth(depth: &DepthFrame) -> String {
    let bytes: Vec<u8> = depth.data.iter().flat_map(|z| z.to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_depth(b64: &str, width: u32, height: u32) -> Result<DepthFrame, PerceptionError> {
    let bytes = B64
        .decode(b64.trim())
        .map_err(|e| PerceptionError::InvalidFixture(format!("depth base64: {e}")))?;
    let n = (width * height) as usize;
    if bytes.len() != n * 4 {
        return Err(PerceptionError::InvalidFixture(format!(
            "depth has {} bytes, expected {}",
            bytes.len(),
            n * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(DepthFrame {
        width,
        height,
        data,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct MaskJson {
    id: u32,
    pixels_rle: String,
    labels: Vec<String>,
    scores: Vec<f64>,
    eta: Vec<f64>,
    source_confidence: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DepthJson {
    encoding: String,
    data_b64: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameJson {
    intrinsics: CameraIntrinsics,
    masks: Vec<MaskJson>,
    depth: DepthJson,
}

/// Parse the JSON fixture frame format.
pub fn frame_from_json(json: &str) -> Result<PerceptionFrame, PerceptionError> {
    let f: FrameJson =
        serde_json::from_str(json).map_err(|e| PerceptionError::InvalidFixture(e.to_string()))?;
    f.intrinsics.validate()?;
    let (w, h) = (f.intrinsics.width, f.intrinsics.height);
    if f.depth.encoding != "f32le" {
        return Err(PerceptionError::InvalidFixture(format!(
            "unsupported depth encoding {:?}",
            f.depth.encoding
        )));
    }
    let depth = decode_depth(&f.depth.data_b64, w, h)?;
    let mut masks = Vec::with_capacity(f.masks.len());
    for m in f.masks {
        if m.labels.len() != m.scores.len() || m.labels.len() != m.eta.len() {
            return Err(PerceptionError::InvalidFixture(format!(
                "mask {}: labels, scores and eta differ in length",
                m.id
            )));
        }
        masks.push(MaskObservation {
            id: m.id,
            pixels: decode_rle(&m.pixels_rle, w, h)?,
            labels: m.labels,
            scores: m.scores,
            eta: m.eta,
            source_confidence: m.source_confidence,
        });
    }
    Ok(PerceptionFrame {
        intrinsics: f.intrinsics,
        masks,
        depth,
    })
}

pub fn frame_to_json(frame: &PerceptionFrame) -> String {
    let w = frame.intrinsics.width;
    let f = FrameJson {
        intrinsics: frame.intrinsics,
        masks: frame
            .masks
            .iter()
            .map(|m| MaskJson {
                id: m.id,
                pixels_rle: encode_rle(&m.pixels, w),
                labels: m.labels.clone(),
                scores: m.scores.clone(),
                eta: m.eta.clone(),
                source_confidence: m.source_confidence,
            })
            .collect(),
        depth: DepthJson {
            encoding: "f32le".into(),
            data_b64: encode_depth(&frame.depth),
        },
    };
    serde_json::to_string(&f).expect("frame serializes")
}

/// Stand-in for a monocular depth network: true depth times `1 + U(-noise, noise)`,
/// seeded per pixel so repeated queries agree.
#[derive(Debug, Clone)]
pub struct SyntheticMonoDepth {
    pub truth: DepthFrame,
    pub noise: f64,
    pub seed: u64,
}

impl MonocularDepthSource for SyntheticMonoDepth {
    fn predict(&self, pixels: &[(u32, u32)]) -> Vec<f64> {
        pixels
            .iter()
            .filter_map(|&(u, v)| {
                let z = self.truth.get(u, v)? as f64;
                let idx = v as u64 * self.truth.width as u64 + u as u64;
                let mut rng =
                    ChaCha8Rng::seed_from_u64(self.seed ^ idx.wrapping_mul(0x9E37_79B9_7F4A_7C15));
                Some(z * (1.0 + rng.gen_range(-self.noise..=self.noise)))
            })
            .collect()
    }
}
