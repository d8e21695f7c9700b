use std::path::Path;

use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use super::{format_number, ExecError, Executor, LocalizedText, RobotRuntime};
use crate::engine::ActionPrimitive;
use crate::perception::PerceptionFrame;
use crate::simulator::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Pose,
    Surroundings,
    Snapshot,
    SpeedLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeenObject {
    pub track_id: u64,
    pub label: String,
    pub p: f64,
    pub distance_m: f64,
    pub position: [f64; 3],
}

/// Answer to a query action, in the user's language plus raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub kind: QueryKind,
    pub text: LocalizedText,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objects: Vec<SeenObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<String>,
}

/// Where a captured image goes: `<session>/<turn>/<k>.png`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotSlot {
    pub session_id: String,
    pub turn: u64,
    pub k: usize,
}

impl SnapshotSlot {
    pub fn reference(&self) -> String {
        format!("{}/{}/{}.png", self.session_id, self.turn, self.k)
    }
}

/// Number with up to `decimals` places and trailing zeros dropped.
pub fn format_compact(v: f64, decimals: usize, lang: &str) -> String {
    let s = format_number(v, decimals, lang);
    if !s.contains(['.', ',']) {
        return s;
    }
    s.trim_end_matches('0')
        .trim_end_matches(['.', ','])
        .to_string()
}

impl Executor {
    /// Answer a query primitive from the current simulator and perception
    /// state. `slot` names the image file for CaptureImage.
    pub fn handle_query(
        &self,
        primitive: &ActionPrimitive,
        rt: &mut RobotRuntime,
        lang: &str,
        slot: Option<&SnapshotSlot>,
        at_ms: u64,
    ) -> Result<QueryResponse, ExecError> {
        let cat = &self.catalog;
        match primitive {
            ActionPrimitive::ReportPose => {
                let p = rt.sim.state.pose;
                let yaw = p.theta.to_degrees();
                let text = cat.render(
                    lang,
                    "pose",
                    &[
                        ("x", format_compact(p.x, 2, lang)),
                        ("y", format_compact(p.y, 2, lang)),
                        ("yaw", format_compact(yaw, 1, lang)),
                        ("compass", cat.compass(lang, yaw)),
                    ],
                );
                Ok(QueryResponse {
                    kind: QueryKind::Pose,
                    text,
                    pose: Some(p),
                    objects: Vec::new(),
                    snapshot: None,
                })
            }
            ActionPrimitive::DescribeSurroundings => {
                let result = rt.perception.observe(&rt.sim, at_ms);
                let mut objects: Vec<SeenObject> = result
                    .candidates
                    .iter()
                    .map(|c| SeenObject {
                        track_id: c.track_id,
                        label: c.best_label.clone(),
                        p: c.best_p,
                        distance_m: c.range_m,
                        position: c.position_world,
                    })
                    .collect();
                objects.sort_by(|a, b| a.distance_m.total_cmp(&b.distance_m));
                let text = if objects.is_empty() {
                    cat.render(lang, "none_visible", &[])
                } else {
                    let items: Vec<String> = objects
                        .iter()
                        .map(|o| {
                            cat.render(
                                lang,
                                "item",
                                &[
                                    ("label", o.label.clone()),
                                    ("p", format_number(100.0 * o.p, 0, lang)),
                                    ("dist", format_number(o.distance_m, 1, lang)),
                                ],
                            )
                            .text
                        })
                        .collect();
                    cat.render(
                        lang,
                        "visible",
                        &[("n", objects.len().to_string()), ("items", items.join(", "))],
                    )
                };
                Ok(QueryResponse {
                    kind: QueryKind::Surroundings,
                    text,
                    pose: Some(rt.sim.state.pose),
                    objects,
                    snapshot: None,
                })
            }
            ActionPrimitive::CaptureImage => {
                let frame = rt.perception.capture(&rt.sim);
                let reference = slot.map_or_else(|| "unsaved.png".to_string(), SnapshotSlot::reference);
                if let Some(dir) = &self.config.snapshot_dir {
                    let path = dir.join(&reference);
                    write_snapshot(&frame, &path)?;
                }
                let text = cat.render(lang, "snapshot", &[("ref", reference.clone())]);
                Ok(QueryResponse {
                    kind: QueryKind::Snapshot,
                    text,
                    pose: Some(rt.sim.state.pose),
                    objects: Vec::new(),
                    snapshot: Some(reference),
                })
            }
            _ => Err(ExecError::NotAQuery),
        }
    }
}

fn write_snapshot(frame: &PerceptionFrame, path: &Path) -> Result<(), ExecError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| ExecError::Snapshot(e.to_string()))?;
    }
    std::fs::write(path, render_snapshot_png(frame)?)
        .map_err(|e| ExecError::Snapshot(e.to_string()))
}

/// Encode a frame as a PNG: depth as gray levels, masks tinted by id.
pub fn render_snapshot_png(frame: &PerceptionFrame) -> Result<Vec<u8>, ExecError> {
    let (w, h) = (frame.intrinsics.width, frame.intrinsics.height);
    let mut img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::new(w, h);
    for (u, v, px) in img.enumerate_pixels_mut() {
        // sky above the horizon, floor below
        let base = if v < h / 2 { [170, 190, 215] } else { [120, 115, 105] };
        *px = Rgb(base);
        if let Some(d) = frame.depth.get(u, v).filter(|d| d.is_finite()) {
            let g = (255.0 * (1.0 - (d as f64 / 8.0).clamp(0.0, 1.0))) as u8;
            *px = Rgb([g, g, g]);
        }
    }
    for m in &frame.masks {
        let tint = palette(m.id);
        for &(u, v) in &m.pixels {
            if u < w && v < h {
                let Rgb(old) = *img.get_pixel(u, v);
                let mix = |a: u8, b: u8| ((a as u16 + b as u16) / 2) as u8;
                img.put_pixel(
                    u,
                    v,
                    Rgb([mix(old[0], tint[0]), mix(old[1], tint[1]), mix(old[2], tint[2])]),
                );
            }
        }
    }
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ExecError::Snapshot(e.to_string()))?;
    Ok(out.into_inner())
}

fn palette(id: u32) -> [u8; 3] {
    const P: [[u8; 3]; 6] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
    ];
    P[id as usize % P.len()]
}
