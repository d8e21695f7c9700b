//! Turns parsed action plans into twist schedules, runs them on the
//! simulator and answers query actions.

mod query;
mod responses;
mod run;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use query::{
    format_compact, render_snapshot_png, QueryKind, QueryResponse, SeenObject, SnapshotSlot,
};
pub use responses::{format_number, LocalizedText, ResponseCatalog};
pub use run::{discarded_trace, TurnInfo};

use crate::engine::{
    ActionPrimitive, LinearDirection, PatternShape, DEFAULT_ANGULAR_SPEED_DEG,
    MAX_ANGULAR_SPEED_DEG, MAX_LINEAR_SPEED, MIN_LINEAR_SPEED,
};
use crate::perception::{
    process_frame, CameraIntrinsics, FixtureSource, FrameResult, LexicalScorer,
    LocalizedCandidate, PerceptionConfig, PerceptionFrame, PerceptionSource, TrackRegistry,
};
use crate::simulator::{
    normalize_angle, plan_path, render_observation, AffinityTable, Pose, RenderConfig, SimError,
    Simulation, TwistCommand, World,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("plan needs confirmation before it can run")]
    NotApproved,
    #[error("execution aborted")]
    AbortRequested,
    #[error("no path: {0}")]
    NoPath(String),
    #[error("no live track for {0:?}")]
    UnreachableObject(String),
    #[error("unknown destination {0:?}")]
    UnknownDestination(String),
    #[error("not a query action")]
    NotAQuery,
    #[error("invalid response catalog: {0}")]
    InvalidCatalog(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

impl From<SimError> for ExecError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NoPath(m) => ExecError::NoPath(m),
            other => ExecError::NoPath(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExecStatus {
    Success,
    Failed,
    Skipped,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionOutcome {
    pub index: usize,
    pub primitive: String,
    pub started_at_ms: u64,
    pub ended_at_ms: u64,
    pub status: ExecStatus,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<QueryResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub per_action: Vec<ActionOutcome>,
    pub s_n: u8,
    pub final_pose: Pose,
    pub snapshots: Vec<String>,
    /// Time of the first twist or query answer, if any.
    pub first_response_ms: Option<u64>,
}

impl ExecutionTrace {
    /// 1 iff every action that was not skipped succeeded.
    pub fn success_indicator(per_action: &[ActionOutcome]) -> u8 {
        per_action
            .iter()
            .filter(|a| a.status != ExecStatus::Skipped)
            .all(|a| a.status == ExecStatus::Success) as u8
    }

    pub fn aborted(&self) -> bool {
        self.per_action
            .iter()
            .any(|a| a.status == ExecStatus::Aborted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub target: [f64; 2],
    pub tolerance: f64,
}

pub const DEFAULT_GOAL_TOLERANCE: f64 = 0.2;

impl GoalSpec {
    pub fn at(target: [f64; 2]) -> Self {
        Self {
            target,
            tolerance: DEFAULT_GOAL_TOLERANCE,
        }
    }
}

pub fn goal_reached(pose: Pose, goal: &GoalSpec) -> bool {
    crate::simulator::distance_between(pose.xy(), goal.target) <= goal.tolerance
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    pub dt: f64,
    pub goal_tolerance: f64,
    /// Used when an action gives no speed.
    pub default_linear_speed: f64,
    pub default_angular_speed_deg: f64,
    /// Turning rate for in-place turns between navigation segments.
    pub navigation_angular_speed_deg: f64,
    /// Moves pause while the free distance ahead is below this.
    pub obstacle_pause_m: f64,
    /// A paused move fails after this long.
    pub obstacle_wait_s: f64,
    /// How often detection conditions look at a fresh frame.
    pub detection_period_s: f64,
    pub scan_step_deg: f64,
    /// Stop this far from a target object's center.
    pub object_standoff_m: f64,
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            dt: crate::simulator::DEFAULT_DT,
            goal_tolerance: DEFAULT_GOAL_TOLERANCE,
            default_linear_speed: 0.5,
            default_angular_speed_deg: DEFAULT_ANGULAR_SPEED_DEG,
            navigation_angular_speed_deg: 60.0,
            obstacle_pause_m: 0.5,
            obstacle_wait_s: 10.0,
            detection_period_s: 0.2,
            scan_step_deg: 45.0,
            object_standoff_m: 0.9,
            snapshot_dir: None,
        }
    }
}

/// Runs plans and answers queries with one configuration and catalog.
#[derive(Debug, Clone)]
pub struct Executor {
    pub config: ExecutorConfig,
    pub catalog: ResponseCatalog,
}

impl Executor {
    pub fn new(config: ExecutorConfig, catalog: ResponseCatalog) -> Self {
        Self { config, catalog }
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::new(ExecutorConfig::default(), ResponseCatalog::bundled())
    }
}

/// Receives execution events. Every method has a no-op default.
pub trait ExecutionObserver {
    fn on_twist(&mut self, _twist: &TwistCommand, _at_ms: u64) {}
    fn on_tick(&mut self, _tick: &Tick, _sim: &Simulation) {}
    fn on_action_start(&mut self, _index: usize, _primitive: &ActionPrimitive, _at_ms: u64) {}
    fn on_action_end(&mut self, _outcome: &ActionOutcome) {}
}

pub struct NullObserver;

impl ExecutionObserver for NullObserver {}

/// Records every emitted twist.
#[derive(Debug, Default)]
pub struct TwistSpy {
    pub twists: Vec<(u64, TwistCommand)>,
}

impl ExecutionObserver for TwistSpy {
    fn on_twist(&mut self, twist: &TwistCommand, at_ms: u64) {
        self.twists.push((at_ms, *twist));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub at_ms: u64,
    pub pose: Pose,
    pub v: f64,
    pub omega: f64,
    pub action_index: usize,
    pub paused: bool,
}

/// Where frames come from: the simulator's renderer or recorded fixtures.
pub enum FrameProvider {
    Render {
        config: RenderConfig,
        affinity: AffinityTable,
        seed: u64,
    },
    Fixtures(FixtureSource),
}

/// Perception state kept across turns of a session.
pub struct PerceptionRig {
    pub config: PerceptionConfig,
    pub provider: FrameProvider,
    pub scorer: LexicalScorer,
    pub registry: TrackRegistry,
    /// Latest localized candidate per track id.
    pub latest: BTreeMap<u64, LocalizedCandidate>,
    frames: u64,
}

impl PerceptionRig {
    pub fn new(config: PerceptionConfig, provider: FrameProvider) -> Self {
        Self {
            config,
            provider,
            scorer: LexicalScorer::bundled(),
            registry: TrackRegistry::new(),
            latest: BTreeMap::new(),
            frames: 0,
        }
    }

    pub fn synthetic(seed: u64) -> Self {
        Self::new(
            PerceptionConfig::default(),
            FrameProvider::Render {
                config: RenderConfig::default(),
                affinity: AffinityTable::bundled(),
                seed,
            },
        )
    }

    pub fn capture(&mut self, sim: &Simulation) -> PerceptionFrame {
        self.frames += 1;
        match &mut self.provider {
            FrameProvider::Render {
                config,
                affinity,
                seed,
            } => render_observation(
                sim.state.pose,
                &sim.world,
                config,
                affinity,
                seed.wrapping_add(self.frames),
            ),
            FrameProvider::Fixtures(src) => src.next_frame().unwrap_or_else(|| {
                PerceptionFrame::empty(CameraIntrinsics::default())
            }),
        }
    }

    /// Grab a frame, run the perception pipeline on it and update tracks.
    pub fn observe(&mut self, sim: &Simulation, at_ms: u64) -> FrameResult {
        let frame = self.capture(sim);
        self.process(&frame, sim, at_ms)
    }

    pub fn process(&mut self, frame: &PerceptionFrame, sim: &Simulation, at_ms: u64) -> FrameResult {
        let ext = match &self.provider {
            FrameProvider::Render { config, .. } => config.extrinsics(),
            FrameProvider::Fixtures(_) => RenderConfig::default().extrinsics(),
        };
        let p = sim.state.pose;
        let result = process_frame(
            frame,
            &self.config,
            &ext,
            (p.x, p.y, p.theta),
            &mut self.registry,
            None,
            at_ms,
        );
        for c in &result.candidates {
            self.latest.insert(c.track_id, c.clone());
        }
        result
    }

    /// Latest candidates whose tracks are still live, with tracked positions.
    pub fn live_candidates(&self, now_ms: u64) -> Vec<LocalizedCandidate> {
        self.registry
            .live(now_ms, self.config.track_ttl_ms)
            .filter_map(|t| {
                self.latest.get(&t.track_id).map(|c| LocalizedCandidate {
                    position_world: t.position(),
                    ..c.clone()
                })
            })
            .collect()
    }

    pub fn reset_tracks(&mut self) {
        self.registry.clear();
        self.latest.clear();
    }
}

/// Mutable robot-side state of a session.
pub struct RobotRuntime {
    pub sim: Simulation,
    pub perception: PerceptionRig,
    /// Linear speed ceiling, m/s; lowered by LimitSpeed actions.
    pub speed_ceiling: f64,
}

impl RobotRuntime {
    pub fn new(world: World, perception: PerceptionRig) -> Self {
        Self {
            sim: Simulation::new(world),
            perception,
            speed_ceiling: MAX_LINEAR_SPEED,
        }
    }
}

/// Everything `compile` needs besides the primitive.
pub struct CompileContext<'a> {
    pub world: &'a World,
    pub config: &'a ExecutorConfig,
    pub speed_ceiling: f64,
    /// Resolved target for NavigateToObject, if one was found.
    pub object_goal: Option<[f64; 2]>,
}

impl CompileContext<'_> {
    pub fn linear_speed(&self, requested: Option<f64>) -> f64 {
        requested
            .unwrap_or(self.config.default_linear_speed)
            .clamp(MIN_LINEAR_SPEED, MAX_LINEAR_SPEED)
            .min(self.speed_ceiling.max(MIN_LINEAR_SPEED))
    }

    fn angular_speed(&self, requested_deg: Option<f64>) -> f64 {
        requested_deg
            .unwrap_or(self.config.default_angular_speed_deg)
            .clamp(1e-3, MAX_ANGULAR_SPEED_DEG)
            .to_radians()
    }
}

fn push(out: &mut Vec<TwistCommand>, v: f64, omega: f64, duration: f64) {
    if duration > 1e-12 {
        out.push(TwistCommand { v, omega, duration });
    }
}

fn turn(out: &mut Vec<TwistCommand>, angle_rad: f64, omega: f64) {
    push(out, 0.0, omega.copysign(angle_rad), angle_rad.abs() / omega);
}

/// Constant-speed arc; slows down when the radius would need more than the
/// angular limit.
fn arc(out: &mut Vec<TwistCommand>, radius: f64, angle_rad: f64, sign: f64, v: f64) {
    let w_max = MAX_ANGULAR_SPEED_DEG.to_radians();
    let v = v.min(w_max * radius);
    let omega = v / radius;
    push(out, v, sign * omega, angle_rad * radius / v);
}

/// Rotate-then-drive twists through `waypoints`, starting from `pose`.
pub fn waypoint_twists(pose: Pose, waypoints: &[[f64; 2]], v: f64, omega: f64) -> Vec<TwistCommand> {
    let mut out = Vec::new();
    let mut heading = pose.theta;
    let mut at = pose.xy();
    for w in waypoints {
        let (dx, dy) = (w[0] - at[0], w[1] - at[1]);
        let len = dx.hypot(dy);
        if len < 1e-9 {
            continue;
        }
        let want = dy.atan2(dx);
        turn(&mut out, normalize_angle(want - heading), omega);
        push(&mut out, v, 0.0, len / v);
        heading = want;
        at = *w;
    }
    out
}

/// Twist schedule for one motion primitive. Non-motion primitives compile to
/// an empty schedule.
pub fn compile(
    primitive: &ActionPrimitive,
    pose: Pose,
    ctx: &CompileContext<'_>,
) -> Result<Vec<TwistCommand>, ExecError> {
    let mut out = Vec::new();
    match primitive {
        ActionPrimitive::MoveLinear {
            direction,
            distance,
            speed,
        } => {
            let v = ctx.linear_speed(*speed);
            let sign = match direction {
                LinearDirection::Forward => 1.0,
                LinearDirection::Backward => -1.0,
            };
            push(&mut out, sign * v, 0.0, distance / v);
        }
        ActionPrimitive::Rotate {
            direction,
            angle_deg,
            angular_speed_deg,
        } => {
            let w = ctx.angular_speed(*angular_speed_deg);
            turn(&mut out, direction.sign() * angle_deg.to_radians(), w);
        }
        ActionPrimitive::PatternMove { shape, speed } => {
            let v = ctx.linear_speed(*speed);
            let w = ctx.angular_speed(None);
            match shape {
                PatternShape::Circle { radius } => arc(&mut out, *radius, 2.0 * PI, 1.0, v),
                PatternShape::Arc {
                    radius,
                    angle_deg,
                    direction,
                } => arc(
                    &mut out,
                    *radius,
                    angle_deg.to_radians(),
                    direction.sign(),
                    v,
                ),
                PatternShape::Rectangle { length, breadth } => {
                    for side in [length, breadth, length, breadth] {
                        push(&mut out, v, 0.0, side / v);
                        turn(&mut out, PI / 2.0, w);
                    }
                }
                PatternShape::LShape {
                    horizontal,
                    vertical,
                } => {
                    push(&mut out, v, 0.0, horizontal / v);
                    turn(&mut out, PI / 2.0, w);
                    push(&mut out, v, 0.0, vertical / v);
                }
            }
        }
        ActionPrimitive::NavigateToCoords { x, y, speed, .. } => {
            out = navigate(pose, [*x, *y], ctx.linear_speed(*speed), ctx)?;
        }
        ActionPrimitive::NavigateToNamed { destination, speed } => {
            let goal = lookup_destination(ctx.world, destination)
                .ok_or_else(|| ExecError::UnknownDestination(destination.clone()))?;
            out = navigate(pose, goal, ctx.linear_speed(*speed), ctx)?;
        }
        ActionPrimitive::NavigateToObject { label, .. } => {
            let goal = ctx
                .object_goal
                .ok_or_else(|| ExecError::UnreachableObject(label.clone()))?;
            out = navigate(pose, goal, ctx.linear_speed(None), ctx)?;
        }
        ActionPrimitive::Guarded { .. }
        | ActionPrimitive::Wait { .. }
        | ActionPrimitive::DescribeSurroundings
        | ActionPrimitive::ReportPose
        | ActionPrimitive::CaptureImage
        | ActionPrimitive::LimitSpeed { .. } => {}
    }
    Ok(out)
}

fn navigate(
    pose: Pose,
    goal: [f64; 2],
    v: f64,
    ctx: &CompileContext<'_>,
) -> Result<Vec<TwistCommand>, ExecError> {
    let path = plan_path(&ctx.world.inflated, pose.xy(), goal)?;
    let w = ctx.config.navigation_angular_speed_deg.to_radians();
    Ok(waypoint_twists(pose, &path.waypoints[1..], v, w))
}

/// Case-insensitive destination lookup, ignoring a leading article.
pub fn lookup_destination(world: &World, name: &str) -> Option<[f64; 2]> {
    let key = name.trim().to_lowercase();
    let key = key.strip_prefix("the ").unwrap_or(&key).trim();
    world
        .grid
        .named_destinations
        .iter()
        .find(|(k, _)| k.to_lowercase() == key)
        .map(|(_, p)| [p[0], p[1]])
}

/// Nearest point to `target` that is free in the inflated grid, searched
/// outward ring by ring up to `max_r` meters.
pub fn nearest_free(world: &World, target: [f64; 2], max_r: f64) -> Option<[f64; 2]> {
    let g = &world.inflated;
    if g.is_free(target[0], target[1]) {
        return Some(target);
    }
    let (ci, cj) = g.cell_of(target[0], target[1]);
    let rings = (max_r / g.resolution).ceil() as i64;
    for r in 1..=rings {
        let mut best: Option<([f64; 2], f64)> = None;
        for dj in -r..=r {
            for di in -r..=r {
                if di.abs() != r && dj.abs() != r {
                    continue;
                }
                if g.occupied(ci + di, cj + dj) {
                    continue;
                }
                let c = g.center_of(ci + di, cj + dj);
                let d = crate::simulator::distance_between(c, target);
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((c, d));
                }
            }
        }
        if let Some((c, _)) = best {
            return Some(c);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::TurnDirection;
    use crate::simulator::bundled_map;
    use approx::assert_abs_diff_eq;

    fn world() -> World {
        World::from_map(&bundled_map("open").unwrap()).unwrap()
    }

    fn ctx(w: &World) -> CompileContext<'_> {
        static CFG: std::sync::LazyLock<ExecutorConfig> =
            std::sync::LazyLock::new(ExecutorConfig::default);
        CompileContext {
            world: w,
            config: &CFG,
            speed_ceiling: 1.0,
            object_goal: None,
        }
    }

    #[test]
    fn circle_schedule() {
        let w = world();
        let t = compile(
            &ActionPrimitive::PatternMove {
                shape: PatternShape::Circle { radius: 1.0 },
                speed: Some(1.0),
            },
            w.start,
            &ctx(&w),
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        assert_abs_diff_eq!(t[0].omega, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t[0].duration, 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn move_schedule() {
        let w = world();
        let t = compile(
            &ActionPrimitive::MoveLinear {
                direction: LinearDirection::Forward,
                distance: 2.0,
                speed: Some(0.2),
            },
            w.start,
            &ctx(&w),
        )
        .unwrap();
        assert_eq!(
            t,
            vec![TwistCommand {
                v: 0.2,
                omega: 0.0,
                duration: 10.0
            }]
        );
    }

    #[test]
    fn rectangle_has_eight_segments() {
        let w = world();
        let t = compile(
            &ActionPrimitive::PatternMove {
                shape: PatternShape::Rectangle {
                    length: 3.0,
                    breadth: 2.0,
                },
                speed: Some(0.5),
            },
            w.start,
            &ctx(&w),
        )
        .unwrap();
        assert_eq!(t.len(), 8);
        let drive: f64 = t.iter().filter(|s| s.v != 0.0).map(|s| s.duration).sum();
        assert_abs_diff_eq!(drive, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn rotate_and_ceiling() {
        let w = world();
        let t = compile(
            &ActionPrimitive::Rotate {
                direction: TurnDirection::Right,
                angle_deg: 90.0,
                angular_speed_deg: Some(30.0),
            },
            w.start,
            &ctx(&w),
        )
        .unwrap();
        assert_abs_diff_eq!(t[0].omega, -30f64.to_radians(), epsilon = 1e-15);
        assert_abs_diff_eq!(t[0].duration, 3.0, epsilon = 1e-12);
        let mut c = ctx(&w);
        c.speed_ceiling = 0.4;
        assert_eq!(c.linear_speed(Some(0.9)), 0.4);
        assert_eq!(c.linear_speed(Some(0.1)), 0.2);
    }

    #[test]
    fn tight_circle_respects_angular_limit() {
        let w = world();
        let t = compile(
            &ActionPrimitive::PatternMove {
                shape: PatternShape::Circle { radius: 0.2 },
                speed: Some(1.0),
            },
            w.start,
            &ctx(&w),
        )
        .unwrap();
        assert!(t.iter().all(TwistCommand::within_limits));
    }

    #[test]
    fn navigation_needs_known_targets() {
        let w = world();
        let named = ActionPrimitive::NavigateToNamed {
            destination: "moon".into(),
            speed: None,
        };
        assert_eq!(
            compile(&named, w.start, &ctx(&w)),
            Err(ExecError::UnknownDestination("moon".into()))
        );
        let obj = ActionPrimitive::NavigateToObject {
            label: "chair".into(),
            selector: crate::engine::ObjectSelector::Named,
        };
        assert!(matches!(
            compile(&obj, w.start, &ctx(&w)),
            Err(ExecError::UnreachableObject(_))
        ));
        assert_eq!(lookup_destination(&w, "The North"), Some([0.0, 8.0]));
    }

    #[test]
    fn goal_tolerance() {
        let g = GoalSpec::at([0.0, 0.0]);
        assert!(goal_reached(Pose::new(0.15, 0.0, 0.0), &g));
        assert!(!goal_reached(Pose::new(0.25, 0.0, 0.0), &g));
        assert!(goal_reached(Pose::new(0.0, 0.0, 1.0), &g));
    }

    #[test]
    fn nearest_free_moves_out_of_walls() {
        let w = world();
        let p = nearest_free(&w, [9.95, 0.0], 1.0).unwrap();
        assert!(w.inflated.is_free(p[0], p[1]));
        assert!(p[0] < 9.95);
    }
}
