use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::query::{QueryKind, SnapshotSlot};
use super::{
    compile, goal_reached, nearest_free, CompileContext, ExecError, ExecStatus, ExecutionObserver,
    ExecutionTrace, Executor, GoalSpec, QueryResponse, RobotRuntime, Tick, ActionOutcome,
};
use crate::engine::{
    ActionPlan, ActionPrimitive, Condition, LinearDirection, ObjectSelector, MAX_LINEAR_SPEED,
    MIN_LINEAR_SPEED,
};
use crate::perception::{select_target, GroundingCandidate, SimilarityScorer};
use crate::simulator::{distance_between, step, travel_time, Pose, TwistCommand};

/// Identifies the turn being executed, for timestamps and snapshot names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnInfo {
    pub session_id: String,
    pub turn: u64,
    pub language: String,
    /// Clock value when execution starts, ms.
    pub base_ms: u64,
}

/// Trace for a plan the user turned down: every action Skipped.
pub fn discarded_trace(plan: &ActionPlan, pose: Pose, at_ms: u64) -> ExecutionTrace {
    let per_action: Vec<ActionOutcome> = plan
        .actions
        .iter()
        .enumerate()
        .map(|(index, a)| ActionOutcome {
            index,
            primitive: a.canonical(),
            started_at_ms: at_ms,
            ended_at_ms: at_ms,
            status: ExecStatus::Skipped,
            detail: "plan discarded".into(),
            response: None,
        })
        .collect();
    ExecutionTrace {
        s_n: ExecutionTrace::success_indicator(&per_action),
        per_action,
        final_pose: pose,
        snapshots: Vec::new(),
        first_response_ms: None,
    }
}

enum Stop {
    Failed(String),
    Aborted,
}

impl From<ExecError> for Stop {
    fn from(e: ExecError) -> Self {
        match e {
            ExecError::AbortRequested => Stop::Aborted,
            other => Stop::Failed(other.to_string()),
        }
    }
}

enum Ended {
    Completed,
    /// A guard condition became true mid-schedule.
    Interrupted,
}

struct Done {
    status: ExecStatus,
    detail: String,
    response: Option<QueryResponse>,
}

impl Done {
    fn ok(detail: impl Into<String>) -> Self {
        Self {
            status: ExecStatus::Success,
            detail: detail.into(),
            response: None,
        }
    }
}

struct Run<'a> {
    exec: &'a Executor,
    rt: &'a mut RobotRuntime,
    turn: &'a TurnInfo,
    abort: &'a AtomicBool,
    observer: &'a mut dyn ExecutionObserver,
    elapsed_s: f64,
    start_odom: f64,
    action_index: usize,
    last_detection_s: Option<f64>,
    best_seen: Vec<(String, f64)>,
    first_response_ms: Option<u64>,
    snapshots: Vec<String>,
}

impl Executor {
    /// Run an action plan on the session's robot. Plans that need
    /// confirmation must come with `approved`; otherwise nothing moves.
    /// `abort` is checked at every tick.
    pub fn execute_plan(
        &self,
        plan: &ActionPlan,
        approved: bool,
        rt: &mut RobotRuntime,
        turn: &TurnInfo,
        abort: &AtomicBool,
        observer: &mut dyn ExecutionObserver,
    ) -> Result<ExecutionTrace, ExecError> {
        if plan.requires_confirmation && !approved {
            return Err(ExecError::NotApproved);
        }
        let start_odom = rt.sim.state.odom_distance;
        let mut run = Run {
            exec: self,
            rt,
            turn,
            abort,
            observer,
            elapsed_s: 0.0,
            start_odom,
            action_index: 0,
            last_detection_s: None,
            best_seen: Vec::new(),
            first_response_ms: None,
            snapshots: Vec::new(),
        };
        let mut per_action = Vec::with_capacity(plan.actions.len());
        let mut halted: Option<(ExecStatus, String)> = None;
        for (index, action) in plan.actions.iter().enumerate() {
            let now = run.now_ms();
            if let Some((status, why)) = &halted {
                let status = if *status == ExecStatus::Aborted {
                    ExecStatus::Aborted
                } else {
                    ExecStatus::Skipped
                };
                per_action.push(ActionOutcome {
                    index,
                    primitive: action.canonical(),
                    started_at_ms: now,
                    ended_at_ms: now,
                    status,
                    detail: why.clone(),
                    response: None,
                });
                continue;
            }
            run.action_index = index;
            run.observer.on_action_start(index, action, now);
            let done = if run.abort.load(Ordering::Relaxed) {
                Err(Stop::Aborted)
            } else {
                run.action(action, &[])
            };
            let done = match done {
                Ok(d) => d,
                Err(Stop::Aborted) => {
                    halted = Some((ExecStatus::Aborted, "stopped by user".into()));
                    Done {
                        status: ExecStatus::Aborted,
                        detail: "stopped by user".into(),
                        response: None,
                    }
                }
                Err(Stop::Failed(why)) => {
                    halted = Some((ExecStatus::Failed, format!("not run: action {} failed", index + 1)));
                    Done {
                        status: ExecStatus::Failed,
                        detail: why,
                        response: None,
                    }
                }
            };
            if run.rt.sim.state.v != 0.0 || run.rt.sim.state.omega != 0.0 {
                run.rt.sim.state.v = 0.0;
                run.rt.sim.state.omega = 0.0;
            }
            let outcome = ActionOutcome {
                index,
                primitive: action.canonical(),
                started_at_ms: now,
                ended_at_ms: run.now_ms(),
                status: done.status,
                detail: done.detail,
                response: done.response,
            };
            run.observer.on_action_end(&outcome);
            per_action.push(outcome);
        }
        for line in &plan.unparsed {
            let now = run.now_ms();
            per_action.push(ActionOutcome {
                index: per_action.len(),
                primitive: line.line.clone(),
                started_at_ms: now,
                ended_at_ms: now,
                status: ExecStatus::Failed,
                detail: format!("unparsed: {}", line.reason),
                response: None,
            });
        }
        Ok(ExecutionTrace {
            s_n: ExecutionTrace::success_indicator(&per_action),
            per_action,
            final_pose: run.rt.sim.state.pose,
            snapshots: run.snapshots,
            first_response_ms: run.first_response_ms,
        })
    }
}

impl Run<'_> {
    fn now_ms(&self) -> u64 {
        self.turn.base_ms + (self.elapsed_s * 1000.0).round() as u64
    }

    fn responded(&mut self) {
        if self.first_response_ms.is_none() {
            self.first_response_ms = Some(self.now_ms());
        }
    }

    fn ctx(&self, object_goal: Option<[f64; 2]>) -> CompileContext<'_> {
        CompileContext {
            world: &self.rt.sim.world,
            config: &self.exec.config,
            speed_ceiling: self.rt.speed_ceiling,
            object_goal,
        }
    }

    fn action(&mut self, action: &ActionPrimitive, guards: &[&Condition]) -> Result<Done, Stop> {
        let cfg = &self.exec.config;
        match action {
            ActionPrimitive::Guarded {
                condition,
                then,
                otherwise,
            } => {
                if self.holds(condition) {
                    let d = self.action(then, guards)?;
                    return Ok(Done {
                        detail: format!("condition met; {}", d.detail),
                        ..d
                    });
                }
                let Some(otherwise) = otherwise else {
                    return Ok(Done {
                        status: ExecStatus::Skipped,
                        detail: "condition not met".into(),
                        response: None,
                    });
                };
                let mut inner: Vec<&Condition> = guards.to_vec();
                inner.push(condition);
                let d = self.action(otherwise, &inner)?;
                if d.detail == INTERRUPTED && self.holds(condition) {
                    let d = self.action(then, guards)?;
                    return Ok(Done {
                        detail: format!("condition met during fallback; {}", d.detail),
                        ..d
                    });
                }
                Ok(d)
            }
            ActionPrimitive::Wait { seconds } => {
                let twist = TwistCommand {
                    v: 0.0,
                    omega: 0.0,
                    duration: *seconds,
                };
                self.drive(&[twist], guards, false)
                    .map(|e| self.ended(e, format!("waited {seconds} s")))
            }
            ActionPrimitive::LimitSpeed { max_speed } => {
                let v = max_speed.clamp(MIN_LINEAR_SPEED, MAX_LINEAR_SPEED);
                self.rt.speed_ceiling = v;
                let lang = self.turn.language.clone();
                let text = self.exec.catalog.render(
                    &lang,
                    "speed_limited",
                    &[("v", super::query::format_compact(v, 2, &lang))],
                );
                self.responded();
                Ok(Done {
                    status: ExecStatus::Success,
                    detail: format!("speed ceiling {v} m/s"),
                    response: Some(QueryResponse {
                        kind: QueryKind::SpeedLimit,
                        text,
                        pose: None,
                        objects: Vec::new(),
                        snapshot: None,
                    }),
                })
            }
            ActionPrimitive::ReportPose
            | ActionPrimitive::DescribeSurroundings
            | ActionPrimitive::CaptureImage => {
                let slot = matches!(action, ActionPrimitive::CaptureImage).then(|| SnapshotSlot {
                    session_id: self.turn.session_id.clone(),
                    turn: self.turn.turn,
                    k: self.snapshots.len() + 1,
                });
                let now = self.now_ms();
                let lang = self.turn.language.clone();
                let r = self
                    .exec
                    .handle_query(action, self.rt, &lang, slot.as_ref(), now)?;
                if let Some(s) = &r.snapshot {
                    self.snapshots.push(s.clone());
                }
                self.responded();
                Ok(Done {
                    status: ExecStatus::Success,
                    detail: r.text.text.clone(),
                    response: Some(r),
                })
            }
            ActionPrimitive::MoveLinear { direction, .. } => {
                let twists = compile(action, self.rt.sim.state.pose, &self.ctx(None))?;
                let backward = *direction == LinearDirection::Backward;
                self.drive(&twists, guards, true).map(|e| {
                    self.ended(e, format!("moved {}", if backward { "backward" } else { "forward" }))
                })
            }
            ActionPrimitive::Rotate { .. } | ActionPrimitive::PatternMove { .. } => {
                let twists = compile(action, self.rt.sim.state.pose, &self.ctx(None))?;
                self.drive(&twists, guards, false)
                    .map(|e| self.ended(e, "pattern complete".to_string()))
            }
            ActionPrimitive::NavigateToCoords { x, y, .. } => {
                self.navigate(action, [*x, *y], None, guards)
            }
            ActionPrimitive::NavigateToNamed { destination, .. } => {
                let goal = super::lookup_destination(&self.rt.sim.world, destination)
                    .ok_or_else(|| ExecError::UnknownDestination(destination.clone()))?;
                self.navigate(action, goal, None, guards)
            }
            ActionPrimitive::NavigateToObject { label, selector } => {
                let target = self.find_object(label, *selector, guards)?;
                let Some(target) = target else {
                    return Err(ExecError::UnreachableObject(label.clone()).into());
                };
                let here = self.rt.sim.state.pose.xy();
                let d = distance_between(here, target);
                let standoff = cfg.object_standoff_m.min(d);
                let approach = if d > 1e-9 {
                    [
                        target[0] - standoff * (target[0] - here[0]) / d,
                        target[1] - standoff * (target[1] - here[1]) / d,
                    ]
                } else {
                    here
                };
                let goal = nearest_free(&self.rt.sim.world, approach, 1.5)
                    .ok_or_else(|| ExecError::UnreachableObject(label.clone()))?;
                self.navigate(action, goal, Some(goal), guards)
            }
        }
    }

    fn ended(&self, e: Ended, detail: String) -> Done {
        match e {
            Ended::Completed => Done::ok(detail),
            Ended::Interrupted => Done::ok(INTERRUPTED),
        }
    }

    fn navigate(
        &mut self,
        action: &ActionPrimitive,
        goal: [f64; 2],
        object_goal: Option<[f64; 2]>,
        guards: &[&Condition],
    ) -> Result<Done, Stop> {
        let twists = compile(action, self.rt.sim.state.pose, &self.ctx(object_goal))?;
        if let Ended::Interrupted = self.drive(&twists, guards, false)? {
            return Ok(Done::ok(INTERRUPTED));
        }
        let spec = GoalSpec {
            target: goal,
            tolerance: self.exec.config.goal_tolerance,
        };
        let pose = self.rt.sim.state.pose;
        let err = distance_between(pose.xy(), goal);
        if goal_reached(pose, &spec) {
            Ok(Done::ok(format!(
                "reached ({:.2}, {:.2}), error {err:.3} m",
                goal[0], goal[1]
            )))
        } else {
            Err(Stop::Failed(format!(
                "stopped {err:.2} m from ({:.2}, {:.2})",
                goal[0], goal[1]
            )))
        }
    }

    /// Pick the target for an object navigation, turning in place to look
    /// around when nothing suitable is in view.
    fn find_object(
        &mut self,
        label: &str,
        selector: ObjectSelector,
        guards: &[&Condition],
    ) -> Result<Option<[f64; 2]>, Stop> {
        let step_deg = self.exec.config.scan_step_deg.clamp(5.0, 180.0);
        let looks = (360.0 / step_deg).ceil() as usize;
        for look in 0..=looks {
            if look > 0 {
                let w = self.exec.config.navigation_angular_speed_deg.to_radians();
                let turn = TwistCommand {
                    v: 0.0,
                    omega: w,
                    duration: step_deg.to_radians() / w,
                };
                if let Ended::Interrupted = self.drive(&[turn], guards, false)? {
                    return Ok(None);
                }
            }
            let now = self.now_ms();
            self.rt.perception.observe(&self.rt.sim, now);
            if let Some(p) = self.select(label, selector, now) {
                return Ok(Some(p));
            }
        }
        Ok(None)
    }

    fn select(&self, label: &str, selector: ObjectSelector, now: u64) -> Option<[f64; 2]> {
        let rig = &self.rt.perception;
        let live = rig.live_candidates(now);
        let generic = matches!(label.trim().to_lowercase().as_str(), "object" | "objects" | "thing");
        let cands: Vec<GroundingCandidate> = live
            .iter()
            .filter(|c| {
                generic && selector == ObjectSelector::BestConfidence
                    || c.labels.iter().any(|l| rig.scorer.sim(l, label) >= 0.5)
            })
            .map(|c| GroundingCandidate {
                track_id: c.track_id,
                labels: c.labels.clone(),
                p_prime: c.p_prime.clone(),
            })
            .collect();
        let cfg = &rig.config;
        let pick = select_target(&cands, label, cfg.lambda1, cfg.lambda2, &rig.scorer).ok()?;
        if !generic && rig.scorer.sim(&pick.label, label) < 0.5 {
            return None;
        }
        live.iter()
            .find(|c| c.track_id == pick.track_id)
            .map(|c| [c.position_world[0], c.position_world[1]])
    }

    /// Execute twists tick by tick. `pause_for_obstacles` holds position
    /// while something is closer ahead than the pause distance.
    fn drive(
        &mut self,
        twists: &[TwistCommand],
        guards: &[&Condition],
        pause_for_obstacles: bool,
    ) -> Result<Ended, Stop> {
        let dt_max = self.exec.config.dt;
        for twist in twists {
            let at = self.now_ms();
            self.observer.on_twist(twist, at);
            self.responded();
            let mut t = 0.0;
            let mut paused_s = 0.0;
            while twist.duration - t > 1e-9 {
                if self.abort.load(Ordering::Relaxed) {
                    return Err(Stop::Aborted);
                }
                if guards.iter().any(|c| self.holds(c)) {
                    return Ok(Ended::Interrupted);
                }
                let dt = dt_max.min(twist.duration - t);
                if pause_for_obstacles && twist.v != 0.0 {
                    let pose = self.rt.sim.state.pose;
                    let heading = if twist.v < 0.0 { pose.theta + PI } else { pose.theta };
                    let remaining = twist.v.abs() * (twist.duration - t);
                    let free = self.rt.sim.world.clearance(pose, heading, remaining + 1.0);
                    if free < self.exec.config.obstacle_pause_m && free < remaining {
                        if paused_s >= self.exec.config.obstacle_wait_s {
                            return Err(Stop::Failed(format!(
                                "path blocked {free:.2} m ahead"
                            )));
                        }
                        paused_s += dt_max;
                        self.rt.sim.state.v = 0.0;
                        self.rt.sim.state.omega = 0.0;
                        self.tick(dt_max, true);
                        continue;
                    }
                }
                let next = step(&self.rt.sim.state, twist, dt, &self.rt.sim.world.inflated)
                    .map_err(|e| Stop::Failed(e.to_string()))?;
                self.rt.sim.state = next;
                if next.collided {
                    return Err(Stop::Failed("collision".into()));
                }
                t += dt;
                self.tick(dt, false);
            }
        }
        Ok(Ended::Completed)
    }

    fn tick(&mut self, dt: f64, paused: bool) {
        self.elapsed_s += dt;
        let s = self.rt.sim.state;
        let tick = Tick {
            at_ms: self.now_ms(),
            pose: s.pose,
            v: s.v,
            omega: s.omega,
            action_index: self.action_index,
            paused,
        };
        self.observer.on_tick(&tick, &self.rt.sim);
    }

    fn holds(&mut self, c: &Condition) -> bool {
        let s = self.rt.sim.state;
        match c {
            Condition::DetectionAbove { label, prob } => {
                self.refresh_detections();
                let best = self
                    .best_seen
                    .iter()
                    .filter(|(l, _)| {
                        label
                            .as_deref()
                            .is_none_or(|want| self.rt.perception.scorer.sim(l, want) >= 1.0)
                    })
                    .map(|(_, p)| *p)
                    .fold(f64::NEG_INFINITY, f64::max);
                best >= *prob
            }
            Condition::ObstacleCloser { distance } => {
                self.rt.sim.world.clearance(s.pose, s.pose.theta, distance + 1.0) < *distance
            }
            Condition::ElapsedOver { seconds } => self.elapsed_s > *seconds,
            Condition::TravelTimeOver {
                seconds,
                speed,
                goal,
            } => travel_time(s.pose.xy(), [goal[0], goal[1]], *speed) > *seconds,
            Condition::DistanceTravelledOver { meters } => {
                s.odom_distance - self.start_odom > *meters
            }
        }
    }

    /// Look at a fresh frame at most once per detection period.
    fn refresh_detections(&mut self) {
        let period = self.exec.config.detection_period_s;
        if self
            .last_detection_s
            .is_some_and(|t| self.elapsed_s - t < period - 1e-9)
        {
            return;
        }
        self.last_detection_s = Some(self.elapsed_s);
        let now = self.now_ms();
        let result = self.rt.perception.observe(&self.rt.sim, now);
        self.best_seen = result
            .candidates
            .iter()
            .flat_map(|c| c.labels.iter().cloned().zip(c.p_prime.iter().copied()))
            .collect();
    }
}

const INTERRUPTED: &str = "interrupted by condition";
