//! Simulated differential-drive robot on an occupancy-grid map: exact arc
//! kinematics, A* planning and synthetic camera observations.

mod grid;
mod planner;
mod render;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{MapFile, OccupancyGrid};
pub use planner::{astar_cells, plan_path, smooth, step_allowed, PathCost, PlannedPath, NEIGHBOURS};
pub use render::{degradation, render_observation, AffinityTable, RenderConfig};

use crate::engine::{MAX_ANGULAR_SPEED_DEG, MAX_LINEAR_SPEED};

pub const DEFAULT_ROBOT_RADIUS: f64 = 0.3;
pub const DEFAULT_DT: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("no path: {0}")]
    NoPath(String),
    #[error("time step must be positive")]
    NonPositiveDt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, counter-clockwise from +x, in `(-pi, pi]`.
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

pub fn normalize_angle(a: f64) -> f64 {
    let mut t = a % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub v: f64,
    pub omega: f64,
    pub odom_distance: f64,
    pub collided: bool,
}

impl RobotState {
    pub fn at(pose: Pose) -> Self {
        Self {
            pose,
            v: 0.0,
            omega: 0.0,
            odom_distance: 0.0,
            collided: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub radius: f64,
    #[serde(default = "one")]
    pub illumination: f64,
    #[serde(default)]
    pub occluded_fraction: f64,
}

fn one() -> f64 {
    1.0
}

/// Linear and angular velocity held for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistCommand {
    pub v: f64,
    pub omega: f64,
    pub duration: f64,
}

impl TwistCommand {
    pub fn within_limits(&self) -> bool {
        self.v.abs() <= MAX_LINEAR_SPEED + 1e-12
            && self.omega.abs() <= MAX_ANGULAR_SPEED_DEG.to_radians() + 1e-12
            && self.duration > 0.0
    }
}

/// The static environment: raw grid, its inflation, and scene objects.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub grid: OccupancyGrid,
    pub inflated: OccupancyGrid,
    pub objects: Vec<SceneObject>,
    pub robot_radius: f64,
    pub start: Pose,
}

impl World {
    pub fn from_map(map: &MapFile) -> Result<Self, SimError> {
        Self::with_radius(map, DEFAULT_ROBOT_RADIUS)
    }

    pub fn with_radius(map: &MapFile, robot_radius: f64) -> Result<Self, SimError> {
        let grid = map.to_grid()?;
        let inflated = grid.inflate(robot_radius);
        let start = map.start_pose(&grid);
        if inflated.occupied(
            inflated.cell_of(start.x, start.y).0,
            inflated.cell_of(start.x, start.y).1,
        ) {
            return Err(SimError::InvalidMap(
                "start pose is too close to an obstacle".into(),
            ));
        }
        Ok(Self {
            grid,
            inflated,
            objects: map.objects.clone(),
            robot_radius,
            start,
        })
    }

    /// Free distance ahead of the robot body along `heading`, counting walls
    /// and scene objects.
    pub fn clearance(&self, pose: Pose, heading: f64, max_range: f64) -> f64 {
        let from = pose.xy();
        let mut d = self.grid.ray_distance(from, heading, max_range);
        let (c, s) = (heading.cos(), heading.sin());
        for o in &self.objects {
            let (ox, oy) = (o.x - from[0], o.y - from[1]);
            let along = ox * c + oy * s;
            if along <= 0.0 {
                continue;
            }
            let perp2 = ox * ox + oy * oy - along * along;
            let r2 = o.radius * o.radius;
            if perp2 <= r2 {
                d = d.min(along - (r2 - perp2).sqrt());
            }
        }
        (d - self.robot_radius).max(0.0)
    }
}

/// A world plus the robot moving in it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub world: World,
    pub state: RobotState,
}

impl Simulation {
    pub fn new(world: World) -> Self {
        let state = RobotState::at(world.start);
        Self { world, state }
    }

    pub fn reset(&mut self) {
        self.state = RobotState::at(self.world.start);
    }
}

pub const BUNDLED_MAPS: [(&str, &str); 2] = [
    ("office", include_str!("../../data/maps/office.json")),
    ("open", include_str!("../../data/maps/open.json")),
];

pub fn bundled_map(name: &str) -> Option<MapFile> {
    BUNDLED_MAPS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, json)| MapFile::parse(json).expect("bundled map is valid"))
}

/// Closed-form pose after holding `(v, omega)` for `dt`.
pub fn integrate(pose: Pose, v: f64, omega: f64, dt: f64) -> Pose {
    let th = pose.theta;
    if omega.abs() < 1e-9 {
        return Pose::new(pose.x + v * dt * th.cos(), pose.y + v * dt * th.sin(), th);
    }
    let r = v / omega;
    let th2 = th + omega * dt;
    Pose::new(
        pose.x + r * (th2.sin() - th.sin()),
        pose.y - r * (th2.cos() - th.cos()),
        th2,
    )
}

/// Advance the robot by `dt` under `twist`. Velocities are clamped to the
/// platform limits. If the swept path enters an inflated obstacle cell the
/// state is frozen and `collided` is set.
pub fn step(
    state: &RobotState,
    twist: &TwistCommand,
    dt: f64,
    inflated: &OccupancyGrid,
) -> Result<RobotState, SimError> {
    if !(dt > 0.0) {
        return Err(SimError::NonPositiveDt);
    }
    let w_max = MAX_ANGULAR_SPEED_DEG.to_radians();
    let v = twist.v.clamp(-MAX_LINEAR_SPEED, MAX_LINEAR_SPEED);
    let omega = twist.omega.clamp(-w_max, w_max);
    let travel = v.abs() * dt;
    if travel > 0.0 {
        let samples = (travel / (inflated.resolution / 2.0)).ceil().max(1.0) as usize;
        for k in 1..=samples {
            let p = integrate(state.pose, v, omega, dt * k as f64 / samples as f64);
            if !inflated.is_free(p.x, p.y) {
                return Ok(RobotState {
                    v: 0.0,
                    omega: 0.0,
                    collided: true,
                    ..*state
                });
            }
        }
    }
    Ok(RobotState {
        pose: integrate(state.pose, v, omega, dt),
        v,
        omega,
        odom_distance: state.odom_distance + travel,
        collided: false,
    })
}

/// Planar Euclidean distance.
pub fn distance_between(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Straight-line travel time at `speed`.
pub fn travel_time(a: [f64; 2], b: [f64; 2], speed: f64) -> f64 {
    distance_between(a, b) / speed
}
