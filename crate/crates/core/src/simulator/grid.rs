use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Pose, SceneObject, SimError};

/// Occupancy grid. Cell `(i, j)` covers
/// `[ox + i*res, ox + (i+1)*res) x [oy + j*res, oy + (j+1)*res)`, with `j`
/// growing upwards (row 0 of a map file is the top row).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    occupancy: Vec<u64>,
    pub named_destinations: BTreeMap<String, [f64; 3]>,
    pub origin: [f64; 2],
}

impl OccupancyGrid {
    pub fn empty(width: usize, height: usize, resolution: f64, origin: [f64; 2]) -> Self {
        Self {
            resolution,
            width,
            height,
            occupancy: vec![0; (width * height).div_ceil(64)],
            named_destinations: BTreeMap::new(),
            origin,
        }
    }

    fn bit(&self, i: usize, j: usize) -> (usize, u64) {
        let k = j * self.width + i;
        (k / 64, 1u64 << (k % 64))
    }

    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.width && (j as usize) < self.height
    }

    /// Out-of-bounds cells count as occupied.
    pub fn occupied(&self, i: i64, j: i64) -> bool {
        if !self.in_bounds(i, j) {
            return true;
        }
        let (w, m) = self.bit(i as usize, j as usize);
        self.occupancy[w] & m != 0
    }

    pub fn set_occupied(&mut self, i: usize, j: usize, value: bool) {
        let (w, m) = self.bit(i, j);
        if value {
            self.occupancy[w] |= m;
        } else {
            self.occupancy[w] &= !m;
        }
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin[0]) / self.resolution).floor() as i64,
            ((y - self.origin[1]) / self.resolution).floor() as i64,
        )
    }

    pub fn center_of(&self, i: i64, j: i64) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn is_free(&self, x: f64, y: f64) -> bool {
        let (i, j) = self.cell_of(x, y);
        !self.occupied(i, j)
    }

    /// World extent `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> [f64; 4] {
        [
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.width as f64 * self.resolution,
            self.origin[1] + self.height as f64 * self.resolution,
        ]
    }

    /// Mark every cell whose center is within `radius` of an occupied cell's
    /// square.
    pub fn inflate(&self, radius: f64) -> OccupancyGrid {
        let mut out = self.clone();
        let res = self.resolution;
        let reach = (radius / res).ceil() as i64 + 1;
        for j in 0..self.height as i64 {
            for i in 0..self.width as i64 {
                if !self.occupied(i, j) {
                    continue;
                }
                let c = self.center_of(i, j);
                for dj in -reach..=reach {
                    for di in -reach..=reach {
                        let (ni, nj) = (i + di, j + dj);
                        if !self.in_bounds(ni, nj) {
                            continue;
                        }
                        let n = self.center_of(ni, nj);
                        let dx = ((n[0] - c[0]).abs() - res / 2.0).max(0.0);
                        let dy = ((n[1] - c[1]).abs() - res / 2.0).max(0.0);
                        if dx * dx + dy * dy <= radius * radius + 1e-12 {
                            out.set_occupied(ni as usize, nj as usize, true);
                        }
                    }
                }
            }
        }
        out
    }

    /// Cells crossed by the segment `a -> b`, in order. Passing exactly
    /// through a corner yields both side cells.
    pub fn traverse(&self, a: [f64; 2], b: [f64; 2]) -> Vec<(i64, i64)> {
        let res = self.resolution;
        let (mut i, mut j) = self.cell_of(a[0], a[1]);
        let (gi, gj) = self.cell_of(b[0], b[1]);
        let mut out = vec![(i, j)];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let step_i: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_j: i64 = if dy > 0.0 { 1 } else { -1 };
        let next_boundary = |cell: i64, step: i64, o: f64| {
            o + (cell + if step > 0 { 1 } else { 0 }) as f64 * res
        };
        let mut t_max_x = if dx != 0.0 {
            (next_boundary(i, step_i, self.origin[0]) - a[0]) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy != 0.0 {
            (next_boundary(j, step_j, self.origin[1]) - a[1]) / dy
        } else {
            f64::INFINITY
        };
        let t_dx = if dx != 0.0 { res / dx.abs() } else { f64::INFINITY };
        let t_dy = if dy != 0.0 { res / dy.abs() } else { f64::INFINITY };
        let limit = (gi - i).abs() + (gj - j).abs() + 2;
        for _ in 0..limit {
            if (i, j) == (gi, gj) {
                break;
            }
            if (t_max_x - t_max_y).abs() < 1e-12 {
                out.push((i + step_i, j));
                out.push((i, j + step_j));
                i += step_i;
                j += step_j;
                t_max_x += t_dx;
                t_max_y += t_dy;
            } else if t_max_x < t_max_y {
                i += step_i;
                t_max_x += t_dx;
            } else {
                j += step_j;
                t_max_y += t_dy;
            }
            out.push((i, j));
        }
        out
    }

    /// True when every cell crossed by `a -> b` is free.
    pub fn line_of_sight(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        self.traverse(a, b)
            .into_iter()
            .all(|(i, j)| !self.occupied(i, j))
    }

    /// Distance from `from` along `heading` to the first occupied cell,
    /// capped at `max_range`.
    pub fn ray_distance(&self, from: [f64; 2], heading: f64, max_range: f64) -> f64 {
        let step = self.resolution / 4.0;
        let (c, s) = (heading.cos(), heading.sin());
        let mut d = 0.0;
        while d <= max_range {
            let (i, j) = self.cell_of(from[0] + c * d, from[1] + s * d);
            if self.occupied(i, j) {
                return d;
            }
            d += step;
        }
        max_range
    }
}

/// On-disk map format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub resolution: f64,
    pub origin: [f64; 2],
    /// Top row first; `#` occupied, `.` free.
    pub rows: Vec<String>,
    #[serde(default)]
    pub destinations: BTreeMap<String, [f64; 3]>,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    /// Robot start pose `[x, y, theta_rad]`; defaults to the map center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<[f64; 3]>,
}

impl MapFile {
    pub fn parse(json: &str) -> Result<Self, SimError> {
        serde_json::from_str(json).map_err(|e| SimError::InvalidMap(e.to_string()))
    }

    pub fn to_grid(&self) -> Result<OccupancyGrid, SimError> {
        if !(self.resolution > 0.0) || !self.resolution.is_finite() {
            return Err(SimError::InvalidMap("resolution must be positive".into()));
        }
        let height = self.rows.len();
        let width = self.rows.first().map_or(0, |r| r.chars().count());
        if width == 0 || height == 0 {
            return Err(SimError::InvalidMap("map has no cells".into()));
        }
        let mut grid = OccupancyGrid::empty(width, height, self.resolution, self.origin);
        for (r, row) in self.rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(SimError::InvalidMap(format!("row {r} has a different width")));
            }
            let j = height - 1 - r;
            for (i, ch) in row.chars().enumerate() {
                match ch {
                    '#' => grid.set_occupied(i, j, true),
                    '.' => {}
                    other => {
                        return Err(SimError::InvalidMap(format!(
                            "unexpected cell character {other:?} in row {r}"
                        )))
                    }
                }
            }
        }
        for (name, p) in &self.destinations {
            if !grid.is_free(p[0], p[1]) {
                return Err(SimError::InvalidMap(format!(
                    "destination {name:?} is not in a free cell"
                )));
            }
        }
        for o in &self.objects {
            if !(o.radius > 0.0) {
                return Err(SimError::InvalidMap(format!(
                    "object {:?} needs a positive radius",
                    o.label
                )));
            }
        }
        grid.named_destinations = self.destinations.clone();
        Ok(grid)
    }

    pub fn start_pose(&self, grid: &OccupancyGrid) -> Pose {
        match self.start {
            Some([x, y, theta]) => Pose::new(x, y, theta),
            None => {
                let b = grid.bounds();
                Pose::new((b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0, 0.0)
            }
        }
    }
}
