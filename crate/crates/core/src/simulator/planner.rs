use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::grid::OccupancyGrid;
use super::SimError;

/// Path length in cells, kept as step counts so equal costs compare exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PathCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl PathCost {
    pub fn cells(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * std::f64::consts::SQRT_2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<[f64; 2]>,
    /// Cells visited by the unsmoothed search.
    pub cells: Vec<(i64, i64)>,
    pub cost: PathCost,
}

impl PlannedPath {
    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| super::distance_between(w[0], w[1]))
            .sum()
    }
}

pub const NEIGHBOURS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Whether moving from `(i, j)` by `(di, dj)` is allowed: the target must be
/// free, and a diagonal step may not cut a blocked corner.
pub fn step_allowed(grid: &OccupancyGrid, i: i64, j: i64, di: i64, dj: i64) -> bool {
    if grid.occupied(i + di, j + dj) {
        return false;
    }
    di == 0 || dj == 0 || (!grid.occupied(i + di, j) && !grid.occupied(i, j + dj))
}

fn octile(a: (i64, i64), b: (i64, i64)) -> f64 {
    let dx = (a.0 - b.0).abs() as f64;
    let dy = (a.1 - b.1).abs() as f64;
    dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.h.total_cmp(&self.h))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 8-connected A* over free cells with the octile heuristic.
pub fn astar_cells(
    grid: &OccupancyGrid,
    start: (i64, i64),
    goal: (i64, i64),
) -> Option<(Vec<(i64, i64)>, PathCost)> {
    if grid.occupied(start.0, start.1) || grid.occupied(goal.0, goal.1) {
        return None;
    }
    let w = grid.width;
    let index = |c: (i64, i64)| c.1 as usize * w + c.0 as usize;
    let n = grid.width * grid.height;
    let mut g = vec![f64::INFINITY; n];
    let mut counts = vec![PathCost::default(); n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let s = index(start);
    g[s] = 0.0;
    let h0 = octile(start, goal);
    open.push(Open {
        f: h0,
        h: h0,
        idx: s,
    });
    let goal_idx = index(goal);
    while let Some(Open { idx, .. }) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == goal_idx {
            break;
        }
        let c = ((idx % w) as i64, (idx / w) as i64);
        for (di, dj) in NEIGHBOURS {
            if !step_allowed(grid, c.0, c.1, di, dj) {
                continue;
            }
            let nc = (c.0 + di, c.1 + dj);
            let ni = index(nc);
            if closed[ni] {
                continue;
            }
            let diag = di != 0 && dj != 0;
            let mut cand = counts[idx];
            if diag {
                cand.diagonal += 1;
            } else {
                cand.straight += 1;
            }
            let ng = cand.cells();
            if ng < g[ni] {
                g[ni] = ng;
                counts[ni] = cand;
                parent[ni] = idx;
                let h = octile(nc, goal);
                open.push(Open {
                    f: ng + h,
                    h,
                    idx: ni,
                });
            }
        }
    }
    if !closed[goal_idx] {
        return None;
    }
    let mut cells = vec![goal];
    let mut k = goal_idx;
    while k != s {
        k = parent[k];
        cells.push(((k % w) as i64, (k / w) as i64));
    }
    cells.reverse();
    Some((cells, counts[goal_idx]))
}

/// Greedy line-of-sight shortcutting: from each anchor jump to the farthest
/// later point still visible.
pub fn smooth(grid: &OccupancyGrid, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if points.len() <= 2 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    let mut anchor = 0;
    while anchor < points.len() - 1 {
        let mut next = anchor + 1;
        for k in (anchor + 2..points.len()).rev() {
            if grid.line_of_sight(points[anchor], points[k]) {
                next = k;
                break;
            }
        }
        out.push(points[next]);
        anchor = next;
    }
    out
}

/// Plan from `start` to `goal` (world meters) on an already inflated grid.
pub fn plan_path(
    grid: &OccupancyGrid,
    start: [f64; 2],
    goal: [f64; 2],
) -> Result<PlannedPath, SimError> {
    let sc = grid.cell_of(start[0], start[1]);
    let gc = grid.cell_of(goal[0], goal[1]);
    if grid.occupied(sc.0, sc.1) {
        return Err(SimError::NoPath("start is not in free space".into()));
    }
    if grid.occupied(gc.0, gc.1) {
        return Err(SimError::NoPath("goal is not in free space".into()));
    }
    let (cells, cost) = astar_cells(grid, sc, gc)
        .ok_or_else(|| SimError::NoPath("goal is not reachable".into()))?;
    let mut raw = vec![start];
    if cells.len() > 2 {
        raw.extend(cells[1..cells.len() - 1].iter().map(|&(i, j)| grid.center_of(i, j)));
    }
    raw.push(goal);
    let mut waypoints = smooth(grid, &raw);
    waypoints.dedup();
    Ok(PlannedPath {
        waypoints,
        cells,
        cost,
    })
}
