use serde::{Deserialize, Serialize};

use super::PerceptionError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(PerceptionError::InvalidIntrinsics)
        }
    }

    /// Half of the horizontal field of view, in radians.
    pub fn half_hfov(&self) -> f64 {
        (self.cx.max(self.width as f64 - self.cx) / self.fx).atan()
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Area of a polygon given in order (shoelace formula).
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let mut twice = 0.0;
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        twice += x1 * y2 - x2 * y1;
    }
    twice.abs() / 2.0
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull by Andrew's monotone chain, counter-clockwise, without
/// collinear points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Ratio of mask area to the area of its convex hull.
///
/// Every pixel is treated as a unit cell, so the hull spans the cell corners
/// and a filled convex region scores 1.
pub fn mask_quality(pixels: &[(u32, u32)]) -> Result<(f64, f64, f64), PerceptionError> {
    let mut uniq = pixels.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    if uniq.len() < 3 || all_collinear(&uniq) {
        return Err(PerceptionError::DegenerateMask);
    }
    // Only the extreme cells of each row can contribute hull vertices.
    let mut corners = Vec::new();
    let mut i = 0;
    while i < uniq.len() {
        let v = uniq[i].1;
        let mut umin = uniq[i].0;
        let mut umax = uniq[i].0;
        let mut j = i;
        while j < uniq.len() && uniq[j].1 == v {
            umin = umin.min(uniq[j].0);
            umax = umax.max(uniq[j].0);
            j += 1;
        }
        i = j;
        let (v0, v1) = (v as f64, v as f64 + 1.0);
        for u in [umin as f64, umax as f64 + 1.0] {
            corners.push((u, v0));
            corners.push((u, v1));
        }
    }
    let hull_area = polygon_area(&convex_hull(&corners));
    let area = uniq.len() as f64;
    Ok((area / hull_area, area, hull_area))
}

fn all_collinear(pixels: &[(u32, u32)]) -> bool {
    let p0 = (pixels[0].0 as f64, pixels[0].1 as f64);
    let p1 = (pixels[1].0 as f64, pixels[1].1 as f64);
    pixels[2..]
        .iter()
        .all(|&(u, v)| cross(p0, p1, (u as f64, v as f64)) == 0.0)
}

/// Pixel-mean of the mask, rounded to the nearest pixel.
pub fn mask_centroid(pixels: &[(u32, u32)]) -> (u32, u32) {
    let n = pixels.len().max(1) as f64;
    let su: f64 = pixels.iter().map(|p| p.0 as f64).sum();
    let sv: f64 = pixels.iter().map(|p| p.1 as f64).sum();
    ((su / n).round() as u32, (sv / n).round() as u32)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

/// Row-major depth image in meters; NaN or non-positive values are invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f32>,
}

impl DepthFrame {
    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; (width * height) as usize],
        }
    }

    pub fn get(&self, u: u32, v: u32) -> Option<f32> {
        if u < self.width && v < self.height {
            self.data.get((v * self.width + u) as usize).copied()
        } else {
            None
        }
    }

    pub fn set(&mut self, u: u32, v: u32, value: f32) {
        if u < self.width && v < self.height {
            self.data[(v * self.width + u) as usize] = value;
        }
    }
}

/// Source of predicted depth used when the sensor has no valid reading.
pub trait MonocularDepthSource {
    fn predict(&self, pixels: &[(u32, u32)]) -> Vec<f64>;
}

/// Depth at the mask centroid: median of valid sensor readings in the
/// `(2r+1)^2` window, otherwise median of the monocular prediction over the mask.
pub fn centroid_depth(
    pixels: &[(u32, u32)],
    depth: &DepthFrame,
    radius: u32,
    mono: Option<&dyn MonocularDepthSource>,
) -> Result<f64, PerceptionError> {
    let (uc, vc) = mask_centroid(pixels);
    let r = radius.max(1) as i64;
    let mut valid = Vec::new();
    for dv in -r..=r {
        for du in -r..=r {
            let (u, v) = (uc as i64 + du, vc as i64 + dv);
            if u < 0 || v < 0 {
                continue;
            }
            if let Some(z) = depth.get(u as u32, v as u32) {
                if z.is_finite() && z > 0.0 {
                    valid.push(z as f64);
                }
            }
        }
    }
    if let Some(z) = median(&mut valid) {
        return Ok(z);
    }
    let mut predicted: Vec<f64> = mono
        .map(|m| m.predict(pixels))
        .unwrap_or_default()
        .into_iter()
        .filter(|z| z.is_finite() && *z > 0.0)
        .collect();
    median(&mut predicted).ok_or(PerceptionError::NoDepthAvailable)
}

/// Pinhole back-projection into the camera frame (x right, y down, z forward).
pub fn back_project(
    u: f64,
    v: f64,
    z: f64,
    k: &CameraIntrinsics,
) -> Result<[f64; 3], PerceptionError> {
    if !(z > 0.0) {
        return Err(PerceptionError::NonPositiveDepth);
    }
    Ok([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z])
}

/// Pinhole projection of a camera-frame point.
pub fn project(p: [f64; 3], k: &CameraIntrinsics) -> Result<(f64, f64), PerceptionError> {
    if !(p[2] > 0.0) {
        return Err(PerceptionError::NonPositiveDepth);
    }
    Ok((k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy))
}

/// Rigid transform from the camera frame to the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Forward-looking camera mounted `height` meters above the base origin:
    /// camera z maps to base x, camera x to base -y, camera y to base -z.
    pub fn forward_camera(height: f64) -> Self {
        Self {
            rotation: [[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]],
            translation: [0.0, 0.0, height],
        }
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let r = &self.rotation;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > 1e-6 || !dot.is_finite() {
                    return Err(PerceptionError::InvalidTransform);
                }
            }
        }
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if det < 0.0 {
            return Err(PerceptionError::InvalidTransform);
        }
        Ok(())
    }
}

/// `R * p + t`.
pub fn to_base_frame(p: [f64; 3], ext: &Extrinsics) -> Result<[f64; 3], PerceptionError> {
    ext.validate()?;
    let r = &ext.rotation;
    let mut out = ext.translation;
    for (i, o) in out.iter_mut().enumerate() {
        *o += r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2];
    }
    Ok(out)
}

/// Base-frame point into the world frame for a planar robot pose.
pub fn base_to_world(p: [f64; 3], pose: (f64, f64, f64)) -> [f64; 3] {
    let (x, y, th) = pose;
    let (s, c) = th.sin_cos();
    [x + c * p[0] - s * p[1], y + s * p[0] + c * p[1], p[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn block(u0: u32, v0: u32, n: u32) -> Vec<(u32, u32)> {
        (u0..u0 + n)
            .flat_map(|u| (v0..v0 + n).map(move |v| (u, v)))
            .collect()
    }

    #[test]
    fn filled_square_quality_is_one() {
        let (q, area, hull) = mask_quality(&block(5, 7, 10)).unwrap();
        assert_eq!((area, hull), (100.0, 100.0));
        assert_abs_diff_eq!(q, 1.0, epsilon = 0.02);
    }

    #[test]
    fn plus_shape_quality() {
        let mut px = Vec::new();
        for (bu, bv) in [(3, 0), (0, 3), (3, 3), (6, 3), (3, 6)] {
            px.extend(block(bu, bv, 3));
        }
        let (q, area, hull) = mask_quality(&px).unwrap();
        // Hull is the 9x9 square minus four corner triangles of legs 3.
        assert_eq!(area, 45.0);
        assert_abs_diff_eq!(hull, 81.0 - 4.0 * 4.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q, 45.0 / 63.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_masks() {
        assert_eq!(
            mask_quality(&[(0, 0), (1, 1)]),
            Err(PerceptionError::DegenerateMask)
        );
        assert_eq!(
            mask_quality(&[(0, 0), (1, 1), (2, 2), (3, 3)]),
            Err(PerceptionError::DegenerateMask)
        );
    }

    #[test]
    fn depth_neighbourhood_median() {
        let mut d = DepthFrame::filled(5, 1, 0.0);
        for (u, z) in [1.9f32, 2.0, 2.1, f32::NAN, 0.0].iter().enumerate() {
            d.set(u as u32, 0, *z);
        }
        let z = centroid_depth(&[(1, 0), (2, 0), (3, 0)], &d, 2, None).unwrap();
        assert_abs_diff_eq!(z, 2.0, epsilon = 1e-6);
    }

    struct Fixed(Vec<f64>);
    impl MonocularDepthSource for Fixed {
        fn predict(&self, _: &[(u32, u32)]) -> Vec<f64> {
            self.0.clone()
        }
    }

    #[test]
    fn depth_falls_back_to_monocular() {
        let d = DepthFrame::filled(4, 4, f32::NAN);
        let mono = Fixed(vec![1.5, 1.6, 1.7]);
        let z = centroid_depth(&[(1, 1), (2, 1), (1, 2)], &d, 1, Some(&mono)).unwrap();
        assert_abs_diff_eq!(z, 1.6, epsilon = 1e-12);
        assert_eq!(
            centroid_depth(&[(1, 1)], &d, 1, None),
            Err(PerceptionError::NoDepthAvailable)
        );
    }

    #[test]
    fn back_projection_cases() {
        let k = CameraIntrinsics::default();
        assert_eq!(
            back_project(320.0, 240.0, 2.0, &k).unwrap(),
            [0.0, 0.0, 2.0]
        );
        assert_abs_diff_eq!(
            back_project(420.0, 240.0, 2.0, &k).unwrap()[0],
            0.4,
            epsilon = 1e-12
        );
        assert_eq!(
            back_project(1.0, 1.0, 0.0, &k),
            Err(PerceptionError::NonPositiveDepth)
        );
    }

    #[test]
    fn transforms() {
        let p = [0.3, -0.2, 1.5];
        assert_eq!(to_base_frame(p, &Extrinsics::identity()).unwrap(), p);
        let shift = Extrinsics {
            translation: [1.0, 0.0, 0.0],
            ..Extrinsics::identity()
        };
        assert_eq!(to_base_frame(p, &shift).unwrap(), [1.3, -0.2, 1.5]);
        let bad = Extrinsics {
            rotation: [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        };
        assert_eq!(
            to_base_frame(p, &bad),
            Err(PerceptionError::InvalidTransform)
        );
    }

    #[test]
    fn yaw_rotation_matches_matrix_oracle() {
        // 90 degree yaw about z: (x, y, z) -> (-y, x, z)
        let (s, c) = std::f64::consts::FRAC_PI_2.sin_cos();
        let yaw = Extrinsics {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        };
        let out = to_base_frame([1.0, 2.0, 3.0], &yaw).unwrap();
        assert_abs_diff_eq!(out[0], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn forward_camera_maps_optical_axis_to_base_x() {
        let ext = Extrinsics::forward_camera(0.5);
        ext.validate().unwrap();
        assert_eq!(
            to_base_frame([0.0, 0.0, 2.0], &ext).unwrap(),
            [2.0, 0.0, 0.5]
        );
    }
}
