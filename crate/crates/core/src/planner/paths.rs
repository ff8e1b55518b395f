use super::PlanError;
use crate::geometry::{point_segment_distance, polyline_length, Vec3};
use crate::mission::Region;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub waypoints: Vec<Vec3>,
}

impl Path {
    pub fn length(&self) -> f64 {
        polyline_length(&self.waypoints)
    }

    pub fn start(&self) -> Vec3 {
        self.waypoints[0]
    }

    pub fn end(&self) -> Vec3 {
        *self.waypoints.last().expect("paths hold at least two waypoints")
    }

    /// Shortest horizontal distance from `p` to the path.
    pub fn planar_distance_to(&self, p: Vec3) -> f64 {
        let flat = |v: Vec3| v.with_z(0.0);
        self.waypoints
            .windows(2)
            .map(|w| point_segment_distance(flat(p), flat(w[0]), flat(w[1])))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Boustrophedon lanes parallel to the region's long side, centered across
/// the short side, alternating direction.
pub fn generate_survey_path(region: &Region, lane_spacing: f64, depth: f64) -> Result<Path, PlanError> {
    if !(lane_spacing.is_finite() && lane_spacing > 0.0) {
        return Err(PlanError::BadParameter("lane spacing must be positive".into()));
    }
    if !region.is_valid() || !depth.is_finite() {
        return Err(PlanError::BadParameter("region must have positive width and height".into()));
    }
    let [cx, cy] = region.center;
    let along_x = region.width >= region.height;
    let (long, short) = if along_x { (region.width, region.height) } else { (region.height, region.width) };
    let lanes = (short / lane_spacing + 1e-9).floor() as usize + 1;
    let first = -short / 2.0 + (short - (lanes - 1) as f64 * lane_spacing) / 2.0;
    let mut waypoints = Vec::with_capacity(lanes * 2);
    for i in 0..lanes {
        let offset = first + i as f64 * lane_spacing;
        let (a, b) = if i % 2 == 0 { (-long / 2.0, long / 2.0) } else { (long / 2.0, -long / 2.0) };
        for along in [a, b] {
            let p = if along_x {
                Vec3::new(cx + along, cy + offset, depth)
            } else {
                Vec3::new(cx + offset, cy + along, depth)
            };
            waypoints.push(p);
        }
    }
    Ok(Path { waypoints })
}

/// `n_points` equally spaced points on a circle, closed by repeating the first.
pub fn generate_inspection_path(center: Vec3, radius: f64, n_points: usize) -> Result<Path, PlanError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(PlanError::BadParameter("radius must be positive".into()));
    }
    if n_points < 3 {
        return Err(PlanError::BadParameter("an inspection loop needs at least 3 points".into()));
    }
    let mut waypoints: Vec<Vec3> = (0..n_points)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n_points as f64;
            Vec3::new(center.x + radius * a.cos(), center.y + radius * a.sin(), center.z)
        })
        .collect();
    waypoints.push(waypoints[0]);
    Ok(Path { waypoints })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(w: f64, h: f64) -> Region {
        Region { center: [0.0, 0.0], width: w, height: h }
    }

    #[test]
    fn lawnmower_40_by_10() {
        let p = generate_survey_path(&region(40.0, 10.0), 5.0, -5.0).unwrap();
        assert_eq!(p.waypoints.len(), 6);
        assert!((p.length() - 130.0).abs() < 1e-9);
    }

    #[test]
    fn wide_spacing_gives_one_lane() {
        let p = generate_survey_path(&region(40.0, 10.0), 20.0, 0.0).unwrap();
        assert_eq!(p.waypoints.len(), 2);
        assert!((p.length() - 40.0).abs() < 1e-9);
        assert_eq!(p.start().y, 0.0);
    }

    #[test]
    fn tall_region_runs_lanes_along_y() {
        let p = generate_survey_path(&region(10.0, 40.0), 5.0, 0.0).unwrap();
        assert_eq!(p.waypoints[0].x, p.waypoints[1].x);
        assert!((p.length() - 130.0).abs() < 1e-9);
    }

    #[test]
    fn bad_survey_parameters() {
        assert!(generate_survey_path(&region(40.0, 10.0), 0.0, 0.0).is_err());
        assert!(generate_survey_path(&region(0.0, 10.0), 5.0, 0.0).is_err());
    }

    #[test]
    fn square_inspection() {
        let p = generate_inspection_path(Vec3::ZERO, 3.0, 4).unwrap();
        assert_eq!(p.waypoints.len(), 5);
        assert_eq!(p.waypoints[0], p.waypoints[4]);
        assert!((p.waypoints[1].y - 3.0).abs() < 1e-12);
        assert!(generate_inspection_path(Vec3::ZERO, 3.0, 2).is_err());
        assert!(generate_inspection_path(Vec3::ZERO, 0.0, 8).is_err());
    }
}
