use super::{SimError, SimParams, World};
use crate::geometry::{off_boresight, point_segment_distance, Pose};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkState {
    Connected,
    OutOfRange,
    Misaligned,
    NoLineOfSight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlcLinkStatus {
    pub state: LinkState,
    /// 1 at zero distance, falling linearly to 0 at the range limit. Zero
    /// unless connected.
    pub quality: f64,
    pub distance: f64,
}

impl VlcLinkStatus {
    pub fn is_connected(&self) -> bool {
        self.state == LinkState::Connected
    }
}

fn endpoint(world: &World, id: &str) -> Result<Pose, SimError> {
    if let Some(r) = world.robots.get(id) {
        return if r.vlc_equipped { Ok(r.pose) } else { Err(SimError::NotEquipped(id.to_string())) };
    }
    if let Some(s) = world.stations.get(id) {
        return if s.vlc { Ok(s.pose) } else { Err(SimError::NotEquipped(id.to_string())) };
    }
    Err(SimError::UnknownEntity(id.to_string()))
}

/// Optical link between two robots or stations.
///
/// The range test is strict (`distance < range`) so that a connected link
/// always has positive quality.
pub fn vlc_link(world: &World, a: &str, b: &str, params: &SimParams) -> Result<VlcLinkStatus, SimError> {
    let pa = endpoint(world, a)?;
    let pb = endpoint(world, b)?;
    let distance = pa.position.distance(pb.position);
    let down = |state| Ok(VlcLinkStatus { state, quality: 0.0, distance });
    if distance >= params.vlc_range {
        return down(LinkState::OutOfRange);
    }
    let half = params.vlc_half_angle_deg.to_radians() + 1e-12;
    if pa.position.planar_distance(pb.position) > 1e-9
        && (off_boresight(&pa, pb.position) > half || off_boresight(&pb, pa.position) > half)
    {
        return down(LinkState::Misaligned);
    }
    let blocked = world.objects.values().filter_map(|o| o.position).any(|p| {
        point_segment_distance(p, pa.position, pb.position) < params.object_radius
    });
    if blocked {
        return down(LinkState::NoLineOfSight);
    }
    Ok(VlcLinkStatus { state: LinkState::Connected, quality: 1.0 - distance / params.vlc_range, distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::knowledge::Primitive;
    use crate::sim::RobotState;
    use std::collections::BTreeMap;
    use std::f64::consts::PI;

    fn pair(distance: f64, heading_b: f64) -> World {
        let classes = BTreeMap::from([("sphere".to_string(), vec![Primitive::Sphere])]);
        let mut w = World::new(SimParams::default(), 0, classes).unwrap();
        let mut a = RobotState::new("a", Pose::new(Vec3::ZERO, 0.0), 100.0);
        a.vlc_equipped = true;
        let mut b = RobotState::new("b", Pose::new(Vec3::new(distance, 0.0, 0.0), heading_b), 100.0);
        b.vlc_equipped = true;
        w.add_robot(a).unwrap();
        w.add_robot(b).unwrap();
        w
    }

    #[test]
    fn two_meters_aligned() {
        let w = pair(2.0, PI);
        let s = vlc_link(&w, "a", "b", &w.params).unwrap();
        assert_eq!(s.state, LinkState::Connected);
        assert!((s.quality - 0.8).abs() < 1e-12);
    }

    #[test]
    fn fifteen_meters_out_of_range() {
        let w = pair(15.0, PI);
        assert_eq!(vlc_link(&w, "a", "b", &w.params).unwrap().state, LinkState::OutOfRange);
    }

    #[test]
    fn forty_degrees_off_is_misaligned() {
        let w = pair(2.0, PI + 40f64.to_radians());
        let s = vlc_link(&w, "a", "b", &w.params).unwrap();
        assert_eq!(s.state, LinkState::Misaligned);
        assert_eq!(s.quality, 0.0);
    }

    #[test]
    fn object_blocks_line_of_sight() {
        let mut w = pair(4.0, PI);
        w.add_object("s", "sphere", Vec3::new(2.0, 0.2, 0.0)).unwrap();
        assert_eq!(vlc_link(&w, "b", "a", &w.params).unwrap().state, LinkState::NoLineOfSight);
    }

    #[test]
    fn unequipped_endpoint() {
        let mut w = pair(2.0, PI);
        w.robots.get_mut("b").unwrap().vlc_equipped = false;
        assert_eq!(vlc_link(&w, "a", "b", &w.params), Err(SimError::NotEquipped("b".into())));
    }
}
