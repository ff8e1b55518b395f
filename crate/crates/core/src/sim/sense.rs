use super::{SimParams, World};
use crate::geometry::{off_boresight, Vec3};
use crate::knowledge::{canonical_primitives as taxonomy_canonical, Primitive};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub object_id: String,
    pub position: Vec3,
    pub primitives: Vec<Primitive>,
    pub confidence: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub robot: String,
    pub detections: Vec<Detection>,
}

/// FNV-1a over a sequence of byte strings, separated so ("ab","c") != ("a","bc").
fn stream_key(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.iter().chain(std::iter::once(&0xffu8)) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Per-(robot, object, step) generator so sensing never mutates the world.
fn detection_rng(seed: u64, robot: &str, object: &str, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_key(&[robot.as_bytes(), object.as_bytes(), &step.to_le_bytes()]));
    rng
}

/// Simulated perception for one robot: every object within range and field of
/// view yields a detection. Unknown robots yield an empty reading.
pub fn sense(world: &World, robot: &str, params: &SimParams) -> SensorReading {
    let mut detections = Vec::new();
    let Some(r) = world.robots.get(robot) else {
        return SensorReading { robot: robot.to_string(), detections };
    };
    let half_fov = params.fov_deg.to_radians() / 2.0;
    for obj in world.objects.values() {
        let Some(true_pos) = obj.position else { continue };
        let d = r.pose.position.distance(true_pos);
        if d > params.sensor_range {
            continue;
        }
        if d > 1e-9 && off_boresight(&r.pose, true_pos) > half_fov + 1e-12 {
            continue;
        }
        let mut rng = detection_rng(world.seed, robot, &obj.id, world.step_index);
        let truth = taxonomy_canonical(&obj.primitives);
        let mut primitives = truth.clone();
        let mut corrupted = false;
        if let Some(forced) = r.forced_classifications.get(&obj.id) {
            if let Some(p) = world.class_primitives.get(forced) {
                primitives = taxonomy_canonical(p);
                corrupted = primitives != truth;
            }
        } else if r.misclassification > 0.0 && rng.random::<f64>() < r.misclassification {
            let others: Vec<Vec<Primitive>> = world
                .class_primitives
                .values()
                .map(|p| taxonomy_canonical(p))
                .filter(|p| *p != truth)
                .collect();
            if !others.is_empty() {
                primitives = others[rng.random_range(0..others.len())].clone();
                corrupted = true;
            }
        }
        let mut position = true_pos;
        if params.position_noise > 0.0 {
            let normal = Normal::new(0.0, params.position_noise).expect("validated noise");
            position = Vec3::new(
                true_pos.x + normal.sample(&mut rng),
                true_pos.y + normal.sample(&mut rng),
                true_pos.z + normal.sample(&mut rng),
            );
        }
        let mut confidence = 1.0 - 0.5 * d / params.sensor_range;
        if corrupted {
            confidence *= 0.5;
        }
        detections.push(Detection { object_id: obj.id.clone(), position, primitives, confidence, distance: d });
    }
    SensorReading { robot: robot.to_string(), detections }
}
