//! Synthetic obstacle world and deterministic spherical ray-cast sensing.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::num::{finite3, real, Real};
use crate::{Error, Result};

/// Vertical cylinder obstacle spanning `z_min..z_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cylinder<R: Real> {
    /// Axis position in the xy-plane.
    pub center: Vector2<R>,
    pub radius: R,
    pub z_min: R,
    pub z_max: R,
}

/// Axis-aligned box obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxObstacle<R: Real> {
    pub min: Vector3<R>,
    pub max: Vector3<R>,
}

/// Axis-aligned bounding box (world extent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aabb<R: Real> {
    pub min: Vector3<R>,
    pub max: Vector3<R>,
}

impl<R: Real> Aabb<R> {
    pub fn contains(&self, p: &Vector3<R>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

/// Static obstacle world: bounded field of cylinders and boxes.
///
/// The boundary is an extent, not an obstacle; rays pass through it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleWorld<R: Real> {
    pub bounds: Aabb<R>,
    #[serde(default = "Vec::new")]
    pub cylinders: Vec<Cylinder<R>>,
    #[serde(default = "Vec::new")]
    pub boxes: Vec<BoxObstacle<R>>,
}

impl<R: Real> ObstacleWorld<R> {
    /// Empty world with the given extent.
    pub fn empty(bounds: Aabb<R>) -> Self {
        ObstacleWorld {
            bounds,
            cylinders: Vec::new(),
            boxes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.bounds.min[i].is_finite()
                && self.bounds.max[i].is_finite()
                && self.bounds.min[i] < self.bounds.max[i])
            {
                return Err(Error::invalid(
                    "world.bounds",
                    "min must be finite and componentwise below max",
                ));
            }
        }
        for (k, c) in self.cylinders.iter().enumerate() {
            if !(c.radius.is_finite() && c.radius > R::zero()) {
                return Err(Error::invalid(
                    "world.cylinders.radius",
                    format!("cylinder {k}: radius must be finite and > 0"),
                ));
            }
            if !(c.z_min.is_finite() && c.z_max.is_finite() && c.z_min < c.z_max) {
                return Err(Error::invalid(
                    "world.cylinders.z",
                    format!("cylinder {k}: z_min must be below z_max"),
                ));
            }
        }
        for (k, b) in self.boxes.iter().enumerate() {
            for i in 0..3 {
                if !(b.min[i].is_finite() && b.max[i].is_finite() && b.min[i] < b.max[i]) {
                    return Err(Error::invalid(
                        "world.boxes",
                        format!("box {k}: min must be componentwise below max"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Signed distance from `p` to the nearest obstacle surface; negative
    /// inside an obstacle, `+inf` in a world with no obstacles.
    pub fn signed_distance(&self, p: &Vector3<R>) -> R {
        let mut d = R::infinity();
        for c in &self.cylinders {
            d = d.min(cylinder_sdf(p, c));
        }
        for b in &self.boxes {
            d = d.min(box_sdf(p, b));
        }
        d
    }
}

fn cylinder_sdf<R: Real>(p: &Vector3<R>, c: &Cylinder<R>) -> R {
    let dx = p.x - c.center.x;
    let dy = p.y - c.center.y;
    let radial = (dx * dx + dy * dy).sqrt() - c.radius;
    let axial = (c.z_min - p.z).max(p.z - c.z_max);
    if radial > R::zero() || axial > R::zero() {
        let rr = radial.max(R::zero());
        let aa = axial.max(R::zero());
        (rr * rr + aa * aa).sqrt()
    } else {
        radial.max(axial)
    }
}

fn box_sdf<R: Real>(p: &Vector3<R>, b: &BoxObstacle<R>) -> R {
    let mut outside_sq = R::zero();
    let mut inside = R::neg_infinity();
    for i in 0..3 {
        let q = (b.min[i] - p[i]).max(p[i] - b.max[i]);
        if q > R::zero() {
            outside_sq += q * q;
        }
        inside = inside.max(q);
    }
    if outside_sq > R::zero() {
        outside_sq.sqrt()
    } else {
        inside
    }
}

/// Deterministic spherical fan: `azimuth` directions over the full circle
/// crossed with `elevation` pitch angles spread evenly over
/// `[-elevation_span/2, +elevation_span/2]` (a single elevation is level).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRays<R: Real> {
    pub azimuth: usize,
    pub elevation: usize,
    /// Total vertical fan angle in radians.
    pub elevation_span: R,
}

impl<R: Real> Default for SensorRays<R> {
    fn default() -> Self {
        SensorRays {
            azimuth: 64,
            elevation: 16,
            elevation_span: R::FRAC_PI_2(),
        }
    }
}

impl<R: Real> SensorRays<R> {
    pub fn validate(&self) -> Result<()> {
        if self.azimuth == 0 || self.elevation == 0 {
            return Err(Error::invalid("sensor.rays", "ray counts must be >= 1"));
        }
        if !(self.elevation_span.is_finite() && self.elevation_span >= R::zero()) {
            return Err(Error::invalid(
                "sensor.elevation_span",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }

    /// Unit ray directions in fixed (elevation-major, azimuth-minor) order.
    pub fn directions(&self) -> Vec<Vector3<R>> {
        let mut dirs = Vec::with_capacity(self.azimuth * self.elevation);
        let two_pi = R::PI() + R::PI();
        for ei in 0..self.elevation {
            let pitch = if self.elevation == 1 {
                R::zero()
            } else {
                let f = real::<R>(ei as f64) / real::<R>((self.elevation - 1) as f64);
                (f - real::<R>(0.5)) * self.elevation_span
            };
            let (sp, cp) = (pitch.sin(), pitch.cos());
            for ai in 0..self.azimuth {
                let yaw = two_pi * real::<R>(ai as f64) / real::<R>(self.azimuth as f64);
                dirs.push(Vector3::new(cp * yaw.cos(), cp * yaw.sin(), sp));
            }
        }
        dirs
    }
}

/// Point cloud in world coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud<R: Real> {
    pub points: Vec<Vector3<R>>,
}

const RAY_EPS: f64 = 1e-9;

fn ray_cylinder<R: Real>(o: &Vector3<R>, d: &Vector3<R>, c: &Cylinder<R>) -> Option<R> {
    let eps = real::<R>(RAY_EPS);
    let mut best: Option<R> = None;
    let mut consider = |t: R| {
        if t > eps && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };
    let ox = o.x - c.center.x;
    let oy = o.y - c.center.y;
    // Lateral surface.
    let a = d.x * d.x + d.y * d.y;
    if a > real(1e-12) {
        let b = (ox * d.x + oy * d.y) * real(2.0);
        let q = ox * ox + oy * oy - c.radius * c.radius;
        let disc = b * b - real::<R>(4.0) * a * q;
        if disc >= R::zero() {
            let s = disc.sqrt();
            let inv = (a * real::<R>(2.0)).recip();
            for t in [(-b - s) * inv, (-b + s) * inv] {
                let z = o.z + t * d.z;
                if z >= c.z_min && z <= c.z_max {
                    consider(t);
                }
            }
        }
    }
    // End caps.
    if d.z.abs() > real(1e-12) {
        for zc in [c.z_min, c.z_max] {
            let t = (zc - o.z) / d.z;
            let x = ox + t * d.x;
            let y = oy + t * d.y;
            if x * x + y * y <= c.radius * c.radius {
                consider(t);
            }
        }
    }
    best
}

fn ray_box<R: Real>(o: &Vector3<R>, d: &Vector3<R>, b: &BoxObstacle<R>) -> Option<R> {
    let mut t_near = R::neg_infinity();
    let mut t_far = R::infinity();
    for i in 0..3 {
        if d[i].abs() < real(1e-12) {
            if o[i] < b.min[i] || o[i] > b.max[i] {
                return None;
            }
        } else {
            let inv = d[i].recip();
            let mut t1 = (b.min[i] - o[i]) * inv;
            let mut t2 = (b.max[i] - o[i]) * inv;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            t_near = t_near.max(t1);
            t_far = t_far.min(t2);
            if t_near > t_far {
                return None;
            }
        }
    }
    (t_near > real(RAY_EPS)).then_some(t_near)
}

/// Casts the spherical ray fan from `position` and returns first-surface hit
/// points within `range`. Directions missing every obstacle contribute no
/// point. Errors if the pose is already inside obstacle geometry.
pub fn sense<R: Real>(
    world: &ObstacleWorld<R>,
    position: &Vector3<R>,
    range: R,
    rays: &SensorRays<R>,
) -> Result<PointCloud<R>> {
    if !finite3(position) {
        return Err(Error::NonFinite { what: "sensor pose" });
    }
    if !(range.is_finite() && range > R::zero()) {
        return Err(Error::invalid("sensor.range", "must be finite and > 0"));
    }
    rays.validate()?;
    if world.signed_distance(position) < R::zero() {
        return Err(Error::InsideObstacle {
            x: position.x.to_f64().unwrap_or(f64::NAN),
            y: position.y.to_f64().unwrap_or(f64::NAN),
            z: position.z.to_f64().unwrap_or(f64::NAN),
        });
    }
    let mut points = Vec::new();
    for dir in rays.directions() {
        let mut nearest = R::infinity();
        for c in &world.cylinders {
            if let Some(t) = ray_cylinder(position, &dir, c) {
                nearest = nearest.min(t);
            }
        }
        for b in &world.boxes {
            if let Some(t) = ray_box(position, &dir, b) {
                nearest = nearest.min(t);
            }
        }
        if nearest <= range {
            points.push(position + dir * nearest);
        }
    }
    Ok(PointCloud { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::norm3;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_bounds() -> Aabb<f64> {
        Aabb {
            min: Vector3::new(-10.0, -10.0, -10.0),
            max: Vector3::new(10.0, 10.0, 10.0),
        }
    }

    fn cylinder(cx: f64, cy: f64, r: f64) -> Cylinder<f64> {
        Cylinder {
            center: Vector2::new(cx, cy),
            radius: r,
            z_min: -2.0,
            z_max: 2.0,
        }
    }

    #[test]
    fn empty_world_returns_no_points() {
        let world = ObstacleWorld::empty(test_bounds());
        let cloud = sense(
            &world,
            &Vector3::zeros(),
            3.0,
            &SensorRays::default(),
        )
        .unwrap();
        assert!(cloud.points.is_empty());
    }

    #[test]
    fn level_ray_hits_cylinder_front_face_exactly() {
        let mut world = ObstacleWorld::empty(test_bounds());
        world.cylinders.push(cylinder(2.0, 0.0, 0.5));
        // Single level fan: the azimuth-0 ray runs along +x.
        let rays = SensorRays {
            azimuth: 64,
            elevation: 1,
            elevation_span: 0.0,
        };
        let cloud = sense(&world, &Vector3::zeros(), 3.0, &rays).unwrap();
        let nearest = cloud
            .points
            .iter()
            .map(|p| norm3(p))
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(nearest, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn default_fan_hits_within_half_an_elevation_step() {
        let mut world = ObstacleWorld::empty(test_bounds());
        world.cylinders.push(cylinder(2.0, 0.0, 0.5));
        let rays = SensorRays::<f64>::default();
        let cloud = sense(&world, &Vector3::zeros(), 3.0, &rays).unwrap();
        let nearest = cloud
            .points
            .iter()
            .map(|p| norm3(p))
            .fold(f64::INFINITY, f64::min);
        // Nearest elevation to level sits half a step off; range stretches
        // by at most 1/cos of that angle.
        let step = rays.elevation_span / (rays.elevation - 1) as f64;
        let bound = 1.5 / (step / 2.0).cos() + 1e-12;
        assert!((1.5..=bound).contains(&nearest), "nearest = {nearest}");
    }

    #[test]
    fn obstacles_beyond_range_are_invisible() {
        let mut world = ObstacleWorld::empty(test_bounds());
        world.cylinders.push(cylinder(5.0, 0.0, 0.5));
        let cloud = sense(
            &world,
            &Vector3::zeros(),
            3.0,
            &SensorRays::default(),
        )
        .unwrap();
        assert!(cloud.points.is_empty());
    }

    #[test]
    fn sensing_from_inside_an_obstacle_fails() {
        let mut world = ObstacleWorld::empty(test_bounds());
        world.cylinders.push(cylinder(0.0, 0.0, 1.0));
        let err = sense(
            &world,
            &Vector3::new(0.2, 0.0, 0.0),
            3.0,
            &SensorRays::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsideObstacle { .. }));
    }

    #[test]
    fn box_faces_are_sensed() {
        let mut world = ObstacleWorld::empty(test_bounds());
        world.boxes.push(BoxObstacle {
            min: Vector3::new(1.0, -1.0, -1.0),
            max: Vector3::new(2.0, 1.0, 1.0),
        });
        let rays = SensorRays {
            azimuth: 4,
            elevation: 1,
            elevation_span: 0.0,
        };
        let cloud = sense(&world, &Vector3::zeros(), 3.0, &rays).unwrap();
        assert_eq!(cloud.points.len(), 1);
        assert_relative_eq!(cloud.points[0].x, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cylinder_sdf_matches_hand_values() {
        let c = cylinder(0.0, 0.0, 1.0);
        // Radially outside.
        assert_relative_eq!(
            cylinder_sdf(&Vector3::new(3.0, 0.0, 0.0), &c),
            2.0,
            epsilon = 1e-12
        );
        // Inside: negative, distance to the nearest surface.
        assert_relative_eq!(
            cylinder_sdf(&Vector3::new(0.5, 0.0, 0.0), &c),
            -0.5,
            epsilon = 1e-12
        );
        // Above the cap.
        assert_relative_eq!(
            cylinder_sdf(&Vector3::new(0.0, 0.0, 3.0), &c),
            1.0,
            epsilon = 1e-12
        );
        // Diagonal past the rim.
        assert_relative_eq!(
            cylinder_sdf(&Vector3::new(4.0, 0.0, 6.0), &c),
            5.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn box_sdf_matches_hand_values() {
        let b = BoxObstacle {
            min: Vector3::new(-1.0, -1.0, -1.0),
            max: Vector3::new(1.0, 1.0, 1.0),
        };
        assert_relative_eq!(box_sdf(&Vector3::new(4.0, 0.0, 0.0), &b), 3.0, epsilon = 1e-12);
        assert_relative_eq!(box_sdf(&Vector3::new(4.0, 5.0, 0.0), &b), 5.0, epsilon = 1e-12);
        assert_relative_eq!(box_sdf(&Vector3::new(0.0, 0.2, 0.0), &b), -0.8, epsilon = 1e-12);
    }

    #[test]
    fn validation_rejects_degenerate_shapes() {
        let mut world = ObstacleWorld::empty(test_bounds());
        world.cylinders.push(cylinder(0.0, 0.0, 0.0));
        assert!(matches!(
            world.validate(),
            Err(Error::InvalidParameter { name, .. }) if name.contains("radius")
        ));
        let mut world = ObstacleWorld::empty(test_bounds());
        world.boxes.push(BoxObstacle {
            min: Vector3::new(1.0, 0.0, 0.0),
            max: Vector3::new(0.0, 1.0, 1.0),
        });
        assert!(world.validate().is_err());
        let mut world = ObstacleWorld::<f64>::empty(test_bounds());
        world.bounds.max = world.bounds.min;
        assert!(world.validate().is_err());
    }

    #[test]
    fn returned_points_never_lie_inside_obstacles() {
        // Soundness fuzz: random worlds and poses; every return sits on or
        // outside the surface it hit.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let mut world = ObstacleWorld::empty(test_bounds());
            for _ in 0..rng.gen_range(1..6) {
                world.cylinders.push(Cylinder {
                    center: Vector2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
                    radius: rng.gen_range(0.2..1.0),
                    z_min: rng.gen_range(-3.0..-0.5),
                    z_max: rng.gen_range(0.5..3.0),
                });
            }
            for _ in 0..rng.gen_range(0..3) {
                let min =
                    Vector3::new(rng.gen_range(-5.0..4.0), rng.gen_range(-5.0..4.0), rng.gen_range(-3.0..0.0));
                let size =
                    Vector3::new(rng.gen_range(0.2..1.5), rng.gen_range(0.2..1.5), rng.gen_range(0.2..1.5));
                world.boxes.push(BoxObstacle { min, max: min + size });
            }
            let pose = Vector3::new(
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-1.0..1.0),
            );
            if world.signed_distance(&pose) <= 0.0 {
                continue;
            }
            let cloud = sense(&world, &pose, 4.0, &SensorRays::default()).unwrap();
            for p in &cloud.points {
                let sd = world.signed_distance(p);
                assert!(sd >= -1e-9, "point {p:?} has signed distance {sd}");
                assert!(norm3(&(p - pose)) <= 4.0 + 1e-9);
            }
        }
    }
}
