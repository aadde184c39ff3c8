//! Line-of-sight and first-order specular paths via the image-source method.
//!
//! Reflecting faces are the four outer walls, the floor, the ceiling and the
//! two long faces of every internal wall. Cylinders only block. Blockage is
//! decided on the floor-plane projection of each leg (obstacles are
//! full-height), while mirror points are computed in 3-D.
//!
//! Departure angles are expressed in the BS array frame: the array lies in a
//! vertical plane, its normal (boresight, local +x) is horizontal, local +z
//! is vertical. Elevation `theta` is measured from local +z and azimuth `phi`
//! from boresight, so a unit direction is
//! `(sin(theta) cos(phi), sin(theta) sin(phi), cos(theta))`.

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::scene::{Scene, ROOM_HALF, ROOM_HEIGHT};
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OuterSide {
    XMin,
    XMax,
    YMin,
    YMax,
}

/// Surface a path bounced off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reflector {
    Outer(OuterSide),
    Floor,
    Ceiling,
    /// Long face of internal wall `index`; `positive` is the face on the
    /// +x / +y side of the wall.
    Wall { index: usize, positive: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub length: f64,
    pub delay: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
    pub n_bounces: u8,
    pub reflector: Option<Reflector>,
}

impl Path {
    fn new(length: f64, departure_local: Vec3, reflector: Option<Reflector>) -> Result<Self> {
        let (theta, phi) = path_geometry(departure_local)?;
        Ok(Self {
            length,
            delay: length / SPEED_OF_LIGHT,
            aod_azimuth: phi,
            aod_elevation: theta,
            n_bounces: u8::from(reflector.is_some()),
            reflector,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathList {
    pub paths: Vec<Path>,
    pub tx: Vec3,
    pub rx: Vec3,
}

impl PathList {
    pub fn los(&self) -> Option<&Path> {
        self.paths.iter().find(|p| p.n_bounces == 0)
    }
}

/// Orientation of the BS array in the floor plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayMount {
    /// World azimuth of the array boresight (radians from +x).
    pub boresight_azimuth: f64,
}

impl ArrayMount {
    /// Boresight pointing from `pos` towards the room centre.
    pub fn facing_center(pos: Vec3) -> Self {
        let az = if pos.x == 0.0 && pos.y == 0.0 {
            0.0
        } else {
            (-pos.y).atan2(-pos.x)
        };
        Self {
            boresight_azimuth: az,
        }
    }

    /// World direction expressed in the array frame.
    pub fn to_local(&self, d: Vec3) -> Vec3 {
        let (s, c) = self.boresight_azimuth.sin_cos();
        let x_l = Vec3::new(c, s, 0.0);
        let y_l = Vec3::new(-s, c, 0.0);
        Vec3::new(d.dot(x_l), d.dot(y_l), d.z)
    }
}

/// Elevation/azimuth `(theta, phi)` of a direction in the array frame,
/// with `theta` in `[0, pi]` and `phi` in `(-pi, pi]`.
pub fn path_geometry(d: Vec3) -> Result<(f64, f64)> {
    let u = d.normalized().ok_or(Error::DegenerateDirection)?;
    let theta = u.z.clamp(-1.0, 1.0).acos();
    let mut phi = u.y.atan2(u.x);
    if phi <= -std::f64::consts::PI {
        phi = std::f64::consts::PI;
    }
    Ok((theta, phi))
}

/// Inverse of [`path_geometry`].
pub fn direction_from_angles(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

fn segment_hits_rect(p: [f64; 2], q: [f64; 2], r: &crate::scene::Rect) -> bool {
    let d = [q[0] - p[0], q[1] - p[1]];
    let lo = [r.x_min, r.y_min];
    let hi = [r.x_max, r.y_max];
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for a in 0..2 {
        if d[a] == 0.0 {
            if p[a] < lo[a] || p[a] > hi[a] {
                return false;
            }
        } else {
            let ta = (lo[a] - p[a]) / d[a];
            let tb = (hi[a] - p[a]) / d[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    t0 < t1
}

fn segment_hits_disc(p: [f64; 2], q: [f64; 2], c: [f64; 2], r: f64) -> bool {
    let d = [q[0] - p[0], q[1] - p[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    let t = if dd > 0.0 {
        (((c[0] - p[0]) * d[0] + (c[1] - p[1]) * d[1]) / dd).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let x = p[0] + t * d[0] - c[0];
    let y = p[1] + t * d[1] - c[1];
    x * x + y * y < r * r
}

fn blocked_except(scene: &Scene, p: Vec3, q: Vec3, skip_wall: Option<usize>) -> bool {
    let (a, b) = (p.xy(), q.xy());
    scene
        .walls
        .iter()
        .enumerate()
        .any(|(i, w)| Some(i) != skip_wall && segment_hits_rect(a, b, &w.footprint()))
        || scene
            .cylinders
            .iter()
            .any(|c| segment_hits_disc(a, b, c.center, c.radius))
}

/// True iff the open segment `(p, q)` crosses an obstacle footprint.
pub fn segment_blocked(scene: &Scene, p: Vec3, q: Vec3) -> bool {
    blocked_except(scene, p, q, None)
}

/// A planar reflecting rectangle. `axis` is the plane normal (0 = x,
/// 1 = y, 2 = z), rays live on the `front` side of `coord`.
#[derive(Debug, Clone, Copy)]
pub struct Face {
    pub reflector: Reflector,
    pub axis: usize,
    pub coord: f64,
    pub front: f64,
    /// Closed extents along the two in-plane axes, in increasing axis order.
    pub extent: [(f64, f64); 2],
}

impl Face {
    /// Mirror image of a point across the face plane.
    pub fn image(&self, p: Vec3) -> Vec3 {
        let mut c = [p.x, p.y, p.z];
        c[self.axis] = 2.0 * self.coord - c[self.axis];
        Vec3::new(c[0], c[1], c[2])
    }

    fn side(&self, p: Vec3) -> f64 {
        self.front * ([p.x, p.y, p.z][self.axis] - self.coord)
    }

    fn wall_index(&self) -> Option<usize> {
        match self.reflector {
            Reflector::Wall { index, .. } => Some(index),
            _ => None,
        }
    }
}

/// All reflecting faces of a scene, in a fixed order.
pub fn faces(scene: &Scene) -> Vec<Face> {
    let full_xy = (-ROOM_HALF, ROOM_HALF);
    let full_z = (0.0, ROOM_HEIGHT);
    let mut out = vec![
        Face {
            reflector: Reflector::Outer(OuterSide::XMin),
            axis: 0,
            coord: -ROOM_HALF,
            front: 1.0,
            extent: [full_xy, full_z],
        },
        Face {
            reflector: Reflector::Outer(OuterSide::XMax),
            axis: 0,
            coord: ROOM_HALF,
            front: -1.0,
            extent: [full_xy, full_z],
        },
        Face {
            reflector: Reflector::Outer(OuterSide::YMin),
            axis: 1,
            coord: -ROOM_HALF,
            front: 1.0,
            extent: [full_xy, full_z],
        },
        Face {
            reflector: Reflector::Outer(OuterSide::YMax),
            axis: 1,
            coord: ROOM_HALF,
            front: -1.0,
            extent: [full_xy, full_z],
        },
        Face {
            reflector: Reflector::Floor,
            axis: 2,
            coord: 0.0,
            front: 1.0,
            extent: [full_xy, full_xy],
        },
        Face {
            reflector: Reflector::Ceiling,
            axis: 2,
            coord: ROOM_HEIGHT,
            front: -1.0,
            extent: [full_xy, full_xy],
        },
    ];
    for (index, w) in scene.walls.iter().enumerate() {
        let r = w.footprint();
        match w.axis() {
            crate::scene::Axis::X => {
                for (positive, coord) in [(false, r.y_min), (true, r.y_max)] {
                    out.push(Face {
                        reflector: Reflector::Wall { index, positive },
                        axis: 1,
                        coord,
                        front: if positive { 1.0 } else { -1.0 },
                        extent: [(r.x_min, r.x_max), full_z],
                    });
                }
            }
            crate::scene::Axis::Y => {
                for (positive, coord) in [(false, r.x_min), (true, r.x_max)] {
                    out.push(Face {
                        reflector: Reflector::Wall { index, positive },
                        axis: 0,
                        coord,
                        front: if positive { 1.0 } else { -1.0 },
                        extent: [(r.y_min, r.y_max), full_z],
                    });
                }
            }
        }
    }
    out
}

/// Specular reflection point of `tx -> face -> rx`, if it exists on the face.
pub fn reflection_point(face: &Face, tx: Vec3, rx: Vec3) -> Option<Vec3> {
    if face.side(tx) <= 0.0 || face.side(rx) <= 0.0 {
        return None;
    }
    let img = face.image(tx);
    let a = face.axis;
    let ic = [img.x, img.y, img.z];
    let rc = [rx.x, rx.y, rx.z];
    let t = (face.coord - ic[a]) / (rc[a] - ic[a]);
    let mut pt = [0.0; 3];
    for i in 0..3 {
        pt[i] = ic[i] + t * (rc[i] - ic[i]);
    }
    pt[a] = face.coord;
    let others: Vec<usize> = (0..3).filter(|&i| i != a).collect();
    for (k, &i) in others.iter().enumerate() {
        let (lo, hi) = face.extent[k];
        if pt[i] < lo || pt[i] > hi {
            return None;
        }
    }
    Some(Vec3::new(pt[0], pt[1], pt[2]))
}

/// Trace paths from `tx` to `rx` with the array mounted facing the room
/// centre from `tx`.
pub fn trace_paths(scene: &Scene, tx: Vec3, rx: Vec3, max_order: u8) -> PathList {
    trace_paths_with_mount(scene, tx, rx, max_order, ArrayMount::facing_center(tx))
}

/// Paths of reflection order `<= max_order` (orders above 1 are not traced).
pub fn trace_paths_with_mount(
    scene: &Scene,
    tx: Vec3,
    rx: Vec3,
    max_order: u8,
    mount: ArrayMount,
) -> PathList {
    let mut paths = Vec::new();
    if tx != rx && !segment_blocked(scene, tx, rx) {
        if let Ok(p) = Path::new(tx.dist(rx), mount.to_local(rx - tx), None) {
            paths.push(p);
        }
    }
    if max_order >= 1 {
        for face in faces(scene) {
            let Some(r) = reflection_point(&face, tx, rx) else {
                continue;
            };
            let skip = face.wall_index();
            if blocked_except(scene, tx, r, skip) || blocked_except(scene, r, rx, skip) {
                continue;
            }
            let length = face.image(tx).dist(rx);
            if let Ok(p) = Path::new(length, mount.to_local(r - tx), Some(face.reflector)) {
                paths.push(p);
            }
        }
    }
    PathList { paths, tx, rx }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{SceneProfile, Wall};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn empty() -> Scene {
        Scene::empty(SceneProfile::paper().bs_pos)
    }

    fn wall_scene() -> Scene {
        let mut s = empty();
        s.walls.push(Wall {
            start: [-2.0, 0.0],
            end: [2.0, 0.0],
            thickness: 0.2,
        });
        s
    }

    #[test]
    fn empty_room_never_blocks() {
        let s = empty();
        assert!(!segment_blocked(&s, Vec3::new(-4.0, -4.0, 1.0), Vec3::new(4.0, 4.0, 2.0)));
    }

    #[test]
    fn perpendicular_crossing_is_blocked() {
        let s = wall_scene();
        assert!(segment_blocked(&s, Vec3::new(0.0, -1.0, 1.0), Vec3::new(0.0, 1.0, 1.0)));
        assert!(!segment_blocked(&s, Vec3::new(3.0, -1.0, 1.0), Vec3::new(3.0, 1.0, 1.0)));
    }

    #[test]
    fn empty_room_los_length() {
        let pl = trace_paths(&empty(), Vec3::new(0.0, 0.0, 2.5), Vec3::new(3.0, 4.0, 1.0), 1);
        let los = pl.los().unwrap();
        assert!((los.length - (9.0f64 + 16.0 + 2.25).sqrt()).abs() < 1e-12);
        assert!((los.length - 5.220153254455275).abs() < 1e-12);
        assert_eq!(pl.paths.len(), 7);
    }

    #[test]
    fn blocked_los_is_absent() {
        let pl = trace_paths(&wall_scene(), Vec3::new(0.0, 2.0, 2.5), Vec3::new(0.0, -2.0, 1.0), 1);
        assert!(pl.paths.iter().all(|p| p.n_bounces == 1));
        assert!(!pl.paths.is_empty());
    }

    #[test]
    fn internal_wall_face_reflects() {
        let tx = Vec3::new(-1.0, 2.0, 2.0);
        let rx = Vec3::new(1.0, 1.0, 1.0);
        let pl = trace_paths(&wall_scene(), tx, rx, 1);
        let hit = pl
            .paths
            .iter()
            .find(|p| p.reflector == Some(Reflector::Wall { index: 0, positive: true }))
            .expect("front face reflection");
        let img = Vec3::new(-1.0, 2.0 * 0.1 - 2.0, 2.0);
        assert!((hit.length - img.dist(rx)).abs() < 1e-12);
        assert!(pl
            .paths
            .iter()
            .all(|p| p.reflector != Some(Reflector::Wall { index: 0, positive: false })));
    }

    #[test]
    fn angles_of_axes() {
        let (t, _) = path_geometry(Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(t, 0.0);
        let (t, p) = path_geometry(Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert!((t - FRAC_PI_2).abs() < 1e-15 && p == 0.0);
        let (_, p) = path_geometry(Vec3::new(-1.0, -0.0, 0.0)).unwrap();
        assert_eq!(p, PI);
        assert!(matches!(
            path_geometry(Vec3::default()),
            Err(Error::DegenerateDirection)
        ));
    }

    #[test]
    fn bs_mount_points_into_room() {
        let m = ArrayMount::facing_center(SceneProfile::paper().bs_pos);
        let centre = m.to_local(Vec3::new(4.75, -4.75, 0.0));
        assert!(centre.x > 0.0 && centre.y.abs() < 1e-12);
    }
}
