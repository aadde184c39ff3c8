//! Randomized indoor scenes and their top-down rasterization.
//!
//! Scenes are 2.5-D: every obstacle spans the full room height, so the
//! footprint alone decides blockage. The room is a 10 m x 10 m square centred
//! at the origin, 3 m tall. Internal walls are axis-aligned slabs, cylinders
//! are full-height discs. Outer walls are not drawn into the scene graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::seed::{self, Stream};
use crate::{Error, Result};

pub const ROOM_SIDE: f64 = 10.0;
pub const ROOM_HALF: f64 = ROOM_SIDE / 2.0;
pub const ROOM_HEIGHT: f64 = 3.0;
pub const UE_HEIGHT: f64 = 1.0;

/// Axis-aligned rectangle in the floor plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    fn intersects(&self, o: &Rect) -> bool {
        self.x_min < o.x_max && o.x_min < self.x_max && self.y_min < o.y_max && o.y_min < self.y_max
    }

    /// Euclidean distance from a point to the rectangle (0 inside).
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = (self.x_min - p[0]).max(0.0).max(p[0] - self.x_max);
        let dy = (self.y_min - p[1]).max(0.0).max(p[1] - self.y_max);
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Wall runs along x (constant y).
    X,
    /// Wall runs along y (constant x).
    Y,
}

/// Axis-aligned internal wall: a centre line from `start` to `end`,
/// extruded by `thickness` perpendicular to it and over the full height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub start: [f64; 2],
    pub end: [f64; 2],
    pub thickness: f64,
}

impl Wall {
    pub fn axis(&self) -> Axis {
        if (self.start[1] - self.end[1]).abs() <= (self.start[0] - self.end[0]).abs() {
            Axis::X
        } else {
            Axis::Y
        }
    }

    pub fn footprint(&self) -> Rect {
        let h = self.thickness / 2.0;
        match self.axis() {
            Axis::X => Rect {
                x_min: self.start[0].min(self.end[0]),
                x_max: self.start[0].max(self.end[0]),
                y_min: self.start[1] - h,
                y_max: self.start[1] + h,
            },
            Axis::Y => Rect {
                x_min: self.start[0] - h,
                x_max: self.start[0] + h,
                y_min: self.start[1].min(self.end[1]),
                y_max: self.start[1].max(self.end[1]),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Cylinder {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub bs_pos: Vec3,
    pub walls: Vec<Wall>,
    pub cylinders: Vec<Cylinder>,
    pub seed: u64,
}

impl Scene {
    pub fn empty(bs_pos: Vec3) -> Self {
        Self {
            bs_pos,
            walls: Vec::new(),
            cylinders: Vec::new(),
            seed: 0,
        }
    }

    pub fn inside_bounds(p: Vec3) -> bool {
        p.x > -ROOM_HALF
            && p.x < ROOM_HALF
            && p.y > -ROOM_HALF
            && p.y < ROOM_HALF
            && p.z >= 0.0
            && p.z <= ROOM_HEIGHT
    }

    /// True if the floor-plane point lies in any obstacle footprint.
    pub fn in_obstacle(&self, p: [f64; 2]) -> bool {
        self.walls.iter().any(|w| w.footprint().contains(p))
            || self.cylinders.iter().any(|c| c.contains(p))
    }

    pub fn obstacle_area(&self) -> f64 {
        let walls: f64 = self.walls.iter().map(|w| w.footprint().area()).sum();
        let cyl: f64 = self
            .cylinders
            .iter()
            .map(|c| std::f64::consts::PI * c.radius * c.radius)
            .sum();
        walls + cyl
    }
}

/// Randomization recipe for [`generate_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneProfile {
    pub walls: (usize, usize),
    pub cylinders: (usize, usize),
    pub wall_length: (f64, f64),
    pub wall_thickness: f64,
    pub cylinder_radius: (f64, f64),
    pub bs_pos: Vec3,
    /// Minimum gap between obstacles and the outer walls.
    pub margin: f64,
    /// Minimum floor-plane distance between the BS and any obstacle.
    pub bs_clearance: f64,
    pub max_attempts: usize,
}

impl SceneProfile {
    pub fn paper() -> Self {
        Self {
            walls: (0, 3),
            cylinders: (0, 2),
            wall_length: (2.0, 6.0),
            wall_thickness: 0.2,
            cylinder_radius: (0.3, 1.0),
            bs_pos: Vec3::new(-4.75, 4.75, 2.5),
            margin: 0.1,
            bs_clearance: 0.5,
            max_attempts: 1000,
        }
    }

    pub fn empty() -> Self {
        Self {
            walls: (0, 0),
            cylinders: (0, 0),
            ..Self::paper()
        }
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Draw a scene. Deterministic in `(seed, profile)`.
pub fn generate_scene(seed: u64, profile: &SceneProfile) -> Result<Scene> {
    if profile.walls.0 > profile.walls.1 || profile.cylinders.0 > profile.cylinders.1 {
        return Err(Error::InvalidArgument("empty obstacle count range".into()));
    }
    if !Scene::inside_bounds(profile.bs_pos) {
        return Err(Error::InvalidArgument("BS position outside the room".into()));
    }
    let mut rng = seed::rng(seed::stream_seed(seed, Stream::Scene, 0));
    let n_walls = rng.gen_range(profile.walls.0..=profile.walls.1);
    let n_cyl = rng.gen_range(profile.cylinders.0..=profile.cylinders.1);
    let bs = profile.bs_pos.xy();
    let lim = ROOM_HALF - profile.margin;

    let mut walls: Vec<Wall> = Vec::with_capacity(n_walls);
    for _ in 0..n_walls {
        let mut placed = None;
        for _ in 0..profile.max_attempts {
            let len = uniform(&mut rng, profile.wall_length.0, profile.wall_length.1);
            let along_x = rng.gen_bool(0.5);
            let half_t = profile.wall_thickness / 2.0;
            if len / 2.0 >= lim || half_t >= lim {
                break;
            }
            let c_long = uniform(&mut rng, -lim + len / 2.0, lim - len / 2.0);
            let c_short = uniform(&mut rng, -lim + half_t, lim - half_t);
            let wall = if along_x {
                Wall {
                    start: [c_long - len / 2.0, c_short],
                    end: [c_long + len / 2.0, c_short],
                    thickness: profile.wall_thickness,
                }
            } else {
                Wall {
                    start: [c_short, c_long - len / 2.0],
                    end: [c_short, c_long + len / 2.0],
                    thickness: profile.wall_thickness,
                }
            };
            let fp = wall.footprint();
            let clear_bs = fp.distance_to(bs) > profile.bs_clearance;
            let clear_walls = walls.iter().all(|w| !w.footprint().intersects(&fp));
            if clear_bs && clear_walls {
                placed = Some(wall);
                break;
            }
        }
        walls.push(placed.ok_or(Error::SamplingExhausted {
            what: "internal wall placement",
            attempts: profile.max_attempts,
        })?);
    }

    let mut cylinders: Vec<Cylinder> = Vec::with_capacity(n_cyl);
    for _ in 0..n_cyl {
        let mut placed = None;
        for _ in 0..profile.max_attempts {
            let r = uniform(&mut rng, profile.cylinder_radius.0, profile.cylinder_radius.1);
            if r >= lim {
                break;
            }
            let c = [
                uniform(&mut rng, -lim + r, lim - r),
                uniform(&mut rng, -lim + r, lim - r),
            ];
            let cyl = Cylinder { center: c, radius: r };
            let d_bs = (c[0] - bs[0]).hypot(c[1] - bs[1]) - r;
            let clear_walls = walls.iter().all(|w| w.footprint().distance_to(c) > r);
            let clear_cyl = cylinders.iter().all(|o| {
                (o.center[0] - c[0]).hypot(o.center[1] - c[1]) > o.radius + r
            });
            if d_bs > profile.bs_clearance && clear_walls && clear_cyl {
                placed = Some(cyl);
                break;
            }
        }
        cylinders.push(placed.ok_or(Error::SamplingExhausted {
            what: "cylinder placement",
            attempts: profile.max_attempts,
        })?);
    }

    Ok(Scene {
        bs_pos: profile.bs_pos,
        walls,
        cylinders,
        seed,
    })
}

/// W x W binary top-down occupancy grid.
///
/// Row `i` covers `y = 5 - (i + 0.5) * cell_size` (row 0 is the +y edge),
/// column `j` covers `x = -5 + (j + 0.5) * cell_size`. Stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneGraph {
    pub w: usize,
    pub grid: Vec<u8>,
}

impl SceneGraph {
    pub fn zeros(w: usize) -> Self {
        Self {
            w,
            grid: vec![0; w * w],
        }
    }

    pub fn cell_size(&self) -> f64 {
        ROOM_SIDE / self.w as f64
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.grid[row * self.w + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.grid[row * self.w + col] = v;
    }

    pub fn cell_center(w: usize, row: usize, col: usize) -> [f64; 2] {
        let cs = ROOM_SIDE / w as f64;
        [-ROOM_HALF + (col as f64 + 0.5) * cs, ROOM_HALF - (row as f64 + 0.5) * cs]
    }

    pub fn ones(&self) -> usize {
        self.grid.iter().filter(|&&v| v == 1).count()
    }
}

/// Rasterize the obstacle footprints: a cell is 1 iff its centre is inside
/// an obstacle.
pub fn rasterize(scene: &Scene, w: usize) -> SceneGraph {
    let mut g = SceneGraph::zeros(w);
    for row in 0..w {
        for col in 0..w {
            if scene.in_obstacle(SceneGraph::cell_center(w, row, col)) {
                g.set(row, col, 1);
            }
        }
    }
    g
}

/// Drop `k` users uniformly over the free floor area at UE height.
pub fn sample_user_positions(scene: &Scene, k: usize, seed: u64) -> Result<Vec<Vec3>> {
    if k == 0 {
        return Err(Error::InvalidArgument("user count must be at least 1".into()));
    }
    const MAX_ATTEMPTS: usize = 10_000;
    let mut rng = seed::rng(seed);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut pos = None;
        for _ in 0..MAX_ATTEMPTS {
            let x = rng.gen_range(-ROOM_HALF..ROOM_HALF);
            let y = rng.gen_range(-ROOM_HALF..ROOM_HALF);
            if x > -ROOM_HALF && !scene.in_obstacle([x, y]) {
                pos = Some(Vec3::new(x, y, UE_HEIGHT));
                break;
            }
        }
        out.push(pos.ok_or(Error::SamplingExhausted {
            what: "user position",
            attempts: MAX_ATTEMPTS,
        })?);
    }
    Ok(out)
}
