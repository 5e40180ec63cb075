use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

/// Wall of the axis-aligned room `[0, W] x [0, D] x [0, H]` (z up).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    /// y = 0, facing +y.
    South,
    /// y = D, facing -y.
    North,
    /// x = 0, facing +x.
    West,
    /// x = W, facing -x.
    East,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::South, Wall::North, Wall::West, Wall::East];

    pub fn name(self) -> &'static str {
        match self {
            Wall::South => "south",
            Wall::North => "north",
            Wall::West => "west",
            Wall::East => "east",
        }
    }

    /// Unit normal pointing into the room.
    pub fn normal(self) -> Vec3 {
        match self {
            Wall::South => [0.0, 1.0, 0.0],
            Wall::North => [0.0, -1.0, 0.0],
            Wall::West => [1.0, 0.0, 0.0],
            Wall::East => [-1.0, 0.0, 0.0],
        }
    }

    /// Horizontal unit vector along the wall, to the right when facing it
    /// from inside the room.
    pub fn tangent(self) -> Vec3 {
        match self {
            Wall::South => [-1.0, 0.0, 0.0],
            Wall::North => [1.0, 0.0, 0.0],
            Wall::West => [0.0, 1.0, 0.0],
            Wall::East => [0.0, -1.0, 0.0],
        }
    }

    /// Length of the wall in a room of size `room`.
    pub fn length(self, room: [f64; 3]) -> f64 {
        match self {
            Wall::South | Wall::North => room[0],
            Wall::West | Wall::East => room[1],
        }
    }

    /// Point on the floor line of the wall at signed distance `along` from
    /// the wall's midpoint, measured along [`Wall::tangent`].
    pub fn anchor(self, room: [f64; 3], along: f64) -> Vec3 {
        let (w, d) = (room[0], room[1]);
        let mid = match self {
            Wall::South => [w / 2.0, 0.0, 0.0],
            Wall::North => [w / 2.0, d, 0.0],
            Wall::West => [0.0, d / 2.0, 0.0],
            Wall::East => [w, d / 2.0, 0.0],
        };
        let t = self.tangent();
        [mid[0] + t[0] * along, mid[1] + t[1] * along, 0.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartKind {
    Knob,
    Handle,
    Switch,
}

impl PartKind {
    pub fn name(self) -> &'static str {
        match self {
            PartKind::Knob => "knob",
            PartKind::Handle => "handle",
            PartKind::Switch => "switch",
        }
    }

    /// Grid of points as (columns, rows).
    pub fn grid(self) -> (usize, usize) {
        match self {
            PartKind::Knob => (4, 4),
            PartKind::Handle => (7, 3),
            PartKind::Switch => (5, 5),
        }
    }

    pub fn color(self) -> [u8; 3] {
        match self {
            PartKind::Knob => [70, 70, 80],
            PartKind::Handle => [180, 180, 190],
            PartKind::Switch => [245, 245, 235],
        }
    }
}

/// A functional part on the front face of a piece of furniture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartSpec {
    pub kind: PartKind,
    /// Horizontal offset from the face center along the wall tangent.
    pub u: f64,
    /// Height of the part center above the floor.
    pub v: f64,
    pub task: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureSpec {
    pub name: String,
    pub color: [u8; 3],
    pub wall: Wall,
    /// Center position along the wall, relative to the wall midpoint.
    pub along: f64,
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub parts: Vec<PartSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchSpec {
    pub wall: Wall,
    pub along: f64,
    pub height: f64,
    pub task: String,
}

/// Free-standing box, typically a post that hides parts from some viewpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccluderSpec {
    pub name: String,
    pub color: [u8; 3],
    /// Floor-plane center (x, y).
    pub center: [f64; 2],
    /// Footprint (x, y) extents.
    pub size: [f64; 2],
    pub height: f64,
    /// Point spacing; occluders close to the camera need a denser sampling.
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Trajectory {
    /// Camera circling `center` at `radius`, looking outward and slightly down.
    Orbit { center: Vec3, radius: f64, pitch_deg: f64 },
    /// Camera translating from `start` to `end`, looking along `look`.
    Line { start: Vec3, end: Vec3, look: Vec3 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    /// Room extents (x, y, z) in meters.
    pub room: [f64; 3],
    pub surface_spacing: f64,
    pub part_spacing: f64,
    /// Distance of part grids in front of their parent surface.
    pub part_offset: f64,
    pub furniture: Vec<FurnitureSpec>,
    pub switches: Vec<SwitchSpec>,
    pub occluders: Vec<OccluderSpec>,
    pub trajectory: Trajectory,
    pub n_frames: usize,
    pub fps: f64,
    pub image_size: (u32, u32),
    pub focal: f64,
    /// Splat side length in pixels for surfaces and for parts.
    pub surface_splat: u32,
    pub part_splat: u32,
}

const COLORS: [(&str, [u8; 3]); 8] = [
    ("red", [190, 50, 45]),
    ("green", [60, 150, 70]),
    ("blue", [50, 80, 180]),
    ("yellow", [220, 200, 60]),
    ("white", [235, 235, 230]),
    ("black", [35, 35, 40]),
    ("brown", [120, 80, 50]),
    ("orange", [230, 130, 40]),
];

struct Template {
    name: &'static str,
    width: f64,
    depth: f64,
    height: f64,
}

const TEMPLATES: [Template; 5] = [
    Template { name: "cabinet", width: 0.8, depth: 0.45, height: 0.9 },
    Template { name: "dresser", width: 1.0, depth: 0.5, height: 1.1 },
    Template { name: "nightstand", width: 0.5, depth: 0.4, height: 0.6 },
    Template { name: "wardrobe", width: 1.0, depth: 0.6, height: 1.9 },
    Template { name: "sideboard", width: 1.2, depth: 0.45, height: 0.8 },
];

fn parts_for(t: &Template, color: &str) -> Vec<PartSpec> {
    let full = format!("{color} {}", t.name);
    match t.name {
        "cabinet" => vec![
            PartSpec { kind: PartKind::Knob, u: -0.15, v: 0.7, task: format!("open the left door of the {full}") },
            PartSpec { kind: PartKind::Knob, u: 0.15, v: 0.7, task: format!("open the right door of the {full}") },
        ],
        "dresser" => vec![
            PartSpec { kind: PartKind::Handle, u: 0.0, v: 0.95, task: format!("pull out the top drawer of the {full}") },
            PartSpec { kind: PartKind::Handle, u: 0.0, v: 0.65, task: format!("pull out the middle drawer of the {full}") },
            PartSpec { kind: PartKind::Handle, u: 0.0, v: 0.35, task: format!("pull out the bottom drawer of the {full}") },
        ],
        "nightstand" => {
            vec![PartSpec { kind: PartKind::Handle, u: 0.0, v: 0.48, task: format!("open the drawer of the {full}") }]
        }
        "wardrobe" => vec![
            PartSpec { kind: PartKind::Knob, u: -0.08, v: 1.05, task: format!("open the left door of the {full}") },
            PartSpec { kind: PartKind::Knob, u: 0.08, v: 1.05, task: format!("open the right door of the {full}") },
        ],
        _ => vec![
            PartSpec { kind: PartKind::Handle, u: -0.3, v: 0.6, task: format!("open the left drawer of the {full}") },
            PartSpec { kind: PartKind::Knob, u: 0.3, v: 0.45, task: format!("open the right cupboard of the {full}") },
        ],
    }
}

impl SynthSpec {
    /// Defaults shared by generated scenes; the layout is left empty.
    pub fn base(seed: u64) -> Self {
        Self {
            seed,
            room: [4.0, 4.0, 2.6],
            surface_spacing: 0.05,
            part_spacing: 0.025,
            part_offset: 0.015,
            furniture: Vec::new(),
            switches: Vec::new(),
            occluders: Vec::new(),
            trajectory: Trajectory::Orbit { center: [2.0, 2.0, 1.0], radius: 0.3, pitch_deg: -8.0 },
            n_frames: 240,
            fps: 30.0,
            image_size: (256, 192),
            focal: 180.0,
            surface_splat: 5,
            part_splat: 1,
        }
    }

    /// A furnished room drawn from `seed`: one piece of furniture per wall
    /// and two wall switches, seen from an orbiting camera.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = Self::base(seed);
        let room = [rng.random_range(3.8..4.4), rng.random_range(3.8..4.4), 2.6];
        spec.room = room;
        spec.trajectory = Trajectory::Orbit {
            center: [room[0] / 2.0, room[1] / 2.0, 1.0],
            radius: 0.3,
            pitch_deg: -8.0,
        };
        let mut colors = COLORS.to_vec();
        colors.shuffle(&mut rng);
        let mut walls = Wall::ALL.to_vec();
        walls.shuffle(&mut rng);
        let mut templates: Vec<usize> = (0..TEMPLATES.len()).collect();
        templates.shuffle(&mut rng);
        for (i, &wall) in walls.iter().enumerate() {
            let t = &TEMPLATES[templates[i]];
            let (cname, color) = colors[i];
            let half_room = wall.length(room) / 2.0;
            // Keep the piece inside the middle part of the wall, leaving room for a switch.
            let span = (half_room - t.width / 2.0 - 0.9).max(0.0);
            let along = if span > 0.0 { rng.random_range(-span..=span) } else { 0.0 };
            spec.furniture.push(FurnitureSpec {
                name: t.name.to_string(),
                color,
                wall,
                along,
                width: t.width,
                depth: t.depth,
                height: t.height,
                parts: parts_for(t, cname),
            });
        }
        for &wall in walls.iter().take(2) {
            let f = spec.furniture.iter().find(|f| f.wall == wall).expect("every wall has furniture");
            // Beside the furniture, on the side with more free wall.
            let side = if f.along <= 0.0 { 1.0 } else { -1.0 };
            let along = f.along + side * (f.width / 2.0 + rng.random_range(0.3..0.45));
            spec.switches.push(SwitchSpec {
                wall,
                along,
                height: rng.random_range(1.0..1.3),
                task: format!("turn on the lights with the switch on the {} wall", wall.name()),
            });
        }
        spec
    }

    /// A single-knob cabinet passed by a camera sliding sideways. A pillar
    /// between the camera and the knob hides the knob in the frames where
    /// the cabinet is centered, and only then.
    pub fn occluded_pass(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = Self::base(seed);
        let (cname, color) = COLORS[rng.random_range(0..COLORS.len())];
        let v = rng.random_range(0.6..0.8);
        let cam_h = 0.85;
        spec.furniture.push(FurnitureSpec {
            name: "cabinet".into(),
            color,
            wall: Wall::South,
            along: 0.0,
            width: 0.8,
            depth: 0.45,
            height: 0.9,
            parts: vec![PartSpec { kind: PartKind::Knob, u: 0.0, v, task: format!("open the door of the {cname} cabinet") }],
        });
        // Knob at y = 0.465, camera at y = 1.95; the pillar sits 30% of the way.
        spec.occluders.push(OccluderSpec {
            name: "pillar".into(),
            color: [150, 150, 160],
            center: [2.0, 1.5045],
            size: [0.116, 0.06],
            height: spec.room[2],
            spacing: 0.008,
        });
        spec.trajectory = Trajectory::Line {
            start: [1.0, 1.95, cam_h],
            end: [3.0, 1.95, cam_h],
            look: [0.0, -1.485, v - cam_h],
        };
        spec.n_frames = 121;
        spec
    }

    /// Number of queries the spec defines.
    pub fn query_count(&self) -> usize {
        self.furniture.iter().map(|f| f.parts.len()).sum::<usize>() + self.switches.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_specs_are_reproducible_and_varied() {
        assert_eq!(SynthSpec::random(3), SynthSpec::random(3));
        assert_ne!(SynthSpec::random(3), SynthSpec::random(4));
        for seed in 0..20 {
            let s = SynthSpec::random(seed);
            assert_eq!(s.furniture.len(), 4);
            assert_eq!(s.switches.len(), 2);
            let mut tasks: Vec<&str> = s
                .furniture
                .iter()
                .flat_map(|f| f.parts.iter().map(|p| p.task.as_str()))
                .chain(s.switches.iter().map(|w| w.task.as_str()))
                .collect();
            let n = tasks.len();
            assert_eq!(n, s.query_count());
            tasks.sort();
            tasks.dedup();
            assert_eq!(tasks.len(), n, "task texts must be unique");
        }
    }

    #[test]
    fn wall_frames() {
        let room = [4.0, 3.0, 2.5];
        assert_eq!(Wall::South.anchor(room, 0.5), [1.5, 0.0, 0.0]);
        assert_eq!(Wall::East.anchor(room, 1.0), [4.0, 0.5, 0.0]);
        for w in Wall::ALL {
            let (n, t) = (w.normal(), w.tangent());
            // Facing the wall means looking along -n; right of that is up x n.
            assert_eq!(crate::geometry::cross([0.0, 0.0, 1.0], n), t);
        }
    }
}
