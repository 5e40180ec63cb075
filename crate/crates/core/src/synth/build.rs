use serde::{Deserialize, Serialize};

use crate::geometry::{add, scale, Vec3};

use super::spec::{PartKind, SynthSpec, Wall};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Surface,
    Part,
}

/// One object of a generated scene. Its points occupy the id range
/// `first..first + count` of the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u16,
    pub name: String,
    pub kind: ObjectKind,
    pub parent: Option<u16>,
    pub color: [u8; 3],
    pub splat: u32,
    pub first: u32,
    pub count: u32,
}

impl SceneObject {
    pub fn point_ids(&self) -> std::ops::Range<u32> {
        self.first..self.first + self.count
    }

    pub fn contains(&self, id: u32) -> bool {
        self.point_ids().contains(&id)
    }
}

/// A query of a generated scene and the part that answers it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTarget {
    pub query_id: String,
    pub task: String,
    pub part: u16,
}

/// Points (already rounded to the stored `f32` precision) plus their objects.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub points: Vec<[f32; 3]>,
    pub objects: Vec<SceneObject>,
    pub targets: Vec<QueryTarget>,
}

/// Cell-centered samples of `[0, len]` at roughly `spacing`.
fn samples(len: f64, spacing: f64) -> Vec<f64> {
    let n = ((len / spacing).round() as usize).max(1);
    let step = len / n as f64;
    (0..n).map(|i| (i as f64 + 0.5) * step).collect()
}

struct Builder {
    points: Vec<[f32; 3]>,
    objects: Vec<SceneObject>,
}

impl Builder {
    fn begin(&mut self, name: &str, kind: ObjectKind, parent: Option<u16>, color: [u8; 3], splat: u32) -> u16 {
        let id = self.objects.len() as u16;
        self.objects.push(SceneObject {
            id,
            name: name.to_string(),
            kind,
            parent,
            color,
            splat,
            first: self.points.len() as u32,
            count: 0,
        });
        id
    }

    fn push(&mut self, p: Vec3) {
        self.points.push([p[0] as f32, p[1] as f32, p[2] as f32]);
        self.objects.last_mut().expect("object started").count += 1;
    }

    /// Samples the rectangle `origin + a*s + b*t` for `s in [0,1]`, `t in [0,1]`.
    fn rect(&mut self, origin: Vec3, a: Vec3, b: Vec3, spacing: f64) {
        let (la, lb) = (crate::geometry::norm(a), crate::geometry::norm(b));
        for t in samples(lb, spacing) {
            for s in samples(la, spacing) {
                self.push(add(origin, add(scale(a, s / la), scale(b, t / lb))));
            }
        }
    }

    /// Axis-aligned box without its bottom face; faces listed in `skip` (by
    /// outward normal) are left out too.
    fn open_box(&mut self, min: Vec3, max: Vec3, skip: &[Vec3], spacing: f64) {
        let [x0, y0, z0] = min;
        let [x1, y1, z1] = max;
        let (dx, dy, dz) = (x1 - x0, y1 - y0, z1 - z0);
        let faces: [(Vec3, Vec3, Vec3, Vec3); 5] = [
            ([-1.0, 0.0, 0.0], [x0, y0, z0], [0.0, dy, 0.0], [0.0, 0.0, dz]),
            ([1.0, 0.0, 0.0], [x1, y0, z0], [0.0, dy, 0.0], [0.0, 0.0, dz]),
            ([0.0, -1.0, 0.0], [x0, y0, z0], [dx, 0.0, 0.0], [0.0, 0.0, dz]),
            ([0.0, 1.0, 0.0], [x0, y1, z0], [dx, 0.0, 0.0], [0.0, 0.0, dz]),
            ([0.0, 0.0, 1.0], [x0, y0, z1], [dx, 0.0, 0.0], [0.0, dy, 0.0]),
        ];
        for (n, o, a, b) in faces {
            if !skip.contains(&n) {
                self.rect(o, a, b, spacing);
            }
        }
    }

    /// Planar `cols x rows` grid centered at `center`, spanning the wall
    /// tangent and the vertical.
    fn grid(&mut self, center: Vec3, tangent: Vec3, (cols, rows): (usize, usize), spacing: f64) {
        for r in 0..rows {
            let dv = (r as f64 - (rows - 1) as f64 / 2.0) * spacing;
            for c in 0..cols {
                let du = (c as f64 - (cols - 1) as f64 / 2.0) * spacing;
                self.push(add(center, add(scale(tangent, du), [0.0, 0.0, -dv])));
            }
        }
    }
}

const WALL_COLORS: [[u8; 3]; 4] = [[214, 206, 190], [200, 210, 214], [222, 214, 200], [196, 204, 198]];
const FLOOR_COLOR: [u8; 3] = [128, 104, 84];

/// Builds the point cloud and object table of `spec`.
pub fn build_layout(spec: &SynthSpec) -> Layout {
    let [w, d, h] = spec.room;
    let sp = spec.surface_spacing;
    let mut b = Builder { points: Vec::new(), objects: Vec::new() };

    let mut wall_ids = Vec::new();
    for (i, wall) in Wall::ALL.into_iter().enumerate() {
        let id = b.begin("wall", ObjectKind::Surface, None, WALL_COLORS[i], spec.surface_splat);
        let len = wall.length(spec.room);
        let start = wall.anchor(spec.room, -len / 2.0);
        b.rect(start, scale(wall.tangent(), len), [0.0, 0.0, h], sp);
        wall_ids.push((wall, id));
    }
    b.begin("floor", ObjectKind::Surface, None, FLOOR_COLOR, spec.surface_splat);
    b.rect([0.0, 0.0, 0.0], [w, 0.0, 0.0], [0.0, d, 0.0], sp);

    let mut targets = Vec::new();
    let add_target = |task: &str, part: u16, targets: &mut Vec<QueryTarget>| {
        let query_id = format!("q{:02}", targets.len());
        targets.push(QueryTarget { query_id, task: task.to_string(), part });
    };

    for f in &spec.furniture {
        let n = f.wall.normal();
        let t = f.wall.tangent();
        let back_center = f.wall.anchor(spec.room, f.along);
        let front_center = add(back_center, scale(n, f.depth));
        let corners = [
            add(back_center, scale(t, -f.width / 2.0)),
            add(back_center, scale(t, f.width / 2.0)),
            add(front_center, scale(t, -f.width / 2.0)),
            add(front_center, scale(t, f.width / 2.0)),
        ];
        let min = [
            corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min),
            corners.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min),
            0.0,
        ];
        let max = [
            corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max),
            corners.iter().map(|c| c[1]).fold(f64::NEG_INFINITY, f64::max),
            f.height,
        ];
        let parent = b.begin(&f.name, ObjectKind::Surface, None, f.color, spec.surface_splat);
        b.open_box(min, max, &[scale(n, -1.0)], sp);
        for p in &f.parts {
            let center = add(add(front_center, scale(n, spec.part_offset)), add(scale(t, p.u), [0.0, 0.0, p.v]));
            let id = b.begin(p.kind.name(), ObjectKind::Part, Some(parent), p.kind.color(), spec.part_splat);
            b.grid(center, t, p.kind.grid(), spec.part_spacing);
            add_target(&p.task, id, &mut targets);
        }
    }
    for s in &spec.switches {
        let parent = wall_ids.iter().find(|(w, _)| *w == s.wall).map(|(_, id)| *id).expect("four walls");
        let center = add(add(s.wall.anchor(spec.room, s.along), scale(s.wall.normal(), spec.part_offset)), [
            0.0, 0.0, s.height,
        ]);
        let id = b.begin(PartKind::Switch.name(), ObjectKind::Part, Some(parent), PartKind::Switch.color(), spec.part_splat);
        b.grid(center, s.wall.tangent(), PartKind::Switch.grid(), spec.part_spacing);
        add_target(&s.task, id, &mut targets);
    }
    for o in &spec.occluders {
        b.begin(&o.name, ObjectKind::Surface, None, o.color, spec.surface_splat);
        let min = [o.center[0] - o.size[0] / 2.0, o.center[1] - o.size[1] / 2.0, 0.0];
        let max = [o.center[0] + o.size[0] / 2.0, o.center[1] + o.size[1] / 2.0, o.height];
        b.open_box(min, max, &[], o.spacing);
    }
    Layout { points: b.points, objects: b.objects, targets }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_cover_interval() {
        assert_eq!(samples(1.0, 0.5), vec![0.25, 0.75]);
        assert_eq!(samples(0.01, 0.05), vec![0.005]);
    }

    #[test]
    fn objects_are_contiguous_and_parts_are_small() {
        let spec = SynthSpec::random(7);
        let layout = build_layout(&spec);
        let mut next = 0;
        for o in &layout.objects {
            assert_eq!(o.first, next);
            assert!(o.count > 0, "{} has no points", o.name);
            next += o.count;
        }
        assert_eq!(next as usize, layout.points.len());
        assert_eq!(layout.targets.len(), spec.query_count());
        for t in &layout.targets {
            let part = &layout.objects[t.part as usize];
            assert_eq!(part.kind, ObjectKind::Part);
            assert!((part.count as f64) < 0.01 * layout.points.len() as f64);
            let parent = &layout.objects[part.parent.unwrap() as usize];
            assert_eq!(parent.kind, ObjectKind::Surface);
        }
    }

    #[test]
    fn knob_grid_sits_in_front_of_its_face() {
        let mut spec = SynthSpec::base(0);
        spec.furniture.push(super::super::spec::FurnitureSpec {
            name: "cabinet".into(),
            color: [10, 20, 30],
            wall: Wall::South,
            along: 0.0,
            width: 0.8,
            depth: 0.5,
            height: 1.0,
            parts: vec![super::super::spec::PartSpec { kind: PartKind::Knob, u: 0.0, v: 0.5, task: "t".into() }],
        });
        let layout = build_layout(&spec);
        let knob = layout.objects.iter().find(|o| o.name == "knob").unwrap();
        assert_eq!(knob.count, 16);
        for id in knob.point_ids() {
            let p = layout.points[id as usize];
            assert!((p[1] as f64 - 0.515).abs() < 1e-6);
            assert!((p[0] as f64 - 2.0).abs() <= 0.0375 + 1e-6);
            assert!((p[2] as f64 - 0.5).abs() <= 0.0375 + 1e-6);
        }
    }
}
