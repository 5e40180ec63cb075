use image::{Luma, Rgb, RgbImage};

use crate::geometry::{add, CameraModel, Pose, Vec3};
use crate::scene::DepthImage;

use super::build::SceneObject;
use super::spec::{SynthSpec, Trajectory};

/// Points closer than this to the camera plane are not drawn.
const NEAR_PLANE: f64 = 0.05;

/// Marks a pixel no point covers.
pub const NO_POINT: u32 = u32::MAX;

pub fn camera_model(spec: &SynthSpec) -> CameraModel {
    let (w, h) = spec.image_size;
    CameraModel {
        fx: spec.focal,
        fy: spec.focal,
        cx: w as f64 / 2.0 - 0.5,
        cy: h as f64 / 2.0 - 0.5,
        width: w,
        height: h,
    }
}

/// Camera-to-world pose of every frame along the trajectory.
pub fn trajectory_poses(spec: &SynthSpec) -> Vec<Pose> {
    let n = spec.n_frames;
    let up = [0.0, 0.0, 1.0];
    (0..n)
        .map(|i| match &spec.trajectory {
            Trajectory::Orbit { center, radius, pitch_deg } => {
                let theta = std::f64::consts::TAU * i as f64 / n as f64;
                let (s, c) = theta.sin_cos();
                let eye = add(*center, [radius * c, radius * s, 0.0]);
                let dir = [c, s, pitch_deg.to_radians().tan()];
                Pose::look_at(eye, add(eye, dir), up)
            }
            Trajectory::Line { start, end, look } => {
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                let eye: Vec3 = std::array::from_fn(|k| start[k] + (end[k] - start[k]) * t);
                Pose::look_at(eye, add(eye, *look), up)
            }
        })
        .collect()
}

/// One rendered view. `owner` holds, per pixel in row-major order, the id of
/// the point drawn there or [`NO_POINT`].
pub struct View {
    pub color: RgbImage,
    pub depth: DepthImage,
    pub owner: Vec<u32>,
}

/// Splats every point as a square of its object's splat size, keeping the
/// nearest point per pixel (ties go to the lower point id). Pixels no point
/// covers are black with depth 0.
pub fn render_view(points: &[[f32; 3]], objects: &[SceneObject], cam: &CameraModel, pose: &Pose) -> View {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut owner = vec![NO_POINT; w * h];
    let mut owner_obj = vec![0u16; w * h];
    for obj in objects {
        let half = (obj.splat.max(1) / 2) as i64;
        for id in obj.point_ids() {
            let p = points[id as usize];
            let pc = pose.inverse_transform_point([p[0] as f64, p[1] as f64, p[2] as f64]);
            if pc[2] <= NEAR_PLANE {
                continue;
            }
            let Some((u, v)) = cam.project(pc) else { continue };
            let (cu, cv) = ((u + 0.5).floor() as i64, (v + 0.5).floor() as i64);
            if cu + half < 0 || cv + half < 0 || cu - half >= w as i64 || cv - half >= h as i64 {
                continue;
            }
            let z = pc[2];
            for y in (cv - half).max(0)..=(cv + half).min(h as i64 - 1) {
                for x in (cu - half).max(0)..=(cu + half).min(w as i64 - 1) {
                    let k = y as usize * w + x as usize;
                    if z < zbuf[k] || (z == zbuf[k] && id < owner[k]) {
                        zbuf[k] = z;
                        owner[k] = id;
                        owner_obj[k] = obj.id;
                    }
                }
            }
        }
    }
    let mut color = RgbImage::new(cam.width, cam.height);
    let mut depth = DepthImage::new(cam.width, cam.height);
    for k in 0..w * h {
        if owner[k] == NO_POINT {
            continue;
        }
        let (x, y) = ((k % w) as u32, (k / w) as u32);
        color.put_pixel(x, y, Rgb(objects[owner_obj[k] as usize].color));
        let mm = (zbuf[k] * 1000.0).round().clamp(1.0, u16::MAX as f64) as u16;
        depth.put_pixel(x, y, Luma([mm]));
    }
    View { color, depth, owner }
}

#[cfg(test)]
mod tests {
    use super::super::build::ObjectKind;
    use super::*;

    fn object(id: u16, first: u32, count: u32, splat: u32, color: [u8; 3]) -> SceneObject {
        SceneObject { id, name: "o".into(), kind: ObjectKind::Surface, parent: None, color, splat, first, count }
    }

    fn cam() -> CameraModel {
        CameraModel { fx: 10.0, fy: 10.0, cx: 4.5, cy: 4.5, width: 10, height: 10 }
    }

    #[test]
    fn nearest_point_wins_and_ties_go_to_lower_id() {
        // Three points on the optical axis; ids 1 and 2 share a depth.
        let pts = [[0.0, 0.0, 3.0], [0.0, 0.0, 2.0], [0.0, 0.0, 2.0]];
        let objs = [object(0, 0, 1, 1, [1, 1, 1]), object(1, 1, 2, 1, [2, 2, 2])];
        let v = render_view(&pts, &objs, &cam(), &Pose::identity());
        // cx = 4.5 projects to u = 4.5, drawn at floor(5.0) = 5.
        assert_eq!(v.owner[5 * 10 + 5], 1);
        assert_eq!(v.depth.get_pixel(5, 5).0[0], 2000);
        assert_eq!(v.color.get_pixel(5, 5).0, [2, 2, 2]);
        assert_eq!(v.color.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(v.depth.get_pixel(0, 0).0[0], 0);
    }

    #[test]
    fn splat_covers_square_clipped_to_image() {
        let pts = [[-0.45 * 2.0, -0.45 * 2.0, 2.0]];
        let objs = [object(0, 0, 1, 5, [9, 9, 9])];
        let v = render_view(&pts, &objs, &cam(), &Pose::identity());
        // Projects to (0, 0): the 5x5 splat keeps its 3x3 in-image corner.
        let covered = v.owner.iter().filter(|&&o| o == 0).count();
        assert_eq!(covered, 9);
    }

    #[test]
    fn points_behind_or_too_close_are_skipped() {
        let pts = [[0.0, 0.0, -1.0], [0.0, 0.0, 0.01]];
        let objs = [object(0, 0, 2, 3, [9, 9, 9])];
        let v = render_view(&pts, &objs, &cam(), &Pose::identity());
        assert!(v.owner.iter().all(|&o| o == NO_POINT));
    }

    #[test]
    fn orbit_looks_outward() {
        let mut spec = SynthSpec::base(0);
        spec.n_frames = 4;
        let poses = trajectory_poses(&spec);
        // Frame 0 sits at +x of the center and looks further along +x.
        let fwd = poses[0].transform_point([0.0, 0.0, 1.0]);
        assert!(fwd[0] > poses[0].translation[0]);
        assert!(poses.iter().all(|p| p.orthonormality_error() < 1e-9));
    }
}
