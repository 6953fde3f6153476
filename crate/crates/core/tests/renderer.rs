use sweeper_core::assets::{compute_aabb, MeshBuilder, MeshModel};
use sweeper_core::geometry::Vec3;
use sweeper_core::renderer::{render_view, visible_fractions, CameraPose, SampledView, FOV_Y_DEG, IMAGE_SIZE};
use sweeper_core::viewgrid::build_view_grid;

fn two_objects() -> MeshModel {
    let mut b = MeshBuilder::new();
    b.object("block").cuboid(Vec3::new(-0.6, 0.0, -0.3), Vec3::new(0.1, 0.5, 0.3), [200, 60, 60]);
    b.object("ball").sphere(Vec3::new(0.35, 0.3, 0.25), 0.3, 20, [60, 60, 200]);
    b.build("pair").unwrap()
}

fn ray_triangle(orig: Vec3, dir: Vec3, tri: &[Vec3; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = orig - tri[0];
    let u = s.dot(p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > 0.0).then_some(t)
}

/// Object id per pixel by casting one ray through each pixel center and
/// keeping the nearest hit. Each triangle is only tested against pixels in
/// its projected bounding rectangle, padded by one pixel.
fn ray_cast_ids(mesh: &MeshModel, pose: &CameraPose) -> Vec<i16> {
    let f = pose.frame();
    let focal = 1.0 / (FOV_Y_DEG.to_radians() / 2.0).tan();
    let n = IMAGE_SIZE;
    let ray = |px: usize, py: usize| {
        let ndc_x = (px as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        let ndc_y = 1.0 - (py as f64 + 0.5) / n as f64 * 2.0;
        // Unit view-axis component, so t is the view depth.
        f.right * (ndc_x / focal) + f.up * (ndc_y / focal) - f.back
    };
    let mut depth = vec![f64::INFINITY; n * n];
    let mut ids = vec![-1i16; n * n];
    for (tri, &id) in mesh.triangles().iter().zip(mesh.object_ids()) {
        let mut rect = (0usize, 0usize, n, n);
        let cam: Vec<(f64, f64, f64)> = tri
            .iter()
            .map(|&p| {
                let rel = p - f.eye;
                (f.right.dot(rel), f.up.dot(rel), -f.back.dot(rel))
            })
            .collect();
        if cam.iter().all(|c| c.2 > pose.near()) {
            let xs = cam.iter().map(|c| (focal * c.0 / c.2 + 1.0) * 0.5 * n as f64);
            let ys = cam.iter().map(|c| (1.0 - focal * c.1 / c.2) * 0.5 * n as f64);
            let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |a, x| (a.0.min(x), a.1.max(x)));
            let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |a, y| (a.0.min(y), a.1.max(y)));
            let clamp = |v: f64| v.clamp(0.0, n as f64) as usize;
            rect = (clamp(x0 - 1.0), clamp(y0 - 1.0), clamp(x1 + 2.0), clamp(y1 + 2.0));
        }
        for py in rect.1..rect.3 {
            for px in rect.0..rect.2 {
                if let Some(t) = ray_triangle(f.eye, ray(px, py), tri) {
                    let i = py * n + px;
                    if t < depth[i] && t >= pose.near() && t <= pose.far() {
                        depth[i] = t;
                        ids[i] = id as i16;
                    }
                }
            }
        }
    }
    ids
}

fn fractions(ids: &[i16], k: usize) -> Vec<f64> {
    let total = ids.iter().filter(|&&i| i >= 0).count();
    (0..k).map(|o| ids.iter().filter(|&&i| i == o as i16).count() as f64 / total.max(1) as f64).collect()
}

#[test]
fn rasterizer_matches_ray_cast_oracle() {
    let mesh = two_objects();
    let grid = build_view_grid(&compute_aabb(&mesh).unwrap()).unwrap();
    for index in [0, 1, 6, 11, 17, 30] {
        let pose = grid.poses[index];
        let view = render_view(&mesh, &pose);
        let oracle = ray_cast_ids(&mesh, &pose);
        let mismatched = view.object_ids.iter().zip(&oracle).filter(|(a, b)| a != b).count();
        assert!(
            (mismatched as f64) < 0.01 * oracle.len() as f64,
            "view {index}: {mismatched} pixels disagree"
        );
        let want = fractions(&oracle, 2);
        let got = visible_fractions(&view, 2);
        for k in 0..2 {
            assert!((got[k] - want[k]).abs() <= 0.01, "view {index} object {k}: {} vs {}", got[k], want[k]);
        }
        // Depth and ids agree on which pixels are covered.
        for (d, id) in view.depth.iter().zip(&view.object_ids) {
            assert_eq!(d.is_finite(), *id >= 0);
        }
    }
}

/// (x, y, z) -> (z, y, -x): a quarter turn about +Y, which moves the
/// camera from longitude beta to beta + 90.
fn quarter_turn(p: Vec3) -> Vec3 {
    Vec3::new(p.z, p.y, -p.x)
}

fn mismatch(a: &SampledView, b: &SampledView) -> usize {
    a.object_ids.iter().zip(&b.object_ids).filter(|(x, y)| x != y).count()
}

#[test]
fn rotating_mesh_and_camera_together_preserves_the_image() {
    let mesh = two_objects();
    let grid = build_view_grid(&compute_aabb(&mesh).unwrap()).unwrap();
    for index in [1, 5, 9, 14, 20] {
        let pose = grid.poses[index];
        let base = render_view(&mesh, &pose);
        let mut turned = mesh.clone();
        let mut cam = pose;
        for quarter in 1..4 {
            turned = turned.map_vertices(quarter_turn);
            cam = CameraPose { target: quarter_turn(cam.target), beta: (cam.beta + 90.0) % 360.0, ..cam };
            let view = render_view(&turned, &cam);
            let diff = mismatch(&base, &view);
            assert!(diff * 1000 < base.object_ids.len(), "view {index} turn {quarter}: {diff} pixels differ");
            let depth_err = base
                .depth
                .iter()
                .zip(&view.depth)
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .map(|(a, b)| (a - b).abs() as f64)
                .fold(0.0, f64::max);
            assert!(depth_err < 1e-3 * pose.r, "view {index} turn {quarter}: depth error {depth_err}");
        }
    }
}

#[test]
fn each_cube_face_is_seen_from_some_view() {
    let mut b = MeshBuilder::new();
    let c = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
    let faces: [(&str, [Vec3; 4]); 6] = [
        ("px", [c(1., 0., 1.), c(1., 0., 0.), c(1., 1., 0.), c(1., 1., 1.)]),
        ("nx", [c(0., 0., 0.), c(0., 0., 1.), c(0., 1., 1.), c(0., 1., 0.)]),
        ("py", [c(0., 1., 1.), c(1., 1., 1.), c(1., 1., 0.), c(0., 1., 0.)]),
        ("ny", [c(0., 0., 0.), c(1., 0., 0.), c(1., 0., 1.), c(0., 0., 1.)]),
        ("pz", [c(0., 0., 1.), c(1., 0., 1.), c(1., 1., 1.), c(0., 1., 1.)]),
        ("nz", [c(1., 0., 0.), c(0., 0., 0.), c(0., 1., 0.), c(1., 1., 0.)]),
    ];
    for (name, quad) in faces {
        b.object(name).quad(quad, [180, 180, 180]);
    }
    let cube = b.build("faces").unwrap();
    let grid = build_view_grid(&compute_aabb(&cube).unwrap()).unwrap();
    let mut seen = [false; 6];
    for pose in &grid.poses {
        let view = render_view(&cube, pose);
        for (k, &px) in view.visible_pixels().iter().enumerate() {
            if px > 0 {
                seen[k] = true;
                if k == 3 {
                    assert!(pose.alpha < 0.0, "bottom face visible from alpha {}", pose.alpha);
                }
            }
        }
    }
    assert_eq!(seen, [true; 6]);
}

#[test]
fn identical_inputs_render_identical_bytes() {
    let mesh = two_objects();
    let grid = build_view_grid(&compute_aabb(&mesh).unwrap()).unwrap();
    let a = render_view(&mesh, &grid.poses[3]);
    let b = render_view(&mesh, &grid.poses[3]);
    assert_eq!(a, b);
    assert_eq!(a.png_bytes(), b.png_bytes());
}
