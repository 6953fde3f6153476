//! Procedural test scenes with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assets::{MeshBuilder, MeshModel};
use crate::geometry::Vec3;

const WOOD: [u8; 3] = [120, 80, 40];
const DARK: [u8; 3] = [25, 25, 30];
const STEEL: [u8; 3] = [150, 150, 155];

/// A counting scene and its answer.
#[derive(Debug, Clone)]
pub struct CountingScene {
    pub mesh: MeshModel,
    pub target: String,
    pub count: usize,
    pub question: String,
}

pub const COUNTING_TARGETS: &[&str] = &["mug", "bottle", "book", "bowl"];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn legs(b: &mut MeshBuilder, half_x: f64, half_z: f64, height: f64, t: f64, color: [u8; 3]) {
    for (sx, sz) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
        let (x, z) = (sx * (half_x - t), sz * (half_z - t));
        b.cuboid(Vec3::new(x - t, 0.0, z - t), Vec3::new(x + t, height, z + t), color);
    }
}

/// A desk with two displays, a keyboard and a lamp; `seed` jitters sizes and
/// placement.
pub fn desk_scene(seed: u64) -> MeshModel {
    let mut r = rng(seed);
    let half_x = 0.8 + r.random_range(-0.05..0.05);
    let half_z = 0.4 + r.random_range(-0.03..0.03);
    let top = 0.74 + r.random_range(-0.02..0.02);
    let mut b = MeshBuilder::new();
    b.object("desk");
    b.cuboid(Vec3::new(-half_x, top - 0.04, -half_z), Vec3::new(half_x, top, half_z), WOOD);
    legs(&mut b, half_x, half_z, top - 0.04, 0.03, WOOD);

    for (k, side) in [-1.0, 1.0].into_iter().enumerate() {
        let x = side * (0.33 + r.random_range(-0.03..0.03));
        let z = -0.2 + r.random_range(-0.03..0.03);
        let (w, h) = (0.25 + r.random_range(-0.02..0.02), 0.17 + r.random_range(-0.01..0.01));
        let lift = 0.12;
        b.object(&format!("display.{:03}", k + 1));
        b.cuboid(Vec3::new(x - 0.1, top, z - 0.07), Vec3::new(x + 0.1, top + 0.015, z + 0.07), DARK);
        b.cuboid(Vec3::new(x - 0.02, top, z - 0.01), Vec3::new(x + 0.02, top + lift, z + 0.01), DARK);
        b.cuboid(Vec3::new(x - w, top + lift, z + 0.01), Vec3::new(x + w, top + lift + 2.0 * h, z + 0.04), DARK);
    }

    let kz = 0.15 + r.random_range(-0.03..0.03);
    b.object("keyboard");
    b.cuboid(Vec3::new(-0.22, top, kz - 0.07), Vec3::new(0.22, top + 0.02, kz + 0.07), STEEL);

    let lx = half_x - 0.12;
    let lz = -half_z + 0.12;
    b.object("lamp");
    b.cylinder(Vec3::new(lx, top, lz), 0.07, 0.02, 16, [200, 180, 40]);
    b.cylinder(Vec3::new(lx, top + 0.02, lz), 0.012, 0.35, 8, [200, 180, 40]);
    b.sphere(Vec3::new(lx, top + 0.4, lz), 0.06, 12, [240, 220, 60]);
    b.build(&format!("desk-{seed}")).expect("desk scene is valid")
}

fn place_item(b: &mut MeshBuilder, kind: &str, at: Vec3, r: &mut ChaCha8Rng) {
    let jitter = |r: &mut ChaCha8Rng| 1.0 + r.random_range(-0.1..0.1);
    match kind {
        "mug" => {
            let s = jitter(r);
            b.cylinder(at, 0.05 * s, 0.1 * s, 16, [200, 40, 40]);
            b.cuboid(
                at + Vec3::new(0.045 * s, 0.025 * s, -0.01),
                at + Vec3::new(0.075 * s, 0.075 * s, 0.01),
                [200, 40, 40],
            );
        }
        "bottle" => {
            let s = jitter(r);
            b.cylinder(at, 0.04 * s, 0.18 * s, 16, [40, 160, 60]);
            b.cylinder(at + Vec3::new(0.0, 0.18 * s, 0.0), 0.015 * s, 0.06 * s, 8, [40, 160, 60]);
        }
        "book" => {
            let s = jitter(r);
            b.cuboid(
                at + Vec3::new(-0.08 * s, 0.0, -0.06 * s),
                at + Vec3::new(0.08 * s, 0.04 * s, 0.06 * s),
                [40, 60, 190],
            );
        }
        "bowl" => {
            let s = jitter(r);
            b.cylinder(at, 0.07 * s, 0.05 * s, 20, [230, 230, 230]);
        }
        "apple" => {
            b.sphere(at + Vec3::new(0.0, 0.04, 0.0), 0.04 * jitter(r), 10, [180, 30, 30]);
        }
        "phone" => {
            b.cuboid(at + Vec3::new(-0.04, 0.0, -0.07), at + Vec3::new(0.04, 0.01, 0.07), DARK);
        }
        other => panic!("unknown fixture item {other}"),
    }
}

/// A table with `1..=4` instances of a target object and a few distractors,
/// all on the tabletop so every instance is seen unobstructed from above.
pub fn counting_scene(seed: u64) -> CountingScene {
    let mut r = rng(seed ^ 0x5eed_c0de);
    let count = r.random_range(1..=4usize);
    let target = COUNTING_TARGETS[r.random_range(0..COUNTING_TARGETS.len())];
    let mut distractors: Vec<&str> = ["mug", "bottle", "book", "bowl", "apple", "phone"]
        .into_iter()
        .filter(|d| *d != target)
        .collect();
    let n_distractors = r.random_range(1..=2usize);

    let (half_x, half_z, top) = (0.75, 0.5, 0.72);
    let mut b = MeshBuilder::new();
    b.object("table");
    b.cuboid(Vec3::new(-half_x, top - 0.04, -half_z), Vec3::new(half_x, top, half_z), WOOD);
    legs(&mut b, half_x, half_z, top - 0.04, 0.035, WOOD);

    // Items occupy distinct cells of a 3 x 2 grid over the tabletop center.
    let mut cells: Vec<(f64, f64)> =
        (0..6).map(|i| (-0.3 + 0.3 * (i % 3) as f64, -0.15 + 0.3 * (i / 3) as f64)).collect();
    for i in (1..cells.len()).rev() {
        let j = r.random_range(0..=i);
        cells.swap(i, j);
    }
    let mut items: Vec<&str> = vec![target; count];
    for _ in 0..n_distractors {
        let k = r.random_range(0..distractors.len());
        items.push(distractors.remove(k));
    }
    for (k, (item, (cx, cz))) in items.iter().zip(cells).enumerate() {
        let at = Vec3::new(cx + r.random_range(-0.04..0.04), top, cz + r.random_range(-0.04..0.04));
        b.object(&format!("{item}.{:03}", k + 1));
        place_item(&mut b, item, at, &mut r);
    }
    let plural = crate::text::pluralize(target);
    CountingScene {
        mesh: b.build(&format!("counting-{seed}")).expect("counting scene is valid"),
        target: target.to_string(),
        count,
        question: format!("how many {plural} are on the table?"),
    }
}

pub fn unit_cube() -> MeshModel {
    let mut b = MeshBuilder::new();
    b.object("cube").cuboid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0), [200, 120, 40]);
    b.build("cube").expect("cube is valid")
}

pub fn sphere() -> MeshModel {
    let mut b = MeshBuilder::new();
    b.object("ball").sphere(Vec3::ZERO, 1.0, 24, [40, 90, 200]);
    b.build("sphere").expect("sphere is valid")
}

/// Named scenes for the command line: `desk:<seed>`, `counting:<seed>`,
/// `cube`, `sphere`.
pub fn by_name(name: &str) -> Option<MeshModel> {
    let (kind, seed) = match name.split_once(':') {
        Some((k, s)) => (k, Some(s.parse::<u64>().ok()?)),
        None => (name, None),
    };
    match (kind, seed) {
        ("desk", s) => Some(desk_scene(s.unwrap_or(0))),
        ("counting", s) => Some(counting_scene(s.unwrap_or(0)).mesh),
        ("cube", None) => Some(unit_cube()),
        ("sphere", None) => Some(sphere()),
        _ => None,
    }
}
