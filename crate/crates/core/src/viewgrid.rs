//! The 42-pose sampling lattice: 14 directions at each of 3 viewing distances.
//!
//! Directions are the top-down pole, three latitude rings at +30°, 0° and
//! -30° with stations at azimuths 0°, 90°, 180° and 270°, and the bottom-up
//! pole. Pose index = radius index * 14 + direction index.

use serde::{Deserialize, Serialize};

use crate::assets::{Aabb, AssetError};
use crate::renderer::CameraPose;

pub const DIRECTION_COUNT: usize = 14;
pub const RADIUS_COUNT: usize = 3;
pub const POSE_COUNT: usize = DIRECTION_COUNT * RADIUS_COUNT;

pub const RING_ELEVATIONS: [f64; 3] = [30.0, 0.0, -30.0];
pub const RING_AZIMUTHS: [f64; 4] = [0.0, 90.0, 180.0, 270.0];

/// Close, medium and far distances for a model with bounding-box diagonal `d`.
pub fn sample_radii(d: f64) -> Result<[f64; 3], AssetError> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(AssetError::DegenerateExtent);
    }
    Ok([0.5 * d + 0.1, 0.5 * d + 0.2, 0.5 * d + 0.5])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Top,
    Ring { ring: usize, station: usize },
    Bottom,
}

impl Direction {
    pub fn all() -> [Direction; DIRECTION_COUNT] {
        let mut out = [Direction::Top; DIRECTION_COUNT];
        for ring in 0..3 {
            for station in 0..4 {
                out[1 + ring * 4 + station] = Direction::Ring { ring, station };
            }
        }
        out[DIRECTION_COUNT - 1] = Direction::Bottom;
        out
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Top => 0,
            Direction::Ring { ring, station } => 1 + ring * 4 + station,
            Direction::Bottom => DIRECTION_COUNT - 1,
        }
    }

    /// (alpha, beta) in degrees.
    pub fn angles(self) -> (f64, f64) {
        match self {
            Direction::Top => (90.0, 0.0),
            Direction::Ring { ring, station } => (RING_ELEVATIONS[ring], RING_AZIMUTHS[station]),
            Direction::Bottom => (-90.0, 0.0),
        }
    }

    /// Same-radius neighbors: azimuth steps (wrapping) and elevation steps,
    /// where the poles border every station of the adjacent ring.
    fn neighbors(self) -> Vec<Direction> {
        match self {
            Direction::Top => (0..4).map(|station| Direction::Ring { ring: 0, station }).collect(),
            Direction::Bottom => (0..4).map(|station| Direction::Ring { ring: 2, station }).collect(),
            Direction::Ring { ring, station } => {
                let mut out = vec![
                    Direction::Ring { ring, station: (station + 3) % 4 },
                    Direction::Ring { ring, station: (station + 1) % 4 },
                ];
                out.push(if ring == 0 { Direction::Top } else { Direction::Ring { ring: ring - 1, station } });
                out.push(if ring == 2 { Direction::Bottom } else { Direction::Ring { ring: ring + 1, station } });
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeNode {
    pub direction: Direction,
    pub direction_index: usize,
    pub radius_index: usize,
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewGrid {
    pub poses: Vec<CameraPose>,
    pub radii: [f64; 3],
    pub directions: Vec<(f64, f64)>,
    pub lattice: Vec<LatticeNode>,
}

pub fn pose_index(direction_index: usize, radius_index: usize) -> usize {
    radius_index * DIRECTION_COUNT + direction_index
}

pub fn build_view_grid(aabb: &Aabb) -> Result<ViewGrid, AssetError> {
    let radii = sample_radii(aabb.diagonal())?;
    let target = aabb.center();
    let directions = Direction::all();
    let mut poses = Vec::with_capacity(POSE_COUNT);
    let mut lattice = Vec::with_capacity(POSE_COUNT);
    for (ri, &r) in radii.iter().enumerate() {
        for dir in directions {
            let (alpha, beta) = dir.angles();
            poses.push(CameraPose { target, alpha, beta, r });
            let mut neighbors: Vec<usize> = dir.neighbors().into_iter().map(|n| pose_index(n.index(), ri)).collect();
            if ri > 0 {
                neighbors.push(pose_index(dir.index(), ri - 1));
            }
            if ri + 1 < RADIUS_COUNT {
                neighbors.push(pose_index(dir.index(), ri + 1));
            }
            lattice.push(LatticeNode { direction: dir, direction_index: dir.index(), radius_index: ri, neighbors });
        }
    }
    Ok(ViewGrid { poses, radii, directions: directions.iter().map(|d| d.angles()).collect(), lattice })
}

impl ViewGrid {
    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.lattice[index].neighbors
    }

    /// Camera below the model's center, looking up.
    pub fn is_bottom_up(&self, index: usize) -> bool {
        self.poses[index].alpha < 0.0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn grid() -> ViewGrid {
        build_view_grid(&Aabb { min: Vec3::new(-1.0, -0.5, -0.5), max: Vec3::new(1.0, 0.5, 0.5) }).unwrap()
    }

    fn find(g: &ViewGrid, alpha: f64, beta: f64, ri: usize) -> usize {
        (0..POSE_COUNT)
            .find(|&i| g.poses[i].alpha == alpha && g.poses[i].beta == beta && g.lattice[i].radius_index == ri)
            .unwrap()
    }

    #[test]
    fn radii_follow_the_distance_formula() {
        let r = sample_radii(2.0).unwrap();
        for (got, want) in r.iter().zip([1.1, 1.2, 1.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        let r = sample_radii(1.0).unwrap();
        for (got, want) in r.iter().zip([0.6, 0.7, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(matches!(sample_radii(0.0), Err(AssetError::DegenerateExtent)));
        assert!(matches!(sample_radii(-1.0), Err(AssetError::DegenerateExtent)));
    }

    #[test]
    fn grid_has_42_distinct_poses() {
        let g = grid();
        assert_eq!(g.poses.len(), 42);
        for i in 0..42 {
            for j in 0..i {
                assert_ne!(g.poses[i], g.poses[j]);
            }
            let d = (g.poses[i].eye() - g.poses[i].target).length();
            assert!((d - g.poses[i].r).abs() < 1e-12);
        }
    }

    #[test]
    fn equatorial_pose_has_five_neighbors() {
        let g = grid();
        let i = find(&g, 0.0, 90.0, 0);
        let mut got = g.neighbors(i).to_vec();
        got.sort();
        let mut want = vec![
            find(&g, 0.0, 0.0, 0),
            find(&g, 0.0, 180.0, 0),
            find(&g, 30.0, 90.0, 0),
            find(&g, -30.0, 90.0, 0),
            find(&g, 0.0, 90.0, 1),
        ];
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn middle_radius_ring_pose_has_six_neighbors() {
        let g = grid();
        assert_eq!(g.neighbors(find(&g, 30.0, 0.0, 1)).len(), 6);
        // Poles: four ring stations plus radius neighbors.
        assert_eq!(g.neighbors(find(&g, 90.0, 0.0, 1)).len(), 6);
        assert_eq!(g.neighbors(find(&g, -90.0, 0.0, 2)).len(), 5);
    }

    #[test]
    fn neighbor_relation_is_symmetric_and_irreflexive() {
        let g = grid();
        for i in 0..POSE_COUNT {
            for &j in g.neighbors(i) {
                assert_ne!(i, j);
                assert!(g.neighbors(j).contains(&i), "{i} -> {j}");
            }
        }
    }

    #[test]
    fn every_axis_normal_faces_some_direction() {
        let g = grid();
        let normals = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        for n in normals {
            assert!(g.poses[..DIRECTION_COUNT].iter().any(|p| p.direction().dot(n) > 0.0));
        }
    }

    #[test]
    fn scaling_the_box_scales_only_the_radius_offset() {
        let base = Aabb { min: Vec3::new(-1.0, -0.5, -0.5), max: Vec3::new(1.0, 0.5, 0.5) };
        let k = 3.0;
        let scaled = Aabb { min: base.min * k, max: base.max * k };
        let (g, gs) = (build_view_grid(&base).unwrap(), build_view_grid(&scaled).unwrap());
        let d = base.diagonal();
        for (i, c) in [0.1, 0.2, 0.5].iter().enumerate() {
            assert!((gs.radii[i] - (0.5 * k * d + c)).abs() < 1e-12);
        }
        assert_eq!(g.directions, gs.directions);
    }

    #[test]
    fn grid_json_round_trips() {
        let g = grid();
        let back: ViewGrid = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }
}
