//! Deterministic software rasterizer.
//!
//! Produces an RGB image, a view-axis depth map and an object-id map for a
//! camera orbiting the model. Perspective projection with a 45° vertical
//! field of view, near plane at r/100 and far plane at 10r. No anti-aliasing
//! and no lighting: fragment color is the interpolated vertex color, so the
//! id map stays exact.

use std::collections::HashSet;
use std::io::Cursor;
use std::path::Path;
use std::sync::Arc;

use image::{ImageBuffer, ImageFormat, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::assets::{MeshModel, Rgb};
use crate::geometry::{sin_cos_deg, Vec3};

pub const IMAGE_SIZE: usize = 512;
pub const FOV_Y_DEG: f64 = 45.0;
pub const BACKGROUND_RGB: Rgb = [255, 255, 255];
pub const BACKGROUND_ID: i16 = -1;

/// Camera looking at `target` from latitude `alpha` and longitude `beta`
/// (degrees) at distance `r`. World up is +Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub target: Vec3,
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
}

/// Orthonormal camera frame: `back` points from the target to the eye.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub eye: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub back: Vec3,
}

impl CameraPose {
    /// Unit vector from the target towards the eye.
    pub fn direction(&self) -> Vec3 {
        let (sa, ca) = sin_cos_deg(self.alpha);
        let (sb, cb) = sin_cos_deg(self.beta);
        Vec3::new(ca * sb, sa, ca * cb)
    }

    pub fn eye(&self) -> Vec3 {
        self.target + self.direction() * self.r
    }

    pub fn frame(&self) -> CameraFrame {
        let back = self.direction();
        let (sb, cb) = sin_cos_deg(self.beta);
        let (_, ca) = sin_cos_deg(self.alpha);
        // Looking straight up or down, +Y is parallel to the view axis; the
        // image's up then points away from the beta = 0 side.
        let right = if ca == 0.0 {
            Vec3::new(-sb, 0.0, -cb).cross(back).normalized()
        } else {
            Vec3::new(cb, 0.0, -sb)
        };
        let up = back.cross(right);
        CameraFrame { eye: self.eye(), right, up, back }
    }

    pub fn near(&self) -> f64 {
        self.r / 100.0
    }

    pub fn far(&self) -> f64 {
        self.r * 10.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub fov_y_deg: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { width: IMAGE_SIZE, height: IMAGE_SIZE, fov_y_deg: FOV_Y_DEG }
    }
}

/// One rendered camera view and its per-pixel ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledView {
    pub index: usize,
    pub pose: CameraPose,
    pub width: usize,
    pub height: usize,
    /// Row-major RGB8.
    pub rgb: Vec<u8>,
    /// View-axis depth; `f32::INFINITY` where nothing was hit.
    pub depth: Vec<f32>,
    /// Object id of the nearest surface; -1 for background.
    pub object_ids: Vec<i16>,
    pub object_names: Arc<Vec<String>>,
    /// Per object, pixels its triangles cover inside the frame when nothing
    /// else is drawn. Visible pixels over this is the unoccluded share.
    pub coverage: Vec<u32>,
}

impl SampledView {
    pub fn with_index(mut self, index: usize) -> Self {
        self.index = index;
        self
    }

    pub fn object_count(&self) -> usize {
        self.object_names.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn rgb_image(&self) -> RgbImage {
        ImageBuffer::from_raw(self.width as u32, self.height as u32, self.rgb.clone())
            .expect("buffer matches dimensions")
    }

    pub fn png_bytes(&self) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.rgb_image()
            .write_to(&mut out, ImageFormat::Png)
            .expect("in-memory PNG encoding");
        out.into_inner()
    }

    pub fn save_png(&self, path: &Path) -> image::ImageResult<()> {
        self.rgb_image().save_with_format(path, ImageFormat::Png)
    }

    /// Depth normalized by the far plane into 16 bits; background is 65535.
    pub fn depth_image(&self) -> ImageBuffer<Luma<u16>, Vec<u16>> {
        let far = self.pose.far() as f32;
        let data = self
            .depth
            .iter()
            .map(|&d| {
                if d.is_finite() {
                    ((d / far).clamp(0.0, 1.0) * 65534.0).round() as u16
                } else {
                    u16::MAX
                }
            })
            .collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, data).expect("dimensions")
    }

    pub fn save_depth_png(&self, path: &Path) -> image::ImageResult<()> {
        self.depth_image().save_with_format(path, ImageFormat::Png)
    }

    /// Visible pixel count per object.
    pub fn visible_pixels(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.object_count()];
        for &id in &self.object_ids {
            if id >= 0 {
                if let Some(c) = counts.get_mut(id as usize) {
                    *c += 1;
                }
            }
        }
        counts
    }

    /// Visible share of each object's unoccluded in-frame footprint.
    pub fn visibility_ratios(&self) -> Vec<f64> {
        self.visible_pixels()
            .iter()
            .zip(&self.coverage)
            .map(|(&v, &c)| if c == 0 { 0.0 } else { v as f64 / c as f64 })
            .collect()
    }

    /// Pixel bounds `(x0, y0, x1, y1)`, end-exclusive, of each object's visible pixels.
    pub fn object_bounds(&self) -> Vec<Option<PixelBox>> {
        let mut bounds: Vec<Option<PixelBox>> = vec![None; self.object_count()];
        for (i, &id) in self.object_ids.iter().enumerate() {
            if id < 0 {
                continue;
            }
            let (x, y) = ((i % self.width) as u32, (i / self.width) as u32);
            if let Some(slot) = bounds.get_mut(id as usize) {
                *slot = Some(match *slot {
                    None => PixelBox { x0: x, y0: y, x1: x + 1, y1: y + 1 },
                    Some(b) => b.including(x, y),
                });
            }
        }
        bounds
    }

    /// Pixel bounds of every non-background pixel.
    pub fn silhouette_bounds(&self) -> Option<PixelBox> {
        self.object_bounds().into_iter().flatten().reduce(|a, b| a.union(&b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelBox {
    fn including(self, x: u32, y: u32) -> Self {
        PixelBox { x0: self.x0.min(x), y0: self.y0.min(y), x1: self.x1.max(x + 1), y1: self.y1.max(y + 1) }
    }

    pub fn union(&self, o: &PixelBox) -> PixelBox {
        PixelBox { x0: self.x0.min(o.x0), y0: self.y0.min(o.y0), x1: self.x1.max(o.x1), y1: self.y1.max(o.y1) }
    }
}

/// Fraction of non-background pixels showing each object; zeros when empty.
pub fn visible_fractions(view: &SampledView, object_count: usize) -> Vec<f64> {
    let mut counts = vec![0u64; object_count];
    let mut total = 0u64;
    for &id in &view.object_ids {
        if id >= 0 {
            total += 1;
            if let Some(c) = counts.get_mut(id as usize) {
                *c += 1;
            }
        }
    }
    if total == 0 {
        return vec![0.0; object_count];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Quantization applied to depth (relative to the viewing distance) before counting.
pub const DEPTH_QUANTUM: f64 = 1e-3;

/// Number of distinct depth values at three decimals of depth / r.
pub fn unique_depth(view: &SampledView) -> usize {
    let r = view.pose.r;
    view.depth
        .iter()
        .filter(|d| d.is_finite())
        .map(|&d| (d as f64 / r / DEPTH_QUANTUM).round() as i64)
        .collect::<HashSet<_>>()
        .len()
}

pub fn render_view(mesh: &MeshModel, pose: &CameraPose) -> SampledView {
    render_view_with(mesh, pose, &RenderSettings::default())
}

#[derive(Clone, Copy)]
struct ClipVertex {
    view: Vec3, // (x, y, depth) in camera space
    color: [f64; 3],
}

#[derive(Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_depth: f64,
    color_over_depth: [f64; 3],
}

struct Projector {
    frame: CameraFrame,
    focal: f64,
    width: f64,
    height: f64,
    near: f64,
    far: f64,
}

impl Projector {
    fn new(pose: &CameraPose, settings: &RenderSettings) -> Self {
        Self {
            frame: pose.frame(),
            focal: 1.0 / (settings.fov_y_deg.to_radians() / 2.0).tan(),
            width: settings.width as f64,
            height: settings.height as f64,
            near: pose.near(),
            far: pose.far(),
        }
    }

    fn to_camera(&self, p: Vec3) -> Vec3 {
        let rel = p - self.frame.eye;
        Vec3::new(self.frame.right.dot(rel), self.frame.up.dot(rel), -self.frame.back.dot(rel))
    }

    fn to_screen(&self, v: &ClipVertex) -> ScreenVertex {
        let depth = v.view.z;
        let aspect = self.width / self.height;
        let ndc_x = self.focal * v.view.x / (depth * aspect);
        let ndc_y = self.focal * v.view.y / depth;
        ScreenVertex {
            x: (ndc_x + 1.0) * 0.5 * self.width,
            y: (1.0 - ndc_y) * 0.5 * self.height,
            inv_depth: 1.0 / depth,
            color_over_depth: v.color.map(|c| c / depth),
        }
    }

    /// Clips a camera-space triangle against the near plane and fans the result.
    fn clip(&self, tri: [ClipVertex; 3]) -> Vec<[ScreenVertex; 3]> {
        let inside = |v: &ClipVertex| v.view.z >= self.near;
        if tri.iter().all(inside) {
            return vec![[self.to_screen(&tri[0]), self.to_screen(&tri[1]), self.to_screen(&tri[2])]];
        }
        let mut poly: Vec<ClipVertex> = Vec::with_capacity(4);
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            if inside(&a) {
                poly.push(a);
            }
            if inside(&a) != inside(&b) {
                let t = (self.near - a.view.z) / (b.view.z - a.view.z);
                poly.push(ClipVertex {
                    view: a.view + (b.view - a.view) * t,
                    color: [0, 1, 2].map(|k| a.color[k] + (b.color[k] - a.color[k]) * t),
                });
            }
        }
        if poly.len() < 3 {
            return Vec::new();
        }
        let screen: Vec<ScreenVertex> = poly.iter().map(|v| self.to_screen(v)).collect();
        (1..screen.len() - 1).map(|k| [screen[0], screen[k], screen[k + 1]]).collect()
    }
}

fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Calls `fragment(pixel_index, weights)` for every pixel center inside the
/// triangle, with barycentric weights in screen space.
fn rasterize(tri: &[ScreenVertex; 3], width: usize, height: usize, mut fragment: impl FnMut(usize, [f64; 3])) {
    let [a, b, c] = tri;
    let area = edge(a.x, a.y, b.x, b.y, c.x, c.y);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let min_x = a.x.min(b.x).min(c.x).floor().max(0.0);
    let max_x = a.x.max(b.x).max(c.x).ceil().min(width as f64);
    let min_y = a.y.min(b.y).min(c.y).floor().max(0.0);
    let max_y = a.y.max(b.y).max(c.y).ceil().min(height as f64);
    if min_x >= max_x || min_y >= max_y {
        return;
    }
    for py in min_y as usize..max_y as usize {
        let cy = py as f64 + 0.5;
        for px in min_x as usize..max_x as usize {
            let cx = px as f64 + 0.5;
            let w0 = edge(b.x, b.y, c.x, c.y, cx, cy) / area;
            let w1 = edge(c.x, c.y, a.x, a.y, cx, cy) / area;
            let w2 = edge(a.x, a.y, b.x, b.y, cx, cy) / area;
            if w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0 {
                fragment(py * width + px, [w0, w1, w2]);
            }
        }
    }
}

fn interpolated_depth(tri: &[ScreenVertex; 3], w: [f64; 3]) -> f64 {
    1.0 / (w[0] * tri[0].inv_depth + w[1] * tri[1].inv_depth + w[2] * tri[2].inv_depth)
}

pub fn render_view_with(mesh: &MeshModel, pose: &CameraPose, settings: &RenderSettings) -> SampledView {
    let names = Arc::new(mesh.object_names().to_vec());
    render_with_names(mesh, pose, settings, names)
}

fn render_with_names(
    mesh: &MeshModel,
    pose: &CameraPose,
    settings: &RenderSettings,
    object_names: Arc<Vec<String>>,
) -> SampledView {
    let (width, height) = (settings.width, settings.height);
    let n = width * height;
    let projector = Projector::new(pose, settings);

    let screen_tris: Vec<(u16, Vec<[ScreenVertex; 3]>)> = mesh
        .triangles()
        .iter()
        .zip(mesh.colors())
        .zip(mesh.object_ids())
        .map(|((tri, colors), &oid)| {
            let clip = [0, 1, 2].map(|k| ClipVertex {
                view: projector.to_camera(tri[k]),
                color: colors[k].map(f64::from),
            });
            (oid, projector.clip(clip))
        })
        .collect();

    let mut depth_buf = vec![f64::INFINITY; n];
    let mut rgb = vec![0u8; n * 3];
    for px in rgb.chunks_exact_mut(3) {
        px.copy_from_slice(&BACKGROUND_RGB);
    }
    let mut ids = vec![BACKGROUND_ID; n];

    for (oid, pieces) in &screen_tris {
        for tri in pieces {
            rasterize(tri, width, height, |idx, w| {
                let inv = w[0] * tri[0].inv_depth + w[1] * tri[1].inv_depth + w[2] * tri[2].inv_depth;
                let depth = 1.0 / inv;
                if depth > projector.far || depth >= depth_buf[idx] {
                    return;
                }
                depth_buf[idx] = depth;
                ids[idx] = *oid as i16;
                for k in 0..3 {
                    let c = (w[0] * tri[0].color_over_depth[k]
                        + w[1] * tri[1].color_over_depth[k]
                        + w[2] * tri[2].color_over_depth[k])
                        * depth;
                    rgb[idx * 3 + k] = c.round().clamp(0.0, 255.0) as u8;
                }
            });
        }
    }

    // Unoccluded footprint per object: stamp each pixel once per object.
    let mut coverage = vec![0u32; object_names.len()];
    let mut stamp = vec![u16::MAX; n];
    let mut by_object: Vec<Vec<usize>> = vec![Vec::new(); object_names.len()];
    for (i, (oid, _)) in screen_tris.iter().enumerate() {
        by_object[*oid as usize].push(i);
    }
    for (oid, tris) in by_object.iter().enumerate() {
        for &t in tris {
            for tri in &screen_tris[t].1 {
                rasterize(tri, width, height, |idx, w| {
                    if stamp[idx] != oid as u16 && interpolated_depth(tri, w) <= projector.far {
                        stamp[idx] = oid as u16;
                        coverage[oid] += 1;
                    }
                });
            }
        }
    }

    SampledView {
        index: 0,
        pose: *pose,
        width,
        height,
        rgb,
        depth: depth_buf.iter().map(|&d| d as f32).collect(),
        object_ids: ids,
        object_names,
        coverage,
    }
}

/// Renders every pose of a grid concurrently; results are ordered by pose index.
pub fn render_grid(mesh: &MeshModel, poses: &[CameraPose]) -> Vec<SampledView> {
    use rayon::prelude::*;
    let settings = RenderSettings::default();
    let names = Arc::new(mesh.object_names().to_vec());
    poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| render_with_names(mesh, pose, &settings, names.clone()).with_index(i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::MeshBuilder;

    fn small() -> RenderSettings {
        RenderSettings { width: 64, height: 64, fov_y_deg: 45.0 }
    }

    fn front(target: Vec3, r: f64) -> CameraPose {
        CameraPose { target, alpha: 0.0, beta: 0.0, r }
    }

    #[test]
    fn sphere_depth_minimum_at_center() {
        let mut b = MeshBuilder::new();
        b.object("ball").sphere(Vec3::ZERO, 1.0, 24, [200, 0, 0]);
        let mesh = b.build("ball").unwrap();
        let view = render_view(&mesh, &front(Vec3::ZERO, 4.0));
        let (w, h) = (view.width, view.height);
        let min = view.depth.iter().cloned().fold(f32::INFINITY, f32::min);
        let center_block: Vec<f32> = [(w / 2 - 1, h / 2 - 1), (w / 2, h / 2 - 1), (w / 2 - 1, h / 2), (w / 2, h / 2)]
            .iter()
            .map(|&(x, y)| view.depth[y * w + x])
            .collect();
        // Tessellation puts the exact minimum within a pixel of the center.
        assert!(center_block.iter().any(|&d| (d - min).abs() < 1e-3), "{center_block:?} vs {min}");
        assert!((min - 3.0).abs() < 0.01);
    }

    #[test]
    fn face_on_cube_silhouette_is_a_square() {
        let mut b = MeshBuilder::new();
        b.object("cube").cuboid(Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5), [10, 200, 10]);
        let mesh = b.build("cube").unwrap();
        let view = render_view_with(&mesh, &front(Vec3::ZERO, 3.0), &small());
        let bounds = view.silhouette_bounds().unwrap();
        assert_eq!(bounds.x1 - bounds.x0, bounds.y1 - bounds.y0);
        let filled = view.object_ids.iter().filter(|&&i| i == 0).count() as u32;
        assert_eq!(filled, (bounds.x1 - bounds.x0) * (bounds.y1 - bounds.y0));
        // Front face at depth 2.5 is flat.
        assert_eq!(unique_depth(&view), 1);
    }

    #[test]
    fn nothing_in_view_gives_background() {
        let mut b = MeshBuilder::new();
        b.object("cube").cuboid(Vec3::new(10.0, 10.0, 10.0), Vec3::new(11.0, 11.0, 11.0), [0, 0, 0]);
        let mesh = b.build("far").unwrap();
        let view = render_view_with(&mesh, &front(Vec3::ZERO, 1.0), &small());
        assert!(view.object_ids.iter().all(|&i| i == BACKGROUND_ID));
        assert!(view.depth.iter().all(|d| d.is_infinite()));
        assert!(view.rgb.iter().all(|&c| c == 255));
        assert_eq!(visible_fractions(&view, 1), vec![0.0]);
        assert_eq!(unique_depth(&view), 0);
    }

    #[test]
    fn full_frame_object_fraction_is_one() {
        let mut b = MeshBuilder::new();
        b.object("wall").quad(
            [Vec3::new(-10.0, -10.0, 0.0), Vec3::new(10.0, -10.0, 0.0), Vec3::new(10.0, 10.0, 0.0), Vec3::new(-10.0, 10.0, 0.0)],
            [90, 90, 90],
        );
        let mesh = b.build("wall").unwrap();
        let view = render_view_with(&mesh, &front(Vec3::ZERO, 1.0), &small());
        assert_eq!(visible_fractions(&view, 1), vec![1.0]);
        assert_eq!(unique_depth(&view), 1);
    }

    #[test]
    fn near_plane_clipping_keeps_far_part() {
        // A floor strip that passes behind the camera.
        let mut b = MeshBuilder::new();
        b.object("strip").quad(
            [Vec3::new(-1.0, -0.5, -5.0), Vec3::new(1.0, -0.5, -5.0), Vec3::new(1.0, -0.5, 5.0), Vec3::new(-1.0, -0.5, 5.0)],
            [50, 50, 50],
        );
        let mesh = b.build("strip").unwrap();
        let view = render_view_with(&mesh, &front(Vec3::ZERO, 2.0), &small());
        let visible = view.object_ids.iter().filter(|&&i| i == 0).count();
        assert!(visible > 0);
        assert!(view.depth.iter().filter(|d| d.is_finite()).all(|&d| d as f64 >= 0.02 - 1e-6));
    }

    #[test]
    fn occluded_object_coverage_exceeds_visible_pixels() {
        let mut b = MeshBuilder::new();
        b.object("front").cuboid(Vec3::new(-0.5, -0.5, 0.5), Vec3::new(0.5, 0.5, 0.6), [255, 0, 0]);
        b.object("back").cuboid(Vec3::new(-0.3, -0.3, -0.5), Vec3::new(0.3, 0.3, -0.4), [0, 0, 255]);
        let mesh = b.build("pair").unwrap();
        let view = render_view_with(&mesh, &front(Vec3::ZERO, 3.0), &small());
        let visible = view.visible_pixels();
        assert_eq!(visible[1], 0);
        assert!(view.coverage[1] > 0);
        assert_eq!(view.visibility_ratios()[0], 1.0);
        assert_eq!(view.visibility_ratios()[1], 0.0);
    }

    #[test]
    fn depth_and_id_maps_agree_on_background() {
        let mut b = MeshBuilder::new();
        b.object("ball").sphere(Vec3::ZERO, 1.0, 8, [1, 2, 3]);
        let mesh = b.build("ball").unwrap();
        for beta in [0.0, 45.0, 200.0] {
            let pose = CameraPose { target: Vec3::ZERO, alpha: 30.0, beta, r: 2.5 };
            let view = render_view_with(&mesh, &pose, &small());
            for (d, id) in view.depth.iter().zip(&view.object_ids) {
                assert_eq!(d.is_finite(), *id >= 0);
            }
        }
    }

    #[test]
    fn camera_frames_are_orthonormal_including_poles() {
        for alpha in [-90.0, -30.0, 0.0, 30.0, 90.0] {
            for beta in [0.0, 90.0, 180.0, 270.0, 33.0] {
                let f = CameraPose { target: Vec3::ZERO, alpha, beta, r: 1.0 }.frame();
                for v in [f.right, f.up, f.back] {
                    assert!((v.length() - 1.0).abs() < 1e-12);
                }
                assert!(f.right.dot(f.up).abs() < 1e-12);
                assert!(f.right.dot(f.back).abs() < 1e-12);
                assert!(f.up.dot(f.back).abs() < 1e-12);
            }
        }
    }
}
