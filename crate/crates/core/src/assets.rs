//! Mesh loading (OBJ and binary glTF), object labelling and bounding geometry.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;

pub type Rgb = [u8; 3];

/// Color used for vertices that carry no color of their own.
pub const DEFAULT_COLOR: Rgb = [128, 128, 128];

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),
    #[error("degenerate extent: all vertices coincide")]
    DegenerateExtent,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshFormat {
    Obj,
    Glb,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "obj" => Some(MeshFormat::Obj),
            "glb" => Some(MeshFormat::Glb),
            _ => None,
        }
    }
}

/// A triangle soup with one small-integer object label per triangle.
///
/// Immutable once built; every constructor validates that the triangle list
/// is non-empty, all coordinates are finite and object ids are dense.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshModel {
    id: String,
    triangles: Vec<[Vec3; 3]>,
    colors: Vec<[Rgb; 3]>,
    object_ids: Vec<u16>,
    object_names: Vec<String>,
}

impl MeshModel {
    pub fn new(
        id: impl Into<String>,
        triangles: Vec<[Vec3; 3]>,
        colors: Option<Vec<[Rgb; 3]>>,
        object_ids: Vec<u16>,
        object_names: Vec<String>,
    ) -> Result<Self, AssetError> {
        if triangles.is_empty() {
            return Err(AssetError::Parse("mesh has no triangles".into()));
        }
        if object_ids.len() != triangles.len() {
            return Err(AssetError::Parse(format!(
                "{} object ids for {} triangles",
                object_ids.len(),
                triangles.len()
            )));
        }
        if triangles.iter().flatten().any(|v| !v.is_finite()) {
            return Err(AssetError::Parse("non-finite vertex coordinate".into()));
        }
        let colors = match colors {
            Some(c) if c.len() == triangles.len() => c,
            Some(c) => {
                return Err(AssetError::Parse(format!(
                    "{} color triples for {} triangles",
                    c.len(),
                    triangles.len()
                )))
            }
            None => vec![[DEFAULT_COLOR; 3]; triangles.len()],
        };
        let object_count = object_names.len();
        let mut seen = vec![false; object_count];
        for &id in &object_ids {
            match seen.get_mut(id as usize) {
                Some(s) => *s = true,
                None => {
                    return Err(AssetError::Parse(format!(
                        "object id {id} has no name entry ({object_count} objects)"
                    )))
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(AssetError::Parse("object ids are not dense".into()));
        }
        Ok(Self { id: id.into(), triangles, colors, object_ids, object_names })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.triangles
    }

    pub fn colors(&self) -> &[[Rgb; 3]] {
        &self.colors
    }

    pub fn object_ids(&self) -> &[u16] {
        &self.object_ids
    }

    pub fn object_names(&self) -> &[String] {
        &self.object_names
    }

    pub fn object_count(&self) -> usize {
        self.object_names.len()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Applies `f` to every vertex, keeping labels and colors.
    pub fn map_vertices(&self, f: impl Fn(Vec3) -> Vec3) -> Self {
        let triangles = self.triangles.iter().map(|t| [f(t[0]), f(t[1]), f(t[2])]).collect();
        Self { triangles, ..self.clone() }
    }

    pub fn zero_area_triangles(&self) -> usize {
        self.triangles
            .iter()
            .filter(|t| (t[1] - t[0]).cross(t[2] - t[0]).length() == 0.0)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).length()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }
}

pub fn compute_aabb(mesh: &MeshModel) -> Result<Aabb, AssetError> {
    let first = mesh.triangles[0][0];
    let (min, max) = mesh
        .triangles
        .iter()
        .flatten()
        .fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let aabb = Aabb { min, max };
    if aabb.diagonal() > 0.0 {
        Ok(aabb)
    } else {
        Err(AssetError::DegenerateExtent)
    }
}

/// Counts and warnings gathered while loading a mesh file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub triangles: usize,
    pub objects: usize,
    pub zero_area_triangles: usize,
    pub object_names: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<MeshModel, AssetError> {
    load_mesh_with_report(path, format).map(|(mesh, _)| mesh)
}

pub fn load_mesh_with_report(
    path: &Path,
    format: MeshFormat,
) -> Result<(MeshModel, LoadReport), AssetError> {
    let bytes = std::fs::read(path)?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model")
        .to_string();
    load_mesh_bytes(&id, &bytes, format)
}

pub fn load_mesh_bytes(
    id: &str,
    bytes: &[u8],
    format: MeshFormat,
) -> Result<(MeshModel, LoadReport), AssetError> {
    let mut warnings = Vec::new();
    let mesh = match format {
        MeshFormat::Obj => {
            let text = std::str::from_utf8(bytes)
                .map_err(|e| AssetError::Parse(format!("OBJ is not UTF-8: {e}")))?;
            parse_obj(id, text, &mut warnings)?
        }
        MeshFormat::Glb => parse_glb(id, bytes, &mut warnings)?,
    };
    let zero_area = mesh.zero_area_triangles();
    if zero_area > 0 {
        warnings.push(format!("{zero_area} zero-area triangle(s) kept"));
    }
    let report = LoadReport {
        triangles: mesh.triangles.len(),
        objects: mesh.object_count(),
        zero_area_triangles: zero_area,
        object_names: mesh.object_names.clone(),
        warnings,
    };
    Ok((mesh, report))
}

/// Incrementally assembles triangles into labelled parts.
#[derive(Debug, Default)]
pub struct MeshBuilder {
    triangles: Vec<[Vec3; 3]>,
    colors: Vec<[Rgb; 3]>,
    object_ids: Vec<u16>,
    object_names: Vec<String>,
    current: Option<u16>,
}

impl MeshBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts a new object; subsequent triangles are labelled with it.
    pub fn object(&mut self, name: impl Into<String>) -> &mut Self {
        self.object_names.push(name.into());
        self.current = Some((self.object_names.len() - 1) as u16);
        self
    }

    pub fn triangle(&mut self, tri: [Vec3; 3], colors: [Rgb; 3]) -> &mut Self {
        let id = match self.current {
            Some(id) => id,
            None => {
                self.object("object");
                self.object_names.len() as u16 - 1
            }
        };
        self.triangles.push(tri);
        self.colors.push(colors);
        self.object_ids.push(id);
        self
    }

    pub fn quad(&mut self, corners: [Vec3; 4], color: Rgb) -> &mut Self {
        self.triangle([corners[0], corners[1], corners[2]], [color; 3]);
        self.triangle([corners[0], corners[2], corners[3]], [color; 3])
    }

    /// Axis-aligned box with outward-facing counter-clockwise faces.
    pub fn cuboid(&mut self, min: Vec3, max: Vec3, color: Rgb) -> &mut Self {
        let c = |x: bool, y: bool, z: bool| {
            Vec3::new(
                if x { max.x } else { min.x },
                if y { max.y } else { min.y },
                if z { max.z } else { min.z },
            )
        };
        let (f, t) = (false, true);
        // +X, -X, +Y, -Y, +Z, -Z
        self.quad([c(t, f, t), c(t, f, f), c(t, t, f), c(t, t, t)], color);
        self.quad([c(f, f, f), c(f, f, t), c(f, t, t), c(f, t, f)], color);
        self.quad([c(f, t, t), c(t, t, t), c(t, t, f), c(f, t, f)], color);
        self.quad([c(f, f, f), c(t, f, f), c(t, f, t), c(f, f, t)], color);
        self.quad([c(f, f, t), c(t, f, t), c(t, t, t), c(f, t, t)], color);
        self.quad([c(t, f, f), c(f, f, f), c(f, t, f), c(t, t, f)], color)
    }

    /// UV sphere approximation.
    pub fn sphere(&mut self, center: Vec3, radius: f64, segments: usize, color: Rgb) -> &mut Self {
        let rings = segments.max(3);
        let sectors = (2 * segments).max(3);
        let point = |ring: usize, sector: usize| {
            let theta = std::f64::consts::PI * ring as f64 / rings as f64;
            let phi = 2.0 * std::f64::consts::PI * sector as f64 / sectors as f64;
            center
                + Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()) * radius
        };
        for ring in 0..rings {
            for sector in 0..sectors {
                let a = point(ring, sector);
                let b = point(ring + 1, sector);
                let c = point(ring + 1, sector + 1);
                let d = point(ring, sector + 1);
                if ring != 0 {
                    self.triangle([a, d, c], [color; 3]);
                }
                if ring + 1 != rings {
                    self.triangle([a, c, b], [color; 3]);
                }
            }
        }
        self
    }

    /// Closed vertical cylinder standing on `base`.
    pub fn cylinder(
        &mut self,
        base: Vec3,
        radius: f64,
        height: f64,
        segments: usize,
        color: Rgb,
    ) -> &mut Self {
        let n = segments.max(3);
        let rim = |k: usize, y: f64| {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            base + Vec3::new(radius * phi.cos(), y, radius * phi.sin())
        };
        let top = base + Vec3::new(0.0, height, 0.0);
        for k in 0..n {
            let (a0, a1) = (rim(k, 0.0), rim(k + 1, 0.0));
            let (b0, b1) = (rim(k, height), rim(k + 1, height));
            self.quad([a0, b0, b1, a1], color);
            self.triangle([top, b1, b0], [color; 3]);
            self.triangle([base, a0, a1], [color; 3]);
        }
        self
    }

    pub fn build(&self, id: impl Into<String>) -> Result<MeshModel, AssetError> {
        MeshModel::new(
            id,
            self.triangles.clone(),
            Some(self.colors.clone()),
            self.object_ids.clone(),
            self.object_names.clone(),
        )
    }
}

fn parse_obj(id: &str, text: &str, warnings: &mut Vec<String>) -> Result<MeshModel, AssetError> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut vertex_colors: Vec<Option<Rgb>> = Vec::new();
    let mut builder = MeshBuilder::new();
    // Part named by the latest o/g statement; it only becomes an object once
    // it receives a face.
    let mut pending_part: Option<String> = None;
    let mut ignored: HashMap<&str, usize> = HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap_or("");
        let err = |msg: &str| AssetError::Parse(format!("line {}: {msg}", lineno + 1));
        match keyword {
            "v" => {
                let nums = tokens
                    .map(|t| t.parse::<f64>().map_err(|_| err(&format!("bad number {t:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                match nums.len() {
                    3 | 4 => vertex_colors.push(None),
                    6 | 7 => {
                        let scale = if nums[3..6].iter().any(|&c| c > 1.0) { 1.0 } else { 255.0 };
                        let to_u8 = |c: f64| (c * scale).round().clamp(0.0, 255.0) as u8;
                        vertex_colors.push(Some([to_u8(nums[3]), to_u8(nums[4]), to_u8(nums[5])]));
                    }
                    _ => return Err(err("vertex needs 3 coordinates (optionally followed by RGB)")),
                }
                positions.push(Vec3::new(nums[0], nums[1], nums[2]));
            }
            "f" => {
                let corners = tokens
                    .map(|t| resolve_obj_index(t, positions.len()).ok_or_else(|| err(&format!("bad face index {t:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if corners.len() < 3 {
                    return Err(err("face with fewer than 3 vertices"));
                }
                if let Some(name) = pending_part.take() {
                    builder.object(name);
                }
                let color = |i: usize| vertex_colors[i].unwrap_or(DEFAULT_COLOR);
                for k in 1..corners.len() - 1 {
                    let (a, b, c) = (corners[0], corners[k], corners[k + 1]);
                    builder.triangle(
                        [positions[a], positions[b], positions[c]],
                        [color(a), color(b), color(c)],
                    );
                }
            }
            "o" | "g" => {
                let name = tokens.collect::<Vec<_>>().join(" ");
                pending_part = Some(if name.is_empty() { "object".to_string() } else { name });
            }
            "l" | "p" => return Err(AssetError::UnsupportedFeature(format!("OBJ {keyword} element (line {})", lineno + 1))),
            "curv" | "curv2" | "surf" | "cstype" => {
                return Err(AssetError::UnsupportedFeature(format!("OBJ free-form geometry ({keyword})")))
            }
            "vt" | "vn" | "s" | "usemtl" | "mtllib" | "vp" => {
                *ignored.entry(keyword).or_default() += 1;
            }
            other => {
                *ignored.entry(other).or_default() += 1;
            }
        }
    }
    if builder.triangles.is_empty() {
        return Err(AssetError::Parse("OBJ contains no faces".into()));
    }
    let mut ignored: Vec<_> = ignored.into_iter().collect();
    ignored.sort();
    for (keyword, count) in ignored {
        if keyword == "usemtl" || keyword == "mtllib" {
            warnings.push(format!("{count} '{keyword}' statement(s) ignored; materials are not read"));
        }
    }
    builder.build(id)
}

fn resolve_obj_index(token: &str, count: usize) -> Option<usize> {
    let idx: i64 = token.split('/').next()?.parse().ok()?;
    let resolved = if idx > 0 { idx - 1 } else { count as i64 + idx };
    (0..count as i64).contains(&resolved).then_some(resolved as usize)
}

type Mat4 = [[f64; 4]; 4];

fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    // Column-major, as glTF stores them.
    let mut out = [[0.0; 4]; 4];
    for (c, col) in out.iter_mut().enumerate() {
        for (r, cell) in col.iter_mut().enumerate() {
            *cell = (0..4).map(|k| a[k][r] * b[c][k]).sum();
        }
    }
    out
}

fn transform_point(m: &Mat4, p: [f32; 3]) -> Vec3 {
    let p = [p[0] as f64, p[1] as f64, p[2] as f64];
    let coord = |r: usize| m[0][r] * p[0] + m[1][r] * p[1] + m[2][r] * p[2] + m[3][r];
    Vec3::new(coord(0), coord(1), coord(2))
}

fn parse_glb(id: &str, bytes: &[u8], warnings: &mut Vec<String>) -> Result<MeshModel, AssetError> {
    if bytes.is_empty() {
        return Err(AssetError::Parse("empty GLB file".into()));
    }
    let gltf = gltf::Gltf::from_slice(bytes).map_err(|e| AssetError::Parse(e.to_string()))?;
    let doc = &gltf.document;
    if doc.animations().next().is_some() {
        return Err(AssetError::UnsupportedFeature("animations".into()));
    }
    if doc.skins().next().is_some() {
        return Err(AssetError::UnsupportedFeature("skinning".into()));
    }
    let texture_count = doc.textures().count();
    if texture_count > 0 {
        warnings.push(format!("{texture_count} texture(s) ignored"));
    }
    for buffer in doc.buffers() {
        if let gltf::buffer::Source::Uri(uri) = buffer.source() {
            return Err(AssetError::UnsupportedFeature(format!("external buffer {uri:?}")));
        }
    }
    let blob = gltf.blob.as_deref();
    let scene = doc
        .default_scene()
        .or_else(|| doc.scenes().next())
        .ok_or_else(|| AssetError::Parse("GLB has no scene".into()))?;

    let identity: Mat4 = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let mut stack: Vec<(gltf::Node, Mat4)> = scene.nodes().map(|n| (n, identity)).collect();
    stack.reverse();
    let mut builder = MeshBuilder::new();
    while let Some((node, parent)) = stack.pop() {
        let local = node.transform().matrix().map(|col| col.map(f64::from));
        let world = mat_mul(&parent, &local);
        if let Some(mesh) = node.mesh() {
            let name = node
                .name()
                .or_else(|| mesh.name())
                .map(str::to_string)
                .unwrap_or_else(|| format!("object {}", builder.object_names.len()));
            let mut started = false;
            for prim in mesh.primitives() {
                if prim.mode() != gltf::mesh::Mode::Triangles {
                    return Err(AssetError::UnsupportedFeature(format!("primitive mode {:?}", prim.mode())));
                }
                let reader = prim.reader(|b| match b.source() {
                    gltf::buffer::Source::Bin => blob,
                    gltf::buffer::Source::Uri(_) => None,
                });
                let positions: Vec<Vec3> = reader
                    .read_positions()
                    .ok_or_else(|| AssetError::Parse("primitive without POSITION".into()))?
                    .map(|p| transform_point(&world, p))
                    .collect();
                let flat = {
                    let f = prim.material().pbr_metallic_roughness().base_color_factor();
                    let to_u8 = |c: f32| (c * 255.0).round().clamp(0.0, 255.0) as u8;
                    if prim.material().index().is_some() {
                        [to_u8(f[0]), to_u8(f[1]), to_u8(f[2])]
                    } else {
                        DEFAULT_COLOR
                    }
                };
                let colors: Option<Vec<Rgb>> = reader.read_colors(0).map(|c| {
                    c.into_rgb_u8().collect()
                });
                let indices: Vec<usize> = match reader.read_indices() {
                    Some(idx) => idx.into_u32().map(|i| i as usize).collect(),
                    None => (0..positions.len()).collect(),
                };
                if indices.len() % 3 != 0 {
                    return Err(AssetError::Parse("index count not a multiple of 3".into()));
                }
                if indices.iter().any(|&i| i >= positions.len()) {
                    return Err(AssetError::Parse("index out of range".into()));
                }
                if !started && !indices.is_empty() {
                    builder.object(name.clone());
                    started = true;
                }
                let color = |i: usize| colors.as_ref().map_or(flat, |c| c[i]);
                for tri in indices.chunks_exact(3) {
                    builder.triangle(
                        [positions[tri[0]], positions[tri[1]], positions[tri[2]]],
                        [color(tri[0]), color(tri[1]), color(tri[2])],
                    );
                }
            }
        }
        for child in node.children().collect::<Vec<_>>().into_iter().rev() {
            stack.push((child, world));
        }
    }
    if builder.triangles.is_empty() {
        return Err(AssetError::Parse("GLB contains no triangles".into()));
    }
    builder.build(id)
}

/// Writes the mesh as OBJ with per-vertex colors and one `o` block per object.
pub fn export_obj(mesh: &MeshModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", mesh.id);
    let mut next_index = 1usize;
    for object in 0..mesh.object_count() {
        let _ = writeln!(out, "o {}", mesh.object_names[object]);
        for (tri, colors) in mesh
            .triangles
            .iter()
            .zip(&mesh.colors)
            .zip(&mesh.object_ids)
            .filter(|(_, &oid)| oid as usize == object)
            .map(|(tc, _)| tc)
        {
            for (v, c) in tri.iter().zip(colors) {
                let _ = writeln!(
                    out,
                    "v {} {} {} {:.6} {:.6} {:.6}",
                    v.x,
                    v.y,
                    v.z,
                    c[0] as f64 / 255.0,
                    c[1] as f64 / 255.0,
                    c[2] as f64 / 255.0
                );
            }
            let _ = writeln!(out, "f {} {} {}", next_index, next_index + 1, next_index + 2);
            next_index += 3;
        }
    }
    out
}

/// Writes the mesh as a binary glTF container: one node per object, positions
/// and colors as float accessors in the embedded BIN chunk.
pub fn export_glb(mesh: &MeshModel) -> Vec<u8> {
    use serde_json::json;

    let mut bin: Vec<u8> = Vec::new();
    let mut buffer_views = Vec::new();
    let mut accessors = Vec::new();
    let mut meshes = Vec::new();
    let mut nodes = Vec::new();

    for object in 0..mesh.object_count() {
        let mut positions: Vec<[f32; 3]> = Vec::new();
        let mut colors: Vec<[f32; 3]> = Vec::new();
        for ((tri, cols), _) in mesh
            .triangles
            .iter()
            .zip(&mesh.colors)
            .zip(&mesh.object_ids)
            .filter(|(_, &oid)| oid as usize == object)
        {
            for (v, c) in tri.iter().zip(cols) {
                positions.push([v.x as f32, v.y as f32, v.z as f32]);
                colors.push(c.map(|x| x as f32 / 255.0));
            }
        }
        let (lo, hi) = positions.iter().fold(
            ([f32::INFINITY; 3], [f32::NEG_INFINITY; 3]),
            |(lo, hi), p| {
                (
                    [lo[0].min(p[0]), lo[1].min(p[1]), lo[2].min(p[2])],
                    [hi[0].max(p[0]), hi[1].max(p[1]), hi[2].max(p[2])],
                )
            },
        );
        let mut push_view = |data: &[[f32; 3]]| {
            let offset = bin.len();
            for p in data {
                for c in p {
                    bin.extend_from_slice(&c.to_le_bytes());
                }
            }
            buffer_views.push(json!({
                "buffer": 0, "byteOffset": offset, "byteLength": data.len() * 12, "target": 34962
            }));
            buffer_views.len() - 1
        };
        let pos_view = push_view(&positions);
        let col_view = push_view(&colors);
        accessors.push(json!({
            "bufferView": pos_view, "componentType": 5126, "count": positions.len(),
            "type": "VEC3", "min": lo, "max": hi
        }));
        accessors.push(json!({
            "bufferView": col_view, "componentType": 5126, "count": colors.len(), "type": "VEC3"
        }));
        meshes.push(json!({
            "name": mesh.object_names[object],
            "primitives": [{
                "attributes": { "POSITION": accessors.len() - 2, "COLOR_0": accessors.len() - 1 },
                "mode": 4
            }]
        }));
        nodes.push(json!({ "name": mesh.object_names[object], "mesh": meshes.len() - 1 }));
    }

    let doc = json!({
        "asset": { "version": "2.0", "generator": "sweeper-core" },
        "scene": 0,
        "scenes": [{ "nodes": (0..nodes.len()).collect::<Vec<_>>() }],
        "nodes": nodes,
        "meshes": meshes,
        "accessors": accessors,
        "bufferViews": buffer_views,
        "buffers": [{ "byteLength": bin.len() }],
    });
    let mut json_chunk = serde_json::to_vec(&doc).expect("glTF JSON serializes");
    while json_chunk.len() % 4 != 0 {
        json_chunk.push(b' ');
    }
    while bin.len() % 4 != 0 {
        bin.push(0);
    }
    let total = 12 + 8 + json_chunk.len() + 8 + bin.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(b"glTF");
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json_chunk.len() as u32).to_le_bytes());
    out.extend_from_slice(b"JSON");
    out.extend_from_slice(&json_chunk);
    out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
    out.extend_from_slice(b"BIN\0");
    out.extend_from_slice(&bin);
    out
}
