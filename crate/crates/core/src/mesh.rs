//! Marching-cubes isosurface extraction with binary STL and ASCII OBJ export.
//!
//! The 256-case triangle table is generated once at first use. For every corner
//! configuration, isoline segments are traced on the six cube faces and chained into closed
//! loops. On faces where the above-iso corners sit diagonally, the segments always cut the
//! above-iso corners off individually, so adjacent cells agree on every shared face and the
//! surface has no cracks. Loops are triangulated without any interior diagonal between two
//! vertices on the same cube face; otherwise a neighboring cell could emit the same chord
//! and the edge would be shared by four triangles.
//!
//! Orientation: triangles are counter-clockwise seen from the below-iso side, so facet
//! normals point from the above-iso region toward the below-iso region (outward for a
//! bright object on a dark background, and for the skin surface at an air/tissue iso).

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::volume::Volume;

pub const ORIENTATION_NOTE: &str = "facet normals point from above-iso to below-iso";

/// Default iso value for the air/skin boundary, HU.
pub const SKIN_ISO_HU: f64 = -300.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<[u32; 3]>,
}

const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Vertices stay this fraction of an edge away from its endpoints, so corners lying
/// exactly on the iso value cannot pinch several edge vertices into one point.
const EDGE_MARGIN: f64 = 1e-7;

/// Cube edges as (lower corner, upper corner); corners differ in exactly one bit.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Face corners, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

fn edge_between(a: usize, b: usize) -> usize {
    let key = (a.min(b), a.max(b));
    EDGES.iter().position(|&e| e == key).expect("adjacent corners")
}

/// Triangles (as cube-edge indices) for one corner configuration.
fn triangulate_case(case: u8) -> Vec<[u8; 3]> {
    let above = |c: usize| case >> c & 1 == 1;
    // successor[e] = edge that follows e along the oriented isoline
    let mut successor = [usize::MAX; 12];
    for face in FACES {
        let first_below = match (0..4).find(|&i| !above(face[i])) {
            Some(i) => i,
            None => continue,
        };
        // walk once around the face starting just after a below-iso corner
        let mut entry = None;
        for step in 1..=4 {
            let prev = face[(first_below + step - 1) % 4];
            let cur = face[(first_below + step) % 4];
            match (above(prev), above(cur)) {
                (false, true) => entry = Some(edge_between(prev, cur)),
                (true, false) => {
                    let exit = edge_between(prev, cur);
                    let start = entry.take().expect("runs start with an entry");
                    successor[start] = exit;
                }
                _ => {}
            }
        }
    }
    let mut used = [false; 12];
    let mut triangles = Vec::new();
    for start in 0..12 {
        if successor[start] == usize::MAX || used[start] {
            continue;
        }
        let mut ring = vec![start];
        used[start] = true;
        let mut cur = successor[start];
        while cur != start {
            used[cur] = true;
            ring.push(cur);
            cur = successor[cur];
        }
        let pieces = triangulate_loop(&ring).expect("every marching-cubes loop has a valid triangulation");
        triangles.extend(pieces.iter().map(|t| t.map(|e| e as u8)));
    }
    triangles
}

fn faces_of_edge(edge: usize) -> u8 {
    let (a, b) = EDGES[edge];
    FACES
        .iter()
        .enumerate()
        .filter(|(_, f)| f.contains(&a) && f.contains(&b))
        .fold(0, |mask, (i, _)| mask | 1 << i)
}

/// Triangulates a loop of edge indices, keeping its orientation, using only diagonals whose
/// endpoints share no cube face. The first triangle found in a fixed search order is used.
fn triangulate_loop(ring: &[usize]) -> Option<Vec<[usize; 3]>> {
    let n = ring.len();
    if n == 3 {
        return Some(vec![[ring[0], ring[1], ring[2]]]);
    }
    let allowed = |a: usize, b: usize| faces_of_edge(a) & faces_of_edge(b) == 0;
    // triangle over the side (ring[0], ring[1]) with apex ring[k]
    for k in 2..n {
        if (k > 2 && !allowed(ring[1], ring[k])) || (k < n - 1 && !allowed(ring[k], ring[0])) {
            continue;
        }
        let mut out = vec![[ring[0], ring[1], ring[k]]];
        if k > 2 {
            match triangulate_loop(&ring[1..=k]) {
                Some(t) => out.extend(t),
                None => continue,
            }
        }
        if k < n - 1 {
            let mut rest: Vec<usize> = ring[k..].to_vec();
            rest.push(ring[0]);
            match triangulate_loop(&rest) {
                Some(t) => out.extend(t),
                None => continue,
            }
        }
        return Some(out);
    }
    None
}

/// The generated 256-case table.
pub fn case_table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|case| triangulate_case(case as u8)))
}

/// Extracts the `iso_hu` isosurface. Corners with value ≥ `iso_hu` count as above-iso.
/// Vertices are in world mm.
pub fn marching_cubes(volume: &Volume, iso_hu: f64) -> Result<TriangleMesh> {
    let [nx, ny, nz] = volume.dims();
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::Precondition(format!(
            "marching cubes needs at least 2 voxels per axis, got {:?}",
            volume.dims()
        )));
    }
    let table = case_table();
    let vox = volume.voxels();
    let mut vertex_of_edge: HashMap<(usize, u8), u32> = HashMap::new();
    let mut mesh = TriangleMesh::default();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut values = [0.0f64; 8];
                let mut case = 0u8;
                for (c, off) in CORNER_OFFSETS.iter().enumerate() {
                    let v = vox[volume.linear_index(i + off[0], j + off[1], k + off[2])] as f64;
                    values[c] = v;
                    if v >= iso_hu {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                for tri in &table[case as usize] {
                    let mut face = [0u32; 3];
                    for (slot, &edge) in face.iter_mut().zip(tri) {
                        let (a, b) = EDGES[edge as usize];
                        let (oa, ob) = (CORNER_OFFSETS[a], CORNER_OFFSETS[b]);
                        let lower = volume.linear_index(i + oa[0], j + oa[1], k + oa[2]);
                        let axis = (a ^ b).trailing_zeros() as u8;
                        *slot = *vertex_of_edge.entry((lower, axis)).or_insert_with(|| {
                            let pa = volume.world(i + oa[0], j + oa[1], k + oa[2]);
                            let pb = volume.world(i + ob[0], j + ob[1], k + ob[2]);
                            let t = ((iso_hu - values[a]) / (values[b] - values[a]))
                                .clamp(EDGE_MARGIN, 1.0 - EDGE_MARGIN);
                            mesh.vertices.push(pa + (pb - pa) * t);
                            (mesh.vertices.len() - 1) as u32
                        });
                    }
                    mesh.faces.push(face);
                }
            }
        }
    }
    Ok(weld(mesh, 1e-9))
}

/// Merges vertices whose coordinates agree on a `tolerance` grid and drops faces that
/// collapse. Unreferenced vertices are removed; surviving order is preserved.
fn weld(mesh: TriangleMesh, tolerance: f64) -> TriangleMesh {
    let quantize = |p: &Vector3<f64>| {
        [
            (p.x / tolerance).round() as i64,
            (p.y / tolerance).round() as i64,
            (p.z / tolerance).round() as i64,
        ]
    };
    let mut canonical: HashMap<[i64; 3], u32> = HashMap::new();
    let remap: Vec<u32> = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(i, p)| *canonical.entry(quantize(p)).or_insert(i as u32))
        .collect();
    let faces: Vec<[u32; 3]> = mesh
        .faces
        .iter()
        .map(|f| f.map(|v| remap[v as usize]))
        .filter(|f| f[0] != f[1] && f[1] != f[2] && f[0] != f[2])
        .collect();
    let mut new_index = vec![u32::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    for f in &faces {
        for &v in f {
            if new_index[v as usize] == u32::MAX {
                new_index[v as usize] = vertices.len() as u32;
                vertices.push(mesh.vertices[v as usize]);
            }
        }
    }
    TriangleMesh {
        faces: faces.iter().map(|f| f.map(|v| new_index[v as usize])).collect(),
        vertices,
    }
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len() as u32;
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::Precondition(format!("face {i} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Precondition(format!("face {i} repeats a vertex")));
            }
        }
        Ok(())
    }

    pub fn face_normal(&self, face: &[u32; 3]) -> Vector3<f64> {
        let [a, b, c] = face.map(|v| self.vertices[v as usize]);
        (b - a).cross(&(c - a))
    }

    pub fn surface_area(&self) -> f64 {
        self.faces.iter().map(|f| self.face_normal(f).norm() * 0.5).sum()
    }

    /// Undirected edge → number of faces using it.
    pub fn edge_use_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for f in &self.faces {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge shared by exactly two faces.
    pub fn is_watertight(&self) -> bool {
        self.edge_use_counts().values().all(|&c| c == 2)
    }

    /// No directed edge occurs twice, i.e. neighbors traverse shared edges oppositely.
    pub fn is_consistently_oriented(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.faces
            .iter()
            .all(|f| (0..3).all(|e| seen.insert((f[e], f[(e + 1) % 3]))))
    }

    /// `V − E + F`.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_use_counts().len() as i64 + self.faces.len() as i64
    }

    /// Signed enclosed volume (positive when normals point outward).
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|v| self.vertices[v as usize]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn stl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(84 + 50 * self.faces.len());
        let mut header = [0u8; 80];
        let text = format!("trireg binary STL; {ORIENTATION_NOTE}");
        header[..text.len()].copy_from_slice(text.as_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.faces.len() as u32).to_le_bytes());
        for f in &self.faces {
            let n = self.face_normal(f);
            let len = n.norm();
            let n = if len > 0.0 { n / len } else { Vector3::zeros() };
            for c in n.iter() {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
            for &v in f {
                for c in self.vertices[v as usize].iter() {
                    out.extend_from_slice(&(*c as f32).to_le_bytes());
                }
            }
            out.extend_from_slice(&0u16.to_le_bytes());
        }
        out
    }

    pub fn obj_string(&self) -> String {
        let mut s = format!("# trireg OBJ; {ORIENTATION_NOTE}\n");
        for v in &self.vertices {
            s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for f in &self.faces {
            s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        s
    }

    /// Parses the `v`/`f` subset of OBJ written by [`TriangleMesh::obj_string`].
    pub fn parse_obj(text: &str) -> Result<Self> {
        let mut mesh = TriangleMesh::default();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let c: Vec<f64> = parts
                        .map(|p| p.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::format(line_no, "invalid vertex coordinate"))?;
                    if c.len() != 3 {
                        return Err(Error::format(line_no, "vertex needs 3 coordinates"));
                    }
                    mesh.vertices.push(Vector3::new(c[0], c[1], c[2]));
                }
                Some("f") => {
                    let idx: Vec<u32> = parts
                        .map(|p| p.split('/').next().unwrap_or("").parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| Error::format(line_no, "invalid face index"))?;
                    if idx.len() != 3 || idx.contains(&0) {
                        return Err(Error::format(line_no, "face needs 3 one-based indices"));
                    }
                    mesh.faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        mesh.validate()?;
        Ok(mesh)
    }
}

pub fn write_stl(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    mesh.validate()?;
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&mesh.stl_bytes()).map_err(|e| Error::io(path, e))
}

pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    mesh.validate()?;
    let path = path.as_ref();
    std::fs::write(path, mesh.obj_string()).map_err(|e| Error::io(path, e))
}

/// Solid sphere phantom: `inside_hu` in the ball, `outside_hu` elsewhere, with a one-voxel
/// linear partial-volume ramp across the boundary.
pub fn sphere_phantom(
    dims: [usize; 3],
    spacing: [f64; 3],
    center: Vector3<f64>,
    radius_mm: f64,
    inside_hu: i16,
    outside_hu: i16,
) -> Result<Volume> {
    let ramp = spacing.iter().cloned().fold(f64::MIN, f64::max);
    Volume::from_fn(dims, spacing, [0.0; 3], |p| {
        let d = (p - center).norm() - radius_mm;
        let frac = (0.5 - d / ramp).clamp(0.0, 1.0);
        (outside_hu as f64 + frac * (inside_hu as f64 - outside_hu as f64)).round() as i16
    })
}
