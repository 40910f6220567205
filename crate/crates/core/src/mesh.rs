//! Closed genus-0 triangle meshes with canonical, topology-only indexing.
//!
//! A [`TriSphere`] carries no geometry. Edge indices are a pure function of the
//! face list: edges are the sorted, deduplicated `(min, max)` vertex pairs.
//! Icosphere subdivision appends one vertex per old edge, in canonical edge
//! order, so the numbering is reproducible across runs and machines.

use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Largest subdivision level accepted by [`icosphere`].
pub const MAX_LEVEL: u32 = 8;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("icosphere level {0} out of range (0..={MAX_LEVEL})")]
    LevelOutOfRange(u32),
    #[error("face {face} references vertex {vertex} but the mesh has {count} vertices")]
    VertexOutOfRange { face: usize, vertex: usize, count: usize },
    #[error("face {0} has a repeated vertex")]
    DegenerateFace(usize),
    #[error("edge ({0}, {1}) is shared by {2} faces, expected 2")]
    NonManifoldEdge(usize, usize, usize),
    #[error("directed edge ({0}, {1}) appears twice; faces are not consistently oriented")]
    InconsistentOrientation(usize, usize),
    #[error("Euler characteristic is {0}, expected 2")]
    NotASphere(i64),
    #[error("mesh is not connected")]
    Disconnected,
    #[error("vertex {0} is not used by any face")]
    IsolatedVertex(usize),
    #[error("topology does not match an icosphere of level {0}")]
    NotAnIcosphere(u32),
}

/// Triangulated topological sphere.
#[derive(Debug, Clone)]
pub struct TriSphere {
    level: u32,
    vertex_count: usize,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    /// `face_edges[f][c]` is the edge opposite corner `c` of face `f`.
    face_edges: Vec<[usize; 3]>,
    edge_faces: Vec<[usize; 2]>,
    vertex_faces: Vec<Vec<usize>>,
    vertex_edges: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    hash: String,
}

impl PartialEq for TriSphere {
    fn eq(&self, other: &Self) -> bool {
        self.vertex_count == other.vertex_count && self.faces == other.faces
    }
}

impl TriSphere {
    /// Builds and validates a closed, oriented genus-0 mesh from its faces.
    ///
    /// `level` is the icosphere level the faces came from; it is carried along so
    /// that reference positions can be regenerated for round initialisation.
    pub fn from_faces(level: u32, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let vertex_count = faces.iter().flatten().copied().max().map_or(0, |m| m + 1);
        for (f, face) in faces.iter().enumerate() {
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::DegenerateFace(f));
            }
        }

        let mut directed: Vec<(usize, usize, usize, usize)> = Vec::with_capacity(faces.len() * 3);
        for (f, face) in faces.iter().enumerate() {
            for c in 0..3 {
                let a = face[(c + 1) % 3];
                let b = face[(c + 2) % 3];
                directed.push((a.min(b), a.max(b), f, c));
            }
        }
        directed.sort_unstable();

        let mut edges = Vec::with_capacity(directed.len() / 2);
        let mut edge_faces = Vec::with_capacity(directed.len() / 2);
        let mut face_edges = vec![[usize::MAX; 3]; faces.len()];
        let mut i = 0;
        while i < directed.len() {
            let (a, b, _, _) = directed[i];
            let mut j = i;
            while j < directed.len() && directed[j].0 == a && directed[j].1 == b {
                j += 1;
            }
            if j - i != 2 {
                return Err(MeshError::NonManifoldEdge(a, b, j - i));
            }
            let e = edges.len();
            edges.push([a, b]);
            let (f0, c0) = (directed[i].2, directed[i].3);
            let (f1, c1) = (directed[i + 1].2, directed[i + 1].3);
            // Opposite orientations: the two faces traverse the edge in opposite directions.
            let dir = |f: usize, c: usize| faces[f][(c + 1) % 3];
            if dir(f0, c0) == dir(f1, c1) {
                return Err(MeshError::InconsistentOrientation(dir(f0, c0), faces[f0][(c0 + 2) % 3]));
            }
            edge_faces.push([f0, f1]);
            face_edges[f0][c0] = e;
            face_edges[f1][c1] = e;
            i = j;
        }

        let mut vertex_faces = vec![Vec::new(); vertex_count];
        for (f, face) in faces.iter().enumerate() {
            for &v in face {
                vertex_faces[v].push(f);
            }
        }
        let mut vertex_edges = vec![Vec::new(); vertex_count];
        let mut neighbors = vec![Vec::new(); vertex_count];
        for (e, &[a, b]) in edges.iter().enumerate() {
            vertex_edges[a].push(e);
            vertex_edges[b].push(e);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        if let Some(v) = vertex_faces.iter().position(Vec::is_empty) {
            return Err(MeshError::IsolatedVertex(v));
        }

        let chi = vertex_count as i64 - edges.len() as i64 + faces.len() as i64;
        if chi != 2 {
            return Err(MeshError::NotASphere(chi));
        }

        let mesh = TriSphere {
            level,
            vertex_count,
            hash: topology_hash(vertex_count, &faces),
            faces,
            edges,
            face_edges,
            edge_faces,
            vertex_faces,
            vertex_edges,
            neighbors,
        };
        if mesh.ring(0, usize::MAX).len() != vertex_count {
            return Err(MeshError::Disconnected);
        }
        Ok(mesh)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }

    pub fn edge_faces(&self) -> &[[usize; 2]] {
        &self.edge_faces
    }

    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    pub fn vertex_edges(&self, v: usize) -> &[usize] {
        &self.vertex_edges[v]
    }

    /// Sorted one-ring neighbours of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count as i64 - self.edges.len() as i64 + self.faces.len() as i64
    }

    /// Canonical index of the edge joining `a` and `b`, if any.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let key = [a.min(b), a.max(b)];
        self.edges.binary_search(&key).ok()
    }

    /// The vertex of face `f` not on edge `e`.
    pub fn opposite_vertex(&self, f: usize, e: usize) -> usize {
        let c = self.face_edges[f].iter().position(|&x| x == e).expect("edge not in face");
        self.faces[f][c]
    }

    /// Vertices within `hops` edges of `center`, in breadth-first order (center first).
    pub fn ring(&self, center: usize, hops: usize) -> Vec<usize> {
        let mut seen = vec![false; self.vertex_count];
        let mut out = vec![center];
        let mut queue = VecDeque::from([(center, 0usize)]);
        seen[center] = true;
        while let Some((v, d)) = queue.pop_front() {
            if d == hops {
                continue;
            }
            for &n in &self.neighbors[v] {
                if !seen[n] {
                    seen[n] = true;
                    out.push(n);
                    queue.push_back((n, d + 1));
                }
            }
        }
        out
    }

    /// Hex SHA-256 of the vertex count and face list.
    pub fn topology_hash(&self) -> &str {
        &self.hash
    }
}

fn topology_hash(vertex_count: usize, faces: &[[usize; 3]]) -> String {
    let mut h = Sha256::new();
    h.update((vertex_count as u64).to_le_bytes());
    for f in faces {
        for &v in f {
            h.update((v as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Serialized topology: edges are rebuilt canonically on load.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TopologyFile {
    pub level: u32,
    pub faces: Vec<[usize; 3]>,
}

impl From<&TriSphere> for TopologyFile {
    fn from(mesh: &TriSphere) -> Self {
        TopologyFile { level: mesh.level, faces: mesh.faces.clone() }
    }
}

impl TryFrom<TopologyFile> for TriSphere {
    type Error = MeshError;

    fn try_from(file: TopologyFile) -> Result<Self, MeshError> {
        TriSphere::from_faces(file.level, file.faces)
    }
}

/// Icosahedron with vertices at both poles: north pole, upper ring, lower ring, south pole.
fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let z = 1.0 / 5f64.sqrt();
    let r = 2.0 / 5f64.sqrt();
    let mut pts = vec![Vector3::new(0.0, 0.0, 1.0)];
    for k in 0..5 {
        let a = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
        pts.push(Vector3::new(r * a.cos(), r * a.sin(), z));
    }
    for k in 0..5 {
        let a = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 5.0;
        pts.push(Vector3::new(r * a.cos(), r * a.sin(), -z));
    }
    pts.push(Vector3::new(0.0, 0.0, -1.0));

    let up = |k: usize| 1 + k % 5;
    let lo = |k: usize| 6 + k % 5;
    let mut faces = Vec::with_capacity(20);
    for k in 0..5 {
        faces.push([0, up(k), up(k + 1)]);
        faces.push([up(k), lo(k), up(k + 1)]);
        faces.push([up(k + 1), lo(k), lo(k + 1)]);
        faces.push([11, lo(k + 1), lo(k)]);
    }
    (pts, faces)
}

fn subdivide(mesh: &TriSphere, pts: &mut Vec<Vector3<f64>>) -> Vec<[usize; 3]> {
    let base = mesh.vertex_count();
    for &[a, b] in mesh.edges() {
        pts.push(((pts[a] + pts[b]) * 0.5).normalize());
    }
    let mut faces = Vec::with_capacity(mesh.face_count() * 4);
    for (f, &[a, b, c]) in mesh.faces().iter().enumerate() {
        // face_edges[f][k] is opposite corner k.
        let bc = base + mesh.face_edges[f][0];
        let ca = base + mesh.face_edges[f][1];
        let ab = base + mesh.face_edges[f][2];
        faces.push([a, ab, ca]);
        faces.push([b, bc, ab]);
        faces.push([c, ca, bc]);
        faces.push([ab, bc, ca]);
    }
    faces
}

/// Loop-topology subdivision of the icosahedron, `V = 10·4^level + 2`.
pub fn icosphere(level: u32) -> Result<TriSphere, MeshError> {
    icosphere_with_points(level).map(|(m, _)| m)
}

/// Icosphere topology together with its unit-sphere reference positions
/// (edge midpoints pushed radially onto the sphere).
pub fn icosphere_with_points(level: u32) -> Result<(TriSphere, Vec<Vector3<f64>>), MeshError> {
    if level > MAX_LEVEL {
        return Err(MeshError::LevelOutOfRange(level));
    }
    let (mut pts, faces) = icosahedron();
    let mut mesh = TriSphere::from_faces(0, faces)?;
    for l in 1..=level {
        let faces = subdivide(&mesh, &mut pts);
        mesh = TriSphere::from_faces(l, faces)?;
    }
    Ok((mesh, pts))
}

/// Unit-sphere reference positions for a mesh that came from [`icosphere`].
pub fn reference_points(mesh: &TriSphere) -> Result<Vec<Vector3<f64>>, MeshError> {
    let (ico, pts) = icosphere_with_points(mesh.level())?;
    if ico != *mesh {
        return Err(MeshError::NotAnIcosphere(mesh.level()));
    }
    Ok(pts)
}

/// One patch per vertex: its `radius_hops`-ring neighbourhood.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchCover {
    pub patches: Vec<Vec<usize>>,
    pub radius_hops: usize,
}

pub fn build_patches(mesh: &TriSphere, radius_hops: usize) -> PatchCover {
    let radius_hops = radius_hops.max(1);
    let patches = (0..mesh.vertex_count())
        .map(|v| {
            let mut p = mesh.ring(v, radius_hops);
            p.sort_unstable();
            p
        })
        .collect();
    PatchCover { patches, radius_hops }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosahedron_counts() {
        let m = icosphere(0).unwrap();
        assert_eq!((m.vertex_count(), m.edge_count(), m.face_count()), (12, 30, 20));
        assert_eq!(m.euler_characteristic(), 2);
    }

    #[test]
    fn vertex_count_formula() {
        for level in 0..=4 {
            let m = icosphere(level).unwrap();
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(level) + 2);
            assert_eq!(m.euler_characteristic(), 2);
        }
    }

    #[test]
    fn level_guard() {
        assert_eq!(icosphere(9).unwrap_err(), MeshError::LevelOutOfRange(9));
    }

    #[test]
    fn faces_are_outward() {
        let (m, p) = icosphere_with_points(2).unwrap();
        for f in m.faces() {
            let n = (p[f[1]] - p[f[0]]).cross(&(p[f[2]] - p[f[0]]));
            let c = (p[f[0]] + p[f[1]] + p[f[2]]) / 3.0;
            assert!(n.dot(&c) > 0.0);
        }
    }

    #[test]
    fn edges_sorted_and_two_faced() {
        let m = icosphere(2).unwrap();
        assert!(m.edges().windows(2).all(|w| w[0] < w[1]));
        assert!(m.edges().iter().all(|e| e[0] < e[1]));
        for (e, &[f0, f1]) in m.edge_faces().iter().enumerate() {
            assert_ne!(f0, f1);
            assert!(m.face_edges()[f0].contains(&e) && m.face_edges()[f1].contains(&e));
        }
    }

    #[test]
    fn deterministic_topology() {
        let a = icosphere(3).unwrap();
        let b = icosphere(3).unwrap();
        assert_eq!(a.faces(), b.faces());
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.topology_hash(), b.topology_hash());
    }

    #[test]
    fn poles_are_vertices() {
        let (_, p) = icosphere_with_points(3).unwrap();
        assert_eq!(p[0], Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(p[11], Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn rejects_bad_topology() {
        let m = icosphere(0).unwrap();
        let mut faces = m.faces().to_vec();
        faces.swap_remove(0);
        assert!(TriSphere::from_faces(0, faces).is_err());

        let mut faces = m.faces().to_vec();
        faces[0].swap(0, 1);
        assert!(matches!(
            TriSphere::from_faces(0, faces),
            Err(MeshError::InconsistentOrientation(..))
        ));
    }

    #[test]
    fn icosahedron_one_hop_patches() {
        let m = icosphere(0).unwrap();
        let cover = build_patches(&m, 1);
        assert!(cover.patches.iter().all(|p| p.len() == 6));
    }

    /// Independent enumeration: union of neighbour sets, applied twice.
    fn two_ring_oracle(m: &TriSphere, v: usize) -> usize {
        let mut set = std::collections::BTreeSet::from([v]);
        for _ in 0..2 {
            let cur: Vec<_> = set.iter().copied().collect();
            for u in cur {
                set.extend(m.neighbors(u).iter().copied());
            }
        }
        set.len()
    }

    #[test]
    fn level2_two_hop_patch_sizes() {
        let m = icosphere(2).unwrap();
        let cover = build_patches(&m, 2);
        for (v, p) in cover.patches.iter().enumerate() {
            assert_eq!(p.len(), two_ring_oracle(&m, v));
            assert!((13..=19).contains(&p.len()), "patch {v} size {}", p.len());
        }
    }

    fn connected_within(m: &TriSphere, set: &[usize]) -> bool {
        let inside: std::collections::HashSet<_> = set.iter().copied().collect();
        let mut seen = std::collections::HashSet::from([set[0]]);
        let mut stack = vec![set[0]];
        while let Some(v) = stack.pop() {
            for &n in m.neighbors(v) {
                if inside.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        seen.len() == set.len()
    }

    #[test]
    fn patches_cover_and_connected() {
        let m = icosphere(2).unwrap();
        for hops in 1..=3 {
            let cover = build_patches(&m, hops);
            let mut covered = vec![false; m.vertex_count()];
            for p in &cover.patches {
                assert!(connected_within(&m, p));
                p.iter().for_each(|&v| covered[v] = true);
            }
            assert!(covered.iter().all(|&c| c));
        }
    }

    #[test]
    fn topology_file_round_trip() {
        let m = icosphere(1).unwrap();
        let json = serde_json::to_string(&TopologyFile::from(&m)).unwrap();
        let back: TopologyFile = serde_json::from_str(&json).unwrap();
        let m2 = TriSphere::try_from(back).unwrap();
        assert_eq!(m, m2);
        assert_eq!(m.edges(), m2.edges());
        assert!(reference_points(&m2).is_ok());
    }
}
