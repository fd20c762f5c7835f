//! Triangular meshes with region labels, boundary markers and periodic node pairs.

mod disk;
mod io;
mod sector;

use std::collections::HashMap;

pub use disk::{polar_disk, PolarDisk};
pub use io::{read_mesh, write_mesh, MESH_HEADER};
pub use sector::{generate_sector_mesh, Region, SectorGeometry};

use crate::{Error, Result, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryMarker {
    OuterDirichlet,
    InnerDirichlet,
    CutA,
    CutB,
}

impl BoundaryMarker {
    pub fn id(self) -> u32 {
        match self {
            BoundaryMarker::OuterDirichlet => 1,
            BoundaryMarker::InnerDirichlet => 2,
            BoundaryMarker::CutA => 3,
            BoundaryMarker::CutB => 4,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            1 => Some(BoundaryMarker::OuterDirichlet),
            2 => Some(BoundaryMarker::InnerDirichlet),
            3 => Some(BoundaryMarker::CutA),
            4 => Some(BoundaryMarker::CutB),
            _ => None,
        }
    }

    pub fn is_dirichlet(self) -> bool {
        matches!(
            self,
            BoundaryMarker::OuterDirichlet | BoundaryMarker::InnerDirichlet
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub marker: BoundaryMarker,
}

/// Conforming P1 triangle mesh. Immutable once validated.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<u32>,
    pub boundary: Vec<BoundaryEdge>,
    /// `(node on cut A, node on cut B)`.
    pub periodic: Vec<[usize; 2]>,
}

/// Area and gradients of the three linear nodal basis functions of a triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [Vec2; 3],
}

impl ElementGeometry {
    pub fn from_points(p: [Vec2; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
            - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let inv = 1.0 / det;
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let j = (i + 1) % 3;
            let k = (i + 2) % 3;
            grads[i] = [(p[j][1] - p[k][1]) * inv, (p[k][0] - p[j][0]) * inv];
        }
        ElementGeometry {
            area: 0.5 * det,
            grads,
        }
    }

    /// Scalar-to-vector curl `(d/dy, -d/dx)` of basis function `i`.
    #[inline]
    pub fn curl(&self, i: usize) -> Vec2 {
        [self.grads[i][1], -self.grads[i][0]]
    }

    /// Curl of the P1 interpolant with nodal values `a`.
    #[inline]
    pub fn curl_of(&self, a: [f64; 3]) -> Vec2 {
        let mut b = [0.0; 2];
        for (i, ai) in a.iter().enumerate() {
            let c = self.curl(i);
            b[0] += ai * c[0];
            b[1] += ai * c[1];
        }
        b
    }
}

impl Mesh {
    /// Builds a mesh and checks all structural invariants.
    pub fn new(
        vertices: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<u32>,
        boundary: Vec<BoundaryEdge>,
        periodic: Vec<[usize; 2]>,
    ) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            triangles,
            regions,
            boundary,
            periodic,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn num_nodes(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn element_geometry(&self, t: usize) -> ElementGeometry {
        let [i, j, k] = self.triangles[t];
        ElementGeometry::from_points([self.vertices[i], self.vertices[j], self.vertices[k]])
    }

    pub fn element_geometries(&self) -> Vec<ElementGeometry> {
        (0..self.num_triangles())
            .map(|t| self.element_geometry(t))
            .collect()
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [i, j, k] = self.triangles[t];
        let (a, b, c) = (self.vertices[i], self.vertices[j], self.vertices[k]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn area(&self, t: usize) -> f64 {
        self.element_geometry(t).area
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    pub fn region_area(&self, region: u32) -> f64 {
        (0..self.num_triangles())
            .filter(|&t| self.regions[t] == region)
            .map(|t| self.area(t))
            .sum()
    }

    /// Nodes touched by any boundary edge carrying one of `markers`, sorted.
    pub fn nodes_with_marker(&self, markers: &[BoundaryMarker]) -> Vec<usize> {
        let mut nodes: Vec<usize> = self
            .boundary
            .iter()
            .filter(|e| markers.contains(&e.marker))
            .flat_map(|e| e.nodes)
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.regions.len() != self.triangles.len() {
            return Err(Error::MeshValidation(format!(
                "{} region labels for {} triangles",
                self.regions.len(),
                self.triangles.len()
            )));
        }
        for (idx, v) in self.vertices.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::MeshValidation(format!("vertex {idx} is not finite")));
            }
        }
        let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::MeshValidation(format!(
                    "triangle {t} references a vertex outside 0..{n}"
                )));
            }
            let area = self.area(t);
            if !(area > 0.0) {
                return Err(Error::MeshValidation(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            for e in 0..3 {
                *edge_count
                    .entry(edge_key(tri[e], tri[(e + 1) % 3]))
                    .or_insert(0) += 1;
            }
        }
        if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::MeshValidation(format!(
                "edge {:?} shared by {c} triangles",
                e
            )));
        }
        let mut boundary_keys = HashMap::new();
        for be in &self.boundary {
            if be.nodes.iter().any(|&i| i >= n) {
                return Err(Error::MeshValidation(format!(
                    "boundary edge {:?} references a vertex outside 0..{n}",
                    be.nodes
                )));
            }
            let key = edge_key(be.nodes[0], be.nodes[1]);
            if edge_count.get(&key) != Some(&1) {
                return Err(Error::MeshValidation(format!(
                    "boundary edge {:?} is not a free edge of the triangulation",
                    be.nodes
                )));
            }
            boundary_keys.insert(key, be.marker);
        }
        if let Some((e, _)) = edge_count
            .iter()
            .find(|(k, &c)| c == 1 && !boundary_keys.contains_key(k))
        {
            return Err(Error::MeshValidation(format!(
                "free edge {:?} is not a marked boundary edge (non-conforming mesh)",
                e
            )));
        }
        for &[ia, ib] in &self.periodic {
            if ia >= n || ib >= n {
                return Err(Error::MeshValidation(format!(
                    "periodic pair ({ia}, {ib}) references a vertex outside 0..{n}"
                )));
            }
            let ra = crate::norm(self.vertices[ia]);
            let rb = crate::norm(self.vertices[ib]);
            if (ra - rb).abs() > 1e-9 * ra.max(rb) {
                return Err(Error::MeshValidation(format!(
                    "periodic pair ({ia}, {ib}) radius mismatch {ra} vs {rb}"
                )));
            }
        }
        Ok(())
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}
