//! Vector level set with four materials on the vertices of a regular tetrahedron.

use crate::machine::Material;
use crate::mesh::Mesh;
use crate::{Error, Result};

pub type Vec3 = [f64; 3];

/// Unnormalized tetrahedron vertices; the unit directions are these divided by sqrt(3).
const SIGNS: [Vec3; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
];

/// Unit direction of a material.
pub fn direction(m: Material) -> Vec3 {
    let s = SIGNS[m.index()];
    let k = 1.0 / 3f64.sqrt();
    [s[0] * k, s[1] * k, s[2] * k]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

fn normalized(a: Vec3) -> Option<Vec3> {
    let n = norm3(a);
    (n > 0.0 && n.is_finite()).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

/// Material whose direction has the largest projection; ties go to the lowest index.
pub fn classify(psi: Vec3) -> Material {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, s) in SIGNS.iter().enumerate() {
        let score = dot3(*s, psi);
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    Material::from_index(best).unwrap()
}

/// Design triangles with their nodes, areas and the periodic node pairs of the design.
#[derive(Clone, Debug)]
pub struct DesignSpace {
    pub elements: Vec<usize>,
    pub areas: Vec<f64>,
    /// Nodes of each design element.
    pub element_nodes: Vec<[usize; 3]>,
    /// Nodes touched by a design element, ascending.
    pub nodes: Vec<usize>,
    /// Lumped nodal area (one third of the adjacent design areas), indexed like `nodes`.
    pub node_weights: Vec<f64>,
    /// Periodic pairs with both nodes in `nodes`, as positions into `nodes`.
    pub periodic: Vec<[usize; 2]>,
    pub n_mesh_nodes: usize,
    /// Labels of all mesh triangles for the non-design part.
    pub fixed_labels: Vec<Material>,
    /// Position of each mesh node in `nodes`, if any.
    slot: Vec<Option<usize>>,
}

impl DesignSpace {
    pub fn new(mesh: &Mesh, elements: Vec<usize>, fixed_labels: Vec<Material>) -> Result<Self> {
        if fixed_labels.len() != mesh.num_triangles() {
            return Err(Error::SizeMismatch {
                what: "fixed labels",
                expected: mesh.num_triangles(),
                got: fixed_labels.len(),
            });
        }
        let n = mesh.num_nodes();
        let mut weight = vec![0.0; n];
        let mut element_nodes = Vec::with_capacity(elements.len());
        let mut areas = Vec::with_capacity(elements.len());
        for &t in &elements {
            let a = mesh.area(t);
            let tri = mesh.triangles[t];
            for &v in &tri {
                weight[v] += a / 3.0;
            }
            element_nodes.push(tri);
            areas.push(a);
        }
        let mut slot = vec![None; n];
        let mut nodes = Vec::new();
        let mut node_weights = Vec::new();
        for v in 0..n {
            if weight[v] > 0.0 {
                slot[v] = Some(nodes.len());
                nodes.push(v);
                node_weights.push(weight[v]);
            }
        }
        let periodic = mesh
            .periodic
            .iter()
            .filter_map(|&[a, b]| Some([slot[a]?, slot[b]?]))
            .collect();
        Ok(DesignSpace {
            elements,
            areas,
            element_nodes,
            nodes,
            node_weights,
            periodic,
            n_mesh_nodes: n,
            fixed_labels,
            slot,
        })
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn slot_of(&self, node: usize) -> Option<usize> {
        self.slot.get(node).copied().flatten()
    }

    /// Averages nodal vectors over periodic pairs so both partners carry the same value.
    fn tie_periodic(&self, values: &mut [Vec3]) {
        for &[a, b] in &self.periodic {
            let m = [
                0.5 * (values[a][0] + values[b][0]),
                0.5 * (values[a][1] + values[b][1]),
                0.5 * (values[a][2] + values[b][2]),
            ];
            values[a] = m;
            values[b] = m;
        }
    }
}

/// Nodal level-set vectors on the design nodes (unit length).
#[derive(Clone, Debug, PartialEq)]
pub struct DesignState {
    /// Indexed like [`DesignSpace::nodes`].
    pub psi: Vec<Vec3>,
}

impl DesignState {
    /// Sets every design node to the direction of `material_at(node position)`; periodic
    /// partners are averaged.
    pub fn from_materials(space: &DesignSpace, mesh: &Mesh, material_at: impl Fn(usize, [f64; 2]) -> Material) -> Self {
        let mut psi: Vec<Vec3> = space
            .nodes
            .iter()
            .map(|&v| direction(material_at(v, mesh.vertices[v])))
            .collect();
        space.tie_periodic(&mut psi);
        for p in psi.iter_mut() {
            *p = normalized(*p).unwrap_or(direction(Material::Iron));
        }
        DesignState { psi }
    }

    pub fn uniform(space: &DesignSpace, m: Material) -> Self {
        DesignState {
            psi: vec![direction(m); space.nodes.len()],
        }
    }

    /// Labels of all mesh triangles: argmax over the element-averaged level set on design
    /// triangles, fixed labels elsewhere.
    pub fn material_map(&self, space: &DesignSpace) -> Vec<Material> {
        let mut labels = space.fixed_labels.clone();
        for (k, &t) in space.elements.iter().enumerate() {
            let mut avg = [0.0; 3];
            for &v in &space.element_nodes[k] {
                let p = self.psi[space.slot_of(v).unwrap()];
                avg[0] += p[0];
                avg[1] += p[1];
                avg[2] += p[2];
            }
            labels[t] = classify(avg);
        }
        labels
    }
}

/// Element field `g = sum_{j != i} (-D^{i->j}) d_j` from per-target sensitivities.
pub fn element_direction(current: Material, d: &[f64; 4]) -> Vec3 {
    let mut g = [0.0; 3];
    for m in Material::ALL {
        if m != current {
            let dj = direction(m);
            for c in 0..3 {
                g[c] -= d[m.index()] * dj[c];
            }
        }
    }
    g
}

/// Area-weighted nodal average of element vectors, tied across periodic pairs and
/// normalized. Nodes with a zero average get a zero vector.
pub fn nodal_field(space: &DesignSpace, g: &[Vec3]) -> Vec<Vec3> {
    let mut acc = vec![[0.0; 3]; space.nodes.len()];
    let mut w = vec![0.0; space.nodes.len()];
    for (k, gk) in g.iter().enumerate() {
        let a = space.areas[k];
        for &v in &space.element_nodes[k] {
            let s = space.slot_of(v).unwrap();
            for c in 0..3 {
                acc[s][c] += a * gk[c];
            }
            w[s] += a;
        }
    }
    for (a, w) in acc.iter_mut().zip(&w) {
        for c in a.iter_mut() {
            *c /= w;
        }
    }
    space.tie_periodic(&mut acc);
    acc.into_iter()
        .map(|a| normalized(a).unwrap_or([0.0; 3]))
        .collect()
}

/// `psi <- normalize((1 - kappa) psi + kappa g)`, keeping `psi` where the result vanishes.
pub fn update_levelset(state: &DesignState, g_hat: &[Vec3], kappa: f64) -> DesignState {
    let psi = state
        .psi
        .iter()
        .zip(g_hat)
        .map(|(p, g)| {
            if kappa == 0.0 {
                return *p;
            }
            let c = [
                (1.0 - kappa) * p[0] + kappa * g[0],
                (1.0 - kappa) * p[1] + kappa * g[1],
                (1.0 - kappa) * p[2] + kappa * g[2],
            ];
            normalized(c).unwrap_or(*p)
        })
        .collect();
    DesignState { psi }
}

/// Area-weighted mean angle (degrees) between `psi` and `g_hat`; nodes with zero `g_hat`
/// count as aligned.
pub fn mean_angle_deg(space: &DesignSpace, state: &DesignState, g_hat: &[Vec3]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((p, g), w) in state.psi.iter().zip(g_hat).zip(&space.node_weights) {
        let angle = if norm3(*g) == 0.0 {
            0.0
        } else {
            dot3(*p, *g).clamp(-1.0, 1.0).acos()
        };
        num += w * angle;
        den += w;
    }
    (num / den).to_degrees()
}
