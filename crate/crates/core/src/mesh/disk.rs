use super::{BoundaryEdge, BoundaryMarker, Mesh};
use crate::{Error, Result, Vec2};

/// A disk mesh made of concentric rings around `center`.
#[derive(Clone, Debug)]
pub struct PolarDisk {
    pub mesh: Mesh,
    pub center: Vec2,
    pub ring_radii: Vec<f64>,
    pub n_theta: usize,
    /// Ring interval of every triangle; 0 is the central fan, `k` lies between rings `k-1` and `k`.
    pub interval: Vec<usize>,
}

/// Meshes the disk of radius `ring_radii.last()` around `center` with a central fan and
/// quadrilateral rings split into two triangles each. Every triangle is labelled by
/// `classify(centroid, interval)`. The outer circle is a Dirichlet boundary.
pub fn polar_disk(
    center: Vec2,
    ring_radii: &[f64],
    n_theta: usize,
    classify: impl Fn(Vec2, usize) -> u32,
) -> Result<PolarDisk> {
    if n_theta < 3 {
        return Err(Error::Geometry(format!("n_theta must be >= 3, got {n_theta}")));
    }
    if ring_radii.is_empty() || !(ring_radii[0] > 0.0) {
        return Err(Error::Geometry("ring radii must be positive".into()));
    }
    if ring_radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Geometry("ring radii must be strictly increasing".into()));
    }
    let node = |k: usize, j: usize| 1 + k * n_theta + (j % n_theta);
    let mut vertices = Vec::with_capacity(1 + ring_radii.len() * n_theta);
    vertices.push(center);
    for &r in ring_radii {
        for j in 0..n_theta {
            let t = 2.0 * std::f64::consts::PI * j as f64 / n_theta as f64;
            vertices.push([center[0] + r * t.cos(), center[1] + r * t.sin()]);
        }
    }
    let mut triangles = Vec::new();
    let mut interval = Vec::new();
    for j in 0..n_theta {
        triangles.push([0, node(0, j), node(0, j + 1)]);
        interval.push(0);
    }
    for k in 0..ring_radii.len() - 1 {
        for j in 0..n_theta {
            let (n00, n10, n11, n01) = (node(k, j), node(k + 1, j), node(k + 1, j + 1), node(k, j + 1));
            if (k + j) % 2 == 0 {
                triangles.push([n00, n10, n11]);
                triangles.push([n00, n11, n01]);
            } else {
                triangles.push([n00, n10, n01]);
                triangles.push([n10, n11, n01]);
            }
            interval.push(k + 1);
            interval.push(k + 1);
        }
    }
    let centroid = |t: &[usize; 3]| {
        let (a, b, c) = (vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    };
    let regions = triangles
        .iter()
        .zip(&interval)
        .map(|(t, &k)| classify(centroid(t), k))
        .collect();
    let last = ring_radii.len() - 1;
    let boundary = (0..n_theta)
        .map(|j| BoundaryEdge {
            nodes: [node(last, j), node(last, j + 1)],
            marker: BoundaryMarker::OuterDirichlet,
        })
        .collect();
    let mesh = Mesh::new(vertices, triangles, regions, boundary, Vec::new())?;
    Ok(PolarDisk {
        mesh,
        center,
        ring_radii: ring_radii.to_vec(),
        n_theta,
        interval,
    })
}
