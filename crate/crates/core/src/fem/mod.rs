//! P1 finite elements for `curl~ h(curl a) = j`: constraint elimination, residual and
//! Jacobian assembly, damped Newton.
//!
//! Unknowns live on the free nodes. Dirichlet nodes carry zero; a node on cut A is a slave
//! of its partner on cut B with `a_A = sigma * a_B`. The flux in an element is
//! `background + curl a`, which lets the same machinery solve perturbation problems
//! around a uniform field.

mod sparse;

pub use sparse::{
    rcm_ordering, solve_factored, solve_linear, Cholesky, LinearSystem, Ordering, SparseMatrix,
    SparsityPattern,
};

use crate::materials::MaterialLaw;
use crate::mesh::{BoundaryMarker, ElementGeometry, Mesh};
use crate::{Error, Result, Vec2};

/// Operating point a field belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatingPoint {
    Nominal,
    Damaging,
}

impl OperatingPoint {
    pub fn name(self) -> &'static str {
        match self {
            OperatingPoint::Nominal => "nominal",
            OperatingPoint::Damaging => "damaging",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "nominal" => Some(OperatingPoint::Nominal),
            "damaging" => Some(OperatingPoint::Damaging),
            _ => None,
        }
    }
}

/// Converged magnetostatic field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSolution {
    /// Nodal potential (Wb/m) on all mesh nodes.
    pub a: Vec<f64>,
    /// Flux density per triangle (T).
    pub b: Vec<Vec2>,
    pub op: OperatingPoint,
    pub iterations: usize,
    /// Residual max-norm before each Newton correction and after the last one.
    pub residual_history: Vec<f64>,
}

/// Map from mesh nodes to free unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    entries: Vec<Option<(usize, f64)>>,
    /// Node carrying each free unknown.
    masters: Vec<usize>,
}

impl DofMap {
    /// Dirichlet nodes are eliminated; with `periodic_sign` the cut-A node of every periodic
    /// pair follows its cut-B partner. Without it the cut edges are natural boundaries.
    pub fn new(mesh: &Mesh, periodic_sign: Option<f64>) -> Result<Self> {
        let n = mesh.num_nodes();
        let mut dirichlet = vec![false; n];
        for i in mesh.nodes_with_marker(&[
            BoundaryMarker::OuterDirichlet,
            BoundaryMarker::InnerDirichlet,
        ]) {
            dirichlet[i] = true;
        }
        let mut slave_of = vec![None; n];
        if let Some(sigma) = periodic_sign {
            if sigma != 1.0 && sigma != -1.0 {
                return Err(Error::Invalid(format!(
                    "periodic sign must be +1 or -1, got {sigma}"
                )));
            }
            for &[a, b] in &mesh.periodic {
                if slave_of[b].is_some() {
                    return Err(Error::MeshValidation(format!(
                        "node {b} is both a periodic master and a slave"
                    )));
                }
                slave_of[a] = Some((b, sigma));
            }
        }
        let mut entries = vec![None; n];
        let mut masters = Vec::new();
        for i in 0..n {
            if !dirichlet[i] && slave_of[i].is_none() {
                entries[i] = Some((masters.len(), 1.0));
                masters.push(i);
            }
        }
        for i in 0..n {
            if let Some((m, s)) = slave_of[i] {
                if !dirichlet[i] {
                    entries[i] = entries[m].map(|(d, _)| (d, s));
                }
            }
        }
        Ok(DofMap { entries, masters })
    }

    pub fn n_free(&self) -> usize {
        self.masters.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.entries.len()
    }

    /// Unknown and sign of a node, `None` for Dirichlet nodes.
    #[inline]
    pub fn entry(&self, node: usize) -> Option<(usize, f64)> {
        self.entries[node]
    }

    /// Nodal values from free values.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|e| e.map_or(0.0, |(d, s)| s * x[d]))
            .collect()
    }

    /// Free values read from the master nodes of a nodal vector.
    pub fn restrict(&self, a: &[f64]) -> Vec<f64> {
        self.masters.iter().map(|&m| a[m]).collect()
    }

    /// Transposed expansion: sums a nodal load vector onto the free unknowns.
    pub fn reduce(&self, f: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_free()];
        for (e, v) in self.entries.iter().zip(f) {
            if let Some((d, s)) = e {
                r[*d] += s * v;
            }
        }
        r
    }
}

/// Mesh with element geometry, constraint map and symbolic factorization data.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub mesh: Mesh,
    pub geoms: Vec<ElementGeometry>,
    pub dofs: DofMap,
    pattern: SparsityPattern,
    ordering: Ordering,
}

impl Discretization {
    pub fn new(mesh: Mesh, periodic_sign: Option<f64>) -> Result<Self> {
        let geoms = mesh.element_geometries();
        let dofs = DofMap::new(&mesh, periodic_sign)?;
        let cliques: Vec<Vec<usize>> = mesh
            .triangles
            .iter()
            .map(|t| t.iter().filter_map(|&i| dofs.entry(i).map(|e| e.0)).collect())
            .collect();
        let pattern = SparsityPattern::from_cliques(dofs.n_free(), cliques.iter().map(|c| c.as_slice()));
        let ordering = Ordering::new(&pattern);
        Ok(Discretization {
            mesh,
            geoms,
            dofs,
            pattern,
            ordering,
        })
    }

    pub fn n_free(&self) -> usize {
        self.dofs.n_free()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.geoms.iter().map(|g| g.area).collect()
    }

    #[inline]
    pub fn element_values(&self, t: usize, a: &[f64]) -> [f64; 3] {
        let [i, j, k] = self.mesh.triangles[t];
        [a[i], a[j], a[k]]
    }

    /// Adds the local vector `v` of triangle `t` onto the free unknowns.
    #[inline]
    pub fn scatter(&self, t: usize, v: [f64; 3], out: &mut [f64]) {
        for (l, &node) in self.mesh.triangles[t].iter().enumerate() {
            if let Some((d, s)) = self.dofs.entry(node) {
                out[d] += s * v[l];
            }
        }
    }

    /// Factors an SPD matrix on the free unknowns with the cached ordering.
    pub fn factor(&self, m: &SparseMatrix) -> Result<Cholesky> {
        Cholesky::factor(m, &self.ordering)
    }

    pub fn solve(&self, m: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
        let chol = self.factor(m)?;
        solve_factored(m, &chol, rhs)
    }
}

/// Material assignment and sources of one field problem.
#[derive(Clone, Copy, Debug)]
pub struct FieldProblem<'a> {
    pub laws: &'a [MaterialLaw],
    /// Current density per triangle (A/m^2); empty means no current.
    pub current: &'a [f64],
    /// Uniform flux added to `curl a` everywhere.
    pub background: Vec2,
    /// Uniform field strength subtracted from `h` everywhere.
    pub h_offset: Vec2,
}

impl<'a> FieldProblem<'a> {
    pub fn new(laws: &'a [MaterialLaw], current: &'a [f64]) -> Self {
        FieldProblem {
            laws,
            current,
            background: [0.0, 0.0],
            h_offset: [0.0, 0.0],
        }
    }

    fn check(&self, disc: &Discretization) -> Result<()> {
        let nt = disc.mesh.num_triangles();
        if self.laws.len() != nt {
            return Err(Error::SizeMismatch {
                what: "element material assignment",
                expected: nt,
                got: self.laws.len(),
            });
        }
        if !self.current.is_empty() && self.current.len() != nt {
            return Err(Error::SizeMismatch {
                what: "element current density",
                expected: nt,
                got: self.current.len(),
            });
        }
        Ok(())
    }
}

/// Element flux `curl a` from nodal values.
pub fn curl_of_potential(disc: &Discretization, a: &[f64]) -> Vec<Vec2> {
    (0..disc.mesh.num_triangles())
        .map(|t| disc.geoms[t].curl_of(disc.element_values(t, a)))
        .collect()
}

fn check_nodal(disc: &Discretization, a: &[f64]) -> Result<()> {
    if a.len() != disc.mesh.num_nodes() {
        return Err(Error::SizeMismatch {
            what: "nodal potential",
            expected: disc.mesh.num_nodes(),
            got: a.len(),
        });
    }
    Ok(())
}

/// Residual `int (h(B + curl a) - h_offset) . curl v - int j v` on the free unknowns.
pub fn assemble_residual(disc: &Discretization, prob: &FieldProblem, a: &[f64]) -> Result<Vec<f64>> {
    prob.check(disc)?;
    check_nodal(disc, a)?;
    let mut r = vec![0.0; disc.n_free()];
    for t in 0..disc.mesh.num_triangles() {
        let g = &disc.geoms[t];
        let c = g.curl_of(disc.element_values(t, a));
        let b = [prob.background[0] + c[0], prob.background[1] + c[1]];
        let h = prob.laws[t].h(b);
        let h = [h[0] - prob.h_offset[0], h[1] - prob.h_offset[1]];
        let j = prob.current.get(t).copied().unwrap_or(0.0) * g.area / 3.0;
        let mut local = [0.0; 3];
        for (i, l) in local.iter_mut().enumerate() {
            let ci = g.curl(i);
            *l = g.area * (h[0] * ci[0] + h[1] * ci[1]) - j;
        }
        disc.scatter(t, local, &mut r);
    }
    Ok(r)
}

/// Newton matrix `sum_e |e| G_e^T h'(b_e) G_e` on the free unknowns.
pub fn assemble_jacobian(disc: &Discretization, prob: &FieldProblem, a: &[f64]) -> Result<SparseMatrix> {
    prob.check(disc)?;
    check_nodal(disc, a)?;
    let mut m = SparseMatrix::zeros(&disc.pattern);
    for t in 0..disc.mesh.num_triangles() {
        let g = &disc.geoms[t];
        let c = g.curl_of(disc.element_values(t, a));
        let b = [prob.background[0] + c[0], prob.background[1] + c[1]];
        let jac = prob.laws[t].jacobian(b);
        let tri = disc.mesh.triangles[t];
        let curls = [g.curl(0), g.curl(1), g.curl(2)];
        for i in 0..3 {
            let Some((di, si)) = disc.dofs.entry(tri[i]) else { continue };
            let ci = curls[i];
            let jc = [
                jac[0][0] * ci[0] + jac[1][0] * ci[1],
                jac[0][1] * ci[0] + jac[1][1] * ci[1],
            ];
            for k in 0..3 {
                let Some((dk, sk)) = disc.dofs.entry(tri[k]) else { continue };
                let ck = curls[k];
                m.add(di, dk, si * sk * g.area * (jc[0] * ck[0] + jc[1] * ck[1]));
            }
        }
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping_floor: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-8,
            max_iter: 50,
            damping_floor: 1e-4,
        }
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped Newton iteration. Stops when the residual max-norm falls below
/// `tol * (1 + |F(0)|)`, where `F(0)` is the residual at zero potential (the source norm).
/// The step is halved while the residual max-norm does not decrease.
pub fn newton_solve(
    disc: &Discretization,
    prob: &FieldProblem,
    initial: Option<&[f64]>,
    op: OperatingPoint,
    cfg: &NewtonConfig,
) -> Result<FieldSolution> {
    let zero = vec![0.0; disc.mesh.num_nodes()];
    let source_norm = max_norm(&assemble_residual(disc, prob, &zero)?);
    let threshold = cfg.tol * (1.0 + source_norm);
    let mut x = match initial {
        Some(a) => {
            check_nodal(disc, a)?;
            disc.dofs.restrict(a)
        }
        None => vec![0.0; disc.n_free()],
    };
    let mut a = disc.dofs.expand(&x);
    let mut r = assemble_residual(disc, prob, &a)?;
    let mut norm = max_norm(&r);
    let mut history = vec![norm];
    let mut iterations = 0;
    while !(norm < threshold) {
        if iterations == cfg.max_iter || !norm.is_finite() {
            return Err(Error::NewtonDivergence {
                iterations,
                last: norm,
                history,
            });
        }
        let jac = assemble_jacobian(disc, prob, &a)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = disc.solve(&jac, &neg)?;
        let mut alpha = 1.0;
        loop {
            let xt: Vec<f64> = x.iter().zip(&delta).map(|(x, d)| x + alpha * d).collect();
            let at = disc.dofs.expand(&xt);
            let rt = assemble_residual(disc, prob, &at)?;
            let nt = max_norm(&rt);
            if nt < norm {
                x = xt;
                a = at;
                r = rt;
                norm = nt;
                break;
            }
            alpha *= 0.5;
            if alpha < cfg.damping_floor {
                log::debug!("Newton line search stalled at residual {norm:e}");
                return Err(Error::NewtonDivergence {
                    iterations,
                    last: norm,
                    history,
                });
            }
        }
        iterations += 1;
        history.push(norm);
        log::trace!("Newton iteration {iterations}: residual {norm:e} (step {alpha})");
    }
    let b = curl_of_potential(disc, &a)
        .into_iter()
        .map(|c| [prob.background[0] + c[0], prob.background[1] + c[1]])
        .collect();
    Ok(FieldSolution {
        a,
        b,
        op,
        iterations,
        residual_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::{MagnetLaw, MagnetSpec, MaterialParams, NU0};
    use crate::mesh::{generate_sector_mesh, BoundaryEdge, Region, SectorGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Unit square, `n x n` cells, Dirichlet on the whole boundary.
    fn unit_square(n: usize) -> Mesh {
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut t = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
                if (i + j) % 2 == 0 {
                    t.push([a, b, c]);
                    t.push([a, c, d]);
                } else {
                    t.push([a, b, d]);
                    t.push([b, c, d]);
                }
            }
        }
        let mut boundary = Vec::new();
        for k in 0..n {
            for e in [
                [idx(k, 0), idx(k + 1, 0)],
                [idx(n, k), idx(n, k + 1)],
                [idx(k + 1, n), idx(k, n)],
                [idx(0, k + 1), idx(0, k)],
            ] {
                boundary.push(BoundaryEdge {
                    nodes: e,
                    marker: BoundaryMarker::OuterDirichlet,
                });
            }
        }
        let nt = t.len();
        Mesh::new(v, t, vec![0; nt], boundary, Vec::new()).unwrap()
    }

    fn air(n: usize) -> Vec<MaterialLaw> {
        vec![MaterialLaw::air(MaterialParams::default()); n]
    }

    fn coarse_sector() -> SectorGeometry {
        SectorGeometry {
            h: 0.004,
            ..SectorGeometry::default()
        }
    }

    /// Iron everywhere except air in the airgap/slots and a linear magnet band in the rotor.
    fn machine_laws(mesh: &Mesh, law: MagnetLaw) -> Vec<MaterialLaw> {
        let p = MaterialParams::default();
        (0..mesh.num_triangles())
            .map(|t| match Region::from_id(mesh.regions[t]) {
                Region::RotorDesign => {
                    let c = mesh.centroid(t);
                    let r = crate::norm(c);
                    if (0.060..0.066).contains(&r) {
                        MaterialLaw::magnet(MagnetSpec::new(c[1].atan2(c[0]), law), p)
                    } else {
                        MaterialLaw::iron(p)
                    }
                }
                Region::StatorIron => MaterialLaw::iron(p),
                _ => MaterialLaw::air(p),
            })
            .collect()
    }

    fn slot_current(mesh: &Mesh, scale: f64) -> Vec<f64> {
        (0..mesh.num_triangles())
            .map(|t| match Region::from_id(mesh.regions[t]) {
                Region::Slot(k) => scale * 1e6 * (2.0 * PI * k as f64 / 6.0).cos(),
                _ => 0.0,
            })
            .collect()
    }

    #[test]
    fn curl_of_linear_potentials() {
        let disc = Discretization::new(unit_square(4), None).unwrap();
        let v = &disc.mesh.vertices;
        let ay: Vec<f64> = v.iter().map(|p| p[1]).collect();
        let ax: Vec<f64> = v.iter().map(|p| p[0]).collect();
        for b in curl_of_potential(&disc, &ay) {
            assert!((b[0] - 1.0).abs() < 1e-12 && b[1].abs() < 1e-12);
        }
        for b in curl_of_potential(&disc, &ax) {
            assert!(b[0].abs() < 1e-12 && (b[1] + 1.0).abs() < 1e-12);
        }
        let zero = vec![0.0; v.len()];
        assert!(curl_of_potential(&disc, &zero).iter().all(|b| *b == [0.0, 0.0]));
    }

    #[test]
    fn air_residual_is_zero_at_rest_and_linear() {
        let disc = Discretization::new(unit_square(6), None).unwrap();
        let laws = air(disc.mesh.num_triangles());
        let j = vec![3.0; disc.mesh.num_triangles()];
        let n = disc.mesh.num_nodes();
        let none = FieldProblem::new(&laws, &[]);
        assert!(assemble_residual(&disc, &none, &vec![0.0; n]).unwrap().iter().all(|&r| r == 0.0));

        let prob = FieldProblem::new(&laws, &j);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a1 = disc.dofs.expand(&(0..disc.n_free()).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
        let a2 = disc.dofs.expand(&(0..disc.n_free()).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
        let sum: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x + y).collect();
        let r1 = assemble_residual(&disc, &prob, &a1).unwrap();
        let r2 = assemble_residual(&disc, &prob, &a2).unwrap();
        let r12 = assemble_residual(&disc, &prob, &sum).unwrap();
        let r0 = assemble_residual(&disc, &prob, &vec![0.0; n]).unwrap();
        for i in 0..r1.len() {
            // r(a1 + a2) = r(a1) + r(a2) - r(0)
            assert!((r12[i] - (r1[i] + r2[i] - r0[i])).abs() < 1e-8 * NU0);
        }
    }

    #[test]
    fn wrong_material_count_is_an_error() {
        let disc = Discretization::new(unit_square(2), None).unwrap();
        let laws = air(3);
        let prob = FieldProblem::new(&laws, &[]);
        let a = vec![0.0; disc.mesh.num_nodes()];
        assert!(matches!(
            assemble_residual(&disc, &prob, &a),
            Err(Error::SizeMismatch { .. })
        ));
    }

    #[test]
    fn air_jacobian_is_scaled_laplacian() {
        let disc = Discretization::new(unit_square(3), None).unwrap();
        let laws = air(disc.mesh.num_triangles());
        let prob = FieldProblem::new(&laws, &[]);
        let a0 = vec![0.0; disc.mesh.num_nodes()];
        let a1: Vec<f64> = (0..a0.len()).map(|i| (i as f64).sin()).collect();
        let m0 = assemble_jacobian(&disc, &prob, &a0).unwrap();
        let m1 = assemble_jacobian(&disc, &prob, &a1).unwrap();
        assert_eq!(m0, m1);
        // Interior node of a uniform criss-cross-free square grid: 4 on the diagonal (times nu0).
        let d = disc.dofs.entry(5).unwrap().0;
        assert!((m0.get(d, d) / NU0 - 4.0).abs() < 1e-12);
        assert!(m0.asymmetry() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mesh = generate_sector_mesh(&coarse_sector()).unwrap();
        let disc = Discretization::new(mesh, Some(-1.0)).unwrap();
        let laws = machine_laws(&disc.mesh, MagnetLaw::Nonlinear);
        let j = slot_current(&disc.mesh, 1.0);
        let prob = FieldProblem::new(&laws, &j);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..disc.n_free()).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let v: Vec<f64> = (0..disc.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = disc.dofs.expand(&x);
        let jac = assemble_jacobian(&disc, &prob, &a).unwrap();
        let jv = jac.mul_vec(&v);
        let eps = 1e-7;
        let shift = |s: f64| {
            let xs: Vec<f64> = x.iter().zip(&v).map(|(x, v)| x + s * v).collect();
            assemble_residual(&disc, &prob, &disc.dofs.expand(&xs)).unwrap()
        };
        let (rp, rm) = (shift(eps), shift(-eps));
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(p, m)| (p - m) / (2.0 * eps)).collect();
        let num: f64 = fd.iter().zip(&jv).map(|(f, j)| (f - j).powi(2)).sum::<f64>().sqrt();
        let den: f64 = jv.iter().map(|j| j * j).sum::<f64>().sqrt();
        assert!(num / den < 1e-5, "relative error {}", num / den);
        assert!(jac.asymmetry() < 1e-12);
    }

    #[test]
    fn linear_magnet_jacobian_is_state_independent() {
        let mesh = generate_sector_mesh(&coarse_sector()).unwrap();
        let disc = Discretization::new(mesh, Some(-1.0)).unwrap();
        let p = MaterialParams::default();
        let laws: Vec<MaterialLaw> = (0..disc.mesh.num_triangles())
            .map(|t| {
                if t % 3 == 0 {
                    MaterialLaw::magnet(MagnetSpec::new(0.3, MagnetLaw::Linear), p)
                } else {
                    MaterialLaw::air(p)
                }
            })
            .collect();
        let prob = FieldProblem::new(&laws, &[]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rand_a = || disc.dofs.expand(&(0..disc.n_free()).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
        let (a1, a2) = (rand_a(), rand_a());
        assert_eq!(
            assemble_jacobian(&disc, &prob, &a1).unwrap(),
            assemble_jacobian(&disc, &prob, &a2).unwrap()
        );
    }

    fn manufactured_errors(n: usize) -> (f64, f64) {
        let disc = Discretization::new(unit_square(n), None).unwrap();
        let laws = air(disc.mesh.num_triangles());
        let exact = |p: Vec2| (PI * p[0]).sin() * (PI * p[1]).sin();
        let grad = |p: Vec2| {
            [
                PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
                PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
            ]
        };
        // Current per element: exact load integral of j = 2 pi^2 nu0 a* against each
        // basis function, approximated by the centroid value.
        let j: Vec<f64> = (0..disc.mesh.num_triangles())
            .map(|t| 2.0 * PI * PI * NU0 * exact(disc.mesh.centroid(t)))
            .collect();
        let prob = FieldProblem::new(&laws, &j);
        let sol = newton_solve(&disc, &prob, None, OperatingPoint::Nominal, &NewtonConfig::default()).unwrap();
        let (mut l2, mut h1) = (0.0, 0.0);
        for t in 0..disc.mesh.num_triangles() {
            let tri = disc.mesh.triangles[t];
            let g = &disc.geoms[t];
            for e in 0..3 {
                let (p, q) = (tri[e], tri[(e + 1) % 3]);
                let (vp, vq) = (disc.mesh.vertices[p], disc.mesh.vertices[q]);
                let mid = [(vp[0] + vq[0]) / 2.0, (vp[1] + vq[1]) / 2.0];
                let ah = (sol.a[p] + sol.a[q]) / 2.0;
                l2 += g.area / 3.0 * (ah - exact(mid)).powi(2);
                let gr = grad(mid);
                let b = sol.b[t];
                // b = (da/dy, -da/dx)
                h1 += g.area / 3.0 * ((b[0] - gr[1]).powi(2) + (b[1] + gr[0]).powi(2));
            }
        }
        (l2.sqrt(), h1.sqrt())
    }

    #[test]
    fn convergence_rates() {
        let errs: Vec<(f64, f64)> = [8, 16, 32, 64].iter().map(|&n| manufactured_errors(n)).collect();
        for w in errs.windows(2) {
            let l2_rate = (w[0].0 / w[1].0).log2();
            let h1_rate = (w[0].1 / w[1].1).log2();
            assert!(l2_rate >= 1.9, "L2 rate {l2_rate}");
            assert!(h1_rate >= 0.95, "H1 rate {h1_rate}");
        }
    }

    #[test]
    fn linear_problem_converges_in_one_step() {
        let mesh = generate_sector_mesh(&coarse_sector()).unwrap();
        let disc = Discretization::new(mesh, Some(-1.0)).unwrap();
        let p = MaterialParams::default();
        let laws: Vec<MaterialLaw> = machine_laws(&disc.mesh, MagnetLaw::Linear)
            .into_iter()
            .map(|l| if l.is_affine() { l } else { MaterialLaw::air(p) })
            .collect();
        let j = slot_current(&disc.mesh, 1.0);
        let prob = FieldProblem::new(&laws, &j);
        let sol = newton_solve(&disc, &prob, None, OperatingPoint::Nominal, &NewtonConfig::default()).unwrap();
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn nonlinear_iron_with_strong_current() {
        let mesh = generate_sector_mesh(&coarse_sector()).unwrap();
        let disc = Discretization::new(mesh, Some(-1.0)).unwrap();
        let laws = machine_laws(&disc.mesh, MagnetLaw::Nonlinear);
        let j = slot_current(&disc.mesh, 10.0);
        let prob = FieldProblem::new(&laws, &j);
        let cfg = NewtonConfig::default();
        let sol = newton_solve(&disc, &prob, None, OperatingPoint::Damaging, &cfg).unwrap();
        assert!(sol.iterations <= 25, "{} iterations", sol.iterations);
        assert!(sol.residual_history.windows(2).all(|w| w[1] <= w[0]));
        let r = assemble_residual(&disc, &prob, &sol.a).unwrap();
        let threshold = cfg.tol * (1.0 + sol.residual_history[0].max(max_norm(
            &assemble_residual(&disc, &prob, &vec![0.0; sol.a.len()]).unwrap(),
        )));
        assert!(max_norm(&r) < threshold);

        let again = newton_solve(&disc, &prob, Some(&sol.a), OperatingPoint::Damaging, &cfg).unwrap();
        assert_eq!(again.iterations, 0);
    }

    #[test]
    fn newton_failure_carries_history() {
        let mesh = generate_sector_mesh(&coarse_sector()).unwrap();
        let disc = Discretization::new(mesh, Some(-1.0)).unwrap();
        let laws = machine_laws(&disc.mesh, MagnetLaw::Nonlinear);
        let j = slot_current(&disc.mesh, 10.0);
        let prob = FieldProblem::new(&laws, &j);
        let cfg = NewtonConfig {
            max_iter: 2,
            ..NewtonConfig::default()
        };
        match newton_solve(&disc, &prob, None, OperatingPoint::Nominal, &cfg) {
            Err(Error::NewtonDivergence { iterations, history, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(history.len(), 3);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn antiperiodic_sector_matches_full_annulus() {
        let sector = coarse_sector();
        let full = SectorGeometry {
            sector_angle: 2.0 * PI,
            slots: 48,
            ..sector.clone()
        };
        let solve = |g: &SectorGeometry, sign: Option<f64>| {
            let mesh = generate_sector_mesh(g).unwrap();
            let disc = Discretization::new(mesh, sign).unwrap();
            let p = MaterialParams::default();
            // Rotor iron with alternating radial magnets per pole, slot currents alternating
            // per pole: the field is anti-periodic over one eighth.
            let laws: Vec<MaterialLaw> = (0..disc.mesh.num_triangles())
                .map(|t| match Region::from_id(disc.mesh.regions[t]) {
                    Region::RotorDesign => {
                        let c = disc.mesh.centroid(t);
                        let r = crate::norm(c);
                        let th = c[1].atan2(c[0]).rem_euclid(2.0 * PI);
                        let pole = (th / (PI / 4.0)).floor() as i32;
                        if (0.060..0.066).contains(&r) {
                            let angle = th + if pole % 2 == 0 { 0.0 } else { PI };
                            MaterialLaw::magnet(MagnetSpec::new(angle, MagnetLaw::Nonlinear), p)
                        } else {
                            MaterialLaw::iron(p)
                        }
                    }
                    Region::StatorIron => MaterialLaw::iron(p),
                    _ => MaterialLaw::air(p),
                })
                .collect();
            let j: Vec<f64> = (0..disc.mesh.num_triangles())
                .map(|t| match Region::from_id(disc.mesh.regions[t]) {
                    Region::Slot(k) => {
                        let k = k as i32 - 1;
                        let sign = if (k / 6) % 2 == 0 { 1.0 } else { -1.0 };
                        sign * 2e6 * (2.0 * PI * (k % 6) as f64 / 6.0).cos()
                    }
                    _ => 0.0,
                })
                .collect();
            let prob = FieldProblem::new(&laws, &j);
            let sol = newton_solve(&disc, &prob, None, OperatingPoint::Nominal, &NewtonConfig::default()).unwrap();
            (disc, sol)
        };
        let (sd, ss) = solve(&sector, Some(-1.0));
        let (fd, fs) = solve(&full, None);
        let n_cols_s = sd.mesh.num_nodes() / (fd.mesh.num_nodes() / (sector.cells_per_pitch() * 48));
        let n_theta_f = sector.cells_per_pitch() * 48;
        let n_rings = fd.mesh.num_nodes() / n_theta_f;
        assert_eq!(n_cols_s * n_rings, sd.mesh.num_nodes());
        let scale = max_norm(&fs.a);
        let mut err: f64 = 0.0;
        for i in 0..n_rings {
            for j in 0..n_cols_s {
                let s = i * n_cols_s + j;
                let f = i * n_theta_f + j;
                assert!((sd.mesh.vertices[s][0] - fd.mesh.vertices[f][0]).abs() < 1e-12);
                err = err.max((ss.a[s] - fs.a[f]).abs());
            }
        }
        assert!(err < 1e-6 * scale, "max deviation {err:e} vs scale {scale:e}");
        for &[a, b] in &sd.mesh.periodic {
            assert_eq!(ss.a[a], -ss.a[b]);
        }
    }
}
