//! The machine sector as a field problem: rotor materials, slot currents at the two operating
//! points, airgap torque and the adjoint problems for torque and the demagnetization constraint.

use std::f64::consts::PI;

use crate::fem::{
    assemble_jacobian, curl_of_potential, newton_solve, Discretization, FieldProblem,
    FieldSolution, NewtonConfig, OperatingPoint, SparseMatrix,
};
use crate::materials::{MagnetLaw, MagnetSpec, MaterialLaw, MaterialParams, NU0};
use crate::mesh::{generate_sector_mesh, Mesh, Region, SectorGeometry};
use crate::penalty::{constraint_functional, demag_metric, phi_p_prime, MagnetElement, PenaltyConfig};
use crate::{dot, Error, Result, Vec2};

/// The four rotor materials, in level-set order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Material {
    Iron = 0,
    Magnet1 = 1,
    Magnet2 = 2,
    Air = 3,
}

impl Material {
    pub const ALL: [Material; 4] = [
        Material::Iron,
        Material::Magnet1,
        Material::Magnet2,
        Material::Air,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Material::Iron => "iron",
            Material::Magnet1 => "magnet1",
            Material::Magnet2 => "magnet2",
            Material::Air => "air",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Magnet number (0 or 1) for magnet materials.
    pub fn magnet_index(self) -> Option<usize> {
        match self {
            Material::Magnet1 => Some(0),
            Material::Magnet2 => Some(1),
            _ => None,
        }
    }

    pub fn is_magnet(self) -> bool {
        self.magnet_index().is_some()
    }
}

/// Constitutive data shared by all rotor materials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialSet {
    pub params: MaterialParams,
    pub magnet_law: MagnetLaw,
    /// Easy-axis angles of magnet 1 and magnet 2 (radians).
    pub magnet_angles: [f64; 2],
}

impl Default for MaterialSet {
    fn default() -> Self {
        MaterialSet {
            params: MaterialParams::default(),
            magnet_law: MagnetLaw::Nonlinear,
            magnet_angles: [30f64.to_radians(), 15f64.to_radians()],
        }
    }
}

impl MaterialSet {
    pub fn law(&self, m: Material) -> MaterialLaw {
        match m {
            Material::Iron => MaterialLaw::iron(self.params),
            Material::Air => MaterialLaw::air(self.params),
            Material::Magnet1 | Material::Magnet2 => {
                let k = m.magnet_index().unwrap();
                MaterialLaw::magnet(MagnetSpec::new(self.magnet_angles[k], self.magnet_law), self.params)
            }
        }
    }

    pub fn easy_axis(&self, magnet: usize) -> Vec2 {
        let a = self.magnet_angles[magnet];
        [a.cos(), a.sin()]
    }

    pub fn with_law(self, magnet_law: MagnetLaw) -> Self {
        MaterialSet { magnet_law, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    /// Electrical phase offset.
    pub fn offset(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * PI / 3.0,
            Phase::C => -4.0 * PI / 3.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotPhase {
    pub phase: Phase,
    pub polarity: f64,
}

/// Parses a pattern like `A+ A- B+ B- C+ C-`, one token per slot in increasing angle.
pub fn parse_phase_pattern(s: &str) -> Result<Vec<SlotPhase>> {
    s.split_whitespace()
        .map(|tok| {
            let mut c = tok.chars();
            let phase = match c.next() {
                Some('A') => Phase::A,
                Some('B') => Phase::B,
                Some('C') => Phase::C,
                _ => return Err(Error::config("source.phase_pattern", format!("bad phase token `{tok}`"))),
            };
            let polarity = match (c.next(), c.next()) {
                (Some('+'), None) => 1.0,
                (Some('-'), None) => -1.0,
                _ => return Err(Error::config("source.phase_pattern", format!("bad polarity in `{tok}`"))),
            };
            Ok(SlotPhase { phase, polarity })
        })
        .collect()
}

pub fn format_phase_pattern(p: &[SlotPhase]) -> String {
    p.iter()
        .map(|s| {
            let ph = match s.phase {
                Phase::A => 'A',
                Phase::B => 'B',
                Phase::C => 'C',
            };
            format!("{ph}{}", if s.polarity > 0.0 { '+' } else { '-' })
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceConfig {
    /// Effective slot current (A).
    pub j_eff: f64,
    pub theta0_deg: f64,
    pub damaging_factor: f64,
    pub pattern: Vec<SlotPhase>,
    pub pole_pairs: u32,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            j_eff: 1512.5,
            theta0_deg: 6.0,
            damaging_factor: 1.5,
            pattern: parse_phase_pattern("A+ A- B+ B- C+ C-").unwrap(),
            pole_pairs: 4,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damaging_factor > 0.0) {
            return Err(Error::config("source.damaging_factor", "must be positive"));
        }
        if !self.j_eff.is_finite() {
            return Err(Error::config("source.j_eff", "must be finite"));
        }
        if self.pattern.is_empty() {
            return Err(Error::config("source.phase_pattern", "no slots assigned"));
        }
        Ok(())
    }

    fn factor(&self, op: OperatingPoint) -> f64 {
        match op {
            OperatingPoint::Nominal => 1.0,
            OperatingPoint::Damaging => self.damaging_factor,
        }
    }

    /// Nominal slot current (A) before division by the slot area.
    pub fn slot_current(&self, slot: SlotPhase) -> f64 {
        let angle = self.theta0_deg.to_radians() * self.pole_pairs as f64 + slot.phase.offset();
        slot.polarity * 2f64.sqrt() * self.j_eff * angle.cos()
    }
}

/// Piecewise constant current density (A/m^2) per triangle.
pub fn slot_current_density(mesh: &Mesh, src: &SourceConfig, op: OperatingPoint) -> Result<Vec<f64>> {
    let n_slots = src.pattern.len();
    let mut area = vec![0.0; n_slots];
    for t in 0..mesh.num_triangles() {
        if let Region::Slot(k) = Region::from_id(mesh.regions[t]) {
            let k = k as usize;
            if k == 0 || k > n_slots {
                return Err(Error::config(
                    "source.phase_pattern",
                    format!("slot {k} has no phase assignment ({n_slots} given)"),
                ));
            }
            area[k - 1] += mesh.area(t);
        }
    }
    if let Some(k) = area.iter().position(|&a| !(a > 0.0)) {
        return Err(Error::Invalid(format!("slot {} has zero area", k + 1)));
    }
    let density: Vec<f64> = (0..n_slots)
        .map(|k| src.factor(op) * (src.slot_current(src.pattern[k]) / area[k]))
        .collect();
    Ok((0..mesh.num_triangles())
        .map(|t| match Region::from_id(mesh.regions[t]) {
            Region::Slot(k) => density[k as usize - 1],
            _ => 0.0,
        })
        .collect())
}

/// Load vector `int j phi_i` on the free unknowns. The damaging load is the nominal one
/// scaled by the damaging factor.
pub fn assemble_source(disc: &Discretization, src: &SourceConfig, op: OperatingPoint) -> Result<Vec<f64>> {
    let j = slot_current_density(&disc.mesh, src, OperatingPoint::Nominal)?;
    let mut f = vec![0.0; disc.n_free()];
    for (t, jt) in j.iter().enumerate() {
        if *jt != 0.0 {
            let v = jt * disc.geoms[t].area / 3.0;
            disc.scatter(t, [v; 3], &mut f);
        }
    }
    let k = src.factor(op);
    if k != 1.0 {
        f.iter_mut().for_each(|v| *v *= k);
    }
    Ok(f)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorqueConfig {
    pub r_inner: f64,
    pub r_outer: f64,
    pub axial_length: f64,
}

impl TorqueConfig {
    /// Annulus covering the middle half of the airgap.
    pub fn for_geometry(g: &SectorGeometry, axial_length: f64) -> Self {
        TorqueConfig {
            r_inner: g.rotor_radius + 0.25 * g.airgap,
            r_outer: g.rotor_radius + 0.75 * g.airgap,
            axial_length,
        }
    }

    pub fn validate(&self, g: &SectorGeometry) -> Result<()> {
        if !(self.r_inner < self.r_outer) {
            return Err(Error::config("torque.r_inner", "must be below torque.r_outer"));
        }
        if !(self.r_inner > g.rotor_radius) {
            return Err(Error::config("torque.r_inner", "annulus must lie inside the airgap"));
        }
        if !(self.r_outer < g.rotor_radius + g.airgap) {
            return Err(Error::config("torque.r_outer", "annulus must lie inside the airgap"));
        }
        if !(self.axial_length > 0.0) {
            return Err(Error::config("machine.axial_length", "must be positive"));
        }
        Ok(())
    }

    fn scale(&self) -> f64 {
        self.axial_length * NU0 / (self.r_outer - self.r_inner)
    }
}

/// Triangles whose centroid lies in the torque annulus, with radial/tangential unit vectors.
fn annulus(mesh: &Mesh, cfg: &TorqueConfig) -> Result<Vec<(usize, f64, Vec2, Vec2)>> {
    let sel: Vec<_> = (0..mesh.num_triangles())
        .filter_map(|t| {
            let c = mesh.centroid(t);
            let r = crate::norm(c);
            (r >= cfg.r_inner && r <= cfg.r_outer).then(|| {
                let er = [c[0] / r, c[1] / r];
                (t, r, er, [-er[1], er[0]])
            })
        })
        .collect();
    if sel.is_empty() {
        return Err(Error::Invalid(format!(
            "torque annulus [{}, {}] contains no triangle centroids",
            cfg.r_inner, cfg.r_outer
        )));
    }
    Ok(sel)
}

/// Arkkio torque `L nu0/(r_o - r_i) int r b_r b_phi` over the annulus (N m, this sector).
pub fn torque(disc: &Discretization, b: &[Vec2], cfg: &TorqueConfig) -> Result<f64> {
    let sum: f64 = annulus(&disc.mesh, cfg)?
        .into_iter()
        .map(|(t, r, er, ep)| disc.geoms[t].area * r * dot(b[t], er) * dot(b[t], ep))
        .sum();
    Ok(cfg.scale() * sum)
}

/// Gradient of [`torque`] with respect to the free unknowns.
pub fn torque_linearization(disc: &Discretization, b: &[Vec2], cfg: &TorqueConfig) -> Result<Vec<f64>> {
    let k = cfg.scale();
    let mut g = vec![0.0; disc.n_free()];
    for (t, r, er, ep) in annulus(&disc.mesh, cfg)? {
        let geo = &disc.geoms[t];
        let (br, bp) = (dot(b[t], er), dot(b[t], ep));
        let mut local = [0.0; 3];
        for (i, l) in local.iter_mut().enumerate() {
            let c = geo.curl(i);
            *l = k * geo.area * r * (dot(c, er) * bp + br * dot(c, ep));
        }
        disc.scatter(t, local, &mut g);
    }
    Ok(g)
}

/// Gradient of the relaxed constraint functional with respect to the free unknowns.
pub fn constraint_linearization(
    disc: &Discretization,
    b: &[Vec2],
    magnets: &[Option<MagnetElement>],
    cfg: &PenaltyConfig,
) -> Vec<f64> {
    let mut g = vec![0.0; disc.n_free()];
    for (t, m) in magnets.iter().enumerate() {
        let Some(m) = m else { continue };
        let d = phi_p_prime(dot(b[t], m.axis), cfg);
        if d == 0.0 {
            continue;
        }
        let geo = &disc.geoms[t];
        let local = [0, 1, 2].map(|i| geo.area * d * dot(m.axis, geo.curl(i)));
        disc.scatter(t, local, &mut g);
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Functional {
    Torque,
    Constraint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointSolution {
    pub p: Vec<f64>,
    pub curl_p: Vec<Vec2>,
    pub functional: Functional,
}

/// Solves `K p = -dJ/da` with the Newton matrix `K` at the state.
pub fn solve_adjoint(
    disc: &Discretization,
    jacobian: &SparseMatrix,
    gradient: &[f64],
    functional: Functional,
) -> Result<AdjointSolution> {
    let rhs: Vec<f64> = gradient.iter().map(|g| -g).collect();
    let x = disc.solve(jacobian, &rhs)?;
    let p = disc.dofs.expand(&x);
    let curl_p = curl_of_potential(disc, &p);
    Ok(AdjointSolution { p, curl_p, functional })
}

pub fn solve_adjoint_torque(
    disc: &Discretization,
    prob: &FieldProblem,
    state: &FieldSolution,
    cfg: &TorqueConfig,
) -> Result<AdjointSolution> {
    let k = assemble_jacobian(disc, prob, &state.a)?;
    let g = torque_linearization(disc, &state.b, cfg)?;
    solve_adjoint(disc, &k, &g, Functional::Torque)
}

pub fn solve_adjoint_constraint(
    disc: &Discretization,
    prob: &FieldProblem,
    state: &FieldSolution,
    magnets: &[Option<MagnetElement>],
    cfg: &PenaltyConfig,
) -> Result<AdjointSolution> {
    let k = assemble_jacobian(disc, prob, &state.a)?;
    let g = constraint_linearization(disc, &state.b, magnets, cfg);
    solve_adjoint(disc, &k, &g, Functional::Constraint)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MachineConfig {
    pub geometry: SectorGeometry,
    pub materials: MaterialSet,
    pub source: SourceConfig,
    pub torque: TorqueConfig,
    pub newton: NewtonConfig,
    pub penalty: PenaltyConfig,
    pub antiperiodic_sign: f64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        let geometry = SectorGeometry::default();
        let torque = TorqueConfig::for_geometry(&geometry, 0.1);
        MachineConfig {
            geometry,
            materials: MaterialSet::default(),
            source: SourceConfig::default(),
            torque,
            newton: NewtonConfig::default(),
            penalty: PenaltyConfig::default(),
            antiperiodic_sign: -1.0,
        }
    }
}

/// Fields and functionals of one design at both operating points.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub nominal: FieldSolution,
    pub damaging: FieldSolution,
    pub torque: f64,
    /// Relaxed constraint at the damaging point (T m^2).
    pub constraint: f64,
    pub demag_nominal: f64,
    pub demag_damaging: f64,
    pub magnet_volume: f64,
}

/// Discretized machine sector with fixed non-design materials and precomputed sources.
#[derive(Clone, Debug)]
pub struct MachineModel {
    pub cfg: MachineConfig,
    pub disc: Discretization,
    /// Triangles of the rotor design region, ascending.
    pub design_elements: Vec<usize>,
    current_nominal: Vec<f64>,
    current_damaging: Vec<f64>,
}

impl MachineModel {
    pub fn new(cfg: MachineConfig) -> Result<Self> {
        let mesh = generate_sector_mesh(&cfg.geometry)?;
        Self::from_mesh(cfg, mesh)
    }

    pub fn from_mesh(cfg: MachineConfig, mesh: Mesh) -> Result<Self> {
        cfg.source.validate()?;
        cfg.penalty
            .validate()
            .map_err(|m| Error::config("penalty", m))?;
        cfg.materials
            .params
            .validate()
            .map_err(|m| Error::config("material", m))?;
        let sign = if mesh.periodic.is_empty() {
            None
        } else {
            Some(cfg.antiperiodic_sign)
        };
        let current_nominal = slot_current_density(&mesh, &cfg.source, OperatingPoint::Nominal)?;
        let current_damaging = slot_current_density(&mesh, &cfg.source, OperatingPoint::Damaging)?;
        let disc = Discretization::new(mesh, sign)?;
        let design_elements = (0..disc.mesh.num_triangles())
            .filter(|&t| disc.mesh.regions[t] == Region::RotorDesign.id())
            .collect();
        annulus(&disc.mesh, &cfg.torque)?;
        Ok(MachineModel {
            cfg,
            disc,
            design_elements,
            current_nominal,
            current_damaging,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.disc.mesh
    }

    pub fn design_area(&self) -> f64 {
        self.design_elements.iter().map(|&t| self.disc.geoms[t].area).sum()
    }

    /// Labels of all triangles with every design triangle set to `fill`.
    pub fn uniform_labels(&self, fill: Material) -> Vec<Material> {
        (0..self.disc.mesh.num_triangles())
            .map(|t| match Region::from_id(self.disc.mesh.regions[t]) {
                Region::RotorDesign => fill,
                Region::StatorIron => Material::Iron,
                _ => Material::Air,
            })
            .collect()
    }

    pub fn current(&self, op: OperatingPoint) -> &[f64] {
        match op {
            OperatingPoint::Nominal => &self.current_nominal,
            OperatingPoint::Damaging => &self.current_damaging,
        }
    }

    pub fn laws(&self, labels: &[Material]) -> Vec<MaterialLaw> {
        labels.iter().map(|&m| self.cfg.materials.law(m)).collect()
    }

    pub fn magnet_elements(&self, labels: &[Material]) -> Vec<Option<MagnetElement>> {
        labels
            .iter()
            .map(|m| {
                m.magnet_index().map(|k| MagnetElement {
                    magnet: k,
                    axis: self.cfg.materials.easy_axis(k),
                })
            })
            .collect()
    }

    pub fn magnet_volume(&self, labels: &[Material]) -> f64 {
        self.design_elements
            .iter()
            .filter(|&&t| labels[t].is_magnet())
            .map(|&t| self.disc.geoms[t].area)
            .sum()
    }

    fn check_labels(&self, labels: &[Material]) -> Result<()> {
        if labels.len() != self.disc.mesh.num_triangles() {
            return Err(Error::SizeMismatch {
                what: "element labels",
                expected: self.disc.mesh.num_triangles(),
                got: labels.len(),
            });
        }
        Ok(())
    }

    pub fn solve_with(
        &self,
        laws: &[MaterialLaw],
        op: OperatingPoint,
        initial: Option<&[f64]>,
    ) -> Result<FieldSolution> {
        let prob = FieldProblem::new(laws, self.current(op));
        newton_solve(&self.disc, &prob, initial, op, &self.cfg.newton)
    }

    pub fn solve(&self, labels: &[Material], op: OperatingPoint, initial: Option<&[f64]>) -> Result<FieldSolution> {
        self.check_labels(labels)?;
        self.solve_with(&self.laws(labels), op, initial)
    }

    pub fn torque(&self, field: &FieldSolution) -> Result<f64> {
        torque(&self.disc, &field.b, &self.cfg.torque)
    }

    pub fn constraint(&self, labels: &[Material], field: &FieldSolution) -> Result<f64> {
        constraint_functional(&field.b, &self.disc.areas(), &self.magnet_elements(labels), &self.cfg.penalty)
    }

    pub fn demag(&self, labels: &[Material], field: &FieldSolution) -> Result<f64> {
        demag_metric(&field.b, &self.disc.areas(), &self.magnet_elements(labels), &self.cfg.penalty, 2)
    }

    /// Solves both operating points (the damaging solve starts from the nominal field) and
    /// evaluates torque, constraint and demagnetization.
    pub fn evaluate(&self, labels: &[Material]) -> Result<Evaluation> {
        let nominal = self.solve(labels, OperatingPoint::Nominal, None)?;
        let damaging = self.solve(labels, OperatingPoint::Damaging, Some(&nominal.a))?;
        Ok(Evaluation {
            torque: self.torque(&nominal)?,
            constraint: self.constraint(labels, &damaging)?,
            demag_nominal: self.demag(labels, &nominal)?,
            demag_damaging: self.demag(labels, &damaging)?,
            magnet_volume: self.magnet_volume(labels),
            nominal,
            damaging,
        })
    }

    pub fn adjoint_torque(&self, labels: &[Material], state: &FieldSolution) -> Result<AdjointSolution> {
        let laws = self.laws(labels);
        let prob = FieldProblem::new(&laws, self.current(state.op));
        solve_adjoint_torque(&self.disc, &prob, state, &self.cfg.torque)
    }

    pub fn adjoint_constraint(&self, labels: &[Material], state: &FieldSolution) -> Result<AdjointSolution> {
        let laws = self.laws(labels);
        let prob = FieldProblem::new(&laws, self.current(state.op));
        solve_adjoint_constraint(&self.disc, &prob, state, &self.magnet_elements(labels), &self.cfg.penalty)
    }
}
