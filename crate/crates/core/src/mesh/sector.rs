//! Structured polar mesh of one machine sector.
//!
//! Radial layout, inside out: shaft (bore to shaft radius), rotor design annulus, airgap,
//! tooth tips, slot band (radial trapezoid slots alternating with teeth), stator yoke. The
//! angular division is uniform over the whole sector so that the two cut edges carry
//! matching nodes at identical radii.

use std::f64::consts::{FRAC_PI_4, PI};

use super::{BoundaryEdge, BoundaryMarker, Mesh};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    RotorDesign,
    Airgap,
    StatorIron,
    Shaft,
    /// Stator slot, numbered from 1 in increasing angle.
    Slot(u32),
}

impl Region {
    pub fn id(self) -> u32 {
        match self {
            Region::RotorDesign => 0,
            Region::Airgap => 1,
            Region::StatorIron => 2,
            Region::Shaft => 3,
            Region::Slot(k) => 3 + k,
        }
    }

    pub fn from_id(id: u32) -> Self {
        match id {
            0 => Region::RotorDesign,
            1 => Region::Airgap,
            2 => Region::StatorIron,
            3 => Region::Shaft,
            k => Region::Slot(k - 3),
        }
    }

    pub fn name(self) -> String {
        match self {
            Region::RotorDesign => "rotor_design".into(),
            Region::Airgap => "airgap".into(),
            Region::StatorIron => "stator_iron".into(),
            Region::Shaft => "shaft".into(),
            Region::Slot(k) => format!("slot_{k}"),
        }
    }
}

/// Parameters of the sector generator. Lengths in meters, angle in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorGeometry {
    /// Inner Dirichlet radius; the shaft region spans `bore_radius..shaft_radius`.
    pub bore_radius: f64,
    pub shaft_radius: f64,
    pub rotor_radius: f64,
    pub airgap: f64,
    pub stator_radius: f64,
    pub sector_angle: f64,
    pub slots: u32,
    /// Radial depth of the tooth tips between airgap and slot.
    pub slot_offset: f64,
    pub slot_depth: f64,
    /// Fraction of the slot pitch occupied by the slot opening.
    pub slot_width_fraction: f64,
    /// Target element size.
    pub h: f64,
    /// Minimum number of element layers across the airgap.
    pub airgap_layers: u32,
}

impl Default for SectorGeometry {
    fn default() -> Self {
        SectorGeometry {
            bore_radius: 0.015,
            shaft_radius: 0.030,
            rotor_radius: 0.078,
            airgap: 0.001,
            stator_radius: 0.130,
            sector_angle: FRAC_PI_4,
            slots: 6,
            slot_offset: 0.001,
            slot_depth: 0.020,
            slot_width_fraction: 0.5,
            h: 0.001,
            airgap_layers: 4,
        }
    }
}

impl SectorGeometry {
    pub fn radii(&self) -> [f64; 7] {
        let gap_outer = self.rotor_radius + self.airgap;
        [
            self.bore_radius,
            self.shaft_radius,
            self.rotor_radius,
            gap_outer,
            gap_outer + self.slot_offset,
            gap_outer + self.slot_offset + self.slot_depth,
            self.stator_radius,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let names = [
            "bore_radius",
            "shaft_radius",
            "rotor_radius",
            "rotor_radius+airgap",
            "rotor_radius+airgap+slot_offset",
            "slot bottom (…+slot_depth)",
            "stator_radius",
        ];
        let r = self.radii();
        if !(r[0] > 0.0) {
            return Err(Error::Geometry(format!(
                "bore_radius must be positive, got {}",
                r[0]
            )));
        }
        for k in 1..r.len() {
            if !(r[k] > r[k - 1]) {
                return Err(Error::Geometry(format!(
                    "radii must be strictly increasing: {} = {} is not greater than {} = {}",
                    names[k],
                    r[k],
                    names[k - 1],
                    r[k - 1]
                )));
            }
        }
        if !(self.sector_angle > 0.0 && self.sector_angle <= 2.0 * PI + 1e-12) {
            return Err(Error::Geometry(format!(
                "sector_angle must lie in (0, 2pi], got {}",
                self.sector_angle
            )));
        }
        if self.slots < 1 {
            return Err(Error::Geometry("slot count must be at least 1".into()));
        }
        if !(self.slot_width_fraction > 0.0 && self.slot_width_fraction < 1.0) {
            return Err(Error::Geometry(format!(
                "slot_width_fraction must lie in (0, 1), got {}",
                self.slot_width_fraction
            )));
        }
        if !(self.h > 0.0) {
            return Err(Error::Geometry(format!("h must be positive, got {}", self.h)));
        }
        if self.airgap_layers < 1 {
            return Err(Error::Geometry("airgap_layers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn is_full_annulus(&self) -> bool {
        (self.sector_angle - 2.0 * PI).abs() < 1e-12
    }

    /// Exact area of the rotor design annulus sector.
    pub fn rotor_design_area(&self) -> f64 {
        0.5 * self.sector_angle * (self.rotor_radius.powi(2) - self.shaft_radius.powi(2))
    }

    /// Exact area of the whole sector.
    pub fn sector_area(&self) -> f64 {
        0.5 * self.sector_angle * (self.stator_radius.powi(2) - self.bore_radius.powi(2))
    }

    /// Angular cells per slot pitch.
    pub fn cells_per_pitch(&self) -> usize {
        let pitch = self.sector_angle / self.slots as f64;
        ((self.rotor_radius * pitch / self.h).ceil() as usize).max(2)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Band {
    Shaft,
    Rotor,
    Airgap,
    ToothTip,
    Slots,
    Yoke,
}

/// Generates the labelled sector mesh described by `geom`.
pub fn generate_sector_mesh(geom: &SectorGeometry) -> Result<Mesh> {
    geom.validate()?;
    let r = geom.radii();
    let bands = [
        Band::Shaft,
        Band::Rotor,
        Band::Airgap,
        Band::ToothTip,
        Band::Slots,
        Band::Yoke,
    ];

    // Ring radii and the band of every ring interval.
    let mut rings = vec![r[0]];
    let mut interval_band = Vec::new();
    for (k, &band) in bands.iter().enumerate() {
        let len = r[k + 1] - r[k];
        let mut count = ((len / geom.h).ceil() as usize).max(1);
        if band == Band::Airgap {
            count = count.max(geom.airgap_layers as usize);
        }
        for s in 1..=count {
            let radius = if s == count {
                r[k + 1]
            } else {
                r[k] + len * s as f64 / count as f64
            };
            rings.push(radius);
            interval_band.push(band);
        }
    }

    let m = geom.cells_per_pitch();
    let n_theta = m * geom.slots as usize;
    let full = geom.is_full_annulus();
    let n_cols = if full { n_theta } else { n_theta + 1 };
    let n_rings = rings.len();
    let node = |i: usize, j: usize| i * n_cols + if full { j % n_theta } else { j };

    let mut vertices = Vec::with_capacity(n_rings * n_cols);
    for &radius in &rings {
        for j in 0..n_cols {
            let theta = if !full && j == n_theta {
                geom.sector_angle
            } else {
                geom.sector_angle * j as f64 / n_theta as f64
            };
            vertices.push([radius * theta.cos(), radius * theta.sin()]);
        }
    }

    let s0 = (((1.0 - geom.slot_width_fraction) * 0.5 * m as f64).round() as usize).min(m / 2);
    let s1 = m - s0;
    let mut triangles = Vec::with_capacity(2 * (n_rings - 1) * n_theta);
    let mut regions = Vec::with_capacity(2 * (n_rings - 1) * n_theta);
    for i in 0..n_rings - 1 {
        for j in 0..n_theta {
            let region = match interval_band[i] {
                Band::Shaft => Region::Shaft,
                Band::Rotor => Region::RotorDesign,
                Band::Airgap => Region::Airgap,
                Band::ToothTip | Band::Yoke => Region::StatorIron,
                Band::Slots => {
                    let jj = j % m;
                    if jj >= s0 && jj < s1 {
                        Region::Slot((j / m) as u32 + 1)
                    } else {
                        Region::StatorIron
                    }
                }
            };
            let n00 = node(i, j);
            let n10 = node(i + 1, j);
            let n11 = node(i + 1, j + 1);
            let n01 = node(i, j + 1);
            let (t1, t2) = if (i + j) % 2 == 0 {
                ([n00, n10, n11], [n00, n11, n01])
            } else {
                ([n00, n10, n01], [n10, n11, n01])
            };
            triangles.push(t1);
            triangles.push(t2);
            regions.push(region.id());
            regions.push(region.id());
        }
    }

    let mut boundary = Vec::new();
    for j in 0..n_theta {
        boundary.push(BoundaryEdge {
            nodes: [node(0, j), node(0, j + 1)],
            marker: BoundaryMarker::InnerDirichlet,
        });
        boundary.push(BoundaryEdge {
            nodes: [node(n_rings - 1, j), node(n_rings - 1, j + 1)],
            marker: BoundaryMarker::OuterDirichlet,
        });
    }
    let mut periodic = Vec::new();
    if !full {
        for i in 0..n_rings - 1 {
            boundary.push(BoundaryEdge {
                nodes: [node(i, 0), node(i + 1, 0)],
                marker: BoundaryMarker::CutA,
            });
            boundary.push(BoundaryEdge {
                nodes: [node(i, n_theta), node(i + 1, n_theta)],
                marker: BoundaryMarker::CutB,
            });
        }
        for i in 1..n_rings - 1 {
            periodic.push([node(i, 0), node(i, n_theta)]);
        }
    }

    Mesh::new(vertices, triangles, regions, boundary, periodic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn coarse() -> SectorGeometry {
        SectorGeometry {
            h: 0.004,
            ..SectorGeometry::default()
        }
    }

    #[test]
    fn default_sector_has_six_slots_and_one_design_region() {
        let mesh = generate_sector_mesh(&coarse()).unwrap();
        let regions: BTreeSet<Region> = mesh.regions.iter().map(|&r| Region::from_id(r)).collect();
        let slots = regions.iter().filter(|r| matches!(r, Region::Slot(_))).count();
        assert_eq!(slots, 6);
        assert!(regions.contains(&Region::RotorDesign));
        for t in 0..mesh.num_triangles() {
            assert!(mesh.area(t) > 0.0);
        }
    }

    #[test]
    fn areas_match_analytic_sector() {
        let g = coarse();
        let mesh = generate_sector_mesh(&g).unwrap();
        let total = mesh.total_area();
        assert!((total - g.sector_area()).abs() / g.sector_area() < 5e-3);
        let design = mesh.region_area(Region::RotorDesign.id());
        assert!((design - g.rotor_design_area()).abs() / g.rotor_design_area() < 5e-3);
    }

    #[test]
    fn periodic_pairs_are_a_bijection_of_cut_nodes() {
        let mesh = generate_sector_mesh(&coarse()).unwrap();
        let dirichlet: BTreeSet<usize> = mesh
            .nodes_with_marker(&[BoundaryMarker::InnerDirichlet, BoundaryMarker::OuterDirichlet])
            .into_iter()
            .collect();
        let cut_a: BTreeSet<usize> = mesh
            .nodes_with_marker(&[BoundaryMarker::CutA])
            .into_iter()
            .filter(|n| !dirichlet.contains(n))
            .collect();
        let cut_b: BTreeSet<usize> = mesh
            .nodes_with_marker(&[BoundaryMarker::CutB])
            .into_iter()
            .filter(|n| !dirichlet.contains(n))
            .collect();
        let pa: BTreeSet<usize> = mesh.periodic.iter().map(|p| p[0]).collect();
        let pb: BTreeSet<usize> = mesh.periodic.iter().map(|p| p[1]).collect();
        assert_eq!(pa, cut_a);
        assert_eq!(pb, cut_b);
        assert_eq!(mesh.periodic.len(), cut_a.len());
    }

    #[test]
    fn halving_h_roughly_quadruples_triangles() {
        let g = SectorGeometry {
            h: 0.001,
            ..SectorGeometry::default()
        };
        let n1 = generate_sector_mesh(&g).unwrap().num_triangles() as f64;
        let g2 = SectorGeometry { h: 0.0005, ..g };
        let n2 = generate_sector_mesh(&g2).unwrap().num_triangles() as f64;
        let ratio = n2 / n1;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_non_increasing_radii() {
        let g = SectorGeometry {
            rotor_radius: 0.02,
            ..SectorGeometry::default()
        };
        let err = generate_sector_mesh(&g).unwrap_err();
        assert!(err.to_string().contains("rotor_radius"), "{err}");
    }

    #[test]
    fn full_annulus_has_no_cuts() {
        let g = SectorGeometry {
            sector_angle: 2.0 * PI,
            slots: 48,
            h: 0.006,
            ..SectorGeometry::default()
        };
        let mesh = generate_sector_mesh(&g).unwrap();
        assert!(mesh.periodic.is_empty());
        assert!((mesh.total_area() - g.sector_area()).abs() / g.sector_area() < 5e-3);
    }
}
