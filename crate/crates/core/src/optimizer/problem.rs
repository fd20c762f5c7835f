//! The machine sector as a [`TopologyProblem`] and the parametric initial design.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{DesignSpace, DesignState, Objective, Sensitivities, TopologyProblem};
use crate::fem::FieldSolution;
use crate::machine::{Evaluation, MachineModel, Material};
use crate::tderiv::{evaluate_sample, ExteriorMesh, PairLaws, TableSet, TdSample};
use crate::{Result, Vec2};

/// Where topological derivatives come from.
pub enum TdSource<'a> {
    Tables(&'a mut TableSet),
    /// Solves the exterior problem for every element and pair.
    Exact(&'a ExteriorMesh),
}

pub struct MachineProblem<'a> {
    pub model: &'a MachineModel,
    space: DesignSpace,
    td: TdSource<'a>,
    /// Most recent evaluations, newest last.
    cache: Vec<(Vec<Material>, Evaluation)>,
}

impl<'a> MachineProblem<'a> {
    pub fn new(model: &'a MachineModel, td: TdSource<'a>) -> Result<Self> {
        let space = DesignSpace::new(
            model.mesh(),
            model.design_elements.clone(),
            model.uniform_labels(Material::Air),
        )?;
        Ok(MachineProblem {
            model,
            space,
            td,
            cache: Vec::new(),
        })
    }

    /// Full evaluation of `labels`, reusing the last two results.
    pub fn evaluation(&mut self, labels: &[Material]) -> Result<&Evaluation> {
        if let Some(k) = self.cache.iter().position(|(l, _)| l == labels) {
            return Ok(&self.cache[k].1);
        }
        let e = self.model.evaluate(labels)?;
        if self.cache.len() == 2 {
            self.cache.remove(0);
        }
        self.cache.push((labels.to_vec(), e));
        Ok(&self.cache.last().unwrap().1)
    }

    /// Per element and target: `v . B^ + s` (constraint) or `v . B^` (torque).
    fn derivatives(
        &mut self,
        labels: &[Material],
        state: &FieldSolution,
        adjoint: &[Vec2],
        with_s: bool,
        clamps: &AtomicUsize,
    ) -> Result<Vec<[f64; 4]>> {
        let elements = &self.space.elements;
        let eval = |s: TdSample, b_hat: Vec2| {
            let v = s.v[0] * b_hat[0] + s.v[1] * b_hat[1];
            if with_s {
                v + s.s
            } else {
                v
            }
        };
        match &mut self.td {
            TdSource::Tables(set) => {
                for from in Material::ALL {
                    if elements.iter().any(|&t| labels[t] == from) {
                        for to in Material::ALL {
                            if to != from {
                                set.ensure(from, to)?;
                            }
                        }
                    }
                }
                let set = &**set;
                elements
                    .par_iter()
                    .map(|&t| {
                        let from = labels[t];
                        let mut d = [0.0; 4];
                        for to in Material::ALL {
                            if to != from {
                                let table = set.get(from, to)?;
                                let (v, s, clamped) = table.lookup(state.b[t]);
                                if clamped {
                                    clamps.fetch_add(1, Ordering::Relaxed);
                                }
                                d[to.index()] = eval(TdSample { b: state.b[t], v, s }, adjoint[t]);
                            }
                        }
                        Ok(d)
                    })
                    .collect()
            }
            TdSource::Exact(ext) => {
                let ext = &**ext;
                let materials = &self.model.cfg.materials;
                let penalty = &self.model.cfg.penalty;
                elements
                    .par_iter()
                    .map(|&t| {
                        let from = labels[t];
                        let mut d = [0.0; 4];
                        for to in Material::ALL {
                            if to != from {
                                let pair = PairLaws::new(from, to, materials);
                                let s = evaluate_sample(ext, &pair, state.b[t], penalty)?;
                                d[to.index()] = eval(s, adjoint[t]);
                            }
                        }
                        Ok(d)
                    })
                    .collect()
            }
        }
    }
}

impl TopologyProblem for MachineProblem<'_> {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn evaluate(&mut self, labels: &[Material]) -> Result<Objective> {
        let e = self.evaluation(labels)?;
        Ok(Objective {
            torque: e.torque,
            constraint: e.constraint,
            demag_nominal: e.demag_nominal,
            demag_damaging: e.demag_damaging,
        })
    }

    fn sensitivities(&mut self, labels: &[Material], with_constraint: bool) -> Result<Sensitivities> {
        let e = self.evaluation(labels)?.clone();
        let model = self.model;
        let clamps = AtomicUsize::new(0);
        let p_t = model.adjoint_torque(labels, &e.nominal)?;
        let torque = self.derivatives(labels, &e.nominal, &p_t.curl_p, false, &clamps)?;
        let constraint = if with_constraint {
            let p_c = model.adjoint_constraint(labels, &e.damaging)?;
            self.derivatives(labels, &e.damaging, &p_c.curl_p, true, &clamps)?
        } else {
            Vec::new()
        };
        Ok(Sensitivities {
            torque,
            constraint,
            clamped: clamps.into_inner(),
        })
    }
}

/// Two rectangular magnet bars in iron. Each bar is centred at `radius` and its own polar
/// angle, with the short side along the magnet's easy axis.
#[derive(Clone, Debug, PartialEq)]
pub struct BarDesign {
    pub radius: f64,
    pub length: f64,
    pub width: f64,
    /// Polar angles of the bar centres (degrees), magnet1 then magnet2.
    pub angles_deg: [f64; 2],
    pub background: Material,
}

impl Default for BarDesign {
    fn default() -> Self {
        BarDesign {
            radius: 0.068,
            length: 0.016,
            width: 0.00625,
            angles_deg: [32.0, 12.0],
            background: Material::Iron,
        }
    }
}

impl BarDesign {
    pub fn material_at(&self, p: Vec2, axes: [Vec2; 2]) -> Material {
        for (k, m) in [Material::Magnet1, Material::Magnet2].into_iter().enumerate() {
            let th = self.angles_deg[k].to_radians();
            let c = [self.radius * th.cos(), self.radius * th.sin()];
            let e = axes[k];
            let d = [p[0] - c[0], p[1] - c[1]];
            let along = d[0] * e[0] + d[1] * e[1];
            let across = -d[0] * e[1] + d[1] * e[0];
            if along.abs() <= 0.5 * self.width && across.abs() <= 0.5 * self.length {
                return m;
            }
        }
        self.background
    }
}

/// Level set of the bar design on the model's design nodes.
pub fn bar_design(model: &MachineModel, space: &DesignSpace, bars: &BarDesign) -> DesignState {
    let axes = [model.cfg.materials.easy_axis(0), model.cfg.materials.easy_axis(1)];
    DesignState::from_materials(space, model.mesh(), |_, p| bars.material_at(p, axes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::machine::MachineConfig;
    use crate::tderiv::ExteriorConfig;

    fn model() -> MachineModel {
        let mut cfg = MachineConfig::default();
        cfg.geometry.h = 0.004;
        MachineModel::new(cfg).unwrap()
    }

    #[test]
    fn bar_design_has_both_magnets() {
        let m = model();
        let ext = ExteriorMesh::new(ExteriorConfig::default()).unwrap();
        let p = MachineProblem::new(&m, TdSource::Exact(&ext)).unwrap();
        let state = bar_design(&m, p.space(), &BarDesign::default());
        let labels = state.material_map(p.space());
        let area = |mat| {
            m.design_elements
                .iter()
                .filter(|&&t| labels[t] == mat)
                .map(|&t| m.mesh().area(t))
                .sum::<f64>()
        };
        let bar = BarDesign::default();
        let exact = bar.length * bar.width;
        for mat in [Material::Magnet1, Material::Magnet2] {
            let a = area(mat);
            assert!((a - exact).abs() < 0.5 * exact, "{} {a} vs {exact}", mat.name());
        }
        assert_eq!(area(Material::Air), 0.0);
    }

    #[test]
    fn evaluation_is_repeatable_and_cached() {
        let m = model();
        let ext = ExteriorMesh::new(ExteriorConfig::default()).unwrap();
        let mut p = MachineProblem::new(&m, TdSource::Exact(&ext)).unwrap();
        let labels = m.uniform_labels(Material::Air);
        let a = p.evaluate(&labels).unwrap();
        assert_eq!(a.constraint, 0.0);
        assert_eq!(a.demag_nominal, 0.0);
        let mut q = MachineProblem::new(&m, TdSource::Exact(&ext)).unwrap();
        assert_eq!(q.evaluate(&labels).unwrap(), a);
    }
}
