//! Outer optimization loop: augmented Lagrangian for the magnet volume bound, composite
//! topological-derivative field, level-set update with a halving line search.

mod io;
mod levelset;
mod problem;

pub use io::{parse_design, read_design, write_design, write_log, DESIGN_HEADER, LOG_HEADER};
pub use levelset::{
    classify, direction, dot3, element_direction, mean_angle_deg, nodal_field, norm3, update_levelset,
    DesignSpace, DesignState, Vec3,
};
pub use problem::{bar_design, BarDesign, MachineProblem, TdSource};

use crate::machine::Material;
use crate::{Error, Result};

/// Raw functionals of one design.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub torque: f64,
    pub constraint: f64,
    pub demag_nominal: f64,
    pub demag_damaging: f64,
}

/// Topological derivatives of torque and constraint per design element and target material.
/// Entries for the element's own material are ignored.
#[derive(Clone, Debug, Default)]
pub struct Sensitivities {
    pub torque: Vec<[f64; 4]>,
    pub constraint: Vec<[f64; 4]>,
    /// Table lookups outside the grid.
    pub clamped: usize,
}

/// A design problem over a fixed [`DesignSpace`].
pub trait TopologyProblem {
    fn space(&self) -> &DesignSpace;

    fn evaluate(&mut self, labels: &[Material]) -> Result<Objective>;

    /// Sensitivities at `labels`. The constraint part may be left empty when
    /// `with_constraint` is false.
    fn sensitivities(&mut self, labels: &[Material], with_constraint: bool) -> Result<Sensitivities>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    /// Weight of the constraint term.
    pub gamma: f64,
    pub kappa0: f64,
    pub kappa_floor: f64,
    pub angle_tol_deg: f64,
    pub max_iter: usize,
    /// Magnet volume bound as a fraction of the design area.
    pub volume_fraction: f64,
    pub al_c0: f64,
    pub al_growth: f64,
    pub al_reduction: f64,
    pub al_c_max: f64,
    /// Consecutive line-search failures before the run stops as stalled.
    pub max_failures: usize,
    /// Fixed torque scale; `None` starts at `|T|` of the initial design and raises it to the
    /// current `|T|` whenever the multipliers update.
    pub torque_ref: Option<f64>,
    /// Constraint scale (T m^2); `None` takes `B* |D_R|`.
    pub constraint_ref: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            gamma: 0.0,
            kappa0: 0.5,
            kappa_floor: 1.0 / 1024.0,
            angle_tol_deg: 1.0,
            max_iter: 60,
            volume_fraction: 0.1,
            al_c0: 20.0,
            al_growth: 2.0,
            al_reduction: 0.9,
            al_c_max: 1e4,
            max_failures: 3,
            torque_ref: None,
            constraint_ref: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(&format!("optimizer.{key}"), msg.to_string()));
        if !(self.kappa0 > 0.0 && self.kappa0 <= 1.0) {
            return bad("kappa0", "must lie in (0, 1]");
        }
        if !(self.kappa_floor > 0.0 && self.kappa_floor <= self.kappa0) {
            return bad("kappa_floor", "must lie in (0, kappa0]");
        }
        if !(self.angle_tol_deg > 0.0) {
            return bad("angle_tol_deg", "must be positive");
        }
        if !(self.volume_fraction > 0.0 && self.volume_fraction < 1.0) {
            return bad("volume_fraction", "must lie in (0, 1)");
        }
        if !(self.al_c0 > 0.0 && self.al_growth >= 1.0 && self.al_c_max >= self.al_c0) {
            return bad("al_c0", "need c0 > 0, growth >= 1, c_max >= c0");
        }
        if !(self.al_reduction > 0.0 && self.al_reduction <= 1.0) {
            return bad("al_reduction", "must lie in (0, 1]");
        }
        if self.max_failures == 0 {
            return bad("max_failures", "must be at least 1");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma", "must be non-negative");
        }
        for (k, v) in [("torque_ref", self.torque_ref), ("constraint_ref", self.constraint_ref)] {
            if v.is_some_and(|v| !(v > 0.0)) {
                return bad(k, "must be positive");
            }
        }
        Ok(())
    }
}

/// Augmented Lagrangian state for `g = (V - V*) / |D_R| <= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlState {
    pub lambda: f64,
    pub c: f64,
    pub target: f64,
    pub design_area: f64,
}

impl AlState {
    pub fn violation(&self, volume: f64) -> f64 {
        (volume - self.target) / self.design_area
    }

    pub fn value(&self, volume: f64) -> f64 {
        let g = self.violation(volume);
        let m = (self.lambda + self.c * g).max(0.0);
        (m * m - self.lambda * self.lambda) / (2.0 * self.c)
    }

    pub fn derivative(&self, volume: f64) -> f64 {
        (self.lambda + self.c * self.violation(volume)).max(0.0)
    }
}

/// One row of the convergence log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub j: f64,
    pub torque: f64,
    pub constraint: f64,
    pub volume: f64,
    pub lambda: f64,
    pub c: f64,
    /// Accepted step of this iteration, 0 if none was taken.
    pub kappa: f64,
    pub mean_angle_deg: f64,
    pub demag_nominal: f64,
    pub demag_damaging: f64,
    pub clamp_count: usize,
}

/// Line-search outcome of one iteration, with both values under the same AL parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub iter: usize,
    pub j_before: f64,
    pub j_after: f64,
    pub kappa: f64,
    pub labels_changed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    Stalled,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIterations => "max_iterations",
            Status::Stalled => "stalled",
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeResult {
    pub state: DesignState,
    pub labels: Vec<Material>,
    pub objective: Objective,
    pub volume: f64,
    pub rows: Vec<LogRow>,
    pub steps: Vec<StepRecord>,
    pub status: Status,
    pub al: AlState,
    pub torque_ref: f64,
    pub constraint_ref: f64,
}

/// Area of the magnet-labeled design triangles.
pub fn magnet_volume(space: &DesignSpace, labels: &[Material]) -> f64 {
    space
        .elements
        .iter()
        .zip(&space.areas)
        .filter(|(&t, _)| labels[t].is_magnet())
        .map(|(_, a)| a)
        .sum()
}

fn magnet_indicator(m: Material) -> f64 {
    if m.is_magnet() {
        1.0
    } else {
        0.0
    }
}

struct Scales {
    torque: f64,
    constraint: f64,
    gamma: f64,
    adaptive_torque: bool,
}

impl Scales {
    fn total(&self, obj: &Objective, al: &AlState, volume: f64) -> f64 {
        -obj.torque / self.torque + self.gamma * obj.constraint / self.constraint + al.value(volume)
    }
}

/// Multiplier update between iterations, from the magnet volume before and after the step.
fn update_parameters(al: &mut AlState, scales: &mut Scales, cfg: &OptimizerConfig, before: f64, after: f64, torque: f64) {
    let before = al.violation(before).max(0.0);
    let after = al.violation(after);
    al.lambda = (al.lambda + al.c * after).max(0.0);
    if after > 0.0 && after > cfg.al_reduction * before {
        al.c = (al.c * cfg.al_growth).min(cfg.al_c_max);
    }
    if scales.adaptive_torque {
        scales.torque = scales.torque.max(torque.abs());
    }
}

/// Runs the outer loop from `initial`. `on_iteration` sees every log row with the design the
/// row describes; `b_star` sets the default constraint scale.
pub fn optimize<P: TopologyProblem>(
    problem: &mut P,
    initial: DesignState,
    cfg: &OptimizerConfig,
    b_star: f64,
    mut on_iteration: impl FnMut(&LogRow, &DesignState, &[Material]) -> Result<()>,
) -> Result<OptimizeResult> {
    cfg.validate()?;
    let space = problem.space().clone();
    if initial.psi.len() != space.nodes.len() {
        return Err(Error::SizeMismatch {
            what: "design vectors",
            expected: space.nodes.len(),
            got: initial.psi.len(),
        });
    }
    let area = space.total_area();
    let mut state = initial;
    let mut labels = state.material_map(&space);
    let mut obj = problem.evaluate(&labels)?;
    let mut scales = Scales {
        torque: cfg
            .torque_ref
            .unwrap_or(if obj.torque.abs() > 0.0 { obj.torque.abs() } else { 1.0 }),
        constraint: cfg.constraint_ref.unwrap_or(b_star.abs() * area),
        gamma: cfg.gamma,
        adaptive_torque: cfg.torque_ref.is_none(),
    };
    let mut al = AlState {
        lambda: 0.0,
        c: cfg.al_c0,
        target: cfg.volume_fraction * area,
        design_area: area,
    };
    let mut rows = Vec::new();
    let mut steps = Vec::new();
    let mut kappa_prev = cfg.kappa0;
    let mut failures = 0;
    let mut status = Status::MaxIterations;

    for iter in 0..cfg.max_iter {
        let volume = magnet_volume(&space, &labels);
        let j = scales.total(&obj, &al, volume);
        let sens = problem.sensitivities(&labels, cfg.gamma != 0.0)?;
        let al_slope = al.derivative(volume) / area;
        let g: Vec<Vec3> = space
            .elements
            .iter()
            .enumerate()
            .map(|(k, &t)| {
                let from = labels[t];
                let mut d = [0.0; 4];
                for to in Material::ALL {
                    if to == from {
                        continue;
                    }
                    let mut v = -sens.torque[k][to.index()] / scales.torque;
                    if cfg.gamma != 0.0 {
                        v += cfg.gamma * sens.constraint[k][to.index()] / scales.constraint;
                    }
                    v += al_slope * (magnet_indicator(to) - magnet_indicator(from));
                    d[to.index()] = v;
                }
                element_direction(from, &d)
            })
            .collect();
        let g_hat = nodal_field(&space, &g);
        let angle = mean_angle_deg(&space, &state, &g_hat);
        let mut row = LogRow {
            iter,
            j,
            torque: obj.torque,
            constraint: obj.constraint,
            volume,
            lambda: al.lambda,
            c: al.c,
            kappa: 0.0,
            mean_angle_deg: angle,
            demag_nominal: obj.demag_nominal,
            demag_damaging: obj.demag_damaging,
            clamp_count: sens.clamped,
        };
        log::info!(
            "iter {iter}: J={j:.6e} T={:.4e} vol={volume:.4e} angle={angle:.3}",
            obj.torque
        );
        if angle < cfg.angle_tol_deg {
            on_iteration(&row, &state, &labels)?;
            rows.push(row);
            status = Status::Converged;
            break;
        }

        let mut kappa = (2.0 * kappa_prev).min(cfg.kappa0);
        let accepted = loop {
            let trial = update_levelset(&state, &g_hat, kappa);
            let trial_labels = trial.material_map(&space);
            if trial_labels == labels {
                break Some((trial, trial_labels, obj, j, false));
            }
            let trial_obj = problem.evaluate(&trial_labels)?;
            let trial_j = scales.total(&trial_obj, &al, magnet_volume(&space, &trial_labels));
            if trial_j < j {
                break Some((trial, trial_labels, trial_obj, trial_j, true));
            }
            log::debug!("iter {iter}: rejected kappa={kappa} J={trial_j:.6e}");
            if kappa <= cfg.kappa_floor {
                break None;
            }
            kappa = (kappa / 2.0).max(cfg.kappa_floor);
        };
        let Some((next, next_labels, next_obj, next_j, changed)) = accepted else {
            on_iteration(&row, &state, &labels)?;
            rows.push(row);
            failures += 1;
            let before = (al.lambda, al.c, scales.torque);
            update_parameters(&mut al, &mut scales, cfg, volume, volume, obj.torque);
            if failures >= cfg.max_failures || (al.lambda, al.c, scales.torque) == before {
                status = Status::Stalled;
                break;
            }
            kappa_prev = cfg.kappa0;
            continue;
        };
        failures = 0;
        row.kappa = kappa;
        on_iteration(&row, &state, &labels)?;
        rows.push(row);
        steps.push(StepRecord {
            iter,
            j_before: j,
            j_after: next_j,
            kappa,
            labels_changed: changed,
        });
        kappa_prev = kappa;
        state = next;
        labels = next_labels;
        obj = next_obj;
        if changed {
            update_parameters(&mut al, &mut scales, cfg, volume, magnet_volume(&space, &labels), obj.torque);
        }
    }

    Ok(OptimizeResult {
        volume: magnet_volume(&space, &labels),
        state,
        labels,
        objective: obj,
        rows,
        steps,
        status,
        al,
        torque_ref: scales.torque,
        constraint_ref: scales.constraint,
    })
}
