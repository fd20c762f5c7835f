//! Run configuration: `section.key = value` lines, `#` comments, every key optional.
//!
//! [`RunConfig::to_text`] writes every key with its resolved value, so the output parses
//! back to the same configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::fem::NewtonConfig;
use crate::machine::{format_phase_pattern, parse_phase_pattern, MachineConfig, MaterialSet, SourceConfig, TorqueConfig};
use crate::materials::{MagnetLaw, MaterialParams};
use crate::mesh::SectorGeometry;
use crate::optimizer::{BarDesign, OptimizerConfig};
use crate::penalty::PenaltyConfig;
use crate::tderiv::{ExteriorConfig, GridSpec};
use crate::{Error, Result};

pub const RUN_META_HEADER: &str = "# demagopt run_meta v1";

/// Optimization mode: magnet law and whether the constraint term is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Linear,
    Nonlinear,
    Constrained,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Linear => "linear",
            Mode::Nonlinear => "nonlinear",
            Mode::Constrained => "constrained",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Mode::Linear),
            "nonlinear" => Some(Mode::Nonlinear),
            "constrained" => Some(Mode::Constrained),
            _ => None,
        }
    }

    pub fn law(self) -> MagnetLaw {
        match self {
            Mode::Linear => MagnetLaw::Linear,
            _ => MagnetLaw::Nonlinear,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub geometry: SectorGeometry,
    /// `nu0 / nu_m`.
    pub nu_m_ratio: f64,
    pub materials: MaterialSet,
    pub penalty: PenaltyConfig,
    pub newton: NewtonConfig,
    pub antiperiodic_sign: f64,
    pub source: SourceConfig,
    /// Torque annulus radii; `None` uses the middle half of the airgap.
    pub torque_r_inner: Option<f64>,
    pub torque_r_outer: Option<f64>,
    pub axial_length: f64,
    pub exterior: ExteriorConfig,
    pub grid: GridSpec,
    pub table_dir: PathBuf,
    pub optimizer: OptimizerConfig,
    pub mode: Mode,
    pub bars: BarDesign,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let nu_m_ratio = 1.086;
        RunConfig {
            geometry: SectorGeometry::default(),
            nu_m_ratio,
            materials: MaterialSet {
                params: MaterialParams::with_nu_m_ratio(nu_m_ratio),
                ..MaterialSet::default()
            },
            penalty: PenaltyConfig::default(),
            newton: NewtonConfig::default(),
            antiperiodic_sign: -1.0,
            source: SourceConfig::default(),
            torque_r_inner: None,
            torque_r_outer: None,
            axial_length: 0.1,
            exterior: ExteriorConfig::default(),
            grid: GridSpec::default(),
            table_dir: PathBuf::from("tables"),
            optimizer: OptimizerConfig::default(),
            mode: Mode::Constrained,
            bars: BarDesign::default(),
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("cannot parse '{v}'")))
}

fn opt_num(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl RunConfig {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: name.to_string(),
                    line: i + 1,
                    msg: format!("expected 'section.key = value', got '{line}'"),
                });
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets one key; unknown keys are errors.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let g = &mut self.geometry;
        let p = &mut self.materials.params;
        let o = &mut self.optimizer;
        match key {
            "geometry.bore_radius" => g.bore_radius = num(key, v)?,
            "geometry.shaft_radius" => g.shaft_radius = num(key, v)?,
            "geometry.rotor_radius" => g.rotor_radius = num(key, v)?,
            "geometry.airgap" => g.airgap = num(key, v)?,
            "geometry.stator_radius" => g.stator_radius = num(key, v)?,
            "geometry.sector_angle_deg" => g.sector_angle = num::<f64>(key, v)?.to_radians(),
            "geometry.slots" => g.slots = num(key, v)?,
            "geometry.slot_offset" => g.slot_offset = num(key, v)?,
            "geometry.slot_depth" => g.slot_depth = num(key, v)?,
            "geometry.slot_width_fraction" => g.slot_width_fraction = num(key, v)?,
            "geometry.h" => g.h = num(key, v)?,
            "geometry.airgap_layers" => g.airgap_layers = num(key, v)?,
            "material.nu_m_ratio" => {
                self.nu_m_ratio = num(key, v)?;
                p.nu_m = p.nu0 / self.nu_m_ratio;
            }
            "material.B_R" => p.b_r = num(key, v)?,
            "material.H_c" => p.h_c = num(key, v)?,
            "material.magnet_law" => {
                self.materials.magnet_law =
                    MagnetLaw::parse(v).ok_or_else(|| Error::config(key, format!("unknown law '{v}'")))?
            }
            "material.phi1_deg" => self.materials.magnet_angles[0] = num::<f64>(key, v)?.to_radians(),
            "material.phi2_deg" => self.materials.magnet_angles[1] = num::<f64>(key, v)?.to_radians(),
            "material.iron_nu_low" => p.iron_nu_low = num(key, v)?,
            "material.iron_knee" => p.iron_knee = num(key, v)?,
            "material.iron_exponent" => p.iron_exponent = num(key, v)?,
            "material.magnet_knee_slope" => p.magnet_knee_slope = num(key, v)?,
            "material.magnet_knee" => p.magnet_knee = num(key, v)?,
            "material.magnet_exponent" => p.magnet_exponent = num(key, v)?,
            "penalty.B_star" => self.penalty.b_star = num(key, v)?,
            "penalty.p" => self.penalty.p = num(key, v)?,
            "penalty.B0_star" => self.penalty.b0_star = num(key, v)?,
            "penalty.gamma" => self.penalty.gamma = num(key, v)?,
            "solver.newton_tol" => self.newton.tol = num(key, v)?,
            "solver.newton_max_iter" => self.newton.max_iter = num(key, v)?,
            "solver.damping_floor" => self.newton.damping_floor = num(key, v)?,
            "solver.antiperiodic_sign" => self.antiperiodic_sign = num(key, v)?,
            "source.j_eff" => self.source.j_eff = num(key, v)?,
            "source.theta0_deg" => self.source.theta0_deg = num(key, v)?,
            "source.damaging_factor" => self.source.damaging_factor = num(key, v)?,
            "source.phase_pattern" => self.source.pattern = parse_phase_pattern(v)?,
            "source.pole_pairs" => self.source.pole_pairs = num(key, v)?,
            "torque.r_inner" => self.torque_r_inner = opt_num(key, v)?,
            "torque.r_outer" => self.torque_r_outer = opt_num(key, v)?,
            "machine.axial_length" => self.axial_length = num(key, v)?,
            "tderiv.r_trunc" => self.exterior.r_trunc = num(key, v)?,
            "tderiv.n_theta" => self.exterior.n_theta = num(key, v)?,
            "tderiv.inner_rings" => self.exterior.inner_rings = num(key, v)?,
            "tderiv.growth" => self.exterior.growth = num(key, v)?,
            "tderiv.newton_tol" => self.exterior.newton.tol = num(key, v)?,
            "tderiv.grid_min" => self.grid.min = num(key, v)?,
            "tderiv.grid_max" => self.grid.max = num(key, v)?,
            "tderiv.grid_n" => self.grid.n = num(key, v)?,
            "tderiv.table_dir" => self.table_dir = PathBuf::from(v),
            "optimizer.mode" => {
                self.mode = Mode::parse(v).ok_or_else(|| Error::config(key, format!("unknown mode '{v}'")))?
            }
            "optimizer.kappa0" => o.kappa0 = num(key, v)?,
            "optimizer.kappa_floor" => o.kappa_floor = num(key, v)?,
            "optimizer.angle_tol_deg" => o.angle_tol_deg = num(key, v)?,
            "optimizer.max_iter" => o.max_iter = num(key, v)?,
            "optimizer.volume_fraction" => o.volume_fraction = num(key, v)?,
            "optimizer.al_c0" => o.al_c0 = num(key, v)?,
            "optimizer.al_growth" => o.al_growth = num(key, v)?,
            "optimizer.al_reduction" => o.al_reduction = num(key, v)?,
            "optimizer.al_c_max" => o.al_c_max = num(key, v)?,
            "optimizer.max_failures" => o.max_failures = num(key, v)?,
            "optimizer.torque_ref" => o.torque_ref = opt_num(key, v)?,
            "optimizer.constraint_ref" => o.constraint_ref = opt_num(key, v)?,
            "optimizer.bar_radius" => self.bars.radius = num(key, v)?,
            "optimizer.bar_length" => self.bars.length = num(key, v)?,
            "optimizer.bar_width" => self.bars.width = num(key, v)?,
            "optimizer.bar1_angle_deg" => self.bars.angles_deg[0] = num(key, v)?,
            "optimizer.bar2_angle_deg" => self.bars.angles_deg[1] = num(key, v)?,
            "run.output_dir" => self.output_dir = PathBuf::from(v),
            "run.seed" => self.seed = num(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Switches magnet law and constraint weight to those of `mode`.
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self.materials.magnet_law = mode.law();
        self
    }

    /// Constraint weight used by the optimizer in the current mode.
    pub fn gamma(&self) -> f64 {
        match self.mode {
            Mode::Constrained => self.penalty.gamma,
            _ => 0.0,
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            gamma: self.gamma(),
            ..self.optimizer.clone()
        }
    }

    pub fn torque_config(&self) -> TorqueConfig {
        let auto = TorqueConfig::for_geometry(&self.geometry, self.axial_length);
        TorqueConfig {
            r_inner: self.torque_r_inner.unwrap_or(auto.r_inner),
            r_outer: self.torque_r_outer.unwrap_or(auto.r_outer),
            axial_length: self.axial_length,
        }
    }

    pub fn machine_config(&self) -> MachineConfig {
        MachineConfig {
            geometry: self.geometry.clone(),
            materials: self.materials,
            source: self.source.clone(),
            torque: self.torque_config(),
            newton: self.newton,
            penalty: self.penalty,
            antiperiodic_sign: self.antiperiodic_sign,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.materials
            .params
            .validate()
            .map_err(|m| Error::config("material", m))?;
        self.penalty.validate().map_err(|m| Error::config("penalty", m))?;
        self.source.validate()?;
        self.torque_config().validate(&self.geometry)?;
        self.exterior.validate()?;
        self.grid.validate()?;
        self.optimizer.validate()?;
        if self.antiperiodic_sign.abs() != 1.0 {
            return Err(Error::config("solver.antiperiodic_sign", "must be 1 or -1"));
        }
        if !(self.newton.tol > 0.0) || self.newton.max_iter == 0 {
            return Err(Error::config("solver.newton_tol", "need tol > 0 and max_iter > 0"));
        }
        Ok(())
    }

    /// Every key with its resolved value.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let p = &self.materials.params;
        let o = &self.optimizer;
        let t = self.torque_config();
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |v| format!("{v:e}"));
        let mut s = String::from(RUN_META_HEADER);
        s.push('\n');
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("geometry.bore_radius", format!("{:e}", g.bore_radius));
        kv("geometry.shaft_radius", format!("{:e}", g.shaft_radius));
        kv("geometry.rotor_radius", format!("{:e}", g.rotor_radius));
        kv("geometry.airgap", format!("{:e}", g.airgap));
        kv("geometry.stator_radius", format!("{:e}", g.stator_radius));
        kv("geometry.sector_angle_deg", format!("{:e}", g.sector_angle.to_degrees()));
        kv("geometry.slots", g.slots.to_string());
        kv("geometry.slot_offset", format!("{:e}", g.slot_offset));
        kv("geometry.slot_depth", format!("{:e}", g.slot_depth));
        kv("geometry.slot_width_fraction", format!("{:e}", g.slot_width_fraction));
        kv("geometry.h", format!("{:e}", g.h));
        kv("geometry.airgap_layers", g.airgap_layers.to_string());
        kv("material.nu_m_ratio", format!("{:e}", self.nu_m_ratio));
        kv("material.B_R", format!("{:e}", p.b_r));
        kv("material.H_c", format!("{:e}", p.h_c));
        kv("material.magnet_law", self.materials.magnet_law.name().to_string());
        kv("material.phi1_deg", format!("{:e}", self.materials.magnet_angles[0].to_degrees()));
        kv("material.phi2_deg", format!("{:e}", self.materials.magnet_angles[1].to_degrees()));
        kv("material.iron_nu_low", format!("{:e}", p.iron_nu_low));
        kv("material.iron_knee", format!("{:e}", p.iron_knee));
        kv("material.iron_exponent", p.iron_exponent.to_string());
        kv("material.magnet_knee_slope", format!("{:e}", p.magnet_knee_slope));
        kv("material.magnet_knee", format!("{:e}", p.magnet_knee));
        kv("material.magnet_exponent", p.magnet_exponent.to_string());
        kv("penalty.B_star", format!("{:e}", self.penalty.b_star));
        kv("penalty.p", self.penalty.p.to_string());
        kv("penalty.B0_star", format!("{:e}", self.penalty.b0_star));
        kv("penalty.gamma", format!("{:e}", self.penalty.gamma));
        kv("solver.newton_tol", format!("{:e}", self.newton.tol));
        kv("solver.newton_max_iter", self.newton.max_iter.to_string());
        kv("solver.damping_floor", format!("{:e}", self.newton.damping_floor));
        kv("solver.antiperiodic_sign", format!("{:e}", self.antiperiodic_sign));
        kv("source.j_eff", format!("{:e}", self.source.j_eff));
        kv("source.theta0_deg", format!("{:e}", self.source.theta0_deg));
        kv("source.damaging_factor", format!("{:e}", self.source.damaging_factor));
        kv("source.phase_pattern", format_phase_pattern(&self.source.pattern));
        kv("source.pole_pairs", self.source.pole_pairs.to_string());
        kv("torque.r_inner", format!("{:e}", t.r_inner));
        kv("torque.r_outer", format!("{:e}", t.r_outer));
        kv("machine.axial_length", format!("{:e}", self.axial_length));
        kv("tderiv.r_trunc", format!("{:e}", self.exterior.r_trunc));
        kv("tderiv.n_theta", self.exterior.n_theta.to_string());
        kv("tderiv.inner_rings", self.exterior.inner_rings.to_string());
        kv("tderiv.growth", format!("{:e}", self.exterior.growth));
        kv("tderiv.newton_tol", format!("{:e}", self.exterior.newton.tol));
        kv("tderiv.grid_min", format!("{:e}", self.grid.min));
        kv("tderiv.grid_max", format!("{:e}", self.grid.max));
        kv("tderiv.grid_n", self.grid.n.to_string());
        kv("tderiv.table_dir", self.table_dir.display().to_string());
        kv("optimizer.mode", self.mode.name().to_string());
        kv("optimizer.kappa0", format!("{:e}", o.kappa0));
        kv("optimizer.kappa_floor", format!("{:e}", o.kappa_floor));
        kv("optimizer.angle_tol_deg", format!("{:e}", o.angle_tol_deg));
        kv("optimizer.max_iter", o.max_iter.to_string());
        kv("optimizer.volume_fraction", format!("{:e}", o.volume_fraction));
        kv("optimizer.al_c0", format!("{:e}", o.al_c0));
        kv("optimizer.al_growth", format!("{:e}", o.al_growth));
        kv("optimizer.al_reduction", format!("{:e}", o.al_reduction));
        kv("optimizer.al_c_max", format!("{:e}", o.al_c_max));
        kv("optimizer.max_failures", o.max_failures.to_string());
        kv("optimizer.torque_ref", opt(o.torque_ref));
        kv("optimizer.constraint_ref", opt(o.constraint_ref));
        kv("optimizer.bar_radius", format!("{:e}", self.bars.radius));
        kv("optimizer.bar_length", format!("{:e}", self.bars.length));
        kv("optimizer.bar_width", format!("{:e}", self.bars.width));
        kv("optimizer.bar1_angle_deg", format!("{:e}", self.bars.angles_deg[0]));
        kv("optimizer.bar2_angle_deg", format!("{:e}", self.bars.angles_deg[1]));
        kv("run.output_dir", self.output_dir.display().to_string());
        kv("run.seed", self.seed.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = RunConfig::parse("# nothing\n\n", "c").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.machine_config(), MachineConfig::default());
    }

    #[test]
    fn round_trip_through_text() {
        let mut c = RunConfig::default();
        c.set("geometry.h", "0.003").unwrap();
        c.set("material.magnet_law", "linear").unwrap();
        c.set("optimizer.max_iter", "7").unwrap();
        c.set("source.phase_pattern", "A+ B- C+ A- B+ C-").unwrap();
        c.set("material.nu_m_ratio", "1.05").unwrap();
        let text = c.to_text();
        let back = RunConfig::parse(&text, "meta").unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.geometry.h, 0.003);
        assert_eq!(back.materials.magnet_law, MagnetLaw::Linear);
        assert_eq!(back.optimizer.max_iter, 7);
        // Materialized annulus radii parse back to the same values.
        assert_eq!(back.torque_config(), c.torque_config());
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::parse("geometry.colour = red\n", "c").unwrap_err();
        assert!(e.to_string().contains("geometry.colour"));
        let e = RunConfig::parse("geometry.h = fine\n", "c").unwrap_err();
        assert!(e.to_string().contains("geometry.h"));
        let e = RunConfig::parse("geometry.h\n", "c").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = RunConfig::parse("geometry.rotor_radius = 0.2\n", "c").unwrap_err();
        assert!(matches!(e, Error::Geometry(_) | Error::Config { .. }), "{e}");
        let e = RunConfig::parse("optimizer.kappa0 = 0\n", "c").unwrap_err();
        assert!(e.to_string().contains("kappa0"));
    }

    #[test]
    fn modes() {
        let c = RunConfig::default();
        assert_eq!(c.clone().with_mode(Mode::Linear).materials.magnet_law, MagnetLaw::Linear);
        assert_eq!(c.clone().with_mode(Mode::Nonlinear).gamma(), 0.0);
        assert_eq!(c.clone().with_mode(Mode::Constrained).gamma(), 10.0);
        assert_eq!(Mode::parse("constrained"), Some(Mode::Constrained));
        assert_eq!(Mode::parse("x"), None);
    }
}
