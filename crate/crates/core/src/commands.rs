//! Command-line front end: argument definitions and the six subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{Mode, RunConfig};
use crate::fem::{FieldSolution, OperatingPoint};
use crate::materials::MagnetLaw;
use crate::machine::{MachineModel, Material};
use crate::mesh::{generate_sector_mesh, write_mesh, Region};
use crate::optimizer::{
    bar_design, optimize, read_design, write_design, write_log, DesignSpace, DesignState, MachineProblem, Objective,
    OptimizeResult, Status, TdSource,
};
use crate::penalty::demag_integrand;
use crate::tderiv::{ExteriorMesh, PairLaws, TableSet, TdTable};
use crate::vtk::{write_vtk, Field, VtkData};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "demagopt", version, about = "PM rotor topology optimization with a demagnetization constraint")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Run configuration (`section.key = value` lines); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `run.output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the sector mesh and print region areas.
    Mesh {
        #[command(flatten)]
        common: Common,
        /// Element size: absolute (`0.002`) or relative to the configured size (`0.5x`).
        #[arg(long)]
        h: Option<String>,
    },
    /// Solve one operating point and export the field.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Design file, or a material name for a uniform rotor.
        #[arg(long)]
        design: Option<String>,
        #[arg(long, default_value = "nominal")]
        op: String,
    },
    /// Solve the torque and constraint adjoints and export them.
    Adjoint {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: Option<String>,
        #[arg(long, default_value = "nominal")]
        op: String,
    },
    /// Tabulate the topological derivative of one material pair.
    TdTable {
        #[command(flatten)]
        common: Common,
        /// Ordered pair `from:to`, e.g. `iron:air`.
        #[arg(long)]
        pair: String,
        /// Grid points per axis; overrides `tderiv.grid_n`.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Run the topology optimization.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mode: Option<String>,
        /// Evaluate topological derivatives directly instead of from tables.
        #[arg(long)]
        exact_td: bool,
        /// Initial design file; the configured bar design when omitted.
        #[arg(long)]
        design: Option<String>,
    },
    /// Evaluate torque and demagnetization of a design at both operating points.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: Option<String>,
        #[arg(long)]
        mode: Option<String>,
    },
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::LinearSolve(_) | Error::NewtonDivergence { .. } => 3,
        Error::Sample { .. } | Error::Table { .. } | Error::MissingTable(_) => 4,
        _ => 2,
    }
}

pub const EXIT_STALLED: i32 = 5;

/// Result of a subcommand: text for stdout and the exit status.
#[derive(Debug)]
pub struct Outcome {
    pub report: String,
    pub code: i32,
}

impl Outcome {
    fn ok(report: String) -> Self {
        Outcome { report, code: 0 }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn apply_mode(cfg: RunConfig, mode: Option<&str>) -> Result<RunConfig> {
    let mode = match mode {
        Some(m) => Mode::parse(m).ok_or_else(|| Error::config("--mode", format!("unknown mode '{m}'")))?,
        None => cfg.mode,
    };
    Ok(cfg.with_mode(mode))
}

fn parse_op(s: &str) -> Result<OperatingPoint> {
    OperatingPoint::parse(s).ok_or_else(|| Error::config("--op", format!("expected nominal or damaging, got '{s}'")))
}

fn parse_material(s: &str) -> Result<Material> {
    Material::parse(s).ok_or_else(|| Error::config("--pair", format!("unknown material '{s}'")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn design_space(model: &MachineModel) -> Result<DesignSpace> {
    DesignSpace::new(model.mesh(), model.design_elements.clone(), model.uniform_labels(Material::Air))
}

/// Design from a file, a uniform material name, or the configured bars.
pub fn load_design(cfg: &RunConfig, model: &MachineModel, space: &DesignSpace, design: Option<&str>) -> Result<DesignState> {
    match design {
        None => Ok(bar_design(model, space, &cfg.bars)),
        Some(d) if !Path::new(d).exists() && Material::parse(d).is_some() => {
            Ok(DesignState::uniform(space, Material::parse(d).unwrap()))
        }
        Some(d) => read_design(Path::new(d), space),
    }
}

fn write_history(dir: &Path, e: &Error) -> Option<PathBuf> {
    if let Error::NewtonDivergence { history, .. } = e {
        let path = dir.join("residual_history.txt");
        let text: String = history.iter().map(|r| format!("{r:e}\n")).collect();
        std::fs::write(&path, text).ok()?;
        Some(path)
    } else {
        None
    }
}

fn cell_labels(labels: &[Material]) -> Field {
    Field::Int(labels.iter().map(|m| m.index() as i64).collect())
}

fn nodal_psi(space: &DesignSpace, state: &DesignState) -> Field {
    let mut psi = vec![[0.0; 3]; space.n_mesh_nodes];
    for (&n, p) in space.nodes.iter().zip(&state.psi) {
        psi[n] = *p;
    }
    Field::Vector3(psi)
}

fn field_export(model: &MachineModel, labels: &[Material], field: &FieldSolution) -> VtkData {
    let integrand = demag_integrand(&field.b, &model.magnet_elements(labels), &model.cfg.penalty);
    VtkData::default()
        .cell("label", cell_labels(labels))
        .cell("region", Field::Int(model.mesh().regions.iter().map(|&r| r as i64).collect()))
        .cell("B", Field::Vector(field.b.clone()))
        .cell("demag_integrand", Field::Scalar(integrand))
        .point("a", Field::Scalar(field.a.clone()))
}

pub fn cmd_mesh(common: &Common, h: Option<&str>) -> Result<Outcome> {
    let mut cfg = load_config(common)?;
    if let Some(h) = h {
        cfg.geometry.h = match h.strip_suffix('x') {
            Some(f) => cfg.geometry.h * f.parse::<f64>().map_err(|_| Error::config("--h", format!("bad factor '{h}'")))?,
            None => h.parse().map_err(|_| Error::config("--h", format!("bad size '{h}'")))?,
        };
    }
    cfg.validate()?;
    let mesh = generate_sector_mesh(&cfg.geometry)?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("sector.mesh");
    write_mesh(&mesh, &path)?;
    let mut regions: Vec<u32> = mesh.regions.clone();
    regions.sort_unstable();
    regions.dedup();
    let mut r = String::new();
    writeln!(r, "mesh={}", path.display()).unwrap();
    writeln!(r, "nodes={}", mesh.num_nodes()).unwrap();
    writeln!(r, "triangles={}", mesh.num_triangles()).unwrap();
    for id in regions {
        writeln!(r, "area.{}={:e}", Region::from_id(id).name(), mesh.region_area(id)).unwrap();
    }
    Ok(Outcome::ok(r))
}

fn setup(common: &Common, mode: Option<&str>) -> Result<(RunConfig, MachineModel)> {
    let cfg = apply_mode(load_config(common)?, mode)?;
    cfg.validate()?;
    let model = MachineModel::new(cfg.machine_config())?;
    create_dir(&cfg.output_dir)?;
    Ok((cfg, model))
}

fn solver_error(dir: &Path, e: Error) -> Error {
    match write_history(dir, &e) {
        Some(p) => {
            log::error!("residual history written to {}", p.display());
            e
        }
        None => e,
    }
}

pub fn cmd_solve(common: &Common, design: Option<&str>, op: &str) -> Result<Outcome> {
    let op = parse_op(op)?;
    let (cfg, model) = setup(common, None)?;
    let space = design_space(&model)?;
    let labels = load_design(&cfg, &model, &space, design)?.material_map(&space);
    let field = model
        .solve(&labels, op, None)
        .map_err(|e| solver_error(&cfg.output_dir, e))?;
    let torque = model.torque(&field)?;
    let constraint = model.constraint(&labels, &field)?;
    let demag = model.demag(&labels, &field)?;
    let path = cfg.output_dir.join(format!("field_{}.vtk", op.name()));
    write_vtk(&path, model.mesh(), &format!("demagopt field {}", op.name()), &field_export(&model, &labels, &field))?;
    write_text(&cfg.output_dir.join("run_meta"), &cfg.to_text())?;
    let mut r = String::new();
    writeln!(r, "op={}", op.name()).unwrap();
    writeln!(r, "newton_iterations={}", field.iterations).unwrap();
    writeln!(r, "torque={torque:e} Nm").unwrap();
    writeln!(r, "constraint={constraint:e}").unwrap();
    writeln!(r, "demag={demag:e}").unwrap();
    writeln!(r, "vtk={}", path.display()).unwrap();
    Ok(Outcome::ok(r))
}

pub fn cmd_adjoint(common: &Common, design: Option<&str>, op: &str) -> Result<Outcome> {
    let op = parse_op(op)?;
    let (cfg, model) = setup(common, None)?;
    let space = design_space(&model)?;
    let labels = load_design(&cfg, &model, &space, design)?.material_map(&space);
    let field = model
        .solve(&labels, op, None)
        .map_err(|e| solver_error(&cfg.output_dir, e))?;
    let p_t = model.adjoint_torque(&labels, &field)?;
    let p_c = model.adjoint_constraint(&labels, &field)?;
    let data = field_export(&model, &labels, &field)
        .cell("curl_p_torque", Field::Vector(p_t.curl_p.clone()))
        .cell("curl_p_constraint", Field::Vector(p_c.curl_p.clone()))
        .point("p_torque", Field::Scalar(p_t.p.clone()))
        .point("p_constraint", Field::Scalar(p_c.p.clone()));
    let path = cfg.output_dir.join(format!("adjoint_{}.vtk", op.name()));
    write_vtk(&path, model.mesh(), &format!("demagopt adjoint {}", op.name()), &data)?;
    write_text(&cfg.output_dir.join("run_meta"), &cfg.to_text())?;
    let max = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut r = String::new();
    writeln!(r, "op={}", op.name()).unwrap();
    writeln!(r, "max_p_torque={:e}", max(&p_t.p)).unwrap();
    writeln!(r, "max_p_constraint={:e}", max(&p_c.p)).unwrap();
    writeln!(r, "vtk={}", path.display()).unwrap();
    Ok(Outcome::ok(r))
}

pub fn cmd_td_table(common: &Common, pair: &str, grid: Option<usize>) -> Result<Outcome> {
    let mut cfg = load_config(common)?;
    if let Some(n) = grid {
        cfg.grid.n = n;
    }
    cfg.validate()?;
    let (from, to) = pair
        .split_once(':')
        .ok_or_else(|| Error::config("--pair", format!("expected from:to, got '{pair}'")))?;
    let (from, to) = (parse_material(from)?, parse_material(to)?);
    let ext = ExteriorMesh::new(cfg.exterior)?;
    let laws = PairLaws::new(from, to, &cfg.materials);
    let start = Instant::now();
    let table = TdTable::build(&ext, &laws, cfg.grid, &cfg.penalty, cfg.materials.magnet_law)?;
    let dir = common.out.clone().unwrap_or_else(|| cfg.table_dir.clone());
    create_dir(&dir)?;
    let path = dir.join(TableSet::file_name(from, to, cfg.materials.magnet_law));
    table.save(&path)?;
    let mut r = String::new();
    writeln!(r, "table={}", path.display()).unwrap();
    writeln!(r, "samples={}", table.samples.len()).unwrap();
    writeln!(r, "wall_time_s={:.2}", start.elapsed().as_secs_f64()).unwrap();
    Ok(Outcome::ok(r))
}

fn final_report(cfg: &RunConfig, res: &OptimizeResult, reference: &Objective) -> String {
    let mut r = String::new();
    writeln!(r, "mode={}", cfg.mode.name()).unwrap();
    writeln!(r, "status={}", res.status.name()).unwrap();
    writeln!(r, "iterations={}", res.rows.len()).unwrap();
    writeln!(r, "torque={:e} Nm", res.objective.torque).unwrap();
    writeln!(r, "constraint={:e}", res.objective.constraint).unwrap();
    writeln!(r, "demag_nominal={:e}", res.objective.demag_nominal).unwrap();
    writeln!(r, "demag_damaging={:e}", res.objective.demag_damaging).unwrap();
    writeln!(r, "magnet_volume={:e}", res.volume).unwrap();
    writeln!(r, "volume_target={:e}", res.al.target).unwrap();
    writeln!(r, "reference_torque={:e} Nm", reference.torque).unwrap();
    writeln!(r, "reference_demag_nominal={:e}", reference.demag_nominal).unwrap();
    writeln!(r, "reference_demag_damaging={:e}", reference.demag_damaging).unwrap();
    r
}

/// Functionals of the final design under the nonlinear magnet law, so that designs from
/// different modes are compared with the same physics.
pub fn reference_evaluation(cfg: &RunConfig, labels: &[Material]) -> Result<Objective> {
    let mut machine = cfg.machine_config();
    machine.materials.magnet_law = MagnetLaw::Nonlinear;
    let model = MachineModel::new(machine)?;
    let e = model.evaluate(labels).map_err(|e| solver_error(&cfg.output_dir, e))?;
    Ok(Objective {
        torque: e.torque,
        constraint: e.constraint,
        demag_nominal: e.demag_nominal,
        demag_damaging: e.demag_damaging,
    })
}

/// Runs the optimization and writes all artifacts into the output directory. Returns the
/// result, the reference evaluation of the final design and the report text.
pub fn run_optimize(cfg: &RunConfig, exact_td: bool, design: Option<&str>) -> Result<(OptimizeResult, Objective, String)> {
    cfg.validate()?;
    let model = MachineModel::new(cfg.machine_config())?;
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let designs = dir.join("designs");
    create_dir(&designs)?;
    write_text(&dir.join("run_meta"), &cfg.to_text())?;
    let ext = ExteriorMesh::new(cfg.exterior)?;
    let mut tables;
    let source = if exact_td {
        TdSource::Exact(&ext)
    } else {
        tables = TableSet::new(
            ExteriorMesh::new(cfg.exterior)?,
            cfg.materials,
            cfg.penalty,
            cfg.grid,
            Some(cfg.table_dir.clone()),
        );
        TdSource::Tables(&mut tables)
    };
    let mut problem = MachineProblem::new(&model, source)?;
    let space = design_space(&model)?;
    let initial = load_design(cfg, &model, &space, design)?;
    let mut rows = Vec::new();
    let res = optimize(&mut problem, initial, &cfg.optimizer_config(), cfg.penalty.b_star, |row, state, _| {
        write_design(&designs.join(format!("design_{:04}.dsg", row.iter)), &space, state)?;
        rows.push(*row);
        write_log(&dir.join("log.csv"), &rows)
    })?;
    write_log(&dir.join("log.csv"), &res.rows)?;
    write_design(&dir.join("final.dsg"), &space, &res.state)?;
    let eval = problem.evaluation(&res.labels)?.clone();
    for (field, op) in [(&eval.nominal, "nominal"), (&eval.damaging, "damaging")] {
        let data = field_export(&model, &res.labels, field).point("psi", nodal_psi(&space, &res.state));
        write_vtk(&dir.join(format!("final_{op}.vtk")), model.mesh(), &format!("demagopt final {op}"), &data)?;
    }
    let reference = reference_evaluation(cfg, &res.labels)?;
    let report = final_report(cfg, &res, &reference);
    write_text(&dir.join("report.txt"), &report)?;
    Ok((res, reference, report))
}

pub fn cmd_optimize(common: &Common, mode: Option<&str>, exact_td: bool, design: Option<&str>) -> Result<Outcome> {
    let cfg = apply_mode(load_config(common)?, mode)?;
    let (res, _, report) = run_optimize(&cfg, exact_td, design)?;
    let code = if res.status == Status::Stalled { EXIT_STALLED } else { 0 };
    Ok(Outcome { report, code })
}

pub fn cmd_evaluate(common: &Common, design: Option<&str>, mode: Option<&str>) -> Result<Outcome> {
    let (cfg, model) = setup(common, mode)?;
    let space = design_space(&model)?;
    let labels = load_design(&cfg, &model, &space, design)?.material_map(&space);
    let e = model.evaluate(&labels).map_err(|e| solver_error(&cfg.output_dir, e))?;
    let mut r = String::new();
    writeln!(r, "torque={:e} Nm", e.torque).unwrap();
    writeln!(r, "constraint={:e}", e.constraint).unwrap();
    writeln!(r, "demag_nominal={:e}", e.demag_nominal).unwrap();
    writeln!(r, "demag_damaging={:e}", e.demag_damaging).unwrap();
    writeln!(r, "magnet_volume={:e}", e.magnet_volume).unwrap();
    writeln!(r, "design_area={:e}", space.total_area()).unwrap();
    Ok(Outcome::ok(r))
}

fn set_threads(common: &Common) {
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Mesh { common, h } => {
            set_threads(common);
            cmd_mesh(common, h.as_deref())
        }
        Command::Solve { common, design, op } => {
            set_threads(common);
            cmd_solve(common, design.as_deref(), op)
        }
        Command::Adjoint { common, design, op } => {
            set_threads(common);
            cmd_adjoint(common, design.as_deref(), op)
        }
        Command::TdTable { common, pair, grid } => {
            set_threads(common);
            cmd_td_table(common, pair, *grid)
        }
        Command::Optimize {
            common,
            mode,
            exact_td,
            design,
        } => {
            set_threads(common);
            cmd_optimize(common, mode.as_deref(), *exact_td, design.as_deref())
        }
        Command::Evaluate { common, design, mode } => {
            set_threads(common);
            cmd_evaluate(common, design.as_deref(), mode.as_deref())
        }
    }
}
