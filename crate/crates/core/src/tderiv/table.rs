//! Offline tabulation of `v(B)` and `s(B)` on a uniform grid and bilinear lookup.
//!
//! File layout:
//!
//! ```text
//! tdtable v1
//! pair=<from>:<to>
//! grid=<Bmin> <Bmax> <n>
//! penalty=<B*> <p>
//! law=<linear|nonlinear>
//! Bx By vx vy s      (n^2 lines, Bx index outer)
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use super::{evaluate_sample, ExteriorMesh, PairLaws, TdSample};
use crate::machine::{Material, MaterialSet};
use crate::materials::MagnetLaw;
use crate::penalty::PenaltyConfig;
use crate::{Error, Result, Vec2};

pub const TABLE_HEADER: &str = "tdtable v1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            min: -2.5,
            max: 2.5,
            n: 51,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !(self.max > self.min) {
            return Err(Error::config(
                "tderiv.grid",
                format!("need n >= 2 and max > min, got {} {} {}", self.min, self.max, self.n),
            ));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.max
        } else {
            self.min + i as f64 * self.step()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdTable {
    pub from: Material,
    pub to: Material,
    pub grid: GridSpec,
    pub b_star: f64,
    pub p: u32,
    pub law: MagnetLaw,
    /// Row-major, `samples[i * n + j]` at `(node(i), node(j))`.
    pub samples: Vec<TdSample>,
}

impl TdTable {
    /// Evaluates every grid node; the result is independent of the thread count.
    pub fn build(
        ext: &ExteriorMesh,
        pair: &PairLaws,
        grid: GridSpec,
        penalty: &PenaltyConfig,
        law: MagnetLaw,
    ) -> Result<Self> {
        grid.validate()?;
        let n = grid.n;
        let samples = (0..n * n)
            .into_par_iter()
            .map(|k| evaluate_sample(ext, pair, [grid.node(k / n), grid.node(k % n)], penalty))
            .collect::<Result<Vec<_>>>()?;
        Ok(TdTable {
            from: pair.from,
            to: pair.to,
            grid,
            b_star: penalty.b_star,
            p: penalty.p,
            law,
            samples,
        })
    }

    pub fn pair_name(&self) -> String {
        format!("{}:{}", self.from.name(), self.to.name())
    }

    /// Bilinear interpolation of `(v, s)`; returns `true` as third value when `b` was
    /// clamped into the grid.
    pub fn lookup(&self, b: Vec2) -> (Vec2, f64, bool) {
        let g = &self.grid;
        let n = g.n;
        let h = g.step();
        let mut clamped = false;
        let mut locate = |x: f64| {
            let xc = if x.is_nan() {
                clamped = true;
                g.min
            } else if x < g.min || x > g.max {
                clamped = true;
                x.clamp(g.min, g.max)
            } else {
                x
            };
            let i = (((xc - g.min) / h).floor() as usize).min(n - 2);
            let t = ((xc - g.node(i)) / h).clamp(0.0, 1.0);
            (i, t)
        };
        let (i, tx) = locate(b[0]);
        let (j, ty) = locate(b[1]);
        let at = |i: usize, j: usize| &self.samples[i * n + j];
        let w = [
            ((1.0 - tx) * (1.0 - ty), at(i, j)),
            (tx * (1.0 - ty), at(i + 1, j)),
            ((1.0 - tx) * ty, at(i, j + 1)),
            (tx * ty, at(i + 1, j + 1)),
        ];
        let mut v = [0.0; 2];
        let mut s = 0.0;
        for (wk, smp) in w {
            if wk != 0.0 {
                v[0] += wk * smp.v[0];
                v[1] += wk * smp.v[1];
                s += wk * smp.s;
            }
        }
        (v, s, clamped)
    }

    /// `d = v(b) . b_hat + s(b)`; out-of-range `b` increments `clamps`.
    pub fn interpolate(&self, b: Vec2, b_hat: Vec2, clamps: &AtomicUsize) -> f64 {
        let (v, s, c) = self.lookup(b);
        if c {
            clamps.fetch_add(1, Ordering::Relaxed);
        }
        v[0] * b_hat[0] + v[1] * b_hat[1] + s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 80);
        writeln!(out, "{TABLE_HEADER}").unwrap();
        writeln!(out, "pair={}", self.pair_name()).unwrap();
        writeln!(out, "grid={:e} {:e} {}", self.grid.min, self.grid.max, self.grid.n).unwrap();
        writeln!(out, "penalty={:e} {}", self.b_star, self.p).unwrap();
        writeln!(out, "law={}", self.law.name()).unwrap();
        for s in &self.samples {
            writeln!(out, "{:e} {:e} {:e} {:e} {:e}", s.b[0], s.b[1], s.v[0], s.v[1], s.s).unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse {
            path: name.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.trim()))
                .ok_or_else(|| perr(0, format!("truncated file: missing {what}")))
        };
        let (ln, header) = next("header")?;
        if header != TABLE_HEADER {
            return Err(perr(ln, format!("expected `{TABLE_HEADER}`, found `{header}`")));
        }
        let mut meta = |key: &str| -> Result<(usize, String)> {
            let (ln, l) = next(key)?;
            l.strip_prefix(&format!("{key}="))
                .map(|v| (ln, v.to_string()))
                .ok_or_else(|| perr(ln, format!("expected `{key}=...`")))
        };
        let (ln, pair) = meta("pair")?;
        let (from, to) = pair
            .split_once(':')
            .and_then(|(a, b)| Some((Material::parse(a)?, Material::parse(b)?)))
            .ok_or_else(|| perr(ln, format!("bad pair `{pair}`")))?;
        let (ln, grid) = meta("grid")?;
        let g: Vec<&str> = grid.split_whitespace().collect();
        let grid = match g.as_slice() {
            [a, b, n] => match (a.parse(), b.parse(), n.parse()) {
                (Ok(min), Ok(max), Ok(n)) => GridSpec { min, max, n },
                _ => return Err(perr(ln, format!("bad grid `{grid}`"))),
            },
            _ => return Err(perr(ln, format!("bad grid `{grid}`"))),
        };
        grid.validate().map_err(|e| perr(ln, e.to_string()))?;
        let (ln, pen) = meta("penalty")?;
        let (b_star, p) = pen
            .split_once(' ')
            .and_then(|(a, b)| Some((a.parse().ok()?, b.trim().parse().ok()?)))
            .ok_or_else(|| perr(ln, format!("bad penalty `{pen}`")))?;
        let (ln, law) = meta("law")?;
        let law = MagnetLaw::parse(&law).ok_or_else(|| perr(ln, format!("bad law `{law}`")))?;
        let count = grid.n * grid.n;
        let mut samples = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, l) = next("sample")?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(ln, format!("cannot parse sample `{l}`")))?;
            if vals.len() != 5 || vals.iter().any(|v| !v.is_finite()) {
                return Err(perr(ln, format!("expected 5 finite values, found `{l}`")));
            }
            samples.push(TdSample {
                b: [vals[0], vals[1]],
                v: [vals[2], vals[3]],
                s: vals[4],
            });
        }
        if let Some((i, l)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(perr(i + 1, format!("unexpected trailing content `{}`", l.trim())));
        }
        Ok(TdTable {
            from,
            to,
            grid,
            b_star,
            p,
            law,
            samples,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Refuses a table built for a different pair, grid, penalty or magnet law.
    pub fn check_compatible(
        &self,
        path: &Path,
        pair: (Material, Material),
        grid: &GridSpec,
        penalty: &PenaltyConfig,
        law: MagnetLaw,
    ) -> Result<()> {
        let err = |msg: String| Error::Table {
            path: path.display().to_string(),
            msg,
        };
        if (self.from, self.to) != pair {
            return Err(err(format!(
                "pair {} does not match requested {}:{}",
                self.pair_name(),
                pair.0.name(),
                pair.1.name()
            )));
        }
        if self.grid != *grid {
            return Err(err(format!("grid {:?} does not match configured {:?}", self.grid, grid)));
        }
        if self.b_star != penalty.b_star || self.p != penalty.p {
            return Err(err(format!(
                "penalty B*={} p={} does not match configured B*={} p={}",
                self.b_star, self.p, penalty.b_star, penalty.p
            )));
        }
        if self.law != law {
            return Err(err(format!(
                "magnet law {} does not match configured {}",
                self.law.name(),
                law.name()
            )));
        }
        Ok(())
    }
}

/// Tables for the ordered material pairs of one run, loaded or built on demand.
pub struct TableSet {
    pub ext: ExteriorMesh,
    pub materials: MaterialSet,
    pub penalty: PenaltyConfig,
    pub grid: GridSpec,
    /// Cache directory; `None` keeps tables in memory only.
    pub dir: Option<PathBuf>,
    tables: HashMap<(Material, Material), TdTable>,
}

impl TableSet {
    pub fn new(
        ext: ExteriorMesh,
        materials: MaterialSet,
        penalty: PenaltyConfig,
        grid: GridSpec,
        dir: Option<PathBuf>,
    ) -> Self {
        TableSet {
            ext,
            materials,
            penalty,
            grid,
            dir,
            tables: HashMap::new(),
        }
    }

    pub fn file_name(from: Material, to: Material, law: MagnetLaw) -> String {
        format!("td_{}_{}_{}.tdt", from.name(), to.name(), law.name())
    }

    pub fn path_for(&self, from: Material, to: Material) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(Self::file_name(from, to, self.materials.magnet_law)))
    }

    /// Loads the table from the cache directory or builds and stores it.
    pub fn ensure(&mut self, from: Material, to: Material) -> Result<()> {
        if self.tables.contains_key(&(from, to)) {
            return Ok(());
        }
        let law = self.materials.magnet_law;
        let path = self.path_for(from, to);
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            let t = TdTable::load(p)?;
            t.check_compatible(p, (from, to), &self.grid, &self.penalty, law)?;
            log::debug!("loaded table {}", p.display());
            self.tables.insert((from, to), t);
            return Ok(());
        }
        let start = std::time::Instant::now();
        let pair = PairLaws::new(from, to, &self.materials);
        let t = TdTable::build(&self.ext, &pair, self.grid, &self.penalty, law)?;
        log::info!(
            "built table {} ({} samples) in {:.1} s",
            t.pair_name(),
            t.samples.len(),
            start.elapsed().as_secs_f64()
        );
        if let Some(p) = path {
            if let Some(d) = p.parent() {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            t.save(&p)?;
        }
        self.tables.insert((from, to), t);
        Ok(())
    }

    pub fn ensure_all(&mut self) -> Result<()> {
        for from in Material::ALL {
            for to in Material::ALL {
                if from != to {
                    self.ensure(from, to)?;
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, from: Material, to: Material) -> Result<&TdTable> {
        self.tables
            .get(&(from, to))
            .ok_or_else(|| Error::MissingTable(format!("{}:{}", from.name(), to.name())))
    }

    pub fn insert(&mut self, table: TdTable) {
        self.tables.insert((table.from, table.to), table);
    }
}
