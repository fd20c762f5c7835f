//! Topological derivatives for material changes at a point.
//!
//! For a background flux `B` and a pair of laws (`h0` outside, `h1` in the unit inclusion)
//! the exterior problem is solved on a truncated polar disk. The derivative is affine in
//! the adjoint flux `B^`:
//!
//! ```text
//! d = v(B) . B^ + s(B)
//! v = 1/pi int (h_w(B + curl K) - h_w(B) - h_w'(B) curl K)
//!   + 1/pi int_w (h1'(B) - h0'(B)) curl K + h1(B) - h0(B)
//! s = the same three terms with the penalty integrand j in place of h
//! ```
//!
//! where `j_i(b) = phi_p(b . e_i)` for magnets and zero otherwise. On the mesh the factor
//! `1/pi` becomes one over the area of the polygonal inclusion, which keeps the terms
//! consistent when the inclusion field nearly cancels `B`.

mod table;

pub use table::{GridSpec, TableSet, TdTable, TABLE_HEADER};

use crate::fem::{newton_solve, Discretization, FieldProblem, NewtonConfig, OperatingPoint};
use crate::machine::{Material, MaterialSet};
use crate::materials::{Mat2, MaterialLaw};
use crate::mesh::polar_disk;
use crate::penalty::{phi_p, phi_p_prime, PenaltyConfig};
use crate::{dot, Error, Result, Vec2};

use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExteriorConfig {
    /// Truncation radius in units of the inclusion radius.
    pub r_trunc: f64,
    /// Angular divisions (segments on the inclusion boundary).
    pub n_theta: usize,
    /// Rings inside the inclusion.
    pub inner_rings: usize,
    /// Radius ratio of successive outer rings.
    pub growth: f64,
    pub newton: NewtonConfig,
}

impl Default for ExteriorConfig {
    fn default() -> Self {
        ExteriorConfig {
            r_trunc: 50.0,
            n_theta: 64,
            inner_rings: 8,
            growth: 1.0 + 2.0 * PI / 64.0,
            newton: NewtonConfig {
                tol: 1e-10,
                max_iter: 50,
                damping_floor: 1e-4,
            },
        }
    }
}

impl ExteriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_trunc >= 20.0) {
            return Err(Error::config("tderiv.r_trunc", format!("must be >= 20, got {}", self.r_trunc)));
        }
        if self.n_theta < 64 {
            return Err(Error::config("tderiv.n_theta", format!("must be >= 64, got {}", self.n_theta)));
        }
        if self.inner_rings == 0 {
            return Err(Error::config("tderiv.inner_rings", "must be positive"));
        }
        if !(self.growth > 1.0) {
            return Err(Error::config("tderiv.growth", "must exceed 1"));
        }
        Ok(())
    }

    /// Ring radii: uniform inside the unit inclusion, geometric outside up to `r_trunc`.
    pub fn ring_radii(&self) -> Vec<f64> {
        let mut r: Vec<f64> = (1..=self.inner_rings)
            .map(|k| k as f64 / self.inner_rings as f64)
            .collect();
        let n_out = (self.r_trunc.ln() / self.growth.ln()).ceil().max(1.0) as usize;
        let q = self.r_trunc.powf(1.0 / n_out as f64);
        for k in 1..n_out {
            r.push(q.powi(k as i32));
        }
        r.push(self.r_trunc);
        r
    }
}

/// Discretized truncated exterior domain, shared by all samples.
#[derive(Clone, Debug)]
pub struct ExteriorMesh {
    pub cfg: ExteriorConfig,
    pub disc: Discretization,
    /// Triangle lies in the unit inclusion.
    pub inside: Vec<bool>,
    /// Area of the discrete inclusion (slightly below pi).
    pub inclusion_area: f64,
}

impl ExteriorMesh {
    pub fn new(cfg: ExteriorConfig) -> Result<Self> {
        cfg.validate()?;
        let inner = cfg.inner_rings;
        let disk = polar_disk([0.0, 0.0], &cfg.ring_radii(), cfg.n_theta, |_, k| (k < inner) as u32)?;
        let inside = disk.mesh.regions.iter().map(|&r| r == 1).collect();
        let disc = Discretization::new(disk.mesh, None)?;
        let inclusion_area = disc
            .geoms
            .iter()
            .zip(&inside)
            .filter(|(_, &i)| i)
            .map(|(g, _)| g.area)
            .sum();
        Ok(ExteriorMesh {
            cfg,
            disc,
            inside,
            inclusion_area,
        })
    }
}

/// Ordered material change `from -> to` with the laws and penalty data it needs.
#[derive(Clone, Copy, Debug)]
pub struct PairLaws {
    pub from: Material,
    pub to: Material,
    pub h0: MaterialLaw,
    pub h1: MaterialLaw,
    /// Easy axes of `from` and `to` when they are magnets.
    pub e0: Option<Vec2>,
    pub e1: Option<Vec2>,
}

impl PairLaws {
    pub fn new(from: Material, to: Material, materials: &MaterialSet) -> Self {
        let axis = |m: Material| m.magnet_index().map(|k| materials.easy_axis(k));
        PairLaws {
            from,
            to,
            h0: materials.law(from),
            h1: materials.law(to),
            e0: axis(from),
            e1: axis(to),
        }
    }

    /// Pair of arbitrary laws without penalty terms.
    pub fn from_laws(h0: MaterialLaw, h1: MaterialLaw) -> Self {
        PairLaws {
            from: Material::Air,
            to: Material::Air,
            h0,
            h1,
            e0: None,
            e1: None,
        }
    }

    pub fn name(&self) -> String {
        format!("{}:{}", self.from.name(), self.to.name())
    }
}

/// Solution of the exterior problem: flux perturbation `curl K` per triangle.
#[derive(Clone, Debug)]
pub struct ExteriorSolution {
    pub k: Vec<f64>,
    pub curl_k: Vec<Vec2>,
    pub iterations: usize,
}

pub fn solve_exterior(ext: &ExteriorMesh, pair: &PairLaws, b: Vec2) -> Result<ExteriorSolution> {
    let laws: Vec<MaterialLaw> = ext
        .inside
        .iter()
        .map(|&i| if i { pair.h1 } else { pair.h0 })
        .collect();
    let prob = FieldProblem {
        laws: &laws,
        current: &[],
        background: b,
        h_offset: pair.h0.h(b),
    };
    let sol = newton_solve(&ext.disc, &prob, None, OperatingPoint::Nominal, &ext.cfg.newton)?;
    let curl_k = sol.b.iter().map(|x| [x[0] - b[0], x[1] - b[1]]).collect();
    Ok(ExteriorSolution {
        k: sol.a,
        curl_k,
        iterations: sol.iterations,
    })
}

/// Affine decomposition `d = v . B^ + s` at one background flux.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdSample {
    pub b: Vec2,
    pub v: Vec2,
    pub s: f64,
}

impl TdSample {
    pub fn eval(&self, b_hat: Vec2) -> f64 {
        dot(self.v, b_hat) + self.s
    }
}

fn mat_vec(m: &Mat2, x: Vec2) -> Vec2 {
    [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]]
}

fn penalty_value(e: Option<Vec2>, b: Vec2, cfg: &PenaltyConfig) -> f64 {
    e.map_or(0.0, |e| phi_p(dot(b, e), cfg))
}

/// Directional derivative `j'(b)(c)`.
fn penalty_derivative(e: Option<Vec2>, b: Vec2, c: Vec2, cfg: &PenaltyConfig) -> f64 {
    e.map_or(0.0, |e| phi_p_prime(dot(b, e), cfg) * dot(c, e))
}

/// Evaluates `v` and `s` from an exterior solution.
pub fn td_terms(ext: &ExteriorMesh, pair: &PairLaws, b: Vec2, sol: &ExteriorSolution, penalty: &PenaltyConfig) -> TdSample {
    let (h0b, h1b) = (pair.h0.h(b), pair.h1.h(b));
    let (j0, j1) = (pair.h0.jacobian(b), pair.h1.jacobian(b));
    let (p0b, p1b) = (penalty_value(pair.e0, b, penalty), penalty_value(pair.e1, b, penalty));
    let mut v = [0.0; 2];
    let mut s = 0.0;
    for (t, &inside) in ext.inside.iter().enumerate() {
        let area = ext.disc.geoms[t].area;
        let c = sol.curl_k[t];
        let bt = [b[0] + c[0], b[1] + c[1]];
        let (law, hb, jac, e, pb) = if inside {
            (&pair.h1, h1b, &j1, pair.e1, p1b)
        } else {
            (&pair.h0, h0b, &j0, pair.e0, p0b)
        };
        // Term 1: remainder of the linearization of h_w around B.
        let h = law.h(bt);
        let jc = mat_vec(jac, c);
        v[0] += area * (h[0] - hb[0] - jc[0]);
        v[1] += area * (h[1] - hb[1] - jc[1]);
        // Term 4: same for the penalty integrand.
        if e.is_some() {
            s += area * (penalty_value(e, bt, penalty) - pb - penalty_derivative(e, b, c, penalty));
        }
        if inside {
            // Terms 2 and 5: Jacobian contrast inside the inclusion.
            let d1 = mat_vec(&j1, c);
            let d0 = mat_vec(&j0, c);
            v[0] += area * (d1[0] - d0[0]);
            v[1] += area * (d1[1] - d0[1]);
            s += area
                * (penalty_derivative(pair.e1, b, c, penalty) - penalty_derivative(pair.e0, b, c, penalty));
        }
    }
    let w = ext.inclusion_area;
    TdSample {
        b,
        v: [v[0] / w + h1b[0] - h0b[0], v[1] / w + h1b[1] - h0b[1]],
        s: s / w + p1b - p0b,
    }
}

/// Solves the exterior problem at `b` and returns the affine decomposition.
pub fn evaluate_sample(ext: &ExteriorMesh, pair: &PairLaws, b: Vec2, penalty: &PenaltyConfig) -> Result<TdSample> {
    let sol = solve_exterior(ext, pair, b).map_err(|e| Error::Sample {
        bx: b[0],
        by: b[1],
        source: Box::new(e),
    })?;
    Ok(td_terms(ext, pair, b, &sol, penalty))
}

/// Topological derivative `d^{from->to}` at state flux `b` and adjoint flux `b_hat`.
pub fn evaluate_td(ext: &ExteriorMesh, pair: &PairLaws, b: Vec2, b_hat: Vec2, penalty: &PenaltyConfig) -> Result<f64> {
    Ok(evaluate_sample(ext, pair, b, penalty)?.eval(b_hat))
}
