//! Demagnetization penalty, its p-norm relaxation, the relaxed constraint functional and
//! the partial-demagnetization metric.
//!
//! Flux is piecewise constant on P1 meshes, so the pointwise constraint `b.e >= B*` is
//! checked per element and all integrals are area-weighted element sums in index order.

use crate::{dot, Error, Result, Vec2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PenaltyConfig {
    /// Knee flux density B* (T).
    pub b_star: f64,
    /// Relaxation exponent (even, >= 2).
    pub p: u32,
    /// Fully demagnetized easy-axis flux B0* (T).
    pub b0_star: f64,
    /// Constraint weight.
    pub gamma: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            b_star: 0.56,
            p: 16,
            b0_star: -0.66,
            gamma: 10.0,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.b_star > self.b0_star) {
            return Err(format!(
                "B* ({}) must exceed B0* ({})",
                self.b_star, self.b0_star
            ));
        }
        if !(self.b_star > 0.0) {
            return Err(format!("B* must be positive, got {}", self.b_star));
        }
        if self.p < 2 || self.p % 2 != 0 {
            return Err(format!("p must be an even integer >= 2, got {}", self.p));
        }
        if !(self.gamma >= 0.0) {
            return Err(format!("gamma must be non-negative, got {}", self.gamma));
        }
        Ok(())
    }

    pub fn with_p(self, p: u32) -> Self {
        PenaltyConfig { p, ..self }
    }
}

/// Exact penalty `max(B* - s, 0)`.
pub fn phi(s: f64, b_star: f64) -> f64 {
    (b_star - s).max(0.0)
}

/// Smoothed penalty `(B*^p + (2B* - s)^p)^(1/p) - B*` for `s < 2B*`, zero otherwise.
pub fn phi_p(s: f64, cfg: &PenaltyConfig) -> f64 {
    let bs = cfg.b_star;
    let u = 2.0 * bs - s;
    if u <= 0.0 {
        return 0.0;
    }
    let p = cfg.p as i32;
    let m = bs.max(u);
    let sum = (bs / m).powi(p) + (u / m).powi(p);
    m * sum.powf(1.0 / p as f64) - bs
}

/// Derivative of [`phi_p`]; lies in `[-1, 0]`.
pub fn phi_p_prime(s: f64, cfg: &PenaltyConfig) -> f64 {
    let bs = cfg.b_star;
    let u = 2.0 * bs - s;
    if u <= 0.0 {
        return 0.0;
    }
    let p = cfg.p as i32;
    let m = bs.max(u);
    let sum = (bs / m).powi(p) + (u / m).powi(p);
    -(u / m).powi(p - 1) * sum.powf(1.0 / p as f64 - 1.0)
}

/// Magnet membership of one element: which magnet (0 or 1) and its easy axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagnetElement {
    pub magnet: usize,
    pub axis: Vec2,
}

fn check_sizes(b: &[Vec2], areas: &[f64], magnets: &[Option<MagnetElement>]) -> Result<()> {
    if areas.len() != b.len() {
        return Err(Error::SizeMismatch {
            what: "element areas",
            expected: b.len(),
            got: areas.len(),
        });
    }
    if magnets.len() != b.len() {
        return Err(Error::SizeMismatch {
            what: "element material map",
            expected: b.len(),
            got: magnets.len(),
        });
    }
    Ok(())
}

/// Relaxed constraint `sum_e |e| phi_p(b_e . e_M)` over magnet elements (T m^2).
pub fn constraint_functional(
    b: &[Vec2],
    areas: &[f64],
    magnets: &[Option<MagnetElement>],
    cfg: &PenaltyConfig,
) -> Result<f64> {
    check_sizes(b, areas, magnets)?;
    Ok(magnets
        .iter()
        .zip(b)
        .zip(areas)
        .filter_map(|((m, b), a)| m.map(|m| a * phi_p(dot(*b, m.axis), cfg)))
        .sum())
}

/// Local demagnetization `max((B* - b.e)/(B* - B0*), 0)` on magnet elements, 0 elsewhere.
pub fn demag_integrand(b: &[Vec2], magnets: &[Option<MagnetElement>], cfg: &PenaltyConfig) -> Vec<f64> {
    magnets
        .iter()
        .zip(b)
        .map(|(m, b)| match m {
            Some(m) => ((cfg.b_star - dot(*b, m.axis)) / (cfg.b_star - cfg.b0_star)).max(0.0),
            None => 0.0,
        })
        .collect()
}

/// Partial demagnetization: sum over magnets of the area-averaged local demagnetization.
/// Not clamped above 1. A magnet without elements contributes 0 and logs a warning.
pub fn demag_metric(
    b: &[Vec2],
    areas: &[f64],
    magnets: &[Option<MagnetElement>],
    cfg: &PenaltyConfig,
    n_magnets: usize,
) -> Result<f64> {
    check_sizes(b, areas, magnets)?;
    let local = demag_integrand(b, magnets, cfg);
    let mut total = 0.0;
    for k in 0..n_magnets {
        let mut area = 0.0;
        let mut integral = 0.0;
        for ((m, a), d) in magnets.iter().zip(areas).zip(&local) {
            if let Some(m) = m {
                if m.magnet == k {
                    area += a;
                    integral += a * d;
                }
            }
        }
        if area > 0.0 {
            total += integral / area;
        } else {
            log::warn!("magnet {} has no elements; it contributes 0 to the demagnetization metric", k + 1);
        }
    }
    Ok(total)
}
