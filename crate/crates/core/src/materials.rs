//! Constitutive laws `h(b)` and their Jacobians for air, saturating iron and oriented
//! permanent magnets (linear and nonlinear demagnetization curves).

use std::f64::consts::PI;

use crate::{dot, norm, Vec2};

pub type Mat2 = [[f64; 2]; 2];

/// Vacuum reluctivity 1/mu0 in m/H.
pub const NU0: f64 = 1.0e7 / (4.0 * PI);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialParams {
    pub nu0: f64,
    /// Magnet reluctivity, `nu0 / 1.086` by default.
    pub nu_m: f64,
    /// Remanence (T) of the linear magnet law.
    pub b_r: f64,
    /// Coercivity (A/m) of the nonlinear magnet law.
    pub h_c: f64,
    /// Iron reluctivity at vanishing flux.
    pub iron_nu_low: f64,
    pub iron_knee: f64,
    pub iron_exponent: i32,
    /// Slope factor of the nonlinear magnet curve below the knee.
    pub magnet_knee_slope: f64,
    pub magnet_knee: f64,
    pub magnet_exponent: i32,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self::with_nu_m_ratio(1.086)
    }
}

impl MaterialParams {
    /// Default constants with `nu_m = nu0 / ratio`.
    pub fn with_nu_m_ratio(ratio: f64) -> Self {
        MaterialParams {
            nu0: NU0,
            nu_m: NU0 / ratio,
            b_r: 1.2,
            h_c: 4.75e5,
            iron_nu_low: 200.0,
            iron_knee: 2.2,
            iron_exponent: 12,
            magnet_knee_slope: 1.0 / 70.0,
            magnet_knee: 0.56,
            magnet_exponent: 12,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("nu0", self.nu0),
            ("nu_m", self.nu_m),
            ("B_R", self.b_r),
            ("H_c", self.h_c),
            ("iron_nu_low", self.iron_nu_low),
            ("iron_knee", self.iron_knee),
            ("magnet_knee_slope", self.magnet_knee_slope),
            ("magnet_knee", self.magnet_knee),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.nu_m < self.nu0) {
            return Err(format!("nu_m ({}) must be below nu0 ({})", self.nu_m, self.nu0));
        }
        if self.iron_exponent < 2 || self.magnet_exponent < 2 {
            return Err("saturation exponents must be >= 2".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MagnetLaw {
    Linear,
    Nonlinear,
}

impl MagnetLaw {
    pub fn name(self) -> &'static str {
        match self {
            MagnetLaw::Linear => "linear",
            MagnetLaw::Nonlinear => "nonlinear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(MagnetLaw::Linear),
            "nonlinear" => Some(MagnetLaw::Nonlinear),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagnetSpec {
    /// Easy-axis angle in radians.
    pub angle: f64,
    pub law: MagnetLaw,
}

impl MagnetSpec {
    pub fn new(angle: f64, law: MagnetLaw) -> Self {
        MagnetSpec { angle, law }
    }

    pub fn easy_axis(&self) -> Vec2 {
        [self.angle.cos(), self.angle.sin()]
    }

    pub fn cross_axis(&self) -> Vec2 {
        [-self.angle.sin(), self.angle.cos()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LawKind {
    Air,
    Iron,
    Magnet(MagnetSpec),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialLaw {
    pub kind: LawKind,
    pub params: MaterialParams,
}

/// `x / (c^n + x^n)^(1/n)` for even `n`, evaluated with both terms scaled by `max(c, |x|)`.
#[inline]
pub(crate) fn knee(x: f64, c: f64, n: i32) -> f64 {
    let m = c.max(x.abs());
    let s = (c / m).powi(n) + (x / m).powi(n);
    (x / m) / s.powf(1.0 / n as f64)
}

/// `c / (c^n + x^n)^(1/n)`, equal to `c * knee(x)/x` and to 1 at `x = 0`.
#[inline]
pub(crate) fn knee_ratio(x: f64, c: f64, n: i32) -> f64 {
    let m = c.max(x.abs());
    let s = (c / m).powi(n) + (x / m).powi(n);
    (c / m) / s.powf(1.0 / n as f64)
}

/// Derivative of [`knee`] with respect to `x`: `c^n / (c^n + x^n)^(1 + 1/n)`.
#[inline]
pub(crate) fn knee_prime(x: f64, c: f64, n: i32) -> f64 {
    let m = c.max(x.abs());
    let s = (c / m).powi(n) + (x / m).powi(n);
    (c / m).powi(n) / (m * s.powf(1.0 + 1.0 / n as f64))
}

impl MaterialLaw {
    pub fn air(params: MaterialParams) -> Self {
        MaterialLaw {
            kind: LawKind::Air,
            params,
        }
    }

    pub fn iron(params: MaterialParams) -> Self {
        MaterialLaw {
            kind: LawKind::Iron,
            params,
        }
    }

    pub fn magnet(spec: MagnetSpec, params: MaterialParams) -> Self {
        MaterialLaw {
            kind: LawKind::Magnet(spec),
            params,
        }
    }

    pub fn magnet_spec(&self) -> Option<&MagnetSpec> {
        match &self.kind {
            LawKind::Magnet(m) => Some(m),
            _ => None,
        }
    }

    pub fn is_isotropic(&self) -> bool {
        !matches!(self.kind, LawKind::Magnet(_))
    }

    /// True when `h` is affine in `b` (constant Jacobian).
    pub fn is_affine(&self) -> bool {
        match self.kind {
            LawKind::Air => true,
            LawKind::Iron => false,
            LawKind::Magnet(m) => m.law == MagnetLaw::Linear,
        }
    }

    /// Iron secant reluctivity `f_I(s)/s`, exact at `s = 0`.
    pub fn iron_secant(&self, s: f64) -> f64 {
        let p = &self.params;
        p.nu0 + (p.iron_nu_low - p.nu0) * knee_ratio(s, p.iron_knee, p.iron_exponent)
    }

    /// Iron curve `f_I(s)`.
    pub fn iron_curve(&self, s: f64) -> f64 {
        let p = &self.params;
        p.nu0 * s + (p.iron_nu_low - p.nu0) * p.iron_knee * knee(s, p.iron_knee, p.iron_exponent)
    }

    /// Easy-axis magnet curve `f_M(s)`.
    pub fn magnet_curve(&self, law: MagnetLaw, s: f64) -> f64 {
        let p = &self.params;
        match law {
            MagnetLaw::Linear => p.nu_m * (s - p.b_r),
            MagnetLaw::Nonlinear => {
                p.nu_m * s
                    + (p.nu_m * p.magnet_knee_slope - p.nu_m)
                        * p.magnet_knee
                        * knee(s, p.magnet_knee, p.magnet_exponent)
                    - p.h_c
            }
        }
    }

    pub fn magnet_curve_prime(&self, law: MagnetLaw, s: f64) -> f64 {
        let p = &self.params;
        match law {
            MagnetLaw::Linear => p.nu_m,
            MagnetLaw::Nonlinear => {
                p.nu_m
                    + (p.nu_m * p.magnet_knee_slope - p.nu_m)
                        * p.magnet_knee
                        * knee_prime(s, p.magnet_knee, p.magnet_exponent)
            }
        }
    }

    /// Field strength `h(b)` in A/m for flux density `b` in T.
    pub fn h(&self, b: Vec2) -> Vec2 {
        match self.kind {
            LawKind::Air => [self.params.nu0 * b[0], self.params.nu0 * b[1]],
            LawKind::Iron => {
                let nu = self.iron_secant(norm(b));
                [nu * b[0], nu * b[1]]
            }
            LawKind::Magnet(m) => {
                let e = m.easy_axis();
                let ep = m.cross_axis();
                let fe = self.magnet_curve(m.law, dot(b, e));
                let fp = self.params.nu_m * dot(b, ep);
                [fe * e[0] + fp * ep[0], fe * e[1] + fp * ep[1]]
            }
        }
    }

    /// Jacobian `dh/db`.
    pub fn jacobian(&self, b: Vec2) -> Mat2 {
        match self.kind {
            LawKind::Air => [[self.params.nu0, 0.0], [0.0, self.params.nu0]],
            LawKind::Iron => {
                let p = &self.params;
                let s = norm(b);
                let nu = self.iron_secant(s);
                // nu'(s)/s = -(nu_low - nu0) c s^(n-2) / (c^n + s^n)^(1+1/n)
                let (c, n) = (p.iron_knee, p.iron_exponent);
                let m = c.max(s);
                let sc = (c / m).powi(n) + (s / m).powi(n);
                let dnu_over_s = -(p.iron_nu_low - p.nu0) * (c / m) * (s / m).powi(n - 2)
                    / (m * m * sc.powf(1.0 + 1.0 / n as f64));
                [
                    [nu + dnu_over_s * b[0] * b[0], dnu_over_s * b[0] * b[1]],
                    [dnu_over_s * b[1] * b[0], nu + dnu_over_s * b[1] * b[1]],
                ]
            }
            LawKind::Magnet(m) => {
                let e = m.easy_axis();
                let ep = m.cross_axis();
                let fe = self.magnet_curve_prime(m.law, dot(b, e));
                let fp = self.params.nu_m;
                let mut j = [[0.0; 2]; 2];
                for r in 0..2 {
                    for c in 0..2 {
                        j[r][c] = fe * e[r] * e[c] + fp * ep[r] * ep[c];
                    }
                }
                j
            }
        }
    }
}

/// Checks the rotated magnet form against `nu_m (b - B_R e)` for a linear magnet law.
pub fn magnet_equivalence_check(law: &MaterialLaw, b: Vec2) -> bool {
    let Some(m) = law.magnet_spec() else {
        return false;
    };
    if m.law != MagnetLaw::Linear {
        return false;
    }
    let p = &law.params;
    let e = m.easy_axis();
    let reference = [p.nu_m * (b[0] - p.b_r * e[0]), p.nu_m * (b[1] - p.b_r * e[1])];
    let h = law.h(b);
    let scale = p.nu_m * (norm(b) + p.b_r);
    norm([h[0] - reference[0], h[1] - reference[1]]) <= 1e-10 * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params() -> MaterialParams {
        MaterialParams::default()
    }

    fn fd_jacobian(law: &MaterialLaw, b: Vec2, step: f64) -> Mat2 {
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut bp = b;
            let mut bm = b;
            bp[c] += step;
            bm[c] -= step;
            let (hp, hm) = (law.h(bp), law.h(bm));
            for r in 0..2 {
                j[r][c] = (hp[r] - hm[r]) / (2.0 * step);
            }
        }
        j
    }

    fn rel_err(a: Mat2, b: Mat2) -> f64 {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for r in 0..2 {
            for c in 0..2 {
                num = num.max((a[r][c] - b[r][c]).abs());
                den = den.max(b[r][c].abs());
            }
        }
        num / den
    }

    #[test]
    fn iron_at_zero_flux() {
        let iron = MaterialLaw::iron(params());
        assert_eq!(iron.h([0.0, 0.0]), [0.0, 0.0]);
        assert!((iron.iron_secant(0.0) - 200.0).abs() < 200.0 * 1e-9);
        let j = iron.jacobian([0.0, 0.0]);
        assert!((j[0][0] - 200.0).abs() < 1e-9 && j[0][1] == 0.0);
    }

    #[test]
    fn linear_magnet_zero_at_remanence() {
        let m = MaterialLaw::magnet(MagnetSpec::new(0.0, MagnetLaw::Linear), params());
        assert_eq!(m.h([1.2, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn nonlinear_magnet_at_zero_flux_is_minus_coercivity() {
        for deg in [0.0f64, 15.0, 30.0, 117.0] {
            let spec = MagnetSpec::new(deg.to_radians(), MagnetLaw::Nonlinear);
            let m = MaterialLaw::magnet(spec, params());
            let h = m.h([0.0, 0.0]);
            let e = spec.easy_axis();
            assert!((h[0] + 4.75e5 * e[0]).abs() < 1e-6);
            assert!((h[1] + 4.75e5 * e[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn air_is_nu0() {
        let air = MaterialLaw::air(params());
        let h = air.h([1.0, 0.0]);
        assert!((h[0] - 795_774.715_459_476_7).abs() < 1e-6);
        assert_eq!(air.jacobian([0.3, 0.7]), [[NU0, 0.0], [0.0, NU0]]);
    }

    #[test]
    fn linear_magnet_jacobian_is_nu_m_identity() {
        let spec = MagnetSpec::new(30f64.to_radians(), MagnetLaw::Linear);
        let m = MaterialLaw::magnet(spec, params());
        let j = m.jacobian([0.4, -1.1]);
        let nu_m = params().nu_m;
        assert!((j[0][0] - nu_m).abs() < 1e-9 && (j[1][1] - nu_m).abs() < 1e-9);
        assert!(j[0][1].abs() < 1e-9 && j[1][0].abs() < 1e-9);
    }

    #[test]
    fn iron_jacobian_matches_finite_differences() {
        let iron = MaterialLaw::iron(params());
        let b = [1.0, 0.5];
        let fd = fd_jacobian(&iron, b, 1e-6 * norm(b));
        assert!(rel_err(iron.jacobian(b), fd) < 1e-5);
    }

    #[test]
    fn magnet_equivalence() {
        let spec = MagnetSpec::new(30f64.to_radians(), MagnetLaw::Linear);
        let m = MaterialLaw::magnet(spec, params());
        assert!(magnet_equivalence_check(&m, [0.3, -0.8]));
        let m0 = MaterialLaw::magnet(MagnetSpec::new(0.0, MagnetLaw::Linear), params());
        assert!(magnet_equivalence_check(&m0, [1.2, 0.0]));
        assert_eq!(m0.h([1.2, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn iron_curve_monotone_with_bounded_secant() {
        let iron = MaterialLaw::iron(params());
        let mut prev = iron.iron_curve(0.0);
        let mut nu_min = f64::INFINITY;
        for k in 1..=1000 {
            let s = 3.0 * k as f64 / 1000.0;
            let f = iron.iron_curve(s);
            assert!(f > prev);
            prev = f;
            let nu = iron.iron_secant(s);
            assert!((f / s - nu).abs() <= 1e-9 * nu);
            nu_min = nu_min.min(nu);
            assert!(nu >= 200.0 - 1e-9 && nu <= NU0);
        }
        assert!(nu_min > 0.0);
    }

    #[test]
    fn nonlinear_magnet_curve_has_single_positive_root() {
        let law = MaterialLaw::magnet(MagnetSpec::new(0.0, MagnetLaw::Nonlinear), params());
        let f = |s: f64| law.magnet_curve(MagnetLaw::Nonlinear, s);
        let n = 3000;
        let mut sign_changes = 0;
        let mut prev = f(0.0);
        for k in 1..=n {
            let s = 3.0 * k as f64 / n as f64;
            let v = f(s);
            assert!(v > prev, "not increasing at {s}");
            if (v > 0.0) != (prev > 0.0) {
                sign_changes += 1;
            }
            prev = v;
        }
        assert_eq!(sign_changes, 1);
        // Bisection oracle for the root.
        let (mut lo, mut hi) = (0.0, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        assert!(lo > 1.1 && lo < 1.3, "root {lo}");
    }

    #[test]
    fn knee_is_overflow_safe() {
        let v = knee(1e30, 2.2, 12);
        assert!((v - 1.0).abs() < 1e-12);
        assert!(knee_prime(1e30, 2.2, 12).is_finite());
        assert!((knee(-1e30, 2.2, 12) + 1.0).abs() < 1e-12);
    }

    fn law_strategy() -> impl Strategy<Value = MaterialLaw> {
        prop_oneof![
            Just(MaterialLaw::air(MaterialParams::default())),
            Just(MaterialLaw::iron(MaterialParams::default())),
            (0.0..std::f64::consts::TAU).prop_map(|a| MaterialLaw::magnet(
                MagnetSpec::new(a, MagnetLaw::Linear),
                MaterialParams::default()
            )),
            (0.0..std::f64::consts::TAU).prop_map(|a| MaterialLaw::magnet(
                MagnetSpec::new(a, MagnetLaw::Nonlinear),
                MaterialParams::default()
            )),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn jacobian_matches_fd(law in law_strategy(), bx in -2.5f64..2.5, by in -2.5f64..2.5) {
            let b = [bx, by];
            let step = 1e-6 * norm(b).max(1e-3);
            let fd = fd_jacobian(&law, b, step);
            prop_assert!(rel_err(law.jacobian(b), fd) < 1e-5);
        }

        #[test]
        fn jacobian_symmetric(law in law_strategy(), bx in -3.0f64..3.0, by in -3.0f64..3.0) {
            let j = law.jacobian([bx, by]);
            prop_assert!((j[0][1] - j[1][0]).abs() <= 1e-12 * (j[0][0].abs() + j[1][1].abs()));
        }

        #[test]
        fn continuity(law in law_strategy(), bx in -2.0f64..2.0, by in -2.0f64..2.0, t in 0.0..std::f64::consts::TAU) {
            let d = 1e-8;
            let h0 = law.h([bx, by]);
            let h1 = law.h([bx + d * t.cos(), by + d * t.sin()]);
            prop_assert!(norm([h1[0] - h0[0], h1[1] - h0[1]]) <= 2.0 * NU0 * d);
        }

        #[test]
        fn isotropic_laws_commute_with_rotation(iron in any::<bool>(), bx in -2.0f64..2.0, by in -2.0f64..2.0, t in 0.0..std::f64::consts::TAU) {
            let law = if iron { MaterialLaw::iron(MaterialParams::default()) } else { MaterialLaw::air(MaterialParams::default()) };
            let (c, s) = (t.cos(), t.sin());
            let rot = |v: Vec2| [c * v[0] - s * v[1], s * v[0] + c * v[1]];
            let lhs = law.h(rot([bx, by]));
            let rhs = rot(law.h([bx, by]));
            let scale = norm(rhs).max(1e-300);
            prop_assert!(norm([lhs[0] - rhs[0], lhs[1] - rhs[1]]) <= 1e-12 * scale);
        }

        #[test]
        fn equivalence_sweep(a in 0.0..std::f64::consts::TAU, bx in -2.0f64..2.0, by in -2.0f64..2.0) {
            let m = MaterialLaw::magnet(MagnetSpec::new(a, MagnetLaw::Linear), MaterialParams::default());
            prop_assert!(magnet_equivalence_check(&m, [bx, by]));
        }
    }
}
