//! Scalar diagnostics: moments, entropy, weighted norms and energy seminorms.

use crate::grid::{Field, SpectralPlan};
use crate::ops::{bessel_m, weight, WeightOrder};
use crate::OpsError;

/// Entries in `[-CLAMP, 0)` count as round-off and are treated as zero.
pub const CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub momentum: [f64; 3],
    pub second_moment: f64,
}

pub fn moments(f: &Field) -> Moments {
    let g = f.grid();
    let mut mass = 0.0;
    let mut mom = [0.0; 3];
    let mut e2 = 0.0;
    for (idx, &x) in f.values().iter().enumerate() {
        let v = g.point(idx);
        mass += x;
        for d in 0..3 {
            mom[d] += v[d] * x;
        }
        e2 += (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) * x;
    }
    let dv = g.cell_volume();
    Moments {
        mass: mass * dv,
        momentum: mom.map(|m| m * dv),
        second_moment: e2 * dv,
    }
}

/// Copy of `f` with round-off negatives set to zero.
pub fn clamp_nonnegative(f: &Field) -> Result<Field, OpsError> {
    let min = f.min();
    if min < -CLAMP {
        return Err(OpsError::Negative(min));
    }
    Ok(f.map(|x| x.max(0.0)))
}

/// `sum f ln f dv^3` with `0 ln 0 = 0`.
pub fn entropy(f: &Field) -> Result<f64, OpsError> {
    let f = clamp_nonnegative(f)?;
    let s: f64 = f
        .values()
        .iter()
        .map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 })
        .sum();
    Ok(s * f.grid().cell_volume())
}

/// `|| <v>^k f ||_p`.
pub fn weighted_lp(f: &Field, k: WeightOrder, p: f64) -> Result<f64, OpsError> {
    if !(p >= 1.0) {
        return Err(OpsError::Exponent(p));
    }
    Ok(weight(f, k).norm_lp(p))
}

/// `|| <v>^(-3/2 + 3k/4) grad(f^(3/4)) ||_2`.
pub fn grad34(plan: &SpectralPlan, f: &Field, k: WeightOrder) -> Result<f64, OpsError> {
    let f34 = clamp_nonnegative(f)?.map(|x| x.powf(0.75));
    let grad = plan.gradient(&f34)?;
    let wk = WeightOrder::new(-1.5 + 0.75 * k.exponent())?;
    Ok(grad.map_comps(|c| weight(c, wk)).norm_l2())
}

/// `|| M(<v>^2 (f - g)) ||_2`.
pub fn m_diff_norm(plan: &SpectralPlan, f: &Field, g: &Field) -> Result<f64, OpsError> {
    f.grid().same_as(g.grid())?;
    let w = weight(&f.sub(g), WeightOrder(2.0));
    Ok(bessel_m(plan, &w)?.norm_l2())
}

/// Share of `sum |f|` carried by the shell `|v|_inf > 0.9 L`.
pub fn boundary_mass_fraction(f: &Field) -> f64 {
    let g = f.grid();
    let cut = 0.9 * g.half_width();
    let mut shell = 0.0;
    let mut total = 0.0;
    for (idx, &x) in f.values().iter().enumerate() {
        total += x.abs();
        if g.point(idx).iter().any(|c| c.abs() > cut) {
            shell += x.abs();
        }
    }
    if total == 0.0 {
        0.0
    } else {
        shell / total
    }
}

/// One line of `diagnostics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub time: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub second_moment: f64,
    pub entropy: f64,
    pub weighted_norm_k0_p32: f64,
    pub grad34_seminorm: f64,
    pub boundary_mass_fraction: f64,
    pub min_value: f64,
}

impl DiagnosticsRow {
    pub const HEADER: &'static str = "t,mass,mom1,mom2,mom3,e2,entropy,wk0,grad34,bmf,minval";

    /// Moments use `f` as is. Entropy and the `grad f^(3/4)` seminorm use
    /// the positive part, so undershoots show up only in `min_value`.
    pub fn compute(plan: &SpectralPlan, f: &Field, time: f64, k0: WeightOrder) -> Result<Self, OpsError> {
        let m = moments(f);
        let pos = f.map(|x| x.max(0.0));
        Ok(DiagnosticsRow {
            time,
            mass: m.mass,
            momentum: m.momentum,
            second_moment: m.second_moment,
            entropy: entropy(&pos)?,
            weighted_norm_k0_p32: weighted_lp(f, k0, 1.5)?,
            grad34_seminorm: grad34(plan, &pos, k0)?,
            boundary_mass_fraction: boundary_mass_fraction(f),
            min_value: f.min(),
        })
    }

    pub fn values(&self) -> [f64; 11] {
        [
            self.time,
            self.mass,
            self.momentum[0],
            self.momentum[1],
            self.momentum[2],
            self.second_moment,
            self.entropy,
            self.weighted_norm_k0_p32,
            self.grad34_seminorm,
            self.boundary_mass_fraction,
            self.min_value,
        ]
    }

    /// Comma-separated values, 17 significant digits each.
    pub fn to_csv(&self) -> String {
        self.values()
            .iter()
            .map(|v| format!("{v:.16e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}
