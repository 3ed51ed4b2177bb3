//! Time integration of `d_t f = div(A[f] grad f - f grad a[f])`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::functionals::{m_diff_norm, DiagnosticsRow};
use crate::grid::{Field, GridSpec, SpectralPlan, VecField};
use crate::ops::{bessel_m, coefficients, lambda_max, weight, Coefficients, WeightOrder};
use crate::SolverError;

/// Floor on `lambda_max` when forming the step size.
pub const LAMBDA_FLOOR: f64 = 1e-12;
/// Undershoot, relative to `max f`, treated as a diverged run.
pub const UNDERSHOOT_ABORT: f64 = 1e-3;
/// Steps shorter than this abort the run.
pub const DT_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Heun's method on the divergence form.
    ExplicitRk2,
    /// Backward Euler on `lambda_max * Laplacian`, forward Euler on the rest.
    ImexDiffusion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScheme {
    pub kind: SchemeKind,
    pub cfl_safety: f64,
    /// Optional cap on the step, used by step-refinement studies.
    pub max_dt: Option<f64>,
    /// Undershoot relative to `max f` accepted by positivity checks.
    /// Runs only abort past [`UNDERSHOOT_ABORT`].
    pub undershoot_tol: f64,
}

impl Default for StepScheme {
    fn default() -> Self {
        StepScheme {
            kind: SchemeKind::ExplicitRk2,
            cfl_safety: 0.25,
            max_dt: None,
            undershoot_tol: 1e-10,
        }
    }
}

impl StepScheme {
    pub fn new(kind: SchemeKind, cfl_safety: f64) -> Result<Self, SolverError> {
        if !(cfl_safety > 0.0 && cfl_safety <= 1.0) {
            return Err(SolverError::BadCfl(cfl_safety));
        }
        Ok(StepScheme {
            kind,
            cfl_safety,
            ..Default::default()
        })
    }

    pub fn with_max_dt(mut self, max_dt: f64) -> Self {
        self.max_dt = Some(max_dt);
        self
    }

    /// Stable step for a diffusion tensor bounded by `lambda_max`.
    ///
    /// Heun is stable for real negative eigenvalues down to `-2/dt`, and the
    /// spectral Laplacian reaches `3 (pi/dv)^2`, so the explicit step is
    /// `cfl * 2 / (lambda_max * 3 (pi/dv)^2)`. The IMEX step is
    /// `cfl * dv^2 / lambda_max`.
    pub fn stable_dt(&self, grid: &GridSpec, lambda_max: f64) -> f64 {
        let lam = lambda_max.max(LAMBDA_FLOOR);
        let dt = match self.kind {
            SchemeKind::ExplicitRk2 => self.cfl_safety * 2.0 / (lam * grid.max_xi_sq()),
            SchemeKind::ImexDiffusion => self.cfl_safety * grid.spacing().powi(2) / lam,
        };
        match self.max_dt {
            Some(m) => dt.min(m),
            None => dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub time: f64,
    pub f: Field,
    pub step_count: usize,
    pub last_dt: f64,
    /// `lambda_max(A[f])` at the start of the last step.
    pub cfl_bound: f64,
}

impl SolverState {
    /// `min f / max |f|`.
    pub fn undershoot_ratio(&self) -> f64 {
        self.f.min() / self.f.max_abs()
    }

    /// Whether the state satisfies the positivity tolerance of `scheme`.
    pub fn positive_within(&self, scheme: &StepScheme) -> bool {
        self.undershoot_ratio() >= -scheme.undershoot_tol
    }

    pub fn new(f: Field) -> Self {
        SolverState {
            time: 0.0,
            f,
            step_count: 0,
            last_dt: 0.0,
            cfl_bound: 0.0,
        }
    }
}

/// `div(A grad f - f grad a)` from precomputed coefficients.
pub fn rhs_from_coefficients(
    plan: &SpectralPlan,
    f: &Field,
    c: &Coefficients,
) -> Result<Field, SolverError> {
    let grad = plan.gradient(f)?;
    let flux = c.a_mat.apply(&grad).sub(&c.grad_a.scale_by(f));
    Ok(plan.divergence(&flux)?)
}

/// Divergence form of the collision operator.
pub fn rhs_divergence(plan: &SpectralPlan, f: &Field) -> Result<Field, SolverError> {
    let c = coefficients(plan, f)?;
    rhs_from_coefficients(plan, f, &c)
}

/// Non-divergence form `A[f] : hess f + f^2`.
pub fn rhs_nondivergence(plan: &SpectralPlan, f: &Field) -> Result<Field, SolverError> {
    let a = crate::ops::A_of(plan, f)?;
    let hess = plan.hessian(f)?;
    Ok(a.contract(&hess).add(&f.mul(f)))
}

fn advance(
    plan: &SpectralPlan,
    f: &Field,
    c0: &Coefficients,
    lam: f64,
    dt: f64,
    kind: SchemeKind,
) -> Result<Field, SolverError> {
    let k1 = rhs_from_coefficients(plan, f, c0)?;
    match kind {
        SchemeKind::ExplicitRk2 => {
            let f1 = f.axpy(dt, &k1);
            let k2 = rhs_divergence(plan, &f1)?;
            Ok(f.axpy(0.5 * dt, &k1.add(&k2)))
        }
        SchemeKind::ImexDiffusion => {
            let lap = plan.laplacian(f)?;
            let explicit = f.axpy(dt, &k1.axpy(-lam, &lap));
            let xi2 = plan.xi_sq_table();
            Ok(plan.apply_multiplier(&explicit, |idx| 1.0 / (1.0 + dt * lam * xi2[idx]))?)
        }
    }
}

fn check_state(state: &SolverState) -> Result<(), SolverError> {
    if !state.f.is_finite() {
        return Err(SolverError::NonFinite {
            step: state.step_count,
            time: state.time,
        });
    }
    let min = state.f.min();
    if min < -UNDERSHOOT_ABORT * state.f.max_abs() {
        return Err(SolverError::Undershoot {
            min,
            time: state.time,
        });
    }
    Ok(())
}

fn next_dt(
    grid: &GridSpec,
    scheme: &StepScheme,
    lam: f64,
    time: f64,
    t_end: Option<f64>,
) -> Result<f64, SolverError> {
    let mut dt = scheme.stable_dt(grid, lam);
    if let Some(t_end) = t_end {
        // Land exactly on the horizon; absorb a sliver shorter than 1e-9 dt.
        let left = t_end - time;
        if left <= dt * (1.0 + 1e-9) {
            dt = left;
        }
    }
    if !(dt >= DT_MIN) || !dt.is_finite() {
        return Err(SolverError::StepUnderflow { dt, lambda_max: lam });
    }
    Ok(dt)
}

/// One step of `scheme`, optionally clipped so as not to pass `t_end`.
pub fn step(
    plan: &SpectralPlan,
    state: &SolverState,
    scheme: &StepScheme,
    t_end: Option<f64>,
) -> Result<SolverState, SolverError> {
    let c = coefficients(plan, &state.f)?;
    let lam = lambda_max(&c.a_mat);
    let dt = next_dt(plan.grid(), scheme, lam, state.time, t_end)?;
    let f = advance(plan, &state.f, &c, lam, dt, scheme.kind)?;
    let next = SolverState {
        time: if t_end.is_some_and(|t| state.time + dt >= t - 1e-15) {
            t_end.unwrap()
        } else {
            state.time + dt
        },
        f,
        step_count: state.step_count + 1,
        last_dt: dt,
        cfl_bound: lam,
    };
    check_state(&next)?;
    Ok(next)
}

/// Advances two states with a common step, the smaller of their stable steps.
pub fn step_pair(
    plan: &SpectralPlan,
    f: &SolverState,
    g: &SolverState,
    scheme: &StepScheme,
    t_end: Option<f64>,
) -> Result<(SolverState, SolverState), SolverError> {
    let cf = coefficients(plan, &f.f)?;
    let cg = coefficients(plan, &g.f)?;
    let lf = lambda_max(&cf.a_mat);
    let lg = lambda_max(&cg.a_mat);
    let lam = lf.max(lg);
    let dt = next_dt(plan.grid(), scheme, lam, f.time, t_end)?;
    let time = match t_end {
        Some(t) if f.time + dt >= t - 1e-15 => t,
        _ => f.time + dt,
    };
    let mk = |s: &SolverState, c: &Coefficients, l: f64| -> Result<SolverState, SolverError> {
        let next = SolverState {
            time,
            f: advance(plan, &s.f, c, l, dt, scheme.kind)?,
            step_count: s.step_count + 1,
            last_dt: dt,
            cfl_bound: l,
        };
        check_state(&next)?;
        Ok(next)
    };
    Ok((mk(f, &cf, lam)?, mk(g, &cg, lam)?))
}

/// Runs a single state to time `t_end`, calling `observe` after every step.
pub fn evolve(
    plan: &SpectralPlan,
    f0: Field,
    t_end: f64,
    scheme: &StepScheme,
    mut observe: impl FnMut(&SolverState) -> Result<(), SolverError>,
) -> Result<SolverState, SolverError> {
    if !(t_end > 0.0) {
        return Err(SolverError::BadHorizon(t_end));
    }
    let mut state = SolverState::new(f0);
    check_state(&state)?;
    observe(&state)?;
    while state.time < t_end {
        state = step(plan, &state, scheme, Some(t_end))?;
        observe(&state)?;
    }
    Ok(state)
}

/// One sampled time of a pair run.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub f_row: DiagnosticsRow,
    pub g_row: DiagnosticsRow,
    /// `|| M w ||_2` with `w = <v>^2 (f - g)`.
    pub m_diff: f64,
    /// `|| <v>^(-3/2) grad M w ||_2`.
    pub grad_mw_weighted: f64,
}

#[derive(Debug, Clone)]
pub struct PairRun {
    pub samples: Vec<PairSample>,
    pub f: SolverState,
    pub g: SolverState,
}

/// `|| <v>^(-3/2) grad M w ||_2` for `w = <v>^2 (f - g)`.
pub fn weighted_grad_mw(plan: &SpectralPlan, f: &Field, g: &Field) -> Result<f64, SolverError> {
    let w = weight(&f.sub(g), WeightOrder(2.0));
    let mw = bessel_m(plan, &w)?;
    let grad: VecField = plan.gradient(&mw)?;
    Ok(grad.map_comps(|c| weight(c, WeightOrder(-1.5))).norm_l2())
}

fn pair_sample(
    plan: &SpectralPlan,
    f: &SolverState,
    g: &SolverState,
    k0: WeightOrder,
) -> Result<PairSample, SolverError> {
    Ok(PairSample {
        f_row: DiagnosticsRow::compute(plan, &f.f, f.time, k0)?,
        g_row: DiagnosticsRow::compute(plan, &g.f, g.time, k0)?,
        m_diff: m_diff_norm(plan, &f.f, &g.f)?,
        grad_mw_weighted: weighted_grad_mw(plan, &f.f, &g.f)?,
    })
}

/// Advances `(f0, g0)` to `t_end` with synchronized steps, sampling every
/// `sample_every` steps and at the final time.
pub fn evolve_pair(
    plan: &SpectralPlan,
    f0: Field,
    g0: Field,
    t_end: f64,
    scheme: &StepScheme,
    sample_every: usize,
    k0: WeightOrder,
) -> Result<PairRun, SolverError> {
    f0.grid().same_as(g0.grid())?;
    if !(t_end > 0.0) {
        return Err(SolverError::BadHorizon(t_end));
    }
    let every = sample_every.max(1);
    let mut f = SolverState::new(f0);
    let mut g = SolverState::new(g0);
    check_state(&f)?;
    check_state(&g)?;
    let mut samples = vec![pair_sample(plan, &f, &g, k0)?];
    while f.time < t_end {
        let (nf, ng) = step_pair(plan, &f, &g, scheme, Some(t_end))?;
        f = nf;
        g = ng;
        if f.step_count % every == 0 || f.time >= t_end {
            samples.push(pair_sample(plan, &f, &g, k0)?);
        }
    }
    Ok(PairRun { samples, f, g })
}

/// Initial-data library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// Unit-mass Maxwellian with temperature `temperature`.
    Maxwellian {
        #[serde(default = "one")]
        temperature: f64,
    },
    /// Unit-mass Gaussian with per-axis temperatures.
    Anisotropic {
        #[serde(default = "default_temps")]
        temperatures: [f64; 3],
    },
    /// Two Gaussians at `+-shift` along `v1`, renormalized to unit mass.
    TwoBump {
        #[serde(default = "default_shift")]
        shift: f64,
        #[serde(default = "default_bump_temp")]
        temperature: f64,
    },
    /// Standard Maxwellian times `1 + amplitude * r(v)`, with `r` a seeded
    /// band-limited random field of unit sup-scale, renormalized to unit mass.
    BandLimited {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_modes")]
        max_mode: i32,
    },
}

fn one() -> f64 {
    1.0
}
fn default_temps() -> [f64; 3] {
    [1.6, 1.4, 1.2]
}
fn default_shift() -> f64 {
    1.5
}
fn default_bump_temp() -> f64 {
    1.0
}
fn default_amplitude() -> f64 {
    0.3
}
fn default_modes() -> i32 {
    4
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Maxwellian { temperature: 1.0 }
    }
}

/// Unit-mass Gaussian `(2 pi T)^(-3/2) exp(-|v - c|^2 / (2T))` with per-axis `T`.
pub fn gaussian(grid: GridSpec, center: [f64; 3], temps: [f64; 3]) -> Field {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).powf(1.5) * (temps[0] * temps[1] * temps[2]).sqrt());
    Field::from_fn(grid, |v| {
        let e: f64 = (0..3).map(|d| (v[d] - center[d]).powi(2) / (2.0 * temps[d])).sum();
        norm * (-e).exp()
    })
}

/// Standard unit-mass Maxwellian.
pub fn maxwellian(grid: GridSpec) -> Field {
    gaussian(grid, [0.0; 3], [1.0; 3])
}

fn renormalize(f: Field) -> Field {
    let m = f.integral();
    f.scale(1.0 / m)
}

impl InitialData {
    pub fn build(&self, grid: GridSpec, seed: u64) -> Field {
        match *self {
            InitialData::Maxwellian { temperature } => gaussian(grid, [0.0; 3], [temperature; 3]),
            InitialData::Anisotropic { temperatures } => gaussian(grid, [0.0; 3], temperatures),
            InitialData::TwoBump { shift, temperature } => {
                let a = gaussian(grid, [shift, 0.0, 0.0], [temperature; 3]);
                let b = gaussian(grid, [-shift, 0.0, 0.0], [temperature; 3]);
                renormalize(a.add(&b))
            }
            InitialData::BandLimited { amplitude, max_mode } => {
                let r = band_limited(grid, seed, max_mode);
                let scale = r.max_abs().max(f64::MIN_POSITIVE);
                let m = maxwellian(grid);
                renormalize(m.zip_map(&r, |m, r| m * (1.0 + amplitude * r / scale)))
            }
        }
    }
}

/// Seeded real trigonometric polynomial `sum_m c_m exp(i pi m.v / L)` over
/// integer modes with `|m| <= max_mode`, coefficients uniform in the unit
/// disk and Hermitian-symmetrized so the field is real.
pub fn band_limited(grid: GridSpec, seed: u64, max_mode: i32) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.half_width();
    let n = grid.n();
    let k = max_mode.max(0);
    // tables[d][m + k][i] = exp(i pi m x_i / L)
    let table: Vec<Vec<Complex64>> = (-k..=k)
        .map(|m| {
            (0..n)
                .map(|i| Complex64::from_polar(1.0, std::f64::consts::PI * m as f64 * grid.coord(i) / l))
                .collect()
        })
        .collect();
    let mut coeffs = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            for c in -k..=k {
                if a * a + b * b + c * c > k * k {
                    continue;
                }
                // Keep one of each (m, -m) pair; the real part supplies the other.
                if (a, b, c) < (0, 0, 0) {
                    continue;
                }
                let re: f64 = rng.random_range(-1.0..1.0);
                let im: f64 = rng.random_range(-1.0..1.0);
                coeffs.push(([a, b, c], Complex64::new(re, im)));
            }
        }
    }
    let mut values = vec![0.0; grid.len()];
    for (m, c) in &coeffs {
        let [ta, tb, tc] = m.map(|q| &table[(q + k) as usize]);
        for i in 0..n {
            let ci = c * ta[i];
            for j in 0..n {
                let cij = ci * tb[j];
                let base = grid.index(i, j, 0);
                for (kk, t) in tc.iter().enumerate() {
                    values[base + kk] += (cij * t).re;
                }
            }
        }
    }
    Field::from_values(grid, values).expect("finite trigonometric sum")
}

/// Zero-mass perturbation `M r` of unit L2 norm, `r` band-limited.
///
/// The mass is removed by subtracting a multiple of the Maxwellian `M`, so
/// both the perturbation and its correction decay at the box boundary.
pub fn perturbation(grid: GridSpec, seed: u64, max_mode: i32) -> Field {
    let m = maxwellian(grid);
    let r = band_limited(grid, seed, max_mode);
    let p = m.mul(&r);
    let c = p.integral() / m.integral();
    let p = p.axpy(-c, &m);
    let norm = p.norm_l2();
    p.scale(1.0 / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_sizes() {
        let g = GridSpec::new(32, 8.0).unwrap();
        let s = StepScheme::default();
        let dt = s.stable_dt(&g, 0.02);
        assert!((dt - 0.25 * 2.0 / (0.02 * 3.0 * (std::f64::consts::PI / 0.5).powi(2))).abs() < 1e-15);
        assert_eq!(s.with_max_dt(0.01).stable_dt(&g, 0.02), 0.01);
        let imex = StepScheme::new(SchemeKind::ImexDiffusion, 0.5).unwrap();
        assert!((imex.stable_dt(&g, 0.02) - 0.5 * 0.25 / 0.02).abs() < 1e-15);
        assert!(StepScheme::new(SchemeKind::ExplicitRk2, 1.5).is_err());
    }

    #[test]
    fn perturbation_has_zero_mass_and_unit_norm() {
        let g = GridSpec::new(16, 8.0).unwrap();
        let p = perturbation(g, 7, 4);
        assert!(p.integral().abs() < 1e-14);
        assert!((p.norm_l2() - 1.0).abs() < 1e-12);
        assert_eq!(p, perturbation(g, 7, 4));
        assert_ne!(p, perturbation(g, 8, 4));
    }
}
