//! Nonlocal coefficients, Bessel potentials, weights and mollification.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::fft::Fft3;
use crate::grid::{Field, GridSpec, KernelId, SpectralPlan, SymMatField, VecField, SYM_PAIRS};
use crate::OpsError;

/// Exponent `k` of the weight `<v>^k = (1 + |v|^2)^(k/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightOrder(pub(crate) f64);

impl WeightOrder {
    pub const MAX: f64 = 64.0;

    pub fn new(k: f64) -> Result<Self, OpsError> {
        if k.is_finite() && k.abs() <= Self::MAX {
            Ok(WeightOrder(k))
        } else {
            Err(OpsError::WeightOrder(k))
        }
    }

    pub fn exponent(&self) -> f64 {
        self.0
    }
}

/// `<v> = sqrt(1 + |v|^2)`.
pub fn bracket(v: [f64; 3]) -> f64 {
    (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// The field `<v>^k`.
pub fn weight_field(grid: GridSpec, k: WeightOrder) -> Field {
    let e = k.exponent() / 2.0;
    Field::from_fn(grid, |v| (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).powf(e))
}

/// Pointwise `<v>^k h`.
pub fn weight(h: &Field, k: WeightOrder) -> Field {
    if k.exponent() == 0.0 {
        return h.clone();
    }
    let e = k.exponent() / 2.0;
    h.map_with_point(|v, x| x * (1.0 + v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).powf(e))
}

/// Newtonian potential `a[f] = f * 1/(4 pi |z|)`.
pub fn a_of(plan: &SpectralPlan, f: &Field) -> Result<Field, OpsError> {
    Ok(plan.free_conv(f, KernelId::Newton)?)
}

/// Diffusion matrix `A[f] = f * P(z)/(8 pi |z|)`.
#[allow(non_snake_case)]
pub fn A_of(plan: &SpectralPlan, f: &Field) -> Result<SymMatField, OpsError> {
    let s = plan.padded(f)?;
    Ok(SymMatField {
        comps: std::array::from_fn(|c| plan.convolve(&s, KernelId::Landau(c), None)),
    })
}

/// `grad a[f]`, differentiating inside the padded transform.
pub fn grad_a(plan: &SpectralPlan, f: &Field) -> Result<VecField, OpsError> {
    let s = plan.padded(f)?;
    Ok(VecField {
        comps: std::array::from_fn(|i| plan.convolve(&s, KernelId::Newton, Some(i))),
    })
}

/// `Delta a[f]`, with the Laplacian taken inside the padded transform.
pub fn laplacian_a(plan: &SpectralPlan, f: &Field) -> Result<Field, OpsError> {
    let s = plan.padded(f)?;
    Ok(plan.convolve_laplacian(&s, KernelId::Newton))
}

/// `[d_1 A[f], d_2 A[f], d_3 A[f]]`.
#[allow(non_snake_case)]
pub fn grad_A(plan: &SpectralPlan, f: &Field) -> Result<[SymMatField; 3], OpsError> {
    let s = plan.padded(f)?;
    Ok(std::array::from_fn(|d| SymMatField {
        comps: std::array::from_fn(|c| plan.convolve(&s, KernelId::Landau(c), Some(d))),
    }))
}

/// Row divergence `(div A[f])_i = sum_j d_j A_ij[f]`.
#[allow(non_snake_case)]
pub fn div_A(plan: &SpectralPlan, f: &Field) -> Result<VecField, OpsError> {
    let s = plan.padded(f)?;
    Ok(VecField {
        comps: std::array::from_fn(|i| {
            let terms: Vec<_> = (0..3)
                .map(|j| (KernelId::Landau(crate::grid::sym_index(i, j)), Some(j)))
                .collect();
            plan.convolve_sum(&s, &terms)
        }),
    })
}

/// `A[f]` and `grad a[f]` from one padded transform.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub a_mat: SymMatField,
    pub grad_a: VecField,
}

pub fn coefficients(plan: &SpectralPlan, f: &Field) -> Result<Coefficients, OpsError> {
    let s = plan.padded(f)?;
    Ok(Coefficients {
        a_mat: SymMatField {
            comps: std::array::from_fn(|c| plan.convolve(&s, KernelId::Landau(c), None)),
        },
        grad_a: VecField {
            comps: std::array::from_fn(|i| plan.convolve(&s, KernelId::Newton, Some(i))),
        },
    })
}

/// Bessel potential `(I - eps Delta)^(-beta)` as a periodic multiplier.
pub fn bessel(plan: &SpectralPlan, h: &Field, beta: f64, eps: f64) -> Result<Field, OpsError> {
    if !(beta >= 0.0) {
        return Err(OpsError::NegativeOrder(beta));
    }
    if !(eps > 0.0) {
        return Err(OpsError::NonPositiveScale(eps));
    }
    let xi2 = plan.xi_sq_table();
    if beta == 1.0 && eps == 1.0 {
        let table = plan.bracket_inv_table();
        return Ok(plan.apply_multiplier(h, |idx| table[idx])?);
    }
    Ok(plan.apply_multiplier(h, |idx| (1.0 + eps * xi2[idx]).powf(-beta))?)
}

/// `M h = (I - Delta)^(-1) h`.
pub fn bessel_m(plan: &SpectralPlan, h: &Field) -> Result<Field, OpsError> {
    bessel(plan, h, 1.0, 1.0)
}

/// `(I - Delta) h`.
pub fn inv_bessel(plan: &SpectralPlan, h: &Field) -> Result<Field, OpsError> {
    let xi2 = plan.xi_sq_table();
    Ok(plan.apply_multiplier(h, |idx| 1.0 + xi2[idx])?)
}

/// Mollifier `eta_delta(z) = delta^-3 eta0(z / delta)` with the bump
/// `eta0(z) = c exp(-1/(1-|z|^2))`, normalized on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MollifierSpec {
    delta: f64,
}

impl MollifierSpec {
    pub fn new(delta: f64) -> Result<Self, OpsError> {
        if delta.is_finite() && delta > 0.0 {
            Ok(MollifierSpec { delta })
        } else {
            Err(OpsError::MollifierRadius(delta))
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Checks the radius against a grid: at most `L/4`, at least four cells
    /// across the support.
    pub fn validate(&self, grid: &GridSpec) -> Result<(), OpsError> {
        let limit = grid.half_width() / 4.0;
        if self.delta > limit {
            return Err(OpsError::MollifierTooWide {
                delta: self.delta,
                limit,
            });
        }
        if 2.0 * self.delta / grid.spacing() < 4.0 {
            return Err(OpsError::MollifierTooNarrow {
                delta: self.delta,
                spacing: grid.spacing(),
            });
        }
        Ok(())
    }

    /// Stencil half-width in cells and the normalized samples on
    /// `(2r+1)^3` offsets.
    pub fn stencil(&self, grid: &GridSpec) -> (usize, Vec<f64>) {
        let h = grid.spacing();
        let r = (self.delta / h).ceil() as usize;
        let w = 2 * r + 1;
        let mut vals = vec![0.0; w * w * w];
        for a in 0..w {
            for b in 0..w {
                for c in 0..w {
                    let z = [a, b, c].map(|q| (q as f64 - r as f64) * h / self.delta);
                    let s = z[0] * z[0] + z[1] * z[1] + z[2] * z[2];
                    if s < 1.0 {
                        vals[(a * w + b) * w + c] = (-1.0 / (1.0 - s)).exp();
                    }
                }
            }
        }
        let total: f64 = vals.iter().sum::<f64>() * grid.cell_volume();
        vals.iter_mut().for_each(|v| *v /= total);
        (r, vals)
    }
}

/// Smallest `2^a 3^b 5^c` not below `m`.
fn smooth_size(m: usize) -> usize {
    (m..)
        .find(|&s| {
            let mut r = s;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            r == 1
        })
        .expect("unbounded search")
}

/// Free-space convolution `h * eta_delta`.
pub fn mollify(h: &Field, m: &MollifierSpec) -> Result<Field, OpsError> {
    Ok(mollify_many(&[h], m)?.pop().expect("one field in, one out"))
}

/// Mollifies several fields on the same grid, transforming the stencil once.
///
/// Each axis is padded by at least the stencil half-width `r` on both
/// sides, which is enough for the circular product to equal the linear
/// convolution on the box.
pub fn mollify_many(fields: &[&Field], m: &MollifierSpec) -> Result<Vec<Field>, OpsError> {
    let Some(first) = fields.first() else {
        return Ok(Vec::new());
    };
    let grid = *first.grid();
    for h in fields {
        grid.same_as(h.grid())?;
    }
    m.validate(&grid)?;
    let (r, stencil) = m.stencil(&grid);
    let n = grid.n();
    let size = smooth_size(n + 2 * r);
    let w = 2 * r + 1;
    let fft = Fft3::new(size);
    let mut kern = vec![Complex64::default(); size * size * size];
    let wrap = |q: usize| (q + size - r) % size;
    for a in 0..w {
        for b in 0..w {
            for c in 0..w {
                kern[(wrap(a) * size + wrap(b)) * size + wrap(c)] =
                    Complex64::new(stencil[(a * w + b) * w + c] * grid.cell_volume(), 0.0);
            }
        }
    }
    fft.forward(&mut kern);
    let mut out = Vec::with_capacity(fields.len());
    let mut data = vec![Complex64::default(); size * size * size];
    for h in fields {
        data.iter_mut().for_each(|d| *d = Complex64::default());
        for i in 0..n {
            for j in 0..n {
                let src = grid.index(i, j, 0);
                let dst = (i * size + j) * size;
                for k in 0..n {
                    data[dst + k] = Complex64::new(h.values()[src + k], 0.0);
                }
            }
        }
        fft.forward(&mut data);
        data.par_iter_mut().zip(kern.par_iter()).for_each(|(d, k)| *d *= k);
        fft.inverse(&mut data);
        let mut res = Field::zeros(grid);
        for i in 0..n {
            for j in 0..n {
                let dst = grid.index(i, j, 0);
                let src = (i * size + j) * size;
                for k in 0..n {
                    res.values_mut()[dst + k] = data[src + k].re;
                }
            }
        }
        out.push(res);
    }
    Ok(out)
}

/// Constituents of `A[w0] = A[M w0] - A[Delta M w0]` and
/// `grad a[w0] = A1 + grad M w0` with `A1 = grad a[M w0]`.
#[derive(Debug, Clone)]
pub struct ADecomposition {
    pub a_mw0: SymMatField,
    pub a_delta_mw0: SymMatField,
    pub a1: VecField,
    pub grad_mw0: VecField,
}

#[allow(non_snake_case)]
pub fn decompose_A(plan: &SpectralPlan, w0: &Field) -> Result<ADecomposition, OpsError> {
    let mw0 = bessel_m(plan, w0)?;
    let delta_mw0 = plan.laplacian(&mw0)?;
    Ok(ADecomposition {
        a_mw0: A_of(plan, &mw0)?,
        a_delta_mw0: A_of(plan, &delta_mw0)?,
        a1: grad_a(plan, &mw0)?,
        grad_mw0: plan.gradient(&mw0)?,
    })
}

/// Smallest eigenvalue of a symmetric 3x3 matrix (trigonometric formula).
pub fn min_eigenvalue_sym3(m: &[[f64; 3]; 3]) -> f64 {
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        return m[0][0].min(m[1][1]).min(m[2][2]);
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b: [[f64; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| (m[i][j] - if i == j { q } else { 0.0 }) / p));
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos()
}

/// Largest eigenvalue of a symmetric 3x3 matrix.
pub fn max_eigenvalue_sym3(m: &[[f64; 3]; 3]) -> f64 {
    let neg: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| -m[i][j]));
    -min_eigenvalue_sym3(&neg)
}

/// Outcome of a coercivity scan, with the hypotheses it was checked under.
#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityReport {
    /// `min_v <v>^3 lambda_min(A[f](v))`.
    pub c0_hat: f64,
    pub argmin: usize,
    pub argmin_point: [f64; 3],
    pub mass: f64,
    pub second_moment: f64,
    pub entropy: f64,
}

/// Relative undershoot tolerated as round-off in nonnegative inputs.
pub const NEGATIVE_SLACK: f64 = 1e-12;

pub fn coercivity_scan(plan: &SpectralPlan, f: &Field) -> Result<CoercivityReport, OpsError> {
    let fmax = f.max_abs();
    let fmin = f.min();
    if fmin < -NEGATIVE_SLACK * fmax.max(1.0) {
        return Err(OpsError::Negative(fmin));
    }
    let m = crate::functionals::moments(f);
    if !(m.mass > 0.0) {
        return Err(OpsError::Mass(m.mass));
    }
    let entropy = crate::functionals::entropy(f)?;
    let (c0_hat, argmin) = weighted_min_eigenvalue(&A_of(plan, f)?);
    if c0_hat <= 0.0 {
        return Err(OpsError::Indefinite {
            value: c0_hat,
            index: argmin,
        });
    }
    Ok(CoercivityReport {
        c0_hat,
        argmin,
        argmin_point: f.grid().point(argmin),
        mass: m.mass,
        second_moment: m.second_moment,
        entropy,
    })
}

/// `min_v <v>^3 lambda_min(a(v))` and its first minimizing index.
pub fn weighted_min_eigenvalue(a: &SymMatField) -> (f64, usize) {
    let g = *a.grid();
    (0..g.len())
        .into_par_iter()
        .map(|idx| {
            let lam = min_eigenvalue_sym3(&a.matrix_at(idx));
            (bracket(g.point(idx)).powi(3) * lam, idx)
        })
        .reduce(
            || (f64::INFINITY, usize::MAX),
            |x, y| if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x },
        )
}

/// Largest eigenvalue of `A[f]` over the grid.
pub fn lambda_max(a: &SymMatField) -> f64 {
    (0..a.grid().len())
        .into_par_iter()
        .map(|idx| max_eigenvalue_sym3(&a.matrix_at(idx)))
        .reduce(|| 0.0, f64::max)
}

/// Relative L2 residual of `A[f] v - sum_j A[v_j f] e_j`.
pub fn a_times_v_residual(plan: &SpectralPlan, f: &Field) -> Result<f64, OpsError> {
    let g = *f.grid();
    let coord = |d: usize| Field::from_fn(g, move |v| v[d]);
    let a = A_of(plan, f)?;
    let vs: [Field; 3] = std::array::from_fn(coord);
    let lhs = a.apply(&VecField { comps: vs.clone() });
    let pads: Vec<_> = (0..3)
        .map(|j| plan.padded(&vs[j].mul(f)))
        .collect::<Result<_, _>>()?;
    let rhs = VecField {
        comps: std::array::from_fn(|i| {
            let mut acc = Field::zeros(g);
            for (j, p) in pads.iter().enumerate() {
                acc = acc.add(&plan.convolve(p, KernelId::Landau(crate::grid::sym_index(i, j)), None));
            }
            acc
        }),
    };
    let diff = lhs.sub(&rhs).norm_l2();
    let scale = lhs.norm_l2().max(rhs.norm_l2());
    Ok(if scale == 0.0 { 0.0 } else { diff / scale })
}

/// Contraction of a matrix field's six components with a vector outer product.
pub fn quad_form(a: &SymMatField, x: &VecField, y: &VecField) -> Field {
    let mut out = Field::zeros(*a.grid());
    for (c, &(i, j)) in SYM_PAIRS.iter().enumerate() {
        let mut t = x.comps[i].mul(&y.comps[j]);
        if i != j {
            t = t.add(&x.comps[j].mul(&y.comps[i]));
        }
        out = out.add(&a.comps[c].mul(&t));
    }
    out
}
