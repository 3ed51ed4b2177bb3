//! Velocity grid, field containers and the spectral plan.
//!
//! The domain is the cube `[-L, L)^3` sampled at `v = -L + i*dv`, `dv = 2L/n`,
//! so the origin is the grid point `(n/2, n/2, n/2)`. Field values are stored
//! row-major: flat index `(i*n + j)*n + k` with `i` along `v1` (slowest) and
//! `k` along `v3` (fastest).
//!
//! Periodic operations (derivatives, Fourier multipliers) act on the `n^3`
//! grid. Free-space convolutions zero-pad to `(2n)^3`. The convolution kernels
//! are built from the Fourier transform of the biharmonic potential
//! `|z|/(8 pi)` truncated at radius `R = 4L`; sampling that transform on a
//! `(4n)^3` grid and restricting the resulting sequence to the offsets the
//! padded grid can see gives spectrally accurate free-space convolutions for
//! smooth fields that decay inside the box. The Newton kernel is the trace of
//! the Landau kernel, so `Tr A[f] = a[f]` holds to round-off.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::fft::{signed_freq, Fft3};
use crate::GridError;

/// Component order of [`SymMatField`]: 11, 22, 33, 12, 13, 23.
pub const SYM_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// Position of the `(i, j)` entry in [`SYM_PAIRS`].
pub fn sym_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        (1, 2) => 5,
        _ => panic!("matrix index out of range: ({i}, {j})"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    half_width: f64,
    spacing: f64,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64) -> Result<Self, GridError> {
        if n % 2 != 0 {
            return Err(GridError::OddSize(n));
        }
        if n < 8 {
            return Err(GridError::TooSmall(n));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(GridError::BadHalfWidth(half_width));
        }
        let spacing = 2.0 * half_width / n as f64;
        // Keep L consistent with the stored spacing.
        let half_width = spacing * n as f64 / 2.0;
        Ok(GridSpec {
            n,
            half_width,
            spacing,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    /// Number of grid points, `n^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.unravel(idx);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Angular wavenumber of bin `k` along one axis.
    pub fn wavenumber(&self, k: usize) -> f64 {
        2.0 * PI * signed_freq(k, self.n) as f64 / (self.n as f64 * self.spacing)
    }

    /// Largest resolved `|xi|^2` on the grid (all three axes at Nyquist).
    pub fn max_xi_sq(&self) -> f64 {
        3.0 * (PI / self.spacing).powi(2)
    }

    /// Errors unless both grids have the same `n` and bitwise-equal `L`.
    pub fn same_as(&self, other: &GridSpec) -> Result<(), GridError> {
        if self.n == other.n && self.half_width.to_bits() == other.half_width.to_bits() {
            Ok(())
        } else {
            Err(GridError::Mismatch)
        }
    }
}

/// Real scalar field on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Field {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::Length {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::NonFinite);
        }
        Ok(Field { grid, values })
    }

    /// Samples `f(v)` at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|idx| f(grid.point(idx))).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pointwise `f(v, value)`.
    pub fn map_with_point(&self, f: impl Fn([f64; 3], f64) -> f64) -> Field {
        let grid = self.grid;
        Field {
            grid,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(idx, &x)| f(grid.point(idx), x))
                .collect(),
        }
    }

    /// Pointwise combination; panics when the grids differ.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// Discrete integral `sum h dv^3`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Discrete inner product `sum a b dv^3`.
    pub fn dot(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Discrete `L^p` norm for `p >= 1`.
    pub fn norm_lp(&self, p: f64) -> f64 {
        if p == 2.0 {
            return self.norm_l2();
        }
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest magnitude in the shell `|v|_inf > 0.9 L`.
    pub fn boundary_shell_max(&self) -> f64 {
        let cut = 0.9 * self.grid.half_width;
        self.values
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                self.grid
                    .point(*idx)
                    .iter()
                    .any(|c| c.abs() > cut)
            })
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }
}

/// Relative discrete L2 distance `|a - b| / |b|`; zero when both vanish.
pub fn rel_l2(a: &Field, b: &Field) -> f64 {
    let diff = a.sub(b).norm_l2();
    let scale = b.norm_l2();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VecField {
    pub comps: [Field; 3],
}

impl VecField {
    pub fn zeros(grid: GridSpec) -> Self {
        VecField {
            comps: [Field::zeros(grid), Field::zeros(grid), Field::zeros(grid)],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.comps[0].grid()
    }

    pub fn map_comps(&self, f: impl Fn(&Field) -> Field) -> VecField {
        VecField {
            comps: [f(&self.comps[0]), f(&self.comps[1]), f(&self.comps[2])],
        }
    }

    pub fn add(&self, o: &VecField) -> VecField {
        VecField {
            comps: std::array::from_fn(|i| self.comps[i].add(&o.comps[i])),
        }
    }

    pub fn sub(&self, o: &VecField) -> VecField {
        VecField {
            comps: std::array::from_fn(|i| self.comps[i].sub(&o.comps[i])),
        }
    }

    /// Multiplies every component by the scalar field `s`.
    pub fn scale_by(&self, s: &Field) -> VecField {
        self.map_comps(|c| c.mul(s))
    }

    /// Pointwise dot product.
    pub fn dot(&self, o: &VecField) -> Field {
        let mut out = self.comps[0].mul(&o.comps[0]);
        for i in 1..3 {
            out = out.add(&self.comps[i].mul(&o.comps[i]));
        }
        out
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> Field {
        self.dot(self).map(f64::sqrt)
    }

    pub fn norm_l2(&self) -> f64 {
        self.comps.iter().map(|c| c.dot(c)).sum::<f64>().sqrt()
    }
}

/// Relative L2 distance of vector fields.
pub fn rel_l2_vec(a: &VecField, b: &VecField) -> f64 {
    let diff = a.sub(b).norm_l2();
    let scale = b.norm_l2();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Symmetric 3x3 matrix field, components in [`SYM_PAIRS`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatField {
    pub comps: [Field; 6],
}

impl SymMatField {
    pub fn zeros(grid: GridSpec) -> Self {
        SymMatField {
            comps: std::array::from_fn(|_| Field::zeros(grid)),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        self.comps[0].grid()
    }

    pub fn get(&self, i: usize, j: usize) -> &Field {
        &self.comps[sym_index(i, j)]
    }

    pub fn trace(&self) -> Field {
        self.comps[0].add(&self.comps[1]).add(&self.comps[2])
    }

    /// Matrix at one grid point.
    pub fn matrix_at(&self, idx: usize) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (c, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let v = self.comps[c].values()[idx];
            m[i][j] = v;
            m[j][i] = v;
        }
        m
    }

    /// Pointwise matrix-vector product.
    pub fn apply(&self, x: &VecField) -> VecField {
        VecField {
            comps: std::array::from_fn(|i| {
                let mut out = self.get(i, 0).mul(&x.comps[0]);
                out = out.add(&self.get(i, 1).mul(&x.comps[1]));
                out.add(&self.get(i, 2).mul(&x.comps[2]))
            }),
        }
    }

    /// Pointwise Frobenius contraction `A : B`.
    pub fn contract(&self, other: &SymMatField) -> Field {
        let mut out = Field::zeros(*self.grid());
        for (c, &(i, j)) in SYM_PAIRS.iter().enumerate() {
            let w = if i == j { 1.0 } else { 2.0 };
            out = out.axpy(w, &self.comps[c].mul(&other.comps[c]));
        }
        out
    }

    pub fn sub(&self, o: &SymMatField) -> SymMatField {
        SymMatField {
            comps: std::array::from_fn(|c| self.comps[c].sub(&o.comps[c])),
        }
    }

    pub fn norm_l2(&self) -> f64 {
        SYM_PAIRS
            .iter()
            .enumerate()
            .map(|(c, &(i, j))| {
                let w = if i == j { 1.0 } else { 2.0 };
                w * self.comps[c].dot(&self.comps[c])
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// Relative L2 distance of matrix fields.
pub fn rel_l2_mat(a: &SymMatField, b: &SymMatField) -> f64 {
    let diff = a.sub(b).norm_l2();
    let scale = b.norm_l2();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Free-space convolution kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelId {
    /// `1 / (4 pi |z|)`.
    Newton,
    /// Component `(i, j)` of `P(z) / (8 pi |z|)`, indexed as in [`SYM_PAIRS`].
    Landau(usize),
}

impl std::str::FromStr for KernelId {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "newton" => Ok(KernelId::Newton),
            "landau_11" => Ok(KernelId::Landau(0)),
            "landau_22" => Ok(KernelId::Landau(1)),
            "landau_33" => Ok(KernelId::Landau(2)),
            "landau_12" => Ok(KernelId::Landau(3)),
            "landau_13" => Ok(KernelId::Landau(4)),
            "landau_23" => Ok(KernelId::Landau(5)),
            other => Err(GridError::UnknownKernel(other.to_string())),
        }
    }
}

/// Forward transform of a field zero-padded to `(2n)^3`.
#[derive(Clone)]
pub struct PaddedSpectrum {
    grid: GridSpec,
    data: Vec<Complex64>,
}

impl PaddedSpectrum {
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

/// Precomputed transforms, multiplier tables and kernel spectra for one grid.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    grid: GridSpec,
    fft: Fft3,
    fft_pad: Fft3,
    xi: Vec<f64>,
    xi_odd: Vec<f64>,
    xi_pad_odd: Vec<f64>,
    xi_sq: Vec<f64>,
    bracket_inv: Vec<f64>,
    landau_spectra: [Vec<f64>; 6],
    newton_spectrum: Vec<f64>,
}

impl SpectralPlan {
    pub fn new(grid: GridSpec) -> Result<Self, GridError> {
        let n = grid.n();
        let xi: Vec<f64> = (0..n).map(|k| grid.wavenumber(k)).collect();
        let xi_odd: Vec<f64> = (0..n)
            .map(|k| if k == n / 2 { 0.0 } else { xi[k] })
            .collect();
        let m = 2 * n;
        let xi_pad_odd: Vec<f64> = (0..m)
            .map(|k| {
                if k == n {
                    0.0
                } else {
                    2.0 * PI * signed_freq(k, m) as f64 / (m as f64 * grid.spacing())
                }
            })
            .collect();
        let mut xi_sq = vec![0.0; grid.len()];
        let mut bracket_inv = vec![0.0; grid.len()];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let idx = grid.index(i, j, k);
                    let s = xi[i] * xi[i] + xi[j] * xi[j] + xi[k] * xi[k];
                    xi_sq[idx] = s;
                    bracket_inv[idx] = 1.0 / (1.0 + s);
                }
            }
        }

        let fft_pad = Fft3::new(m);
        let samples = landau_kernel_samples(&grid);
        let landau_spectra: [Vec<f64>; 6] = samples.map(|s| {
            let mut buf: Vec<Complex64> = s
                .into_iter()
                .map(|v| Complex64::new(v * grid.cell_volume(), 0.0))
                .collect();
            fft_pad.forward(&mut buf);
            buf.into_iter().map(|c| c.re).collect()
        });
        let newton_spectrum = (0..m * m * m)
            .map(|idx| landau_spectra[0][idx] + landau_spectra[1][idx] + landau_spectra[2][idx])
            .collect();

        Ok(SpectralPlan {
            grid,
            fft: Fft3::new(n),
            fft_pad,
            xi,
            xi_odd,
            xi_pad_odd,
            xi_sq,
            bracket_inv,
            landau_spectra,
            newton_spectrum,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn padded_size(&self) -> usize {
        self.fft_pad.size()
    }

    /// `|xi|^2` at every periodic mode.
    pub fn xi_sq_table(&self) -> &[f64] {
        &self.xi_sq
    }

    /// `1 / (1 + |xi|^2)` at every periodic mode.
    pub fn bracket_inv_table(&self) -> &[f64] {
        &self.bracket_inv
    }

    /// Real kernel spectrum on the padded grid, including the `dv^3` weight.
    pub fn kernel_spectrum(&self, id: KernelId) -> &[f64] {
        match id {
            KernelId::Newton => &self.newton_spectrum,
            KernelId::Landau(c) => &self.landau_spectra[c],
        }
    }

    fn check(&self, h: &Field) -> Result<(), GridError> {
        self.grid.same_as(h.grid())
    }

    pub(crate) fn forward(&self, h: &Field) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = h.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut buf);
        buf
    }

    pub(crate) fn inverse(&self, mut buf: Vec<Complex64>) -> Field {
        self.fft.inverse(&mut buf);
        Field {
            grid: self.grid,
            values: buf.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Applies a real Fourier multiplier given per mode index.
    pub fn apply_multiplier(
        &self,
        h: &Field,
        symbol: impl Fn(usize) -> f64,
    ) -> Result<Field, GridError> {
        self.check(h)?;
        let mut buf = self.forward(h);
        buf.iter_mut().enumerate().for_each(|(idx, c)| *c *= symbol(idx));
        Ok(self.inverse(buf))
    }

    /// Discrete L2 norm computed on the spectral side (Parseval).
    pub fn spectral_norm_l2(&self, h: &Field) -> Result<f64, GridError> {
        self.check(h)?;
        let buf = self.forward(h);
        let s: f64 = buf.iter().map(|c| c.norm_sqr()).sum();
        Ok((s * self.grid.cell_volume() / self.grid.len() as f64).sqrt())
    }

    fn derivative_spectrum(&self, hat: &[Complex64], axis: usize) -> Vec<Complex64> {
        let g = &self.grid;
        hat.iter()
            .enumerate()
            .map(|(idx, &c)| {
                let q = g.unravel(idx)[axis];
                c * Complex64::new(0.0, self.xi_odd[q])
            })
            .collect()
    }

    pub fn gradient(&self, h: &Field) -> Result<VecField, GridError> {
        self.check(h)?;
        let hat = self.forward(h);
        Ok(VecField {
            comps: std::array::from_fn(|a| self.inverse(self.derivative_spectrum(&hat, a))),
        })
    }

    /// Single partial derivative along `axis`.
    pub fn partial(&self, h: &Field, axis: usize) -> Result<Field, GridError> {
        self.check(h)?;
        let hat = self.forward(h);
        Ok(self.inverse(self.derivative_spectrum(&hat, axis)))
    }

    pub fn laplacian(&self, h: &Field) -> Result<Field, GridError> {
        self.apply_multiplier(h, |idx| -self.xi_sq[idx])
    }

    pub fn divergence(&self, v: &VecField) -> Result<Field, GridError> {
        let mut acc: Option<Vec<Complex64>> = None;
        for a in 0..3 {
            self.check(&v.comps[a])?;
            let d = self.derivative_spectrum(&self.forward(&v.comps[a]), a);
            acc = Some(match acc {
                None => d,
                Some(mut s) => {
                    s.iter_mut().zip(d).for_each(|(x, y)| *x += y);
                    s
                }
            });
        }
        Ok(self.inverse(acc.expect("three components")))
    }

    /// Symbol `-xi_j xi_k`; off-diagonal entries drop the Nyquist row.
    pub fn hessian(&self, h: &Field) -> Result<SymMatField, GridError> {
        self.check(h)?;
        let hat = self.forward(h);
        let g = self.grid;
        Ok(SymMatField {
            comps: std::array::from_fn(|c| {
                let (a, b) = SYM_PAIRS[c];
                let buf = hat
                    .iter()
                    .enumerate()
                    .map(|(idx, &z)| {
                        let q = g.unravel(idx);
                        let s = if a == b {
                            -self.xi[q[a]] * self.xi[q[a]]
                        } else {
                            -self.xi_odd[q[a]] * self.xi_odd[q[b]]
                        };
                        z * s
                    })
                    .collect();
                self.inverse(buf)
            }),
        })
    }

    /// Forward transform of `h` zero-padded to `(2n)^3`.
    pub fn padded(&self, h: &Field) -> Result<PaddedSpectrum, GridError> {
        self.check(h)?;
        let n = self.grid.n();
        let m = 2 * n;
        let mut buf = vec![Complex64::default(); m * m * m];
        for i in 0..n {
            for j in 0..n {
                let src = self.grid.index(i, j, 0);
                let dst = (i * m + j) * m;
                for k in 0..n {
                    buf[dst + k] = Complex64::new(h.values()[src + k], 0.0);
                }
            }
        }
        self.fft_pad.forward(&mut buf);
        Ok(PaddedSpectrum {
            grid: self.grid,
            data: buf,
        })
    }

    /// Convolution of a padded spectrum with a kernel, optionally
    /// differentiated along `deriv`, truncated back to the box.
    ///
    /// The derivative is applied on the padded grid, where it commutes with
    /// the circular convolution, so the result is the kernel convolved with
    /// the derivative of the (decaying) input.
    pub fn convolve(&self, s: &PaddedSpectrum, id: KernelId, deriv: Option<usize>) -> Field {
        self.convolve_sum(s, &[(id, deriv)])
    }

    /// Sum of several kernel convolutions sharing one inverse transform.
    pub fn convolve_sum(&self, s: &PaddedSpectrum, terms: &[(KernelId, Option<usize>)]) -> Field {
        let n = self.grid.n();
        let m = 2 * n;
        let mut buf = vec![Complex64::default(); m * m * m];
        for &(id, deriv) in terms {
            let kernel = self.kernel_spectrum(id);
            buf.par_iter_mut()
                .enumerate()
                .zip(s.data.par_iter().zip(kernel.par_iter()))
                .for_each(|((idx, out), (&z, &k))| {
                    let mut v = z * k;
                    if let Some(axis) = deriv {
                        let q = [idx / (m * m), (idx / m) % m, idx % m][axis];
                        v *= Complex64::new(0.0, self.xi_pad_odd[q]);
                    }
                    *out += v;
                });
        }
        self.fft_pad.inverse(&mut buf);
        let mut out = Field::zeros(self.grid);
        for i in 0..n {
            for j in 0..n {
                let dst = self.grid.index(i, j, 0);
                let src = (i * m + j) * m;
                for k in 0..n {
                    out.values[dst + k] = buf[src + k].re;
                }
            }
        }
        out
    }

    /// Kernel convolution of the padded Laplacian of the input.
    pub fn convolve_laplacian(&self, s: &PaddedSpectrum, id: KernelId) -> Field {
        let n = self.grid.n();
        let m = 2 * n;
        let h = self.grid.spacing();
        let xi: Vec<f64> = (0..m)
            .map(|k| 2.0 * PI * signed_freq(k, m) as f64 / (m as f64 * h))
            .collect();
        let kernel = self.kernel_spectrum(id);
        let mut buf: Vec<Complex64> = s
            .data
            .par_iter()
            .zip(kernel.par_iter())
            .enumerate()
            .map(|(idx, (&z, &k))| {
                let (a, b, c) = (idx / (m * m), (idx / m) % m, idx % m);
                -z * k * (xi[a] * xi[a] + xi[b] * xi[b] + xi[c] * xi[c])
            })
            .collect();
        self.fft_pad.inverse(&mut buf);
        let mut out = Field::zeros(self.grid);
        for i in 0..n {
            for j in 0..n {
                let dst = self.grid.index(i, j, 0);
                let src = (i * m + j) * m;
                for k in 0..n {
                    out.values[dst + k] = buf[src + k].re;
                }
            }
        }
        out
    }

    /// Aperiodic convolution of `h` with the selected kernel.
    pub fn free_conv(&self, h: &Field, id: KernelId) -> Result<Field, GridError> {
        let s = self.padded(h)?;
        Ok(self.convolve(&s, id, None))
    }
}

/// Spectral gradient without building a [`SpectralPlan`], for grids too
/// large for the padded kernel tables. The Nyquist mode is dropped.
pub fn spectral_gradient(h: &Field) -> VecField {
    let g = *h.grid();
    let n = g.n();
    let fft = Fft3::new(n);
    let mut hat: Vec<Complex64> = h.values().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft.forward(&mut hat);
    let xi: Vec<f64> = (0..n)
        .map(|k| if k == n / 2 { 0.0 } else { g.wavenumber(k) })
        .collect();
    VecField {
        comps: std::array::from_fn(|axis| {
            let mut buf: Vec<Complex64> = hat
                .iter()
                .enumerate()
                .map(|(idx, &c)| c * Complex64::new(0.0, xi[g.unravel(idx)[axis]]))
                .collect();
            fft.inverse(&mut buf);
            Field {
                grid: g,
                values: buf.into_iter().map(|c| c.re).collect(),
            }
        }),
    }
}

/// Trigonometric interpolation of `h` onto the points of `target`.
///
/// Evaluates the band-limited interpolant of the periodic samples, so it
/// is exact for resolved modes. Separable, cost `O(m n^3 + m^2 n^2 + m^3 n)`.
pub fn resample(h: &Field, target: GridSpec) -> Result<Field, GridError> {
    let source = *h.grid();
    let n = source.n();
    let m = target.n();
    let len_src = 2.0 * source.half_width();
    // weights[t][j]: contribution of source sample j to target point t.
    let weights: Vec<f64> = (0..m)
        .flat_map(|t| {
            let x = target.coord(t);
            (0..n).map(move |j| {
                let d = x - source.coord(j);
                let mut s = 1.0;
                for k in 1..n / 2 {
                    s += 2.0 * (2.0 * PI * k as f64 * d / len_src).cos();
                }
                s += (PI * n as f64 * d / len_src).cos();
                s / n as f64
            })
        })
        .collect();
    let src = h.values();
    // Contract the last axis, then the middle, then the first.
    let mut s1 = vec![0.0; n * n * m];
    for ij in 0..n * n {
        let row = &src[ij * n..(ij + 1) * n];
        for t in 0..m {
            let w = &weights[t * n..(t + 1) * n];
            s1[ij * m + t] = row.iter().zip(w).map(|(a, b)| a * b).sum();
        }
    }
    let mut s2 = vec![0.0; n * m * m];
    for i in 0..n {
        for t2 in 0..m {
            let w = &weights[t2 * n..(t2 + 1) * n];
            for t3 in 0..m {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += w[j] * s1[(i * n + j) * m + t3];
                }
                s2[(i * m + t2) * m + t3] = acc;
            }
        }
    }
    let mut out = vec![0.0; m * m * m];
    for t1 in 0..m {
        let w = &weights[t1 * n..(t1 + 1) * n];
        let dst = &mut out[t1 * m * m..(t1 + 1) * m * m];
        for i in 0..n {
            let wi = w[i];
            let plane = &s2[i * m * m..(i + 1) * m * m];
            dst.iter_mut().zip(plane).for_each(|(d, p)| *d += wi * p);
        }
    }
    Field::from_values(target, out)
}

/// Truncation radius of the biharmonic potential, in units of `L`.
const TRUNCATION_FACTOR: f64 = 4.0;

/// Fourier transform of `|z| / (8 pi)` restricted to `|z| < r`.
pub(crate) fn truncated_biharmonic_ft(rho: f64, r: f64) -> f64 {
    let x = rho * r;
    if x < 0.5 {
        // (R^4/2) sum_k (-1)^k x^{2k} / ((2k+1)! (2k+4))
        let mut term_fact = 1.0;
        let mut xpow = 1.0;
        let mut acc = 0.0;
        for k in 0..12 {
            if k > 0 {
                term_fact *= (2 * k) as f64 * (2 * k + 1) as f64;
                xpow *= -x * x;
            }
            acc += xpow / (term_fact * (2 * k + 4) as f64);
        }
        0.5 * r.powi(4) * acc
    } else {
        let (s, c) = x.sin_cos();
        let integral = -r * r * c / rho + 2.0 * r * s / (rho * rho) + 2.0 * (c - 1.0) / rho.powi(3);
        integral / (2.0 * rho)
    }
}

/// Real-space samples of all six Landau kernel components on the `(2n)^3`
/// padded grid (row-major, offsets wrapped), without the `dv^3` weight.
///
/// Offsets with any coordinate equal to `n` are never reached by a box-to-box
/// convolution and are set to zero.
pub fn landau_kernel_samples(grid: &GridSpec) -> [Vec<f64>; 6] {
    let n = grid.n();
    let m4 = 4 * n;
    let h = grid.spacing();
    let r = TRUNCATION_FACTOR * grid.half_width();
    let freq: Vec<f64> = (0..m4)
        .map(|k| 2.0 * PI * signed_freq(k, m4) as f64 / (m4 as f64 * h))
        .collect();
    let nyq = 2 * n;
    let radial: Vec<f64> = (0..m4 * m4 * m4)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx / (m4 * m4), (idx / m4) % m4, idx % m4);
            let rho = (freq[i] * freq[i] + freq[j] * freq[j] + freq[k] * freq[k]).sqrt();
            truncated_biharmonic_ft(rho, r)
        })
        .collect();
    let fft = Fft3::new(m4);
    let inv_vol = 1.0 / grid.cell_volume();
    let m = 2 * n;
    let wrap4 = |p: usize| -> Option<usize> {
        match p.cmp(&n) {
            std::cmp::Ordering::Less => Some(p),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(m4 - (m - p)),
        }
    };
    std::array::from_fn(|c| {
        let (a, b) = SYM_PAIRS[c];
        let mut buf: Vec<Complex64> = radial
            .par_iter()
            .enumerate()
            .map(|(idx, &f)| {
                let q = [idx / (m4 * m4), (idx / m4) % m4, idx % m4];
                let val = if a != b && (q[a] == nyq || q[b] == nyq) {
                    0.0
                } else {
                    -freq[q[a]] * freq[q[b]] * f
                };
                Complex64::new(val, 0.0)
            })
            .collect();
        fft.inverse(&mut buf);
        let mut out = vec![0.0; m * m * m];
        for i in 0..m {
            let Some(i4) = wrap4(i) else { continue };
            for j in 0..m {
                let Some(j4) = wrap4(j) else { continue };
                for k in 0..m {
                    let Some(k4) = wrap4(k) else { continue };
                    out[(i * m + j) * m + k] = buf[(i4 * m4 + j4) * m4 + k4].re * inv_vol;
                }
            }
        }
        out
    })
}
