//! Cubic 3-D complex FFT built from 1-D `rustfft` passes.
//!
//! Convention: forward transform is unnormalized with kernel `e^{-i k x}`,
//! inverse carries the `1/m^3` factor. Arrays are row-major with the last
//! axis contiguous.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub(crate) struct Fft3 {
    m: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("m", &self.m).finish()
    }
}

impl Fft3 {
    pub(crate) fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            m,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
        }
    }

    pub(crate) fn size(&self) -> usize {
        self.m
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd);
    }

    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv);
        let scale = 1.0 / (self.m * self.m * self.m) as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let m = self.m;
        let plane = m * m;
        assert_eq!(data.len(), plane * m, "buffer is not m^3");

        // Axes 2 and 1 stay inside one plane of constant first index.
        data.par_chunks_mut(plane).for_each(|slab| {
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(slab, &mut scratch);
            let mut line = vec![Complex64::default(); m];
            for k in 0..m {
                for j in 0..m {
                    line[j] = slab[j * m + k];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for j in 0..m {
                    slab[j * m + k] = line[j];
                }
            }
        });

        // Axis 0: gather the (i, k) slab for each j so lines are contiguous.
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut slab = vec![Complex64::default(); plane];
        for j in 0..m {
            for i in 0..m {
                for k in 0..m {
                    slab[k * m + i] = data[i * plane + j * m + k];
                }
            }
            fft.process_with_scratch(&mut slab, &mut scratch);
            for i in 0..m {
                for k in 0..m {
                    data[i * plane + j * m + k] = slab[k * m + i];
                }
            }
        }
    }
}

/// Signed integer frequency of DFT bin `k` on an `m`-point grid.
pub(crate) fn signed_freq(k: usize, m: usize) -> i64 {
    if k <= m / 2 {
        k as i64
    } else {
        k as i64 - m as i64
    }
}
