//! Multi-dimensional FFTs on periodic grids, applied axis by axis.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::domain::Grid;
use crate::scalar::Real;

pub struct SpectralPlan<T: Real> {
    grid: Grid<T>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
}

impl<T: Real> SpectralPlan<T> {
    pub fn new(grid: &Grid<T>) -> Self {
        let mut planner = FftPlanner::new();
        let dim = grid.dim();
        let forward = (0..dim).map(|a| planner.plan_fft_forward(grid.points()[a])).collect();
        let inverse = (0..dim).map(|a| planner.plan_fft_inverse(grid.points()[a])).collect();
        SpectralPlan {
            grid: grid.clone(),
            forward,
            inverse,
        }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    fn apply(&self, plans: &[Arc<dyn Fft<T>>], data: &mut [Complex<T>]) {
        assert_eq!(data.len(), self.grid.len(), "buffer does not match grid");
        let mut line = Vec::new();
        for (axis, fft) in plans.iter().enumerate() {
            let n = self.grid.points()[axis];
            let stride = self.grid.stride(axis);
            if stride == 1 {
                fft.process(data);
                continue;
            }
            line.resize(n, Complex::new(T::zero(), T::zero()));
            let block = n * stride;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (k, z) in line.iter_mut().enumerate() {
                        *z = data[base + k * stride];
                    }
                    fft.process(&mut line);
                    for (k, z) in line.iter().enumerate() {
                        data[base + k * stride] = *z;
                    }
                }
            }
        }
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.apply(&self.forward, data);
    }

    /// Inverse transform in place, normalized so that `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.apply(&self.inverse, data);
        let scale = T::one() / T::from_usize_lossy(data.len());
        data.iter_mut().for_each(|z| *z = *z * scale);
    }

    /// `|k|^2` at every node in FFT ordering.
    pub fn k_squared(&self) -> Vec<T> {
        let ks: Vec<Vec<T>> = (0..self.grid.dim()).map(|a| self.grid.wavenumbers(a)).collect();
        (0..self.grid.len())
            .map(|i| {
                let idx = self.grid.multi_index(i);
                ks.iter().enumerate().map(|(a, k)| k[idx[a]] * k[idx[a]]).sum()
            })
            .collect()
    }

    /// Spectral gradient of a complex periodic field, one vector per active
    /// axis. The Nyquist mode is dropped, as usual for odd derivatives.
    pub fn gradient_complex(&self, values: &[Complex<T>]) -> Vec<Vec<Complex<T>>> {
        let mut spectrum = values.to_vec();
        self.forward(&mut spectrum);
        (0..self.grid.dim())
            .map(|axis| {
                let n = self.grid.points()[axis];
                let ks = self.grid.wavenumbers(axis);
                let mut buf: Vec<Complex<T>> = spectrum
                    .iter()
                    .enumerate()
                    .map(|(i, z)| {
                        let j = self.grid.multi_index(i)[axis];
                        if 2 * j == n {
                            Complex::new(T::zero(), T::zero())
                        } else {
                            *z * Complex::new(T::zero(), ks[j])
                        }
                    })
                    .collect();
                self.inverse(&mut buf);
                buf
            })
            .collect()
    }

    /// Spectral Laplacian of a real periodic field.
    pub fn laplacian(&self, values: &[T]) -> Vec<T> {
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward(&mut buf);
        for (z, k2) in buf.iter_mut().zip(self.k_squared()) {
            *z = *z * (-k2);
        }
        self.inverse(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }
}
