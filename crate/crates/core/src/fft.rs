//! Cubic N^d torus grids and their multidimensional FFT.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Row-major N^d grid; node `k` along an axis carries the angle 2*pi*k/N folded into [-pi, pi).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TorusGrid {
    pub d: usize,
    pub n: usize,
}

impl TorusGrid {
    pub fn new(d: usize, n: usize) -> Self {
        Self { d, n }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn angle(&self, k: usize) -> f64 {
        let k = if 2 * k >= self.n { k as f64 - self.n as f64 } else { k as f64 };
        2.0 * PI * k / self.n as f64
    }

    pub fn angles_into(&self, mut idx: usize, out: &mut [f64]) {
        for j in (0..self.d).rev() {
            out[j] = self.angle(idx % self.n);
            idx /= self.n;
        }
    }

    pub fn index_of(&self, x: &[i64]) -> usize {
        x.iter().fold(0usize, |acc, &c| acc * self.n + c.rem_euclid(self.n as i64) as usize)
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        fft_nd(data, self.n, self.d, false);
    }

    /// Inverse transform including the 1/N^d factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        fft_nd(data, self.n, self.d, true);
        let s = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

/// Unnormalized d-dimensional transform of an N^d row-major array.
pub fn fft_nd(data: &mut [Complex64], n: usize, d: usize, inverse: bool) {
    assert_eq!(data.len(), n.pow(d as u32));
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut line = vec![Complex64::default(); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * n;
        for base in (0..data.len()).step_by(block) {
            for i in 0..stride {
                for (k, z) in line.iter_mut().enumerate() {
                    *z = data[base + k * stride + i];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, z) in line.iter().enumerate() {
                    data[base + k * stride + i] = *z;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_sum() {
        let g = TorusGrid::new(3, 4);
        let mut data: Vec<Complex64> =
            (0..g.len()).map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let orig = data.clone();
        g.forward(&mut data);
        let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
        for k in 0..g.len() {
            g.angles_into(k, &mut a);
            let mut s = Complex64::default();
            for x in 0..g.len() {
                let mut c = [0i64; 3];
                let mut t = x;
                for j in (0..3).rev() {
                    c[j] = (t % 4) as i64;
                    t /= 4;
                }
                let ph: f64 = (0..3).map(|j| a[j] * c[j] as f64).sum();
                s += orig[x] * Complex64::from_polar(1.0, -ph);
            }
            assert!((s - data[k]).norm() < 1e-12);
        }
        g.inverse(&mut data);
        for (u, v) in data.iter().zip(&orig) {
            assert!((u - v).norm() < 1e-14);
        }
        g.angles_into(g.len() - 1, &mut b);
        assert!(b.iter().all(|&t| (t + PI / 2.0).abs() < 1e-15));
    }
}
