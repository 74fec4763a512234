//! The perturbative kernel K^delta and the objects derived from it: the homogenized
//! matrix Q, the walk kernel T and the structural diagnostics.

mod moments;
mod series;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use moments::{field_moment, Law, MomentModel};
pub use series::{kdelta_kernel, series_term_kernel, SeriesExpansion, MAX_CONTRAST, MAX_ORDER};

use crate::error::{Error, Result};
use crate::kernel::{MatrixKernel, ScalarKernel};
use crate::lattice::LatticePoint;

/// Q, Q^{-1/2} and sigma = (det Q)^{1/(2d)}.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizedData {
    q: DMatrix<f64>,
    q_inv_half: DMatrix<f64>,
    sigma: f64,
    eigenvalues: Vec<f64>,
}

impl HomogenizedData {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        let sym = (&q + q.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let lam_min = eig.eigenvalues.min();
        if lam_min <= 0.0 {
            return Err(Error::NotPositiveDefinite(lam_min));
        }
        let d = q.nrows();
        let inv_half = DVector::from_iterator(d, eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
        let q_inv_half = &eig.eigenvectors * DMatrix::from_diagonal(&inv_half) * eig.eigenvectors.transpose();
        let det: f64 = eig.eigenvalues.iter().product();
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self { q, q_inv_half, sigma: det.powf(0.5 / d as f64), eigenvalues })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q_inv_half(&self) -> &DMatrix<f64> {
        &self.q_inv_half
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Eigenvalues of Q in increasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// x~ = sigma Q^{-1/2} x.
    pub fn x_tilde(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.q_inv_half * DVector::from_column_slice(x) * self.sigma;
        v.iter().copied().collect()
    }

    /// <theta, Q theta>.
    pub fn quadratic_form(&self, theta: &[f64]) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                s += theta[i] * self.q[(i, j)] * theta[j];
            }
        }
        s
    }
}

/// Q = I + sum_x K(x).
pub fn q_matrix(kdelta: &MatrixKernel) -> Result<HomogenizedData> {
    let d = kdelta.dim();
    let total = kdelta.total();
    let q = DMatrix::from_fn(d, d, |j, k| total[j * d + k] + if j == k { 1.0 } else { 0.0 });
    HomogenizedData::new(q)
}

/// T(x) = delta_0/2 + 1_{|x|=1}/(4d)
///        + (1/4d) sum_jk [-K_jk(x) + K_jk(x - e_j) + K_jk(x + e_k) - K_jk(x - e_j + e_k)],
/// the kernel with m = 4d(1 - T-hat).
pub fn t_kernel(kdelta: &MatrixKernel) -> ScalarKernel {
    let d = kdelta.dim();
    let s = 1.0 / (4 * d) as f64;
    let mut t = ScalarKernel::new(d, 0).expect("kernel dimension already validated");
    t.add_to(LatticePoint::origin(d), 0.5);
    for j in 0..d {
        t.add_to(LatticePoint::unit(d, j), s);
        t.add_to(LatticePoint::unit(d, j).neg(), s);
    }
    for (y, m) in kdelta.iter() {
        for j in 0..d {
            for k in 0..d {
                let v = s * m[j * d + k];
                if v == 0.0 {
                    continue;
                }
                t.add_to(y.clone(), -v);
                t.add_to(y.shifted(j, 1), v);
                t.add_to(y.shifted(k, -1), v);
                t.add_to(y.shifted(j, 1).shifted(k, -1), -v);
            }
        }
    }
    t
}

/// sum_x T(x) x x^T.
pub fn second_moment(t: &ScalarKernel) -> DMatrix<f64> {
    let d = t.dim();
    let mut m = DMatrix::zeros(d, d);
    for (x, v) in t.iter() {
        let c = x.as_f64();
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += v * c[i] * c[j];
            }
        }
    }
    m
}

/// sum_x T(x) x.
pub fn first_moment(t: &ScalarKernel) -> Vec<f64> {
    let d = t.dim();
    (0..d).map(|j| crate::gauss::accurate_sum(t.iter().map(|(x, v)| v * x.coords()[j] as f64))).collect()
}

/// The scalar c with sum T x x^T = c Q, and the largest entrywise deviation from it.
pub fn moment_factor(t: &ScalarKernel, h: &HomogenizedData) -> (f64, f64) {
    let m = second_moment(t);
    let q = h.q();
    let c = m.trace() / q.trace();
    (c, (m - q * c).amax())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aperiodicity {
    pub holds: bool,
    pub witnesses: Vec<LatticePoint>,
}

/// T(0) > 0 and T(+-e_j) > 0 for every j.
pub fn aperiodicity_check(t: &ScalarKernel) -> Aperiodicity {
    let d = t.dim();
    let mut probes = vec![LatticePoint::origin(d)];
    for j in 0..d {
        probes.push(LatticePoint::unit(d, j));
        probes.push(LatticePoint::unit(d, j).neg());
    }
    let witnesses: Vec<LatticePoint> = probes.into_iter().filter(|x| !(t.get(x) > 0.0)).collect();
    Aperiodicity { holds: witnesses.is_empty(), witnesses }
}

/// sum_x |T(x)| |x|^{2 + m_d}, with an extra ln|x| factor in d = 4.
pub fn moment_summability(t: &ScalarKernel, m_d: u32) -> f64 {
    let d = t.dim();
    crate::gauss::accurate_sum(t.iter().filter(|(x, _)| x.l1_norm() > 0).map(|(x, v)| {
        let r = x.norm();
        let w = v.abs() * r.powi(2 + m_d as i32);
        if d == 4 {
            w * r.ln()
        } else {
            w
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(v: f64) -> Self {
        if v < 0.0 {
            Sign::Negative
        } else if v > 0.0 {
            Sign::Positive
        } else {
            Sign::Zero
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TScanRow {
    pub delta: f64,
    pub min: f64,
    pub argmin: LatticePoint,
    pub sign: Sign,
}

/// Minimum of T over |x|_inf <= radius; the first minimizer in lexicographic order.
pub fn min_over_box(t: &ScalarKernel, radius: i64) -> (f64, LatticePoint) {
    let mut best = (f64::INFINITY, LatticePoint::origin(t.dim()));
    for x in LatticePoint::cube(t.dim(), radius) {
        let v = t.get(&x);
        if v < best.0 {
            best = (v, x);
        }
    }
    best
}

/// Minimum of T(delta) over the box for each contrast, rows sorted by delta.
pub fn positivity_scan(series: &SeriesExpansion, radius: i64, sweep: &[f64]) -> Result<Vec<TScanRow>> {
    let mut deltas = sweep.to_vec();
    deltas.sort_by(f64::total_cmp);
    deltas
        .into_iter()
        .map(|delta| {
            let t = t_kernel(&series.kernel(delta)?);
            let (min, argmin) = min_over_box(&t, radius);
            Ok(TScanRow { delta, min, argmin, sign: Sign::of(min) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lazy_walk(d: usize) -> ScalarKernel {
        t_kernel(&MatrixKernel::new(d, 0, 0.0).unwrap())
    }

    #[test]
    fn zero_contrast_walk() {
        let t = lazy_walk(3);
        assert_eq!(t.len(), 7);
        assert_eq!(t.get(&LatticePoint::origin(3)), 0.5);
        assert_eq!(t.get(&LatticePoint::unit(3, 2).neg()), 1.0 / 12.0);
        assert!((t.total() - 1.0).abs() < 1e-15);
        assert!(aperiodicity_check(&t).holds);
        assert!((moment_summability(&t, 3) - 0.5).abs() < 1e-15);
        assert_eq!(moment_summability(&lazy_walk(4), 5), 0.0);
        let (min, arg) = min_over_box(&t, 6);
        assert_eq!(min, 0.0);
        assert!(arg.l1_norm() > 1);
    }

    #[test]
    fn constructed_violation() {
        let mut t = lazy_walk(3);
        t.insert(LatticePoint::unit(3, 0), -0.01);
        let a = aperiodicity_check(&t);
        assert!(!a.holds);
        assert_eq!(a.witnesses, vec![LatticePoint::unit(3, 0)]);
    }

    #[test]
    fn homogenized_isotropic() {
        let h = HomogenizedData::new(DMatrix::identity(3, 3) * 4.0).unwrap();
        assert!((h.sigma() - 2.0).abs() < 1e-15);
        let xt = h.x_tilde(&[1.0, -2.0, 3.0]);
        assert!((xt[0] - 1.0).abs() < 1e-15 && (xt[2] - 3.0).abs() < 1e-15);
        assert!(HomogenizedData::new(DMatrix::from_diagonal_element(3, 3, -1.0)).is_err());
    }
}
