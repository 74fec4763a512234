//! Fourier-side objects on the torus: the Helmholtz projection, the operator symbol m,
//! the walk characteristic function and the c/s functions.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::TorusGrid;
use crate::kernel::{MatrixKernel, ScalarKernel};
use crate::lattice::check_dim;

/// Symmetry defect above which a kernel is rejected as asymmetric.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        check_dim(angles.len())?;
        if let Some(&a) = angles.iter().find(|a| !(-PI..PI).contains(*a)) {
            return Err(Error::Angle(a));
        }
        Ok(Self(angles))
    }

    /// Fold arbitrary angles into [-pi, pi).
    pub fn wrapped(angles: Vec<f64>) -> Result<Self> {
        Self::new(angles.into_iter().map(wrap_angle).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|a| wrap_angle(-a)).collect())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0.0)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

/// v_j(theta) = e^{i theta_j} - 1.
pub fn gradient_symbol(theta: &[f64]) -> Vec<Complex64> {
    theta.iter().map(|&t| Complex64::new(t.cos() - 1.0, t.sin())).collect()
}

/// |v|^2 = 2 sum_j (1 - cos theta_j), computed without cancellation.
pub fn laplacian_symbol(theta: &[f64]) -> f64 {
    theta.iter().map(|&t| 4.0 * (0.5 * t).sin().powi(2)).sum()
}

/// F = v v^* / |v|^2 flattened row-major; `None` at the origin.
pub(crate) fn projection(theta: &[f64]) -> Option<Vec<Complex64>> {
    let den = laplacian_symbol(theta);
    if den == 0.0 {
        return None;
    }
    let v = gradient_symbol(theta);
    let d = v.len();
    let mut f = vec![Complex64::default(); d * d];
    for j in 0..d {
        for k in 0..d {
            f[j * d + k] = v[j] * v[k].conj() / den;
        }
    }
    Some(f)
}

pub fn helmholtz_symbol(theta: &TorusPoint) -> Result<DMatrix<Complex64>> {
    let d = theta.dim();
    let f = projection(theta.angles()).ok_or(Error::SingularAtOrigin)?;
    Ok(DMatrix::from_row_slice(d, d, &f))
}

/// Real-space table of the periodized Helmholtz kernel on an N^d torus,
/// with the origin node of the symbol set to its angular mean I/d.
#[derive(Clone, Debug)]
pub struct HelmholtzTable {
    grid: TorusGrid,
    planes: Vec<Vec<f64>>,
}

impl HelmholtzTable {
    pub fn new(d: usize, n: usize) -> Result<Self> {
        check_dim(d)?;
        if n < 4 {
            return Err(Error::Resolution { resolution: n, required: ">= 4".into() });
        }
        let grid = TorusGrid::new(d, n);
        let symbols = projection_grid(grid);
        let planes = symbols
            .into_iter()
            .map(|mut p| {
                grid.inverse(&mut p);
                p.into_iter().map(|z| z.re).collect()
            })
            .collect();
        Ok(Self { grid, planes })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn entry(&self, j: usize, k: usize, x: &[i64]) -> f64 {
        self.planes[j * self.grid.d + k][self.grid.index_of(x)]
    }

    pub fn at(&self, x: &[i64]) -> DMatrix<f64> {
        let d = self.grid.d;
        DMatrix::from_fn(d, d, |j, k| self.entry(j, k, x))
    }
}

/// Projection symbol on FFT-ordered nodes, one plane per matrix entry.
pub(crate) fn projection_grid(grid: TorusGrid) -> Vec<Vec<Complex64>> {
    let d = grid.d;
    let mut planes = vec![vec![Complex64::default(); grid.len()]; d * d];
    let mut theta = vec![0.0; d];
    for i in 0..grid.len() {
        grid.angles_into(i, &mut theta);
        match projection(&theta) {
            Some(f) => {
                for (p, v) in planes.iter_mut().zip(f) {
                    p[i] = v;
                }
            }
            None => {
                for j in 0..d {
                    planes[j * d + j][i] = Complex64::new(1.0 / d as f64, 0.0);
                }
            }
        }
    }
    planes
}

/// Trapezoidal approximation of int e^{i x.theta} F(theta) dtheta / (2 pi)^d.
pub fn helmholtz_kernel(x: &[i64], n: usize) -> Result<DMatrix<f64>> {
    if n < 16 || n % 2 != 0 {
        return Err(Error::Resolution { resolution: n, required: "even and >= 16".into() });
    }
    let reach = x.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0) as usize;
    if 4 * reach > n {
        return Err(Error::Resolution { resolution: n, required: format!(">= {}", 4 * reach) });
    }
    Ok(HelmholtzTable::new(x.len(), n)?.at(x))
}

pub fn check_symmetric(k: &MatrixKernel) -> Result<()> {
    let defect = k.symmetry_defect();
    if defect > SYMMETRY_TOL {
        Err(Error::AsymmetricKernel(defect))
    } else {
        Ok(())
    }
}

/// m(theta) = |v|^2 + v^* Khat(theta) v.
pub fn symbol_m(theta: &TorusPoint, kdelta: &MatrixKernel) -> Result<f64> {
    if theta.dim() != kdelta.dim() {
        return Err(Error::DimensionMismatch { expected: kdelta.dim(), found: theta.dim() });
    }
    check_symmetric(kdelta)?;
    Ok(symbol_m_unchecked(theta.angles(), kdelta))
}

pub(crate) fn symbol_m_unchecked(theta: &[f64], kdelta: &MatrixKernel) -> f64 {
    let d = theta.len();
    let v = gradient_symbol(theta);
    let kh = kdelta.fourier(theta);
    let mut form = Complex64::default();
    for j in 0..d {
        for k in 0..d {
            form += v[j].conj() * kh[j * d + k] * v[k];
        }
    }
    laplacian_symbol(theta) + form.re
}

pub fn t_hat(theta: &TorusPoint, t: &ScalarKernel) -> Complex64 {
    t.fourier(theta.angles())
}

/// c(theta) = sum T(x)(1 - cos theta.x), s(theta) = sum T(x) sin theta.x.
pub fn cs_functions(theta: &TorusPoint, t: &ScalarKernel) -> (f64, f64) {
    let (mut c, mut s) = (0.0, 0.0);
    for (x, v) in t.iter() {
        let ph: f64 = x.coords().iter().zip(theta.angles()).map(|(&a, b)| a as f64 * b).sum();
        c += v * 2.0 * (0.5 * ph).sin().powi(2);
        s += v * ph.sin();
    }
    (c, s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NonvanishingReport {
    /// Minimum of c^2 + s^2 over scanned nodes.
    pub min_value: f64,
    pub argmin: Vec<f64>,
    pub nodes_scanned: usize,
    /// Radius below which c(theta) > 0 follows from the quadratic lower bound.
    pub certified_radius: f64,
    /// Whether the exclusion ball lies inside the certified region.
    pub origin_covered: bool,
}

impl NonvanishingReport {
    pub fn certifies(&self) -> bool {
        self.min_value > 0.0 && self.origin_covered
    }
}

/// Scan c^2 + s^2 = |1 - T-hat|^2 on the nodes 2 pi k / N - pi with |theta| >= r.
pub fn nonvanishing_check(t: &ScalarKernel, n: usize, r: f64) -> Result<NonvanishingReport> {
    if !(r > 0.0) {
        return Err(Error::Config("exclusion radius must be positive".into()));
    }
    let d = t.dim();
    let grid = TorusGrid::new(d, n);
    let mut data = vec![Complex64::default(); grid.len()];
    for (x, v) in t.iter() {
        let sign = if x.l1_norm() % 2 == 0 { 1.0 } else { -1.0 };
        data[grid.index_of(x.coords())] += sign * v;
    }
    grid.forward(&mut data);
    let total = t.total();
    let mut best = f64::INFINITY;
    let mut argmin = Vec::new();
    let mut count = 0;
    let mut theta = vec![0.0; d];
    for (i, z) in data.iter().enumerate() {
        let mut idx = i;
        for j in (0..d).rev() {
            theta[j] = 2.0 * PI * (idx % n) as f64 / n as f64 - PI;
            idx /= n;
        }
        if theta.iter().map(|a| a * a).sum::<f64>().sqrt() < r {
            continue;
        }
        count += 1;
        let v = (Complex64::new(total, 0.0) - z).norm_sqr();
        if v < best {
            best = v;
            argmin = theta.clone();
        }
    }
    if count == 0 {
        return Err(Error::EmptyGrid(r));
    }
    let certified_radius = quadratic_bound_radius(t);
    Ok(NonvanishingReport {
        min_value: best,
        argmin,
        nodes_scanned: count,
        certified_radius,
        origin_covered: r < certified_radius,
    })
}

/// c(theta) >= lambda_min(Q')|theta|^2/2 - C|theta|^4 with Q' = sum T x x^T and
/// C = sum |T||x|^4 / 24; returns the radius where the bound stays positive.
fn quadratic_bound_radius(t: &ScalarKernel) -> f64 {
    let d = t.dim();
    let mut q = DMatrix::<f64>::zeros(d, d);
    let mut c4 = 0.0;
    for (x, v) in t.iter() {
        let xf = x.as_f64();
        for i in 0..d {
            for j in 0..d {
                q[(i, j)] += v * xf[i] * xf[j];
            }
        }
        c4 += v.abs() * xf.iter().map(|a| a * a).sum::<f64>().powi(2) / 24.0;
    }
    let lam = SymmetricEigen::new(q).eigenvalues.min();
    if lam <= 0.0 {
        0.0
    } else if c4 == 0.0 {
        f64::INFINITY
    } else {
        (lam / (2.0 * c4)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolShape {
    Scalar,
    Matrix(usize),
}

/// Values tabulated on the nodes theta_k = 2 pi k / N - pi.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolField {
    d: usize,
    n: usize,
    shape: SymbolShape,
    values: Vec<Complex64>,
}

const SYMBOL_MAGIC: &[u8; 8] = b"SYMFLD01";

impl SymbolField {
    fn entries(shape: SymbolShape) -> usize {
        match shape {
            SymbolShape::Scalar => 1,
            SymbolShape::Matrix(k) => k * k,
        }
    }

    pub fn tabulate(
        d: usize,
        n: usize,
        shape: SymbolShape,
        f: impl Fn(&[f64]) -> Vec<Complex64>,
    ) -> Result<Self> {
        check_dim(d)?;
        if n < 4 || n % 2 != 0 {
            return Err(Error::Resolution { resolution: n, required: "even and >= 4".into() });
        }
        let e = Self::entries(shape);
        let total = n.pow(d as u32);
        let mut values = Vec::with_capacity(total * e);
        let mut theta = vec![0.0; d];
        for i in 0..total {
            let mut idx = i;
            for j in (0..d).rev() {
                theta[j] = 2.0 * PI * (idx % n) as f64 / n as f64 - PI;
                idx /= n;
            }
            let v = f(&theta);
            if v.len() != e {
                return Err(Error::DimensionMismatch { expected: e, found: v.len() });
            }
            values.extend(v);
        }
        Ok(Self { d, n, shape, values })
    }

    /// Helmholtz symbol with the origin node set to I/d.
    pub fn helmholtz(d: usize, n: usize) -> Result<Self> {
        Self::tabulate(d, n, SymbolShape::Matrix(d), |t| {
            projection(t).unwrap_or_else(|| {
                (0..d * d)
                    .map(|e| if e % (d + 1) == 0 { Complex64::new(1.0 / d as f64, 0.0) } else { Complex64::default() })
                    .collect()
            })
        })
    }

    pub fn operator_symbol(n: usize, kdelta: &MatrixKernel) -> Result<Self> {
        check_symmetric(kdelta)?;
        Self::tabulate(kdelta.dim(), n, SymbolShape::Scalar, |t| {
            vec![Complex64::new(symbol_m_unchecked(t, kdelta), 0.0)]
        })
    }

    pub fn walk_symbol(n: usize, t: &ScalarKernel) -> Result<Self> {
        Self::tabulate(t.dim(), n, SymbolShape::Scalar, |th| vec![t.fourier(th)])
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> SymbolShape {
        self.shape
    }

    pub fn value(&self, node: usize, entry: usize) -> Complex64 {
        self.values[node * Self::entries(self.shape) + entry]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let e = Self::entries(self.shape);
        writeln!(w, "node,entry,re,im")?;
        for (i, z) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{:?},{:?}", i / e, i % e, z.re, z.im)?;
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SYMBOL_MAGIC)?;
        let rows = match self.shape {
            SymbolShape::Scalar => 0u32,
            SymbolShape::Matrix(k) => k as u32,
        };
        for v in [self.d as u32, self.n as u32, rows] {
            w.write_all(&v.to_le_bytes())?;
        }
        for z in &self.values {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SYMBOL_MAGIC {
            return Err(Error::Format("bad symbol-table magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut head = [0u32; 3];
        for h in head.iter_mut() {
            r.read_exact(&mut b4)?;
            *h = u32::from_le_bytes(b4);
        }
        let (d, n) = (head[0] as usize, head[1] as usize);
        check_dim(d)?;
        let shape = if head[2] == 0 { SymbolShape::Scalar } else { SymbolShape::Matrix(head[2] as usize) };
        let count = n.pow(d as u32) * Self::entries(shape);
        let mut values = Vec::with_capacity(count);
        let mut b8 = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            values.push(Complex64::new(re, f64::from_le_bytes(b8)));
        }
        Ok(Self { d, n, shape, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticePoint;

    #[test]
    fn origin_block_matches_lattice_green() {
        // K_12(0) = (grad_1 grad_2^* G)(0) = G(1,-1,0) - 2 G(1,0,0) + G(0) = G(1,1,0) - G(0) + 1/3.
        let g = crate::bessel::LatticeGreen::free(3);
        let v = g.values(&[vec![0, 0, 0], vec![1, 1, 0]]);
        let expect = v[1] - v[0] + 1.0 / 3.0;
        let table = HelmholtzTable::new(3, 64).unwrap();
        assert!((table.entry(0, 1, &[0, 0, 0]) - expect).abs() < 1e-5);
        assert!((table.entry(0, 0, &[0, 0, 0]) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn projection_on_axis() {
        let f = helmholtz_symbol(&TorusPoint::new(vec![-PI, 0.0, 0.0]).unwrap()).unwrap();
        for j in 0..3 {
            for k in 0..3 {
                let expect = if j == 0 && k == 0 { 1.0 } else { 0.0 };
                assert!((f[(j, k)] - Complex64::new(expect, 0.0)).norm() < 1e-15);
            }
        }
        assert!(matches!(
            helmholtz_symbol(&TorusPoint::new(vec![0.0; 3]).unwrap()),
            Err(Error::SingularAtOrigin)
        ));
    }

    #[test]
    fn kernel_trace_and_transpose() {
        let table = HelmholtzTable::new(3, 64).unwrap();
        let tr: f64 = (0..3).map(|j| table.entry(j, j, &[0, 0, 0])).sum();
        assert!((tr - 1.0).abs() < 1e-6);
        for x in LatticePoint::cube(3, 3) {
            let a = table.at(x.coords());
            let b = table.at(x.neg().coords());
            assert!((a.transpose() - b).amax() < 1e-10);
        }
        assert!(helmholtz_kernel(&[9, 0, 0], 32).is_err());
    }

    #[test]
    fn walk_symbol_at_zero_contrast() {
        let mut t = ScalarKernel::new(3, 1).unwrap();
        t.insert(LatticePoint::origin(3), 0.5);
        for j in 0..3 {
            t.insert(LatticePoint::unit(3, j), 1.0 / 12.0);
            t.insert(LatticePoint::unit(3, j).neg(), 1.0 / 12.0);
        }
        let th = TorusPoint::new(vec![0.3, -1.1, 2.0]).unwrap();
        let expect = 0.5 + th.angles().iter().map(|a| a.cos()).sum::<f64>() / 6.0;
        assert!((t_hat(&th, &t) - Complex64::new(expect, 0.0)).norm() < 1e-15);
        let (c, s) = cs_functions(&th, &t);
        assert_eq!(s, 0.0);
        assert!((c - (1.0 - expect)).abs() < 1e-15);
        let report = nonvanishing_check(&t, 33, 0.5).unwrap();
        assert!(report.min_value > 0.0);
        assert!(report.certifies());
        assert!(nonvanishing_check(&t, 4, 100.0).is_err());
    }

    #[test]
    fn symbol_table_roundtrip() {
        let f = SymbolField::helmholtz(3, 4).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], SYMBOL_MAGIC);
        assert_eq!(SymbolField::read_binary(&buf[..]).unwrap(), f);
        let node = 2 * 16 + 2 * 4 + 2;
        assert!((f.value(node, 0).re - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn wrap_keeps_half_open_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!(TorusPoint::new(vec![PI, 0.0, 0.0]).is_err());
    }
}
