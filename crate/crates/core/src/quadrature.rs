//! Fourier quadrature for the averaged Green's function
//!
//! G(x) = int_{T^d} e^{i x.theta} / m(theta) dtheta / (2 pi)^d.
//!
//! The singularity at theta = 0 is removed by subtracting 1/(v^* Q v), whose inverse
//! transform is the lattice Green's function of grad^* Q grad and is computed separately
//! to near machine precision. What remains is bounded with a direction-dependent limit at
//! the origin, so the plain torus rule converges like N^{-d}.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bessel::LatticeGreen;
use crate::error::{Error, Result};
use crate::fft::TorusGrid;
use crate::kernel::MatrixKernel;
use crate::lattice::{check_dim, LatticePoint, MultiIndex};
use crate::perturbation::{q_matrix, HomogenizedData};
use crate::symbols::{check_symmetric, gradient_symbol, laplacian_symbol, symbol_m_unchecked};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularityRule {
    /// Integrate 1/m - 1/(v^* Q v) on the grid and add the exact reference.
    Subtract,
    /// Keep the leading part int e^{ix.theta}/<theta,Q theta> (on the fundamental cell)
    /// and the correction -int e^{ix.theta} m~/(m_0 m) as separate tables.
    Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub resolution: usize,
    pub depth: usize,
    pub rule: SingularityRule,
    /// Derivatives through the Fourier multiplier prod_j (e^{i theta_j} - 1)^{alpha_j}
    /// instead of finite differences.
    pub multiplier: bool,
}

impl QuadratureConfig {
    pub fn for_dim(d: usize) -> Self {
        Self { resolution: if d == 3 { 128 } else { 32 }, depth: 6, rule: SingularityRule::Subtract, multiplier: false }
    }

    pub fn with_resolution(mut self, n: usize) -> Self {
        self.resolution = n;
        self
    }

    pub fn with_rule(mut self, rule: SingularityRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 32 || !self.resolution.is_power_of_two() {
            return Err(Error::Resolution {
                resolution: self.resolution,
                required: "a power of two >= 32".into(),
            });
        }
        if self.depth == 0 {
            return Err(Error::Config("dyadic depth must be at least 1".into()));
        }
        Ok(())
    }

    /// Largest sup-norm of x the torus tables resolve.
    pub fn max_reach(&self) -> i64 {
        (3 * self.resolution / 8) as i64
    }
}

/// Grid tables for one operator symbol.
#[derive(Clone, Debug)]
pub struct AnnealedGreen {
    grid: TorusGrid,
    cfg: QuadratureConfig,
    hom: HomogenizedData,
    reference: LatticeGreen,
    /// m at every node (the origin entry is 0).
    symbol: Vec<f64>,
    /// Bounded integrand 1/m - 1/m_Q, origin entry set to its spherical limit.
    remainder: Vec<f64>,
    table: Vec<f64>,
    split: Option<(Vec<f64>, Vec<f64>)>,
}

impl AnnealedGreen {
    pub fn new(kdelta: &MatrixKernel, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        let d = kdelta.dim();
        check_dim(d)?;
        check_symmetric(kdelta)?;
        let n = cfg.resolution;
        if (n as i64) < 2 * kdelta.radius() + 1 {
            return Err(Error::Resolution {
                resolution: n,
                required: format!("at least {} to embed the kernel", 2 * kdelta.radius() + 1),
            });
        }
        let grid = TorusGrid::new(d, n);
        let hom = q_matrix(kdelta)?;
        let reference = LatticeGreen::with_matrix(hom.q())?;
        let symbol = symbol_grid(kdelta, grid)?;
        let q = hom.q().clone();

        let mut theta = vec![0.0; d];
        let mut remainder = vec![0.0; grid.len()];
        for (i, r) in remainder.iter_mut().enumerate().skip(1) {
            grid.angles_into(i, &mut theta);
            *r = 1.0 / symbol[i] - 1.0 / periodic_form(&q, &theta);
        }
        remainder[0] = origin_limit(d, |t| 1.0 / symbol_m_unchecked(t, kdelta) - 1.0 / periodic_form(&q, t));
        let table = inverse_real(grid, &remainder);

        let split = match cfg.rule {
            SingularityRule::Subtract => None,
            SingularityRule::Split => {
                let mut lead = vec![0.0; grid.len()];
                let mut corr = vec![0.0; grid.len()];
                for i in 1..grid.len() {
                    grid.angles_into(i, &mut theta);
                    let m0 = cell_form(&q, &theta);
                    lead[i] = 1.0 / m0 - 1.0 / periodic_form(&q, &theta);
                    corr[i] = -(symbol[i] - m0) / (m0 * symbol[i]);
                }
                lead[0] = origin_limit(d, |t| 1.0 / cell_form(&q, t) - 1.0 / periodic_form(&q, t));
                corr[0] = origin_limit(d, |t| {
                    let m = symbol_m_unchecked(t, kdelta);
                    let m0 = cell_form(&q, t);
                    -(m - m0) / (m0 * m)
                });
                Some((inverse_real(grid, &lead), inverse_real(grid, &corr)))
            }
        };
        Ok(Self { grid, cfg: cfg.clone(), hom, reference, symbol, remainder, table, split })
    }

    /// The free Laplacian, K = 0.
    pub fn free(d: usize, cfg: &QuadratureConfig) -> Result<Self> {
        Self::new(&MatrixKernel::new(d, 0, 0.0)?, cfg)
    }

    pub fn dim(&self) -> usize {
        self.grid.d
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    pub fn homogenized(&self) -> &HomogenizedData {
        &self.hom
    }

    /// Green's function of grad^* Q grad, the subtracted reference.
    pub fn reference(&self) -> &LatticeGreen {
        &self.reference
    }

    pub fn symbol_at(&self, x: &[i64]) -> f64 {
        self.symbol[self.grid.index_of(x)]
    }

    fn check_reach(&self, xs: &[Vec<i64>], margin: i64) -> Result<()> {
        let reach = self.cfg.max_reach() - margin;
        for x in xs {
            if x.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
            }
            if x.iter().any(|c| c.abs() > reach) {
                return Err(Error::Resolution {
                    resolution: self.cfg.resolution,
                    required: format!("|x|_inf <= {reach} at this resolution, got {x:?}"),
                });
            }
        }
        Ok(())
    }

    pub fn values(&self, xs: &[Vec<i64>]) -> Result<Vec<f64>> {
        self.check_reach(xs, 0)?;
        let reference = self.reference.values(xs);
        Ok(xs
            .iter()
            .zip(reference)
            .map(|(x, r)| match &self.split {
                Some((lead, corr)) => {
                    let i = self.grid.index_of(x);
                    r + lead[i] + corr[i]
                }
                None => r + self.table[self.grid.index_of(x)],
            })
            .collect())
    }

    pub fn value(&self, x: &[i64]) -> Result<f64> {
        Ok(self.values(&[x.to_vec()])?[0])
    }

    /// (leading, correction) with leading = int e^{ix.theta}/m_0 for m_0 = <theta, Q theta>
    /// on the fundamental cell.
    pub fn split_values(&self, xs: &[Vec<i64>]) -> Result<Vec<(f64, f64)>> {
        let (lead, corr) = self
            .split
            .as_ref()
            .ok_or_else(|| Error::Config("split tables need the split singularity rule".into()))?;
        self.check_reach(xs, 0)?;
        let reference = self.reference.values(xs);
        Ok(xs
            .iter()
            .zip(reference)
            .map(|(x, r)| {
                let i = self.grid.index_of(x);
                (r + lead[i], corr[i])
            })
            .collect())
    }

    /// grad^alpha G at each x, by finite differences of G or by the Fourier multiplier
    /// according to the configuration.
    pub fn derivative_values(&self, xs: &[Vec<i64>], alpha: &MultiIndex) -> Result<Vec<f64>> {
        if self.cfg.multiplier {
            self.derivative_multiplier(xs, alpha)
        } else {
            self.derivative_differences(xs, alpha)
        }
    }

    pub fn derivative_differences(&self, xs: &[Vec<i64>], alpha: &MultiIndex) -> Result<Vec<f64>> {
        let stencil = difference_stencil(alpha)?;
        let order = alpha.order() as i64;
        self.check_reach(xs, order)?;
        let mut pts = Vec::with_capacity(xs.len() * stencil.len());
        for x in xs {
            for (s, _) in &stencil {
                pts.push(x.iter().zip(s).map(|(a, b)| a + b).collect());
            }
        }
        let v = self.values(&pts)?;
        Ok(v.chunks(stencil.len())
            .map(|c| c.iter().zip(&stencil).map(|(g, (_, w))| g * w).sum())
            .collect())
    }

    /// The reference contributes exact differences of its values (its multiplier form is
    /// the same identity); the grid part is the inverse transform of v^alpha times the
    /// remainder.
    pub fn derivative_multiplier(&self, xs: &[Vec<i64>], alpha: &MultiIndex) -> Result<Vec<f64>> {
        let stencil = difference_stencil(alpha)?;
        let order = alpha.order() as i64;
        self.check_reach(xs, order)?;
        let d = self.dim();
        let mut theta = vec![0.0; d];
        let mut data: Vec<Complex64> = self
            .remainder
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                self.grid.angles_into(i, &mut theta);
                let v = gradient_symbol(&theta);
                let mut f = Complex64::new(r, 0.0);
                for (vj, &a) in v.iter().zip(alpha.exponents()) {
                    f *= vj.powu(a);
                }
                f
            })
            .collect();
        self.grid.inverse(&mut data);
        let mut pts = Vec::with_capacity(xs.len() * stencil.len());
        for x in xs {
            for (s, _) in &stencil {
                pts.push(x.iter().zip(s).map(|(a, b)| a + b).collect::<Vec<i64>>());
            }
        }
        let reference = self.reference.values(&pts);
        Ok(xs
            .iter()
            .enumerate()
            .map(|(p, x)| {
                let r: f64 = reference[p * stencil.len()..(p + 1) * stencil.len()]
                    .iter()
                    .zip(&stencil)
                    .map(|(g, (_, w))| g * w)
                    .sum();
                r + data[self.grid.index_of(x)].re
            })
            .collect())
    }

    /// Per-scale pieces of int e^{ix.theta} F(theta) for F = (m - m_Q)/(m_Q m), the bounded
    /// remainder of the subtraction rule (up to sign).
    pub fn dyadic_probe(&self, xs: &[Vec<i64>]) -> Result<Vec<DyadicProbe>> {
        let f: Vec<f64> = self.remainder.iter().map(|r| -r).collect();
        dyadic_tail_probe(self.grid, &f, self.cfg.depth, xs)
    }
}

/// m on every node of the grid, from FFTs of the embedded kernel.
fn symbol_grid(kdelta: &MatrixKernel, grid: TorusGrid) -> Result<Vec<f64>> {
    let d = grid.d;
    let mut blocks: HashMap<(usize, usize), Vec<Complex64>> = HashMap::new();
    if !kdelta.is_empty() {
        for j in 0..d {
            for k in j..d {
                let mut data = vec![Complex64::default(); grid.len()];
                for (x, m) in kdelta.iter() {
                    data[grid.index_of(x.coords())] += m[j * d + k];
                }
                grid.forward(&mut data);
                blocks.insert((j, k), data);
            }
        }
    }
    let mut theta = vec![0.0; d];
    let mut out = vec![0.0; grid.len()];
    for (i, o) in out.iter_mut().enumerate().skip(1) {
        grid.angles_into(i, &mut theta);
        let v = gradient_symbol(&theta);
        let mut form = laplacian_symbol(&theta);
        for ((j, k), b) in &blocks {
            // K-hat is Hermitian: the (k, j) block is the conjugate of the (j, k) block.
            let z = v[*j].conj() * b[i] * v[*k];
            form += if j == k { z.re } else { 2.0 * z.re };
        }
        if !(form > 0.0) {
            return Err(Error::SymbolVanishes { theta: theta.clone(), value: form });
        }
        *o = form;
    }
    Ok(out)
}

/// v^* Q v = sum_jk Q_jk conj(v_j) v_k.
pub fn periodic_form(q: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let v = gradient_symbol(theta);
    let mut s = 0.0;
    for j in 0..theta.len() {
        for k in 0..theta.len() {
            s += q[(j, k)] * (v[j].conj() * v[k]).re;
        }
    }
    s
}

/// <theta, Q theta> with theta in the fundamental cell [-pi, pi)^d.
pub fn cell_form(q: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let mut s = 0.0;
    for j in 0..theta.len() {
        for k in 0..theta.len() {
            s += q[(j, k)] * theta[j] * theta[k];
        }
    }
    s
}

fn inverse_real(grid: TorusGrid, values: &[f64]) -> Vec<f64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    grid.inverse(&mut data);
    data.into_iter().map(|z| z.re).collect()
}

/// Degree-5 rule on the unit sphere: +-e_i and (+-e_i +- e_j)/sqrt 2.
pub fn sphere_rule(d: usize) -> Vec<(Vec<f64>, f64)> {
    let n = d as f64;
    let mut out = Vec::new();
    let w1 = (4.0 - n) / (2.0 * n * (n + 2.0));
    let w2 = 1.0 / (n * (n + 2.0));
    for i in 0..d {
        for s in [-1.0, 1.0] {
            let mut p = vec![0.0; d];
            p[i] = s;
            out.push((p, w1));
        }
    }
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            for (si, sj) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut p = vec![0.0; d];
                p[i] = si * r;
                p[j] = sj * r;
                out.push((p, w2));
            }
        }
    }
    out
}

/// Spherical mean of lim_{t -> 0} f(t omega) for f with an even expansion
/// f_0(omega) + t^2 f_2(omega) + ..., by Richardson in t.
fn origin_limit(d: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    let t = 0.02;
    let mut theta = vec![0.0; d];
    let mut acc = 0.0;
    for (w, wt) in sphere_rule(d) {
        let mut at = |s: f64| {
            theta.iter_mut().zip(&w).for_each(|(a, b)| *a = s * b);
            f(&theta)
        };
        let (big, small) = (at(t), at(0.5 * t));
        acc += wt * (4.0 * small - big) / 3.0;
    }
    acc
}

/// (shift, weight) pairs of grad^alpha with forward differences.
pub fn difference_stencil(alpha: &MultiIndex) -> Result<Vec<(Vec<i64>, f64)>> {
    let d = alpha.dim();
    let mut stencil: Vec<(Vec<i64>, f64)> = vec![(vec![0; d], 1.0)];
    for (j, &a) in alpha.exponents().iter().enumerate() {
        for _ in 0..a {
            let mut next = Vec::with_capacity(2 * stencil.len());
            for (s, w) in &stencil {
                let mut up = s.clone();
                up[j] += 1;
                next.push((up, *w));
                next.push((s.clone(), -w));
            }
            stencil = next;
        }
    }
    let mut merged: HashMap<Vec<i64>, f64> = HashMap::new();
    for (s, w) in stencil {
        *merged.entry(s).or_insert(0.0) += w;
    }
    let mut out: Vec<_> = merged.into_iter().filter(|(_, w)| *w != 0.0).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Smooth step: 1 on [0, 1], 0 on [2, inf).
fn bump(r: f64) -> f64 {
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let g = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let u = r - 1.0;
    g(1.0 - u) / (g(1.0 - u) + g(u))
}

/// Per-scale contributions at one point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DyadicProbe {
    pub x: Vec<i64>,
    /// f_l for l = 0..L-1: frequencies |theta| ~ sqrt(d) pi 2^{-l}.
    pub scales: Vec<f64>,
    /// Everything inside |theta| <= sqrt(d) pi 2^{1-L}.
    pub remainder: f64,
    pub direct: f64,
}

impl DyadicProbe {
    pub fn total(&self) -> f64 {
        self.scales.iter().sum::<f64>() + self.remainder
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "l,scale,magnitude")?;
        for (l, f) in self.scales.iter().enumerate() {
            writeln!(w, "{l},{:?},{:?}", 2f64.powi(-(l as i32)), f.abs())?;
        }
        Ok(())
    }
}

/// Splits int e^{ix.theta} F(theta) over the partition 1 = sum_l (Phi_l - Phi_{l+1}) + Phi_L
/// with Phi_l(theta) = bump(2^l |theta| / (sqrt(d) pi)), so Phi_0 = 1 on the whole cell.
/// `f` holds F on the nodes of `grid`.
pub fn dyadic_tail_probe(grid: TorusGrid, f: &[f64], depth: usize, xs: &[Vec<i64>]) -> Result<Vec<DyadicProbe>> {
    if f.len() != grid.len() {
        return Err(Error::Probe(format!("symbol table has {} nodes, grid has {}", f.len(), grid.len())));
    }
    if depth == 0 {
        return Err(Error::Probe("depth must be at least 1".into()));
    }
    let d = grid.d;
    let base = (d as f64).sqrt() * PI;
    let mut theta = vec![0.0; d];
    let radius: Vec<f64> = (0..grid.len())
        .map(|i| {
            grid.angles_into(i, &mut theta);
            theta.iter().map(|t| t * t).sum::<f64>().sqrt()
        })
        .collect();
    let phi = |l: usize, r: f64| bump(2f64.powi(l as i32) * r / base);
    let idx: Vec<usize> = xs.iter().map(|x| grid.index_of(x)).collect();
    let at = |weights: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let vals: Vec<f64> = f.iter().zip(&radius).map(|(v, &r)| v * weights(r)).collect();
        let table = inverse_real(grid, &vals);
        idx.iter().map(|&i| table[i]).collect()
    };
    let direct = at(&|_| 1.0);
    let scales: Vec<Vec<f64>> = (0..depth).map(|l| at(&|r| phi(l, r) - phi(l + 1, r))).collect();
    let rest = at(&|r| phi(depth, r));
    Ok(xs
        .iter()
        .enumerate()
        .map(|(p, x)| DyadicProbe {
            x: x.clone(),
            scales: scales.iter().map(|s| s[p]).collect(),
            remainder: rest[p],
            direct: direct[p],
        })
        .collect())
}

pub fn annealed_green(x: &LatticePoint, kdelta: &MatrixKernel, cfg: &QuadratureConfig) -> Result<f64> {
    AnnealedGreen::new(kdelta, cfg)?.value(x.coords())
}

pub fn split_eval(x: &LatticePoint, kdelta: &MatrixKernel, cfg: &QuadratureConfig) -> Result<(f64, f64)> {
    let cfg = cfg.clone().with_rule(SingularityRule::Split);
    Ok(AnnealedGreen::new(kdelta, &cfg)?.split_values(&[x.coords().to_vec()])?[0])
}

pub fn green_derivative(
    x: &LatticePoint,
    alpha: &MultiIndex,
    kdelta: &MatrixKernel,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    if alpha.order() as usize > kdelta.dim() + 1 {
        return Err(Error::MomentOrder { requested: alpha.order() as usize, available: kdelta.dim() + 1 });
    }
    Ok(AnnealedGreen::new(kdelta, cfg)?.derivative_values(&[x.coords().to_vec()], alpha)?[0])
}

/// Green's function of the free lattice Laplacian (no grid involved).
pub fn free_green(x: &LatticePoint) -> Result<f64> {
    check_dim(x.dim())?;
    Ok(LatticeGreen::free(x.dim()).value(x.coords()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::{kdelta_kernel, MomentModel};

    #[test]
    fn stencil_of_second_difference() {
        let s = difference_stencil(&MultiIndex::new(vec![2, 0, 0]).unwrap()).unwrap();
        assert_eq!(s, vec![(vec![0, 0, 0], 1.0), (vec![1, 0, 0], -2.0), (vec![2, 0, 0], 1.0)]);
    }

    #[test]
    fn sphere_rule_is_degree_five() {
        for d in 3..=5 {
            let rule = sphere_rule(d);
            let mean = |f: &dyn Fn(&[f64]) -> f64| rule.iter().map(|(p, w)| w * f(p)).sum::<f64>();
            assert!((mean(&|_| 1.0) - 1.0).abs() < 1e-14);
            assert!((mean(&|p| p[0] * p[0]) - 1.0 / d as f64).abs() < 1e-14);
            let n = d as f64;
            assert!((mean(&|p| p[0].powi(4)) - 3.0 / (n * (n + 2.0))).abs() < 1e-14);
            assert!((mean(&|p| p[0] * p[0] * p[1] * p[1]) - 1.0 / (n * (n + 2.0))).abs() < 1e-14);
        }
    }

    #[test]
    fn free_case_is_exact() {
        let g = AnnealedGreen::free(3, &QuadratureConfig::for_dim(3).with_resolution(32)).unwrap();
        let v = g.value(&[0, 0, 0]).unwrap();
        assert!((v - 0.252731009858663).abs() < 1e-12);
    }

    #[test]
    fn grid_symbol_matches_direct() {
        let k = kdelta_kernel(&MomentModel::rademacher(), 3, 0.15, 3, 3, 32).unwrap();
        let g = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(3).with_resolution(32)).unwrap();
        let grid = TorusGrid::new(3, 32);
        for x in [[1i64, 2, 3], [-5, 0, 7], [16, -16, 3]] {
            let th: Vec<f64> = x.iter().map(|&c| grid.angle(c.rem_euclid(32) as usize)).collect();
            assert!((g.symbol_at(&x) - symbol_m_unchecked(&th, &k)).abs() < 1e-13);
        }
    }

    #[test]
    fn split_and_derivative_paths_agree() {
        let k = kdelta_kernel(&MomentModel::rademacher(), 3, 0.15, 3, 3, 32).unwrap();
        let cfg = QuadratureConfig::for_dim(3).with_resolution(32);
        let sub = AnnealedGreen::new(&k, &cfg).unwrap();
        let spl = AnnealedGreen::new(&k, &cfg.clone().with_rule(SingularityRule::Split)).unwrap();
        let xs = vec![vec![0, 0, 0], vec![3, -1, 2], vec![-7, 4, 0]];
        let a = sub.values(&xs).unwrap();
        let b = spl.split_values(&xs).unwrap();
        for (u, (l, c)) in a.iter().zip(&b) {
            assert!((u - l - c).abs() < 1e-10);
        }
        let alpha = MultiIndex::new(vec![1, 2, 0]).unwrap();
        let fd = sub.derivative_differences(&xs, &alpha).unwrap();
        let mu = sub.derivative_multiplier(&xs, &alpha).unwrap();
        for (u, v) in fd.iter().zip(&mu) {
            assert!((u - v).abs() < 1e-12, "{u} {v}");
        }
    }

    #[test]
    fn rejects_points_beyond_reach() {
        let g = AnnealedGreen::free(3, &QuadratureConfig::for_dim(3).with_resolution(32)).unwrap();
        assert!(matches!(g.value(&[13, 0, 0]), Err(Error::Resolution { .. })));
        assert!(g.value(&[12, 0, 0]).is_ok());
    }
}
