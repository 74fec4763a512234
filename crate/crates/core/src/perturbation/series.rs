//! Exact moment combinatorics for the terms of
//!
//! K = delta m_1 I delta_0 + delta sum_{n>=1} (-delta)^n P s (K P' s)^n,
//!
//! where K is the Helmholtz kernel, P the expectation and P' = I - P.
//! Each term is expanded over coincidence patterns of the n+1 sites and every
//! pattern reduces to convolution chains evaluated by FFT on an N^d torus.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::TorusGrid;
use crate::kernel::MatrixKernel;
use crate::lattice::{check_dim, LatticePoint};
use crate::symbols::projection_grid;

use super::moments::{field_moment, MomentModel};

/// Highest order evaluated exactly.
pub const MAX_ORDER: usize = 3;
/// Admissible contrasts are [0, MAX_CONTRAST).
pub const MAX_CONTRAST: f64 = 0.3;

/// Set partitions of {0..len} as restricted growth strings.
pub(crate) fn set_partitions(len: usize) -> Vec<Vec<usize>> {
    fn grow(cur: &mut Vec<usize>, len: usize, next: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for b in 0..=next {
            cur.push(b);
            grow(cur, len, next.max(b + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::with_capacity(len), len, 0, &mut out);
    out
}

fn block_count(p: &[usize]) -> usize {
    p.iter().max().map_or(0, |m| m + 1)
}

/// pi <= rho: every block of pi lies in a block of rho.
fn refines(pi: &[usize], rho: &[usize]) -> bool {
    let mut map = vec![usize::MAX; block_count(pi)];
    for (a, b) in pi.iter().zip(rho) {
        if map[*a] == usize::MAX {
            map[*a] = *b;
        } else if map[*a] != *b {
            return false;
        }
    }
    true
}

/// Mobius function of the partition lattice on [pi, rho].
fn mobius(pi: &[usize], rho: &[usize]) -> f64 {
    let mut inner: Vec<Vec<usize>> = vec![Vec::new(); block_count(rho)];
    for (a, b) in pi.iter().zip(rho) {
        if !inner[*b].contains(a) {
            inner[*b].push(*a);
        }
    }
    inner
        .iter()
        .map(|blocks| {
            let k = blocks.len();
            let fact: f64 = (1..k).map(|i| i as f64).product();
            if (k - 1) % 2 == 0 {
                fact
            } else {
                -fact
            }
        })
        .product()
}

/// Expectation weight of the operator string when the sites coincide exactly as in `pi`.
fn exact_weight(pi: &[usize], model: &MomentModel) -> Result<f64> {
    let n = pi.len() - 1;
    let nb = block_count(pi);
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        let mut prod = 1.0;
        let mut start = 0;
        for cut in (1..=n + 1).filter(|&i| i == n + 1 || mask & (1 << (i - 1)) != 0) {
            let mut counts = vec![0usize; nb];
            for &b in &pi[start..cut] {
                counts[b] += 1;
            }
            let mult: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
            prod *= field_moment(model, &mult)?;
            start = cut;
        }
        total += if mask.count_ones() % 2 == 0 { prod } else { -prod };
    }
    Ok(total)
}

/// Coefficients c(rho) such that the order-n term is sum_rho c(rho) S(rho), where S(rho)
/// sums the chain over all positions constrained only to agree inside the blocks of rho.
pub(crate) fn pattern_coefficients(n: usize, model: &MomentModel) -> Result<Vec<(Vec<usize>, f64)>> {
    let parts = set_partitions(n + 1);
    let weights: Vec<f64> = parts.iter().map(|p| exact_weight(p, model)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for rho in &parts {
        let c: f64 = parts
            .iter()
            .zip(&weights)
            .filter(|(pi, w)| **w != 0.0 && refines(pi, rho))
            .map(|(pi, w)| w * mobius(pi, rho))
            .sum();
        if c != 0.0 {
            out.push((rho.clone(), c));
        }
    }
    Ok(out)
}

/// A chain segment between consecutive pinned sites: `true` marks a jump between
/// distinct blocks (symbol F), `false` a repeated site (constant K(0)).
type Segment = Vec<bool>;

struct Pattern {
    coeff: f64,
    /// Pinned sites: Some(true) at the output point z, Some(false) at the origin.
    segments: Vec<(Segment, bool, bool)>,
    origin_only: bool,
}

fn decompose(rho: &[usize], coeff: f64) -> Result<Pattern> {
    let n = rho.len() - 1;
    let (bz, bo) = (rho[0], rho[n]);
    let pinned: Vec<usize> = (0..=n).filter(|&i| rho[i] == bz || rho[i] == bo).collect();
    let mut segments = Vec::new();
    for w in pinned.windows(2) {
        let (i, j) = (w[0], w[1]);
        let free = &rho[i + 1..j];
        for (k, b) in free.iter().enumerate() {
            let outside = rho.iter().enumerate().any(|(p, c)| c == b && (p <= i || p >= j));
            let gap = free[k..].iter().position(|c| c != b).map(|g| k + g);
            let reappears = gap.is_some_and(|g| free[g..].contains(b));
            if outside || reappears {
                return Err(Error::SeriesOrder { order: n, max: MAX_ORDER });
            }
        }
        let seg: Segment = (i + 1..=j).map(|e| rho[e - 1] != rho[e]).collect();
        segments.push((seg, rho[i] == bz, rho[j] == bz));
    }
    Ok(Pattern { coeff, segments, origin_only: bz == bo })
}

/// Helmholtz chains on an N^d torus, cached per segment shape.
pub(crate) struct ChainTables {
    grid: TorusGrid,
    symbol: Vec<Vec<Complex64>>,
    k0: Vec<f64>,
    cache: HashMap<Segment, Vec<Vec<f64>>>,
}

impl ChainTables {
    pub(crate) fn new(d: usize, n: usize) -> Self {
        let grid = TorusGrid::new(d, n);
        let symbol = projection_grid(grid);
        let mut k0 = vec![0.0; d * d];
        for (e, plane) in symbol.iter().enumerate() {
            k0[e] = plane.iter().map(|z| z.re).sum::<f64>() / grid.len() as f64;
        }
        Self { grid, symbol, k0, cache: HashMap::new() }
    }

    fn d(&self) -> usize {
        self.grid.d
    }

    fn table(&mut self, seg: &Segment) -> &Vec<Vec<f64>> {
        if !self.cache.contains_key(seg) {
            let d = self.d();
            let len = self.grid.len();
            let mut planes = vec![vec![Complex64::default(); len]; d * d];
            let mut acc = vec![Complex64::default(); d * d];
            let mut tmp = vec![Complex64::default(); d * d];
            for node in 0..len {
                for j in 0..d {
                    for k in 0..d {
                        acc[j * d + k] = if j == k { Complex64::new(1.0, 0.0) } else { Complex64::default() };
                    }
                }
                for &jump in seg {
                    for j in 0..d {
                        for k in 0..d {
                            let mut s = Complex64::default();
                            for l in 0..d {
                                let rhs = if jump {
                                    self.symbol[l * d + k][node]
                                } else {
                                    Complex64::new(self.k0[l * d + k], 0.0)
                                };
                                s += acc[j * d + l] * rhs;
                            }
                            tmp[j * d + k] = s;
                        }
                    }
                    std::mem::swap(&mut acc, &mut tmp);
                }
                for (p, v) in planes.iter_mut().zip(&acc) {
                    p[node] = *v;
                }
            }
            let real = planes
                .into_iter()
                .map(|mut p| {
                    self.grid.inverse(&mut p);
                    p.into_iter().map(|z| z.re).collect()
                })
                .collect();
            self.cache.insert(seg.clone(), real);
        }
        &self.cache[seg]
    }

    fn segment_value(&mut self, seg: &Segment, x: &[i64]) -> Vec<f64> {
        let d = self.d();
        if seg.iter().all(|j| !j) {
            let mut acc = identity(d);
            for _ in seg {
                acc = matmul(&acc, &self.k0, d);
            }
            return acc;
        }
        let idx = self.grid.index_of(x);
        self.table(seg).iter().map(|p| p[idx]).collect()
    }
}

fn identity(d: usize) -> Vec<f64> {
    (0..d * d).map(|e| if e % (d + 1) == 0 { 1.0 } else { 0.0 }).collect()
}

fn matmul(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut c = vec![0.0; d * d];
    for j in 0..d {
        for l in 0..d {
            let v = a[j * d + l];
            for k in 0..d {
                c[j * d + k] += v * b[l * d + k];
            }
        }
    }
    c
}

/// Coefficient of delta (-delta)^n in the series, evaluated on an N^d torus and
/// truncated to |x|_inf <= radius.
pub(crate) fn unit_term(
    n: usize,
    model: &MomentModel,
    radius: i64,
    chains: &mut ChainTables,
) -> Result<MatrixKernel> {
    let d = chains.d();
    let patterns: Vec<Pattern> =
        pattern_coefficients(n, model)?.into_iter().map(|(rho, c)| decompose(&rho, c)).collect::<Result<_>>()?;
    let mut out = MatrixKernel::new(d, radius, 0.0)?;
    for z in LatticePoint::cube(d, radius) {
        let zc = z.coords().to_vec();
        let mut acc = vec![0.0; d * d];
        for p in &patterns {
            if p.origin_only && zc.iter().any(|&c| c != 0) {
                continue;
            }
            let mut prod = identity(d);
            for (seg, from_z, to_z) in &p.segments {
                let disp: Vec<i64> = zc
                    .iter()
                    .map(|&c| (if *from_z { c } else { 0 }) - (if *to_z { c } else { 0 }))
                    .collect();
                prod = matmul(&prod, &chains.segment_value(seg, &disp), d);
            }
            acc.iter_mut().zip(&prod).for_each(|(a, v)| *a += p.coeff * v);
        }
        if acc.iter().any(|&v| v != 0.0) {
            out.insert(z, acc)?;
        }
    }
    Ok(out)
}

/// Unit series terms for one moment model, reusable across contrasts.
#[derive(Clone, Debug)]
pub struct SeriesExpansion {
    model: MomentModel,
    d: usize,
    order: usize,
    radius: i64,
    resolution: usize,
    units: Vec<MatrixKernel>,
}

impl SeriesExpansion {
    pub fn new(model: &MomentModel, d: usize, order: usize, radius: i64, resolution: usize) -> Result<Self> {
        check_dim(d)?;
        if order > MAX_ORDER {
            return Err(Error::SeriesOrder { order, max: MAX_ORDER });
        }
        if radius < 0 || resolution < (2 * radius + 1) as usize {
            return Err(Error::Resolution { resolution, required: format!(">= {}", 2 * radius + 1) });
        }
        let mut chains = ChainTables::new(d, resolution);
        let units = (1..=order)
            .map(|n| unit_term(n, model, radius, &mut chains))
            .collect::<Result<_>>()?;
        Ok(Self { model: model.clone(), d, order, radius, resolution, units })
    }

    pub fn model(&self) -> &MomentModel {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// The order-n term delta (-delta)^n P s (K P' s)^n.
    pub fn term(&self, n: usize, delta: f64) -> Result<MatrixKernel> {
        if n == 0 || n > self.order {
            return Err(Error::SeriesOrder { order: n, max: self.order });
        }
        Ok(self.units[n - 1].scaled(delta * (-delta).powi(n as i32), delta))
    }

    /// Partial sum before symmetrization.
    pub fn raw_kernel(&self, delta: f64) -> Result<MatrixKernel> {
        if !(0.0..MAX_CONTRAST).contains(&delta) {
            return Err(Error::Contrast(delta));
        }
        let mut k = MatrixKernel::new(self.d, self.radius, delta)?;
        if delta == 0.0 {
            return Ok(k);
        }
        let m1 = self.model.moment(1)?;
        if m1 != 0.0 {
            let mut mean = MatrixKernel::new(self.d, self.radius, delta)?;
            mean.insert(LatticePoint::origin(self.d), identity(self.d).iter().map(|v| v * delta * m1).collect())?;
            k = k.plus(&mean);
        }
        for n in 1..=self.order {
            k = k.plus(&self.term(n, delta)?);
        }
        Ok(k)
    }

    /// Symmetrized partial sum of the series at contrast delta.
    pub fn kernel(&self, delta: f64) -> Result<MatrixKernel> {
        Ok(self.raw_kernel(delta)?.symmetrized())
    }
}

pub fn series_term_kernel(
    n: usize,
    model: &MomentModel,
    d: usize,
    delta: f64,
    radius: i64,
    resolution: usize,
) -> Result<MatrixKernel> {
    if n == 0 || n > MAX_ORDER {
        return Err(Error::SeriesOrder { order: n, max: MAX_ORDER });
    }
    if !(0.0..MAX_CONTRAST).contains(&delta) {
        return Err(Error::Contrast(delta));
    }
    if resolution < (2 * radius + 1) as usize {
        return Err(Error::Resolution { resolution, required: format!(">= {}", 2 * radius + 1) });
    }
    check_dim(d)?;
    let mut chains = ChainTables::new(d, resolution);
    Ok(unit_term(n, model, radius, &mut chains)?.scaled(delta * (-delta).powi(n as i32), delta))
}

pub fn kdelta_kernel(
    model: &MomentModel,
    d: usize,
    delta: f64,
    order: usize,
    radius: i64,
    resolution: usize,
) -> Result<MatrixKernel> {
    if !(0.0..MAX_CONTRAST).contains(&delta) {
        return Err(Error::Contrast(delta));
    }
    SeriesExpansion::new(model, d, order, radius, resolution)?.kernel(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbols::HelmholtzTable;

    #[test]
    fn partition_counts() {
        let sizes: Vec<usize> = (1..=5).map(|n| set_partitions(n).len()).collect();
        assert_eq!(sizes, vec![1, 2, 5, 15, 52]);
    }

    #[test]
    fn first_order_is_local() {
        let model = MomentModel::rademacher();
        let k = series_term_kernel(1, &model, 3, 0.1, 3, 16).unwrap();
        assert_eq!(k.len(), 1);
        let m = k.matrix(&LatticePoint::origin(3));
        // Unit trace at every node plus permutation symmetry fixes the diagonal; the
        // off-diagonal entries are equal and nonzero because the d forward bonds of a
        // site share one coefficient.
        for j in 0..3 {
            assert!((m[(j, j)] + 0.01 / 3.0).abs() < 1e-15, "{m}");
        }
        assert!(m[(0, 1)] < -1e-4);
        for (j, l) in [(0, 2), (1, 2), (1, 0), (2, 0), (2, 1)] {
            assert!((m[(j, l)] - m[(0, 1)]).abs() < 1e-15);
        }
    }

    #[test]
    fn vanishing_field_gives_zero_terms() {
        let model = MomentModel::custom(vec![0.0; 6]).unwrap();
        for n in 1..=3 {
            let k = series_term_kernel(n, &model, 3, 0.2, 2, 8).unwrap();
            assert!(k.max_entry() == 0.0);
        }
        assert!(matches!(series_term_kernel(4, &model, 3, 0.2, 2, 8), Err(Error::SeriesOrder { .. })));
    }

    /// Brute force over all site configurations on a 4^3 torus with explicit
    /// expectations over the atoms of a discrete law.
    fn brute_force(n: usize, atoms: &[(f64, f64)], z: &[i64], table: &HelmholtzTable) -> Vec<f64> {
        let d = 3;
        let side = 4i64;
        let sites: Vec<[i64; 3]> =
            (0..64).map(|i| [i / 16, (i / 4) % 4, i % 4]).collect();
        let wrap = |v: i64| v.rem_euclid(side);
        let zz = [wrap(z[0]), wrap(z[1]), wrap(z[2])];
        let mut total = vec![0.0; d * d];
        let interior = n - 1;
        let combos = 64usize.pow(interior as u32);
        for c in 0..combos {
            let mut pos = vec![zz];
            let mut t = c;
            for _ in 0..interior {
                pos.push(sites[t % 64]);
                t /= 64;
            }
            pos.push([0, 0, 0]);
            let expect = |range: std::ops::Range<usize>| -> f64 {
                let mut distinct: Vec<[i64; 3]> = Vec::new();
                for p in &pos[range.clone()] {
                    if !distinct.contains(p) {
                        distinct.push(*p);
                    }
                }
                let k = distinct.len();
                let mut e = 0.0;
                for assign in 0..atoms.len().pow(k as u32) {
                    let mut a = assign;
                    let mut vals = Vec::new();
                    let mut prob = 1.0;
                    for _ in 0..k {
                        vals.push(atoms[a % atoms.len()].0);
                        prob *= atoms[a % atoms.len()].1;
                        a /= atoms.len();
                    }
                    let prod: f64 = pos[range.clone()]
                        .iter()
                        .map(|p| vals[distinct.iter().position(|q| q == p).unwrap()])
                        .product();
                    e += prob * prod;
                }
                e
            };
            let mut w = 0.0;
            for mask in 0u32..(1 << n) {
                let mut prod = 1.0;
                let mut start = 0;
                for cut in (1..=n + 1).filter(|&i| i == n + 1 || mask & (1 << (i - 1)) != 0) {
                    prod *= expect(start..cut);
                    start = cut;
                }
                w += if mask.count_ones() % 2 == 0 { prod } else { -prod };
            }
            if w == 0.0 {
                continue;
            }
            let mut chain = identity(d);
            for e in 1..=n {
                let diff: Vec<i64> = (0..3).map(|j| pos[e - 1][j] - pos[e][j]).collect();
                let k: Vec<f64> = table.at(&diff).transpose().iter().copied().collect();
                chain = matmul(&chain, &k, d);
            }
            total.iter_mut().zip(&chain).for_each(|(a, v)| *a += w * v);
        }
        total
    }

    #[test]
    fn combinatorics_match_brute_force() {
        let table = HelmholtzTable::new(3, 4).unwrap();
        let skewed = vec![(0.6, 0.5), (-0.2, 0.3), (-0.9, 0.2)];
        let skew_moments: Vec<f64> =
            (1..=8).map(|k| skewed.iter().map(|(a, p)| p * f64::powi(*a, k)).sum()).collect();
        let cases = [
            (MomentModel::rademacher(), vec![(1.0, 0.5), (-1.0, 0.5)]),
            (MomentModel::custom(skew_moments).unwrap(), skewed),
        ];
        for (model, atoms) in &cases {
            let mut chains = ChainTables::new(3, 4);
            for n in 1..=3 {
                let k = unit_term(n, model, 1, &mut chains).unwrap();
                for z in LatticePoint::cube(3, 1) {
                    let expect = brute_force(n, atoms, z.coords(), &table);
                    let got = k.matrix(&z);
                    for e in 0..9 {
                        assert!(
                            (got[(e / 3, e % 3)] - expect[e]).abs() < 1e-12,
                            "n={n} z={z} entry {e}: {} vs {}",
                            got[(e / 3, e % 3)],
                            expect[e]
                        );
                    }
                }
            }
        }
    }
}
