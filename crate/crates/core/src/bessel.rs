//! Green's functions of constant-coefficient nearest-neighbour lattice operators,
//! computed from the heat-kernel representation
//!
//! G(x) = int_0^inf prod_j e^{-2 q_j t} I_{|x_j|}(2 q_j t) dt,
//!
//! which inverts the symbol sum_j 2 q_j (1 - cos theta_j).

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::gauss::{legendre, legendre_on};

/// e^{-z} I_k(z) for k = 0..=kmax by Miller's backward recurrence.
pub fn scaled_bessel_i(kmax: usize, z: f64) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = kmax + 30 + (15.0 * z.sqrt()).ceil() as usize;
    let (mut f_hi, mut f) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        // f = f_k, f_hi = f_{k+1}
        if k <= kmax {
            out[k] = f;
        }
        norm += 2.0 * f;
        let f_lo = f_hi + 2.0 * k as f64 / z * f;
        f_hi = f;
        f = f_lo;
        if f.abs() > 1e250 {
            f *= 1e-250;
            f_hi *= 1e-250;
            norm *= 1e-250;
            out.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    out[0] = f;
    norm += f;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Per-axis exponents (a_j, b_j) of a monomial prod_j v_j^{a_j} conj(v_j)^{b_j}.
type Monomial = Vec<(u32, u32)>;

/// Green's function of the constant-coefficient lattice operator grad^* Q grad, i.e. the
/// inverse Fourier transform of 1 / (v^* Q v).
///
/// Writing v^* Q v = m_D + D with m_D the diagonal part, 1/(m_D + D) is expanded as
/// sum_p (-D)^p / m_D^{p+1}; each term is a separable heat-kernel integral
/// int t^p/p! D^p e^{-t m_D} dt, so only one-dimensional Bessel data is needed.
#[derive(Clone, Debug)]
pub struct LatticeGreen {
    alpha: Vec<f64>,
    /// terms[p]: monomials of D^p with coefficients.
    terms: Vec<Vec<(Monomial, f64)>>,
}

const TAIL_TERMS: usize = 10;
/// Relative size of the neglected part of the off-diagonal expansion.
const EXPANSION_TOL: f64 = 1e-14;
const MAX_EXPANSION: usize = 8;
/// Above this argument the difference tables come from direct quadrature in theta.
const Z_SWITCH: f64 = 2000.0;

impl LatticeGreen {
    /// Green's function of the plain lattice Laplacian.
    pub fn free(d: usize) -> Self {
        Self::diagonal(vec![1.0; d])
    }

    /// Green's function of sum_j q_j grad_j^* grad_j with q_j > 0.
    pub fn diagonal(q: Vec<f64>) -> Self {
        assert!(q.iter().all(|&v| v > 0.0));
        let d = q.len();
        Self { alpha: q, terms: vec![vec![(vec![(0, 0); d], 1.0)]] }
    }

    pub fn with_matrix(q: &DMatrix<f64>) -> Result<Self> {
        let d = q.nrows();
        let alpha: Vec<f64> = (0..d).map(|j| q[(j, j)]).collect();
        if alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::NotPositiveDefinite(alpha.iter().cloned().fold(f64::INFINITY, f64::min)));
        }
        let off = DMatrix::from_fn(d, d, |j, k| if j == k { 0.0 } else { 0.5 * (q[(j, k)] + q[(k, j)]).abs() });
        let amin = alpha.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = SymmetricEigen::new(off).eigenvalues.max() / amin;
        if ratio == 0.0 {
            return Ok(Self::diagonal(alpha));
        }
        if ratio >= 0.25 {
            return Err(Error::Config(format!("off-diagonal part of Q too large for the expansion (ratio {ratio:.3})")));
        }
        let mut order = 1;
        while ratio.powi(order as i32 + 1) / (1.0 - ratio) > EXPANSION_TOL && order < MAX_EXPANSION {
            order += 1;
        }
        let mut terms: Vec<Vec<(Monomial, f64)>> = vec![vec![(vec![(0, 0); d], 1.0)]];
        for p in 1..=order {
            let mut next: BTreeMap<Monomial, f64> = BTreeMap::new();
            for (mono, c) in &terms[p - 1] {
                for j in 0..d {
                    for k in 0..d {
                        let qjk = 0.5 * (q[(j, k)] + q[(k, j)]);
                        if j == k || qjk == 0.0 {
                            continue;
                        }
                        let mut m = mono.clone();
                        m[j].1 += 1;
                        m[k].0 += 1;
                        *next.entry(m).or_insert(0.0) += c * qjk;
                    }
                }
            }
            terms.push(next.into_iter().collect());
        }
        Ok(Self { alpha, terms })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    /// Number of off-diagonal correction orders kept.
    pub fn expansion_order(&self) -> usize {
        self.terms.len() - 1
    }

    pub fn value(&self, x: &[i64]) -> f64 {
        self.values(&[x.to_vec()])[0]
    }

    pub fn values(&self, xs: &[Vec<i64>]) -> Vec<f64> {
        let d = self.dim();
        if xs.is_empty() {
            return Vec::new();
        }
        let order = self.expansion_order();
        let max_exp = order as u32;
        let nmax = xs.iter().flat_map(|x| x.iter().map(|c| c.unsigned_abs())).max().unwrap_or(0) as usize;
        let reach = nmax + 2 * order;
        let amin = self.alpha.iter().cloned().fold(f64::INFINITY, f64::min);
        let t_end = (1e4f64).max(50.0 * (reach * reach) as f64) / amin;

        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let (x0, w0) = legendre_on(24, 0.0, 1.0);
        nodes.extend(x0);
        weights.extend(w0);
        let panels = (t_end.ln() / 0.5).ceil() as usize;
        let h = t_end.ln() / panels as f64;
        for p in 0..panels {
            let (u, w) = legendre_on(20, p as f64 * h, (p + 1) as f64 * h);
            for (ui, wi) in u.into_iter().zip(w) {
                let t = ui.exp();
                nodes.push(t);
                weights.push(wi * t);
            }
        }

        let mut acc = vec![0.0; xs.len()];
        let mut tables: Vec<DiffTable> = Vec::with_capacity(d);
        for (&t, &w) in nodes.iter().zip(&weights) {
            tables.clear();
            for j in 0..d {
                if j > 0 && self.alpha[j] == self.alpha[j - 1] {
                    let prev = tables[j - 1].clone();
                    tables.push(prev);
                } else {
                    tables.push(DiffTable::new(2.0 * self.alpha[j] * t, nmax, max_exp));
                }
            }
            for (a, x) in acc.iter_mut().zip(xs) {
                let mut total = 0.0;
                let mut tp = 1.0;
                for (p, terms) in self.terms.iter().enumerate() {
                    if p > 0 {
                        tp *= -t / p as f64;
                    }
                    let mut s = 0.0;
                    for (mono, c) in terms {
                        let mut prod = *c;
                        for j in 0..d {
                            prod *= tables[j].get(mono[j], x[j]);
                        }
                        s += prod;
                    }
                    total += tp * s;
                }
                *a += w * total;
            }
        }

        for (a, x) in acc.iter_mut().zip(xs) {
            *a += self.tail(x, t_end);
        }
        acc
    }

    /// Integral over [t_end, inf) from products of Hankel expansions.
    fn tail(&self, x: &[i64], t_end: f64) -> f64 {
        let d = self.dim();
        let half = d as f64 / 2.0;
        let mut total = 0.0;
        let mut fact = 1.0;
        for (p, terms) in self.terms.iter().enumerate() {
            if p > 0 {
                fact *= p as f64;
            }
            let kmax = p + TAIL_TERMS;
            let mut coeffs = vec![0.0; kmax];
            for (mono, c) in terms {
                let mut series = vec![0.0; kmax];
                series[0] = *c;
                let mut prefactor = 1.0;
                for j in 0..d {
                    let two_q = 2.0 * self.alpha[j];
                    prefactor /= (2.0 * std::f64::consts::PI * two_q).sqrt();
                    let (a, b) = mono[j];
                    let axis: Vec<f64> = (0..kmax)
                        .map(|k| hankel_difference(x[j], a, b, k) / two_q.powi(k as i32))
                        .collect();
                    let mut next = vec![0.0; kmax];
                    for u in 0..kmax {
                        if series[u] == 0.0 {
                            continue;
                        }
                        for v in 0..kmax - u {
                            next[u + v] += series[u] * axis[v];
                        }
                    }
                    series = next;
                }
                coeffs.iter_mut().zip(&series).for_each(|(s, v)| *s += prefactor * v);
            }
            // Coefficients below t^{-p} vanish identically: D^p annihilates low-degree polynomials.
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            for (k, c) in coeffs.iter().enumerate().skip(p) {
                let e = half + (k - p) as f64 - 1.0;
                total += sign / fact * c * t_end.powf(-e) / e;
            }
        }
        total
    }
}

/// e^{-z} (grad^a grad^{*b} I_.)(n) for |n| <= nmax and a, b <= max_exp.
#[derive(Clone, Debug)]
struct DiffTable {
    nmax: i64,
    span: usize,
    values: Vec<f64>,
}

impl DiffTable {
    fn new(z: f64, nmax: usize, max_exp: u32) -> Self {
        let e = max_exp as usize;
        let span = e + 1;
        let width = 2 * nmax + 1;
        let mut values = vec![0.0; span * span * width];
        if z < Z_SWITCH || e == 0 {
            let base = scaled_bessel_i(nmax + 2 * e, z);
            let s = |n: i64| base[n.unsigned_abs() as usize];
            for a in 0..=e {
                for b in 0..=e {
                    for (i, n) in (-(nmax as i64)..=nmax as i64).enumerate() {
                        let mut v = 0.0;
                        for u in 0..=a {
                            for l in 0..=b {
                                let sign = if (a - u + b - l) % 2 == 0 { 1.0 } else { -1.0 };
                                v += sign * binom(a, u) * binom(b, l) * s(n + u as i64 - l as i64);
                            }
                        }
                        values[(a * span + b) * width + i] = v;
                    }
                }
            }
        } else {
            // (1/2pi) int e^{i n th} (e^{i th} - 1)^a (e^{-i th} - 1)^b e^{-z(1 - cos th)} dth
            // over the window where the Gaussian factor exceeds e^{-40}.
            let th_c = (1.0 - 40.0 / z).acos();
            let width_panel = (2.0 / z.sqrt()).min(2.0 / (nmax as f64 + e as f64 + 1.0));
            let panels = (th_c / width_panel).ceil() as usize;
            let (gx, gw) = legendre(10);
            let hp = th_c / panels as f64;
            let mut th = Vec::new();
            let mut wt = Vec::new();
            for p in 0..panels {
                for (x, w) in gx.iter().zip(&gw) {
                    th.push(hp * (p as f64 + 0.5 * (x + 1.0)));
                    wt.push(0.5 * hp * w);
                }
            }
            for (&t, &w) in th.iter().zip(&wt) {
                let g = w * (-2.0 * z * (0.5 * t).sin().powi(2)).exp() / std::f64::consts::PI;
                let up = Complex64::new(t.cos() - 1.0, t.sin());
                let dn = up.conj();
                let mut pa = Complex64::new(g, 0.0);
                for a in 0..=e {
                    let mut pab = pa;
                    for b in 0..=e {
                        let row = (a * span + b) * width;
                        let mut ph = Complex64::from_polar(1.0, -(nmax as f64) * t);
                        let step = Complex64::from_polar(1.0, t);
                        for i in 0..width {
                            values[row + i] += (pab * ph).re;
                            ph *= step;
                        }
                        pab *= dn;
                    }
                    pa *= up;
                }
            }
        }
        Self { nmax: nmax as i64, span, values }
    }

    fn get(&self, (a, b): (u32, u32), n: i64) -> f64 {
        let width = (2 * self.nmax + 1) as usize;
        self.values[((a as usize) * self.span + b as usize) * width + (n + self.nmax) as usize]
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// (grad^a grad^{*b} c_k)(n) for the Hankel coefficient c_k viewed as a polynomial in n.
fn hankel_difference(n: i64, a: u32, b: u32, k: usize) -> f64 {
    let mut v = 0.0;
    for u in 0..=a as usize {
        for l in 0..=b as usize {
            let sign = if (a as usize - u + b as usize - l) % 2 == 0 { 1.0 } else { -1.0 };
            let m = (n + u as i64 - l as i64).unsigned_abs();
            v += sign * binom(a as usize, u) * binom(b as usize, l) * hankel_coeff(m, k);
        }
    }
    v
}

fn hankel_coeff(n: u64, k: usize) -> f64 {
    let mu = 4.0 * (n * n) as f64;
    (1..=k).fold(1.0, |c, i| -c * (mu - ((2 * i - 1) as f64).powi(2)) / (i as f64 * 8.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;
    use std::f64::consts::PI;

    #[test]
    fn scaled_bessel_matches_series() {
        for &z in &[1e-3, 0.3, 2.0, 7.5] {
            let s = scaled_bessel_i(6, z);
            for (n, &v) in s.iter().enumerate() {
                let mut term = (z / 2.0).powi(n as i32) / gamma(n as f64 + 1.0);
                let mut sum = 0.0;
                for k in 0..80 {
                    sum += term;
                    term *= (z / 2.0).powi(2) / ((k + 1) as f64 * (k + 1 + n) as f64);
                }
                let expect = sum * (-z).exp();
                assert!((v - expect).abs() <= 1e-14 * expect.max(1e-300), "n={n} z={z}");
            }
        }
    }

    #[test]
    fn large_argument_matches_hankel() {
        let z = 4000.0;
        let s = scaled_bessel_i(3, z);
        for n in 0..4u64 {
            let h: f64 = (0..6).map(|k| hankel_coeff(n, k) / z.powi(k as i32)).sum::<f64>()
                / (2.0 * PI * z).sqrt();
            assert!((s[n as usize] - h).abs() < 1e-15);
        }
    }

    #[test]
    fn origin_value_matches_watson_closed_form() {
        // Watson's integral for the simple cubic lattice divided by the coordination number 6:
        // G(0) = (sqrt 6 / (192 pi^3)) Gamma(1/24) Gamma(5/24) Gamma(7/24) Gamma(11/24).
        let w = 6f64.sqrt() / (192.0 * PI.powi(3))
            * gamma(1.0 / 24.0)
            * gamma(5.0 / 24.0)
            * gamma(7.0 / 24.0)
            * gamma(11.0 / 24.0);
        let g = LatticeGreen::free(3).value(&[0, 0, 0]);
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        assert!((g - 0.2527310098586).abs() < 1e-12);
    }

    #[test]
    fn satisfies_lattice_equation() {
        for d in 3..=5 {
            let green = LatticeGreen::free(d);
            let mut pts = vec![vec![0i64; d]];
            for j in 0..d {
                for s in [-1, 1] {
                    let mut e = vec![0i64; d];
                    e[j] = s;
                    pts.push(e);
                }
            }
            let v = green.values(&pts);
            let lap = 2.0 * d as f64 * v[0] - v[1..].iter().sum::<f64>();
            assert!((lap - 1.0).abs() < 1e-12, "d={d}: {lap}");
        }
        let aniso = LatticeGreen::diagonal(vec![1.3, 0.8, 1.1]);
        let x = [2i64, -1, 3];
        let mut lap = 0.0;
        for (j, &q) in [1.3, 0.8, 1.1].iter().enumerate() {
            let mut p = x;
            let mut m = x;
            p[j] += 1;
            m[j] -= 1;
            lap += q * (2.0 * aniso.value(&x) - aniso.value(&p) - aniso.value(&m));
        }
        assert!(lap.abs() < 1e-12);
    }

    #[test]
    fn full_matrix_satisfies_lattice_equation() {
        let q = DMatrix::from_row_slice(3, 3, &[1.0, -0.04, 0.02, -0.04, 0.9, -0.03, 0.02, -0.03, 1.1]);
        let green = LatticeGreen::with_matrix(&q).unwrap();
        assert!(green.expansion_order() > 2);
        for x in [[0i64, 0, 0], [1, 0, 0], [9, -4, 6]] {
            let mut pts = Vec::new();
            let mut weights = Vec::new();
            for j in 0..3 {
                for k in 0..3 {
                    let shift = |dj: i64, dk: i64| {
                        let mut p = x.to_vec();
                        p[j] += dj;
                        p[k] += dk;
                        p
                    };
                    // grad_j^* grad_k G(x) = G(x - e_j + e_k) - G(x - e_j) - G(x + e_k) + G(x)
                    for (p, w) in [(shift(-1, 1), 1.0), (shift(-1, 0), -1.0), (shift(0, 1), -1.0), (shift(0, 0), 1.0)] {
                        pts.push(p);
                        weights.push(q[(j, k)] * w);
                    }
                }
            }
            let v = green.values(&pts);
            let lap: f64 = v.iter().zip(&weights).map(|(a, b)| a * b).sum();
            let expect = if x == [0, 0, 0] { 1.0 } else { 0.0 };
            assert!((lap - expect).abs() < 1e-11, "{x:?}: {lap}");
        }
        // Reduces to the separable case when Q is diagonal.
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.3, 0.8, 1.1]));
        let a = LatticeGreen::with_matrix(&diag).unwrap().value(&[2, -1, 3]);
        let b = LatticeGreen::diagonal(vec![1.3, 0.8, 1.1]).value(&[2, -1, 3]);
        assert_eq!(a, b);
    }

    #[test]
    fn far_field_asymptote() {
        let x = [40i64, 17, 9];
        let r2: f64 = x.iter().map(|&c| (c * c) as f64).sum();
        let r = r2.sqrt();
        let quartic: f64 = x.iter().map(|&c| (c as f64).powi(4)).sum::<f64>() / (r2 * r2);
        let approx = 1.0 / (4.0 * PI * r) + (5.0 * quartic - 3.0) / (32.0 * PI * r.powi(3));
        let g = LatticeGreen::free(3).value(&x);
        assert!((g - approx).abs() < 1e-8, "{g} vs {approx}");
    }
}
