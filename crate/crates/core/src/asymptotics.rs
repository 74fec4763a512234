//! Large-|x| expansion of the averaged Green's function in the variable x~ = sigma Q^{-1/2} x:
//!
//! G(x) ~ sum_k U_k(x~/|x~|) |x~|^{2-d-k}.
//!
//! Only U_0 (a constant) and U_1 (from the cubic moments of T) are evaluated; higher terms
//! are probed through residual exponents.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::bessel::LatticeGreen;
use crate::error::{Error, Result};
use crate::gauss::legendre_on;
use crate::kernel::ScalarKernel;
use crate::lattice::{check_dim, LatticePoint, MultiIndex};
use crate::perturbation::HomogenizedData;
use crate::quadrature::difference_stencil;

/// kappa_d = pi^{-d/2} Gamma(d/2 - 1) / 2.
pub fn kappa(d: usize) -> f64 {
    0.5 * PI.powf(-(d as f64) / 2.0) * gamma(d as f64 / 2.0 - 1.0)
}

/// Number of expansion orders controlled: 3 in d = 3, d + 1 above.
pub fn m_d(d: usize) -> u32 {
    if d == 3 {
        3
    } else {
        d as u32 + 1
    }
}

/// x~ = sigma Q^{-1/2} x.
pub fn x_tilde(x: &LatticePoint, h: &HomogenizedData) -> Vec<f64> {
    h.x_tilde(&x.as_f64())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Outcome of fitting the leading constant of the free lattice Green's function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub d: usize,
    /// lim |x|^{d-2} G_free(x), extrapolated along the first axis.
    pub raw: f64,
    pub kappa: f64,
    /// Either 1 or 1/2: the candidate factor closest to raw / kappa.
    pub factor: f64,
}

impl Calibration {
    pub fn constant(&self) -> f64 {
        self.factor * self.kappa
    }

    /// Relative distance of the chosen constant from the raw fit.
    pub fn mismatch(&self) -> f64 {
        (self.constant() - self.raw).abs() / self.raw
    }
}

/// Fits |x|^{d-2} G_free(n e_1) = c + b n^{-2} over n in {16, 32, 64} and picks the
/// candidate c_lead in {kappa_d, kappa_d / 2} nearest to c.
pub fn calibrate_leading(d: usize) -> Result<Calibration> {
    check_dim(d)?;
    let green = LatticeGreen::free(d);
    let ns = [16i64, 32, 64];
    let pts: Vec<Vec<i64>> = ns
        .iter()
        .map(|&n| {
            let mut x = vec![0; d];
            x[0] = n;
            x
        })
        .collect();
    let vals = green.values(&pts);
    let rows: Vec<(f64, f64)> =
        ns.iter().zip(&vals).map(|(&n, g)| ((n as f64).powi(-2), g * (n as f64).powi(d as i32 - 2))).collect();
    let (c, _) = linear_fit(&rows);
    let k = kappa(d);
    let factor = if (c - k).abs() <= (c - 0.5 * k).abs() { 1.0 } else { 0.5 };
    Ok(Calibration { d, raw: c, kappa: k, factor })
}

/// Least-squares intercept and slope of y against x.
fn linear_fit(rows: &[(f64, f64)]) -> (f64, f64) {
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let sxy: f64 = rows.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = rows.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

/// calibration * kappa_d / sigma^2 * |x~|^{2-d}.
pub fn hom_green(x: &[f64], h: &HomogenizedData, calibration: f64) -> f64 {
    let d = h.dim();
    let xt = h.x_tilde(x);
    calibration * kappa(d) / h.sigma().powi(2) * norm(&xt).powi(2 - d as i32)
}

/// grad_j of the calibrated leading term, (2-d) c kappa_d / sigma^2 |x~|^{1-d} <x~, e~_j>/|x~|
/// with e~_j = sigma Q^{-1/2} e_j.
pub fn gradient_leading(x: &[f64], j: usize, h: &HomogenizedData, calibration: f64) -> f64 {
    let d = h.dim();
    let xt = h.x_tilde(x);
    let mut e = vec![0.0; d];
    e[j] = 1.0;
    let et = h.x_tilde(&e);
    let r = norm(&xt);
    let dot: f64 = xt.iter().zip(&et).map(|(a, b)| a * b).sum();
    (2.0 - d as f64) * calibration * kappa(d) / h.sigma().powi(2) * r.powi(1 - d as i32) * dot / r
}

/// Symmetric third-moment tensor M_abc = sum_x T(x) x_a x_b x_c, row-major.
pub fn third_moment(t: &ScalarKernel) -> Vec<f64> {
    let d = t.dim();
    let mut m = vec![0.0; d * d * d];
    for (x, v) in t.iter() {
        let c = x.as_f64();
        for a in 0..d {
            for b in 0..d {
                for e in 0..d {
                    m[(a * d + b) * d + e] += v * c[a] * c[b] * c[e];
                }
            }
        }
    }
    m
}

fn cubic(m: &[f64], d: usize, u: &[f64], v: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                s += m[(a * d + b) * d + c] * u[a] * v[b] * w[c];
            }
        }
    }
    s
}

/// -2/(3 sigma^4 (2 pi)^d).
fn p_prefactor(h: &HomogenizedData) -> f64 {
    -2.0 / (3.0 * h.sigma().powi(4) * (2.0 * PI).powi(h.dim() as i32))
}

/// P(xi) = -(2i / (3 sigma^4 (2 pi)^d)) |xi|^{2d-4} sum_x T(x) (xi.x)^3.
pub fn p_polynomial(xi: &[f64], t: &ScalarKernel, h: &HomogenizedData) -> Complex64 {
    let d = t.dim();
    let c3: f64 = t
        .iter()
        .map(|(x, v)| {
            let s: f64 = x.coords().iter().zip(xi).map(|(&a, b)| a as f64 * b).sum();
            v * s.powi(3)
        })
        .sum();
    Complex64::new(0.0, p_prefactor(h) * norm(xi).powi(2 * d as i32 - 4) * c3)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct U1Estimate {
    pub value: f64,
    /// Difference between the extrapolations from all and from the two finest levels.
    pub spread: f64,
    pub samples: Vec<(f64, f64)>,
}

pub const DEFAULT_EPSILONS: [f64; 3] = [0.01, 0.005, 0.0025];

/// U_1(omega) = int P(xi)/|xi|^{2d} e^{-i omega.xi} dxi, regularized by e^{-eps |xi|^2} and
/// extrapolated to eps = 0.
///
/// With xi = rho xi^ the radial integral is int rho^{d-2} sin(rho a) e^{-eps rho^2} drho for
/// a = omega.xi^, and the angular integral reduces to a in [-1, 1] after averaging the cubic
/// form over the (d-2)-sphere orthogonal to omega.
pub fn u1_eval(omega: &[f64], t: &ScalarKernel, h: &HomogenizedData, epsilons: &[f64]) -> Result<U1Estimate> {
    let d = t.dim();
    if omega.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: omega.len() });
    }
    if (norm(omega) - 1.0).abs() > 1e-12 {
        return Err(Error::Config("u1_eval needs a unit direction".into()));
    }
    if epsilons.len() < 2 {
        return Err(Error::Config("at least two regularization levels are needed".into()));
    }
    let m = third_moment(t);
    let along = cubic(&m, d, omega, omega, omega);
    // sum_b M(omega, e_b, e_b)
    let mut trace = 0.0;
    for b in 0..d {
        let mut e = vec![0.0; d];
        e[b] = 1.0;
        trace += cubic(&m, d, omega, &e, &e);
    }
    let transverse = trace - along;
    if along == 0.0 && transverse == 0.0 {
        let samples = epsilons.iter().map(|&e| (e, 0.0)).collect();
        return Ok(U1Estimate { value: 0.0, spread: 0.0, samples });
    }
    let sphere = 2.0 * PI.powf((d as f64 - 1.0) / 2.0) / gamma((d as f64 - 1.0) / 2.0);
    let slice = |a: f64| a.powi(3) * along + 3.0 * a * (1.0 - a * a) / (d as f64 - 1.0) * transverse;

    let samples: Vec<(f64, f64)> = epsilons
        .iter()
        .map(|&eps| {
            let rho_max = (60.0 / eps).sqrt();
            let (rho, rw) = panel_rule(0.0, rho_max, 400, 16);
            let (a_nodes, aw) = panel_rule(-1.0, 1.0, 200, 16);
            let mut acc = 0.0;
            for (&a, &wa) in a_nodes.iter().zip(&aw) {
                let radial: f64 = rho
                    .iter()
                    .zip(&rw)
                    .map(|(&r, &w)| w * r.powi(d as i32 - 2) * (r * a).sin() * (-eps * r * r).exp())
                    .sum();
                acc += wa * sphere * (1.0 - a * a).powf((d as f64 - 3.0) / 2.0) * slice(a) * radial;
            }
            (eps, p_prefactor(h) * acc)
        })
        .collect();
    let value = richardson(&samples);
    let coarse = richardson(&samples[samples.len() - 2..]);
    Ok(U1Estimate { value, spread: (value - coarse).abs(), samples })
}

fn panel_rule(a: f64, b: f64, panels: usize, per: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / panels as f64;
    let mut x = Vec::with_capacity(panels * per);
    let mut w = Vec::with_capacity(panels * per);
    for p in 0..panels {
        let (xs, ws) = legendre_on(per, a + p as f64 * h, a + (p + 1) as f64 * h);
        x.extend(xs);
        w.extend(ws);
    }
    (x, w)
}

/// Polynomial extrapolation to eps = 0 through all samples (Neville).
fn richardson(samples: &[(f64, f64)]) -> f64 {
    let n = samples.len();
    let mut p: Vec<f64> = samples.iter().map(|s| s.1).collect();
    for k in 1..n {
        for i in 0..n - k {
            let (xi, xk) = (samples[i].0, samples[i + k].0);
            p[i] = (xi * p[i + 1] - xk * p[i]) / (xi - xk);
        }
    }
    p[0]
}

/// Angular profile of one expansion order.
#[derive(Clone, Debug, PartialEq)]
pub enum Angular {
    Constant(f64),
    /// U_1 from the third moments of T: U_1(w) = C (w.t - M(w,w,w)) in d = 3 form, evaluated
    /// by regularized quadrature in general.
    FirstOrder { t: ScalarKernel, epsilons: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionTerm {
    pub order: u32,
    pub angular: Angular,
}

impl ExpansionTerm {
    pub fn leading(h: &HomogenizedData, calibration: f64) -> Self {
        Self { order: 0, angular: Angular::Constant(calibration * kappa(h.dim()) / h.sigma().powi(2)) }
    }

    pub fn first_order(t: &ScalarKernel) -> Self {
        Self { order: 1, angular: Angular::FirstOrder { t: t.clone(), epsilons: DEFAULT_EPSILONS.to_vec() } }
    }

    pub fn radial_exponent(&self, d: usize) -> i32 {
        2 - d as i32 - self.order as i32
    }

    pub fn angular_value(&self, omega: &[f64], h: &HomogenizedData) -> Result<f64> {
        match &self.angular {
            Angular::Constant(c) => Ok(*c),
            Angular::FirstOrder { t, epsilons } => Ok(u1_eval(omega, t, h, epsilons)?.value),
        }
    }
}

/// sum_k U_k(x~/|x~|) |x~|^{2-d-k}.
pub fn expansion_eval(x: &[f64], terms: &[ExpansionTerm], h: &HomogenizedData) -> Result<f64> {
    if terms.windows(2).any(|w| w[0].order > w[1].order) {
        return Err(Error::Config("expansion terms must be sorted by order".into()));
    }
    let xt = h.x_tilde(x);
    let r = norm(&xt);
    let omega: Vec<f64> = xt.iter().map(|v| v / r).collect();
    let mut s = 0.0;
    for term in terms {
        s += term.angular_value(&omega, h)? * r.powi(term.radial_exponent(h.dim()));
    }
    Ok(s)
}

/// Samples along {n u : n in multiples} for an integer direction u.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayProbe {
    pub direction: Vec<i64>,
    pub multiples: Vec<i64>,
    pub values: Vec<f64>,
}

impl RayProbe {
    pub fn new(direction: Vec<i64>, multiples: Vec<i64>) -> Result<Self> {
        if direction.iter().all(|&c| c == 0) {
            return Err(Error::Config("ray direction must be nonzero".into()));
        }
        let len = norm(&direction.iter().map(|&c| c as f64).collect::<Vec<_>>());
        if multiples.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("ray radii must be strictly increasing".into()));
        }
        if multiples.first().is_some_and(|&n| (n as f64) * len < 4.0 - 1e-12) {
            return Err(Error::Config("ray radii must be at least 4".into()));
        }
        Ok(Self { direction, multiples, values: Vec::new() })
    }

    /// Multiples whose radii are nearest to the requested ones.
    pub fn near_radii(direction: Vec<i64>, radii: &[f64]) -> Result<Self> {
        let len = norm(&direction.iter().map(|&c| c as f64).collect::<Vec<_>>());
        let mut multiples: Vec<i64> = radii.iter().map(|r| (r / len).round().max(1.0) as i64).collect();
        multiples.dedup();
        // Rounding may shrink the span; stretch the last multiple to keep the requested ratio.
        if let (Some(&a), Some(&b), Some(&lo), Some(&hi)) =
            (radii.first(), radii.last(), multiples.first(), multiples.last())
        {
            let want = (lo as f64 * b / a).ceil() as i64;
            if want > hi {
                *multiples.last_mut().unwrap() = want;
            }
        }
        Self::new(direction, multiples)
    }

    /// Default directions e_1, e_1 + e_2, e_1 + e_2 + e_3.
    pub fn default_directions(d: usize) -> Vec<Vec<i64>> {
        (1..=3)
            .map(|k| {
                let mut u = vec![0i64; d];
                u[..k].iter_mut().for_each(|c| *c = 1);
                u
            })
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<i64>> {
        self.multiples.iter().map(|&n| self.direction.iter().map(|&c| c * n).collect()).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        let len = norm(&self.direction.iter().map(|&c| c as f64).collect::<Vec<_>>());
        self.multiples.iter().map(|&n| n as f64 * len).collect()
    }

    pub fn with_values(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.multiples.len() {
            return Err(Error::Config("one value per radius is required".into()));
        }
        self.values = values;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualFit {
    pub exponent: f64,
    /// exp(intercept): the fitted |residual| at |x~| = 1.
    pub amplitude: f64,
    pub rms: f64,
    /// Sign of the residuals (all equal, otherwise the fit is rejected).
    pub sign: f64,
}

/// Fits log|value - expansion| against log|x~| along the probe.
pub fn residual_fit(probe: &RayProbe, terms: &[ExpansionTerm], h: &HomogenizedData) -> Result<ResidualFit> {
    if probe.values.len() != probe.multiples.len() {
        return Err(Error::Config("probe has no values".into()));
    }
    let radii = probe.radii();
    if radii.len() < 4 || radii[radii.len() - 1] < 4.0 * radii[0] - 1e-9 {
        return Err(Error::Config("residual fits need at least 4 radii spanning a factor 4".into()));
    }
    let mut rows = Vec::new();
    let mut signs = Vec::new();
    for (x, v) in probe.points().iter().zip(&probe.values) {
        let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        let r = v - expansion_eval(&xf, terms, h)?;
        if r == 0.0 {
            return Err(Error::NoiseFloor);
        }
        signs.push(r.signum());
        rows.push((norm(&h.x_tilde(&xf)).ln(), r.abs().ln()));
    }
    if signs.iter().any(|&s| s != signs[0]) {
        return Err(Error::NoiseFloor);
    }
    Ok(fit_rows(&rows, signs[0]))
}

fn fit_rows(rows: &[(f64, f64)], sign: f64) -> ResidualFit {
    let (intercept, slope) = linear_fit(rows);
    let rms = (rows.iter().map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / rows.len() as f64).sqrt();
    ResidualFit { exponent: slope, amplitude: intercept.exp(), rms, sign }
}

/// Log-log slope of |y| against r.
pub fn decay_exponent(radii: &[f64], values: &[f64]) -> Result<f64> {
    if radii.len() != values.len() || radii.len() < 2 {
        return Err(Error::Config("need matching radii and values".into()));
    }
    if values.iter().any(|v| *v == 0.0) || values.iter().any(|v| v.signum() != values[0].signum()) {
        return Err(Error::NoiseFloor);
    }
    let rows: Vec<(f64, f64)> = radii.iter().zip(values).map(|(r, v)| (r.ln(), v.abs().ln())).collect();
    Ok(linear_fit(&rows).1)
}

/// Decay exponent of grad^alpha [U_k(x~/|x~|) |x~|^{2-d-k}] along the ray, with the
/// derivative taken by forward differences on the lattice; expected 2 - d - k - |alpha|.
pub fn derivative_term_order_check(
    alpha: &MultiIndex,
    term: &ExpansionTerm,
    h: &HomogenizedData,
    probe: &RayProbe,
) -> Result<f64> {
    let d = h.dim();
    if alpha.order() + term.order > m_d(d) {
        return Err(Error::MomentOrder { requested: (alpha.order() + term.order) as usize, available: m_d(d) as usize });
    }
    let stencil = difference_stencil(alpha)?;
    let single = std::slice::from_ref(term);
    let mut values = Vec::new();
    for x in probe.points() {
        let mut s = 0.0;
        for (shift, w) in &stencil {
            let p: Vec<f64> = x.iter().zip(shift).map(|(a, b)| (a + b) as f64).collect();
            s += w * expansion_eval(&p, single, h)?;
        }
        values.push(s);
    }
    decay_exponent(&probe.radii(), &values)
}

/// Q rebuilt from its eigendecomposition; used to check the leading term is basis free.
pub fn reconstructed(h: &HomogenizedData) -> Result<HomogenizedData> {
    let eig = nalgebra::SymmetricEigen::new(h.q().clone());
    let q = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
    HomogenizedData::new(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_values() {
        assert!((kappa(3) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!((kappa(4) - 1.0 / (2.0 * PI * PI)).abs() < 1e-15);
        assert!((kappa(5) - 0.25 / (PI * PI)).abs() < 1e-15);
        assert_eq!([m_d(3), m_d(4), m_d(5)], [3, 5, 6]);
    }

    #[test]
    fn calibration_picks_half() {
        for d in 3..=5 {
            let c = calibrate_leading(d).unwrap();
            assert_eq!(c.factor, 0.5);
            assert!(c.mismatch() < 1e-3, "{c:?}");
        }
    }

    #[test]
    fn isotropic_scaling_cancels() {
        let h = HomogenizedData::new(DMatrix::identity(3, 3) * 4.0).unwrap();
        assert!((h.sigma() - 2.0).abs() < 1e-15);
        let xt = h.x_tilde(&[1.0, -2.0, 3.0]);
        assert!((xt[0] - 1.0).abs() < 1e-15 && (xt[1] + 2.0).abs() < 1e-15 && (xt[2] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn regularized_u1_matches_closed_form_in_three_dimensions() {
        // A skewed walk: U_1(w) = 3 pi^2 K (w.t - M(w,w,w)) with K = -2/(3 sigma^4 (2 pi)^3).
        let mut t = ScalarKernel::new(3, 2).unwrap();
        t.insert(LatticePoint::new(vec![1, 0, 0]).unwrap(), 0.3);
        t.insert(LatticePoint::new(vec![-1, 1, 0]).unwrap(), 0.2);
        t.insert(LatticePoint::new(vec![0, -1, 2]).unwrap(), 0.1);
        t.insert(LatticePoint::origin(3), 0.4);
        let h = HomogenizedData::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.1, 0.9, 1.0]))).unwrap();
        let w = [0.6, -0.48, 0.64];
        let est = u1_eval(&w, &t, &h, &DEFAULT_EPSILONS).unwrap();
        let m = third_moment(&t);
        let along = cubic(&m, 3, &w, &w, &w);
        let mut tr = 0.0;
        for b in 0..3 {
            let mut e = [0.0; 3];
            e[b] = 1.0;
            tr += cubic(&m, 3, &w, &e, &e);
        }
        let k = -2.0 / (3.0 * h.sigma().powi(4) * (2.0 * PI).powi(3));
        let exact = 3.0 * PI * PI * k * (tr - along);
        assert!((est.value - exact).abs() < 1e-6 * exact.abs(), "{} vs {exact}", est.value);
        let neg = u1_eval(&[-0.6, 0.48, -0.64], &t, &h, &DEFAULT_EPSILONS).unwrap();
        assert!((neg.value + est.value).abs() < 1e-12);
    }

    #[test]
    fn ray_probe_validation() {
        assert!(RayProbe::new(vec![1, 0, 0], vec![2, 8]).is_err());
        assert!(RayProbe::new(vec![1, 0, 0], vec![8, 8]).is_err());
        let p = RayProbe::near_radii(vec![1, 1, 1], &[8.0, 12.0, 16.0, 24.0, 32.0]).unwrap();
        assert_eq!(p.multiples, vec![5, 7, 9, 14, 20]);
    }
}
