//! Sampling oracle: draw i.i.d. site fields, solve grad^*(1 + delta sigma) grad G = delta_0 on
//! a finite box, and average.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bessel::LatticeGreen;
use crate::error::{Error, Result};
use crate::lattice::{check_dim, Boundary, LatticeField, MultiIndex};
use crate::perturbation::Law;
use crate::quadrature::difference_stencil;
use crate::symbols::gradient_symbol;

/// A field on the box [lo, lo + L - 1]^d with lo = -floor(L/2).
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSample {
    pub d: usize,
    pub extent: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub index: u64,
}

impl FieldSample {
    pub fn lo(&self) -> i64 {
        -((self.extent / 2) as i64)
    }
}

fn draw(law: &Law, rng: &mut ChaCha8Rng) -> Result<f64> {
    match law {
        Law::Rademacher => Ok(if rng.random::<bool>() { 1.0 } else { -1.0 }),
        Law::Uniform => Ok(2.0 * rng.random::<f64>() - 1.0),
        Law::TwoPoint { p } => {
            let atoms = law.atoms().expect("two-point law has atoms");
            Ok(if rng.random::<f64>() < *p { atoms[0].0 } else { atoms[1].0 })
        }
        Law::Custom => Err(Error::UnknownLaw("custom laws have no sampler".into())),
    }
}

/// Sample `index` of the stream keyed by `seed`; each index owns its own ChaCha stream.
pub fn sample_field(law: &Law, d: usize, extent: usize, seed: u64, index: u64) -> Result<FieldSample> {
    check_dim(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let len = extent.pow(d as u32);
    let values = (0..len).map(|_| draw(law, &mut rng)).collect::<Result<Vec<f64>>>()?;
    Ok(FieldSample { d, extent, values, seed, index })
}

/// Neighbour tables of an L^d box; `OUTSIDE` marks a Dirichlet neighbour.
#[derive(Clone, Debug)]
struct Geometry {
    d: usize,
    extent: usize,
    boundary: Boundary,
    plus: Vec<Vec<u32>>,
    minus: Vec<Vec<u32>>,
    /// Wrapped index of x - e_j, used for the conductance of the bond entering x.
    minus_wrapped: Vec<Vec<u32>>,
}

const OUTSIDE: u32 = u32::MAX;

impl Geometry {
    fn new(d: usize, extent: usize, boundary: Boundary) -> Self {
        let len = extent.pow(d as u32);
        let mut plus = vec![vec![0u32; len]; d];
        let mut minus = vec![vec![0u32; len]; d];
        let mut minus_wrapped = vec![vec![0u32; len]; d];
        let mut c = vec![0usize; d];
        for i in 0..len {
            let mut r = i;
            for j in (0..d).rev() {
                c[j] = r % extent;
                r /= extent;
            }
            for j in 0..d {
                let stride = extent.pow((d - 1 - j) as u32);
                let up = if c[j] + 1 < extent { i + stride } else { i + stride - extent * stride };
                let down = if c[j] > 0 { i - stride } else { i + (extent - 1) * stride };
                let inside_up = c[j] + 1 < extent;
                let inside_down = c[j] > 0;
                let periodic = boundary == Boundary::Periodic;
                plus[j][i] = if periodic || inside_up { up as u32 } else { OUTSIDE };
                minus[j][i] = if periodic || inside_down { down as u32 } else { OUTSIDE };
                minus_wrapped[j][i] = down as u32;
            }
        }
        Self { d, extent, boundary, plus, minus, minus_wrapped }
    }

    fn len(&self) -> usize {
        self.extent.pow(self.d as u32)
    }

    fn lo(&self) -> i64 {
        -((self.extent / 2) as i64)
    }

    fn index(&self, x: &[i64]) -> Option<usize> {
        let lo = self.lo();
        let mut idx = 0;
        for &c in x {
            let k = c - lo;
            let k = if self.boundary == Boundary::Periodic {
                k.rem_euclid(self.extent as i64)
            } else if k < 0 || k >= self.extent as i64 {
                return None;
            } else {
                k
            };
            idx = idx * self.extent + k as usize;
        }
        Some(idx)
    }
}

/// grad^* (1 + delta sigma) grad on the box: the bond (x, x + e_j) carries 1 + delta sigma(x).
struct RandomOperator<'a> {
    geo: &'a Geometry,
    conductance: Vec<f64>,
}

impl RandomOperator<'_> {
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let g = self.geo;
        let a = &self.conductance;
        for (i, o) in out.iter_mut().enumerate() {
            let ui = u[i];
            let mut s = 0.0;
            for j in 0..g.d {
                let up = g.plus[j][i];
                let un = if up == OUTSIDE { 0.0 } else { u[up as usize] };
                s += a[i] * (ui - un);
                let dn = g.minus[j][i];
                let ud = if dn == OUTSIDE { 0.0 } else { u[dn as usize] };
                s += a[g.minus_wrapped[j][i] as usize] * (ui - ud);
            }
            *o = s;
        }
    }
}

/// grad^* Q grad with constant Q and zero extension outside the box (Dirichlet only).
struct ConstantOperator<'a> {
    geo: &'a Geometry,
    q: DMatrix<f64>,
    offsets: Vec<(Vec<i64>, f64)>,
}

impl<'a> ConstantOperator<'a> {
    fn new(geo: &'a Geometry, q: &DMatrix<f64>) -> Self {
        let d = geo.d;
        let mut acc: std::collections::BTreeMap<Vec<i64>, f64> = Default::default();
        for j in 0..d {
            for k in 0..d {
                let w = q[(j, k)];
                // grad_j^* grad_k u(x) = u(x - e_j + e_k) - u(x - e_j) - u(x + e_k) + u(x)
                let mut a = vec![0i64; d];
                a[j] -= 1;
                a[k] += 1;
                let mut b = vec![0i64; d];
                b[j] -= 1;
                let mut c = vec![0i64; d];
                c[k] += 1;
                for (o, s) in [(a, w), (b, -w), (c, -w), (vec![0i64; d], w)] {
                    *acc.entry(o).or_insert(0.0) += s;
                }
            }
        }
        let offsets = acc.into_iter().filter(|(_, w)| *w != 0.0).collect();
        Self { geo, q: q.clone(), offsets }
    }

    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let g = self.geo;
        let d = g.d;
        let lo = g.lo();
        let mut x = vec![0i64; d];
        let mut y = vec![0i64; d];
        for (i, o) in out.iter_mut().enumerate() {
            let mut r = i;
            for j in (0..d).rev() {
                x[j] = (r % g.extent) as i64 + lo;
                r /= g.extent;
            }
            let mut s = 0.0;
            for (off, w) in &self.offsets {
                y.iter_mut().zip(&x).zip(off).for_each(|((t, a), b)| *t = a + b);
                if let Some(k) = g.index(&y) {
                    s += w * u[k];
                }
            }
            *o = s;
        }
        let _ = &self.q;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxProblem {
    pub field: FieldSample,
    pub delta: f64,
    pub boundary: Boundary,
    pub source: Vec<i64>,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub field: LatticeField,
    pub iterations: usize,
    pub relative_residual: f64,
}

pub const DEFAULT_TOL: f64 = 1e-10;

pub fn iteration_cap(extent: usize) -> usize {
    (10.0 * (extent as f64).powf(1.5)).ceil() as usize
}

/// Conjugate gradients from zero; for periodic boxes every vector is kept mean free.
fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    tol: f64,
    cap: usize,
    periodic: bool,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = rhs.len();
    let project = |v: &mut [f64]| {
        if periodic {
            let m = v.iter().sum::<f64>() / n as f64;
            v.iter_mut().for_each(|a| *a -= m);
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = rhs.to_vec();
    project(&mut r);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 1..=cap {
        apply(&p, &mut ap);
        project(&mut ap);
        let alpha = rr / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(a, b)| *a += alpha * b);
        r.iter_mut().zip(&ap).for_each(|(a, b)| *a -= alpha * b);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            // Confirm with the true residual.
            let mut ax = vec![0.0; n];
            apply(&x, &mut ax);
            let mut res: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            project(&mut res);
            let true_rel = dot(&res, &res).sqrt() / bnorm;
            if true_rel <= tol {
                project(&mut x);
                return Ok((x, it, true_rel));
            }
            r = res;
            p = r.clone();
            rr = dot(&r, &r);
            continue;
        }
        let beta = rr_new / rr;
        p.iter_mut().zip(&r).for_each(|(a, b)| *a = b + beta * *a);
        rr = rr_new;
    }
    Err(Error::NotConverged { iterations: cap, residual: (rr.sqrt() / bnorm) })
}

fn source_rhs(geo: &Geometry, source: &[i64]) -> Result<Vec<f64>> {
    let idx = geo
        .index(source)
        .ok_or_else(|| Error::Config(format!("source {source:?} lies outside the box")))?;
    let mut rhs = vec![0.0; geo.len()];
    rhs[idx] = 1.0;
    if geo.boundary == Boundary::Periodic {
        let m = 1.0 / geo.len() as f64;
        rhs.iter_mut().for_each(|v| *v -= m);
    }
    Ok(rhs)
}

fn to_field(geo: &Geometry, values: Vec<f64>) -> Result<LatticeField> {
    LatticeField::from_values(vec![geo.lo(); geo.d], vec![geo.extent; geo.d], geo.boundary, values)
}

fn solve_on(geo: &Geometry, p: &BoxProblem, tol: f64) -> Result<Solution> {
    if !(0.0..1.0).contains(&p.delta) {
        return Err(Error::Contrast(p.delta));
    }
    let op = RandomOperator { geo, conductance: p.field.values.iter().map(|s| 1.0 + p.delta * s).collect() };
    let rhs = source_rhs(geo, &p.source)?;
    let (x, iterations, relative_residual) = conjugate_gradient(
        |u, o| op.apply(u, o),
        &rhs,
        tol,
        iteration_cap(geo.extent),
        geo.boundary == Boundary::Periodic,
    )?;
    Ok(Solution { field: to_field(geo, x)?, iterations, relative_residual })
}

/// Solves L_omega u = delta_source (mean-corrected on periodic boxes).
pub fn solve_box(p: &BoxProblem, tol: f64) -> Result<Solution> {
    if p.field.values.iter().any(|s| s.abs() > 1.0) {
        return Err(Error::Config("field values must lie in [-1, 1]".into()));
    }
    let geo = Geometry::new(p.field.d, p.field.extent, p.boundary);
    solve_on(&geo, p, tol)
}

/// Dirichlet Green's function of grad^* Q grad on the box, source at the origin.
pub fn constant_box_green(q: &DMatrix<f64>, extent: usize, tol: f64) -> Result<LatticeField> {
    let d = q.nrows();
    let geo = Geometry::new(d, extent, Boundary::ZeroExtension);
    let op = ConstantOperator::new(&geo, q);
    let rhs = source_rhs(&geo, &vec![0; d])?;
    let (x, _, _) = conjugate_gradient(|u, o| op.apply(u, o), &rhs, tol, iteration_cap(extent), false)?;
    to_field(&geo, x)
}

/// L_omega u evaluated on a field (for residual and energy checks).
pub fn apply_operator(field: &FieldSample, delta: f64, boundary: Boundary, u: &LatticeField) -> Result<LatticeField> {
    let geo = Geometry::new(field.d, field.extent, boundary);
    let op = RandomOperator { geo: &geo, conductance: field.values.iter().map(|s| 1.0 + delta * s).collect() };
    let mut out = vec![0.0; geo.len()];
    op.apply(u.values(), &mut out);
    to_field(&geo, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub law: Law,
    pub d: usize,
    pub delta: f64,
    pub extent: usize,
    pub boundary: Boundary,
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl McConfig {
    pub fn new(law: Law, d: usize, delta: f64, extent: usize, boundary: Boundary, samples: usize, seed: u64) -> Self {
        Self { law, d, delta, extent, boundary, samples, seed, tol: DEFAULT_TOL }
    }

    fn check_points(&self, points: &[Vec<i64>], reach: i64) -> Result<()> {
        let half = (self.extent / 2) as i64;
        let margin = if self.boundary == Boundary::ZeroExtension { (self.extent as f64 / 4.0).ceil() as i64 } else { 0 };
        for x in points {
            if x.len() != self.d {
                return Err(Error::DimensionMismatch { expected: self.d, found: x.len() });
            }
            if x.iter().any(|c| c.abs() + reach > half - margin) {
                return Err(Error::Config(format!(
                    "point {x:?} is closer than {margin} sites to the boundary of the {} box",
                    self.extent
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    /// Samples whose solve failed and were left out.
    pub failed: usize,
}

/// Index-ordered pairwise sum: the result depends only on the sequence, not on scheduling.
fn pairwise(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise(&v[..n / 2]) + pairwise(&v[n / 2..]),
    }
}

fn summarize(rows: &[Vec<f64>], width: usize, failed: usize) -> Vec<EstimatorResult> {
    let n = rows.len();
    (0..width)
        .map(|k| {
            let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let mean = pairwise(&col) / n as f64;
            let dev: Vec<f64> = col.iter().map(|v| (v - mean).powi(2)).collect();
            let var = if n > 1 { pairwise(&dev) / (n - 1) as f64 } else { 0.0 };
            EstimatorResult { mean, stderr: (var / n as f64).sqrt(), n, failed }
        })
        .collect()
}

/// Solves every sample with the source at the origin and records `observe(solution)`.
/// Samples run in parallel; per-sample outputs are reduced in index order.
pub fn run_samples<F>(cfg: &McConfig, width: usize, observe: F) -> Result<(Vec<EstimatorResult>, McStats)>
where
    F: Fn(&LatticeField) -> Vec<f64> + Sync,
{
    check_dim(cfg.d)?;
    if cfg.samples == 0 {
        return Err(Error::Config("at least one sample is needed".into()));
    }
    let geo = Geometry::new(cfg.d, cfg.extent, cfg.boundary);
    let outcomes: Vec<Result<Option<(Vec<f64>, usize)>>> = (0..cfg.samples as u64)
        .into_par_iter()
        .map(|index| {
            let field = sample_field(&cfg.law, cfg.d, cfg.extent, cfg.seed, index)?;
            let p = BoxProblem { field, delta: cfg.delta, boundary: cfg.boundary, source: vec![0; cfg.d] };
            match solve_on(&geo, &p, cfg.tol) {
                Ok(s) => Ok(Some((observe(&s.field), s.iterations))),
                Err(Error::NotConverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(cfg.samples);
    let mut iterations = Vec::with_capacity(cfg.samples);
    let mut failed = 0;
    for o in outcomes {
        match o? {
            Some((r, it)) => {
                rows.push(r);
                iterations.push(it);
            }
            None => failed += 1,
        }
    }
    if rows.is_empty() {
        return Err(Error::NotConverged { iterations: iteration_cap(cfg.extent), residual: f64::NAN });
    }
    let stats = McStats {
        mean_iterations: iterations.iter().sum::<usize>() as f64 / iterations.len() as f64,
        max_iterations: iterations.iter().copied().max().unwrap_or(0),
    };
    Ok((summarize(&rows, width, failed), stats))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McStats {
    pub mean_iterations: f64,
    pub max_iterations: usize,
}

/// Sample means of G_omega(x, 0).
pub fn estimate_annealed_green(cfg: &McConfig, points: &[Vec<i64>]) -> Result<Vec<EstimatorResult>> {
    estimate_derivative(cfg, points, &MultiIndex::zero(cfg.d))
}

/// Sample means of grad^alpha G_omega(x, 0), differenced per sample.
pub fn estimate_derivative(cfg: &McConfig, points: &[Vec<i64>], alpha: &MultiIndex) -> Result<Vec<EstimatorResult>> {
    let stencil = difference_stencil(alpha)?;
    cfg.check_points(points, alpha.order() as i64)?;
    let pts = points.to_vec();
    let (est, _) = run_samples(cfg, points.len(), move |u| {
        pts.iter()
            .map(|x| {
                stencil
                    .iter()
                    .map(|(s, w)| {
                        let y: Vec<i64> = x.iter().zip(s).map(|(a, b)| a + b).collect();
                        w * u.get(&y)
                    })
                    .sum()
            })
            .collect()
    })?;
    Ok(est)
}

/// Estimate of v^* K-hat v at theta = 2 pi k / L, with its imaginary part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormEstimate {
    pub frequency: Vec<i64>,
    pub theta: Vec<f64>,
    pub green_hat: EstimatorResult,
    pub green_hat_imag: EstimatorResult,
    pub form: EstimatorResult,
}

/// v^* K-hat v = 1/G-hat - |v|^2 from the periodic-box average of G-hat(theta); the
/// standard error follows from the delta method.
pub fn estimate_kdelta_form(cfg: &McConfig, frequencies: &[Vec<i64>]) -> Result<Vec<FormEstimate>> {
    if cfg.boundary != Boundary::Periodic {
        return Err(Error::Config("the quadratic-form estimator needs a periodic box".into()));
    }
    let l = cfg.extent as f64;
    let thetas: Vec<Vec<f64>> = frequencies
        .iter()
        .map(|k| {
            if k.len() != cfg.d || k.iter().all(|&c| c.rem_euclid(cfg.extent as i64) == 0) {
                return Err(Error::Config(format!("frequency {k:?} must be a nonzero {}-vector", cfg.d)));
            }
            Ok(k.iter().map(|&c| 2.0 * std::f64::consts::PI * c as f64 / l).collect())
        })
        .collect::<Result<_>>()?;
    let th = thetas.clone();
    let (est, _) = run_samples(cfg, 2 * thetas.len(), move |u| {
        let mut out = Vec::with_capacity(2 * th.len());
        for t in &th {
            let mut s = Complex64::default();
            for (i, &v) in u.values().iter().enumerate() {
                let x = u.point(i);
                let ph: f64 = x.coords().iter().zip(t).map(|(&a, b)| a as f64 * b).sum();
                s += Complex64::from_polar(v, -ph);
            }
            out.push(s.re);
            out.push(s.im);
        }
        out
    })?;
    Ok(frequencies
        .iter()
        .zip(&thetas)
        .enumerate()
        .map(|(i, (k, t))| {
            let re = est[2 * i].clone();
            let im = est[2 * i + 1].clone();
            let v2: f64 = gradient_symbol(t).iter().map(|z| z.norm_sqr()).sum();
            let form = EstimatorResult {
                mean: 1.0 / re.mean - v2,
                stderr: re.stderr / (re.mean * re.mean),
                n: re.n,
                failed: re.failed,
            };
            FormEstimate { frequency: k.clone(), theta: t.clone(), green_hat: re, green_hat_imag: im, form }
        })
        .collect())
}

/// Expected Dirichlet-box bias G^Q_box(x) - G^Q(x) of the homogenized constant-coefficient
/// problem, subtracted from box estimates to compare with infinite-volume values.
pub fn box_bias(q: &DMatrix<f64>, extent: usize, points: &[Vec<i64>]) -> Result<Vec<f64>> {
    let boxed = constant_box_green(q, extent, 1e-12)?;
    let free = LatticeGreen::with_matrix(q)?.values(points);
    Ok(points.iter().zip(free).map(|(x, g)| boxed.get(x) - g).collect())
}

/// Runs `f` on a pool with the given number of workers (0 = rayon default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_are_reproducible_and_bounded() {
        let a = sample_field(&Law::TwoPoint { p: 0.7 }, 3, 5, 42, 7).unwrap();
        let b = sample_field(&Law::TwoPoint { p: 0.7 }, 3, 5, 42, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_field(&Law::TwoPoint { p: 0.7 }, 3, 5, 42, 8).unwrap();
        assert_ne!(a.values, c.values);
        assert!(a.values.iter().all(|v| v.abs() <= 1.0));
        assert!(sample_field(&Law::Custom, 3, 5, 1, 0).is_err());
    }

    #[test]
    fn solver_residual_energy_and_linearity() {
        let field = sample_field(&Law::Uniform, 3, 9, 3, 0).unwrap();
        for boundary in [Boundary::ZeroExtension, Boundary::Periodic] {
            let p = BoxProblem { field: field.clone(), delta: 0.3, boundary, source: vec![1, 0, -2] };
            let s = solve_box(&p, 1e-11).unwrap();
            assert!(s.relative_residual <= 1e-11);
            let lu = apply_operator(&field, 0.3, boundary, &s.field).unwrap();
            let geo = Geometry::new(3, 9, boundary);
            let rhs = source_rhs(&geo, &p.source).unwrap();
            let energy: f64 = lu.values().iter().zip(s.field.values()).map(|(a, b)| a * b).sum();
            let work: f64 = rhs.iter().zip(s.field.values()).map(|(a, b)| a * b).sum();
            assert!((energy - work).abs() < 1e-9 * work.abs());
        }
    }

    #[test]
    fn constant_operator_matches_random_operator_at_zero_contrast() {
        let q = DMatrix::identity(3, 3);
        let a = constant_box_green(&q, 9, 1e-12).unwrap();
        let field = sample_field(&Law::Rademacher, 3, 9, 0, 0).unwrap();
        let p = BoxProblem { field, delta: 0.0, boundary: Boundary::ZeroExtension, source: vec![0; 3] };
        let b = solve_box(&p, 1e-12).unwrap().field;
        for (u, v) in a.values().iter().zip(b.values()) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn pairwise_sum_is_order_fixed() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        assert_eq!(pairwise(&v), pairwise(&v.clone()));
    }
}
