//! Acceptance criteria 1-9, grouped into the suites run by `annealed-green verify`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::asymptotics::{
    calibrate_leading, decay_exponent, gradient_leading, hom_green, residual_fit, u1_eval, x_tilde, ExpansionTerm,
    RayProbe, DEFAULT_EPSILONS,
};
use crate::error::{Error, Result};
use crate::kernel::MatrixKernel;
use crate::lattice::{Boundary, LatticePoint, MultiIndex};
use crate::montecarlo::{box_bias, run_samples, with_workers, McConfig};
use crate::perturbation::{
    aperiodicity_check, first_moment, kdelta_kernel, q_matrix, t_kernel, HomogenizedData, Law, MomentModel,
    SeriesExpansion,
};
use crate::quadrature::{difference_stencil, free_green, AnnealedGreen, DyadicProbe, QuadratureConfig, SingularityRule};
use crate::symbols::{cs_functions, gradient_symbol, helmholtz_symbol, t_hat, TorusPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// Exploratory outcome; never fails a suite.
    Report,
    /// Too few samples for a 3-stderr statement.
    InsufficientSamples,
}

impl Status {
    pub fn is_success(self) -> bool {
        matches!(self, Status::Pass | Status::Report)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: String,
    pub passed: bool,
    /// Exploratory checks are reported but do not decide the status.
    pub exploratory: bool,
}

fn le(name: impl Into<String>, value: f64, limit: f64) -> Check {
    Check { name: name.into(), value, limit: format!("<= {limit:e}"), passed: value <= limit, exploratory: false }
}

fn holds(name: impl Into<String>, ok: bool) -> Check {
    Check { name: name.into(), value: if ok { 1.0 } else { 0.0 }, limit: "true".into(), passed: ok, exploratory: false }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub title: String,
    pub status: Status,
    pub checks: Vec<Check>,
    pub seconds: f64,
    pub notes: Vec<String>,
}

impl CriterionReport {
    fn new(id: u8, title: &str, checks: Vec<Check>, notes: Vec<String>, start: Instant) -> Self {
        let binding = checks.iter().filter(|c| !c.exploratory);
        let status = if binding.clone().all(|c| c.passed) {
            if checks.iter().any(|c| c.exploratory && !c.passed) {
                Status::Report
            } else {
                Status::Pass
            }
        } else {
            Status::Fail
        };
        Self { id, title: title.into(), status, checks, seconds: start.elapsed().as_secs_f64(), notes }
    }

    /// One line: id, status and the failing (or all) checks.
    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Report => "REPORT",
            Status::InsufficientSamples => "FAIL (insufficient samples)",
        };
        let mut shown: Vec<String> = self
            .checks
            .iter()
            .filter(|c| self.status == Status::Pass || !c.passed)
            .map(|c| format!("{}={:.3e} ({})", c.name, c.value, c.limit))
            .collect();
        if shown.len() > 8 {
            let more = shown.len() - 6;
            shown.truncate(6);
            shown.push(format!("+{more} more"));
        }
        format!("criterion {}: {tag} [{:.1}s] {} | {}", self.id, self.seconds, self.title, shown.join("; "))
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Contrast used by the structural checks.
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { delta: 0.15, samples: 2000, seed: 1, workers: 0 }
    }
}

impl VerifyOptions {
    pub fn from_config(cfg: &RunConfig, workers: usize) -> Self {
        Self { delta: cfg.delta, samples: cfg.mc.samples, seed: cfg.seed, workers }
    }
}

pub const SUITES: [(&str, &[u8]); 4] =
    [("structural", &[1, 2, 9]), ("quadrature", &[3]), ("expansion", &[4, 5, 6, 8]), ("oracle", &[7])];

pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Vec<CriterionReport>> {
    let ids = SUITES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, ids)| *ids)
        .ok_or_else(|| Error::Config(format!("unknown suite `{name}`")))?;
    ids.iter().map(|&i| criterion(i, opts)).collect()
}

pub fn criterion(id: u8, opts: &VerifyOptions) -> Result<CriterionReport> {
    match id {
        1 => structural(opts),
        2 => delta_scaling(),
        3 => quadrature_suite(),
        4 => leading_order(),
        5 => derivative_decay(),
        6 => gradient_formula(),
        7 => monte_carlo(opts),
        8 => first_order_term(),
        9 => tscan_reproducible(),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    }
}

const D: usize = 3;
const DELTA: f64 = 0.15;

fn series(model: &MomentModel) -> Result<SeriesExpansion> {
    SeriesExpansion::new(model, D, 3, 3, 32)
}

fn rademacher_kernel(delta: f64) -> Result<MatrixKernel> {
    kdelta_kernel(&MomentModel::rademacher(), D, delta, 3, 3, 32)
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn structural(opts: &VerifyOptions) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let thetas: Vec<TorusPoint> = (0..1000)
        .map(|_| TorusPoint::new((0..D).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()))
        .collect::<Result<_>>()?;
    let (mut idem, mut trace, mut herm) = (0.0f64, 0.0f64, 0.0f64);
    for t in thetas.iter().filter(|t| !t.is_zero()) {
        let f = helmholtz_symbol(t)?;
        idem = idem.max((&f * &f - &f).norm());
        trace = trace.max((f.trace() - 1.0).norm());
        herm = herm.max((&f - f.adjoint()).norm());
    }
    let k = rademacher_kernel(opts.delta)?;
    let h = q_matrix(&k)?;
    let t = t_kernel(&k);
    let total = t.total();
    let first = first_moment(&t).iter().map(|a| a * a).sum::<f64>().sqrt();
    let ser = series(&MomentModel::rademacher())?;
    let mut aperiodic = true;
    for delta in [0.0, 0.05, 0.1, 0.15] {
        aperiodic &= aperiodicity_check(&t_kernel(&ser.kernel(delta)?)).holds;
    }
    let cs = thetas
        .iter()
        .map(|th| {
            let (c, s) = cs_functions(th, &t);
            let z = (1.0 - t_hat(th, &t)).norm_sqr();
            (c * c + s * s - z).abs()
        })
        .fold(0.0, f64::max);
    let checks = vec![
        le("F^2-F", idem, 1e-12),
        le("trF-1", trace, 1e-12),
        le("F-F*", herm, 1e-12),
        le("K(x)^T-K(-x)", k.symmetry_defect(), 1e-10),
        le("Q-Q^T", (h.q() - h.q().transpose()).norm(), 1e-12),
        le("|sum T-1|", (total - 1.0).abs(), 0.0),
        le("|sum xT|", first, 1e-12),
        holds("aperiodic", aperiodic),
        le("c^2+s^2-|1-T^|^2", cs, 1e-12),
    ];
    Ok(CriterionReport::new(1, "structural identities (d=3)", checks, vec![], start))
}

fn delta_scaling() -> Result<CriterionReport> {
    let start = Instant::now();
    let ser = series(&MomentModel::rademacher())?;
    let deltas: Vec<f64> = (1..=10).map(|k| 0.02 * k as f64).collect();
    let mut max_entry = Vec::new();
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); D];
    for &delta in &deltas {
        let k = ser.kernel(delta)?;
        max_entry.push(k.max_entry());
        let h = q_matrix(&k)?;
        let mut ev = h.eigenvalues().to_vec();
        ev.sort_by(f64::total_cmp);
        for (r, l) in ratios.iter_mut().zip(ev) {
            r.push((l - 1.0).abs() / (delta * delta));
        }
    }
    let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ly: Vec<f64> = max_entry.iter().map(|m| m.ln()).collect();
    let slope = fit_slope(&lx, &ly);
    let c = ratios.iter().flatten().copied().fold(0.0, f64::max);
    // A single C explains every eigenvalue only if |lambda - 1| / delta^2 stays level in delta.
    let drift = ratios
        .iter()
        .map(|r| r.iter().copied().fold(0.0, f64::max) / r.iter().copied().fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let checks = vec![
        le("|max-entry exponent - 2|", (slope - 2.0).abs(), 0.2),
        le("C", c, 10.0),
        le("max/min of |lambda-1|/delta^2", drift, 1.5),
    ];
    Ok(CriterionReport::new(2, "contrast scaling of K and Q", checks, vec![format!("exponent {slope:.4}, C {c:.4}")], start))
}

/// Envelope constants C_x = max_l |f_l(x)| / E_l(x), one per regime.
fn envelope_spread(probes: &[DyadicProbe]) -> (f64, f64) {
    let d = D as i32;
    let mut near = Vec::new();
    let mut far = Vec::new();
    for p in probes {
        let r = p.x.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
        let (mut cn, mut cf) = (0.0f64, 0.0f64);
        for (l, f) in p.scales.iter().enumerate() {
            let s = 2f64.powi(-(l as i32));
            if 1.0 / s <= r {
                cn = cn.max(f.abs() / ((r * s).powi(-d) * s.powi(d - 1)));
            } else {
                cf = cf.max(f.abs() / s.powi(d - 1));
            }
        }
        if cn > 0.0 {
            near.push(cn);
        }
        if cf > 0.0 {
            far.push(cf);
        }
    }
    let spread = |mut v: Vec<f64>| {
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        v[v.len() - 1] / v[v.len() / 2]
    };
    (spread(near), spread(far))
}

fn quadrature_suite() -> Result<CriterionReport> {
    let start = Instant::now();
    let k = rademacher_kernel(DELTA)?;
    let origin = vec![0i64; D];
    let mut free0 = Vec::new();
    let mut g0 = Vec::new();
    for n in [32, 64, 128] {
        let cfg = QuadratureConfig::for_dim(D).with_resolution(n);
        free0.push(AnnealedGreen::free(D, &cfg)?.value(&origin)?);
        g0.push(AnnealedGreen::new(&k, &cfg)?.value(&origin)?);
    }
    let steps = |v: &[f64]| (v[1] - v[0]).abs().max((v[2] - v[1]).abs());
    let cfg = QuadratureConfig::for_dim(D);
    let g = AnnealedGreen::new(&k, &cfg)?;
    let split = AnnealedGreen::new(&k, &cfg.clone().with_rule(SingularityRule::Split))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<Vec<i64>> = (0..50)
        .map(|_| loop {
            let x: Vec<i64> = (0..D).map(|_| rng.random_range(-32..=32)).collect();
            if x.iter().map(|c| c * c).sum::<i64>() <= 32 * 32 {
                break x;
            }
        })
        .collect();
    let neg: Vec<Vec<i64>> = xs.iter().map(|x| x.iter().map(|c| -c).collect()).collect();
    let direct = g.values(&xs)?;
    let even = direct.iter().zip(g.values(&neg)?).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let parts = split.split_values(&xs)?;
    let consistency = direct.iter().zip(&parts).map(|(a, (l, c))| (a - l - c).abs()).fold(0.0, f64::max);
    let probe_points = vec![vec![2, 0, 0], vec![4, 0, 0], vec![3, 3, 0], vec![8, 0, 0], vec![5, 5, 5]];
    let probes = g.dyadic_probe(&probe_points)?;
    let partition = probes.iter().map(|p| (p.total() - p.direct).abs()).fold(0.0, f64::max);
    let (near, far) = envelope_spread(&probes);
    let watson = 0.252_731_009_858_6;
    let checks = vec![
        le("free G(0) refinement step", steps(&free0), 1e-5),
        le("|free G(0) - 0.252731|", (free0[2] - watson).abs(), 1e-5),
        le("G(0) refinement step at delta=0.15", steps(&g0), 1e-5),
        le("|G(x)-G(-x)|", even, 1e-10),
        le("|lead+corr-direct|", consistency, 1e-8),
        le("|sum f_l - direct|", partition, 1e-8),
        le("envelope spread 2^l<=|x|", near, 10.0),
        le("envelope spread 2^l>|x|", far, 10.0),
    ];
    let notes = vec![format!("free G(0) {free0:?}"), format!("G(0) at delta=0.15 {g0:?}")];
    Ok(CriterionReport::new(3, "quadrature suite (d=3)", checks, notes, start))
}

const RAY_RADII: [f64; 5] = [8.0, 12.0, 16.0, 24.0, 32.0];

fn leading_order() -> Result<CriterionReport> {
    let start = Instant::now();
    let cal = calibrate_leading(D)?;
    let cfg = QuadratureConfig::for_dim(D);
    let mut checks = Vec::new();
    let mut notes = vec![format!("calibration factor {} (raw {:.6}, kappa {:.6})", cal.factor, cal.raw, cal.kappa)];
    for delta in [0.0, DELTA] {
        let k = rademacher_kernel(delta)?;
        let g = AnnealedGreen::new(&k, &cfg)?;
        let h = g.homogenized().clone();
        let terms = vec![ExpansionTerm::leading(&h, cal.factor)];
        for u in RayProbe::default_directions(D) {
            let probe = RayProbe::near_radii(u.clone(), &RAY_RADII)?;
            let values = g.values(&probe.points())?;
            let fit = residual_fit(&probe.with_values(values)?, &terms, &h)?;
            checks.push(le(format!("exponent delta={delta} ray {u:?}"), fit.exponent, -(D as f64 - 1.0) + 0.3));
        }
    }
    let id = HomogenizedData::identity(D);
    for x in [vec![64i64, 0, 0], vec![37, 37, 37]] {
        let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        let exact = free_green(&LatticePoint::new(x.clone())?)?;
        let rel = (hom_green(&xf, &id, cal.factor) / exact - 1.0).abs();
        notes.push(format!("G_free{x:?} = {exact:.8e}"));
        checks.push(le(format!("calibrated constant at {x:?}"), rel, 0.015));
    }
    Ok(CriterionReport::new(4, "leading-order asymptotics", checks, notes, start))
}

/// Sup of |grad^alpha G|(1 + |c|)^{d-2+|alpha|} over the shells [4,8), [8,16), [16,32], where
/// c = x + alpha/2 is the midpoint of the forward-difference stencil. The log-slope across
/// shells must stay below 0.1.
fn derivative_decay() -> Result<CriterionReport> {
    let start = Instant::now();
    let k = rademacher_kernel(DELTA)?;
    let g = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(D))?;
    let mut pts: Vec<Vec<i64>> = Vec::new();
    for dir in [[1i64, 0, 0], [1, 1, 0], [1, 1, 1], [2, 1, 1], [3, 2, 1]] {
        let len = (dir.iter().map(|c| c * c).sum::<i64>() as f64).sqrt();
        pts.extend((1..=32).filter(|&m| (4.0..=32.0).contains(&(m as f64 * len))).map(|m| dir.map(|c| c * m).to_vec()));
    }
    let alphas: Vec<MultiIndex> = MultiIndex::up_to(D, 4).into_iter().filter(|a| a.order() > 0).collect();
    // One batched evaluation for every stencil point.
    let mut needed = std::collections::BTreeSet::new();
    let stencils: Vec<Vec<(Vec<i64>, f64)>> = alphas.iter().map(difference_stencil).collect::<Result<_>>()?;
    for st in &stencils {
        for x in &pts {
            for (s, _) in st {
                needed.insert(x.iter().zip(s).map(|(a, b)| a + b).collect::<Vec<i64>>());
            }
        }
    }
    let needed: Vec<Vec<i64>> = needed.into_iter().collect();
    let table: std::collections::HashMap<Vec<i64>, f64> = needed.iter().cloned().zip(g.values(&needed)?).collect();
    let mut checks = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (alpha, st) in alphas.iter().zip(&stencils) {
        let power = D as i32 - 2 + alpha.order() as i32;
        let mut sup = [0.0f64; 3];
        for x in &pts {
            let v: f64 = st
                .iter()
                .map(|(s, w)| w * table[&x.iter().zip(s).map(|(a, b)| a + b).collect::<Vec<i64>>()])
                .sum();
            let r = x.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
            let mid = x
                .iter()
                .zip(alpha.exponents())
                .map(|(&a, &e)| (a as f64 + 0.5 * e as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            let shell = if r < 8.0 { 0 } else if r < 16.0 { 1 } else { 2 };
            sup[shell] = sup[shell].max(v.abs() * (1.0 + mid).powi(power));
        }
        let slope = fit_slope(&[6f64.ln(), 12f64.ln(), 24f64.ln()], &sup.map(f64::ln));
        worst = worst.max(slope);
        checks.push(le(format!("slope alpha={:?}", alpha.exponents()), slope, 0.1));
    }
    let notes = vec![format!("{} points on 5 rays, largest shell slope {worst:.3}", pts.len())];
    Ok(CriterionReport::new(5, "derivative decay |alpha| <= 4", checks, notes, start))
}

fn gradient_formula() -> Result<CriterionReport> {
    let start = Instant::now();
    let k = rademacher_kernel(DELTA)?;
    let g = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(D))?;
    let h = g.homogenized().clone();
    let cal = calibrate_leading(D)?;
    let probe = RayProbe::near_radii(vec![1, 0, 0], &RAY_RADII)?;
    let dv = g.derivative_values(&probe.points(), &MultiIndex::unit(D, 0))?;
    let diff: Vec<f64> = probe
        .points()
        .iter()
        .zip(&dv)
        .map(|(x, v)| v - gradient_leading(&x.iter().map(|&c| c as f64).collect::<Vec<_>>(), 0, &h, cal.factor))
        .collect();
    let slope = decay_exponent(&probe.radii(), &diff)?;
    let checks = vec![le("difference exponent", slope, -(D as f64) + 0.3)];
    Ok(CriterionReport::new(6, "leading-order gradient", checks, vec![], start))
}

/// Samples below this count cannot support a 3-stderr statement.
pub const MIN_SAMPLES: usize = 100;

pub const MC_POINTS: [[i64; 3]; 5] = [[0, 0, 0], [1, 0, 0], [2, 1, 0], [4, 0, 0], [3, 3, 3]];

fn monte_carlo(opts: &VerifyOptions) -> Result<CriterionReport> {
    let start = Instant::now();
    let extent = 33;
    let k = rademacher_kernel(DELTA)?;
    let g = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(D))?;
    let h = g.homogenized().clone();
    let points: Vec<Vec<i64>> = MC_POINTS.iter().map(|p| p.to_vec()).collect();
    let quad = g.values(&points)?;
    let bias = box_bias(h.q(), extent, &points)?;
    let e1 = MultiIndex::unit(D, 0);
    let grad_at = vec![4i64, 0, 0];
    let grad_quad = g.derivative_values(std::slice::from_ref(&grad_at), &e1)?[0];
    let stencil = difference_stencil(&e1)?;
    let grad_pts: Vec<Vec<i64>> = stencil.iter().map(|(s, _)| grad_at.iter().zip(s).map(|(a, b)| a + b).collect()).collect();
    let grad_bias: f64 = box_bias(h.q(), extent, &grad_pts)?.iter().zip(&stencil).map(|(b, (_, w))| b * w).sum();

    let dirichlet = McConfig::new(Law::Rademacher, D, DELTA, extent, Boundary::ZeroExtension, opts.samples, opts.seed);
    let pts = points.clone();
    let gp = grad_pts.clone();
    let (est, stats) = with_workers(opts.workers, || {
        run_samples(&dirichlet, pts.len() + 1, |u| {
            let mut out: Vec<f64> = pts.iter().map(|x| u.get(x)).collect();
            out.push(gp.iter().zip(&stencil).map(|(x, (_, w))| w * u.get(x)).sum());
            out
        })
    })??;
    let insufficient = opts.samples < MIN_SAMPLES;
    let mut checks = Vec::new();
    for (i, x) in points.iter().enumerate() {
        let z = (est[i].mean - bias[i] - quad[i]).abs() / est[i].stderr;
        checks.push(le(format!("z G{x:?}"), z, 3.0));
    }
    let zg = (est[points.len()].mean - grad_bias - grad_quad).abs() / est[points.len()].stderr;
    checks.push(le("z grad_1 G(4,0,0)", zg, 3.0));

    let periodic = McConfig::new(Law::Rademacher, D, DELTA, extent, Boundary::Periodic, opts.samples, opts.seed + 1);
    let freqs = super::default_frequencies(D);
    let forms = with_workers(opts.workers, || crate::montecarlo::estimate_kdelta_form(&periodic, &freqs))??;
    // The series kernel on the box torus itself, with support grown to the box.
    let torus = kdelta_kernel(&MomentModel::rademacher(), D, DELTA, 3, 16, extent)?;
    for f in &forms {
        let kh = torus.fourier(&f.theta);
        let v = gradient_symbol(&f.theta);
        let mut s = num_complex::Complex64::default();
        for a in 0..D {
            for b in 0..D {
                s += v[a].conj() * kh[a * D + b] * v[b];
            }
        }
        checks.push(le(format!("z form k={:?}", f.frequency), (f.form.mean - s.re).abs() / f.form.stderr, 3.0));
        checks.push(le(
            format!("z imag k={:?}", f.frequency),
            f.green_hat_imag.mean.abs() / f.green_hat_imag.stderr.max(f64::MIN_POSITIVE),
            3.0,
        ));
    }

    // Rerun a prefix of the samples with two worker counts.
    let small = McConfig { samples: opts.samples.min(64), ..dirichlet.clone() };
    let observe = |u: &crate::lattice::LatticeField| vec![u.get(&[0, 0, 0]), u.get(&[4, 0, 0])];
    let a = with_workers(1, || run_samples(&small, 2, observe))??.0;
    let b = with_workers(3, || run_samples(&small, 2, observe))??.0;
    let identical = a.iter().zip(&b).all(|(x, y)| x.mean.to_bits() == y.mean.to_bits() && x.stderr.to_bits() == y.stderr.to_bits());
    checks.push(holds("bit-identical across worker counts", identical));

    let notes = vec![
        format!("n={} failed={} mean CG iterations {:.1}", est[0].n, est[0].failed, stats.mean_iterations),
        format!("box bias {bias:?}"),
    ];
    let mut report = CriterionReport::new(7, "Monte Carlo cross-oracle", checks, notes, start);
    if insufficient {
        report.status = Status::InsufficientSamples;
        report.notes.push(format!("n={} is below the {MIN_SAMPLES}-sample floor", opts.samples));
    }
    Ok(report)
}

fn first_order_term() -> Result<CriterionReport> {
    let start = Instant::now();
    let directions: Vec<Vec<f64>> = vec![
        vec![1.0, 0.0, 0.0],
        vec![0.6, 0.8, 0.0],
        vec![1.0 / 3f64.sqrt(); 3],
        vec![2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0],
    ];
    let free = t_kernel(&MatrixKernel::new(D, 0, 0.0)?);
    let id = HomogenizedData::identity(D);
    let mut at_zero = 0.0f64;
    for w in &directions {
        at_zero = at_zero.max(u1_eval(w, &free, &id, &DEFAULT_EPSILONS)?.value.abs());
    }
    let model = MomentModel::for_law(&Law::TwoPoint { p: 0.7 })?;
    let k = kdelta_kernel(&model, D, DELTA, 3, 3, 32)?;
    let h = q_matrix(&k)?;
    let t = t_kernel(&k);
    let mut parity = 0.0f64;
    let mut tolerance = 0.0f64;
    for w in &directions {
        let a = u1_eval(w, &t, &h, &DEFAULT_EPSILONS)?;
        let neg: Vec<f64> = w.iter().map(|c| -c).collect();
        let b = u1_eval(&neg, &t, &h, &DEFAULT_EPSILONS)?;
        parity = parity.max((a.value + b.value).abs());
        tolerance = tolerance.max(a.spread + b.spread);
    }
    let third = crate::asymptotics::third_moment(&t).iter().map(|m| m.abs()).fold(0.0, f64::max);

    // Exploratory: amplitude of a |x|^{1-d} term in the residual after the leading term,
    // fitted jointly with |x|^{-d}.
    let g = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(D))?;
    let cal = calibrate_leading(D)?;
    let terms = vec![ExpansionTerm::leading(&h, cal.factor)];
    let mut rows = Vec::new();
    for u in RayProbe::default_directions(D) {
        let probe = RayProbe::near_radii(u, &RAY_RADII)?;
        let values = g.values(&probe.points())?;
        for (x, v) in probe.points().iter().zip(values) {
            let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
            let r = v - crate::asymptotics::expansion_eval(&xf, &terms, &h)?;
            let rt = x_tilde(&LatticePoint::new(x.clone())?, &h).iter().map(|a| a * a).sum::<f64>().sqrt();
            rows.push((rt, r));
        }
    }
    let (amp, amp_err) = two_power_fit(&rows, D);
    let exploratory = Check {
        name: "k=1 amplitude / stderr (two-point law)".into(),
        value: amp.abs() / amp_err,
        limit: ">= 3".into(),
        passed: amp.abs() >= 3.0 * amp_err,
        exploratory: true,
    };
    let checks = vec![
        le("max |U1| at delta=0", at_zero, 0.0),
        le("max |U1(w)+U1(-w)| - tolerance", (parity - tolerance).max(0.0), 0.0),
        exploratory,
    ];
    let notes = vec![
        format!("largest third moment of T for the two-point law: {third:e}"),
        format!("fitted |x|^(1-d) amplitude {amp:e} +- {amp_err:e}"),
    ];
    Ok(CriterionReport::new(8, "first-order term U1", checks, notes, start))
}

/// Least squares r = a |x|^{1-d} + b |x|^{-d}; returns a and its standard error.
fn two_power_fit(rows: &[(f64, f64)], d: usize) -> (f64, f64) {
    let p1 = |r: f64| r.powi(1 - d as i32);
    let p2 = |r: f64| r.powi(-(d as i32));
    let (mut s11, mut s12, mut s22, mut t1, mut t2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(r, y) in rows {
        let (a, b) = (p1(r), p2(r));
        s11 += a * a;
        s12 += a * b;
        s22 += b * b;
        t1 += a * y;
        t2 += b * y;
    }
    let det = s11 * s22 - s12 * s12;
    let a = (s22 * t1 - s12 * t2) / det;
    let b = (s11 * t2 - s12 * t1) / det;
    let dof = (rows.len() as f64 - 2.0).max(1.0);
    let rss: f64 = rows.iter().map(|&(r, y)| (y - a * p1(r) - b * p2(r)).powi(2)).sum();
    let var = rss / dof * s22 / det;
    (a, var.sqrt())
}

fn tscan_reproducible() -> Result<CriterionReport> {
    let start = Instant::now();
    let base = std::env::temp_dir().join(format!("annealed-green-tscan-{}", std::process::id()));
    let first = base.join("first");
    let second = base.join("second");
    let mut cfg = RunConfig::new(D);
    cfg.sweep = (1..=20).map(|k| k as f64 / 100.0).collect();
    cfg.scan_radius = 6;
    super::run(&super::Command::Tscan, &cfg, &first, 1)?;
    let manifest = super::Manifest::load(&first.join("manifest.json"))?;
    super::run(&super::Command::Tscan, &manifest.config, &second, 1)?;
    let a = std::fs::read(first.join("tscan.csv"))?;
    let b = std::fs::read(second.join("tscan.csv"))?;
    let rows = a.iter().filter(|&&c| c == b'\n').count() - 1;
    let text = String::from_utf8_lossy(&a).to_string();
    let negative = text.lines().skip(1).filter(|l| l.split(',').nth(1).is_some_and(|v| v.starts_with('-'))).count();
    let _ = std::fs::remove_dir_all(&base);
    let checks = vec![holds("rerun from manifest is byte-identical", a == b), holds("20 sweep rows", rows == 20)];
    let notes = vec![format!("{negative} of {rows} contrasts have min T < 0 over |x|_inf <= 6")];
    Ok(CriterionReport::new(9, "min-T explorer reproducibility", checks, notes, start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_power_fit_recovers_coefficients() {
        let rows: Vec<(f64, f64)> = [8.0, 12.0, 16.0, 24.0, 32.0].iter().map(|&r: &f64| (r, 2.0 / (r * r) - 5.0 / r.powi(3))).collect();
        let (a, err) = two_power_fit(&rows, 3);
        assert!((a - 2.0).abs() < 1e-10 && err < 1e-8);
    }

    #[test]
    fn unknown_suite_is_a_config_error() {
        assert!(matches!(run_suite("nope", &VerifyOptions::default()), Err(Error::Config(_))));
    }
}
