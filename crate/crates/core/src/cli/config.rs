use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{check_dim, Boundary};
use crate::montecarlo::{McConfig, DEFAULT_TOL};
use crate::perturbation::{Law, MomentModel};
use crate::quadrature::QuadratureConfig;

/// Box settings for the sampling oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    #[serde(default = "default_extent")]
    pub extent: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_extent() -> usize {
    33
}
fn default_boundary() -> Boundary {
    Boundary::ZeroExtension
}
fn default_samples() -> usize {
    2000
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}

impl Default for BoxConfig {
    fn default() -> Self {
        Self { extent: default_extent(), boundary: default_boundary(), samples: default_samples(), tol: default_tol() }
    }
}

/// Everything a command needs. Only `d` is mandatory; `resolved()` fills every default so
/// manifests never depend on implicit values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_law")]
    pub law: String,
    /// Series truncation order.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Kernel support radius.
    #[serde(default = "default_radius")]
    pub radius: i64,
    /// Torus resolution for the Helmholtz chains.
    #[serde(default = "default_series_resolution")]
    pub series_resolution: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default, rename = "box")]
    pub mc: BoxConfig,
    /// Evaluation points for `green` and `mc`.
    #[serde(default)]
    pub points: Vec<Vec<i64>>,
    /// Derivative multi-index for `green` and `mc`; empty means none.
    #[serde(default)]
    pub alpha: Vec<u32>,
    /// Ray directions and target radii for `asymptotics`.
    #[serde(default)]
    pub rays: Vec<Vec<i64>>,
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Contrast sweep and box radius for `tscan`.
    #[serde(default)]
    pub sweep: Vec<f64>,
    #[serde(default = "default_scan_radius")]
    pub scan_radius: i64,
    /// Integer frequencies k (theta = 2 pi k / L) for the periodic form estimator.
    #[serde(default)]
    pub frequencies: Vec<Vec<i64>>,
}

fn default_delta() -> f64 {
    0.15
}
fn default_law() -> String {
    "rademacher".into()
}
fn default_order() -> usize {
    3
}
fn default_radius() -> i64 {
    3
}
fn default_series_resolution() -> usize {
    32
}
fn default_seed() -> u64 {
    1
}
fn default_scan_radius() -> i64 {
    6
}

impl RunConfig {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            delta: default_delta(),
            law: default_law(),
            order: default_order(),
            radius: default_radius(),
            series_resolution: default_series_resolution(),
            seed: default_seed(),
            out: None,
            quadrature: None,
            mc: BoxConfig::default(),
            points: Vec::new(),
            alpha: Vec::new(),
            rays: Vec::new(),
            radii: Vec::new(),
            sweep: Vec::new(),
            scan_radius: default_scan_radius(),
            frequencies: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.d)?;
        self.law()?;
        if let Some(q) = &self.quadrature {
            q.validate()?;
        }
        let dims = |name: &str, v: &[Vec<i64>]| -> Result<()> {
            match v.iter().find(|p| p.len() != self.d) {
                Some(p) => Err(Error::Config(format!("`{name}` entry {p:?} is not a {}-vector", self.d))),
                None => Ok(()),
            }
        };
        dims("points", &self.points)?;
        dims("rays", &self.rays)?;
        dims("frequencies", &self.frequencies)?;
        if !self.alpha.is_empty() && self.alpha.len() != self.d {
            return Err(Error::Config(format!("`alpha` must have {} entries", self.d)));
        }
        if self.mc.extent < 5 {
            return Err(Error::Config("`box.extent` must be at least 5".into()));
        }
        Ok(())
    }

    /// The configuration with every default made explicit.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.quadrature.is_none() {
            c.quadrature = Some(QuadratureConfig::for_dim(c.d));
        }
        if c.points.is_empty() {
            c.points = vec![vec![0; c.d], unit(c.d, 0, 1), unit(c.d, 0, 4)];
        }
        if c.alpha.is_empty() {
            c.alpha = vec![0; c.d];
        }
        if c.rays.is_empty() {
            c.rays = crate::asymptotics::RayProbe::default_directions(c.d);
        }
        if c.radii.is_empty() {
            c.radii = vec![8.0, 12.0, 16.0, 24.0, 32.0];
        }
        if c.sweep.is_empty() {
            c.sweep = (1..=20).map(|k| k as f64 / 100.0).collect();
        }
        if c.frequencies.is_empty() {
            c.frequencies = default_frequencies(c.d);
        }
        c
    }

    pub fn law(&self) -> Result<Law> {
        Law::from_tag(&self.law)
    }

    pub fn model(&self) -> Result<MomentModel> {
        MomentModel::for_law(&self.law()?)
    }

    pub fn quadrature(&self) -> QuadratureConfig {
        self.quadrature.clone().unwrap_or_else(|| QuadratureConfig::for_dim(self.d))
    }

    pub fn mc_config(&self) -> Result<McConfig> {
        let mut m = McConfig::new(self.law()?, self.d, self.delta, self.mc.extent, self.mc.boundary, self.mc.samples, self.seed);
        m.tol = self.mc.tol;
        Ok(m)
    }
}

fn unit(d: usize, axis: usize, n: i64) -> Vec<i64> {
    let mut x = vec![0; d];
    x[axis] = n;
    x
}

/// Eight low box frequencies mixing axes and diagonals.
pub fn default_frequencies(d: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for (a, b, c) in [(1, 0, 0), (0, 2, 0), (1, 1, 0), (3, 0, 0), (1, 1, 1), (2, 1, 0), (0, 0, 4), (2, 2, 1)] {
        let mut k = vec![0; d];
        k[0] = a;
        k[1] = b;
        k[2] = c;
        out.push(k);
    }
    out
}
