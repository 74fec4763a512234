use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-site law of the coefficient field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "law")]
pub enum Law {
    Rademacher,
    Uniform,
    /// P(s = a) = p, P(s = -a p/(1-p)) = 1-p, scaled so both atoms lie in [-1, 1].
    TwoPoint { p: f64 },
    Custom,
}

impl Law {
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "rademacher" => Ok(Law::Rademacher),
            "uniform" => Ok(Law::Uniform),
            "two-point" => Ok(Law::TwoPoint { p: 0.7 }),
            other => Err(Error::UnknownLaw(other.to_string())),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Law::Rademacher => "rademacher",
            Law::Uniform => "uniform",
            Law::TwoPoint { .. } => "two-point",
            Law::Custom => "custom",
        }
    }

    /// Atoms and probabilities for discrete laws.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match *self {
            Law::Rademacher => Some(vec![(1.0, 0.5), (-1.0, 0.5)]),
            Law::TwoPoint { p } => {
                let ratio = p / (1.0 - p);
                let a = 1.0f64.min(1.0 / ratio);
                Some(vec![(a, p), (-a * ratio, 1.0 - p)])
            }
            _ => None,
        }
    }
}

/// Moments m_1..m_K of the single-site law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentModel {
    law: Law,
    moments: Vec<f64>,
}

impl MomentModel {
    pub const DEFAULT_ORDER: usize = 8;

    pub fn rademacher() -> Self {
        let moments = (1..=Self::DEFAULT_ORDER).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect();
        Self { law: Law::Rademacher, moments }
    }

    pub fn uniform() -> Self {
        let moments =
            (1..=Self::DEFAULT_ORDER).map(|k| if k % 2 == 0 { 1.0 / (k as f64 + 1.0) } else { 0.0 }).collect();
        Self { law: Law::Uniform, moments }
    }

    pub fn two_point(p: f64) -> Result<Self> {
        if !(0.0 < p && p < 1.0) {
            return Err(Error::Moments(format!("two-point probability {p} is not in (0, 1)")));
        }
        let law = Law::TwoPoint { p };
        let atoms = law.atoms().expect("discrete law");
        let moments = (1..=Self::DEFAULT_ORDER)
            .map(|k| atoms.iter().map(|(a, w)| w * a.powi(k as i32)).sum())
            .collect();
        Ok(Self { law, moments })
    }

    pub fn for_law(law: &Law) -> Result<Self> {
        match law {
            Law::Rademacher => Ok(Self::rademacher()),
            Law::Uniform => Ok(Self::uniform()),
            Law::TwoPoint { p } => Self::two_point(*p),
            Law::Custom => Err(Error::Config("custom laws need explicit moments".into())),
        }
    }

    /// Validates |m_k| <= 1 and the Hankel conditions for a law on [-1, 1].
    pub fn custom(moments: Vec<f64>) -> Result<Self> {
        let model = Self { law: Law::Custom, moments };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((k, m)) = self.moments.iter().enumerate().find(|(_, m)| m.abs() > 1.0 + 1e-15) {
            return Err(Error::Moments(format!("|m_{}| = {} exceeds 1", k + 1, m.abs())));
        }
        let full = |k: usize| if k == 0 { 1.0 } else { self.moments[k - 1] };
        let order = self.moments.len();
        let h = order / 2;
        let hankel = DMatrix::from_fn(h + 1, h + 1, |i, j| full(i + j));
        check_psd(hankel, "Hankel")?;
        if order >= 2 {
            let l = (order - 2) / 2;
            let local = DMatrix::from_fn(l + 1, l + 1, |i, j| full(i + j) - full(i + j + 2));
            check_psd(local, "localizing")?;
        }
        Ok(())
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn name(&self) -> &'static str {
        self.law.tag()
    }

    pub fn order(&self) -> usize {
        self.moments.len()
    }

    /// m_k with m_0 = 1.
    pub fn moment(&self, k: usize) -> Result<f64> {
        match k {
            0 => Ok(1.0),
            _ if k <= self.moments.len() => Ok(self.moments[k - 1]),
            _ => Err(Error::MomentOrder { requested: k, available: self.moments.len() }),
        }
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }
}

fn check_psd(m: DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.amax().max(1.0);
    let lam = SymmetricEigen::new(m).eigenvalues.min();
    if lam < -1e-12 * scale {
        Err(Error::Moments(format!("{what} matrix has eigenvalue {lam:e}")))
    } else {
        Ok(())
    }
}

/// E[prod_i s(x_i)] for sites carrying the given multiplicities.
pub fn field_moment(model: &MomentModel, multiplicities: &[usize]) -> Result<f64> {
    multiplicities.iter().try_fold(1.0, |acc, &k| Ok(acc * model.moment(k)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_standard_laws() {
        let r = MomentModel::rademacher();
        assert_eq!(field_moment(&r, &[2]).unwrap(), 1.0);
        assert_eq!(field_moment(&r, &[1, 1]).unwrap(), 0.0);
        assert_eq!(field_moment(&MomentModel::uniform(), &[4]).unwrap(), 0.2);
        assert!(matches!(field_moment(&r, &[9]), Err(Error::MomentOrder { .. })));
    }

    #[test]
    fn two_point_law_is_centred_and_skewed() {
        let m = MomentModel::two_point(0.7).unwrap();
        assert!(m.moment(1).unwrap().abs() < 1e-16);
        assert!((m.moment(2).unwrap() - 3.0 / 7.0).abs() < 1e-15);
        assert!(m.moment(3).unwrap() < -0.2);
        let atoms = m.law().atoms().unwrap();
        assert!(atoms.iter().all(|(a, _)| a.abs() <= 1.0));
    }

    #[test]
    fn hankel_rejects_impossible_moments() {
        assert!(MomentModel::custom(vec![0.0, 0.5, 0.0, 0.1]).is_err());
        assert!(MomentModel::custom(vec![0.0, 1.2]).is_err());
        assert!(MomentModel::custom(vec![0.0, 0.5, 0.0, 0.25]).is_ok());
        assert!(MomentModel::custom(vec![0.9, 0.5]).is_err());
    }
}
