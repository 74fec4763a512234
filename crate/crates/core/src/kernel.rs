//! Finitely supported lattice kernels.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauss::accurate_sum;
use crate::lattice::{check_dim, parse, LatticePoint};

/// Run metadata written next to kernel CSV files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelMeta {
    pub d: usize,
    pub delta: f64,
    pub radius: i64,
    pub model: String,
    pub order: usize,
    pub resolution: usize,
}

/// Map x -> d x d real matrix (row-major), supported in |x|_inf <= radius.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixKernel {
    d: usize,
    radius: i64,
    delta: f64,
    entries: BTreeMap<LatticePoint, Vec<f64>>,
}

impl MatrixKernel {
    pub fn new(d: usize, radius: i64, delta: f64) -> Result<Self> {
        check_dim(d)?;
        Ok(Self { d, radius, delta, entries: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, x: LatticePoint, m: Vec<f64>) -> Result<()> {
        if x.dim() != self.d || m.len() != self.d * self.d {
            return Err(Error::DimensionMismatch { expected: self.d, found: x.dim() });
        }
        if x.sup_norm() > self.radius {
            return Err(Error::Config(format!("point {x} lies outside the truncation radius {}", self.radius)));
        }
        self.entries.insert(x, m);
        Ok(())
    }

    pub fn get(&self, x: &LatticePoint) -> Option<&[f64]> {
        self.entries.get(x).map(Vec::as_slice)
    }

    pub fn entry(&self, x: &LatticePoint, j: usize, k: usize) -> f64 {
        self.get(x).map_or(0.0, |m| m[j * self.d + k])
    }

    pub fn matrix(&self, x: &LatticePoint) -> DMatrix<f64> {
        match self.get(x) {
            Some(m) => DMatrix::from_row_slice(self.d, self.d, m),
            None => DMatrix::zeros(self.d, self.d),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, &[f64])> {
        self.entries.iter().map(|(x, m)| (x, m.as_slice()))
    }

    /// max_x max_jk |K(-x)_jk - K(x)_kj|.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.d;
        let mut worst = 0.0f64;
        for (x, m) in &self.entries {
            let mx = x.neg();
            for j in 0..d {
                for k in 0..d {
                    worst = worst.max((self.entry(&mx, j, k) - m[k * d + j]).abs());
                }
            }
        }
        worst
    }

    /// K(x) <- (K(x) + K(-x)^T) / 2.
    pub fn symmetrized(&self) -> Self {
        let d = self.d;
        let mut out = Self { entries: BTreeMap::new(), ..self.clone() };
        let mut keys: Vec<LatticePoint> = self.entries.keys().cloned().collect();
        keys.extend(self.entries.keys().map(|x| x.neg()));
        keys.sort();
        keys.dedup();
        for x in keys {
            let mx = x.neg();
            let mut m = vec![0.0; d * d];
            for j in 0..d {
                for k in 0..d {
                    m[j * d + k] = 0.5 * (self.entry(&x, j, k) + self.entry(&mx, k, j));
                }
            }
            out.entries.insert(x, m);
        }
        out
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.values().flatten().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// sum_x K(x), row-major, with compensated summation.
    pub fn total(&self) -> Vec<f64> {
        let dd = self.d * self.d;
        (0..dd).map(|e| accurate_sum(self.entries.values().map(|m| m[e]))).collect()
    }

    /// Khat(theta) = sum_x K(x) e^{-i x.theta}, row-major.
    pub fn fourier(&self, theta: &[f64]) -> Vec<Complex64> {
        let dd = self.d * self.d;
        let mut out = vec![Complex64::default(); dd];
        for (x, m) in &self.entries {
            let ph: f64 = x.coords().iter().zip(theta).map(|(&c, t)| c as f64 * t).sum();
            let e = Complex64::from_polar(1.0, -ph);
            for (o, v) in out.iter_mut().zip(m) {
                *o += e * v;
            }
        }
        out
    }

    pub fn scaled(&self, s: f64, delta: f64) -> Self {
        let entries = self.entries.iter().map(|(x, m)| (x.clone(), m.iter().map(|v| v * s).collect())).collect();
        Self { entries, delta, ..self.clone() }
    }

    /// Entrywise sum; points missing in either operand count as zero.
    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (x, m) in &other.entries {
            let slot = out.entries.entry(x.clone()).or_insert_with(|| vec![0.0; m.len()]);
            slot.iter_mut().zip(m).for_each(|(a, b)| *a += b);
        }
        out.radius = self.radius.max(other.radius);
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let head: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},j,k,value", head.join(","))?;
        for (x, m) in &self.entries {
            for j in 0..self.d {
                for k in 0..self.d {
                    writeln!(w, "{},{},{},{:?}", crate::lattice::join(x.coords()), j, k, m[j * self.d + k])?;
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, meta: &KernelMeta) -> Result<Self> {
        let mut out = Self::new(meta.d, meta.radius, meta.delta)?;
        let d = meta.d;
        for (x, idx, v) in read_rows(r, d, 3)? {
            let (j, k) = (idx[0], idx[1]);
            if j >= d || k >= d {
                return Err(Error::Format(format!("entry index ({j},{k}) out of range")));
            }
            let slot = out.entries.entry(x).or_insert_with(|| vec![0.0; d * d]);
            slot[j * d + k] = v;
        }
        Ok(out)
    }
}

/// Parse `x_1..x_d, extra integer columns.., value` rows.
fn read_rows<R: Read>(mut r: R, d: usize, extra_plus_value: usize) -> Result<Vec<(LatticePoint, Vec<usize>, f64)>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != d + extra_plus_value {
            return Err(Error::Format(format!("expected {} columns in `{line}`", d + extra_plus_value)));
        }
        let x = LatticePoint::new(cols[..d].iter().map(|s| parse(s)).collect::<Result<_>>()?)?;
        let idx = cols[d..cols.len() - 1].iter().map(|s| parse(s)).collect::<Result<Vec<usize>>>()?;
        let v: f64 = parse(cols[cols.len() - 1])?;
        rows.push((x, idx, v));
    }
    Ok(rows)
}

/// Map x -> real, supported in |x|_inf <= radius.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarKernel {
    d: usize,
    radius: i64,
    entries: BTreeMap<LatticePoint, f64>,
}

impl ScalarKernel {
    pub fn new(d: usize, radius: i64) -> Result<Self> {
        check_dim(d)?;
        Ok(Self { d, radius, entries: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, x: LatticePoint, v: f64) {
        self.radius = self.radius.max(x.sup_norm());
        self.entries.insert(x, v);
    }

    pub fn add_to(&mut self, x: LatticePoint, v: f64) {
        self.radius = self.radius.max(x.sup_norm());
        *self.entries.entry(x).or_insert(0.0) += v;
    }

    pub fn get(&self, x: &LatticePoint) -> f64 {
        self.entries.get(x).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, f64)> {
        self.entries.iter().map(|(x, &v)| (x, v))
    }

    pub fn total(&self) -> f64 {
        accurate_sum(self.entries.values().copied())
    }

    /// T-hat(theta) = sum_x T(x) e^{-i x.theta}.
    pub fn fourier(&self, theta: &[f64]) -> Complex64 {
        self.entries
            .iter()
            .map(|(x, &v)| {
                let ph: f64 = x.coords().iter().zip(theta).map(|(&c, t)| c as f64 * t).sum();
                Complex64::from_polar(v, -ph)
            })
            .sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let head: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},value", head.join(","))?;
        for (x, v) in &self.entries {
            writeln!(w, "{},{:?}", crate::lattice::join(x.coords()), v)?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, d: usize) -> Result<Self> {
        let mut out = Self::new(d, 0)?;
        for (x, _, v) in read_rows(r, d, 1)? {
            out.insert(x, v);
        }
        Ok(out)
    }
}
