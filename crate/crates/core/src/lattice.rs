//! Discrete calculus on finite boxes of Z^d.
//!
//! Axes are zero-based: axis `j` of a `d`-dimensional field is one of `0..d`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 3;
pub const MAX_DIM: usize = 5;

pub fn check_dim(d: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::Dimension(d))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint(Vec<i64>);

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        check_dim(coords.len())?;
        Ok(Self(coords))
    }

    pub fn origin(d: usize) -> Self {
        Self(vec![0; d])
    }

    /// The unit vector e_j.
    pub fn unit(d: usize, axis: usize) -> Self {
        let mut c = vec![0; d];
        c[axis] = 1;
        Self(c)
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt()
    }

    pub fn sup_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn l1_norm(&self) -> i64 {
        self.0.iter().map(|c| c.abs()).sum()
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, k: i64) -> Self {
        Self(self.0.iter().map(|c| c * k).collect())
    }

    pub fn shifted(&self, axis: usize, step: i64) -> Self {
        let mut c = self.0.clone();
        c[axis] += step;
        Self(c)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| c as f64).collect()
    }

    /// All points with |x|_inf <= r, in lexicographic order.
    pub fn cube(d: usize, r: i64) -> Vec<LatticePoint> {
        let side = (2 * r + 1) as usize;
        let total = side.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for mut k in 0..total {
            let mut c = vec![0i64; d];
            for j in (0..d).rev() {
                c[j] = (k % side) as i64 - r;
                k /= side;
            }
            out.push(Self(c));
        }
        out
    }
}

impl std::fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Result<Self> {
        check_dim(exponents.len())?;
        Ok(Self(exponents))
    }

    pub fn zero(d: usize) -> Self {
        Self(vec![0; d])
    }

    pub fn unit(d: usize, axis: usize) -> Self {
        let mut e = vec![0; d];
        e[axis] = 1;
        Self(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Every multi-index of dimension `d` with |alpha| <= k, ordered by |alpha|.
    pub fn up_to(d: usize, k: u32) -> Vec<MultiIndex> {
        let mut out = Vec::new();
        for total in 0..=k {
            let mut cur = vec![0u32; d];
            compositions(total, 0, &mut cur, &mut out);
        }
        out
    }
}

fn compositions(left: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for a in (0..=left).rev() {
        cur[pos] = a;
        compositions(left - a, pos + 1, cur, out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    ZeroExtension,
}

impl Boundary {
    fn tag(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::ZeroExtension => "zero-extension",
        }
    }

    fn from_tag(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "zero-extension" => Ok(Boundary::ZeroExtension),
            other => Err(Error::Format(format!("unknown boundary tag `{other}`"))),
        }
    }
}

/// Real values on the box `lo + [0, extent)`, stored row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    lo: Vec<i64>,
    extent: Vec<usize>,
    values: Vec<f64>,
    boundary: Boundary,
}

const FIELD_MAGIC: &[u8; 8] = b"LATFLD01";

impl LatticeField {
    pub fn zeros(lo: Vec<i64>, extent: Vec<usize>, boundary: Boundary) -> Result<Self> {
        check_dim(lo.len())?;
        if extent.len() != lo.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), found: extent.len() });
        }
        if extent.iter().any(|&e| e == 0) {
            return Err(Error::Config("box extents must be positive".into()));
        }
        let n = extent.iter().product();
        Ok(Self { lo, extent, values: vec![0.0; n], boundary })
    }

    /// Cube of side `2r + 1` centred on the origin.
    pub fn centered(d: usize, r: usize, boundary: Boundary) -> Result<Self> {
        Self::zeros(vec![-(r as i64); d], vec![2 * r + 1; d], boundary)
    }

    pub fn from_fn(
        lo: Vec<i64>,
        extent: Vec<usize>,
        boundary: Boundary,
        mut f: impl FnMut(&[i64]) -> f64,
    ) -> Result<Self> {
        let mut field = Self::zeros(lo, extent, boundary)?;
        let mut x = vec![0i64; field.dim()];
        for i in 0..field.values.len() {
            field.coords_into(i, &mut x);
            field.values[i] = f(&x);
        }
        Ok(field)
    }

    pub fn from_values(lo: Vec<i64>, extent: Vec<usize>, boundary: Boundary, values: Vec<f64>) -> Result<Self> {
        let mut field = Self::zeros(lo, extent, boundary)?;
        if values.len() != field.values.len() {
            return Err(Error::DimensionMismatch { expected: field.values.len(), found: values.len() });
        }
        field.values = values;
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.extent[axis + 1..].iter().product()
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        let mut idx = 0usize;
        for j in 0..self.dim() {
            let mut k = x[j] - self.lo[j];
            let e = self.extent[j] as i64;
            if self.boundary == Boundary::Periodic {
                k = k.rem_euclid(e);
            } else if k < 0 || k >= e {
                return None;
            }
            idx = idx * self.extent[j] + k as usize;
        }
        Some(idx)
    }

    pub fn coords_into(&self, mut idx: usize, out: &mut [i64]) {
        for j in (0..self.dim()).rev() {
            out[j] = self.lo[j] + (idx % self.extent[j]) as i64;
            idx /= self.extent[j];
        }
    }

    pub fn point(&self, idx: usize) -> LatticePoint {
        let mut c = vec![0; self.dim()];
        self.coords_into(idx, &mut c);
        LatticePoint(c)
    }

    /// Value at `x` under the boundary rule (zero outside a zero-extension box).
    pub fn get(&self, x: &[i64]) -> f64 {
        self.index_of(x).map_or(0.0, |i| self.values[i])
    }

    pub fn set(&mut self, x: &[i64], v: f64) -> bool {
        match self.index_of(x) {
            Some(i) => {
                self.values[i] = v;
                true
            }
            None => false,
        }
    }

    fn same_box(&self, other: &Self) -> Result<()> {
        if self.lo == other.lo && self.extent == other.extent && self.boundary == other.boundary {
            Ok(())
        } else {
            Err(Error::BoxMismatch)
        }
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_box(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim() {
            Ok(())
        } else {
            Err(Error::Axis { axis, dim: self.dim() })
        }
    }

    /// Visit (site, neighbour-in-direction) index pairs along `axis`; neighbour is
    /// `None` when it falls outside a zero-extension box.
    fn shift_map(&self, axis: usize, step: i64, mut f: impl FnMut(usize, Option<usize>)) {
        let s = self.stride(axis);
        let e = self.extent[axis];
        let outer = self.values.len() / (s * e);
        for o in 0..outer {
            for c in 0..e {
                let target = c as i64 + step;
                let nb = if (0..e as i64).contains(&target) {
                    Some(target as usize)
                } else if self.boundary == Boundary::Periodic {
                    Some(target.rem_euclid(e as i64) as usize)
                } else {
                    None
                };
                let base = o * s * e;
                for i in 0..s {
                    f(base + c * s + i, nb.map(|t| base + t * s + i));
                }
            }
        }
    }

    /// (grad_j u)(x) = u(x + e_j) - u(x).
    pub fn forward_diff(&self, axis: usize) -> Result<Self> {
        self.check_axis(axis)?;
        let mut out = self.clone();
        self.shift_map(axis, 1, |i, nb| {
            out.values[i] = nb.map_or(0.0, |k| self.values[k]) - self.values[i];
        });
        Ok(out)
    }

    /// (grad_j^* u)(x) = u(x - e_j) - u(x).
    pub fn adjoint_diff(&self, axis: usize) -> Result<Self> {
        self.check_axis(axis)?;
        let mut out = self.clone();
        self.shift_map(axis, -1, |i, nb| {
            out.values[i] = nb.map_or(0.0, |k| self.values[k]) - self.values[i];
        });
        Ok(out)
    }

    /// -Delta u = sum_j grad_j^* grad_j u.
    pub fn laplacian(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = 0.0);
        for axis in 0..self.dim() {
            let g = self.forward_diff(axis).expect("axis in range");
            let h = g.adjoint_diff(axis).expect("axis in range");
            out.values.iter_mut().zip(&h.values).for_each(|(o, v)| *o += v);
        }
        out
    }

    pub fn multi_diff(&self, alpha: &MultiIndex) -> Result<Self> {
        if alpha.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: alpha.dim() });
        }
        for (axis, &a) in alpha.exponents().iter().enumerate() {
            if a as usize >= self.extent[axis] && a > 0 {
                return Err(Error::StencilTooLarge { axis, order: a, extent: self.extent[axis] });
            }
        }
        let mut out = self.clone();
        for (axis, &a) in alpha.exponents().iter().enumerate() {
            for _ in 0..a {
                out = out.forward_diff(axis)?;
            }
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d,{}", self.dim())?;
        writeln!(w, "lo,{}", join(&self.lo))?;
        writeln!(w, "extent,{}", join(&self.extent))?;
        writeln!(w, "boundary,{}", self.boundary.tag())?;
        for v in &self.values {
            writeln!(w, "{v:?}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| Error::Format(format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .and_then(|s| s.strip_prefix(','))
                .map(str::to_owned)
                .ok_or_else(|| Error::Format(format!("expected `{key}` header, got `{line}`")))
        };
        let d: usize = parse(&header("d")?)?;
        let lo: Vec<i64> = header("lo")?.split(',').map(parse).collect::<Result<_>>()?;
        let extent: Vec<usize> = header("extent")?.split(',').map(parse).collect::<Result<_>>()?;
        let boundary = Boundary::from_tag(&header("boundary")?)?;
        if lo.len() != d || extent.len() != d {
            return Err(Error::Format("header dimension mismatch".into()));
        }
        let values = lines.filter(|l| !l.trim().is_empty()).map(parse).collect::<Result<Vec<f64>>>()?;
        Self::from_values(lo, extent, boundary, values)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(FIELD_MAGIC)?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&[matches!(self.boundary, Boundary::Periodic) as u8])?;
        for &l in &self.lo {
            w.write_all(&l.to_le_bytes())?;
        }
        for &e in &self.extent {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::Format("bad field magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        check_dim(d)?;
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let boundary = if b1[0] == 1 { Boundary::Periodic } else { Boundary::ZeroExtension };
        let mut b8 = [0u8; 8];
        let mut lo = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut b8)?;
            lo.push(i64::from_le_bytes(b8));
        }
        let mut extent = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut b8)?;
            extent.push(u64::from_le_bytes(b8) as usize);
        }
        let n: usize = extent.iter().product();
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Self::from_values(lo, extent, boundary, values)
    }
}

pub(crate) fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub(crate) fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Format(format!("cannot parse `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn delta(d: usize, r: usize, boundary: Boundary) -> LatticeField {
        let mut u = LatticeField::centered(d, r, boundary).unwrap();
        u.set(&vec![0; d], 1.0);
        u
    }

    #[test]
    fn diff_of_linear_function() {
        let u = LatticeField::from_fn(vec![-3; 3], vec![7; 3], Boundary::ZeroExtension, |x| x[0] as f64).unwrap();
        let g = u.forward_diff(0).unwrap();
        let h = u.adjoint_diff(0).unwrap();
        for i in 0..u.len() {
            let x = u.point(i);
            if x.coords()[0] < 3 {
                assert_eq!(g.values()[i], 1.0);
            }
            if x.coords()[0] > -3 {
                assert_eq!(h.values()[i], -1.0);
            }
        }
    }

    #[test]
    fn diff_of_delta() {
        let u = delta(3, 2, Boundary::ZeroExtension);
        let g = u.forward_diff(0).unwrap();
        assert_eq!(g.get(&[0, 0, 0]), -1.0);
        assert_eq!(g.get(&[-1, 0, 0]), 1.0);
        assert_eq!(g.values().iter().map(|v| v.abs()).sum::<f64>(), 2.0);
        let h = u.adjoint_diff(0).unwrap();
        assert_eq!(h.get(&[1, 0, 0]), 1.0);
        assert_eq!(h.get(&[0, 0, 0]), -1.0);
    }

    #[test]
    fn laplacian_of_delta_and_constant() {
        let u = delta(3, 2, Boundary::Periodic);
        let l = u.laplacian();
        assert_eq!(l.get(&[0, 0, 0]), 6.0);
        for j in 0..3 {
            assert_eq!(l.get(LatticePoint::unit(3, j).coords()), -1.0);
            assert_eq!(l.get(LatticePoint::unit(3, j).neg().coords()), -1.0);
        }
        let c = LatticeField::from_fn(vec![0; 3], vec![5; 3], Boundary::Periodic, |_| 2.5).unwrap();
        assert!(c.laplacian().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn axis_out_of_range() {
        let u = delta(3, 1, Boundary::Periodic);
        assert!(matches!(u.forward_diff(3), Err(Error::Axis { .. })));
        assert!(matches!(u.adjoint_diff(7), Err(Error::Axis { .. })));
    }

    #[test]
    fn second_difference_of_square() {
        let u = LatticeField::from_fn(vec![-4; 3], vec![9; 3], Boundary::ZeroExtension, |x| (x[0] * x[0]) as f64)
            .unwrap();
        let g = u.multi_diff(&MultiIndex::new(vec![2, 0, 0]).unwrap()).unwrap();
        for i in 0..g.len() {
            if g.point(i).coords()[0] <= 2 {
                assert_eq!(g.values()[i], 2.0);
            }
        }
    }

    #[test]
    fn stencil_too_large() {
        let u = delta(3, 1, Boundary::ZeroExtension);
        let a = MultiIndex::new(vec![3, 0, 0]).unwrap();
        assert!(matches!(u.multi_diff(&a), Err(Error::StencilTooLarge { .. })));
    }

    #[test]
    fn multi_index_enumeration() {
        let all = MultiIndex::up_to(3, 2);
        assert_eq!(all.len(), 1 + 3 + 6);
        assert!(all.windows(2).all(|w| w[0].order() <= w[1].order()));
    }

    #[test]
    fn dimension_bounds() {
        assert!(LatticePoint::new(vec![1, 2]).is_err());
        assert!(LatticePoint::new(vec![0; 6]).is_err());
        assert_eq!(LatticePoint::cube(3, 1).len(), 27);
    }
}
