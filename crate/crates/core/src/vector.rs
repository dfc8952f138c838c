//! Sparse and dense feature vectors shared by the featurizers and the solver.

use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Common operations the solver needs from a feature representation.
pub trait FeatureVector {
    fn dim(&self) -> usize;

    /// `Σ w[j]·x[j]` over the first `dim()` entries of `w`.
    fn dot(&self, w: &[f64]) -> f64;

    /// `w[j] += scale·x[j]`.
    fn add_scaled_to(&self, w: &mut [f64], scale: f64);

    fn squared_norm(&self) -> f64;

    fn is_finite(&self) -> bool;

    fn is_zero(&self) -> bool;
}

/// Sorted `(index, value)` pairs with no explicit zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseData", into = "SparseData")]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

#[derive(Serialize, Deserialize)]
struct SparseData {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl TryFrom<SparseData> for SparseVector {
    type Error = Error;
    fn try_from(d: SparseData) -> Result<Self> {
        SparseVector::new(d.dim, d.entries)
    }
}

impl From<SparseVector> for SparseData {
    fn from(v: SparseVector) -> Self {
        SparseData {
            dim: v.dim,
            entries: v.entries,
        }
    }
}

impl SparseVector {
    pub fn new(dim: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        let mut prev: Option<u32> = None;
        for &(i, v) in &entries {
            if (i as usize) >= dim {
                return Err(Error::InvalidInput(format!("sparse index {i} out of range for dimension {dim}")));
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::InvalidInput("sparse indices must be strictly increasing".into()));
            }
            if v == 0.0 {
                return Err(Error::InvalidInput(format!("explicit zero at sparse index {i}")));
            }
            prev = Some(i);
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        SparseVector { dim, entries: Vec::new() }
    }

    /// Sorts, merges duplicate indices by summation and drops zeros.
    pub fn from_unsorted(dim: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        SparseVector::new(dim, merged)
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self) -> DenseVector {
        let mut v = vec![0.0; self.dim];
        for &(i, x) in &self.entries {
            v[i as usize] = x;
        }
        DenseVector(v)
    }

    pub fn l2_normalized(&self) -> SparseVector {
        let norm = self.squared_norm().sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        SparseVector {
            dim: self.dim,
            entries: self.entries.iter().map(|&(i, v)| (i, v / norm)).collect(),
        }
    }

    /// Appends `extra` zero dimensions.
    pub fn widened(&self, extra: usize) -> SparseVector {
        SparseVector {
            dim: self.dim + extra,
            entries: self.entries.clone(),
        }
    }
}

impl Add for &SparseVector {
    type Output = SparseVector;

    /// Entrywise sum; panics if the dimensions differ.
    fn add(self, rhs: &SparseVector) -> SparseVector {
        assert_eq!(self.dim, rhs.dim, "sparse dimensions differ");
        let mut out = Vec::with_capacity(self.entries.len() + rhs.entries.len());
        let (mut a, mut b) = (self.entries.iter().peekable(), rhs.entries.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(i, x)), Some(&&(j, y))) => {
                    if i < j {
                        out.push((i, x));
                        a.next();
                    } else if j < i {
                        out.push((j, y));
                        b.next();
                    } else {
                        if x + y != 0.0 {
                            out.push((i, x + y));
                        }
                        a.next();
                        b.next();
                    }
                }
                (Some(&&e), None) => {
                    out.push(e);
                    a.next();
                }
                (None, Some(&&e)) => {
                    out.push(e);
                    b.next();
                }
                (None, None) => break,
            }
        }
        SparseVector { dim: self.dim, entries: out }
    }
}

impl FeatureVector for SparseVector {
    fn dim(&self) -> usize {
        self.dim
    }

    fn dot(&self, w: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| w[i as usize] * v).sum()
    }

    fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        for &(i, v) in &self.entries {
            w[i as usize] += scale * v;
        }
    }

    fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum()
    }

    fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.1.is_finite())
    }

    fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(pub Vec<f64>);

impl DenseVector {
    pub fn zeros(dim: usize) -> Self {
        DenseVector(vec![0.0; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn l2_normalized(&self) -> DenseVector {
        let norm = self.squared_norm().sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        DenseVector(self.0.iter().map(|v| v / norm).collect())
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

impl FeatureVector for DenseVector {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn dot(&self, w: &[f64]) -> f64 {
        self.0.iter().zip(w).map(|(x, w)| x * w).sum()
    }

    fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        for (w, x) in w.iter_mut().zip(&self.0) {
            *w += scale * x;
        }
    }

    fn squared_norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

/// Either representation, for training sets that mix them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Features {
    Sparse(SparseVector),
    Dense(DenseVector),
}

impl From<SparseVector> for Features {
    fn from(v: SparseVector) -> Self {
        Features::Sparse(v)
    }
}

impl From<DenseVector> for Features {
    fn from(v: DenseVector) -> Self {
        Features::Dense(v)
    }
}

impl FeatureVector for Features {
    fn dim(&self) -> usize {
        match self {
            Features::Sparse(v) => v.dim(),
            Features::Dense(v) => v.dim(),
        }
    }

    fn dot(&self, w: &[f64]) -> f64 {
        match self {
            Features::Sparse(v) => v.dot(w),
            Features::Dense(v) => v.dot(w),
        }
    }

    fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        match self {
            Features::Sparse(v) => v.add_scaled_to(w, scale),
            Features::Dense(v) => v.add_scaled_to(w, scale),
        }
    }

    fn squared_norm(&self) -> f64 {
        match self {
            Features::Sparse(v) => v.squared_norm(),
            Features::Dense(v) => v.squared_norm(),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Features::Sparse(v) => v.is_finite(),
            Features::Dense(v) => v.is_finite(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Features::Sparse(v) => v.is_zero(),
            Features::Dense(v) => v.is_zero(),
        }
    }
}

impl<T: FeatureVector + ?Sized> FeatureVector for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn dot(&self, w: &[f64]) -> f64 {
        (**self).dot(w)
    }
    fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        (**self).add_scaled_to(w, scale)
    }
    fn squared_norm(&self) -> f64 {
        (**self).squared_norm()
    }
    fn is_finite(&self) -> bool {
        (**self).is_finite()
    }
    fn is_zero(&self) -> bool {
        (**self).is_zero()
    }
}
