use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square CSR matrix over the free DOFs of a [`super::DofMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator<T> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    /// Set when the operator was assembled from a symmetric bilinear form.
    pub symmetric: bool,
    /// Nodes eliminated by Dirichlet conditions (value zero).
    pub eliminated: Vec<usize>,
}

impl<T: Real> SparseOperator<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// sorted `(row, col)` order.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, T)>, symmetric: bool) -> Result<Self> {
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(Error::Assembly(format!("entry ({r}, {c}) outside a {dim}x{dim} operator")));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len() / 2);
        let mut vals: Vec<T> = Vec::with_capacity(triplets.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { dim, row_ptr, cols, vals, symmetric, eliminated: Vec::new() })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim).collect(),
            vals: vec![T::one(); dim],
            symmetric: true,
            eliminated: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `y = A x`.
    pub fn apply_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yi = acc;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.dim];
        self.apply_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        let mut acc = [T::zero(); 4];
        for (i, xi) in x.iter().enumerate() {
            let mut row = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.vals[k] * x[self.cols[k]];
            }
            acc[i % 4] += *xi * row;
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3])
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).map_or(T::zero(), |k| self.vals[self.row_ptr[i] + k])
    }

    /// Iterator over stored `(row, col, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k])))
    }

    /// `a·self + b·other`; both operators must share the sparsity pattern.
    pub fn combine(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.dim != other.dim || self.row_ptr != other.row_ptr || self.cols != other.cols {
            return Err(Error::Assembly("operators do not share a sparsity pattern".into()));
        }
        let vals = self.vals.iter().zip(&other.vals).map(|(x, y)| a * *x + b * *y).collect();
        Ok(Self {
            dim: self.dim,
            row_ptr: self.row_ptr.clone(),
            cols: self.cols.clone(),
            vals,
            symmetric: self.symmetric && other.symmetric,
            eliminated: self.eliminated.clone(),
        })
    }

    /// `max |A_ij − A_ji| / max |A_ij|`.
    pub fn asymmetry(&self) -> T {
        let scale = self.vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if scale == T::zero() {
            return T::zero();
        }
        self.entries().fold(T::zero(), |m, (i, j, v)| m.max((v - self.get(j, i)).abs())) / scale
    }

    /// Coordinate text export, one `i j value` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, j, v) in self.entries() {
            writeln!(w, "{} {} {:.16e}", i, j, v.to_f64_lossy())?;
        }
        Ok(())
    }
}
