use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::fem::SparseOperator;
use crate::scalar::Real;

/// Envelope (skyline) Cholesky factor `P A Pᵀ = L Lᵀ` of a symmetric positive
/// definite operator, with a reverse Cuthill–McKee permutation `P`.
///
/// Built once per time-stepping operator; every solve then costs two sweeps
/// over the envelope. Solves are bit-reproducible and batched solves give, per
/// column, exactly the result of a single solve.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<T> {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// First stored column of each row.
    first: Vec<usize>,
    /// Offset of row `i` (entry `first[i]`) in `data`; the diagonal is last.
    start: Vec<usize>,
    data: Vec<T>,
}

/// Reverse Cuthill–McKee ordering of the operator's graph, `order[new] = old`.
/// Components are started from a pseudo-peripheral node; ties break by degree,
/// then index.
pub fn reverse_cuthill_mckee<T: Real>(op: &SparseOperator<T>) -> Vec<usize> {
    let n = op.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in op.entries() {
        if i != j {
            adj[i].push(j);
        }
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    for a in adj.iter_mut() {
        a.sort_by_key(|&j| (degree[j], j));
        a.dedup();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs_last = |root: usize| -> (usize, usize) {
        // Returns the farthest min-degree node and the eccentricity of `root`.
        let mut level = vec![usize::MAX; n];
        let mut q = VecDeque::from([root]);
        level[root] = 0;
        let mut touched = vec![root];
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    touched.push(w);
                    q.push_back(w);
                }
            }
        }
        let ecc = touched.iter().map(|&v| level[v]).max().unwrap_or(0);
        let far = touched
            .iter()
            .copied()
            .filter(|&v| level[v] == ecc)
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(root);
        (far, ecc)
    };
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let mut root = seed;
        let (mut far, mut ecc) = bfs_last(root);
        for _ in 0..4 {
            let (f2, e2) = bfs_last(far);
            if e2 <= ecc {
                break;
            }
            root = far;
            far = f2;
            ecc = e2;
        }
        let begin = order.len();
        visited[root] = true;
        order.push(root);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &w in &adj[v] {
                if !visited[w] {
                    visited[w] = true;
                    order.push(w);
                }
            }
        }
    }
    order.reverse();
    order
}

impl<T: Real> EnvelopeCholesky<T> {
    pub fn factor(op: &SparseOperator<T>) -> Result<Self> {
        if !op.symmetric {
            return Err(Error::Solver("envelope Cholesky needs a symmetric operator".into()));
        }
        let n = op.dim();
        let perm = reverse_cuthill_mckee(op);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, j, _) in op.entries() {
            let (a, b) = (inv[i], inv[j]);
            let (r, c) = if a >= b { (a, b) } else { (b, a) };
            first[r] = first[r].min(c);
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        let mut data = vec![T::zero(); total];
        for (i, j, v) in op.entries() {
            let (a, b) = (inv[i], inv[j]);
            if a >= b {
                data[start[a] + b - first[a]] = v;
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = start[i] + lo - fi;
                let rj = start[j] + lo - fj;
                let len = j - lo;
                for (a, b) in data[ri..ri + len].iter().zip(&data[rj..rj + len]) {
                    s -= *a * *b;
                }
                if j < i {
                    data[start[i] + j - fi] = s / data[start[j + 1] - 1];
                } else {
                    if !(s > T::zero()) {
                        return Err(Error::SingularSystem(format!("non-positive pivot {s} at row {i}")));
                    }
                    data[start[i] + i - fi] = s.sqrt();
                }
            }
        }
        Ok(Self { n, perm, first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L`.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let mut x = b.to_vec();
        self.solve_batch(&mut x, 1)?;
        Ok(x)
    }

    /// Solves in place for `width` right-hand sides stored interleaved:
    /// entry `i` of column `c` lives at `b[i * width + c]`.
    pub fn solve_batch(&self, b: &mut [T], width: usize) -> Result<()> {
        let n = self.n;
        if width == 0 || b.len() != n * width {
            return Err(Error::Dimension { expected: n * width.max(1), found: b.len() });
        }
        let mut y = vec![T::zero(); n * width];
        for (new, &old) in self.perm.iter().enumerate() {
            y[new * width..(new + 1) * width].copy_from_slice(&b[old * width..(old + 1) * width]);
        }
        if width == 1 {
            self.sweep_single(&mut y);
        } else {
            match width {
                2 => self.sweep_lanes::<2>(&mut y),
                4 => self.sweep_lanes::<4>(&mut y),
                8 => self.sweep_lanes::<8>(&mut y),
                16 => self.sweep_lanes::<16>(&mut y),
                _ => self.sweep_batch(&mut y, width),
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old * width..(old + 1) * width].copy_from_slice(&y[new * width..(new + 1) * width]);
        }
        Ok(())
    }

    fn sweep_single(&self, y: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, d) = row.split_at(row.len() - 1);
            let mut acc = y[i];
            for (l, v) in off.iter().zip(&y[fi..i]) {
                acc -= *l * *v;
            }
            y[i] = acc / d[0];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, d) = row.split_at(row.len() - 1);
            let xi = y[i] / d[0];
            y[i] = xi;
            for (l, v) in off.iter().zip(&mut y[fi..i]) {
                *v -= *l * xi;
            }
        }
    }

    /// [`Self::sweep_batch`] with the width fixed at compile time (same
    /// operations in the same order, so bitwise equal).
    fn sweep_lanes<const W: usize>(&self, y: &mut [T]) {
        let (rows, _) = y.as_chunks_mut::<W>();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, d) = row.split_at(row.len() - 1);
            let (head, tail) = rows.split_at_mut(i);
            let mut acc = tail[0];
            for (l, yk) in off.iter().zip(&head[fi..]) {
                for c in 0..W {
                    acc[c] -= *l * yk[c];
                }
            }
            for c in 0..W {
                tail[0][c] = acc[c] / d[0];
            }
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, d) = row.split_at(row.len() - 1);
            let (head, tail) = rows.split_at_mut(i);
            let mut xi = tail[0];
            for v in xi.iter_mut() {
                *v /= d[0];
            }
            tail[0] = xi;
            for (l, yk) in off.iter().zip(&mut head[fi..]) {
                for c in 0..W {
                    yk[c] -= *l * xi[c];
                }
            }
        }
    }

    fn sweep_batch(&self, y: &mut [T], width: usize) {
        let n = self.n;
        let mut acc = vec![T::zero(); width];
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, d) = row.split_at(row.len() - 1);
            let (head, tail) = y.split_at_mut(i * width);
            acc.copy_from_slice(&tail[..width]);
            for (l, yk) in off.iter().zip(head[fi * width..].chunks_exact(width)) {
                for (a, v) in acc.iter_mut().zip(yk) {
                    *a -= *l * *v;
                }
            }
            for (t, a) in tail[..width].iter_mut().zip(&acc) {
                *t = *a / d[0];
            }
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let (off, d) = row.split_at(row.len() - 1);
            let (head, tail) = y.split_at_mut(i * width);
            let xi = &mut tail[..width];
            for v in xi.iter_mut() {
                *v /= d[0];
            }
            for (l, yk) in off.iter().zip(head[fi * width..].chunks_exact_mut(width)) {
                for (v, x) in yk.iter_mut().zip(xi.iter()) {
                    *v -= *l * *x;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> SparseOperator<f64> {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        SparseOperator::from_triplets(n, t, true).unwrap()
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = path_laplacian(50);
        let ch = EnvelopeCholesky::factor(&a).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.apply(&x);
        let got = ch.solve(&b).unwrap();
        assert!(got.iter().zip(&x).all(|(g, e)| (g - e).abs() < 1e-10));
        assert!(ch.envelope_size() <= 2 * 50);
    }

    #[test]
    fn batched_columns_match_single_solves() {
        let a = path_laplacian(20);
        let ch = EnvelopeCholesky::factor(&a).unwrap();
        let cols: Vec<Vec<f64>> = (0..3).map(|c| (0..20).map(|i| ((i * (c + 2)) % 7) as f64).collect()).collect();
        let mut inter = vec![0.0; 60];
        for i in 0..20 {
            for c in 0..3 {
                inter[i * 3 + c] = cols[c][i];
            }
        }
        ch.solve_batch(&mut inter, 3).unwrap();
        for c in 0..3 {
            let single = ch.solve(&cols[c]).unwrap();
            for i in 0..20 {
                assert_eq!(single[i].to_bits(), inter[i * 3 + c].to_bits());
            }
        }
    }

    #[test]
    fn indefinite_operator_is_rejected() {
        let a = SparseOperator::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)], true).unwrap();
        assert!(matches!(EnvelopeCholesky::factor(&a), Err(Error::SingularSystem(_))));
    }
}
