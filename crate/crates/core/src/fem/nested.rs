use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::fem::SparseOperator;
use crate::scalar::Real;

/// Subsets at or below this size are ordered without further dissection.
const LEAF: usize = 64;

/// Nested-dissection ordering of the operator's graph, `order[new] = old`.
///
/// Each connected piece is split by a level set of a breadth-first search
/// from a pseudo-peripheral node: the level at which half of the nodes have
/// been reached, thinned to the nodes that touch the far side. Both halves
/// are ordered first, the separator last.
pub fn nested_dissection<T: Real>(op: &SparseOperator<T>) -> Vec<usize> {
    let n = op.dim();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in op.entries() {
        if i != j {
            adj[i].push(j);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let mut state = Dissection { adj, label: vec![0; n], level: vec![usize::MAX; n], next_label: 1, order: Vec::with_capacity(n) };
    state.dissect((0..n).collect(), 0);
    state.order
}

struct Dissection {
    adj: Vec<Vec<usize>>,
    /// Subset id of every node still to be ordered; `usize::MAX` once ordered.
    label: Vec<usize>,
    level: Vec<usize>,
    next_label: usize,
    order: Vec<usize>,
}

impl Dissection {
    fn fresh(&mut self, nodes: &[usize]) -> usize {
        let id = self.next_label;
        self.next_label += 1;
        for &v in nodes {
            self.label[v] = id;
        }
        id
    }

    /// Breadth-first levels from `root` inside subset `id`; returns the nodes
    /// in visiting order. Levels are left in `self.level`.
    fn bfs(&mut self, root: usize, id: usize) -> Vec<usize> {
        let mut seen = vec![root];
        self.level[root] = 0;
        let mut q = VecDeque::from([root]);
        while let Some(v) = q.pop_front() {
            for k in 0..self.adj[v].len() {
                let w = self.adj[v][k];
                if self.label[w] == id && self.level[w] == usize::MAX {
                    self.level[w] = self.level[v] + 1;
                    seen.push(w);
                    q.push_back(w);
                }
            }
        }
        seen
    }

    fn reset(&mut self, nodes: &[usize]) {
        for &v in nodes {
            self.level[v] = usize::MAX;
        }
    }

    fn emit(&mut self, nodes: &[usize]) {
        for &v in nodes {
            self.label[v] = usize::MAX;
        }
        self.order.extend_from_slice(nodes);
    }

    fn dissect(&mut self, nodes: Vec<usize>, id: usize) {
        if nodes.len() <= LEAF {
            // breadth-first inside the leaf keeps neighbours close
            let mut rest = nodes;
            while let Some(&start) = rest.iter().find(|&&v| self.label[v] == id) {
                let comp = self.bfs(start, id);
                self.reset(&comp);
                self.emit(&comp);
                rest.retain(|&v| self.label[v] == id);
            }
            return;
        }
        // split into connected components first
        let comp = self.bfs(nodes[0], id);
        self.reset(&comp);
        if comp.len() < nodes.len() {
            let first = self.fresh(&comp);
            let rest: Vec<usize> = nodes.into_iter().filter(|&v| self.label[v] == id).collect();
            let second = self.fresh(&rest);
            self.dissect(comp, first);
            self.dissect(rest, second);
            return;
        }
        // pseudo-peripheral root
        let mut root = nodes[0];
        let mut seen = self.bfs(root, id);
        let mut depth = self.level[*seen.last().unwrap_or(&root)];
        for _ in 0..4 {
            let far = *seen.last().unwrap_or(&root);
            self.reset(&seen);
            let again = self.bfs(far, id);
            let d = self.level[*again.last().unwrap_or(&far)];
            if d <= depth {
                self.reset(&again);
                seen = self.bfs(root, id);
                break;
            }
            root = far;
            seen = again;
            depth = d;
        }
        if depth < 2 {
            self.reset(&seen);
            self.emit(&seen);
            return;
        }
        let mut counts = vec![0usize; depth + 1];
        for &v in &seen {
            counts[self.level[v]] += 1;
        }
        let half = seen.len() / 2;
        let mut acc = 0;
        let mut cut = 1;
        for (l, &c) in counts.iter().enumerate() {
            if acc + c > half {
                cut = l;
                break;
            }
            acc += c;
        }
        let cut = cut.clamp(1, depth - 1);
        let mut near = Vec::new();
        let mut far = Vec::new();
        let mut sep = Vec::new();
        for &v in &seen {
            let l = self.level[v];
            if l < cut {
                near.push(v);
            } else if l > cut {
                far.push(v);
            } else if self.adj[v].iter().any(|&w| self.label[w] == id && self.level[w] == cut + 1) {
                sep.push(v);
            } else {
                near.push(v);
            }
        }
        self.reset(&seen);
        let a = self.fresh(&near);
        let b = self.fresh(&far);
        for &v in &sep {
            self.label[v] = usize::MAX;
        }
        self.dissect(near, a);
        self.dissect(far, b);
        self.order.extend_from_slice(&sep);
    }
}

/// Sparse Cholesky factor `P A Pᵀ = L Lᵀ` (columns of `L` compressed, diagonal
/// first) with a nested-dissection permutation `P`.
///
/// Batched solves give, per column, exactly the result of a single solve.
#[derive(Debug, Clone)]
pub struct SparseCholesky<T> {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    col_start: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<T>,
}

/// Nodes of row `k` of `L` (the reach of column `k` of the upper triangle in
/// the elimination tree), in an order where descendants come first.
fn row_pattern(k: usize, upper_rows: &[usize], parent: &[usize], stamp: &mut [usize], out: &mut Vec<usize>) {
    out.clear();
    stamp[k] = k;
    let mut paths: Vec<(usize, usize)> = Vec::new();
    let mut buf = Vec::new();
    for &i in upper_rows {
        if i >= k {
            continue;
        }
        let begin = buf.len();
        let mut j = i;
        while stamp[j] != k {
            buf.push(j);
            stamp[j] = k;
            j = parent[j];
        }
        paths.push((begin, buf.len()));
    }
    for &(a, b) in paths.iter().rev() {
        out.extend_from_slice(&buf[a..b]);
    }
}

impl<T: Real> SparseCholesky<T> {
    pub fn factor(op: &SparseOperator<T>) -> Result<Self> {
        if !op.symmetric {
            return Err(Error::Solver("Cholesky needs a symmetric operator".into()));
        }
        let n = op.dim();
        let perm = nested_dissection(op);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // upper triangle of the permuted operator, by column
        let mut upper: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        for (i, j, v) in op.entries() {
            let (a, b) = (inv[i], inv[j]);
            if a <= b {
                upper[b].push((a, v));
            }
        }
        for col in upper.iter_mut() {
            col.sort_unstable_by_key(|e| e.0);
        }
        let upper_rows: Vec<Vec<usize>> = upper.iter().map(|c| c.iter().map(|e| e.0).collect()).collect();

        const NONE: usize = usize::MAX;
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &i in &upper_rows[k] {
                let mut i = i;
                while i != NONE && i < k {
                    let next = ancestor[i];
                    ancestor[i] = k;
                    if next == NONE {
                        parent[i] = k;
                    }
                    i = next;
                }
            }
        }

        let mut stamp = vec![NONE; n];
        let mut pattern = Vec::new();
        let mut counts = vec![1usize; n];
        for k in 0..n {
            row_pattern(k, &upper_rows[k], &parent, &mut stamp, &mut pattern);
            for &j in &pattern {
                counts[j] += 1;
            }
        }
        let mut col_start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for &c in &counts {
            col_start.push(total);
            total += c;
        }
        col_start.push(total);

        let mut rows = vec![0usize; total];
        let mut values = vec![T::zero(); total];
        let mut next = col_start[..n].to_vec();
        let mut x = vec![T::zero(); n];
        stamp.fill(NONE);
        for k in 0..n {
            row_pattern(k, &upper_rows[k], &parent, &mut stamp, &mut pattern);
            for &(i, v) in &upper[k] {
                x[i] = v;
            }
            let mut d = x[k];
            x[k] = T::zero();
            for &i in &pattern {
                let lki = x[i] / values[col_start[i]];
                x[i] = T::zero();
                for p in col_start[i] + 1..next[i] {
                    x[rows[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                rows[next[i]] = k;
                values[next[i]] = lki;
                next[i] += 1;
            }
            if !(d > T::zero()) {
                return Err(Error::SingularSystem(format!("non-positive pivot {d} at row {k}")));
            }
            rows[next[k]] = k;
            values[next[k]] = d.sqrt();
            next[k] += 1;
        }
        Ok(Self { n, perm, col_start, rows, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries of `L`.
    pub fn factor_size(&self) -> usize {
        self.values.len()
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
        match width {
            1 => self.sweep::<1>(&mut y),
            2 => self.sweep::<2>(&mut y),
            4 => self.sweep::<4>(&mut y),
            8 => self.sweep::<8>(&mut y),
            16 => self.sweep::<16>(&mut y),
            _ => self.sweep_any(&mut y, width),
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old * width..(old + 1) * width].copy_from_slice(&y[new * width..(new + 1) * width]);
        }
        Ok(())
    }

    fn sweep<const W: usize>(&self, y: &mut [T]) {
        let (y, _) = y.as_chunks_mut::<W>();
        for j in 0..self.n {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            let d = self.values[s];
            let mut yj = y[j];
            for v in yj.iter_mut() {
                *v /= d;
            }
            y[j] = yj;
            for p in s + 1..e {
                let l = self.values[p];
                let t = &mut y[self.rows[p]];
                for c in 0..W {
                    t[c] -= l * yj[c];
                }
            }
        }
        for j in (0..self.n).rev() {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            let mut acc = y[j];
            for p in s + 1..e {
                let l = self.values[p];
                let t = &y[self.rows[p]];
                for c in 0..W {
                    acc[c] -= l * t[c];
                }
            }
            let d = self.values[s];
            for c in 0..W {
                acc[c] /= d;
            }
            y[j] = acc;
        }
    }

    fn sweep_any(&self, y: &mut [T], width: usize) {
        let mut acc = vec![T::zero(); width];
        for j in 0..self.n {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            let d = self.values[s];
            for v in &mut y[j * width..(j + 1) * width] {
                *v /= d;
            }
            acc.copy_from_slice(&y[j * width..(j + 1) * width]);
            for p in s + 1..e {
                let l = self.values[p];
                let r = self.rows[p];
                for (t, a) in y[r * width..(r + 1) * width].iter_mut().zip(&acc) {
                    *t -= l * *a;
                }
            }
        }
        for j in (0..self.n).rev() {
            let (s, e) = (self.col_start[j], self.col_start[j + 1]);
            acc.copy_from_slice(&y[j * width..(j + 1) * width]);
            for p in s + 1..e {
                let l = self.values[p];
                let r = self.rows[p];
                for (a, t) in acc.iter_mut().zip(&y[r * width..(r + 1) * width]) {
                    *a -= l * *t;
                }
            }
            let d = self.values[s];
            for (t, a) in y[j * width..(j + 1) * width].iter_mut().zip(&acc) {
                *t = *a / d;
            }
        }
    }
}
