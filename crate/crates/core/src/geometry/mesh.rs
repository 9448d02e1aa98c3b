//! Triangle meshes with tagged boundary edges and the plain-text exchange format.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::{cross, norm, sub, Point2, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeTag {
    DirichletOuter,
    NeumannHole,
    /// Edge on the `y1 = 0` or `y1 = l1` side of a periodic cell.
    PeriodicX,
    /// Edge on the `y2 = 0` or `y2 = l2` side of a periodic cell.
    PeriodicY,
}

impl EdgeTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeTag::DirichletOuter => "DIRICHLET_OUTER",
            EdgeTag::NeumannHole => "NEUMANN_HOLE",
            EdgeTag::PeriodicX => "PERIODIC_X",
            EdgeTag::PeriodicY => "PERIODIC_Y",
        }
    }
}

impl fmt::Display for EdgeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "DIRICHLET_OUTER" => Ok(EdgeTag::DirichletOuter),
            "NEUMANN_HOLE" => Ok(EdgeTag::NeumannHole),
            "PERIODIC_X" => Ok(EdgeTag::PeriodicX),
            "PERIODIC_Y" => Ok(EdgeTag::PeriodicY),
            other => Err(Error::Mesh(format!("unknown edge tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaggedEdge {
    pub nodes: [usize; 2],
    pub tag: EdgeTag,
}

/// Conforming triangulation; triangles are stored counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T> {
    pub nodes: Vec<Point2<T>>,
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<TaggedEdge>,
}

impl<T: Real> TriMesh<T> {
    /// Builds a mesh, reorienting clockwise triangles. Fails on out-of-range
    /// indices or triangles without positive area.
    pub fn new(nodes: Vec<Point2<T>>, triangles: Vec<[usize; 3]>, edges: Vec<TaggedEdge>) -> Result<Self> {
        let mut mesh = Self { nodes, triangles, edges };
        let n = mesh.nodes.len();
        for (t, tri) in mesh.triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Mesh(format!("triangle {t} references a missing node")));
            }
            let [a, b, c] = *tri;
            let p = &mesh.nodes;
            let s = cross(sub(p[b], p[a]), sub(p[c], p[a]));
            if s < T::zero() {
                tri.swap(1, 2);
            }
        }
        for (t, _) in mesh.triangles.iter().enumerate() {
            let area = mesh.triangle_area(t);
            if !(area > T::zero()) {
                return Err(Error::Mesh(format!("triangle {t} has non-positive area {area}")));
            }
        }
        if mesh.edges.iter().any(|e| e.nodes.iter().any(|&i| i >= n)) {
            return Err(Error::Mesh("edge references a missing node".into()));
        }
        Ok(mesh)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Point2<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> T {
        let [a, b, c] = self.vertices(t);
        cross(sub(b, a), sub(c, a)) / T::lit(2.0)
    }

    pub fn total_area(&self) -> T {
        let areas: Vec<T> = (0..self.n_triangles()).map(|t| self.triangle_area(t)).collect();
        crate::scalar::pairwise_sum(&areas)
    }

    /// Longest edge over all triangles.
    pub fn max_diameter(&self) -> T {
        (0..self.n_triangles()).fold(T::zero(), |m, t| {
            let [a, b, c] = self.vertices(t);
            m.max(norm(sub(a, b))).max(norm(sub(b, c))).max(norm(sub(c, a)))
        })
    }

    /// Edges that belong to exactly one triangle, sorted by node pair.
    pub fn boundary_edges(&self) -> Vec<[usize; 2]> {
        let mut count: HashMap<[usize; 2], (usize, [usize; 2])> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let e = [tri[k], tri[(k + 1) % 3]];
                let key = [e[0].min(e[1]), e[0].max(e[1])];
                count.entry(key).or_insert((0, e)).0 += 1;
            }
        }
        let mut out: Vec<[usize; 2]> =
            count.into_iter().filter(|(_, (c, _))| *c == 1).map(|(_, (_, e))| e).collect();
        out.sort_unstable();
        out
    }

    pub fn edges_with_tag(&self, tag: EdgeTag) -> impl Iterator<Item = &TaggedEdge> {
        self.edges.iter().filter(move |e| e.tag == tag)
    }

    /// Sorted, deduplicated nodes lying on edges with the given tag.
    pub fn nodes_with_tag(&self, tag: EdgeTag) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges_with_tag(tag).flat_map(|e| e.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn(Point2<T>) -> T) -> Vec<T> {
        self.nodes.iter().map(|&p| f(p)).collect()
    }

    /// Writes the exchange format: header `nodes N triangles T edges E`, then
    /// `x y` lines, `i j k` lines and `i j TAG` lines.
    pub fn write_exchange<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "nodes {} triangles {} edges {}",
            self.nodes.len(),
            self.triangles.len(),
            self.edges.len()
        )?;
        for p in &self.nodes {
            writeln!(w, "{:e} {:e}", p[0].to_f64_lossy(), p[1].to_f64_lossy())?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.edges {
            writeln!(w, "{} {} {}", e.nodes[0], e.nodes[1], e.tag)?;
        }
        Ok(())
    }

    pub fn read_exchange<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().map(|l| l.map_err(|e| Error::Mesh(e.to_string())));
        let header = lines.next().ok_or_else(|| Error::Mesh("empty mesh file".into()))??;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "nodes" || h[2] != "triangles" || h[4] != "edges" {
            return Err(Error::Mesh(format!("bad header {header:?}")));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|e| Error::Mesh(e.to_string()));
        let (nn, nt, ne) = (count(h[1])?, count(h[3])?, count(h[5])?);
        let mut next = |what: &str| -> Result<Vec<String>> {
            let l = lines
                .next()
                .ok_or_else(|| Error::Mesh(format!("file ended while reading {what}")))??;
            Ok(l.split_whitespace().map(str::to_owned).collect())
        };
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let f = next("nodes")?;
            let x: f64 = f.first().and_then(|s| s.parse().ok()).ok_or_else(|| Error::Mesh("bad node".into()))?;
            let y: f64 = f.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Mesh("bad node".into()))?;
            nodes.push([T::lit(x), T::lit(y)]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let f = next("triangles")?;
            if f.len() != 3 {
                return Err(Error::Mesh("bad triangle line".into()));
            }
            triangles.push([count(&f[0])?, count(&f[1])?, count(&f[2])?]);
        }
        let mut edges = Vec::with_capacity(ne);
        for _ in 0..ne {
            let f = next("edges")?;
            if f.len() != 3 {
                return Err(Error::Mesh("bad edge line".into()));
            }
            edges.push(TaggedEdge { nodes: [count(&f[0])?, count(&f[1])?], tag: f[2].parse()? });
        }
        Self::new(nodes, triangles, edges)
    }

    /// Writes a nodal field, one value per line with 17 significant digits.
    pub fn write_field<W: Write>(&self, mut w: W, name: &str, values: &[T]) -> std::io::Result<()> {
        writeln!(w, "field {} nodes {}", name, values.len())?;
        for v in values {
            writeln!(w, "{:.16e}", v.to_f64_lossy())?;
        }
        Ok(())
    }
}

/// Lexicographic (x, then y) permutation of `nodes`; ties keep insertion order.
/// Returns `order` with `order[new] = old`.
pub(crate) fn lexicographic_order<T: Real>(nodes: &[Point2<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (nodes[a], nodes[b]);
        p[0].partial_cmp(&q[0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(p[1].partial_cmp(&q[1]).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.cmp(&b))
    });
    order
}

/// Bucket-grid point location on a triangle mesh.
#[derive(Debug, Clone)]
pub struct PointLocator<T> {
    origin: Point2<T>,
    cell: Point2<T>,
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<T: Real> PointLocator<T> {
    pub fn new(mesh: &TriMesh<T>) -> Self {
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = ((mesh.n_triangles().max(1) as f64).sqrt().ceil() as usize).max(1);
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / T::from_count(side)).max(T::epsilon()),
            ((hi[1] - lo[1]) / T::from_count(side)).max(T::epsilon()),
        ];
        let mut buckets = vec![Vec::new(); side * side];
        for t in 0..mesh.n_triangles() {
            let v = mesh.vertices(t);
            let mut bl = [usize::MAX; 2];
            let mut bh = [0usize; 2];
            for p in v {
                for d in 0..2 {
                    let i = Self::index(p[d], lo[d], cell[d], dims[d]);
                    bl[d] = bl[d].min(i);
                    bh[d] = bh[d].max(i);
                }
            }
            for j in bl[1]..=bh[1] {
                for i in bl[0]..=bh[0] {
                    buckets[j * side + i].push(t);
                }
            }
        }
        Self { origin: lo, cell, dims, buckets }
    }

    fn index(x: T, lo: T, cell: T, n: usize) -> usize {
        let f = ((x - lo) / cell).floor().to_f64_lossy();
        if f < 0.0 {
            0
        } else {
            (f as usize).min(n - 1)
        }
    }

    /// Containing triangle and barycentric weights; points on shared edges
    /// resolve to the first candidate.
    pub fn locate(&self, mesh: &TriMesh<T>, p: Point2<T>) -> Option<(usize, [T; 3])> {
        let i = Self::index(p[0], self.origin[0], self.cell[0], self.dims[0]);
        let j = Self::index(p[1], self.origin[1], self.cell[1], self.dims[1]);
        let tol = T::lit(-1e-10);
        let mut best: Option<(usize, [T; 3], T)> = None;
        for &t in &self.buckets[j * self.dims[0] + i] {
            let [a, b, c] = mesh.vertices(t);
            let det = cross(sub(b, a), sub(c, a));
            let l1 = cross(sub(p, a), sub(c, a)) / det;
            let l2 = cross(sub(b, a), sub(p, a)) / det;
            let l0 = T::one() - l1 - l2;
            let worst = l0.min(l1).min(l2);
            if worst >= T::zero() {
                return Some((t, [l0, l1, l2]));
            }
            if worst >= tol && best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, [l0, l1, l2], worst));
            }
        }
        best.map(|(t, w, _)| (t, w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> TriMesh<f64> {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        // Second triangle given clockwise on purpose.
        let tris = vec![[0, 1, 2], [0, 3, 2]];
        let edges = vec![TaggedEdge { nodes: [0, 1], tag: EdgeTag::DirichletOuter }];
        TriMesh::new(nodes, tris, edges).unwrap()
    }

    #[test]
    fn orientation_is_normalised() {
        let m = square();
        assert!((0..2).all(|t| m.triangle_area(t) > 0.0));
        assert_eq!(m.total_area(), 1.0);
        assert_eq!(m.boundary_edges().len(), 4);
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(TriMesh::new(nodes, vec![[0, 1, 2]], vec![]).is_err());
    }

    #[test]
    fn exchange_format_roundtrip() {
        let m = square();
        let mut buf = Vec::new();
        m.write_exchange(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("nodes 4 triangles 2 edges 1\n"));
        assert!(text.contains("0 1 DIRICHLET_OUTER"));
        let back: TriMesh<f64> = TriMesh::read_exchange(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn locator_finds_points() {
        let m = square();
        let loc = PointLocator::new(&m);
        let (t, w) = loc.locate(&m, [0.7, 0.2]).unwrap();
        let [a, b, c] = m.vertices(t);
        let x = w[0] * a[0] + w[1] * b[0] + w[2] * c[0];
        let y = w[0] * a[1] + w[1] * b[1] + w[2] * c[1];
        assert!((x - 0.7).abs() < 1e-14 && (y - 0.2).abs() < 1e-14);
        assert!(loc.locate(&m, [2.0, 2.0]).is_none());
    }
}
