//! Boundary-fitted triangulation of the periodicity cell.
//!
//! The cell boundary carries `nx` (resp. `ny`) uniform segments per side. With
//! a hole, rays from the hole centre to the perimeter nodes define an O-grid:
//! quadrilateral rings between `∂S` and `∂Y` (the solid part `Y*`) and between
//! a shrunken copy of `∂Y` and `∂S` (the hole interior, used only for filling),
//! plus a structured grid inside the shrunken box. Quad diagonals follow the
//! quadrant (lattice) or octant (rings) of the quad centroid, so a geometry
//! with the symmetries of the square yields a mesh with the same symmetries.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::cell::PeriodicCell;
use crate::geometry::mesh::{lexicographic_order, EdgeTag, TaggedEdge, TriMesh};
use crate::scalar::{norm, sub, Point2, Real};

/// Per-cell mesh template in cell coordinates, reused for every tile.
#[derive(Debug, Clone)]
pub(crate) struct CellTemplate<T> {
    pub nodes: Vec<Point2<T>>,
    /// Perimeter-lattice position `(a, b)` for nodes on the structured lattice
    /// (all cell-boundary nodes, plus every node of a hole-free template).
    pub lattice: Vec<Option<(usize, usize)>>,
    /// Node strictly inside the hole.
    pub in_hole: Vec<bool>,
    pub solid: Vec<[usize; 3]>,
    pub fill: Vec<[usize; 3]>,
    /// Nodes on `∂S`, in ring order.
    pub hole_ring: Vec<usize>,
    pub nx: usize,
    pub ny: usize,
}

fn even_segments<T: Real>(l: T, h: T) -> usize {
    let n = (l / h).ceil().to_f64_lossy().max(2.0) as usize;
    n + (n % 2)
}

/// Diagonal choice: `true` selects the `v0–v2` diagonal.
///
/// Lattice quads use the quadrant of the centroid. Ring quads reverse their
/// orientation under the swap `y1 ↔ y2`, so they use the octant instead.
fn first_diagonal<T: Real>(centroid: Point2<T>, center: Point2<T>, ring: bool) -> bool {
    let d = sub(centroid, center);
    let s = if ring { d[0] * d[1] * (d[0].abs() - d[1].abs()) } else { d[0] * d[1] };
    s >= T::zero()
}

fn split_quad<T: Real>(q: [usize; 4], nodes: &[Point2<T>], center: Point2<T>, ring: bool, out: &mut Vec<[usize; 3]>) {
    let quarter = T::lit(0.25);
    let m = [
        (nodes[q[0]][0] + nodes[q[1]][0] + nodes[q[2]][0] + nodes[q[3]][0]) * quarter,
        (nodes[q[0]][1] + nodes[q[1]][1] + nodes[q[2]][1] + nodes[q[3]][1]) * quarter,
    ];
    if first_diagonal(m, center, ring) {
        out.push([q[0], q[1], q[2]]);
        out.push([q[0], q[2], q[3]]);
    } else {
        out.push([q[0], q[1], q[3]]);
        out.push([q[1], q[2], q[3]]);
    }
}

/// Structured `mx × my` block; node `(a, b)` is at index `b*(mx+1)+a`.
pub(crate) fn structured_block<T: Real>(
    mx: usize,
    my: usize,
    coord: impl Fn(usize, usize) -> Point2<T>,
) -> (Vec<Point2<T>>, Vec<[usize; 3]>) {
    let idx = |a: usize, b: usize| b * (mx + 1) + a;
    let mut nodes = Vec::with_capacity((mx + 1) * (my + 1));
    for b in 0..=my {
        for a in 0..=mx {
            nodes.push(coord(a, b));
        }
    }
    let center = [
        (nodes[idx(0, 0)][0] + nodes[idx(mx, my)][0]) / T::lit(2.0),
        (nodes[idx(0, 0)][1] + nodes[idx(mx, my)][1]) / T::lit(2.0),
    ];
    let mut tris = Vec::with_capacity(2 * mx * my);
    for b in 0..my {
        for a in 0..mx {
            let q = [idx(a, b), idx(a + 1, b), idx(a + 1, b + 1), idx(a, b + 1)];
            split_quad(q, &nodes, center, false, &mut tris);
        }
    }
    (nodes, tris)
}

/// Perimeter lattice positions, counter-clockwise from the origin.
fn perimeter(nx: usize, ny: usize) -> Vec<(usize, usize)> {
    let mut p = Vec::with_capacity(2 * (nx + ny));
    p.extend((0..nx).map(|a| (a, 0)));
    p.extend((0..ny).map(|b| (nx, b)));
    p.extend((0..nx).map(|a| (nx - a, ny)));
    p.extend((0..ny).map(|b| (0, ny - b)));
    p
}

impl<T: Real> CellTemplate<T> {
    pub fn build(cell: &PeriodicCell<T>, h: T) -> Result<Self> {
        let l = cell.lengths();
        if !(h > T::zero()) {
            return Err(Error::Mesh(format!("mesh size must be positive, got {h}")));
        }
        if h > l[0].min(l[1]) / T::lit(4.0) * (T::one() + T::lit(1e-9)) {
            return Err(Error::Mesh(format!(
                "mesh size {h} exceeds a quarter of the smallest cell length"
            )));
        }
        if !cell.hole().is_empty() && h >= cell.clearance() {
            return Err(Error::Mesh(format!(
                "mesh size {} cannot resolve the hole clearance {}",
                h,
                cell.clearance()
            )));
        }
        let nx = even_segments(l[0], h);
        let ny = even_segments(l[1], h);
        let sx = l[0] / T::from_count(nx);
        let sy = l[1] / T::from_count(ny);
        let lattice_point = |a: usize, b: usize| [T::from_count(a) * sx, T::from_count(b) * sy];

        let Some(center) = cell.hole().center() else {
            let (nodes, solid) = structured_block(nx, ny, lattice_point);
            let lattice = (0..=ny).flat_map(|b| (0..=nx).map(move |a| Some((a, b)))).collect();
            let n = nodes.len();
            return Ok(Self {
                nodes,
                lattice,
                in_hole: vec![false; n],
                solid,
                fill: Vec::new(),
                hole_ring: Vec::new(),
                nx,
                ny,
            });
        };

        let perim = perimeter(nx, ny);
        let k_count = perim.len();
        let outer: Vec<Point2<T>> = perim.iter().map(|&(a, b)| lattice_point(a, b)).collect();
        let mut ring_hole = Vec::with_capacity(k_count);
        let mut shrink = T::infinity();
        for p in &outer {
            let d = sub(*p, center);
            let len = norm(d);
            let u = [d[0] / len, d[1] / len];
            let rho = cell
                .hole()
                .radial_extent(u)
                .ok_or_else(|| Error::Mesh("ray from the hole centre misses the hole boundary".into()))?;
            if rho >= len {
                return Err(Error::Mesh("hole boundary reaches the cell perimeter".into()));
            }
            shrink = shrink.min(rho / len);
            ring_hole.push([center[0] + rho * u[0], center[1] + rho * u[1]]);
        }
        let sigma = shrink / T::lit(2.0);
        let inner_point = |a: usize, b: usize| {
            let p = lattice_point(a, b);
            [center[0] + sigma * (p[0] - center[0]), center[1] + sigma * (p[1] - center[1])]
        };

        let spacing = sx.max(sy);
        let layers = |from: &[Point2<T>], to: &[Point2<T>]| -> usize {
            let mean = from.iter().zip(to).map(|(a, b)| norm(sub(*b, *a))).sum::<T>() / T::from_count(k_count);
            ((mean / spacing).round().to_f64_lossy() as usize).max(1)
        };
        let ring_inner: Vec<Point2<T>> = perim.iter().map(|&(a, b)| inner_point(a, b)).collect();
        let l_in = layers(&ring_inner, &ring_hole);
        let l_out = layers(&ring_hole, &outer);

        let (mut nodes, fill_grid) = structured_block(nx, ny, inner_point);
        let mut lattice = vec![None; nodes.len()];
        let mut in_hole = vec![true; nodes.len()];
        let grid_idx = |a: usize, b: usize| b * (nx + 1) + a;

        // rings[r][k]: r = 0 inner box perimeter, r = l_in hole boundary,
        // r = l_in + l_out cell perimeter.
        let n_rings = l_in + l_out + 1;
        let mut rings: Vec<Vec<usize>> = Vec::with_capacity(n_rings);
        rings.push(perim.iter().map(|&(a, b)| grid_idx(a, b)).collect());
        for r in 1..n_rings {
            let mut ring = Vec::with_capacity(k_count);
            for k in 0..k_count {
                let (from, to, s) = if r <= l_in {
                    (ring_inner[k], ring_hole[k], T::from_count(r) / T::from_count(l_in))
                } else {
                    (ring_hole[k], outer[k], T::from_count(r - l_in) / T::from_count(l_out))
                };
                let p = if r == l_in {
                    ring_hole[k]
                } else if r == n_rings - 1 {
                    outer[k]
                } else {
                    [from[0] + s * (to[0] - from[0]), from[1] + s * (to[1] - from[1])]
                };
                ring.push(nodes.len());
                nodes.push(p);
                lattice.push(if r == n_rings - 1 { Some(perim[k]) } else { None });
                in_hole.push(r < l_in);
            }
            rings.push(ring);
        }

        let mut fill = fill_grid;
        let mut solid = Vec::new();
        for r in 0..n_rings - 1 {
            let target = if r < l_in { &mut fill } else { &mut solid };
            for k in 0..k_count {
                let k1 = (k + 1) % k_count;
                let q = [rings[r][k], rings[r][k1], rings[r + 1][k1], rings[r + 1][k]];
                split_quad(q, &nodes, center, true, target);
            }
        }
        Ok(Self { nodes, lattice, in_hole, solid, fill, hole_ring: rings[l_in].clone(), nx, ny })
    }
}

/// Triangulation of `Y*` with periodic identification of opposite sides.
#[derive(Debug, Clone)]
pub struct CellMesh<T> {
    pub mesh: TriMesh<T>,
    pub lengths: Point2<T>,
    /// `(slave, master)` pairs: nodes on `y1 = l1` or `y2 = l2` mapped to their
    /// partner on the opposite side (corners map to the origin corner).
    pub periodic_map: Vec<(usize, usize)>,
    /// Target mesh size the mesh was built for.
    pub h: T,
    /// Segments per side, `(nx, ny)`.
    pub segments: (usize, usize),
}

impl<T: Real> CellMesh<T> {
    /// `|Y*|` measured on the mesh.
    pub fn solid_area(&self) -> T {
        self.mesh.total_area()
    }

    /// `ϑ = |Y*|/|Y|` measured on the mesh.
    pub fn theta(&self) -> T {
        self.solid_area() / (self.lengths[0] * self.lengths[1])
    }

    pub fn hole_edges(&self) -> impl Iterator<Item = &TaggedEdge> {
        self.mesh.edges_with_tag(EdgeTag::NeumannHole)
    }
}

/// Build a conforming periodic mesh of `Y* = Y \ closure(S)` with target size `h`.
pub fn build_cell_mesh<T: Real>(cell: &PeriodicCell<T>, h: T) -> Result<CellMesh<T>> {
    let tpl = CellTemplate::build(cell, h)?;
    let keep: Vec<usize> = (0..tpl.nodes.len()).filter(|&i| !tpl.in_hole[i]).collect();
    let kept_nodes: Vec<Point2<T>> = keep.iter().map(|&i| tpl.nodes[i]).collect();
    let order = lexicographic_order(&kept_nodes);
    let mut renum = vec![usize::MAX; tpl.nodes.len()];
    for (new, &old_kept) in order.iter().enumerate() {
        renum[keep[old_kept]] = new;
    }
    let nodes: Vec<Point2<T>> = order.iter().map(|&o| kept_nodes[o]).collect();
    let triangles: Vec<[usize; 3]> =
        tpl.solid.iter().map(|t| [renum[t[0]], renum[t[1]], renum[t[2]]]).collect();

    let mut lattice_of: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut node_at: HashMap<(usize, usize), usize> = HashMap::new();
    for (old, key) in tpl.lattice.iter().enumerate() {
        if let Some(k) = key {
            if renum[old] != usize::MAX {
                lattice_of.insert(renum[old], *k);
                node_at.insert(*k, renum[old]);
            }
        }
    }
    let (nx, ny) = (tpl.nx, tpl.ny);
    let mut mesh = TriMesh::new(nodes, triangles, Vec::new())?;
    let on_perimeter = |k: &(usize, usize)| k.0 == 0 || k.0 == nx || k.1 == 0 || k.1 == ny;
    let mut edges = Vec::new();
    for e in mesh.boundary_edges() {
        let tag = match (lattice_of.get(&e[0]), lattice_of.get(&e[1])) {
            (Some(p), Some(q)) if on_perimeter(p) && on_perimeter(q) => {
                if (p.0 == 0 && q.0 == 0) || (p.0 == nx && q.0 == nx) {
                    EdgeTag::PeriodicX
                } else if (p.1 == 0 && q.1 == 0) || (p.1 == ny && q.1 == ny) {
                    EdgeTag::PeriodicY
                } else {
                    return Err(Error::Mesh("boundary edge cuts across a cell corner".into()));
                }
            }
            _ => {
                if cell.hole().is_empty() {
                    return Err(Error::Mesh("interior boundary edge in a hole-free cell".into()));
                }
                EdgeTag::NeumannHole
            }
        };
        edges.push(TaggedEdge { nodes: e, tag });
    }
    mesh.edges = edges;

    let mut periodic_map = Vec::new();
    let mut slaves: Vec<(usize, (usize, usize))> =
        lattice_of.iter().map(|(&n, &k)| (n, k)).filter(|(_, k)| k.0 == nx || k.1 == ny).collect();
    slaves.sort_unstable();
    for (node, (a, b)) in slaves {
        let master_key = (a % nx, b % ny);
        let master = *node_at
            .get(&master_key)
            .ok_or_else(|| Error::Mesh(format!("no periodic partner for lattice node {:?}", (a, b))))?;
        periodic_map.push((node, master));
    }
    Ok(CellMesh { mesh, lengths: cell.lengths(), periodic_map, h, segments: (nx, ny) })
}
