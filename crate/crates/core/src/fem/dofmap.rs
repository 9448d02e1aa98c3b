use crate::error::{Error, Result};
use crate::geometry::{CellMesh, EdgeTag, TriMesh};
use crate::scalar::Real;

/// Node → degree-of-freedom numbering.
///
/// Eliminated (Dirichlet) nodes have no DOF and carry the value zero;
/// periodic partners share one DOF.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofMap {
    node_to_dof: Vec<Option<usize>>,
    n_dofs: usize,
    eliminated: Vec<usize>,
}

impl DofMap {
    pub fn from_parts(node_to_dof: Vec<Option<usize>>, n_dofs: usize, eliminated: Vec<usize>) -> Self {
        Self { node_to_dof, n_dofs, eliminated }
    }

    /// One DOF per node.
    pub fn identity(n_nodes: usize) -> Self {
        Self { node_to_dof: (0..n_nodes).map(Some).collect(), n_dofs: n_nodes, eliminated: Vec::new() }
    }

    /// Eliminates every node touching an edge with one of `tags`; the remaining
    /// nodes are numbered in node order.
    pub fn dirichlet<T: Real>(mesh: &TriMesh<T>, tags: &[EdgeTag]) -> Self {
        let mut fixed = vec![false; mesh.n_nodes()];
        for e in mesh.edges.iter().filter(|e| tags.contains(&e.tag)) {
            fixed[e.nodes[0]] = true;
            fixed[e.nodes[1]] = true;
        }
        let mut next = 0;
        let mut eliminated = Vec::new();
        let node_to_dof = fixed
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                if f {
                    eliminated.push(i);
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect();
        Self { node_to_dof, n_dofs: next, eliminated }
    }

    /// Periodic numbering of a cell mesh: every slave shares its master's DOF.
    pub fn periodic<T: Real>(cell: &CellMesh<T>) -> Result<Self> {
        let n = cell.mesh.n_nodes();
        let mut master: Vec<usize> = (0..n).collect();
        for &(s, m) in &cell.periodic_map {
            if s >= n || m >= n || s == m {
                return Err(Error::Mesh(format!("invalid periodic pair ({s}, {m})")));
            }
            master[s] = m;
        }
        // Resolve chains so every node points at a root.
        for i in 0..n {
            let mut r = i;
            let mut guard = 0;
            while master[r] != r {
                r = master[r];
                guard += 1;
                if guard > n {
                    return Err(Error::Mesh("cyclic periodic identification".into()));
                }
            }
            master[i] = r;
        }
        let mut root_dof = vec![usize::MAX; n];
        let mut next = 0;
        for i in 0..n {
            if master[i] == i {
                root_dof[i] = next;
                next += 1;
            }
        }
        let node_to_dof = (0..n).map(|i| Some(root_dof[master[i]])).collect();
        Ok(Self { node_to_dof, n_dofs: next, eliminated: Vec::new() })
    }

    #[inline]
    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_nodes(&self) -> usize {
        self.node_to_dof.len()
    }

    pub fn eliminated(&self) -> &[usize] {
        &self.eliminated
    }

    /// DOF vector from nodal values (last writer wins among periodic partners).
    pub fn gather<T: Real>(&self, nodal: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_dofs];
        for (i, d) in self.node_to_dof.iter().enumerate() {
            if let Some(d) = d {
                out[*d] = nodal[i];
            }
        }
        out
    }

    /// Nodal values from a DOF vector; eliminated nodes get zero.
    pub fn scatter<T: Real>(&self, dofs: &[T]) -> Vec<T> {
        self.node_to_dof.iter().map(|d| d.map_or(T::zero(), |d| dofs[d])).collect()
    }

    /// Sum nodal load contributions into DOF rows (periodic partners add up).
    pub fn accumulate<T: Real>(&self, nodal_load: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_dofs];
        for (i, d) in self.node_to_dof.iter().enumerate() {
            if let Some(d) = d {
                out[*d] += nodal_load[i];
            }
        }
        out
    }
}
