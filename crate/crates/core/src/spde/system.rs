use crate::error::{Error, Result};
use crate::fem::{
    assemble_mass, assemble_stiffness, smallest_generalized_eigenvalue, solve_general, solve_spd, solve_spd_from,
    DofMap, SparseCholesky, SparseOperator,
};
use crate::geometry::{EdgeTag, TriMesh};
use crate::scalar::{dot, Point2, Real};
use crate::spde::noise::NoiseModel;
use crate::spde::problem::{ProblemSpec, SourceField};

/// Linear solver used for `(θ_w M + Δt K) u = r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    /// Envelope Cholesky factor computed once (symmetric operators).
    Direct,
    /// Jacobi-preconditioned CG warm-started from the previous state
    /// (BiCGSTAB for nonsymmetric coefficients).
    Iterative,
}

/// Assembled semi-implicit Euler–Maruyama system for one problem on one mesh:
///
/// ```text
/// (θ_w M + Δt K) u^{n+1} = θ_w M u^n + Δt M f(t_n) + Σ_i M g^i ΔW_i
/// ```
///
/// on the DOFs left after eliminating the outer Dirichlet boundary.
pub struct SpdeSystem<T> {
    pub mesh: TriMesh<T>,
    pub dofs: DofMap,
    pub stiffness: SparseOperator<T>,
    pub mass: SparseOperator<T>,
    load_mass: SparseOperator<T>,
    system: SparseOperator<T>,
    factor: Option<SparseCholesky<T>>,
    noise_loads: Vec<Vec<T>>,
    static_forcing: Option<Vec<T>>,
    forcing: SourceField<T>,
    pub source_weight: T,
    pub inertia: T,
    pub dt: T,
    pub steps: usize,
    pub substeps: usize,
    pub noise: NoiseModel<T>,
    /// Initial state on the free DOFs.
    pub initial: Vec<T>,
    noise_intensity: T,
    tol: T,
}

impl<T: Real> SpdeSystem<T> {
    pub fn assemble(spec: &ProblemSpec<T>, mesh: &TriMesh<T>, solver: SolverKind) -> Result<Self> {
        let steps = spec.steps()?;
        if spec.substeps == 0 {
            return Err(Error::Invalid("substeps must be at least 1".into()));
        }
        spec.check_forcing(mesh)?;
        spec.noise.check_bounds(mesh)?;
        let inertia = spec.inertia();
        if !(inertia > T::zero()) {
            return Err(Error::Invalid(format!("inertia must be positive, got {inertia}")));
        }
        let dofs = DofMap::dirichlet(mesh, &[EdgeTag::DirichletOuter]);
        if dofs.n_dofs() == 0 {
            return Err(Error::Mesh("mesh has no free degrees of freedom".into()));
        }
        let coefficient = |x: Point2<T>| spec.coefficient_at(x);
        let stiffness = assemble_stiffness(mesh, &coefficient, &dofs)?;
        let mass = assemble_mass(mesh, &dofs)?;
        let system = mass.combine(inertia, &stiffness, spec.dt)?;
        let factor = match solver {
            SolverKind::Direct if system.symmetric => Some(SparseCholesky::factor(&system)?),
            _ => None,
        };
        let load_mass = assemble_mass(mesh, &DofMap::identity(mesh.n_nodes()))?;
        let w = spec.source_weight;
        let noise_loads: Vec<Vec<T>> = spec
            .noise
            .modes()
            .iter()
            .map(|g| {
                let nodal = load_mass.apply(&mesh.interpolate(|x| g(x)));
                dofs.accumulate(&nodal).into_iter().map(|v| v * w).collect()
            })
            .collect();
        let mut sys = Self {
            mesh: mesh.clone(),
            initial: dofs.gather(&mesh.interpolate(|x| (spec.initial)(x))),
            dofs,
            stiffness,
            mass,
            load_mass,
            system,
            factor,
            noise_loads,
            static_forcing: None,
            forcing: spec.forcing.clone(),
            source_weight: w,
            inertia,
            dt: spec.dt,
            steps,
            substeps: spec.substeps,
            noise: spec.noise.clone(),
            noise_intensity: T::zero(),
            tol: T::lit(1e-10).max(T::epsilon() * T::lit(100.0)),
        };
        if spec.forcing_is_static {
            sys.static_forcing = Some(sys.compute_forcing(T::zero()));
        }
        sys.noise_intensity = sys.compute_noise_intensity()?;
        Ok(sys)
    }

    fn compute_forcing(&self, t: T) -> Vec<T> {
        let f = self.mesh.interpolate(|x| (self.forcing)(x, t));
        let nodal = self.load_mass.apply(&f);
        self.dofs.accumulate(&nodal).into_iter().map(|v| v * self.source_weight).collect()
    }

    /// `Σ_i s_iᵀ (θ_w M)⁻¹ s_i` with `s_i` the weighted noise loads: the
    /// discrete `‖g‖²_{L₂^Q}` entering the Itô identity of `½ θ_w ‖u‖²`.
    fn compute_noise_intensity(&self) -> Result<T> {
        let mut total = T::zero();
        let n = self.dofs.n_dofs();
        for s in &self.noise_loads {
            let y = solve_spd(&self.mass, s, T::lit(1e-13).max(T::epsilon() * T::lit(100.0)), 20 * n.max(50))?;
            total += dot(s, &y.solution) / self.inertia;
        }
        Ok(total)
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    pub fn noise_intensity(&self) -> T {
        self.noise_intensity
    }

    pub fn noise_loads(&self) -> &[Vec<T>] {
        &self.noise_loads
    }

    /// Weighted forcing load `w·(M f(t))` on the free DOFs.
    pub fn forcing_load(&self, t: T) -> Vec<T> {
        match &self.static_forcing {
            Some(f) => f.clone(),
            None => self.compute_forcing(t),
        }
    }

    /// `(w f(t), u)` for a free-DOF vector `u`.
    pub fn forcing_pairing(&self, t: T, u: &[T]) -> T {
        match &self.static_forcing {
            Some(f) => dot(f, u),
            None => dot(&self.compute_forcing(t), u),
        }
    }

    /// `∫ f(t)²` over the mesh (unweighted forcing).
    pub fn forcing_norm_sq(&self, t: T) -> T {
        let f = self.mesh.interpolate(|x| (self.forcing)(x, t));
        self.load_mass.quadratic_form(&f)
    }

    pub fn time(&self, step: usize) -> T {
        T::from_count(step) * self.dt
    }

    /// `‖u‖²_{L²}` of a free-DOF vector.
    pub fn mass_norm_sq(&self, u: &[T]) -> T {
        self.mass.quadratic_form(u)
    }

    /// `uᵀ K u`, the energy form `∫ a∇u·∇u`.
    pub fn energy(&self, u: &[T]) -> T {
        self.stiffness.quadratic_form(u)
    }

    /// Vector `w` with `w·u = ∫ u φ_h` for free-DOF vectors `u`.
    pub fn pairing_weights(&self, phi: impl Fn(Point2<T>) -> T) -> Vec<T> {
        let nodal = self.load_mass.apply(&self.mesh.interpolate(phi));
        self.dofs.gather(&nodal)
    }

    /// Nodal field (zero on the Dirichlet boundary).
    pub fn nodal(&self, u: &[T]) -> Vec<T> {
        self.dofs.scatter(u)
    }

    /// Smallest `λ` with `K x = λ M x`.
    /// Inverse iteration on a Cholesky factor of `K` for symmetric
    /// coefficients.
    pub fn smallest_eigenvalue(&self) -> Result<T> {
        if !self.stiffness.symmetric {
            return smallest_generalized_eigenvalue(&self.stiffness, &self.mass, 2000, T::lit(1e-10));
        }
        let k = SparseCholesky::factor(&self.stiffness)?;
        let mut x = vec![T::one(); self.n_dofs()];
        let mut lambda = T::infinity();
        for _ in 0..2000 {
            let y = k.solve(&self.mass.apply(&x))?;
            let norm = self.mass.quadratic_form(&y).sqrt();
            x = y.into_iter().map(|v| v / norm).collect();
            let next = self.stiffness.quadratic_form(&x);
            if (lambda - next).abs() <= T::lit(1e-10) * next {
                return Ok(next);
            }
            lambda = next;
        }
        Ok(lambda)
    }

    fn rhs(&self, u: &[T], f: &[T], dw: &[T]) -> Result<Vec<T>> {
        if u.len() != self.n_dofs() {
            return Err(Error::Dimension { expected: self.n_dofs(), found: u.len() });
        }
        if dw.len() != self.noise_loads.len() {
            return Err(Error::Dimension { expected: self.noise_loads.len(), found: dw.len() });
        }
        let mut r = self.mass.apply(u);
        let theta = self.inertia;
        for (ri, fi) in r.iter_mut().zip(f) {
            *ri = theta * *ri + self.dt * *fi;
        }
        for (s, &w) in self.noise_loads.iter().zip(dw) {
            for (ri, si) in r.iter_mut().zip(s) {
                *ri += *si * w;
            }
        }
        Ok(r)
    }

    fn solve_iterative(&self, rhs: &[T], guess: &[T]) -> Result<Vec<T>> {
        let max_iter = 10 * self.n_dofs().max(100);
        let sol = if self.system.symmetric {
            solve_spd_from(&self.system, rhs, Some(guess), self.tol, max_iter)?
        } else {
            solve_general(&self.system, rhs, self.tol, max_iter)?
        };
        Ok(sol.solution)
    }

    /// One step from `u^n` (time `t_n = step·Δt`) with increments `dw`.
    /// Returns `u^{n+1}` and the relative residual of the linear solve.
    pub fn step(&self, u: &[T], step: usize, dw: &[T]) -> Result<(Vec<T>, T)> {
        let rhs = self.rhs(u, &self.forcing_load(self.time(step)), dw)?;
        let next = match &self.factor {
            Some(f) => f.solve(&rhs)?,
            None => self.solve_iterative(&rhs, u)?,
        };
        let r = self.system.apply(&next);
        let num = r.iter().zip(&rhs).map(|(a, b)| (*a - *b) * (*a - *b)).sum::<T>().sqrt();
        let den = dot(&rhs, &rhs).sqrt();
        let res = if den > T::zero() { num / den } else { num };
        Ok((next, res))
    }

    /// Advances every state in `states` by one step; `dws[c]` drives column `c`.
    /// Each column gets exactly the result of [`SpdeSystem::step`].
    pub fn step_batch(&self, states: &mut [Vec<T>], step: usize, dws: &[Vec<T>]) -> Result<()> {
        if states.len() != dws.len() {
            return Err(Error::Dimension { expected: states.len(), found: dws.len() });
        }
        let width = states.len();
        if width == 0 {
            return Ok(());
        }
        let n = self.n_dofs();
        let f = self.forcing_load(self.time(step));
        match &self.factor {
            Some(chol) => {
                let mut b = vec![T::zero(); n * width];
                for (c, (u, dw)) in states.iter().zip(dws).enumerate() {
                    let r = self.rhs(u, &f, dw)?;
                    for (i, v) in r.into_iter().enumerate() {
                        b[i * width + c] = v;
                    }
                }
                chol.solve_batch(&mut b, width)?;
                for (c, u) in states.iter_mut().enumerate() {
                    for (i, ui) in u.iter_mut().enumerate() {
                        *ui = b[i * width + c];
                    }
                }
            }
            None => {
                for (u, dw) in states.iter_mut().zip(dws) {
                    let r = self.rhs(u, &f, dw)?;
                    *u = self.solve_iterative(&r, u)?;
                }
            }
        }
        Ok(())
    }
}
