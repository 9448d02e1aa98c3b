use std::sync::Arc;

use crate::cell_problem::CellSolution;
use crate::error::{Error, Result};
use crate::geometry::{PeriodicCell, TriMesh};
use crate::scalar::{Mat2, Point2, Real};
use crate::spde::noise::{NoiseModel, ScalarField};

/// Space-time source `f(x, t)`.
pub type SourceField<T> = Arc<dyn Fn(Point2<T>, T) -> T + Send + Sync>;

#[derive(Debug, Clone)]
pub enum Equation<T> {
    /// `du = (div(a(x/ε)∇u) + f) dt + g dW` on `D_ε`; the cell is tiled from
    /// `origin`.
    Micro { cell: PeriodicCell<T>, eps: T, origin: Point2<T> },
    /// `ϑ du = (div(B∇u) + f) dt + g dW` on `D`.
    Macro { b: Mat2<T>, theta: T },
}

/// Everything that defines one SPDE run except the mesh and the path seed.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub forcing: SourceField<T>,
    /// `f` does not depend on `t` (its load is assembled once).
    pub forcing_is_static: bool,
    pub noise: NoiseModel<T>,
    /// Initial state. For a macro problem derived with
    /// [`ProblemSpec::homogenized`] this is the micro datum `u⁰_D`, which is
    /// also the macro initial value `u⁰/ϑ` (the zero extensions of its
    /// restrictions converge weakly to `u⁰ = ϑ u⁰_D`).
    pub initial: ScalarField<T>,
    pub t_final: T,
    pub dt: T,
    /// Each increment is the sum of this many finer draws (see
    /// [`super::coarse_increments`]).
    pub substeps: usize,
    pub equation: Equation<T>,
    /// Factor multiplying both `f` and every `g^i`.
    pub source_weight: T,
}

impl<T: Real> std::fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("noise", &self.noise)
            .field("t_final", &self.t_final)
            .field("dt", &self.dt)
            .field("substeps", &self.substeps)
            .field("equation", &self.equation)
            .field("source_weight", &self.source_weight)
            .finish_non_exhaustive()
    }
}

impl<T: Real> ProblemSpec<T> {
    /// Micro problem with time-independent forcing `f₀`.
    pub fn micro(
        cell: PeriodicCell<T>,
        eps: T,
        origin: Point2<T>,
        f0: ScalarField<T>,
        initial: ScalarField<T>,
        noise: NoiseModel<T>,
        t_final: T,
        dt: T,
    ) -> Self {
        Self {
            forcing: Arc::new(move |x, _| f0(x)),
            forcing_is_static: true,
            noise,
            initial,
            t_final,
            dt,
            substeps: 1,
            equation: Equation::Micro { cell, eps, origin },
            source_weight: T::one(),
        }
    }

    /// The effective problem of a micro family: same `f`, `g`, initial datum
    /// and time grid, coefficient `B`, inertia `ϑ`, and sources weighted by
    /// `ϑ` (the weak limits of the zero-extended restrictions of `f` and `g`).
    pub fn homogenized(&self, cell: &CellSolution<T>) -> Self {
        self.with_effective(cell.b, cell.theta)
    }

    pub fn with_effective(&self, b: Mat2<T>, theta: T) -> Self {
        Self { equation: Equation::Macro { b, theta }, source_weight: theta, ..self.clone() }
    }

    /// Number of time steps `T/Δt`; `Δt` must divide `T`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > T::zero()) || !(self.t_final >= T::zero()) {
            return Err(Error::Invalid(format!("need dt > 0 and T >= 0 (dt {}, T {})", self.dt, self.t_final)));
        }
        let ratio = self.t_final / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > T::lit(1e-9) * ratio.max(T::one()) {
            return Err(Error::Invalid(format!("dt {} does not divide T {}", self.dt, self.t_final)));
        }
        Ok(n.to_f64_lossy() as usize)
    }

    pub fn time(&self, step: usize) -> T {
        T::from_count(step) * self.dt
    }

    /// Weight of the time derivative: 1 (micro) or `ϑ` (macro).
    pub fn inertia(&self) -> T {
        match &self.equation {
            Equation::Micro { .. } => T::one(),
            Equation::Macro { theta, .. } => *theta,
        }
    }

    pub fn coefficient_at(&self, x: Point2<T>) -> Mat2<T> {
        match &self.equation {
            Equation::Micro { cell, eps, origin } => {
                cell.coefficient_at([(x[0] - origin[0]) / *eps, (x[1] - origin[1]) / *eps])
            }
            Equation::Macro { b, .. } => *b,
        }
    }

    /// Rejects forcing that is not finite at the nodes of `mesh` on the time grid.
    pub fn check_forcing(&self, mesh: &TriMesh<T>) -> Result<()> {
        let steps = self.steps()?;
        let times: Vec<usize> = if self.forcing_is_static { vec![0] } else { (0..=steps).collect() };
        for n in times {
            let t = self.time(n);
            if mesh.nodes.iter().any(|&x| !(self.forcing)(x, t).is_finite()) {
                return Err(Error::Invalid(format!("forcing is not finite at t = {t}")));
            }
        }
        if mesh.nodes.iter().any(|&x| !(self.initial)(x).is_finite()) {
            return Err(Error::Invalid("initial condition is not finite".into()));
        }
        Ok(())
    }
}
