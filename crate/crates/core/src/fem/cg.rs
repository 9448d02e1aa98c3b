use crate::error::{Error, Result};
use crate::fem::SparseOperator;
use crate::scalar::{dot, Real};

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖` from the CG recurrence.
    pub relative_residual: T,
}

/// Symmetric operator usable by [`solve_spd`].
pub trait LinearOperator<T> {
    fn dim(&self) -> usize;
    fn apply_into(&self, x: &[T], y: &mut [T]);
    fn diagonal(&self) -> Vec<T>;
}

impl<T: Real> LinearOperator<T> for SparseOperator<T> {
    fn dim(&self) -> usize {
        SparseOperator::dim(self)
    }

    fn apply_into(&self, x: &[T], y: &mut [T]) {
        SparseOperator::apply_into(self, x, y)
    }

    fn diagonal(&self) -> Vec<T> {
        SparseOperator::diagonal(self)
    }
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn solve_spd<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    rhs: &[T],
    tol: T,
    max_iter: usize,
) -> Result<CgSolution<T>> {
    solve_spd_from(op, rhs, None, tol, max_iter)
}

/// Jacobi-preconditioned conjugate gradients with an optional warm start.
/// Fixed operation order, so results are reproducible bit for bit.
pub fn solve_spd_from<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    rhs: &[T],
    guess: Option<&[T]>,
    tol: T,
    max_iter: usize,
) -> Result<CgSolution<T>> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::Dimension { expected: n, found: rhs.len() });
    }
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == T::zero() {
        return Ok(CgSolution { solution: vec![T::zero(); n], iterations: 0, relative_residual: T::zero() });
    }
    let inv_diag: Vec<T> = op
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::zero() })
        .collect();
    if inv_diag.iter().any(|&d| d == T::zero()) {
        return Err(Error::Solver("operator has a non-positive diagonal entry".into()));
    }
    let mut x = match guess {
        Some(g) if g.len() == n => g.to_vec(),
        Some(g) => return Err(Error::Dimension { expected: n, found: g.len() }),
        None => vec![T::zero(); n],
    };
    let mut r = rhs.to_vec();
    let mut ap = vec![T::zero(); n];
    if guess.is_some() {
        op.apply_into(&x, &mut ap);
        for (ri, a) in r.iter_mut().zip(&ap) {
            *ri -= *a;
        }
    }
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    if rel <= tol {
        return Ok(CgSolution { solution: x, iterations: 0, relative_residual: rel });
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(a, b)| *a * *b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::Solver(format!("operator is not positive definite (pᵀAp = {pap})")));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok(CgSolution { solution: x, iterations: it, relative_residual: rel });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Convergence { iterations: max_iter, residual: rel.to_f64_lossy() })
}

/// Smallest eigenvalue `λ` of `K x = λ M x` by inverse iteration.
pub fn smallest_generalized_eigenvalue<T: Real>(
    stiffness: &SparseOperator<T>,
    mass: &SparseOperator<T>,
    max_iter: usize,
    tol: T,
) -> Result<T> {
    let n = stiffness.dim();
    if mass.dim() != n {
        return Err(Error::Dimension { expected: n, found: mass.dim() });
    }
    let mut x = vec![T::one(); n];
    let mut lambda = T::infinity();
    let inner_tol = T::lit(1e-12).max(T::epsilon() * T::lit(100.0));
    for _ in 0..max_iter {
        let mx = mass.apply(&x);
        let y = solve_spd(stiffness, &mx, inner_tol, 20 * n.max(50))?.solution;
        let ym = mass.quadratic_form(&y).sqrt();
        x = y.iter().map(|v| *v / ym).collect();
        let next = stiffness.quadratic_form(&x);
        if (lambda - next).abs() <= tol * next {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(lambda)
}

/// Jacobi-preconditioned BiCGSTAB for nonsymmetric operators, zero initial guess.
pub fn solve_general<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    rhs: &[T],
    tol: T,
    max_iter: usize,
) -> Result<CgSolution<T>> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::Dimension { expected: n, found: rhs.len() });
    }
    let bnorm = dot(rhs, rhs).sqrt();
    if bnorm == T::zero() {
        return Ok(CgSolution { solution: vec![T::zero(); n], iterations: 0, relative_residual: T::zero() });
    }
    let inv_diag: Vec<T> = op.diagonal().into_iter().map(|d| if d != T::zero() { T::one() / d } else { T::one() }).collect();
    let precond = |v: &[T]| -> Vec<T> { v.iter().zip(&inv_diag).map(|(a, b)| *a * *b).collect() };
    let mut x = vec![T::zero(); n];
    let mut r = rhs.to_vec();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let mut rel = T::one();
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || omega == T::zero() {
            return Err(Error::Solver("BiCGSTAB breakdown".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = precond(&p);
        op.apply_into(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(CgSolution { solution: x, iterations: it, relative_residual: dot(&s, &s).sqrt() / bnorm });
        }
        let z = precond(&s);
        op.apply_into(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > T::zero() { dot(&t, &s) / tt } else { T::zero() };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            return Ok(CgSolution { solution: x, iterations: it, relative_residual: rel });
        }
    }
    Err(Error::Convergence { iterations: max_iter, residual: rel.to_f64_lossy() })
}
