use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fem::{energy_norm_sq, l2_inner};
use crate::geometry::{Rect, TriMesh};
use crate::scalar::{Point2, Real};

/// Scalar field on the physical domain.
pub type ScalarField<T> = Arc<dyn Fn(Point2<T>) -> T + Send + Sync>;

/// Truncated ℓ²-Wiener noise `Σ_i g^i dW_i` with `m` spatial modes.
///
/// Increments are drawn from a counter-based stream keyed by
/// `(path_seed, step)`, so any step of any path can be regenerated on its own.
#[derive(Clone)]
pub struct NoiseModel<T> {
    modes: Vec<ScalarField<T>>,
    pub master_seed: u64,
    /// Declared `C_T ≥ Σ ‖g^i‖²`.
    pub hs_bound: T,
    /// Declared `C* ≥ Σ ‖∇g^i‖²`, when gradient regularity is claimed.
    pub gradient_bound: Option<T>,
    description: String,
}

impl<T: fmt::Debug> fmt::Debug for NoiseModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NoiseModel")
            .field("m", &self.modes.len())
            .field("master_seed", &self.master_seed)
            .field("hs_bound", &self.hs_bound)
            .field("gradient_bound", &self.gradient_bound)
            .field("description", &self.description)
            .finish()
    }
}

/// Mode index pairs `(k, l)` of the first `m` tensor sine modes, ordered by
/// `k² + l²`, ties by `k`.
pub fn sine_mode_indices(m: usize) -> Vec<(usize, usize)> {
    let mut r = 1;
    loop {
        let mut all: Vec<(usize, usize)> = (1..=r).flat_map(|k| (1..=r).map(move |l| (k, l))).collect();
        all.sort_by_key(|&(k, l)| (k * k + l * l, k));
        // Every pair with k² + l² ≤ r² + 1 is present once r covers it.
        let complete = all.iter().take_while(|&&(k, l)| k * k + l * l <= r * r + 1).count();
        if complete >= m {
            all.truncate(m);
            return all;
        }
        r += 1;
    }
}

/// `L²`-normalized Dirichlet eigenfunction `(2/√|D|) sin(kπ ξ₁) sin(lπ ξ₂)` of a
/// rectangle, `ξ` the relative coordinates.
pub fn sine_mode<T: Real>(k: usize, l: usize, domain: Rect<T>) -> ScalarField<T> {
    let e = domain.extent();
    let scale = T::lit(2.0) / domain.area().sqrt();
    let (kk, ll) = (T::from_count(k), T::from_count(l));
    let pi = T::pi();
    Arc::new(move |x: Point2<T>| {
        let a = kk * pi * (x[0] - domain.min[0]) / e[0];
        let b = ll * pi * (x[1] - domain.min[1]) / e[1];
        scale * a.sin() * b.sin()
    })
}

/// Eigenvalue `π²(k²/L₁² + l²/L₂²)` of the sine mode `(k, l)`.
pub fn sine_eigenvalue<T: Real>(k: usize, l: usize, domain: Rect<T>) -> T {
    let e = domain.extent();
    let pi = T::pi();
    let (kk, ll) = (T::from_count(k), T::from_count(l));
    pi * pi * (kk * kk / (e[0] * e[0]) + ll * ll / (e[1] * e[1]))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Real> NoiseModel<T> {
    pub fn new(
        modes: Vec<ScalarField<T>>,
        master_seed: u64,
        hs_bound: T,
        gradient_bound: Option<T>,
        description: impl Into<String>,
    ) -> Result<Self> {
        if !(hs_bound >= T::zero()) || (!modes.is_empty() && hs_bound == T::zero()) {
            return Err(Error::Invalid(format!("noise bound C_T must be positive, got {hs_bound}")));
        }
        if let Some(c) = gradient_bound {
            if !(c > T::zero()) {
                return Err(Error::Invalid(format!("noise gradient bound must be positive, got {c}")));
            }
        }
        Ok(Self { modes, master_seed, hs_bound, gradient_bound, description: description.into() })
    }

    /// No noise (`m = 0`).
    pub fn none(master_seed: u64) -> Self {
        Self { modes: Vec::new(), master_seed, hs_bound: T::zero(), gradient_bound: None, description: "none".into() }
    }

    /// First `m` normalized sine modes of `domain` with amplitudes `σ i^{-p}`.
    /// Both bounds are the exact sums for this family.
    pub fn sine_series(m: usize, sigma: T, p: T, domain: Rect<T>, master_seed: u64) -> Result<Self> {
        if !(sigma >= T::zero()) || !(p > T::lit(0.5)) {
            return Err(Error::Invalid(format!("sine noise needs sigma >= 0 and p > 1/2 (sigma {sigma}, p {p})")));
        }
        if m == 0 || sigma == T::zero() {
            return Ok(Self::none(master_seed));
        }
        let mut modes = Vec::with_capacity(m);
        let (mut hs, mut grad) = (T::zero(), T::zero());
        for (i, (k, l)) in sine_mode_indices(m).into_iter().enumerate() {
            let amp = sigma * T::from_count(i + 1).powf(-p);
            let phi = sine_mode(k, l, domain);
            modes.push(Arc::new(move |x: Point2<T>| amp * phi(x)) as ScalarField<T>);
            hs += amp * amp;
            grad += amp * amp * sine_eigenvalue(k, l, domain);
        }
        Self::new(modes, master_seed, hs, Some(grad), format!("sine_series(m={m}, sigma={sigma}, p={p})"))
    }

    /// `σ` times the normalized sine mode `(k, l)`.
    pub fn single_sine(sigma: T, k: usize, l: usize, domain: Rect<T>, master_seed: u64) -> Result<Self> {
        let phi = sine_mode(k, l, domain);
        let modes = vec![Arc::new(move |x: Point2<T>| sigma * phi(x)) as ScalarField<T>];
        let grad = sigma * sigma * sine_eigenvalue(k, l, domain);
        Self::new(modes, master_seed, sigma * sigma, Some(grad), format!("single_sine(sigma={sigma}, k={k}, l={l})"))
    }

    pub fn m(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[ScalarField<T>] {
        &self.modes
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Modes multiplied by `c` (bounds scale by `c²`).
    pub fn scaled(&self, c: T) -> Self {
        let modes = self
            .modes
            .iter()
            .map(|g| {
                let g = Arc::clone(g);
                Arc::new(move |x: Point2<T>| c * g(x)) as ScalarField<T>
            })
            .collect();
        Self {
            modes,
            master_seed: self.master_seed,
            hs_bound: self.hs_bound * c * c,
            gradient_bound: self.gradient_bound.map(|b| b * c * c),
            description: format!("{} x {c}", self.description),
        }
    }

    /// Seed of path number `path`, derived from the master seed.
    pub fn path_seed(&self, path: u64) -> u64 {
        splitmix64(self.master_seed ^ splitmix64(path.wrapping_add(1)))
    }

    /// Checks the declared bounds against the sampled modes on `mesh`; the
    /// discrete norms may exceed the continuous ones by 2 %.
    pub fn check_bounds(&self, mesh: &TriMesh<T>) -> Result<()> {
        let slack = T::lit(1.02);
        let mut hs = T::zero();
        let mut grad = T::zero();
        let identity = |_: Point2<T>| [[T::one(), T::zero()], [T::zero(), T::one()]];
        for g in &self.modes {
            let v = mesh.interpolate(|x| g(x));
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid("noise mode is not finite at a mesh node".into()));
            }
            hs += l2_inner(mesh, &v, &v);
            if self.gradient_bound.is_some() {
                grad += energy_norm_sq(mesh, &identity, &v)?;
            }
        }
        if hs > self.hs_bound * slack {
            return Err(Error::Invalid(format!("sum of squared mode norms {hs} exceeds C_T = {}", self.hs_bound)));
        }
        if let Some(c) = self.gradient_bound {
            if grad > c * slack {
                return Err(Error::Invalid(format!("sum of squared gradient norms {grad} exceeds C* = {c}")));
            }
        }
        Ok(())
    }
}

/// The `m` Wiener increments `ΔW_i ~ N(0, Δt)` of step `step` of the path with
/// seed `path_seed`.
pub fn wiener_increments<T: Real>(noise: &NoiseModel<T>, dt: T, step: u64, path_seed: u64) -> Vec<T> {
    coarse_increments(noise, dt, step, 1, path_seed)
}

/// Increments over `[step·Δt, (step+1)·Δt]` assembled from `substeps` finer
/// draws of variance `Δt/substeps`. Grids with the same fine step
/// `Δt/substeps` share their Brownian path.
pub fn coarse_increments<T: Real>(noise: &NoiseModel<T>, dt: T, step: u64, substeps: usize, path_seed: u64) -> Vec<T> {
    let m = noise.m();
    let mut out = vec![0.0f64; m];
    let scale = (dt.to_f64_lossy() / substeps as f64).sqrt();
    let mut draws = vec![0.0f64; m];
    for j in 0..substeps as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed);
        rng.set_stream(step * substeps as u64 + j);
        for d in draws.iter_mut() {
            *d = rng.sample::<f64, _>(StandardNormal);
        }
        for (o, d) in out.iter_mut().zip(&draws) {
            *o += *d;
        }
    }
    out.into_iter().map(|x| T::lit(x * scale)).collect()
}
