use std::io::Write;

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, DofMap, SparseOperator};
use crate::geometry::{PerforatedMesh, PointLocator, TriMesh};
use crate::scalar::{dot, pairwise_sum, Real};
use crate::spde::{run_ensemble, SamplePath, ScalarField, SpdeSystem};
use crate::statistics::estimate::{cumulative_trapezoid, estimate, Estimate};

/// Scalar functionals of one state: `‖u‖²`, `uᵀKu`, `(w f, u)` and the
/// pairings with the test functions.
pub struct Observer<T> {
    weights: Vec<Vec<T>>,
}

const FIXED: usize = 3;

impl<T: Real> Observer<T> {
    pub fn new(system: &SpdeSystem<T>, test_functions: &[ScalarField<T>]) -> Self {
        Self { weights: test_functions.iter().map(|phi| system.pairing_weights(|x| phi(x))).collect() }
    }

    pub fn width(&self) -> usize {
        FIXED + self.weights.len()
    }

    pub fn observe(&self, system: &SpdeSystem<T>, step: usize, u: &[T], out: &mut Vec<T>) {
        out.push(system.mass_norm_sq(u));
        out.push(system.energy(u));
        out.push(system.forcing_pairing(system.time(step), u));
        out.extend(self.weights.iter().map(|w| dot(w, u)));
    }
}

/// Functionals of one path on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<T> {
    pub mass_sq: Vec<T>,
    pub energy: Vec<T>,
    pub forcing: Vec<T>,
    /// `pairings[k][n]` = `(u(t_n), φ_k)`.
    pub pairings: Vec<Vec<T>>,
}

impl<T: Real> PathRecord<T> {
    fn with_capacity(n_test: usize, steps: usize) -> Self {
        Self {
            mass_sq: Vec::with_capacity(steps),
            energy: Vec::with_capacity(steps),
            forcing: Vec::with_capacity(steps),
            pairings: vec![Vec::with_capacity(steps); n_test],
        }
    }

    fn push(&mut self, values: &[T]) {
        self.mass_sq.push(values[0]);
        self.energy.push(values[1]);
        self.forcing.push(values[2]);
        for (p, v) in self.pairings.iter_mut().zip(&values[FIXED..]) {
            p.push(*v);
        }
    }
}

/// Ensemble of path records of one system, in seed order.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSeries<T> {
    pub times: Vec<T>,
    pub dt: T,
    /// `θ_w`: 1 for micro, `ϑ` for macro.
    pub inertia: T,
    /// Discrete `‖g‖²_{L₂^Q}` of the system (see [`SpdeSystem::noise_intensity`]).
    pub noise_intensity: T,
    pub seeds: Vec<u64>,
    pub paths: Vec<PathRecord<T>>,
}

/// `E(t)` estimated directly and through the Itô identity.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub stderr: Vec<T>,
    pub ito: Vec<T>,
    pub ito_stderr: Vec<T>,
}

impl<T: Real> EnsembleSeries<T> {
    fn empty(system: &SpdeSystem<T>, seeds: &[u64]) -> Self {
        Self {
            times: (0..=system.steps).map(|n| system.time(n)).collect(),
            dt: system.dt,
            inertia: system.inertia,
            noise_intensity: system.noise_intensity(),
            seeds: seeds.to_vec(),
            paths: Vec::with_capacity(seeds.len()),
        }
    }

    /// Records computed from stored trajectories.
    pub fn from_paths(system: &SpdeSystem<T>, paths: &[SamplePath<T>], test_functions: &[ScalarField<T>]) -> Result<Self> {
        let obs = Observer::new(system, test_functions);
        let seeds: Vec<u64> = paths.iter().map(|p| p.path_seed).collect();
        let mut out = Self::empty(system, &seeds);
        for path in paths {
            if path.states.len() != out.times.len() {
                return Err(Error::GridMismatch(format!(
                    "path has {} states, the grid {} (record every step)",
                    path.states.len(),
                    out.times.len()
                )));
            }
            let mut rec = PathRecord::with_capacity(test_functions.len(), out.times.len());
            let mut buf = Vec::with_capacity(obs.width());
            for (n, s) in path.states.iter().enumerate() {
                buf.clear();
                obs.observe(system, n, &system.dofs.gather(s), &mut buf);
                rec.push(&buf);
            }
            out.paths.push(rec);
        }
        Ok(out)
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_test_functions(&self) -> usize {
        self.paths.first().map_or(0, |p| p.pairings.len())
    }

    /// `½ θ_w ‖u(t)‖² + ∫₀ᵗ uᵀKu` of path `p`.
    pub fn direct_energy(&self, p: usize) -> Vec<T> {
        let rec = &self.paths[p];
        let half = T::lit(0.5) * self.inertia;
        let cum = cumulative_trapezoid(&self.times, &rec.energy);
        rec.mass_sq.iter().zip(cum).map(|(m, c)| half * *m + c).collect()
    }

    /// `½ θ_w ‖u(0)‖² + ∫₀ᵗ (w f, u) + ½ t ‖g‖²` of path `p`.
    pub fn ito_energy(&self, p: usize) -> Vec<T> {
        let rec = &self.paths[p];
        let half = T::lit(0.5);
        let start = half * self.inertia * rec.mass_sq[0];
        let cum = cumulative_trapezoid(&self.times, &rec.forcing);
        self.times.iter().zip(cum).map(|(t, c)| start + c + half * *t * self.noise_intensity).collect()
    }

    /// `θ_w ‖u(t)‖² + ∫₀ᵗ uᵀKu` of path `p`.
    pub fn est1_functional(&self, p: usize) -> Vec<T> {
        let rec = &self.paths[p];
        let cum = cumulative_trapezoid(&self.times, &rec.energy);
        rec.mass_sq.iter().zip(cum).map(|(m, c)| self.inertia * *m + c).collect()
    }

    /// Estimates over paths, per time, of `series(p)`.
    pub fn pointwise(&self, series: impl Fn(usize) -> Vec<T>) -> Vec<Estimate<T>> {
        let all: Vec<Vec<T>> = (0..self.n_paths()).map(series).collect();
        (0..self.times.len()).map(|n| estimate(&all.iter().map(|s| s[n]).collect::<Vec<_>>())).collect()
    }

    pub fn energy_series(&self) -> EnergySeries<T> {
        let d = self.pointwise(|p| self.direct_energy(p));
        let i = self.pointwise(|p| self.ito_energy(p));
        EnergySeries {
            times: self.times.clone(),
            values: d.iter().map(|e| e.mean).collect(),
            stderr: d.iter().map(|e| e.se).collect(),
            ito: i.iter().map(|e| e.mean).collect(),
            ito_stderr: i.iter().map(|e| e.se).collect(),
        }
    }

    /// Checks that `other` was run on the same grid with the same seeds.
    pub fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.times != other.times {
            return Err(Error::GridMismatch("ensembles use different time grids".into()));
        }
        if self.seeds != other.seeds {
            return Err(Error::GridMismatch("ensembles use different path seeds".into()));
        }
        Ok(())
    }
}

impl<T: Real> EnergySeries<T> {
    /// CSV with header `t,E,stderr,E_ito,stderr_ito`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,E,stderr,E_ito,stderr_ito")?;
        for n in 0..self.times.len() {
            writeln!(
                w,
                "{:.6e},{:.12e},{:.12e},{:.12e},{:.12e}",
                self.times[n].to_f64_lossy(),
                self.values[n].to_f64_lossy(),
                self.stderr[n].to_f64_lossy(),
                self.ito[n].to_f64_lossy(),
                self.ito_stderr[n].to_f64_lossy()
            )?;
        }
        Ok(())
    }

    /// `max_t |E − E_ito|/Δt`: the time-discretization constant of a
    /// noise-free run.
    pub fn calibrate(&self, dt: T) -> T {
        self.values.iter().zip(&self.ito).map(|(a, b)| (*a - *b).abs() / dt).fold(T::zero(), T::max)
    }

    /// Itô-identity cross-check `|E − E_ito| ≤ k·combined SE + C·Δt` at every
    /// grid time.
    pub fn ito_check(&self, k: T, c: T, dt: T) -> ItoCheck<T> {
        let mut worst = ItoCheck { passed: true, worst_ratio: T::zero(), worst_time: T::zero() };
        for n in 0..self.times.len() {
            let gap = (self.values[n] - self.ito[n]).abs();
            let se = (self.stderr[n] * self.stderr[n] + self.ito_stderr[n] * self.ito_stderr[n]).sqrt();
            let allowance = k * se + c * dt;
            let ratio = if allowance > T::zero() {
                gap / allowance
            } else if gap > T::zero() {
                T::infinity()
            } else {
                T::zero()
            };
            if ratio > worst.worst_ratio {
                worst.worst_ratio = ratio;
                worst.worst_time = self.times[n];
            }
        }
        worst.passed = worst.worst_ratio <= T::one();
        worst
    }
}

/// Outcome of [`EnergySeries::ito_check`]: the largest ratio of the gap to its
/// allowance and where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItoCheck<T> {
    pub passed: bool,
    pub worst_ratio: T,
    pub worst_time: T,
}

/// Constant of the energy bound
/// `θ_w E‖u(t)‖² + E∫₀ᵗ uᵀKu ≤ θ_w ‖u⁰‖² + t (w²‖f‖²/λ + w² C_T/θ_w)`,
/// assembled from the inputs (`λ` a lower bound of the Poincaré constant).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Est1Bound<T> {
    pub inertia: T,
    pub weight: T,
    pub initial_sq: T,
    pub forcing_sq: T,
    pub poincare: T,
    pub noise_bound: T,
}

impl<T: Real> Est1Bound<T> {
    pub fn at(&self, t: T) -> T {
        let w2 = self.weight * self.weight;
        self.inertia * self.initial_sq + t * (w2 * self.forcing_sq / self.poincare + w2 * self.noise_bound / self.inertia)
    }
}

/// Result of [`est1_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Est1Check<T> {
    pub passed: bool,
    /// Largest `estimate(t)/bound(t)` over the grid times `t > 0`.
    pub max_ratio: T,
    /// `sup_t` of the estimate.
    pub sup_estimate: T,
    /// Bound at the final time.
    pub constant: T,
}

/// Compares the ensemble mean of `θ_w ‖u‖² + ∫ uᵀKu` with the bound at every
/// grid time; the check fails where the mean exceeds the bound by more than
/// `k` standard errors.
pub fn est1_check<T: Real>(series: &EnsembleSeries<T>, bound: &Est1Bound<T>, k: T) -> Est1Check<T> {
    let est = series.pointwise(|p| series.est1_functional(p));
    let slack = T::one() + T::lit(1e-12);
    let mut max_ratio = T::zero();
    let mut sup = T::zero();
    let mut passed = true;
    for (t, e) in series.times.iter().zip(&est) {
        let b = bound.at(*t);
        passed &= e.mean <= b * slack + k * e.se;
        // at t = 0 both sides are θ_w‖u⁰‖² up to rounding
        if *t > T::zero() {
            max_ratio = max_ratio.max(e.mean / b);
        }
        sup = sup.max(e.mean);
    }
    let constant = bound.at(*series.times.last().unwrap_or(&T::zero()));
    Est1Check { passed, max_ratio, sup_estimate: sup, constant }
}

/// Interpolation of macro fields to the background mesh of a perforated mesh
/// and the background mass matrix, for `‖P_ε u_ε − u‖²`.
pub struct StrongGapProbe<T> {
    rows: Vec<[(usize, T); 3]>,
    mass: SparseOperator<T>,
}

impl<T: Real> StrongGapProbe<T> {
    pub fn new(perforated: &PerforatedMesh<T>, macro_mesh: &TriMesh<T>) -> Result<Self> {
        let locator = PointLocator::new(macro_mesh);
        let rows = perforated
            .background
            .nodes
            .iter()
            .map(|&p| {
                let (t, w) = locator
                    .locate(macro_mesh, p)
                    .ok_or_else(|| Error::Mesh(format!("background node {p:?} lies outside the macro mesh")))?;
                let tri = macro_mesh.triangles[t];
                Ok([(tri[0], w[0]), (tri[1], w[1]), (tri[2], w[2])])
            })
            .collect::<Result<Vec<_>>>()?;
        let bg = &perforated.background;
        let mass = assemble_mass(bg, &DofMap::identity(bg.n_nodes()))?;
        Ok(Self { rows, mass })
    }

    /// `‖P_ε u_ε − I_h u‖²_{L²(D)}` of nodal fields (micro on `D_ε`, macro on
    /// its own mesh), with the harmonic fill as `P_ε`.
    pub fn distance_sq(&self, perforated: &PerforatedMesh<T>, micro: &[T], macro_field: &[T]) -> Result<T> {
        let filled = perforated.fill_extend(micro)?;
        let diff: Vec<T> = filled
            .iter()
            .zip(&self.rows)
            .map(|(v, row)| *v - row.iter().map(|&(i, w)| w * macro_field[i]).fold(T::zero(), |a, b| a + b))
            .collect();
        Ok(self.mass.quadratic_form(&diff))
    }
}

/// A strong-gap measurement between system `micro` (on `mesh`) and system
/// `macro_index` of an ensemble run.
pub struct StrongPair<'a, T> {
    pub micro: usize,
    pub macro_index: usize,
    pub mesh: &'a PerforatedMesh<T>,
    pub probe: &'a StrongGapProbe<T>,
}

/// Runs all `systems` with common random numbers and records, for every path,
/// the observer functionals of each system and the time integral of every
/// strong-gap pair.
pub fn observe_ensemble<T: Real>(
    systems: &[&SpdeSystem<T>],
    test_functions: &[ScalarField<T>],
    seeds: &[u64],
    batch: usize,
    pairs: &[StrongPair<'_, T>],
) -> Result<(Vec<EnsembleSeries<T>>, Vec<Vec<T>>)> {
    let observers: Vec<Observer<T>> = systems.iter().map(|s| Observer::new(s, test_functions)).collect();
    let width: usize = observers.iter().map(Observer::width).sum::<usize>() + pairs.len();
    let raw = run_ensemble(systems, seeds, batch, |step, states| -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(width);
        for ((obs, sys), u) in observers.iter().zip(systems).zip(states) {
            obs.observe(sys, step, u, &mut out);
        }
        for pair in pairs {
            let micro = systems[pair.micro].nodal(states[pair.micro]);
            let mac = systems[pair.macro_index].nodal(states[pair.macro_index]);
            out.push(pair.probe.distance_sq(pair.mesh, &micro, &mac)?);
        }
        Ok(out)
    })?;
    let mut series: Vec<EnsembleSeries<T>> = systems.iter().map(|s| EnsembleSeries::empty(s, seeds)).collect();
    let mut strong = vec![Vec::with_capacity(seeds.len()); pairs.len()];
    let times = series.first().map(|s| s.times.clone()).unwrap_or_default();
    for path in raw {
        let mut records: Vec<PathRecord<T>> =
            systems.iter().map(|_| PathRecord::with_capacity(test_functions.len(), times.len())).collect();
        let mut distances = vec![Vec::with_capacity(times.len()); pairs.len()];
        for step in path {
            let step = step?;
            let mut offset = 0;
            for (rec, obs) in records.iter_mut().zip(&observers) {
                rec.push(&step[offset..offset + obs.width()]);
                offset += obs.width();
            }
            for (d, v) in distances.iter_mut().zip(&step[offset..]) {
                d.push(*v);
            }
        }
        for (s, rec) in series.iter_mut().zip(records) {
            s.paths.push(rec);
        }
        for (s, d) in strong.iter_mut().zip(distances) {
            let cum = cumulative_trapezoid(&times, &d);
            s.push(*cum.last().unwrap_or(&T::zero()));
        }
    }
    Ok((series, strong))
}

/// `∫₀ᵀ‖u_a − u_b‖²` per path for two stored ensembles, paths matched by index.
pub fn strong_l2_gap<T: Real>(
    perforated: &PerforatedMesh<T>,
    micro: &[SamplePath<T>],
    macro_mesh: &TriMesh<T>,
    macro_paths: &[SamplePath<T>],
) -> Result<Estimate<T>> {
    if micro.len() != macro_paths.len() {
        return Err(Error::GridMismatch(format!("{} micro paths vs {} macro paths", micro.len(), macro_paths.len())));
    }
    let probe = StrongGapProbe::new(perforated, macro_mesh)?;
    let mut per_path = Vec::with_capacity(micro.len());
    for (a, b) in micro.iter().zip(macro_paths) {
        if a.times != b.times || a.path_seed != b.path_seed {
            return Err(Error::GridMismatch("paired paths differ in time grid or seed".into()));
        }
        let d = a
            .states
            .iter()
            .zip(&b.states)
            .map(|(x, y)| probe.distance_sq(perforated, x, y))
            .collect::<Result<Vec<T>>>()?;
        per_path.push(*cumulative_trapezoid(&a.times, &d).last().unwrap_or(&T::zero()));
    }
    Ok(estimate(&per_path))
}

pub(crate) fn mean_of<T: Real>(values: &[T]) -> T {
    if values.is_empty() {
        T::zero()
    } else {
        pairwise_sum(values) / T::from_count(values.len())
    }
}
