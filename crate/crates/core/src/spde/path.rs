use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spde::noise::coarse_increments;
use crate::spde::system::SpdeSystem;

/// Trajectory on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath<T> {
    pub times: Vec<T>,
    /// Nodal states at `times` (zero on the Dirichlet boundary).
    pub states: Vec<Vec<T>>,
    pub path_seed: u64,
    /// Relative residual of the linear solve of every step.
    pub residuals: Vec<T>,
}

impl<T: Real> SamplePath<T> {
    /// Text table, one line `step t v_0 ... v_{n-1}` per recorded state.
    pub fn write_table<W: Write>(&self, mut w: W, record_every: usize) -> std::io::Result<()> {
        for (k, (t, s)) in self.times.iter().zip(&self.states).enumerate() {
            write!(w, "{} {:.16e}", k * record_every.max(1), t.to_f64_lossy())?;
            for v in s {
                write!(w, " {:.16e}", v.to_f64_lossy())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Increments of `step` for the system's time grid.
pub fn increments<T: Real>(system: &SpdeSystem<T>, step: usize, path_seed: u64) -> Vec<T> {
    coarse_increments(&system.noise, system.dt, step as u64, system.substeps, path_seed)
}

/// One full trajectory, keeping every `record_every`-th state (and the last).
pub fn simulate_path<T: Real>(system: &SpdeSystem<T>, path_seed: u64, record_every: usize) -> Result<SamplePath<T>> {
    let every = record_every.max(1);
    let mut u = system.initial.clone();
    let mut path = SamplePath {
        times: vec![T::zero()],
        states: vec![system.nodal(&u)],
        path_seed,
        residuals: Vec::with_capacity(system.steps),
    };
    for n in 0..system.steps {
        let dw = increments(system, n, path_seed);
        let (next, res) = system.step(&u, n, &dw)?;
        u = next;
        path.residuals.push(res);
        if (n + 1) % every == 0 || n + 1 == system.steps {
            path.times.push(system.time(n + 1));
            path.states.push(system.nodal(&u));
        }
    }
    Ok(path)
}

fn check_aligned<T: Real>(systems: &[&SpdeSystem<T>]) -> Result<()> {
    let first = systems.first().ok_or_else(|| Error::Invalid("no systems to simulate".into()))?;
    for s in &systems[1..] {
        if s.steps != first.steps || s.dt != first.dt || s.substeps != first.substeps {
            return Err(Error::GridMismatch(format!(
                "time grids differ: {} steps of {} vs {} steps of {}",
                first.steps, first.dt, s.steps, s.dt
            )));
        }
        if s.noise.m() != first.noise.m() {
            return Err(Error::GridMismatch(format!("noise models differ: m = {} vs {}", first.noise.m(), s.noise.m())));
        }
    }
    Ok(())
}

/// Simulates every path of `seeds` on all `systems` in lockstep with shared
/// increments (common random numbers) and returns `observe(step, states)` for
/// every path and step `0..=steps`; `states[k]` is the free-DOF state of
/// `systems[k]`.
///
/// Paths are processed in fixed batches of `batch` columns, batches in
/// parallel on the current rayon pool. Results do not depend on the batch
/// size or the number of threads.
pub fn run_ensemble<T, S, F>(systems: &[&SpdeSystem<T>], seeds: &[u64], batch: usize, observe: F) -> Result<Vec<Vec<S>>>
where
    T: Real,
    S: Send,
    F: Fn(usize, &[&[T]]) -> S + Sync,
{
    check_aligned(systems)?;
    let steps = systems[0].steps;
    let batches: Vec<Result<Vec<Vec<S>>>> = seeds
        .par_chunks(batch.max(1))
        .map(|chunk| {
            let width = chunk.len();
            let mut states: Vec<Vec<Vec<T>>> = systems.iter().map(|s| vec![s.initial.clone(); width]).collect();
            let mut out: Vec<Vec<S>> = (0..width).map(|_| Vec::with_capacity(steps + 1)).collect();
            let record = |states: &Vec<Vec<Vec<T>>>, out: &mut Vec<Vec<S>>, step: usize| {
                for (c, o) in out.iter_mut().enumerate() {
                    let cols: Vec<&[T]> = states.iter().map(|s| s[c].as_slice()).collect();
                    o.push(observe(step, &cols));
                }
            };
            record(&states, &mut out, 0);
            for n in 0..steps {
                let dws: Vec<Vec<T>> = chunk.iter().map(|&seed| increments(systems[0], n, seed)).collect();
                for (sys, st) in systems.iter().zip(states.iter_mut()) {
                    sys.step_batch(st, n, &dws)?;
                }
                record(&states, &mut out, n + 1);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(seeds.len());
    for b in batches {
        all.extend(b?);
    }
    Ok(all)
}

/// Per-step well-posedness diagnostics of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyDiagnostics<T> {
    pub times: Vec<T>,
    /// `‖u(t)‖²_{L²}`.
    pub mass_sq: Vec<T>,
    /// `∫₀ᵗ ‖u‖²_V` (trapezoid rule, `‖u‖²_V = ∫ a∇u·∇u`).
    pub cumulative_energy: Vec<T>,
    /// Linear-solve residuals of the steps leading to each recorded state
    /// (zero for the initial state).
    pub residuals: Vec<T>,
}

/// Diagnostics of a recorded path; a path recorded every `k` steps integrates
/// the energy on its own (coarser) grid.
pub fn energy_diagnostics<T: Real>(path: &SamplePath<T>, system: &SpdeSystem<T>) -> Result<EnergyDiagnostics<T>> {
    let mut mass_sq = Vec::with_capacity(path.states.len());
    let mut energy = Vec::with_capacity(path.states.len());
    for s in &path.states {
        if s.len() != system.mesh.n_nodes() {
            return Err(Error::Dimension { expected: system.mesh.n_nodes(), found: s.len() });
        }
        let u = system.dofs.gather(s);
        mass_sq.push(system.mass_norm_sq(&u));
        energy.push(system.energy(&u));
    }
    let mut cumulative = vec![T::zero(); energy.len()];
    let half = T::lit(0.5);
    for k in 1..energy.len() {
        let dt = path.times[k] - path.times[k - 1];
        cumulative[k] = cumulative[k - 1] + half * dt * (energy[k] + energy[k - 1]);
    }
    let mut residuals = vec![T::zero(); path.states.len()];
    if path.states.len() > 1 {
        let every = path.residuals.len().div_ceil(path.states.len() - 1).max(1);
        for (k, r) in residuals.iter_mut().enumerate().skip(1) {
            let idx = (k * every).min(path.residuals.len()) - 1;
            *r = path.residuals[idx];
        }
    }
    Ok(EnergyDiagnostics { times: path.times.clone(), mass_sq, cumulative_energy: cumulative, residuals })
}
