use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::PerforatedMesh;
use crate::scalar::Real;
use crate::spde::{ScalarField, SpdeSystem};
use crate::statistics::estimate::{estimate, weighted_trapezoid, Estimate};
use crate::statistics::series::{observe_ensemble, EnsembleSeries, StrongGapProbe, StrongPair};

/// Time weight `ψ(t)`.
pub type TimeWeight<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// `sup_t |E^ε(t) − E⁰(t)|` with the standard error of the paired difference
/// at the maximizing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupGap<T> {
    pub value: Estimate<T>,
    pub time: T,
}

/// `sup_t |E_a(t) − E_b(t)|` of the direct energies of two ensembles run with
/// common random numbers.
pub fn energy_sup_gap<T: Real>(a: &EnsembleSeries<T>, b: &EnsembleSeries<T>) -> Result<SupGap<T>> {
    a.check_aligned(b)?;
    let diffs: Vec<Vec<T>> = (0..a.n_paths())
        .map(|p| a.direct_energy(p).into_iter().zip(b.direct_energy(p)).map(|(x, y)| x - y).collect())
        .collect();
    let mut best = SupGap { value: Estimate { mean: T::zero(), se: T::zero(), n: a.n_paths() }, time: T::zero() };
    for (n, &t) in a.times.iter().enumerate() {
        let e = estimate(&diffs.iter().map(|d| d[n]).collect::<Vec<_>>()).abs();
        if n == 0 || e.mean > best.value.mean {
            best = SupGap { value: e, time: t };
        }
    }
    Ok(best)
}

/// Per test function `|E∫ψ (ũ_ε, φ_k) − ϑ E∫ψ (u, φ_k)|`, paired over paths.
pub fn weak_pairing_gap<T: Real>(
    micro: &EnsembleSeries<T>,
    macro_series: &EnsembleSeries<T>,
    theta: T,
    psi: &dyn Fn(T) -> T,
) -> Result<Vec<Estimate<T>>> {
    micro.check_aligned(macro_series)?;
    if micro.n_test_functions() != macro_series.n_test_functions() {
        return Err(Error::GridMismatch("ensembles observed different test functions".into()));
    }
    let times = &micro.times;
    Ok((0..micro.n_test_functions())
        .map(|k| {
            let d: Vec<T> = micro
                .paths
                .iter()
                .zip(&macro_series.paths)
                .map(|(a, b)| {
                    weighted_trapezoid(times, &a.pairings[k], psi)
                        - theta * weighted_trapezoid(times, &b.pairings[k], psi)
                })
                .collect();
            estimate(&d).abs()
        })
        .collect())
}

/// Member `ε` of a micro family.
pub struct MicroMember<'a, T> {
    pub eps: T,
    pub mesh: &'a PerforatedMesh<T>,
    pub system: &'a SpdeSystem<T>,
}

/// Micro ensembles for every member and one macro ensemble, all driven by the
/// same increments.
#[derive(Debug, Clone)]
pub struct Comparison<T> {
    pub eps: Vec<T>,
    pub theta: T,
    pub micro: Vec<EnsembleSeries<T>>,
    pub macro_series: EnsembleSeries<T>,
    /// Per member and path `∫₀ᵀ ‖P_ε u_ε − u‖²`; empty when not requested.
    pub strong: Vec<Vec<T>>,
}

pub fn run_comparison<T: Real>(
    members: &[MicroMember<'_, T>],
    macro_system: &SpdeSystem<T>,
    theta: T,
    test_functions: &[ScalarField<T>],
    seeds: &[u64],
    batch: usize,
    strong_gap: bool,
) -> Result<Comparison<T>> {
    let mut systems: Vec<&SpdeSystem<T>> = members.iter().map(|m| m.system).collect();
    systems.push(macro_system);
    let probes = if strong_gap {
        members.iter().map(|m| StrongGapProbe::new(m.mesh, &macro_system.mesh)).collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let pairs: Vec<StrongPair<'_, T>> = probes
        .iter()
        .enumerate()
        .map(|(i, probe)| StrongPair { micro: i, macro_index: members.len(), mesh: members[i].mesh, probe })
        .collect();
    let (mut series, strong) = observe_ensemble(&systems, test_functions, seeds, batch, &pairs)?;
    let macro_series = series.pop().expect("macro ensemble present");
    Ok(Comparison { eps: members.iter().map(|m| m.eps).collect(), theta, micro: series, macro_series, strong })
}

/// One line of `convergence.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow<T> {
    pub epsilon: T,
    pub metric: String,
    pub value: T,
    pub stderr: T,
}

impl<T: Real> Comparison<T> {
    pub fn energy_gaps(&self) -> Result<Vec<SupGap<T>>> {
        self.micro.iter().map(|m| energy_sup_gap(m, &self.macro_series)).collect()
    }

    pub fn pairing_gaps(&self, psi: &dyn Fn(T) -> T) -> Result<Vec<Vec<Estimate<T>>>> {
        self.micro.iter().map(|m| weak_pairing_gap(m, &self.macro_series, self.theta, psi)).collect()
    }

    pub fn strong_gaps(&self) -> Vec<Estimate<T>> {
        self.strong.iter().map(|s| estimate(s)).collect()
    }

    /// Rows `energy_sup_gap`, `pairing_gap_<k>` (1-based), `strong_l2_gap`
    /// per `ε`, in the order of the family.
    pub fn convergence_table(&self, psi: &dyn Fn(T) -> T) -> Result<Vec<TableRow<T>>> {
        let energy = self.energy_gaps()?;
        let pairing = self.pairing_gaps(psi)?;
        let strong = self.strong_gaps();
        let mut rows = Vec::new();
        for (i, &eps) in self.eps.iter().enumerate() {
            let row = |metric: String, e: &Estimate<T>| TableRow { epsilon: eps, metric, value: e.mean, stderr: e.se };
            rows.push(row("energy_sup_gap".into(), &energy[i].value));
            for (k, g) in pairing[i].iter().enumerate() {
                rows.push(row(format!("pairing_gap_{}", k + 1), g));
            }
            if let Some(s) = strong.get(i) {
                rows.push(row("strong_l2_gap".into(), s));
            }
        }
        Ok(rows)
    }
}

/// CSV with header `epsilon,metric,value,stderr`.
pub fn write_convergence_csv<T: Real, W: Write>(rows: &[TableRow<T>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epsilon,metric,value,stderr")?;
    for r in rows {
        writeln!(
            w,
            "{:.10e},{},{:.12e},{:.12e}",
            r.epsilon.to_f64_lossy(),
            r.metric,
            r.value.to_f64_lossy(),
            r.stderr.to_f64_lossy()
        )?;
    }
    Ok(())
}
