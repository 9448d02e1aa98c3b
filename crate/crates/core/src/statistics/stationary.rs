use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spde::{ScalarField, SpdeSystem};
use crate::statistics::estimate::{estimate, Estimate};
use crate::statistics::series::{mean_of, observe_ensemble, EnsembleSeries};

/// Least-squares fit `m(t) ≈ c e^{−γt} + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit<T> {
    pub gamma: T,
    pub amplitude: T,
    pub offset: T,
    pub rms_residual: T,
}

fn linear_fit<T: Real>(times: &[T], values: &[T], gamma: T) -> (T, T, T) {
    // Normal equations for the basis {e^{−γt}, 1}.
    let n = T::from_count(times.len());
    let (mut se, mut see, mut sy, mut sey) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (t, y) in times.iter().zip(values) {
        let e = (-gamma * *t).exp();
        se += e;
        see += e * e;
        sy += *y;
        sey += e * *y;
    }
    let det = see * n - se * se;
    let (c, d) = if det.abs() > T::epsilon() * see * n {
        ((sey * n - se * sy) / det, (see * sy - se * sey) / det)
    } else {
        (T::zero(), sy / n)
    };
    let ssr = times
        .iter()
        .zip(values)
        .map(|(t, y)| {
            let r = *y - c * (-gamma * *t).exp() - d;
            r * r
        })
        .fold(T::zero(), |a, b| a + b);
    (c, d, ssr)
}

/// Fits `c e^{−γt} + d` by a logarithmic scan of `γ` over
/// `[10⁻³/T, 10/Δt_min]` refined by golden-section search.
pub fn fit_exponential<T: Real>(times: &[T], values: &[T]) -> Result<ExponentialFit<T>> {
    if times.len() < 4 || times.len() != values.len() {
        return Err(Error::Invalid("exponential fit needs at least four aligned samples".into()));
    }
    let span = *times.last().unwrap() - times[0];
    let dt_min = times.windows(2).map(|w| w[1] - w[0]).fold(T::infinity(), T::min);
    if !(span > T::zero()) || !(dt_min > T::zero()) {
        return Err(Error::Invalid("exponential fit needs increasing times".into()));
    }
    let (lo, hi) = ((T::lit(1e-3) / span).ln(), (T::lit(10.0) / dt_min).ln());
    let cost = |lg: T| linear_fit(times, values, lg.exp()).2;
    let grid = 80;
    let at = |k: usize| lo + (hi - lo) * T::from_count(k) / T::from_count(grid);
    let best = (0..=grid).map(|k| (k, cost(at(k)))).fold((0, T::infinity()), |a, b| if b.1 < a.1 { b } else { a }).0;
    let (mut a, mut b) = (at(best.saturating_sub(1)), at((best + 1).min(grid)));
    let ratio = T::lit(0.5 * (5.0f64.sqrt() - 1.0));
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..100 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = cost(x2);
        }
    }
    let gamma = (T::lit(0.5) * (a + b)).exp();
    let (c, d, ssr) = linear_fit(times, values, gamma);
    Ok(ExponentialFit { gamma, amplitude: c, offset: d, rms_residual: (ssr / T::from_count(times.len())).sqrt() })
}

/// One system of a stationary experiment and the factor applied to its
/// functionals (1 for micro, `ϑ` for macro).
pub struct StationaryMember<'a, T> {
    pub system: &'a SpdeSystem<T>,
    pub weight: T,
}

/// Long-time averages of one functional for every member.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryRow<T> {
    pub functional: String,
    pub estimates: Vec<Estimate<T>>,
}

impl<T: Real> StationaryRow<T> {
    /// `|a − b| ≤ k·combined SE` for members `a` and `b`.
    pub fn agrees(&self, a: usize, b: usize, k: T) -> bool {
        let (x, y) = (&self.estimates[a], &self.estimates[b]);
        (x.mean - y.mean).abs() <= k * x.combined_se(y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryReport<T> {
    pub burn_in: T,
    pub rows: Vec<StationaryRow<T>>,
    /// Fit of the ensemble mean of the weighted `‖u‖²`, per member.
    pub fits: Vec<ExponentialFit<T>>,
    /// `|c| e^{−γ·burn_in}` per member.
    pub transients: Vec<T>,
    pub series: Vec<EnsembleSeries<T>>,
}

/// Runs every member to its final time with common random numbers, fits the
/// transient of `E‖u‖²`, and averages `‖u‖²`, `(u, φ_k)` and `(u, φ_k)²`
/// (weighted) over `t ≥ burn_in` per path.
///
/// Fails with [`Error::InsufficientBurnIn`] when the fitted transient left at
/// `burn_in` exceeds the standard error of the stationary `‖u‖²` estimate.
pub fn stationary_experiment<T: Real>(
    members: &[StationaryMember<'_, T>],
    test_functions: &[ScalarField<T>],
    burn_in: T,
    seeds: &[u64],
    batch: usize,
) -> Result<StationaryReport<T>> {
    let systems: Vec<&SpdeSystem<T>> = members.iter().map(|m| m.system).collect();
    let (series, _) = observe_ensemble(&systems, test_functions, seeds, batch, &[])?;
    let times = &series[0].times;
    let start = times.iter().position(|&t| t >= burn_in).unwrap_or(times.len());
    if times.len() - start < 2 {
        return Err(Error::Invalid(format!("burn-in {burn_in} leaves fewer than two samples")));
    }
    let mut names = vec!["sq_norm".to_string()];
    for k in 1..=test_functions.len() {
        names.push(format!("mode_{k}"));
    }
    for k in 1..=test_functions.len() {
        names.push(format!("mode_{k}_sq"));
    }
    let mut rows: Vec<StationaryRow<T>> =
        names.into_iter().map(|functional| StationaryRow { functional, estimates: Vec::new() }).collect();
    let mut fits = Vec::new();
    let mut transients = Vec::new();
    for (m, s) in members.iter().zip(&series) {
        let w = m.weight;
        let nk = test_functions.len();
        let per_path: Vec<Vec<T>> = s
            .paths
            .iter()
            .map(|rec| {
                let tail = |f: &dyn Fn(usize) -> T| mean_of(&(start..times.len()).map(f).collect::<Vec<_>>());
                let mut v = vec![tail(&|n| w * rec.mass_sq[n])];
                for k in 0..nk {
                    v.push(tail(&|n| w * rec.pairings[k][n]));
                }
                for k in 0..nk {
                    v.push(tail(&|n| (w * rec.pairings[k][n]).powi(2)));
                }
                v
            })
            .collect();
        for (j, row) in rows.iter_mut().enumerate() {
            row.estimates.push(estimate(&per_path.iter().map(|v| v[j]).collect::<Vec<_>>()));
        }
        let mean_sq: Vec<T> = s.pointwise(|p| s.paths[p].mass_sq.iter().map(|x| w * *x).collect()).iter().map(|e| e.mean).collect();
        let fit = fit_exponential(times, &mean_sq)?;
        let transient = fit.amplitude.abs() * (-fit.gamma * burn_in).exp();
        let stationary = rows[0].estimates.last().copied().expect("estimate pushed");
        let floor = stationary.se.max(T::lit(1e-9) * fit.offset.abs().max(fit.amplitude.abs()));
        if transient > floor {
            return Err(Error::InsufficientBurnIn { transient: transient.to_f64_lossy(), floor: floor.to_f64_lossy() });
        }
        fits.push(fit);
        transients.push(transient);
    }
    Ok(StationaryReport { burn_in, rows, fits, transients, series })
}

impl<T: Real> StationaryReport<T> {
    /// CSV `functional,micro_est,micro_se,macro_est,macro_se,gamma_fit` for
    /// members `micro` and `macro_index`; `gamma_fit` is the micro fit.
    pub fn write_csv<W: Write>(&self, micro: usize, macro_index: usize, mut w: W) -> std::io::Result<()> {
        writeln!(w, "functional,micro_est,micro_se,macro_est,macro_se,gamma_fit")?;
        for r in &self.rows {
            let (a, b) = (&r.estimates[micro], &r.estimates[macro_index]);
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.functional,
                a.mean.to_f64_lossy(),
                a.se.to_f64_lossy(),
                b.mean.to_f64_lossy(),
                b.se.to_f64_lossy(),
                self.fits[micro].gamma.to_f64_lossy()
            )?;
        }
        Ok(())
    }
}
