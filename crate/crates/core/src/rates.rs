//! τ-sweeps of the adiabatic distance `sup_s dist(ψ_τ(s), Range P(s))` and
//! fits of its decay rate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{FamilyMetadata, HamiltonianFamily, ProjectionCurve, RateClass};
use crate::operators::{c64, random, CMatrix};
use crate::propagation::{propagate_adiabatic, propagate_schrodinger, Backend, PropagationOptions, StepPolicy};

/// Distances below this are treated as exactly adiabatic.
pub const NUMERICAL_FLOOR: f64 = 1e-9;
pub const DEFAULT_HEAD_DROP: usize = 2;
/// Minimal number of points a rate fit needs after dropping the head.
const MIN_FIT_POINTS: usize = 4;

/// Geometric ladder `start, 2·start, …` up to and including `end`.
pub fn tau_ladder(start: f64, end: f64) -> Vec<f64> {
    let mut taus = Vec::new();
    let mut t = start;
    while t <= end * (1.0 + 1e-12) {
        taus.push(t);
        t *= 2.0;
    }
    taus
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSelector {
    /// Tracked eigenvector for rank one, a seeded random unit vector in
    /// `Range P(0)` otherwise.
    #[default]
    Auto,
    /// Seeded random unit vector in `Range P(0)`.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub samples: usize,
    pub policy: StepPolicy,
    pub backend: Backend,
    pub initial: InitialSelector,
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    /// Also propagate Kato's evolution to record the intertwining defect.
    pub intertwining: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            samples: crate::propagation::DEFAULT_SAMPLES,
            policy: StepPolicy::default(),
            backend: Backend::Auto,
            initial: InitialSelector::Auto,
            seed: 0,
            workers: None,
            intertwining: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub sup_distance: f64,
    pub steps: usize,
    pub unitarity_defect: f64,
    /// `max_s ‖U_A(s)P(0) − P(s)U_A(s)‖`, when recorded.
    pub intertwining_defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub model: String,
    pub metadata: FamilyMetadata,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn tau_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.tau).collect()
    }

    pub fn sup_distances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sup_distance).collect()
    }

    /// Whether distances strictly decrease after the first `head` entries.
    pub fn decreasing_after(&self, head: usize) -> bool {
        self.points.iter().skip(head).collect::<Vec<_>>().windows(2).all(|w| w[1].sup_distance < w[0].sup_distance)
    }

    /// CSV with header `tau,sup_distance,steps,unitarity_defect,intertwining_defect`.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["tau", "sup_distance", "steps", "unitarity_defect", "intertwining_defect"])?;
        for p in &self.points {
            w.write_record([
                format!("{:.16e}", p.tau),
                format!("{:.16e}", p.sup_distance),
                p.steps.to_string(),
                format!("{:.16e}", p.unitarity_defect),
                p.intertwining_defect.map_or_else(String::new, |d| format!("{d:.16e}")),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn initial_state(curve: &ProjectionCurve<'_>, selector: InitialSelector, seed: u64) -> Result<CMatrix> {
    let basis = curve.projector_at(0.0)?.basis().clone();
    if basis.ncols() == 1 && selector == InitialSelector::Auto {
        return Ok(basis);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = random::unit_vector(&mut rng, basis.ncols());
    let psi = &basis * coeffs;
    let norm = psi.norm();
    Ok(CMatrix::from_column_slice(psi.len(), 1, (psi * c64(1.0 / norm, 0.0)).as_slice()))
}

fn sample_grid(samples: usize) -> Vec<f64> {
    (0..samples).map(|k| k as f64 / (samples - 1) as f64).collect()
}

fn sweep_point(curve: &ProjectionCurve<'_>, psi: &CMatrix, tau: f64, options: &SweepOptions) -> Result<SweepPoint> {
    let prop = PropagationOptions { steps: None, samples: options.samples, backend: options.backend, policy: options.policy };
    let traj = propagate_schrodinger(curve, tau, psi, &prop)?;
    let intertwining_defect = if options.intertwining {
        let basis = curve.projector_at(0.0)?.basis().clone();
        propagate_adiabatic(curve, tau, &basis, &prop)?.max_intertwining_defect()
    } else {
        None
    };
    Ok(SweepPoint {
        tau,
        sup_distance: traj.sup_distance().min(1.0),
        steps: traj.steps,
        unitarity_defect: traj.unitarity_defect,
        intertwining_defect,
    })
}

/// Propagates the tracked initial state for every `τ` and records the
/// largest distance to `Range P(s)` over the sample grid. Results are in
/// `taus` order regardless of worker count.
pub fn run_sweep(family: &dyn HamiltonianFamily, taus: &[f64], options: &SweepOptions) -> Result<SweepResult> {
    if taus.len() < 2 || taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("tau_values", "need at least two strictly ascending values"));
    }
    if options.samples < 2 {
        return Err(Error::invalid("samples", "at least two sample points required"));
    }
    let curve = ProjectionCurve::new(family, &sample_grid(options.samples))?;
    let psi = initial_state(&curve, options.initial, options.seed)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = options.workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<SweepPoint>> =
        pool.install(|| taus
        .par_iter()
        .map(|&tau| {
            let point = sweep_point(&curve, &psi, tau, options);
            if let Ok(p) = &point {
                log::info!("{}: tau {tau} sup distance {:.6e} ({} steps)", family.metadata().model, p.sup_distance, p.steps);
            }
            point
        })
        .collect());
    let mut points = Vec::with_capacity(taus.len());
    for (tau, r) in taus.iter().zip(results) {
        points.push(r.map_err(|e| Error::Sweep { tau: *tau, source: Box::new(e) })?);
    }
    let metadata = family.metadata();
    Ok(SweepResult { model: metadata.model.clone(), metadata, points })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateModel {
    /// `d(τ) ≈ C τ^{−γ}`.
    PurePower,
    /// `d(τ) ≈ C (log τ / τ)^γ`.
    PowerWithLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub gamma: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    pub model: RateModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::DegenerateFit { reason: "fewer than two points".into() });
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::DegenerateFit { reason: "non-finite data".into() });
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit { reason: "all abscissae equal".into() });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(LinearFit { slope, intercept, r_squared })
}

fn fit_points(taus: &[f64], distances: &[f64], head_drop: usize) -> Result<Vec<(f64, f64)>> {
    let kept: Vec<(f64, f64)> = taus.iter().copied().zip(distances.iter().copied()).skip(head_drop).collect();
    if kept.len() < MIN_FIT_POINTS {
        return Err(Error::DegenerateFit {
            reason: format!("{} points after dropping {head_drop}, need {MIN_FIT_POINTS}", kept.len()),
        });
    }
    if kept.iter().all(|&(_, d)| d < NUMERICAL_FLOOR) {
        return Err(Error::DegenerateFit { reason: "all distances at the numerical floor: evolution is exactly adiabatic".into() });
    }
    if kept.iter().any(|&(t, d)| t <= 1.0 || d <= 0.0) {
        return Err(Error::DegenerateFit { reason: "need tau > 1 and positive distances".into() });
    }
    Ok(kept)
}

/// Fits `distances` against `taus` under the given model.
pub fn fit_series(taus: &[f64], distances: &[f64], head_drop: usize, model: RateModel) -> Result<RateFit> {
    let kept = fit_points(taus, distances, head_drop)?;
    let abscissa = |t: f64| match model {
        RateModel::PurePower => -t.ln(),
        RateModel::PowerWithLog => t.ln().ln() - t.ln(),
    };
    let pts: Vec<(f64, f64)> = kept.iter().map(|&(t, d)| (abscissa(t), d.ln())).collect();
    let fit = least_squares(&pts)?;
    Ok(RateFit { gamma: fit.slope, log_prefactor: fit.intercept, r_squared: fit.r_squared, model })
}

pub fn fit_with_model(sweep: &SweepResult, head_drop: usize, model: RateModel) -> Result<RateFit> {
    fit_series(&sweep.tau_values(), &sweep.sup_distances(), head_drop, model)
}

/// Fits both models and returns the one with the larger `r²`.
pub fn fit_rate(sweep: &SweepResult, head_drop: usize) -> Result<RateFit> {
    let pure = fit_with_model(sweep, head_drop, RateModel::PurePower)?;
    let log = fit_with_model(sweep, head_drop, RateModel::PowerWithLog)?;
    Ok(if log.r_squared > pure.r_squared { log } else { pure })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    /// Predicted `γ`; absent when the evolution is exactly adiabatic.
    pub gamma: Option<f64>,
    pub model: RateModel,
    /// The prediction is a guarantee, so fitted rates may exceed it.
    pub lower_bound: bool,
}

/// Predicted decay rate for a family class. `alpha` overrides the exponent
/// stored in the metadata.
pub fn predict_rate(metadata: &FamilyMetadata, alpha: Option<f64>) -> Result<RatePrediction> {
    let pure = |gamma: f64| RatePrediction { gamma: Some(gamma), model: RateModel::PurePower, lower_bound: true };
    let check = |a: f64| {
        if a > 0.0 && a.is_finite() {
            Ok(a)
        } else {
            Err(Error::invalid("alpha", format!("must be positive, got {a}")))
        }
    };
    Ok(match metadata.rate_class {
        RateClass::Stationary => RatePrediction { gamma: None, model: RateModel::PurePower, lower_bound: true },
        RateClass::Gapped => pure(1.0),
        RateClass::Crossing { order } => pure(1.0 / (order as f64 + 1.0)),
        RateClass::Holder { alpha: a } => {
            let a = check(alpha.unwrap_or(a))?;
            pure(if metadata.unitary_family { a / (1.0 + a) } else { a / (2.0 + a) })
        }
        RateClass::Friedrichs { alpha: a } => {
            let a = check(alpha.unwrap_or(a))?;
            if a > 1.0 {
                pure(1.0)
            } else if a == 1.0 {
                RatePrediction { gamma: Some(1.0), model: RateModel::PowerWithLog, lower_bound: true }
            } else {
                pure(a)
            }
        }
    })
}

/// Keeps the `τ` values for which a continuum of `n_levels` levels is still
/// fine enough: `n_levels ≥ 4τ`.
pub fn cap_taus_for_levels(taus: &[f64], n_levels: usize) -> Vec<f64> {
    taus.iter().copied().filter(|&t| 4.0 * t <= n_levels as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiscretizationGuard {
    pub gamma: f64,
    pub gamma_doubled: f64,
    pub shift: f64,
    pub passed: bool,
}

/// Largest change of the fitted rate under doubling `n_levels`.
pub const DISCRETIZATION_SHIFT: f64 = 0.05;

/// Refits the Friedrichs sweep with `n_levels` doubled and compares rates
/// under `model`.
pub fn discretization_guard(
    params: &crate::families::FriedrichsParams,
    taus: &[f64],
    options: &SweepOptions,
    head_drop: usize,
    model: RateModel,
) -> Result<(SweepResult, SweepResult, DiscretizationGuard)> {
    let base = crate::families::Friedrichs::new(params.clone())?;
    let doubled =
        crate::families::Friedrichs::new(crate::families::FriedrichsParams { n_levels: 2 * params.n_levels, ..params.clone() })?;
    let a = run_sweep(&base, taus, options)?;
    let b = run_sweep(&doubled, taus, options)?;
    let (ga, gb) = (fit_with_model(&a, head_drop, model)?.gamma, fit_with_model(&b, head_drop, model)?.gamma);
    let shift = (ga - gb).abs();
    Ok((a, b, DiscretizationGuard { gamma: ga, gamma_doubled: gb, shift, passed: shift <= DISCRETIZATION_SHIFT }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> SweepResult {
        let metadata = Stationary::new(StationaryParams::default()).unwrap().metadata();
        SweepResult {
            model: "synthetic".into(),
            metadata,
            points: tau_ladder(16.0, 1024.0)
                .into_iter()
                .map(|tau| SweepPoint { tau, sup_distance: f(tau), steps: 0, unitarity_defect: 0.0, intertwining_defect: None })
                .collect(),
        }
    }

    #[test]
    fn ladder() {
        assert_eq!(tau_ladder(16.0, 1024.0), vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0]);
        assert_eq!(cap_taus_for_levels(&tau_ladder(16.0, 1024.0), 1024), vec![16.0, 32.0, 64.0, 128.0, 256.0]);
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_rate(&synthetic(|t| 3.0 / t), 2).unwrap();
        assert_eq!(fit.model, RateModel::PurePower);
        assert!((fit.gamma - 1.0).abs() < 1e-6 && fit.r_squared > 0.99999);
        assert!((fit.log_prefactor - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn planted_log_model() {
        let fit = fit_rate(&synthetic(|t| t.ln() / t), 2).unwrap();
        assert_eq!(fit.model, RateModel::PowerWithLog);
        assert!((fit.gamma - 1.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_fits() {
        assert!(matches!(fit_rate(&synthetic(|_| 1e-12), 2), Err(Error::DegenerateFit { .. })));
        assert!(matches!(fit_rate(&synthetic(|t| 1.0 / t), 5), Err(Error::DegenerateFit { .. })));
    }

    #[test]
    fn predictions() {
        let meta = |rate_class, unitary_family| FamilyMetadata {
            model: "x".into(),
            parameters: serde_json::Value::Null,
            gap_present: false,
            unitary_family,
            rate_class,
        };
        let gamma = |m: FamilyMetadata| predict_rate(&m, None).unwrap().gamma.unwrap();
        assert_eq!(gamma(meta(RateClass::Gapped, true)), 1.0);
        assert!((gamma(meta(RateClass::Holder { alpha: 1.0 }, false)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gamma(meta(RateClass::Holder { alpha: 1.0 }, true)), 0.5);
        assert!((gamma(meta(RateClass::Crossing { order: 2 }, false)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gamma(meta(RateClass::Friedrichs { alpha: 0.5 }, true)), 0.5);
        assert_eq!(gamma(meta(RateClass::Friedrichs { alpha: 3.0 }, true)), 1.0);
        let log = predict_rate(&meta(RateClass::Friedrichs { alpha: 1.0 }, true), None).unwrap();
        assert_eq!(log.model, RateModel::PowerWithLog);
        assert!(predict_rate(&meta(RateClass::Holder { alpha: 1.0 }, false), Some(-1.0)).is_err());
    }

    #[test]
    fn stationary_sweep_is_adiabatic() {
        let f = Stationary::new(StationaryParams { levels: vec![0.0, 1.0, 2.5], tracked_index: 0 }).unwrap();
        let r = run_sweep(&f, &[16.0, 32.0, 64.0], &SweepOptions::default()).unwrap();
        assert!(r.sup_distances().iter().all(|&d| d <= 1e-8));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let f = Crossing::new(CrossingParams::default()).unwrap();
        let taus = [16.0, 32.0, 64.0];
        let one = run_sweep(&f, &taus, &SweepOptions { workers: Some(1), ..Default::default() }).unwrap();
        let many = run_sweep(&f, &taus, &SweepOptions { workers: Some(3), ..Default::default() }).unwrap();
        assert_eq!(one, many);
        let (mut a, mut b) = (Vec::new(), Vec::new());
        one.write_csv(&mut a).unwrap();
        many.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with("tau,sup_distance,steps,unitarity_defect,intertwining_defect\n"));
    }
}
