//! Executes an [`ExperimentConfig`] and writes its artifacts.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Assertions, DeltaSchedule, ExperimentConfig, ExperimentKind, MeasureSource};
use crate::commutator::{self, RandomInstance};
use crate::error::{Error, Result};
use crate::families::{build_model, HamiltonianFamily, ProjectionCurve, RateClass};
use crate::operators::{decompose, CVector};
use crate::propagation::{deviation_norm, propagate_adiabatic, propagate_schrodinger, PropagationOptions};
use crate::rates::{self, RateModel, SweepOptions};
use crate::spectral::{self, SpectralMeasure};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "ADIABATIC_LAB_OUTPUT";
/// Default margin by which a bound must exceed the measured deviation.
const DEFAULT_BOUND_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, Default)]
pub struct RunOverrides {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    /// Violated assertion thresholds; nonempty means exit status 2.
    pub violations: Vec<String>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.violations.is_empty() {
            0
        } else {
            2
        }
    }
}

/// What one experiment produced, before it is written.
struct Artifacts {
    csv: Vec<u8>,
    json: Value,
    violations: Vec<String>,
}

fn output_dir(config: &ExperimentConfig, overrides: &RunOverrides, config_path: &Path) -> PathBuf {
    if let Some(out) = &overrides.out {
        return out.clone();
    }
    if let Some(dir) = &config.output_dir {
        return PathBuf::from(dir);
    }
    let stem = config_path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    let root = std::env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(stem)
}

pub fn run(config_path: &Path, overrides: &RunOverrides) -> Result<RunOutcome> {
    let started = Instant::now();
    let (mut config, raw) = ExperimentConfig::load(config_path)?;
    if let Some(seed) = overrides.seed {
        config.seed = Some(seed);
    }
    if let Some(workers) = overrides.workers {
        if workers == 0 {
            return Err(Error::Config("`--workers` must be positive".into()));
        }
        config.workers = Some(workers);
    }
    if config.uses_randomness() && config.seed.is_none() {
        return Err(Error::Config("this experiment uses randomness and requires a `seed`".into()));
    }
    let out_dir = output_dir(&config, overrides, config_path);
    let artifacts = execute(&config)?;

    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("results.csv"), &artifacts.csv)?;
    std::fs::write(out_dir.join("results.json"), serde_json::to_string_pretty(&artifacts.json)? + "\n")?;
    std::fs::write(out_dir.join("config.json"), &raw)?;
    let manifest = json!({
        "experiment": config.experiment,
        "config_path": config_path.display().to_string(),
        "config": config,
        "package": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.seed,
        "workers": config.workers,
        "started_unix_seconds": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "violations": artifacts.violations,
    });
    std::fs::write(out_dir.join("run-manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunOutcome { out_dir, violations: artifacts.violations })
}

/// Runs the experiment without touching the file system.
fn execute(config: &ExperimentConfig) -> Result<Artifacts> {
    match config.experiment {
        ExperimentKind::Sweep => sweep(config),
        ExperimentKind::BoundCheck => bound_check(config),
        ExperimentKind::CommutatorCertify => commutator_certify(config),
        ExperimentKind::HolderEstimate => holder_estimate(config),
        ExperimentKind::PhiNorms => phi_norms(config),
    }
}

fn model(config: &ExperimentConfig) -> Result<Box<dyn HamiltonianFamily>> {
    let named = config.model.as_ref().ok_or_else(|| Error::Config("missing `model`".into()))?;
    build_model(&named.name, &named.parameters)
}

fn assertions(config: &ExperimentConfig) -> Assertions {
    config.assertions.clone().unwrap_or_default()
}

fn sample_grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| k as f64 / (points - 1) as f64).collect()
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::Config(format!("worker pool: {e}")))
}

fn csv_bytes<R: Serialize>(header: &[&str], rows: &[R], row: impl Fn(&R) -> Vec<String>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(row(r))?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn check_min(violations: &mut Vec<String>, name: &str, value: f64, min: Option<f64>) {
    if let Some(m) = min {
        if value.is_nan() || value < m {
            violations.push(format!("{name} = {value} below {m}"));
        }
    }
}

fn check_max(violations: &mut Vec<String>, name: &str, value: f64, max: Option<f64>) {
    if let Some(m) = max {
        if value.is_nan() || value > m {
            violations.push(format!("{name} = {value} above {m}"));
        }
    }
}

fn sweep(config: &ExperimentConfig) -> Result<Artifacts> {
    let family = model(config)?;
    let metadata = family.metadata();
    let mut taus = config.tau.values();
    if let RateClass::Friedrichs { .. } = metadata.rate_class {
        let levels = family.dim() - 1;
        let capped = rates::cap_taus_for_levels(&taus, levels);
        if capped.len() < taus.len() {
            log::warn!("friedrichs: dropping tau values above n_levels/4 = {}", levels as f64 / 4.0);
        }
        taus = capped;
    }
    let options = SweepOptions {
        samples: config.grid_points,
        initial: config.initial,
        seed: config.seed.unwrap_or(0),
        workers: config.workers,
        intertwining: config.intertwining,
        ..Default::default()
    };
    let result = rates::run_sweep(family.as_ref(), &taus, &options)?;
    let prediction = rates::predict_rate(&metadata, None)?;
    let fit = rates::fit_rate(&result, config.head_drop);
    let predicted_fit = rates::fit_with_model(&result, config.head_drop, prediction.model);

    let a = assertions(config);
    let mut violations = Vec::new();
    let max_distance = result.sup_distances().into_iter().fold(0.0, f64::max);
    check_max(&mut violations, "max sup_distance", max_distance, a.max_distance);
    if let Some(limit) = a.max_intertwining {
        let worst = result.points.iter().filter_map(|p| p.intertwining_defect).fold(0.0, f64::max);
        check_max(&mut violations, "max intertwining defect", worst, Some(limit));
    }
    if a.gamma_min.is_some() || a.gamma_max.is_some() || a.r_squared_min.is_some() {
        match &predicted_fit {
            Ok(f) => {
                check_min(&mut violations, "gamma", f.gamma, a.gamma_min);
                check_max(&mut violations, "gamma", f.gamma, a.gamma_max);
                check_min(&mut violations, "r_squared", f.r_squared, a.r_squared_min);
            }
            Err(e) => violations.push(format!("rate fit unavailable: {e}")),
        }
    }

    let mut csv = Vec::new();
    result.write_csv(&mut csv)?;
    let json = json!({
        "experiment": "sweep",
        "model": result.model,
        "metadata": result.metadata,
        "points": result.points,
        "prediction": prediction,
        "fit": fit.as_ref().ok(),
        "predicted_model_fit": predicted_fit.as_ref().ok(),
        "fits": {
            "pure-power": rates::fit_with_model(&result, config.head_drop, RateModel::PurePower).ok(),
            "power-with-log": rates::fit_with_model(&result, config.head_drop, RateModel::PowerWithLog).ok(),
        },
        "fit_error": fit.as_ref().err().map(|e| e.to_string()),
    });
    Ok(Artifacts { csv, json, violations })
}

fn deltas(schedule: &DeltaSchedule, taus: &[f64]) -> Vec<f64> {
    match schedule {
        DeltaSchedule::Fixed(d) => vec![*d],
        DeltaSchedule::Values(v) => v.clone(),
        DeltaSchedule::TauPower(_) => taus.iter().flat_map(|&t| schedule.for_tau(t)).collect(),
    }
}

#[derive(Clone, Debug, Serialize)]
struct BoundRow {
    tau: f64,
    delta: f64,
    bound: f64,
    max_deviation: f64,
    margin: f64,
    deviations: Vec<f64>,
}

fn bound_check(config: &ExperimentConfig) -> Result<Artifacts> {
    let family = model(config)?;
    let grid = sample_grid(config.grid_points);
    let curve = ProjectionCurve::new(family.as_ref(), &grid)?;
    let basis = curve.projector_at(0.0)?.basis().clone();
    let p0 = curve.projector_at(0.0)?;
    let taus = config.tau.values();
    let options = PropagationOptions { samples: config.grid_points, ..Default::default() };

    let jobs: Vec<(f64, f64)> =
        taus.iter().flat_map(|&t| config.delta.for_tau(t).into_iter().map(move |d| (t, d))).collect();
    let rows: Vec<Result<BoundRow>> = pool(config.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(tau, delta)| {
                let profile = commutator::bound_profile(&curve, delta, &grid)?;
                let bound = profile.value(tau);
                let u = propagate_schrodinger(&curve, tau, &basis, &options)?;
                let ua = propagate_adiabatic(&curve, tau, &basis, &options)?;
                let deviations = deviation_norm(&u, &ua, &p0)?;
                let max_deviation = deviations.iter().copied().fold(0.0, f64::max);
                Ok(BoundRow { tau, delta, bound, max_deviation, margin: bound - max_deviation, deviations })
            })
            .collect()
    });
    let rows: Vec<BoundRow> = rows.into_iter().zip(&jobs).map(|(r, (tau, _))| {
        r.map_err(|e| Error::Sweep { tau: *tau, source: Box::new(e) })
    }).collect::<Result<_>>()?;

    let a = assertions(config);
    let mut violations = Vec::new();
    if a.bound_dominates.unwrap_or(false) {
        let tol = a.tolerance.unwrap_or(DEFAULT_BOUND_TOLERANCE);
        for r in &rows {
            if r.margin < tol {
                violations.push(format!("tau = {}, delta = {}: bound {} exceeds deviation {} by less than {tol}", r.tau, r.delta, r.bound, r.max_deviation));
            }
        }
    }
    let csv = csv_bytes(&["tau", "delta", "bound", "max_deviation", "margin"], &rows, |r| {
        vec![fmt(r.tau), fmt(r.delta), fmt(r.bound), fmt(r.max_deviation), fmt(r.margin)]
    })?;
    let json = json!({
        "experiment": "bound-check",
        "metadata": family.metadata(),
        "grid": grid,
        "rows": rows,
    });
    Ok(Artifacts { csv, json, violations })
}

#[derive(Clone, Debug, Serialize)]
struct CertificateRow {
    source: String,
    s: Option<f64>,
    dim: usize,
    delta: f64,
    residual: f64,
    residual_tolerance: f64,
    gap_residual: Option<f64>,
    xp_norm: f64,
    x_bound: f64,
    yp_norm: f64,
}

impl CertificateRow {
    fn ok(&self) -> bool {
        self.residual <= self.residual_tolerance && self.xp_norm <= self.x_bound
    }
}

fn certify(
    source: String,
    s: Option<f64>,
    d: &crate::operators::SpectralDecomposition,
    p: &crate::operators::Projector,
    pdot: &crate::operators::CMatrix,
    deltas: &[f64],
) -> Result<Vec<CertificateRow>> {
    let gap_residual = commutator::solve_gap(d, p, pdot).ok().map(|g| g.residual);
    deltas
        .iter()
        .map(|&delta| {
            let sol = commutator::solve_regularized(d, p, pdot, delta)?;
            Ok(CertificateRow {
                source: source.clone(),
                s,
                dim: d.dim(),
                delta,
                residual: sol.residual,
                residual_tolerance: sol.residual_tolerance,
                gap_residual,
                xp_norm: sol.xp_norm,
                x_bound: commutator::x_bound(pdot, p, delta),
                yp_norm: sol.yp_norm,
            })
        })
        .collect()
}

fn commutator_certify(config: &ExperimentConfig) -> Result<Artifacts> {
    let family = model(config)?;
    let grid = sample_grid(config.grid_points);
    let curve = ProjectionCurve::new(family.as_ref(), &grid)?;
    let deltas = deltas(&config.delta, &config.tau.values());
    let name = family.metadata().model;

    let mut rows = Vec::new();
    for &s in &grid {
        let frame = curve.frame_at(s)?;
        let d = family.decompose_at(s)?;
        rows.extend(certify(name.clone(), Some(s), &d, &frame.projector, &frame.pdot, &deltas)?);
    }
    if config.random_instances > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.expect("checked by run"));
        for i in 0..config.random_instances {
            let dim = rng.random_range(2..=32usize);
            let rank = rng.random_range(1..=(dim - 1).min(3));
            let inst = RandomInstance::generate(&mut rng, dim, rank, 1e-3)?;
            let d = decompose(&inst.hamiltonian)?;
            rows.extend(certify(format!("random-{i}"), None, &d, &inst.projector, &inst.pdot, &deltas)?);
        }
    }

    let failures = rows.iter().filter(|r| !r.ok()).count();
    let mut violations = Vec::new();
    if let Some(allowed) = assertions(config).max_residual_violations {
        if failures > allowed {
            violations.push(format!("{failures} certificate failures, {allowed} allowed"));
        }
    }
    let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
    let csv = csv_bytes(
        &["source", "s", "dim", "delta", "residual", "residual_tolerance", "gap_residual", "xp_norm", "x_bound", "yp_norm"],
        &rows,
        |r| {
            vec![
                r.source.clone(),
                opt(r.s),
                r.dim.to_string(),
                fmt(r.delta),
                fmt(r.residual),
                fmt(r.residual_tolerance),
                opt(r.gap_residual),
                fmt(r.xp_norm),
                fmt(r.x_bound),
                fmt(r.yp_norm),
            ]
        },
    )?;
    let json = json!({
        "experiment": "commutator-certify",
        "model": name,
        "deltas": deltas,
        "instances": rows.len(),
        "failures": failures,
        "rows": rows,
    });
    Ok(Artifacts { csv, json, violations })
}

fn model_measure(family: &dyn HamiltonianFamily, s: f64) -> Result<SpectralMeasure> {
    if let Some(mf) = family.moving_frame() {
        return spectral::leakage_measure(mf, s);
    }
    let grid = sample_grid(crate::propagation::DEFAULT_SAMPLES);
    let curve = ProjectionCurve::new(family, &grid)?;
    let frame = curve.frame_at(s)?;
    let phi: CVector = (&frame.pdot * frame.projector.basis()).column(0).into_owned();
    spectral::spectral_measure(&family.decompose_at(s)?, &phi)
}

fn holder_estimate(config: &ExperimentConfig) -> Result<Artifacts> {
    let holder = config.holder.as_ref().ok_or_else(|| Error::Config("missing `holder` block".into()))?;
    let measure = match holder.source {
        MeasureSource::Model { s } => model_measure(model(config)?.as_ref(), s)?,
        MeasureSource::Planted { alpha, atoms } => spectral::planted_measure(atoms, alpha)?,
    };
    let scales = spectral::log_scales(holder.scales.lo, holder.scales.hi, holder.scales.count);
    let fit = spectral::holder_exponent(&measure, &scales, holder.window, holder.anchor)?;
    let a = assertions(config);
    let mut violations = Vec::new();
    check_min(&mut violations, "alpha", fit.alpha, a.alpha_min);
    check_max(&mut violations, "alpha", fit.alpha, a.alpha_max);
    let mut csv = Vec::new();
    measure.write_csv_to(&mut csv)?;
    let json = json!({
        "experiment": "holder-estimate",
        "source": holder.source,
        "window": holder.window,
        "atoms": measure.len(),
        "total_mass": measure.total_mass(),
        "fit": fit,
    });
    Ok(Artifacts { csv, json, violations })
}

fn phi_norms(config: &ExperimentConfig) -> Result<Artifacts> {
    let (l1, moment) = commutator::phi_norms(config.quadrature_points)?;
    let pi = std::f64::consts::PI;
    let rows = [("phi_l1", l1, 1.0 / pi), ("omega_phi_l1", moment, 0.25 / pi)];
    let mut violations = Vec::new();
    for (name, value, expected) in rows {
        check_max(&mut violations, name, (value - expected).abs(), assertions(config).tolerance);
    }
    let csv = csv_bytes(&["quantity", "value", "expected", "abs_error"], &rows, |&(n, v, e)| {
        vec![n.to_string(), fmt(v), fmt(e), fmt((v - e).abs())]
    })?;
    let json = json!({
        "experiment": "phi-norms",
        "quadrature_points": config.quadrature_points,
        "phi_l1": l1,
        "omega_phi_l1": moment,
        "expected_phi_l1": 1.0 / pi,
        "expected_omega_phi_l1": 0.25 / pi,
    });
    Ok(Artifacts { csv, json, violations })
}

/// Lines printed by `list-models`, in catalog order.
pub fn model_listing() -> Vec<String> {
    crate::families::catalog()
        .into_iter()
        .map(|m| {
            let mut flags = Vec::new();
            flags.push(if m.gap_present { "gapped" } else { "gapless" });
            if m.unitary_family {
                flags.push("unitary-family");
            }
            format!("{}\tparameters={}\tpredicted: {}\t[{}]", m.name, m.parameters, m.predicted_rate, flags.join(", "))
        })
        .collect()
}
