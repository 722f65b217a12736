//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use adiabatic_lab::cli::{run, RunOverrides};
use adiabatic_lab::commutator::{
    bound_profile, phi_norms, projected_norms, solve_regularized, x_bound, RandomInstance,
};
use adiabatic_lab::families::*;
use adiabatic_lab::operators::decompose;
use adiabatic_lab::propagation::{
    deviation_norm, propagate_adiabatic, propagate_schrodinger, Backend, PropagationOptions, StepPolicy,
};
use adiabatic_lab::rates::{
    fit_with_model, predict_rate, run_sweep, tau_ladder, RateModel, SweepOptions, SweepResult,
};
use adiabatic_lab::spectral::{holder_exponent, log_scales, planted_measure, WindowKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

fn grid(points: usize) -> Vec<f64> {
    (0..points).map(|k| k as f64 / (points - 1) as f64).collect()
}

fn within(limit: Duration, started: Instant) -> Result<(), String> {
    let elapsed = started.elapsed();
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("runtime {:.1}s exceeds {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
    }
}

fn phi_constants() -> Outcome {
    let started = Instant::now();
    let (l1, moment) = phi_norms(2000).map_err(|e| e.to_string())?;
    within(Duration::from_secs(1), started)?;
    let (e1, e2) = ((l1 - 1.0 / PI).abs(), (moment - 0.25 / PI).abs());
    let detail = format!("|Phi|_1 = {l1:.9} (err {e1:.1e}), |w Phi|_1 = {moment:.9} (err {e2:.1e})");
    if e1 <= 1e-6 && e2 <= 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Instance record shared by the residual and X-bound criteria.
struct Certificate {
    label: String,
    residual: f64,
    tolerance: f64,
    xp: f64,
    x_bound: f64,
}

const DELTAS: [f64; 3] = [1.0, 0.25, 0.05];

fn certificates() -> Result<Vec<Certificate>, String> {
    let err = |e: adiabatic_lab::Error| e.to_string();
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..200 {
        let dim = rng.random_range(2..=32usize);
        let rank = rng.random_range(1..=(dim - 1).min(3));
        let inst = RandomInstance::generate(&mut rng, dim, rank, 1e-3).map_err(err)?;
        let d = decompose(&inst.hamiltonian).map_err(err)?;
        for delta in DELTAS {
            let sol = solve_regularized(&d, &inst.projector, &inst.pdot, delta).map_err(err)?;
            out.push(Certificate {
                label: format!("random {i} (dim {dim}) delta {delta}"),
                residual: sol.residual,
                tolerance: sol.residual_tolerance,
                xp: sol.xp_norm,
                x_bound: x_bound(&inst.pdot, &inst.projector, delta),
            });
        }
    }
    let points = grid(11);
    for family in standard_zoo(64).map_err(err)? {
        let curve = ProjectionCurve::new(family.as_ref(), &points).map_err(err)?;
        for &s in &points {
            let frame = curve.frame_at(s).map_err(err)?;
            let d = family.decompose_at(s).map_err(err)?;
            for delta in DELTAS {
                let sol = solve_regularized(&d, &frame.projector, &frame.pdot, delta).map_err(err)?;
                out.push(Certificate {
                    label: format!("{} s = {s} delta {delta}", family.metadata().model),
                    residual: sol.residual,
                    tolerance: sol.residual_tolerance,
                    xp: sol.xp_norm,
                    x_bound: x_bound(&frame.pdot, &frame.projector, delta),
                });
            }
        }
    }
    Ok(out)
}

fn commutator_residual(certs: &[Certificate], elapsed: Duration) -> Outcome {
    if elapsed > Duration::from_secs(30) {
        return Err(format!("runtime {:.1}s exceeds 30s", elapsed.as_secs_f64()));
    }
    let worst = certs.iter().map(|c| c.residual / c.tolerance).fold(0.0, f64::max);
    let bad: Vec<&str> = certs.iter().filter(|c| c.residual > c.tolerance).map(|c| c.label.as_str()).collect();
    let detail = format!("{} instances, worst residual/tolerance {worst:.2e}, {:.1}s", certs.len(), elapsed.as_secs_f64());
    if bad.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; violations: {}", bad.join("; ")))
    }
}

fn x_bound_certification(certs: &[Certificate]) -> Outcome {
    let violations = certs.iter().filter(|c| c.xp > c.x_bound).count();
    let worst = certs.iter().filter(|c| c.x_bound > 0.0).map(|c| c.xp / c.x_bound).fold(0.0, f64::max);
    let detail = format!("{} instances, {violations} violations, max |XP|/bound = {worst:.3}", certs.len());
    if violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bound_dominance() -> Outcome {
    let started = Instant::now();
    let err = |e: adiabatic_lab::Error| e.to_string();
    let f = GappedTwoLevel::new(GappedTwoLevelParams { gap: 1.0, ..Default::default() }).map_err(err)?;
    let points = grid(101);
    let curve = ProjectionCurve::new(&f, &points).map_err(err)?;
    let p0 = curve.projector_at(0.0).map_err(err)?;
    let basis = p0.basis().clone();
    let profile = bound_profile(&curve, 0.5, &points).map_err(err)?;
    let mut lines = Vec::new();
    let mut ok = true;
    for tau in [64.0, 128.0, 256.0] {
        let deviations = |steps: Option<usize>| -> Result<Vec<f64>, String> {
            let opts = PropagationOptions { steps, ..Default::default() };
            let u = propagate_schrodinger(&curve, tau, &basis, &opts).map_err(err)?;
            let ua = propagate_adiabatic(&curve, tau, &basis, &opts).map_err(err)?;
            deviation_norm(&u, &ua, &p0).map_err(err)
        };
        let default_steps = StepPolicy::default().steps_for(tau, 101);
        let coarse = deviations(None)?;
        let fine = deviations(Some(2 * default_steps))?;
        // integrator tolerance: change of the measured deviation under step doubling
        let tolerance = coarse.iter().zip(&fine).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let bound = profile.value(tau);
        let margin = coarse.iter().map(|d| bound - d).fold(f64::INFINITY, f64::min);
        ok &= margin >= tolerance;
        lines.push(format!("tau {tau}: bound {bound:.3e}, min margin {margin:.3e} vs tol {tolerance:.1e}"));
    }
    within(Duration::from_secs(120), started)?;
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn sweep(family: &dyn HamiltonianFamily, taus: &[f64]) -> Result<SweepResult, String> {
    let opts = SweepOptions { intertwining: false, ..Default::default() };
    run_sweep(family, taus, &opts).map_err(|e| e.to_string())
}

fn predicted_fit(result: &SweepResult) -> Result<adiabatic_lab::rates::RateFit, String> {
    let prediction = predict_rate(&result.metadata, None).map_err(|e| e.to_string())?;
    fit_with_model(result, 2, prediction.model).map_err(|e| e.to_string())
}

fn gapped_rate() -> Outcome {
    let started = Instant::now();
    let f = GappedTwoLevel::new(GappedTwoLevelParams::default()).map_err(|e| e.to_string())?;
    let result = sweep(&f, &tau_ladder(16.0, 1024.0))?;
    let fit = predicted_fit(&result)?;
    within(Duration::from_secs(120), started)?;
    let detail = format!("gamma = {:.4}, r2 = {:.6}, decreasing = {}", fit.gamma, fit.r_squared, result.decreasing_after(2));
    if fit.gamma >= 0.9 && fit.r_squared >= 0.98 && result.decreasing_after(2) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crossing_rates() -> Outcome {
    let started = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (order, target, tol) in [(1, 0.5, 0.15), (2, 1.0 / 3.0, 0.12)] {
        let f = Crossing::new(CrossingParams { order, ..Default::default() }).map_err(|e| e.to_string())?;
        let fit = predicted_fit(&sweep(&f, &tau_ladder(16.0, 1024.0))?)?;
        ok &= (fit.gamma - target).abs() <= tol;
        lines.push(format!("m = {order}: gamma = {:.4} (target {target:.3} +- {tol})", fit.gamma));
    }
    within(Duration::from_secs(300), started)?;
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn friedrichs_regimes() -> Outcome {
    let started = Instant::now();
    let taus = tau_ladder(16.0, 512.0);
    let mut lines = Vec::new();
    let mut ok = true;
    for alpha in [2.0, 0.5, 1.0] {
        let run_at = |n_levels| -> Result<SweepResult, String> {
            let f = Friedrichs::new(FriedrichsParams { n_levels, alpha, coupling_scale: 1.0 }).map_err(|e| e.to_string())?;
            sweep(&f, &taus)
        };
        let base = run_at(4096)?;
        let doubled = run_at(8192)?;
        let pure = fit_with_model(&base, 2, RateModel::PurePower).map_err(|e| e.to_string())?;
        let log = fit_with_model(&base, 2, RateModel::PowerWithLog).map_err(|e| e.to_string())?;
        let predicted = predicted_fit(&base)?;
        let shift = (predicted.gamma - predicted_fit(&doubled)?.gamma).abs();
        let d = base.sup_distances();
        let decays = d[d.len() - 1] <= 0.5 * d[0];
        let regime_ok = if alpha > 1.0 {
            pure.gamma >= 0.85
        } else if alpha < 1.0 {
            (pure.gamma - 0.5).abs() <= 0.15
        } else {
            log.r_squared >= pure.r_squared - 0.01 && (log.gamma - 1.0).abs() <= 0.15
        };
        ok &= regime_ok && shift <= 0.05 && decays;
        lines.push(format!(
            "alpha {alpha}: pure gamma {:.4} (r2 {:.5}), log gamma {:.4} (r2 {:.5}), guard shift {shift:.4}, decay {:.2}",
            pure.gamma,
            pure.r_squared,
            log.gamma,
            log.r_squared,
            d[d.len() - 1] / d[0]
        ));
    }
    within(Duration::from_secs(1200), started)?;
    if ok {
        Ok(lines.join("; "))
    } else {
        Err(lines.join("; "))
    }
}

fn remainder_vanishes() -> Outcome {
    let f = Friedrichs::new(FriedrichsParams { n_levels: 4096, alpha: 0.5, coupling_scale: 1.0 }).map_err(|e| e.to_string())?;
    let deltas: Vec<f64> = (1..=8).map(|k| 0.5f64.powi(k)).collect();
    let norms: Vec<f64> = deltas
        .iter()
        .map(|&d| projected_norms(&f, 0.5, d).map(|n| n.yp))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let decreasing = norms.windows(2).all(|w| w[1] < w[0]);
    let pts: Vec<(f64, f64)> = deltas.iter().zip(&norms).map(|(d, y)| (d.ln(), y.ln())).collect();
    let slope = adiabatic_lab::rates::least_squares(&pts).map_err(|e| e.to_string())?.slope;
    let detail = format!("decreasing = {decreasing}, log-log slope {slope:.4} (alpha 0.5)");
    if decreasing && (slope - 0.5).abs() <= 0.1 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn intertwining() -> Outcome {
    let err = |e: adiabatic_lab::Error| e.to_string();
    let points = grid(101);
    let mut lines = Vec::new();
    let mut ok = true;
    for family in standard_zoo(1024).map_err(err)? {
        let curve = ProjectionCurve::new(family.as_ref(), &points).map_err(err)?;
        let basis = curve.projector_at(0.0).map_err(err)?.basis().clone();
        let t = propagate_adiabatic(&curve, 256.0, &basis, &PropagationOptions::default()).map_err(err)?;
        let defect = t.max_intertwining_defect().unwrap_or(f64::INFINITY);
        ok &= defect <= 1e-6;
        lines.push(format!("{} {defect:.2e}", family.metadata().model));
    }
    // the Friedrichs family again, stepped densely in the lab frame
    let small = Friedrichs::new(FriedrichsParams { n_levels: 32, ..Default::default() }).map_err(err)?;
    let curve = ProjectionCurve::new(&small, &points).map_err(err)?;
    let basis = curve.projector_at(0.0).map_err(err)?.basis().clone();
    let opts = PropagationOptions { backend: Backend::Dense, ..Default::default() };
    let defect = propagate_adiabatic(&curve, 256.0, &basis, &opts).map_err(err)?.max_intertwining_defect().unwrap();
    ok &= defect <= 1e-6;
    lines.push(format!("friedrichs(n=32, dense) {defect:.2e}"));
    if ok {
        Ok(lines.join(", "))
    } else {
        Err(lines.join(", "))
    }
}

fn holder_estimator() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for alpha in [0.25, 0.5, 0.75, 1.0] {
        let m = planted_measure(10_000, alpha).map_err(|e| e.to_string())?;
        let fit = holder_exponent(&m, &log_scales(1e-3, 1e-1, 9), WindowKind::Anchored, 0.0).map_err(|e| e.to_string())?;
        ok &= (fit.alpha - alpha).abs() <= 0.1;
        lines.push(format!("{alpha} -> {:.4}", fit.alpha));
    }
    if ok {
        Ok(lines.join(", "))
    } else {
        Err(lines.join(", "))
    }
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        (
            "sweep",
            r#"{"experiment": "sweep", "model": {"name": "crossing"}, "tau": [16, 32, 64, 128],
                "initial": "random", "seed": 99}"#,
        ),
        (
            "certify",
            r#"{"experiment": "commutator-certify", "model": {"name": "berry-spin"}, "grid_points": 11,
                "delta": {"values": [0.5, 0.05]}, "random_instances": 20, "seed": 7}"#,
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, text) in configs {
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, text).map_err(|e| e.to_string())?;
        let mut outputs = Vec::new();
        for (k, workers) in [(0, 1), (1, 2)] {
            let out = dir.path().join(format!("{name}-{k}"));
            let overrides = RunOverrides { out: Some(out.clone()), workers: Some(workers), seed: None };
            run(&path, &overrides).map_err(|e| e.to_string())?;
            outputs.push(std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
        }
        let same = outputs[0] == outputs[1];
        ok &= same;
        lines.push(format!("{name}: identical = {same}"));
    }
    if ok {
        Ok(lines.join(", "))
    } else {
        Err(lines.join(", "))
    }
}

fn main() {
    let started = Instant::now();
    let certs_started = Instant::now();
    let certs = certificates();
    let certs_elapsed = certs_started.elapsed();
    let criteria: Vec<(&str, Check)> = vec![
        ("1 phi-norm constants", Box::new(phi_constants)),
        ("2 commutator residual", Box::new(|| commutator_residual(certs.as_ref().map_err(Clone::clone)?, certs_elapsed))),
        ("3 regularized X bound", Box::new(|| x_bound_certification(certs.as_ref().map_err(Clone::clone)?))),
        ("4 error bound dominance", Box::new(bound_dominance)),
        ("5 gapped rate", Box::new(gapped_rate)),
        ("6 crossing rates", Box::new(crossing_rates)),
        ("7 friedrichs regimes", Box::new(friedrichs_regimes)),
        ("8 remainder vanishing", Box::new(remainder_vanishes)),
        ("9 intertwining", Box::new(intertwining)),
        ("10 holder estimator", Box::new(holder_estimator)),
        ("11 reproducibility", Box::new(reproducibility)),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        match check() {
            Ok(detail) => println!("PASS [{name}] {detail} ({:.1}s)", t.elapsed().as_secs_f64()),
            Err(detail) => {
                failures += 1;
                println!("FAIL [{name}] {detail} ({:.1}s)", t.elapsed().as_secs_f64());
            }
        }
    }
    println!("acceptance: {failures} failing criteria, {:.1}s total", started.elapsed().as_secs_f64());
    if failures > 0 {
        std::process::exit(1);
    }
}
