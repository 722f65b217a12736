//! Unitary time stepping of the Schrödinger evolution `iU̇ = τH U` and of
//! Kato's adiabatic evolution `iU̇_A = (τH + i[Ṗ, P]) U_A`, with the distance
//! diagnostics that compare them.
//!
//! Both evolutions use the exponential midpoint rule. Dense families
//! exponentiate the Hermitian midpoint generator through its
//! eigendecomposition. Families with a [`MovingFrame`] can instead be stepped
//! in the body frame, where the generator is applied matrix-free and its
//! exponential summed as a Taylor series to machine precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{frame, MovingFrame, ProjectionCurve};
use crate::operators::{c64, decompose, norm2, unitarity_defect, CMatrix, CVector, HermitianOperator, Projector, C64};

pub const DEFAULT_SAMPLES: usize = 101;
/// Families up to this dimension are stepped densely under [`Backend::Auto`].
const DENSE_AUTO_LIMIT: usize = 64;
const NORMALIZATION_TOL: f64 = 1e-8;
/// Largest `h‖K‖` of a single Taylor exponential before the step is split.
const TAYLOR_STEP_NORM: f64 = 0.5;
const TAYLOR_MAX_TERMS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepPolicy {
    pub min_steps: usize,
    pub steps_per_tau: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self { min_steps: 2048, steps_per_tau: 32.0 }
    }
}

impl StepPolicy {
    /// `max(min_steps, ⌈steps_per_tau · τ⌉)`.
    pub fn floor(&self, tau: f64) -> usize {
        self.min_steps.max((self.steps_per_tau * tau).ceil() as usize)
    }

    /// The floor rounded up so that every sample point lands on a step.
    pub fn steps_for(&self, tau: f64, samples: usize) -> usize {
        let intervals = samples.saturating_sub(1).max(1);
        self.floor(tau).div_ceil(intervals) * intervals
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolutionKind {
    Schrodinger,
    Adiabatic,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Body frame for large families that have one, dense otherwise.
    #[default]
    Auto,
    Dense,
    MovingFrame,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationOptions {
    /// Explicit step count; must respect the policy floor and be a multiple
    /// of `samples − 1`.
    pub steps: Option<usize>,
    pub samples: usize,
    pub backend: Backend,
    pub policy: StepPolicy,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { steps: None, samples: DEFAULT_SAMPLES, backend: Backend::Auto, policy: StepPolicy::default() }
    }
}

/// Sampled evolution of an initial block `X₀` (a state, a basis of
/// `Range P(0)`, or the identity for the full propagator).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub tau: f64,
    pub kind: EvolutionKind,
    pub backend: Backend,
    pub sample_points: Vec<f64>,
    /// `U(s)X₀` in the lab frame at every sample point.
    pub states: Vec<CMatrix>,
    pub initial: CMatrix,
    pub steps: usize,
    /// Largest unitarity defect of a single step.
    pub max_step_unitarity_defect: f64,
    /// `‖X(1)†X(1) − X₀†X₀‖`.
    pub unitarity_defect: f64,
    /// `‖(1 − P(s)) U(s)X₀‖`; for a normalized state this is its distance to
    /// `Range P(s)`.
    pub range_distances: Vec<f64>,
    /// `‖U(s)P(0) − P(s)U(s)‖`, when `X₀` spans `Range P(0)` or is square.
    pub intertwining_defects: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn max_intertwining_defect(&self) -> Option<f64> {
        self.intertwining_defects.as_ref().map(|d| d.iter().copied().fold(0.0, f64::max))
    }

    pub fn sup_distance(&self) -> f64 {
        self.range_distances.iter().copied().fold(0.0, f64::max)
    }
}

pub fn propagate_schrodinger(
    curve: &ProjectionCurve<'_>,
    tau: f64,
    initial: &CMatrix,
    options: &PropagationOptions,
) -> Result<Trajectory> {
    propagate(curve, tau, initial, options, EvolutionKind::Schrodinger)
}

pub fn propagate_adiabatic(
    curve: &ProjectionCurve<'_>,
    tau: f64,
    initial: &CMatrix,
    options: &PropagationOptions,
) -> Result<Trajectory> {
    propagate(curve, tau, initial, options, EvolutionKind::Adiabatic)
}

/// `‖(1 − P)ψ‖`.
pub fn distance_to_range(psi: &CVector, p: &Projector) -> f64 {
    let block = CMatrix::from_column_slice(psi.len(), 1, psi.as_slice());
    p.complement_apply(&block).norm().min(1.0)
}

/// `‖(U_τ(s) − U_A(s))P(0)‖` at every sample point.
pub fn deviation_norm(schrodinger: &Trajectory, adiabatic: &Trajectory, p0: &Projector) -> Result<Vec<f64>> {
    if schrodinger.tau != adiabatic.tau {
        return Err(Error::TrajectoryMismatch {
            reason: format!("tau {} vs {}", schrodinger.tau, adiabatic.tau),
        });
    }
    if schrodinger.sample_points != adiabatic.sample_points {
        return Err(Error::TrajectoryMismatch { reason: "sample grids differ".into() });
    }
    if schrodinger.initial != adiabatic.initial {
        return Err(Error::TrajectoryMismatch { reason: "initial blocks differ".into() });
    }
    let x0 = &schrodinger.initial;
    let n = x0.nrows();
    let square = x0.ncols() == n;
    if !square && !spans_range(x0, p0) {
        return Err(Error::TrajectoryMismatch {
            reason: "initial block neither square nor a basis of Range P(0)".into(),
        });
    }
    Ok(schrodinger
        .states
        .iter()
        .zip(&adiabatic.states)
        .map(|(a, b)| {
            let diff = a - b;
            if square {
                norm2(&(diff * (x0.adjoint() * p0.basis())))
            } else {
                // X₀ is an orthonormal basis of Range P(0), so X₀† is a
                // co-isometry onto it
                norm2(&diff)
            }
        })
        .collect())
}

fn spans_range(x0: &CMatrix, p0: &Projector) -> bool {
    x0.ncols() == p0.rank() && norm2(&p0.complement_apply(x0)) <= 1e-10
}

fn check_initial(initial: &CMatrix, dim: usize) -> Result<()> {
    if initial.nrows() != dim || initial.ncols() == 0 {
        return Err(Error::DimensionMismatch {
            left: format!("initial block {:?}", initial.shape()),
            right: format!("family dimension {dim}"),
        });
    }
    if initial.ncols() == 1 {
        let norm = initial.norm();
        if (norm - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized { norm });
        }
    } else if unitarity_defect(initial) > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { norm: norm2(&(initial.adjoint() * initial)).sqrt() });
    }
    Ok(())
}

fn resolve_steps(tau: f64, options: &PropagationOptions) -> Result<usize> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    if options.samples < 2 {
        return Err(Error::invalid("samples", "at least two sample points required"));
    }
    let intervals = options.samples - 1;
    match options.steps {
        None => Ok(options.policy.steps_for(tau, options.samples)),
        Some(steps) => {
            let required = options.policy.floor(tau);
            if steps < required {
                return Err(Error::StepsBelowFloor { tau, steps, required });
            }
            if steps % intervals != 0 {
                return Err(Error::invalid("steps", format!("must be a multiple of {intervals}")));
            }
            Ok(steps)
        }
    }
}

fn propagate(
    curve: &ProjectionCurve<'_>,
    tau: f64,
    initial: &CMatrix,
    options: &PropagationOptions,
    kind: EvolutionKind,
) -> Result<Trajectory> {
    let family = curve.family();
    check_initial(initial, family.dim())?;
    let steps = resolve_steps(tau, options)?;
    let backend = match (options.backend, family.moving_frame()) {
        (Backend::Auto, Some(_)) if family.dim() > DENSE_AUTO_LIMIT => Backend::MovingFrame,
        (Backend::Auto, _) => Backend::Dense,
        (Backend::MovingFrame, None) => {
            return Err(Error::invalid("backend", "family has no moving frame"));
        }
        (b, _) => b,
    };
    let mut traj = match backend {
        Backend::MovingFrame => {
            let mf = family.moving_frame().expect("checked above");
            step_moving_frame(mf, tau, initial, steps, options.samples, kind)?
        }
        _ => step_dense(curve, tau, initial, steps, options.samples, kind)?,
    };
    traj.backend = backend;

    let p0 = curve.projector_at(0.0)?;
    let square = initial.ncols() == initial.nrows();
    let thin = spans_range(initial, &p0);
    if traj.range_distances.is_empty() {
        for (s, x) in traj.sample_points.iter().zip(&traj.states) {
            let p = curve.projector_at(*s)?;
            traj.range_distances.push(norm2(&p.complement_apply(x)));
        }
    }
    traj.intertwining_defects = if thin {
        // for unitary U and equal ranks, ‖UP₀ − PU‖ = ‖(1 − P)UP₀‖
        Some(traj.range_distances.clone())
    } else if square {
        let mut defects = Vec::with_capacity(traj.states.len());
        for (s, x) in traj.sample_points.iter().zip(&traj.states) {
            let u = x * initial.adjoint();
            let p = curve.projector_at(*s)?;
            defects.push(norm2(&(&u * p0.matrix() - p.matrix() * &u)));
        }
        Some(defects)
    } else {
        None
    };
    Ok(traj)
}

fn empty_trajectory(tau: f64, kind: EvolutionKind, initial: &CMatrix, steps: usize, samples: usize) -> Trajectory {
    let sample_points = (0..samples).map(|k| k as f64 / (samples - 1) as f64).collect();
    Trajectory {
        tau,
        kind,
        backend: Backend::Auto,
        sample_points,
        states: Vec::with_capacity(samples),
        initial: initial.clone(),
        steps,
        max_step_unitarity_defect: 0.0,
        unitarity_defect: 0.0,
        range_distances: Vec::new(),
        intertwining_defects: None,
    }
}

fn final_unitarity(traj: &mut Trajectory) {
    let last = traj.states.last().expect("at least two samples");
    let gram = last.adjoint() * last - traj.initial.adjoint() * &traj.initial;
    traj.unitarity_defect = norm2(&gram);
}

fn step_dense(
    curve: &ProjectionCurve<'_>,
    tau: f64,
    initial: &CMatrix,
    steps: usize,
    samples: usize,
    kind: EvolutionKind,
) -> Result<Trajectory> {
    let family = curve.family();
    let mut traj = empty_trajectory(tau, kind, initial, steps, samples);
    let stride = steps / (samples - 1);
    let h = 1.0 / steps as f64;
    let mut x = initial.clone();
    traj.states.push(x.clone());
    for step in 0..steps {
        let s_mid = (step as f64 + 0.5) * h;
        let mut generator = family.hamiltonian_at(s_mid).into_matrix() * c64(tau, 0.0);
        if kind == EvolutionKind::Adiabatic {
            let fr = curve.frame_at(s_mid)?;
            let p = fr.projector.matrix();
            generator += (&fr.pdot * p - p * &fr.pdot) * c64(0.0, 1.0);
        }
        let d = decompose(&HermitianOperator::from_hermitian_part(generator))?;
        let mut scaled = d.eigenvectors().clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= C64::from_polar(1.0, -h * d.eigenvalues()[j]);
        }
        let exp = scaled * d.eigenvectors().adjoint();
        traj.max_step_unitarity_defect = traj.max_step_unitarity_defect.max(unitarity_defect(&exp));
        x = exp * x;
        if (step + 1) % stride == 0 {
            traj.states.push(x.clone());
        }
    }
    final_unitarity(&mut traj);
    Ok(traj)
}

/// Applies the body-frame generator
/// `K = τD − iB` (Schrödinger) or `K = τD − i(P₀BP₀ + Q₀BQ₀)` (Kato, `Q₀ = 1 − P₀`).
fn apply_body_generator(
    mf: &dyn MovingFrame,
    s: f64,
    tau_energies: &[f64],
    tracked: &[bool],
    kind: EvolutionKind,
    x: &CMatrix,
) -> CMatrix {
    let velocity = match kind {
        EvolutionKind::Schrodinger => mf.apply_velocity(s, x),
        EvolutionKind::Adiabatic => {
            let mut inside = CMatrix::zeros(x.nrows(), x.ncols());
            let mut outside = x.clone();
            for (i, &t) in tracked.iter().enumerate() {
                if t {
                    inside.set_row(i, &x.row(i));
                    outside.row_mut(i).fill(C64::ZERO);
                }
            }
            let b_in = mf.apply_velocity(s, &inside);
            let mut out = mf.apply_velocity(s, &outside);
            for (i, &t) in tracked.iter().enumerate() {
                if t {
                    out.set_row(i, &b_in.row(i));
                }
            }
            out
        }
    };
    let mut y = velocity * c64(0.0, -1.0);
    for (i, mut row) in y.row_iter_mut().enumerate() {
        let e = tau_energies[i];
        for (dst, src) in row.iter_mut().zip(x.row(i).iter()) {
            *dst += src * e;
        }
    }
    y
}

fn step_moving_frame(
    mf: &dyn MovingFrame,
    tau: f64,
    initial: &CMatrix,
    steps: usize,
    samples: usize,
    kind: EvolutionKind,
) -> Result<Trajectory> {
    let mut traj = empty_trajectory(tau, kind, initial, steps, samples);
    let stride = steps / (samples - 1);
    let h = 1.0 / steps as f64;
    let mut tracked = vec![false; mf.dim()];
    for &i in mf.tracked_indices() {
        tracked[i] = true;
    }
    let body_distance = |x: &CMatrix| {
        let mut out = x.clone();
        for (i, &t) in tracked.iter().enumerate() {
            if t {
                out.row_mut(i).fill(C64::ZERO);
            }
        }
        norm2(&out)
    };

    let mut x = mf.to_body(0.0, initial);
    traj.states.push(initial.clone());
    traj.range_distances.push(body_distance(&x));
    for step in 0..steps {
        let s_mid = (step as f64 + 0.5) * h;
        let energies: Vec<f64> = mf.body_energies(s_mid).into_iter().map(|e| tau * e).collect();
        let bound = energies.iter().fold(0.0_f64, |a, e| a.max(e.abs())) + mf.velocity_norm(s_mid);
        let pieces = ((h * bound) / TAYLOR_STEP_NORM).ceil().max(1.0) as usize;
        let dt = h / pieces as f64;
        let before = x.adjoint() * &x;
        for _ in 0..pieces {
            let mut term = x.clone();
            let mut sum = x.clone();
            for j in 1..=TAYLOR_MAX_TERMS {
                term = apply_body_generator(mf, s_mid, &energies, &tracked, kind, &term) * c64(0.0, -dt / j as f64);
                sum += &term;
                if term.norm() <= 1e-17 * sum.norm() {
                    break;
                }
            }
            x = sum;
        }
        let after = x.adjoint() * &x;
        traj.max_step_unitarity_defect = traj.max_step_unitarity_defect.max(norm2(&(after - before)));
        if (step + 1) % stride == 0 {
            let s = traj.sample_points[traj.states.len()];
            traj.range_distances.push(body_distance(&x));
            traj.states.push(mf.to_lab(s, &x));
        }
    }
    final_unitarity(&mut traj);
    Ok(traj)
}

/// Orthonormal basis of `Range P(0)` used as initial block for propagators
/// restricted to the tracked subspace.
pub fn tracked_basis(curve: &ProjectionCurve<'_>) -> Result<CMatrix> {
    Ok(curve.projector_at(0.0)?.basis().clone())
}

/// Lab-frame `[Ṗ, P]` at `s` for families with a moving frame, used to check
/// that the body-frame Kato generator is the lab one in disguise.
pub fn lab_kato_correction(mf: &dyn MovingFrame, s: f64) -> CMatrix {
    let (p, pdot, _) = frame::projection_derivatives(mf, s);
    &pdot * p.matrix() - p.matrix() * &pdot
}
