//! Solutions of the commutator equation `[Ṗ, P] = [H, X] + Y` and the error
//! bounds they certify.
//!
//! With a gap the equation is solved exactly by `X = PṖR̄ + R̄ṖP`, `Y = 0`,
//! where `R̄` is the reduced resolvent. Without one, the Gaussian
//! `g(x) = e^{−πx²}` regularizes the resolvent at scale `Δ`:
//! `X_Δ = A + A†` with `A = PṖ h_Δ(H)`, `h_Δ(x) = (1 − g(x/Δ))/x`, and
//! `Y_Δ = g(H/Δ)ṖP − PṖg(H/Δ)`.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::{MovingFrame, ProjectionCurve};
use crate::operators::{c64, norm2, operator_norm, random, CMatrix, HermitianOperator, Projector, SpectralDecomposition};

/// Minimal distance from the tracked eigenvalue to the rest of the spectrum
/// accepted by [`solve_gap`].
pub const GAP_THRESHOLD: f64 = 1e-7;
/// Relative residual accepted for either solver.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// How far the tracked eigenvalue may sit from zero, relative to `max(1, ‖H‖)`.
const KERNEL_TOL: f64 = 1e-8;
/// Eigenvectors with at least this weight in `Range P` are part of the kernel.
const KERNEL_OVERLAP: f64 = 0.5;
/// Largest relative Richardson disagreement of `d(XP)/ds` accepted by
/// [`bound_profile`].
const RICHARDSON_TOL: f64 = 0.2;

pub fn gaussian(x: f64) -> f64 {
    (-std::f64::consts::PI * x * x).exp()
}

/// `e(ω) = ∫_{−∞}^ω g`.
pub fn gaussian_integral(omega: f64) -> f64 {
    0.5 * libm::erfc(-std::f64::consts::PI.sqrt() * omega)
}

/// `(1 − g(x/Δ))/x`, continued by 0 at `x = 0`. Written with `expm1` so the
/// cancellation for `|x| ≪ Δ` is harmless.
pub fn regularized_inverse(x: f64, delta: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let u = x / delta;
    -(-std::f64::consts::PI * u * u).exp_m1() / x
}

#[derive(Clone, Debug)]
pub struct CommutatorSolution {
    pub x: CMatrix,
    pub y: CMatrix,
    /// `A = PṖh_Δ(H)`, with `X = A + A†`; absent for the gap solution.
    pub row_part: Option<CMatrix>,
    /// Regularization scale; absent for the gap solution.
    pub delta: Option<f64>,
    /// `‖[Ṗ, P] − [H, X] − Y‖`.
    pub residual: f64,
    /// `RESIDUAL_TOL · max(1, ‖H‖‖X‖)`.
    pub residual_tolerance: f64,
    pub xp_norm: f64,
    /// `‖d(XP)/ds · P‖`, filled in only where neighbouring points are known.
    pub xp_rate_norm: Option<f64>,
    pub yp_norm: f64,
}

impl CommutatorSolution {
    pub fn residual_ok(&self) -> bool {
        self.residual <= self.residual_tolerance
    }
}

/// Indices of eigenvectors lying in `Range P`, checked to sit at eigenvalue 0.
fn kernel_indices(d: &SpectralDecomposition, p: &Projector) -> Result<Vec<usize>> {
    let weights = p.basis().adjoint() * d.eigenvectors();
    let kernel: Vec<usize> = (0..d.dim())
        .filter(|&j| weights.column(j).norm_squared() > KERNEL_OVERLAP)
        .collect();
    if kernel.len() != p.rank() {
        return Err(Error::NotProjector {
            reason: format!("projector of rank {} is not spanned by {} eigenvectors", p.rank(), kernel.len()),
        });
    }
    for &j in &kernel {
        let lambda = d.eigenvalues()[j];
        if lambda.abs() > KERNEL_TOL * d.scale() {
            return Err(Error::TrackedEigenvalueNotZero { eigenvalue: lambda });
        }
    }
    Ok(kernel)
}

fn check_shapes(d: &SpectralDecomposition, p: &Projector, pdot: &CMatrix) -> Result<()> {
    let n = d.dim();
    if p.dim() != n || pdot.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            left: format!("H {n}x{n}, P {}x{}", p.dim(), p.dim()),
            right: format!("Pdot {:?}", pdot.shape()),
        });
    }
    Ok(())
}

fn finish(
    d: &SpectralDecomposition,
    p: &Projector,
    pdot: &CMatrix,
    x: CMatrix,
    y: CMatrix,
    row_part: Option<CMatrix>,
    delta: Option<f64>,
) -> Result<CommutatorSolution> {
    let h = d.reconstruct();
    let pm = p.matrix();
    let lhs = pdot * pm - pm * pdot;
    let rhs = &h * &x - &x * &h + &y;
    let residual = norm2(&(lhs - rhs));
    let residual_tolerance = RESIDUAL_TOL * (d.scale() * operator_norm(&x)?).max(1.0);
    let q = p.basis();
    Ok(CommutatorSolution {
        xp_norm: norm2(&(&x * q)),
        yp_norm: norm2(&(&y * q)),
        x,
        y,
        row_part,
        delta,
        residual,
        residual_tolerance,
        xp_rate_norm: None,
    })
}

/// Exact solution when the tracked eigenvalue 0 is isolated.
pub fn solve_gap(d: &SpectralDecomposition, p: &Projector, pdot: &CMatrix) -> Result<CommutatorSolution> {
    check_shapes(d, p, pdot)?;
    let kernel = kernel_indices(d, p)?;
    let gap = (0..d.dim())
        .filter(|j| !kernel.contains(j))
        .map(|j| d.eigenvalues()[j].abs())
        .fold(f64::INFINITY, f64::min);
    if gap < GAP_THRESHOLD {
        return Err(Error::GapTooSmall { gap, threshold: GAP_THRESHOLD });
    }
    let resolvent = crate::operators::reduced_resolvent(d, &kernel)?.into_matrix();
    let pm = p.matrix();
    let x = pm * pdot * &resolvent + &resolvent * pdot * pm;
    let n = d.dim();
    finish(d, p, pdot, x, CMatrix::zeros(n, n), None, None)
}

/// Gaussian-regularized solution at scale `delta`.
pub fn solve_regularized(
    d: &SpectralDecomposition,
    p: &Projector,
    pdot: &CMatrix,
    delta: f64,
) -> Result<CommutatorSolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    check_shapes(d, p, pdot)?;
    kernel_indices(d, p)?;
    let pm = p.matrix();
    let g = d.function_matrix(|x| gaussian(x / delta));
    // g(0) = 1, so g(H/Δ) acts as the identity on Range P
    let leak = norm2(&(&g * p.basis() - p.basis()));
    if leak > KERNEL_TOL {
        return Err(Error::NotProjector { reason: format!("g(H/delta)P differs from P by {leak:.3e}") });
    }
    let inverse = d.function_matrix(|x| regularized_inverse(x, delta));
    let a = pm * pdot * inverse;
    let x = &a + a.adjoint();
    let y = &g * pdot * pm - pm * pdot * &g;
    finish(d, p, pdot, x, y, Some(a), Some(delta))
}

/// `‖XP‖`, `‖YP‖` and `‖ṖP‖` of the regularized solution, from a moving
/// frame in O(n·rank).
///
/// In the body frame `ṖP` becomes `(1 − P₀)BQ₀`, so
/// `X_ΔP ↦ h_Δ(D)(1 − P₀)BQ₀` and `Y_ΔP ↦ g(D/Δ)(1 − P₀)BQ₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProjectedNorms {
    pub xp: f64,
    pub yp: f64,
    pub pdot_p: f64,
}

fn off_block(mf: &dyn MovingFrame, s: f64) -> CMatrix {
    let mut v = mf.apply_velocity(s, &mf.body_basis());
    for &i in mf.tracked_indices() {
        v.row_mut(i).fill(crate::operators::C64::ZERO);
    }
    v
}

fn scale_rows(values: impl Fn(usize) -> f64, mut m: CMatrix) -> CMatrix {
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= c64(values(i), 0.0);
    }
    m
}

pub fn projected_norms(mf: &dyn MovingFrame, s: f64, delta: f64) -> Result<ProjectedNorms> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    let energies = mf.body_energies(s);
    let off = off_block(mf, s);
    let xp = scale_rows(|i| regularized_inverse(energies[i], delta), off.clone());
    let yp = scale_rows(|i| gaussian(energies[i] / delta), off.clone());
    Ok(ProjectedNorms { xp: norm2(&xp), yp: norm2(&yp), pdot_p: norm2(&off) })
}

/// Right-hand sides of the two regularized-solution estimates at one point,
/// with the measured `‖X_ΔP‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegularizedBounds {
    pub s: f64,
    pub delta: f64,
    /// `2‖ṖP‖/Δ`.
    pub x_bound: f64,
    /// `2(‖P̈‖ + ‖Ṗ²‖)/Δ + π‖Ṗ‖‖Ḣ‖/Δ²`.
    pub xdot_bound: f64,
    pub measured_xp: f64,
}

impl RegularizedBounds {
    pub fn holds(&self) -> bool {
        self.measured_xp <= self.x_bound
    }
}

pub fn x_bound(pdot: &CMatrix, p: &Projector, delta: f64) -> f64 {
    2.0 * norm2(&(pdot * p.basis())) / delta
}

pub fn xdot_bound(pdot: &CMatrix, pddot: &CMatrix, hdot: &CMatrix, delta: f64) -> Result<f64> {
    let pdot_norm = operator_norm(pdot)?;
    Ok(2.0 * (operator_norm(pddot)? + operator_norm(&(pdot * pdot))?) / delta
        + std::f64::consts::PI * pdot_norm * operator_norm(hdot)? / (delta * delta))
}

pub fn regularized_bounds(curve: &ProjectionCurve<'_>, delta: f64, s: f64) -> Result<RegularizedBounds> {
    let family = curve.family();
    let frame = curve.frame_at(s)?;
    let d = family.decompose_at(s)?;
    let solution = solve_regularized(&d, &frame.projector, &frame.pdot, delta)?;
    let hdot = family.derivative_at(s).into_matrix();
    Ok(RegularizedBounds {
        s,
        delta,
        x_bound: x_bound(&frame.pdot, &frame.projector, delta),
        xdot_bound: xdot_bound(&frame.pdot, &frame.pddot, &hdot, delta)?,
        measured_xp: solution.xp_norm,
    })
}

/// `X_Δ(s)P(s)`, stored densely or as `W Q†` with `Q = V(s)Q₀` a smooth
/// basis of `Range P(s)`.
enum ProjectedSolution {
    Dense { xp: CMatrix, p: Projector },
    Thin { w: CMatrix, q: CMatrix },
}

fn projected_solution(curve: &ProjectionCurve<'_>, delta: f64, s: f64) -> Result<(ProjectedSolution, f64)> {
    let family = curve.family();
    if let Some(mf) = family.moving_frame() {
        let energies = mf.body_energies(s);
        let off = off_block(mf, s);
        let yp = norm2(&scale_rows(|i| gaussian(energies[i] / delta), off.clone()));
        let w = mf.to_lab(s, &scale_rows(|i| regularized_inverse(energies[i], delta), off));
        let q = mf.to_lab(s, &mf.body_basis());
        return Ok((ProjectedSolution::Thin { w, q }, yp));
    }
    let frame = curve.frame_at(s)?;
    let d = family.decompose_at(s)?;
    let sol = solve_regularized(&d, &frame.projector, &frame.pdot, delta)?;
    let xp = &sol.x * frame.projector.matrix();
    Ok((ProjectedSolution::Dense { xp, p: frame.projector }, sol.yp_norm))
}

impl ProjectedSolution {
    fn norm(&self) -> f64 {
        match self {
            Self::Dense { xp, .. } => norm2(xp),
            Self::Thin { w, .. } => norm2(w),
        }
    }

    /// `‖(Σ cₖ Sₖ)P‖` for the difference stencil `Σ cₖ Sₖ` around `self`.
    fn rate_norm(&self, stencil: &[(f64, &ProjectedSolution)]) -> f64 {
        match self {
            Self::Dense { p, .. } => {
                let mut acc = CMatrix::zeros(p.dim(), p.dim());
                for (c, sample) in stencil {
                    if let Self::Dense { xp, .. } = sample {
                        acc += xp * c64(*c, 0.0);
                    }
                }
                norm2(&(acc * p.basis()))
            }
            Self::Thin { w, q } => {
                // d(WQ†)/ds · QQ† = (W' + W Q'†Q) Q†
                let mut w_rate = CMatrix::zeros(w.nrows(), w.ncols());
                let mut q_rate = CMatrix::zeros(q.nrows(), q.ncols());
                for (c, sample) in stencil {
                    if let Self::Thin { w, q } = sample {
                        w_rate += w * c64(*c, 0.0);
                        q_rate += q * c64(*c, 0.0);
                    }
                }
                norm2(&(w_rate + w * (q_rate.adjoint() * q)))
            }
        }
    }
}

/// Grid profile of the ingredients of the adiabatic error bound at fixed `Δ`.
#[derive(Clone, Debug, Serialize)]
pub struct BoundProfile {
    pub delta: f64,
    pub grid: Vec<f64>,
    pub xp: Vec<f64>,
    pub xp_rate: Vec<f64>,
    pub yp: Vec<f64>,
    /// Largest `|d_h − d_{2h}| / max d_h` of the two derivative estimates.
    pub richardson_disagreement: f64,
}

impl BoundProfile {
    /// `(2‖XP‖ + ‖(XP)'P‖)/τ + ‖YP‖` at every grid point.
    pub fn pointwise(&self, tau: f64) -> Vec<f64> {
        (0..self.grid.len()).map(|k| (2.0 * self.xp[k] + self.xp_rate[k]) / tau + self.yp[k]).collect()
    }

    pub fn value(&self, tau: f64) -> f64 {
        self.pointwise(tau).into_iter().fold(0.0, f64::max)
    }
}

/// Derivative stencil with spacing `k` grid cells at index `i` of a uniform
/// grid: central inside, second-order one-sided at the ends.
fn stencil(i: usize, k: usize, len: usize, h: f64) -> Vec<(f64, usize)> {
    let step = k as f64 * h;
    if i >= k && i + k < len {
        vec![(-0.5 / step, i - k), (0.5 / step, i + k)]
    } else if i < k {
        vec![(-1.5 / step, i), (2.0 / step, i + k), (-0.5 / step, i + 2 * k)]
    } else {
        vec![(1.5 / step, i), (-2.0 / step, i - k), (0.5 / step, i - 2 * k)]
    }
}

pub fn bound_profile(curve: &ProjectionCurve<'_>, delta: f64, grid: &[f64]) -> Result<BoundProfile> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    let len = grid.len();
    if len < 5 {
        return Err(Error::invalid("grid", "at least five points required for derivative estimates"));
    }
    let h = grid[1] - grid[0];
    if grid.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
        return Err(Error::invalid("grid", "must be uniform"));
    }
    let mut samples = Vec::with_capacity(len);
    let mut yp = Vec::with_capacity(len);
    for &s in grid {
        let (sol, y) = projected_solution(curve, delta, s)?;
        samples.push(sol);
        yp.push(y);
    }
    let estimate = |i: usize, k: usize| {
        let st: Vec<(f64, &ProjectedSolution)> = stencil(i, k, len, h).into_iter().map(|(c, j)| (c, &samples[j])).collect();
        samples[i].rate_norm(&st)
    };
    let fine: Vec<f64> = (0..len).map(|i| estimate(i, 1)).collect();
    let coarse: Vec<f64> = (0..len).map(|i| estimate(i, 2)).collect();
    let scale = fine.iter().copied().fold(0.0, f64::max);
    let mut disagreement = 0.0_f64;
    let mut worst = 0;
    if scale > 0.0 {
        for i in 0..len {
            let r = (fine[i] - coarse[i]).abs() / scale;
            if r > disagreement {
                disagreement = r;
                worst = i;
            }
        }
    }
    if disagreement > RICHARDSON_TOL {
        return Err(Error::GridTooCoarse { s: grid[worst], disagreement });
    }
    Ok(BoundProfile {
        delta,
        grid: grid.to_vec(),
        xp: samples.iter().map(ProjectedSolution::norm).collect(),
        xp_rate: fine,
        yp,
        richardson_disagreement: disagreement,
    })
}

/// `max_s (2‖XP‖ + ‖(XP)'P‖)/τ + ‖YP‖` over `grid`, which bounds
/// `‖(U_τ(s) − U_A(s))P(0)‖`.
pub fn adiabatic_bound(curve: &ProjectionCurve<'_>, delta: f64, tau: f64, grid: &[f64]) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau", format!("must be positive, got {tau}")));
    }
    Ok(bound_profile(curve, delta, grid)?.value(tau))
}

/// Default regularization schedule `Δ(τ) = τ^{−1/3}`.
pub fn default_delta(tau: f64) -> f64 {
    tau.powf(-1.0 / 3.0)
}

/// `Φ(ω) = θ(ω) − e(ω)`, optionally rescaled as `Φ_Δ(ω) = Φ(Δω)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiFunction {
    pub scale: f64,
}

impl Default for PhiFunction {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl PhiFunction {
    pub fn eval(&self, omega: f64) -> f64 {
        let w = self.scale * omega;
        // θ(w) − e(w), written via erfc on each side to avoid cancellation
        if w >= 0.0 {
            0.5 * libm::erfc(std::f64::consts::PI.sqrt() * w)
        } else {
            -gaussian_integral(w)
        }
    }

    /// `(‖Φ_Δ‖₁, ‖ωΦ_Δ‖₁)` by adaptive Simpson quadrature on `[−8/Δ, 8/Δ]`,
    /// split at the jump at 0.
    pub fn norms(&self, quadrature_points: usize) -> Result<(f64, f64)> {
        if quadrature_points < 1000 {
            return Err(Error::invalid("quadrature_points", "at least 1000 required"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("scale", "must be positive"));
        }
        let half = quadrature_points / 2;
        let reach = 8.0 / self.scale;
        let abs_phi = |w: f64| self.eval(w).abs();
        let abs_moment = |w: f64| (w * self.eval(w)).abs();
        let l1 = integrate(&abs_phi, -reach, 0.0, half) + integrate(&abs_phi, 0.0, reach, half);
        let moment = integrate(&abs_moment, -reach, 0.0, half) + integrate(&abs_moment, 0.0, reach, half);
        Ok((l1, moment))
    }
}

/// Norms of the unscaled `Φ`.
pub fn phi_norms(quadrature_points: usize) -> Result<(f64, f64)> {
    PhiFunction::default().norms(quadrature_points)
}

fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let width = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * width, a + (k + 1) as f64 * width);
            let mid = 0.5 * (lo + hi);
            let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
            adaptive_simpson(f, lo, hi, flo, fmid, fhi, simpson(lo, hi, flo, fmid, fhi), 1e-15, 30)
        })
        .sum()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// A random Hermitian `H` with a `rank`-dimensional kernel, its kernel
/// projector and an admissible `Ṗ` (Hermitian, off-diagonal with respect to
/// `P`).
#[derive(Clone, Debug)]
pub struct RandomInstance {
    pub hamiltonian: HermitianOperator,
    pub projector: Projector,
    pub pdot: CMatrix,
}

impl RandomInstance {
    /// Nonzero eigenvalues are drawn from `±[spectral_floor, 3]`.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize, spectral_floor: f64) -> Result<Self> {
        if rank == 0 || rank >= dim {
            return Err(Error::invalid("rank", format!("need 0 < rank < dim, got {rank} for dim {dim}")));
        }
        if !(spectral_floor > 0.0 && spectral_floor < 3.0) {
            return Err(Error::invalid("spectral_floor", "must lie in (0, 3)"));
        }
        let magnitude = Uniform::new(spectral_floor, 3.0).expect("valid range");
        let mut eigenvalues = vec![0.0; rank];
        for _ in rank..dim {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            eigenvalues.push(sign * magnitude.sample(rng));
        }
        let v = random::unitary(rng, dim);
        let scaled = CMatrix::from_fn(dim, dim, |r, c| v[(r, c)] * eigenvalues[c]);
        let hamiltonian = HermitianOperator::from_hermitian_part(scaled * v.adjoint());
        let projector = Projector::from_basis(v.columns(0, rank).into_owned())?;
        let k = random::hermitian(rng, dim).into_matrix();
        let pm = projector.matrix();
        let q = CMatrix::identity(dim, dim) - pm;
        let pdot = &q * &k * pm + pm * &k * &q;
        Ok(Self { hamiltonian, projector, pdot })
    }
}
