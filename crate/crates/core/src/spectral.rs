//! Spectral measures `μ_φ` of finite-dimensional Hamiltonians, their Gaussian
//! averages and Hölder-exponent estimates.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::MovingFrame;
use crate::operators::{CMatrix, CVector, SpectralDecomposition, DEGENERACY_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

/// Atomic measure with ascending, distinct positions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    atoms: Vec<Atom>,
}

impl SpectralMeasure {
    /// Sorts the atoms and merges positions closer than `merge_tol`.
    pub fn from_atoms(mut atoms: Vec<Atom>, merge_tol: f64) -> Result<Self> {
        for a in &atoms {
            if !a.position.is_finite() || !(a.weight >= 0.0 && a.weight.is_finite()) {
                return Err(Error::NonFinite { context: "spectral measure atom" });
            }
        }
        atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        // group start, so chains of close positions do not drift
        let mut start = f64::NEG_INFINITY;
        for a in atoms {
            match merged.last_mut() {
                Some(last) if a.position - start <= merge_tol => last.weight += a.weight,
                _ => {
                    start = a.position;
                    merged.push(a);
                }
            }
        }
        Ok(Self { atoms: merged })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `μ({x : |x − center| ≤ radius})`.
    pub fn mass_near(&self, center: f64, radius: f64) -> f64 {
        self.atoms.iter().filter(|a| (a.position - center).abs() <= radius).map(|a| a.weight).sum()
    }

    /// Median distance between neighbouring atoms.
    pub fn median_spacing(&self) -> Option<f64> {
        let mut gaps: Vec<f64> = self.atoms.windows(2).map(|w| w[1].position - w[0].position).collect();
        if gaps.is_empty() {
            return None;
        }
        gaps.sort_by(f64::total_cmp);
        Some(gaps[gaps.len() / 2])
    }

    /// Largest mass of a closed window `[x, x + width]`.
    pub fn max_window_mass(&self, width: f64) -> f64 {
        let mut best = 0.0_f64;
        let mut mass = 0.0;
        let mut end = 0;
        for start in 0..self.atoms.len() {
            while end < self.atoms.len() && self.atoms[end].position <= self.atoms[start].position + width {
                mass += self.atoms[end].weight;
                end += 1;
            }
            best = best.max(mass);
            mass -= self.atoms[start].weight;
        }
        best
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["position", "weight"])?;
        for a in &self.atoms {
            w.write_record([format!("{:.16e}", a.position), format!("{:.16e}", a.weight)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["position", "weight"])?;
        for a in &self.atoms {
            w.write_record([format!("{:.16e}", a.position), format!("{:.16e}", a.weight)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `μ_φ`: atoms at the eigenvalues of `H`, each eigenspace weighted by
/// `‖Π_λ φ‖²`.
pub fn spectral_measure(d: &SpectralDecomposition, phi: &CVector) -> Result<SpectralMeasure> {
    if phi.len() != d.dim() {
        return Err(Error::DimensionMismatch { left: format!("H dim {}", d.dim()), right: format!("phi len {}", phi.len()) });
    }
    if phi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite { context: "spectral measure state" });
    }
    let coeffs = d.eigenvectors().adjoint() * phi;
    let atoms = d
        .groups()
        .into_iter()
        .map(|g| {
            let position = d.eigenvalues()[g.clone()].iter().sum::<f64>() / g.len() as f64;
            let weight = g.map(|j| coeffs[j].norm_sqr()).sum();
            Atom { position, weight }
        })
        .collect();
    Ok(SpectralMeasure { atoms })
}

/// `μ_φ` for `H(s)` of a family with a moving frame, without diagonalizing.
pub fn spectral_measure_in_frame(mf: &dyn MovingFrame, s: f64, phi: &CVector) -> Result<SpectralMeasure> {
    let energies = mf.body_energies(s);
    if phi.len() != energies.len() {
        return Err(Error::DimensionMismatch {
            left: format!("frame dim {}", energies.len()),
            right: format!("phi len {}", phi.len()),
        });
    }
    let block = CMatrix::from_column_slice(phi.len(), 1, phi.as_slice());
    let coeffs = mf.to_body(s, &block);
    let scale = energies.iter().fold(1.0_f64, |a, e| a.max(e.abs()));
    let atoms = energies.iter().enumerate().map(|(j, &e)| Atom { position: e, weight: coeffs[(j, 0)].norm_sqr() }).collect();
    SpectralMeasure::from_atoms(atoms, DEGENERACY_TOL * scale)
}

/// Spectral measure of `Ṗψ` at `s`, where `ψ` is the first tracked basis
/// vector. This is the measure whose Gaussian average gives `‖Y_Δψ‖²`.
pub fn leakage_measure(mf: &dyn MovingFrame, s: f64) -> Result<SpectralMeasure> {
    let e = mf.body_basis().columns(0, 1).into_owned();
    let mut v = mf.apply_velocity(s, &e);
    for &i in mf.tracked_indices() {
        v[(i, 0)] = crate::operators::C64::ZERO;
    }
    let energies = mf.body_energies(s);
    let scale = energies.iter().fold(1.0_f64, |a, e| a.max(e.abs()));
    let atoms = energies.iter().enumerate().map(|(j, &e)| Atom { position: e, weight: v[(j, 0)].norm_sqr() }).collect();
    SpectralMeasure::from_atoms(atoms, DEGENERACY_TOL * scale)
}

/// `∫ g²(x/Δ) dμ = Σ w e^{−2π(λ/Δ)²}`, which equals `‖g(H/Δ)φ‖²`.
pub fn gaussian_average(measure: &SpectralMeasure, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", format!("must be positive, got {delta}")));
    }
    Ok(measure
        .atoms
        .iter()
        .map(|a| {
            let u = a.position / delta;
            a.weight * (-2.0 * std::f64::consts::PI * u * u).exp()
        })
        .sum())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Mass within distance `w` of the anchor energy.
    #[default]
    Anchored,
    /// Largest mass of any window of width `w`.
    Sliding,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderFit {
    pub alpha: f64,
    /// `C` in `μ(w) ≈ C w^α`.
    pub prefactor: f64,
    pub r_squared: f64,
    pub scales_used: Vec<f64>,
}

/// Minimal ratio of window scale to median atom spacing; below it every
/// discretized measure looks atomic.
const SPACING_FLOOR: f64 = 3.0;

/// Fits `α` in `μ(window of size w) ≈ C w^α` by least squares in log-log.
pub fn holder_exponent(
    measure: &SpectralMeasure,
    window_scales: &[f64],
    kind: WindowKind,
    anchor: f64,
) -> Result<HolderFit> {
    if window_scales.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("window_scales", "scales must be positive"));
    }
    let floor = measure.median_spacing().map_or(0.0, |h| SPACING_FLOOR * h);
    let mut points = Vec::new();
    let mut used = Vec::new();
    for &w in window_scales {
        if w < floor {
            continue;
        }
        let mass = match kind {
            WindowKind::Anchored => measure.mass_near(anchor, w),
            WindowKind::Sliding => measure.max_window_mass(w),
        };
        if mass > 0.0 {
            points.push((w.ln(), mass.ln()));
            used.push(w);
        }
    }
    if points.len() < 3 {
        return Err(Error::DegenerateFit {
            reason: format!("{} usable window scales, need at least 3", points.len()),
        });
    }
    let fit = crate::rates::least_squares(&points)?;
    Ok(HolderFit { alpha: fit.slope, prefactor: fit.intercept.exp(), r_squared: fit.r_squared, scales_used: used })
}

/// Log-spaced window scales from `lo` to `hi`.
pub fn log_scales(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1).max(1) as f64).exp()).collect()
}

/// `n` atoms on `(0, 1]` at `k_j = j/n` carrying the exact masses of
/// `μ([0, k]) = k^α`, so that the planted Hölder exponent at 0 is `α`.
pub fn planted_measure(n: usize, alpha: f64) -> Result<SpectralMeasure> {
    if n == 0 || !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid("alpha", "need n > 0 and alpha > 0"));
    }
    let atoms = (1..=n)
        .map(|j| {
            let (lo, hi) = ((j - 1) as f64 / n as f64, j as f64 / n as f64);
            Atom { position: hi, weight: hi.powf(alpha) - lo.powf(alpha) }
        })
        .collect();
    SpectralMeasure::from_atoms(atoms, 0.0)
}
