use serde::{Deserialize, Serialize};

use super::{frame, smoothstep, smoothstep_d1, smoothstep_d2, FamilyMetadata, HamiltonianFamily, MovingFrame, RateClass};
use crate::error::{Error, Result};
use crate::operators::{c64, CMatrix, HermitianOperator, SpectralDecomposition, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FriedrichsParams {
    pub n_levels: usize,
    pub alpha: f64,
    pub coupling_scale: f64,
}

impl Default for FriedrichsParams {
    fn default() -> Self {
        Self { n_levels: 1024, alpha: 0.5, coupling_scale: 1.0 }
    }
}

/// A bound level at the threshold of a discretized continuum.
///
/// `H₀ = 0 ⊕ diag(k_j)` with `k_j = j/n`, and `H(s) = e^{φ(s)G} H₀ e^{−φ(s)G}`
/// where `G = |c⟩⟨e₀| − |e₀⟩⟨c|`, `c_j = scale · k_j^{α − 1/2} / √n` and
/// `φ = smoothstep`. Since `G` has rank two, `e^{φG}` is a plane rotation by
/// the angle `φ|c|` in `span{e₀, c}` and every operation is O(n).
#[derive(Clone, Debug)]
pub struct Friedrichs {
    params: FriedrichsParams,
    energies: Vec<f64>,
    coupling: Vec<f64>,
    coupling_norm: f64,
}

const TRACKED: [usize; 1] = [0];

impl Friedrichs {
    pub fn new(params: FriedrichsParams) -> Result<Self> {
        let n = params.n_levels;
        if n < 2 {
            return Err(Error::invalid("n_levels", format!("at least 2 levels required, got {n}")));
        }
        if !(params.alpha > 0.0 && params.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be positive, got {}", params.alpha)));
        }
        if !params.coupling_scale.is_finite() {
            return Err(Error::invalid("coupling_scale", "must be finite"));
        }
        let weight = 1.0 / n as f64;
        let energies: Vec<f64> = std::iter::once(0.0).chain((1..=n).map(|j| j as f64 * weight)).collect();
        let coupling: Vec<f64> = energies[1..]
            .iter()
            .map(|&k| params.coupling_scale * k.powf(params.alpha - 0.5) * weight.sqrt())
            .collect();
        let coupling_norm = coupling.iter().map(|c| c * c).sum::<f64>().sqrt();
        let f = Self { params, energies, coupling, coupling_norm };
        let concentration = f.threshold_concentration();
        if f.params.alpha <= 0.5 && concentration > 0.5 {
            log::warn!(
                "friedrichs: coupling concentrated at the threshold (|f(k1)|^2/n = {concentration:.3}); \
                 increase n_levels"
            );
        }
        Ok(f)
    }

    pub fn params(&self) -> &FriedrichsParams {
        &self.params
    }

    /// Continuum energies `k_j`, without the bound level.
    pub fn continuum(&self) -> &[f64] {
        &self.energies[1..]
    }

    /// Coupling vector `c` over the continuum.
    pub fn coupling(&self) -> &[f64] {
        &self.coupling
    }

    /// `|f(k₁)|²/n`, the share of the form factor carried by the lowest level.
    pub fn threshold_concentration(&self) -> f64 {
        let k1 = self.energies[1];
        k1.powf(2.0 * self.params.alpha - 1.0) / self.params.n_levels as f64
    }

    /// Riemann sum `Σ_{k_j ≤ energy} |f(k_j)|²/n`, which approximates
    /// `energy^{2α}/(2α)`.
    pub fn form_factor_mass(&self, energy: f64) -> f64 {
        let n = self.params.n_levels as f64;
        self.continuum()
            .iter()
            .take_while(|&&k| k <= energy)
            .map(|&k| k.powf(2.0 * self.params.alpha - 1.0) / n)
            .sum()
    }

    /// `G·block`.
    fn apply_generator(&self, block: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(block.nrows(), block.ncols());
        for (col, mut dst) in block.column_iter().zip(out.column_iter_mut()) {
            let x0 = col[0];
            let mut overlap = C64::ZERO;
            for (j, &c) in self.coupling.iter().enumerate() {
                overlap += col[j + 1] * c;
                dst[j + 1] = x0 * c;
            }
            dst[0] = -overlap;
        }
        out
    }

    /// `e^{φG}·block`.
    fn rotate(&self, phi: f64, block: &CMatrix) -> CMatrix {
        let mut out = block.clone();
        if self.coupling_norm == 0.0 {
            return out;
        }
        let (sin, cos) = (phi * self.coupling_norm).sin_cos();
        let inv = 1.0 / self.coupling_norm;
        for mut col in out.column_iter_mut() {
            let x0 = col[0];
            let mut xc = C64::ZERO;
            for (j, &c) in self.coupling.iter().enumerate() {
                xc += col[j + 1] * (c * inv);
            }
            // rotation in the plane spanned by e₀ and ĉ
            let new0 = x0 * cos - xc * sin;
            let newc = x0 * sin + xc * cos;
            let shift = newc - xc;
            col[0] = new0;
            for (j, &c) in self.coupling.iter().enumerate() {
                col[j + 1] += shift * (c * inv);
            }
        }
        out
    }
}

impl MovingFrame for Friedrichs {
    fn dim(&self) -> usize {
        self.energies.len()
    }

    fn body_energies(&self, _s: f64) -> Vec<f64> {
        self.energies.clone()
    }

    fn body_energy_rates(&self, _s: f64) -> Vec<f64> {
        vec![0.0; self.energies.len()]
    }

    fn tracked_indices(&self) -> &[usize] {
        &TRACKED
    }

    fn apply_velocity(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.apply_generator(block) * c64(smoothstep_d1(s), 0.0)
    }

    fn velocity_norm(&self, s: f64) -> f64 {
        smoothstep_d1(s).abs() * self.coupling_norm
    }

    fn apply_velocity_rate(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.apply_generator(block) * c64(smoothstep_d2(s), 0.0)
    }

    fn to_lab(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.rotate(smoothstep(s), block)
    }

    fn to_body(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.rotate(-smoothstep(s), block)
    }
}

impl HamiltonianFamily for Friedrichs {
    fn dim(&self) -> usize {
        self.energies.len()
    }

    fn hamiltonian_at(&self, s: f64) -> HermitianOperator {
        frame::hamiltonian(self, s)
    }

    fn derivative_at(&self, s: f64) -> HermitianOperator {
        frame::derivative(self, s)
    }

    fn tracked_rank(&self) -> usize {
        1
    }

    fn metadata(&self) -> FamilyMetadata {
        FamilyMetadata {
            model: "friedrichs".into(),
            parameters: serde_json::to_value(&self.params).expect("serializable"),
            gap_present: false,
            unitary_family: true,
            rate_class: RateClass::Friedrichs { alpha: self.params.alpha },
        }
    }

    fn decompose_at(&self, s: f64) -> Result<SpectralDecomposition> {
        frame::decomposition(self, s)
    }

    fn moving_frame(&self) -> Option<&dyn MovingFrame> {
        Some(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::norm2;

    #[test]
    fn riemann_mass_matches_integral() {
        let f = Friedrichs::new(FriedrichsParams { n_levels: 1000, alpha: 2.0, coupling_scale: 1.0 }).unwrap();
        let mass = f.form_factor_mass(0.5);
        assert!((mass / 0.015625 - 1.0).abs() < 0.02, "{mass}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Friedrichs::new(FriedrichsParams { alpha: 0.0, ..Default::default() }).is_err());
        assert!(Friedrichs::new(FriedrichsParams { n_levels: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn zero_coupling_is_constant() {
        let f = Friedrichs::new(FriedrichsParams { n_levels: 8, alpha: 1.0, coupling_scale: 0.0 }).unwrap();
        assert_eq!(f.hamiltonian_at(0.0), f.hamiltonian_at(0.7));
        assert!(f.derivative_at(0.5).norm() == 0.0);
    }

    #[test]
    fn rotation_is_the_exponential() {
        let f = Friedrichs::new(FriedrichsParams { n_levels: 12, alpha: 0.75, coupling_scale: 1.3 }).unwrap();
        let n = 13;
        let g = f.apply_generator(&CMatrix::identity(n, n));
        assert!(norm2(&(&g + g.adjoint())) == 0.0);
        let phi = 0.8;
        // Taylor series of e^{φG}
        let mut term = CMatrix::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &g * c64(phi / k as f64, 0.0);
            sum += &term;
        }
        let v = f.rotate(phi, &CMatrix::identity(n, n));
        assert!(norm2(&(v - sum)) < 1e-13);
        let back = f.rotate(-phi, &f.rotate(phi, &CMatrix::identity(n, n)));
        assert!(norm2(&(back - CMatrix::identity(n, n))) < 1e-14);
    }
}
