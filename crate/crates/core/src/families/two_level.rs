use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{
    frame, rotation, rotation_generator, smoothstep, smoothstep_d1, FamilyMetadata, HamiltonianFamily, MovingFrame,
    Ramp, RateClass,
};
use crate::error::{Error, Result};
use crate::operators::{c64, CMatrix, HermitianOperator, SpectralDecomposition};

/// Real rotation frame `V(s) = R(θ(s))` shared by the two-level models.
#[derive(Clone, Copy, Debug)]
struct RotatingFrame {
    angle: Ramp,
}

impl RotatingFrame {
    fn velocity(&self, s: f64, block: &CMatrix) -> CMatrix {
        rotation_generator() * block * c64(self.angle.d1(s), 0.0)
    }

    fn velocity_rate(&self, s: f64, block: &CMatrix) -> CMatrix {
        rotation_generator() * block * c64(self.angle.d2(s), 0.0)
    }

    fn to_lab(self, s: f64, block: &CMatrix) -> CMatrix {
        rotation(self.angle.value(s)) * block
    }

    fn to_body(self, s: f64, block: &CMatrix) -> CMatrix {
        rotation(-self.angle.value(s)) * block
    }
}

const TRACKED: [usize; 1] = [0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GappedTwoLevelParams {
    pub gap: f64,
    /// Total mixing angle; `θ(s) = angle · smoothstep(s)`.
    pub angle: f64,
}

impl Default for GappedTwoLevelParams {
    fn default() -> Self {
        Self { gap: 1.0, angle: FRAC_PI_2 }
    }
}

/// `H(s) = gap · R(θ) |1⟩⟨1| R(θ)†`: eigenvalues `{0, gap}` for all `s`,
/// eigenvectors rotating by `θ(s)`.
#[derive(Clone, Debug)]
pub struct GappedTwoLevel {
    params: GappedTwoLevelParams,
    frame: RotatingFrame,
}

impl GappedTwoLevel {
    pub fn new(params: GappedTwoLevelParams) -> Result<Self> {
        if !(params.gap > 0.0 && params.gap.is_finite()) {
            return Err(Error::invalid("gap", format!("must be positive, got {}", params.gap)));
        }
        if !params.angle.is_finite() {
            return Err(Error::invalid("angle", "must be finite"));
        }
        Ok(Self { frame: RotatingFrame { angle: Ramp::new(0.0, params.angle) }, params })
    }
}

impl MovingFrame for GappedTwoLevel {
    fn dim(&self) -> usize {
        2
    }

    fn body_energies(&self, _s: f64) -> Vec<f64> {
        vec![0.0, self.params.gap]
    }

    fn body_energy_rates(&self, _s: f64) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn tracked_indices(&self) -> &[usize] {
        &TRACKED
    }

    fn apply_velocity(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame.velocity(s, block)
    }

    fn velocity_norm(&self, s: f64) -> f64 {
        self.frame.angle.d1(s).abs()
    }

    fn apply_velocity_rate(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame.velocity_rate(s, block)
    }

    fn to_lab(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame.to_lab(s, block)
    }

    fn to_body(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame.to_body(s, block)
    }
}

impl HamiltonianFamily for GappedTwoLevel {
    fn dim(&self) -> usize {
        2
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
            model: "gapped-two-level".into(),
            parameters: serde_json::to_value(&self.params).expect("serializable"),
            gap_present: true,
            unitary_family: true,
            rate_class: RateClass::Gapped,
        }
    }

    fn decompose_at(&self, s: f64) -> Result<SpectralDecomposition> {
        frame::decomposition(self, s)
    }

    fn moving_frame(&self) -> Option<&dyn MovingFrame> {
        Some(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossingParams {
    /// Order `m` of the eigenvalue crossing at `s = 1/2`.
    pub order: u32,
    pub energy_scale: f64,
    pub angle: f64,
}

impl Default for CrossingParams {
    fn default() -> Self {
        Self { order: 1, energy_scale: 1.0, angle: 0.3 }
    }
}

/// `H(s) = R(θ) diag(0, −2e(s)) R(θ)†` with `e(s) = E·(smoothstep(s) − 1/2)^m`,
/// which vanishes like `(s − 1/2)^m` at the crossing. The tracked projection
/// `R(θ)|0⟩⟨0|R(θ)†` is smooth through the crossing.
#[derive(Clone, Debug)]
pub struct Crossing {
    params: CrossingParams,
    frame: RotatingFrame,
}

impl Crossing {
    pub fn new(params: CrossingParams) -> Result<Self> {
        if params.order == 0 {
            return Err(Error::invalid("order", "crossing order must be at least 1"));
        }
        if !(params.energy_scale > 0.0 && params.energy_scale.is_finite()) {
            return Err(Error::invalid("energy_scale", "must be positive"));
        }
        if !params.angle.is_finite() {
            return Err(Error::invalid("angle", "must be finite"));
        }
        Ok(Self { frame: RotatingFrame { angle: Ramp::new(0.0, params.angle) }, params })
    }

    /// Half the eigenvalue splitting, signed.
    pub fn half_splitting(&self, s: f64) -> f64 {
        self.params.energy_scale * (smoothstep(s) - 0.5).powi(self.params.order as i32)
    }

    fn half_splitting_rate(&self, s: f64) -> f64 {
        let m = self.params.order as i32;
        self.params.energy_scale * m as f64 * (smoothstep(s) - 0.5).powi(m - 1) * smoothstep_d1(s)
    }
}

impl MovingFrame for Crossing {
    fn dim(&self) -> usize {
        2
    }

    fn body_energies(&self, s: f64) -> Vec<f64> {
        vec![0.0, -2.0 * self.half_splitting(s)]
    }

    fn body_energy_rates(&self, s: f64) -> Vec<f64> {
        vec![0.0, -2.0 * self.half_splitting_rate(s)]
    }

    fn tracked_indices(&self) -> &[usize] {
        &TRACKED
    }

    fn apply_velocity(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame.velocity(s, block)
    }

    fn velocity_norm(&self, s: f64) -> f64 {
        self.frame.angle.d1(s).abs()
    }

    fn apply_velocity_rate(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame.velocity_rate(s, block)
    }

    fn to_lab(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame.to_lab(s, block)
    }

    fn to_body(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame.to_body(s, block)
    }
}

impl HamiltonianFamily for Crossing {
    fn dim(&self) -> usize {
        2
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
            model: "crossing".into(),
            parameters: serde_json::to_value(&self.params).expect("serializable"),
            gap_present: false,
            unitary_family: false,
            rate_class: RateClass::Crossing { order: self.params.order },
        }
    }

    /// The eigenvalues touch at `s = 1/2` for every order; for odd orders they
    /// also swap.
    fn crossing_points(&self) -> Vec<f64> {
        vec![0.5]
    }

    fn decompose_at(&self, s: f64) -> Result<SpectralDecomposition> {
        frame::decomposition(self, s)
    }

    fn moving_frame(&self) -> Option<&dyn MovingFrame> {
        Some(self)
    }
}
