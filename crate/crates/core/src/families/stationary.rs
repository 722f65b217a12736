use serde::{Deserialize, Serialize};

use super::{frame, FamilyMetadata, HamiltonianFamily, MovingFrame, RateClass};
use crate::error::{Error, Result};
use crate::operators::{CMatrix, HermitianOperator, SpectralDecomposition};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryParams {
    pub levels: Vec<f64>,
    pub tracked_index: usize,
}

impl Default for StationaryParams {
    fn default() -> Self {
        Self { levels: vec![0.0, 1.0], tracked_index: 0 }
    }
}

/// Constant diagonal Hamiltonian; `Ṗ ≡ 0`.
#[derive(Clone, Debug)]
pub struct Stationary {
    params: StationaryParams,
    energies: Vec<f64>,
    tracked: Vec<usize>,
}

impl Stationary {
    pub fn new(params: StationaryParams) -> Result<Self> {
        if params.levels.is_empty() {
            return Err(Error::invalid("levels", "at least one level required"));
        }
        if params.levels.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("levels", "levels must be finite"));
        }
        let Some(&reference) = params.levels.get(params.tracked_index) else {
            return Err(Error::invalid("tracked_index", "out of range"));
        };
        let energies: Vec<f64> = params.levels.iter().map(|x| x - reference).collect();
        let tracked = (0..energies.len()).filter(|&j| energies[j].abs() <= 1e-12).collect();
        Ok(Self { params, energies, tracked })
    }
}

impl MovingFrame for Stationary {
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
        &self.tracked
    }

    fn apply_velocity(&self, _s: f64, block: &CMatrix) -> CMatrix {
        CMatrix::zeros(block.nrows(), block.ncols())
    }

    fn velocity_norm(&self, _s: f64) -> f64 {
        0.0
    }

    fn apply_velocity_rate(&self, _s: f64, block: &CMatrix) -> CMatrix {
        CMatrix::zeros(block.nrows(), block.ncols())
    }

    fn to_lab(&self, _s: f64, block: &CMatrix) -> CMatrix {
        block.clone()
    }

    fn to_body(&self, _s: f64, block: &CMatrix) -> CMatrix {
        block.clone()
    }
}

impl HamiltonianFamily for Stationary {
    fn dim(&self) -> usize {
        self.energies.len()
    }

    fn hamiltonian_at(&self, _s: f64) -> HermitianOperator {
        HermitianOperator::diagonal(&self.energies)
    }

    fn derivative_at(&self, _s: f64) -> HermitianOperator {
        HermitianOperator::zeros(self.energies.len())
    }

    fn tracked_rank(&self) -> usize {
        self.tracked.len()
    }

    fn metadata(&self) -> FamilyMetadata {
        FamilyMetadata {
            model: "static".into(),
            parameters: serde_json::to_value(&self.params).expect("serializable"),
            gap_present: true,
            unitary_family: true,
            rate_class: RateClass::Stationary,
        }
    }

    fn decompose_at(&self, s: f64) -> Result<SpectralDecomposition> {
        frame::decomposition(self, s)
    }

    fn moving_frame(&self) -> Option<&dyn MovingFrame> {
        Some(self)
    }
}
