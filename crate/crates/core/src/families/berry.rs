use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{frame, FamilyMetadata, HamiltonianFamily, MovingFrame, Ramp, RateClass};
use crate::error::{Error, Result};
use crate::operators::{c64, CMatrix, HermitianOperator, SpectralDecomposition, C64};

/// Path on the unit sphere in polar/azimuthal angles, each switched on by
/// smoothstep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SphericalArc {
    pub polar_from: f64,
    pub polar_to: f64,
    pub azimuth_from: f64,
    pub azimuth_to: f64,
}

impl Default for SphericalArc {
    fn default() -> Self {
        Self { polar_from: 0.0, polar_to: FRAC_PI_2, azimuth_from: 0.0, azimuth_to: 0.0 }
    }
}

impl SphericalArc {
    fn polar(&self) -> Ramp {
        Ramp::new(self.polar_from, self.polar_to - self.polar_from)
    }

    fn azimuth(&self) -> Ramp {
        Ramp::new(self.azimuth_from, self.azimuth_to - self.azimuth_from)
    }

    pub fn point(&self, s: f64) -> [f64; 3] {
        let (st, ct) = self.polar().value(s).sin_cos();
        let (sp, cp) = self.azimuth().value(s).sin_cos();
        [st * cp, st * sp, ct]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BerrySpinParams {
    pub path: SphericalArc,
}

fn pauli() -> [CMatrix; 3] {
    let i = c64(0.0, 1.0);
    let (o, one) = (C64::ZERO, C64::ONE);
    [
        CMatrix::from_row_slice(2, 2, &[o, one, one, o]),
        CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        CMatrix::from_row_slice(2, 2, &[one, o, o, -one]),
    ]
}

const TRACKED: [usize; 1] = [1];

/// Spin one-half in a unit field: `H(s) = B(s)·σ + 1`, so the tracked level
/// (anti-aligned with `B`) is at zero and the other at 2.
///
/// The frame is `V = exp(−iφσz/2) exp(−iθσy/2)`, which carries `ẑ` to `B`.
#[derive(Clone, Debug)]
pub struct BerrySpin {
    params: BerrySpinParams,
}

impl BerrySpin {
    pub fn new(params: BerrySpinParams) -> Result<Self> {
        let a = params.path;
        if [a.polar_from, a.polar_to, a.azimuth_from, a.azimuth_to].iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("path", "angles must be finite"));
        }
        Ok(Self { params })
    }

    pub fn field(&self, s: f64) -> [f64; 3] {
        self.params.path.point(s)
    }

    fn frame_matrix(&self, s: f64) -> CMatrix {
        let (theta, phi) = (self.params.path.polar().value(s), self.params.path.azimuth().value(s));
        let rz = CMatrix::from_row_slice(
            2,
            2,
            &[C64::from_polar(1.0, -phi / 2.0), C64::ZERO, C64::ZERO, C64::from_polar(1.0, phi / 2.0)],
        );
        let (sh, ch) = (theta / 2.0).sin_cos();
        let ry = CMatrix::from_row_slice(2, 2, &[c64(ch, 0.0), c64(-sh, 0.0), c64(sh, 0.0), c64(ch, 0.0)]);
        rz * ry
    }

    /// `B = V†V̇ = −(i/2)(φ'(cos θ σz − sin θ σx) + θ' σy)`.
    fn velocity(&self, s: f64) -> CMatrix {
        let (polar, azimuth) = (self.params.path.polar(), self.params.path.azimuth());
        let (st, ct) = polar.value(s).sin_cos();
        let [sx, sy, sz] = pauli();
        let m = (sz * c64(ct, 0.0) - sx * c64(st, 0.0)) * c64(azimuth.d1(s), 0.0) + sy * c64(polar.d1(s), 0.0);
        m * c64(0.0, -0.5)
    }

    fn velocity_rate(&self, s: f64) -> CMatrix {
        let (polar, azimuth) = (self.params.path.polar(), self.params.path.azimuth());
        let (st, ct) = polar.value(s).sin_cos();
        let [sx, sy, sz] = pauli();
        let turn = &sz * c64(ct, 0.0) - &sx * c64(st, 0.0);
        let turn_rate = (&sz * c64(st, 0.0) + &sx * c64(ct, 0.0)) * c64(-polar.d1(s), 0.0);
        let m = turn * c64(azimuth.d2(s), 0.0) + turn_rate * c64(azimuth.d1(s), 0.0) + sy * c64(polar.d2(s), 0.0);
        m * c64(0.0, -0.5)
    }
}

impl MovingFrame for BerrySpin {
    fn dim(&self) -> usize {
        2
    }

    fn body_energies(&self, _s: f64) -> Vec<f64> {
        vec![2.0, 0.0]
    }

    fn body_energy_rates(&self, _s: f64) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn tracked_indices(&self) -> &[usize] {
        &TRACKED
    }

    fn apply_velocity(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.velocity(s) * block
    }

    /// `B = −(i/2) w·σ` with `|w|² = φ'² + θ'²`.
    fn velocity_norm(&self, s: f64) -> f64 {
        0.5 * self.params.path.polar().d1(s).hypot(self.params.path.azimuth().d1(s))
    }

    fn apply_velocity_rate(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.velocity_rate(s) * block
    }

    fn to_lab(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame_matrix(s) * block
    }

    fn to_body(&self, s: f64, block: &CMatrix) -> CMatrix {
        self.frame_matrix(s).adjoint() * block
    }
}

impl HamiltonianFamily for BerrySpin {
    fn dim(&self) -> usize {
        2
    }

    fn hamiltonian_at(&self, s: f64) -> HermitianOperator {
        let [bx, by, bz] = self.field(s);
        let [sx, sy, sz] = pauli();
        let m = sx * c64(bx, 0.0) + sy * c64(by, 0.0) + sz * c64(bz, 0.0) + CMatrix::identity(2, 2);
        HermitianOperator::from_hermitian_part(m)
    }

    fn derivative_at(&self, s: f64) -> HermitianOperator {
        frame::derivative(self, s)
    }

    fn tracked_rank(&self) -> usize {
        1
    }

    fn metadata(&self) -> FamilyMetadata {
        FamilyMetadata {
            model: "berry-spin".into(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::norm2;

    fn general_arc() -> BerrySpin {
        BerrySpin::new(BerrySpinParams {
            path: SphericalArc { polar_from: 0.3, polar_to: 2.0, azimuth_from: -0.4, azimuth_to: 1.1 },
        })
        .unwrap()
    }

    #[test]
    fn constant_field_is_shifted_sigma_z() {
        let f = BerrySpin::new(BerrySpinParams {
            path: SphericalArc { polar_from: 0.0, polar_to: 0.0, azimuth_from: 0.0, azimuth_to: 0.0 },
        })
        .unwrap();
        assert_eq!(f.hamiltonian_at(0.5), HermitianOperator::diagonal(&[2.0, 0.0]));
    }

    #[test]
    fn pauli_identity() {
        let f = general_arc();
        for s in [0.0, 0.25, 0.7] {
            // (H − 1)² = |B|² = 1
            let h = f.hamiltonian_at(s).shifted(-1.0);
            let sq = h.matrix() * h.matrix();
            assert!(norm2(&(sq - CMatrix::identity(2, 2))) < 1e-14);
        }
    }

    #[test]
    fn frame_diagonalizes() {
        let f = general_arc();
        for s in [0.0, 0.3, 0.6, 1.0] {
            let v = f.frame_matrix(s);
            let body = v.adjoint() * f.hamiltonian_at(s).matrix() * &v;
            assert!(norm2(&(body - HermitianOperator::diagonal(&[2.0, 0.0]).matrix())) < 1e-14);
        }
    }

    #[test]
    fn velocity_matches_finite_differences() {
        let f = general_arc();
        let h = 1e-5;
        for s in [0.2, 0.5, 0.85] {
            let vdot = (f.frame_matrix(s + h) - f.frame_matrix(s - h)) * c64(0.5 / h, 0.0);
            let b = f.frame_matrix(s).adjoint() * vdot;
            assert!(norm2(&(b - f.velocity(s))) < 1e-9);
            let bdot = (f.velocity(s + h) - f.velocity(s - h)) * c64(0.5 / h, 0.0);
            assert!(norm2(&(bdot - f.velocity_rate(s))) < 1e-8);
        }
    }
}
