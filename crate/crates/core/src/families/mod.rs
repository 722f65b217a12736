//! Differentiable Hamiltonian curves `s ↦ H(s)` on `[0, 1]` with a tracked
//! spectral projection, and the model zoo.
//!
//! Every zoo model is of the form `H(s) = V(s) D(s) V(s)†` with `D` diagonal
//! and the tracked eigenvalue fixed at zero, which gives closed forms for the
//! projection and its derivatives (see [`MovingFrame`]).

mod berry;
mod friedrichs;
mod stationary;
mod tracking;
mod two_level;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{c64, decompose, CMatrix, HermitianOperator, Projector, SpectralDecomposition, C64};

pub use berry::{BerrySpin, BerrySpinParams, SphericalArc};
pub use friedrichs::{Friedrichs, FriedrichsParams};
pub use stationary::{Stationary, StationaryParams};
pub use tracking::{track_projection, CurveSource, ProjectionCurve, ProjectionFrame, FD_STEP};
pub use two_level::{Crossing, CrossingParams, GappedTwoLevel, GappedTwoLevelParams};

/// `s³(10 − 15s + 6s²)`, clamped to `[0, 1]` outside the unit interval.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

pub fn smoothstep_d1(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    30.0 * s * s * (1.0 - s) * (1.0 - s)
}

pub fn smoothstep_d2(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)
}

/// `start + amplitude · smoothstep(s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub start: f64,
    pub amplitude: f64,
}

impl Ramp {
    pub fn new(start: f64, amplitude: f64) -> Self {
        Self { start, amplitude }
    }

    pub fn constant(value: f64) -> Self {
        Self { start: value, amplitude: 0.0 }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.start + self.amplitude * smoothstep(s)
    }

    pub fn d1(&self, s: f64) -> f64 {
        self.amplitude * smoothstep_d1(s)
    }

    pub fn d2(&self, s: f64) -> f64 {
        self.amplitude * smoothstep_d2(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum RateClass {
    /// `Ṗ ≡ 0`: the evolution is exactly adiabatic.
    Stationary,
    Gapped,
    Crossing { order: u32 },
    /// Gapless with an α-Hölder spectral measure at the tracked eigenvalue.
    Holder { alpha: f64 },
    Friedrichs { alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyMetadata {
    pub model: String,
    pub parameters: serde_json::Value,
    pub gap_present: bool,
    pub unitary_family: bool,
    pub rate_class: RateClass,
}

/// Body-frame view of a family `H(s) = V(s) D(s) V(s)†`.
///
/// `D(s)` is diagonal with the tracked eigenvalue (zero) on the fixed indices
/// returned by [`MovingFrame::tracked_indices`], so the body-frame projection
/// `P₀` is constant. `B(s) = V(s)†V̇(s)` is the anti-Hermitian frame velocity.
pub trait MovingFrame: Send + Sync {
    fn dim(&self) -> usize;
    fn body_energies(&self, s: f64) -> Vec<f64>;
    fn body_energy_rates(&self, s: f64) -> Vec<f64>;
    fn tracked_indices(&self) -> &[usize];
    /// `B(s)·block`.
    fn apply_velocity(&self, s: f64, block: &CMatrix) -> CMatrix;
    /// `‖B(s)‖`.
    fn velocity_norm(&self, s: f64) -> f64;
    /// `Ḃ(s)·block`.
    fn apply_velocity_rate(&self, s: f64, block: &CMatrix) -> CMatrix;
    /// `V(s)·block`.
    fn to_lab(&self, s: f64, block: &CMatrix) -> CMatrix;
    /// `V(s)†·block`.
    fn to_body(&self, s: f64, block: &CMatrix) -> CMatrix;

    /// Coordinate basis of the body-frame projection.
    fn body_basis(&self) -> CMatrix {
        let idx = self.tracked_indices();
        CMatrix::from_fn(self.dim(), idx.len(), |r, c| if r == idx[c] { C64::ONE } else { C64::ZERO })
    }
}

pub trait HamiltonianFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn hamiltonian_at(&self, s: f64) -> HermitianOperator;
    /// `Ḣ(s)`.
    fn derivative_at(&self, s: f64) -> HermitianOperator;
    fn tracked_rank(&self) -> usize;
    fn metadata(&self) -> FamilyMetadata;

    /// Every family is normalized so the tracked eigenvalue sits at zero.
    fn tracked_eigenvalue_at(&self, _s: f64) -> f64 {
        0.0
    }

    fn crossing_points(&self) -> Vec<f64> {
        Vec::new()
    }

    fn decompose_at(&self, s: f64) -> Result<SpectralDecomposition> {
        decompose(&self.hamiltonian_at(s))
    }

    fn moving_frame(&self) -> Option<&dyn MovingFrame> {
        None
    }
}

/// Dense helpers for families given through a moving frame.
pub mod frame {
    use super::*;

    pub fn frame_matrix(f: &dyn MovingFrame, s: f64) -> CMatrix {
        let n = f.dim();
        f.to_lab(s, &CMatrix::identity(n, n))
    }

    pub fn velocity_matrix(f: &dyn MovingFrame, s: f64) -> CMatrix {
        let n = f.dim();
        f.apply_velocity(s, &CMatrix::identity(n, n))
    }

    pub fn velocity_rate_matrix(f: &dyn MovingFrame, s: f64) -> CMatrix {
        let n = f.dim();
        f.apply_velocity_rate(s, &CMatrix::identity(n, n))
    }

    /// `P₀·m`: keeps the tracked rows.
    pub fn project_rows(f: &dyn MovingFrame, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(m.nrows(), m.ncols());
        for &i in f.tracked_indices() {
            out.set_row(i, &m.row(i));
        }
        out
    }

    fn scale_rows(values: &[f64], m: &CMatrix) -> CMatrix {
        let mut out = m.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= c64(values[i], 0.0);
        }
        out
    }

    /// `V†` without forming `V` densely first.
    fn frame_adjoint(f: &dyn MovingFrame, s: f64) -> CMatrix {
        let n = f.dim();
        f.to_body(s, &CMatrix::identity(n, n))
    }

    pub fn body_projector(f: &dyn MovingFrame) -> CMatrix {
        let q = f.body_basis();
        &q * q.adjoint()
    }

    pub fn hamiltonian(f: &dyn MovingFrame, s: f64) -> HermitianOperator {
        let w = frame_adjoint(f, s);
        HermitianOperator::from_hermitian_part(f.to_lab(s, &scale_rows(&f.body_energies(s), &w)))
    }

    /// `Ḣ = V([B, D] + Ḋ)V†`.
    pub fn derivative(f: &dyn MovingFrame, s: f64) -> HermitianOperator {
        let w = frame_adjoint(f, s);
        let d = f.body_energies(s);
        let body = f.apply_velocity(s, &scale_rows(&d, &w)) - scale_rows(&d, &f.apply_velocity(s, &w))
            + scale_rows(&f.body_energy_rates(s), &w);
        HermitianOperator::from_hermitian_part(f.to_lab(s, &body))
    }

    /// `(P, Ṗ, P̈)` from `P = V P₀ V†`, `Ṗ = V[B, P₀]V†`,
    /// `P̈ = V([B, [B, P₀]] + [Ḃ, P₀])V†`.
    pub fn projection_derivatives(f: &dyn MovingFrame, s: f64) -> (Projector, CMatrix, CMatrix) {
        let w = frame_adjoint(f, s);
        let b = |m: &CMatrix| f.apply_velocity(s, m);
        let bdot = |m: &CMatrix| f.apply_velocity_rate(s, m);
        let p0 = |m: &CMatrix| project_rows(f, m);
        let c1 = |m: &CMatrix| b(&p0(m)) - p0(&b(m));
        let first = c1(&w);
        let second = b(&first) - c1(&b(&w)) + bdot(&p0(&w)) - p0(&bdot(&w));
        let basis = f.to_lab(s, &f.body_basis());
        (Projector::from_orthonormal(basis), f.to_lab(s, &first), f.to_lab(s, &second))
    }

    /// Lab-frame `V̇V† = V B V†`.
    pub fn lab_velocity(f: &dyn MovingFrame, s: f64) -> CMatrix {
        f.to_lab(s, &f.apply_velocity(s, &frame_adjoint(f, s)))
    }

    /// Eigendecomposition read off the frame: ascending `D` and the matching
    /// columns of `V`.
    pub fn decomposition(f: &dyn MovingFrame, s: f64) -> Result<SpectralDecomposition> {
        let energies = f.body_energies(s);
        let mut order: Vec<usize> = (0..energies.len()).collect();
        order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
        let v = frame_matrix(f, s);
        let sorted = CMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, order[c])]);
        SpectralDecomposition::from_parts(order.iter().map(|&i| energies[i]).collect(), sorted)
    }
}

/// 2×2 real rotation by `angle`.
pub(crate) fn rotation(angle: f64) -> CMatrix {
    let (s, c) = angle.sin_cos();
    CMatrix::from_row_slice(2, 2, &[c64(c, 0.0), c64(-s, 0.0), c64(s, 0.0), c64(c, 0.0)])
}

/// Generator `[[0, −1], [1, 0]]` of [`rotation`].
pub(crate) fn rotation_generator() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[C64::ZERO, c64(-1.0, 0.0), C64::ONE, C64::ZERO])
}

/// One entry of the model catalog.
#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub name: &'static str,
    pub parameters: serde_json::Value,
    pub predicted_rate: &'static str,
    pub gap_present: bool,
    pub unitary_family: bool,
}

pub const MODEL_NAMES: [&str; 5] = ["static", "gapped-two-level", "crossing", "berry-spin", "friedrichs"];

/// Catalog in a fixed order, parameters shown at their defaults.
pub fn catalog() -> Vec<ModelInfo> {
    fn params<T: Serialize>(p: T) -> serde_json::Value {
        serde_json::to_value(p).expect("parameter structs serialize")
    }
    vec![
        ModelInfo {
            name: "static",
            parameters: params(StationaryParams::default()),
            predicted_rate: "exactly adiabatic (dist = 0)",
            gap_present: true,
            unitary_family: true,
        },
        ModelInfo {
            name: "gapped-two-level",
            parameters: params(GappedTwoLevelParams::default()),
            predicted_rate: "gamma = 1",
            gap_present: true,
            unitary_family: true,
        },
        ModelInfo {
            name: "crossing",
            parameters: params(CrossingParams::default()),
            predicted_rate: "gamma = 1/(m+1)",
            gap_present: false,
            unitary_family: false,
        },
        ModelInfo {
            name: "berry-spin",
            parameters: params(BerrySpinParams::default()),
            predicted_rate: "gamma = 1",
            gap_present: true,
            unitary_family: true,
        },
        ModelInfo {
            name: "friedrichs",
            parameters: params(FriedrichsParams::default()),
            predicted_rate: "alpha > 1: gamma = 1; alpha = 1: log(tau)/tau; alpha < 1: gamma = alpha",
            gap_present: false,
            unitary_family: true,
        },
    ]
}

fn parse_params<T: serde::de::DeserializeOwned>(model: &str, value: &serde_json::Value) -> Result<T> {
    let value = if value.is_null() { serde_json::Value::Object(Default::default()) } else { value.clone() };
    serde_path_to_error::deserialize(value)
        .map_err(|e| Error::Config(format!("parameters of model `{model}` at `{}`: {}", e.path(), e.inner())))
}

/// Builds a zoo model from its catalog name and a JSON parameter object.
pub fn build_model(name: &str, parameters: &serde_json::Value) -> Result<Box<dyn HamiltonianFamily>> {
    Ok(match name {
        "static" => Box::new(Stationary::new(parse_params(name, parameters)?)?),
        "gapped-two-level" => Box::new(GappedTwoLevel::new(parse_params(name, parameters)?)?),
        "crossing" => Box::new(Crossing::new(parse_params(name, parameters)?)?),
        "berry-spin" => Box::new(BerrySpin::new(parse_params(name, parameters)?)?),
        "friedrichs" => Box::new(Friedrichs::new(parse_params(name, parameters)?)?),
        other => return Err(Error::UnknownModel(other.to_string())),
    })
}

/// One instance of every zoo model at default parameters, with the given
/// number of continuum levels for the Friedrichs model.
pub fn standard_zoo(friedrichs_levels: usize) -> Result<Vec<Box<dyn HamiltonianFamily>>> {
    Ok(vec![
        Box::new(Stationary::new(StationaryParams::default())?),
        Box::new(GappedTwoLevel::new(GappedTwoLevelParams::default())?),
        Box::new(Crossing::new(CrossingParams { order: 1, ..Default::default() })?),
        Box::new(Crossing::new(CrossingParams { order: 2, ..Default::default() })?),
        Box::new(BerrySpin::new(BerrySpinParams::default())?),
        Box::new(Friedrichs::new(FriedrichsParams { n_levels: friedrichs_levels, ..Default::default() })?),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::norm2;

    #[test]
    fn smoothstep_shape() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(smoothstep_d1(0.0), 0.0);
        assert_eq!(smoothstep_d1(1.0), 0.0);
        for &s in &[0.1, 0.37, 0.5, 0.8] {
            let h = 1e-5;
            let d1 = (smoothstep(s + h) - smoothstep(s - h)) / (2.0 * h);
            let d2 = (smoothstep_d1(s + h) - smoothstep_d1(s - h)) / (2.0 * h);
            assert!((d1 - smoothstep_d1(s)).abs() < 1e-8);
            assert!((d2 - smoothstep_d2(s)).abs() < 1e-7);
        }
    }

    fn zoo() -> Vec<Box<dyn HamiltonianFamily>> {
        standard_zoo(48).unwrap()
    }

    #[test]
    fn compact_driving() {
        for f in zoo() {
            for s in [0.0, 1.0] {
                assert!(f.derivative_at(s).norm() <= 1e-9, "{} at {s}", f.metadata().model);
            }
        }
    }

    #[test]
    fn derivative_consistency() {
        for f in zoo() {
            let mut errs = Vec::new();
            for h in [1e-2, 5e-3] {
                let mut worst: f64 = 0.0;
                for k in 1..10 {
                    let s = k as f64 / 10.0;
                    let fd = (f.hamiltonian_at(s + h).into_matrix() - f.hamiltonian_at(s - h).into_matrix())
                        * c64(0.5 / h, 0.0);
                    worst = worst.max(norm2(&(fd - f.derivative_at(s).matrix())));
                }
                errs.push(worst);
            }
            // O(h²): halving h cuts the error by about four
            assert!(errs[1] <= errs[0] / 3.0 + 1e-10, "{}: {errs:?}", f.metadata().model);
        }
    }

    #[test]
    fn tracked_eigenvalue_is_zero() {
        for f in zoo() {
            let frame = f.moving_frame().unwrap();
            for k in 0..=10 {
                let s = k as f64 / 10.0;
                let h = f.hamiltonian_at(s);
                let q = frame.to_lab(s, &frame.body_basis());
                let residual = norm2(&(h.matrix() * &q));
                assert!(residual <= 1e-10 * h.norm().max(1.0), "{} at {s}: {residual}", f.metadata().model);
                assert_eq!(f.tracked_eigenvalue_at(s), 0.0);
            }
        }
    }

    #[test]
    fn unitary_families_keep_spectrum() {
        for f in zoo().into_iter().filter(|f| f.metadata().unitary_family) {
            let reference = decompose(&f.hamiltonian_at(0.0)).unwrap();
            for k in 1..=10 {
                let d = decompose(&f.hamiltonian_at(k as f64 / 10.0)).unwrap();
                for (a, b) in d.eigenvalues().iter().zip(reference.eigenvalues()) {
                    assert!((a - b).abs() < 1e-9, "{}", f.metadata().model);
                }
            }
        }
    }

    #[test]
    fn rotation_identity_for_unitary_families() {
        for f in zoo().into_iter().filter(|f| f.metadata().unitary_family) {
            let mf = f.moving_frame().unwrap();
            for k in 0..=10 {
                let s = k as f64 / 10.0;
                let (p, pdot, _) = frame::projection_derivatives(mf, s);
                let w = frame::lab_velocity(mf, s);
                let rhs = &w * p.matrix() - p.matrix() * &w;
                assert!(norm2(&(pdot - rhs)) < 1e-12);
            }
        }
    }

    #[test]
    fn velocity_norms() {
        for f in zoo() {
            let mf = f.moving_frame().unwrap();
            for s in [0.2, 0.5, 0.9] {
                let exact = norm2(&frame::velocity_matrix(mf, s));
                assert!((exact - mf.velocity_norm(s)).abs() < 1e-12, "{}", f.metadata().model);
            }
        }
    }

    #[test]
    fn closed_form_decomposition_matches_numeric() {
        for f in zoo() {
            let mf = f.moving_frame().unwrap();
            let closed = frame::decomposition(mf, 0.3).unwrap();
            let numeric = decompose(&f.hamiltonian_at(0.3)).unwrap();
            for (a, b) in closed.eigenvalues().iter().zip(numeric.eigenvalues()) {
                assert!((a - b).abs() < 1e-10);
            }
            assert!(norm2(&(closed.reconstruct() - f.hamiltonian_at(0.3).matrix())) < 1e-10);
        }
    }

    #[test]
    fn build_by_name() {
        let f = build_model("crossing", &serde_json::json!({"order": 2})).unwrap();
        assert_eq!(f.metadata().rate_class, RateClass::Crossing { order: 2 });
        assert!(matches!(build_model("nope", &serde_json::Value::Null), Err(Error::UnknownModel(_))));
        let err = build_model("friedrichs", &serde_json::json!({"n_level": 10})).err().unwrap();
        assert!(err.to_string().contains("n_level"), "{err}");
        let names: Vec<_> = catalog().iter().map(|m| m.name).collect();
        assert_eq!(names, MODEL_NAMES);
    }
}
