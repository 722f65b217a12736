use super::{frame, HamiltonianFamily};
use crate::error::{Error, Result};
use crate::operators::{c64, norm2, CMatrix, Projector, SpectralDecomposition};

/// Step of the central differences for `Ṗ` and `P̈`.
pub const FD_STEP: f64 = 1e-4;
const AMBIGUITY_MARGIN: f64 = 0.1;
/// Points this close to a declared crossing are treated as the crossing.
const CROSSING_OFFSET: f64 = 1e-6;
const CLOSED_FORM_CHECK_LIMIT: usize = 512;
const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// `P(s)` with its first two derivatives.
#[derive(Clone, Debug)]
pub struct ProjectionFrame {
    pub s: f64,
    pub projector: Projector,
    pub pdot: CMatrix,
    pub pddot: CMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveSource {
    /// Read off the family's moving frame.
    ClosedForm,
    /// Continued numerically by maximal overlap between neighbouring points.
    Tracked,
}

/// The tracked projection along a family, anchored on a grid.
pub struct ProjectionCurve<'a> {
    family: &'a dyn HamiltonianFamily,
    grid: Vec<f64>,
    anchors: Vec<Projector>,
    source: CurveSource,
}

impl std::fmt::Debug for ProjectionCurve<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProjectionCurve")
            .field("model", &self.family.metadata().model)
            .field("grid_len", &self.grid.len())
            .field("source", &self.source)
            .finish()
    }
}

/// Tracks the projection of `family` over `grid`, using closed forms when the
/// family has them.
pub fn track_projection<'a>(family: &'a dyn HamiltonianFamily, grid: &[f64]) -> Result<ProjectionCurve<'a>> {
    ProjectionCurve::new(family, grid)
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::invalid("grid", "at least two points required"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid", "points must be strictly ascending"));
    }
    if grid[0].abs() > 1e-12 || (grid[grid.len() - 1] - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("grid", "must start at 0 and end at 1"));
    }
    Ok(())
}

/// Rank-`r` spectral projectors made of whole degenerate groups of consecutive
/// eigenvalues, with the eigenvalue indices they use.
fn candidates(d: &SpectralDecomposition, rank: usize) -> Vec<(Vec<usize>, Projector)> {
    let groups = d.groups();
    let mut out = Vec::new();
    for start in 0..groups.len() {
        let mut size = 0;
        for g in &groups[start..] {
            size += g.len();
            if size >= rank {
                break;
            }
        }
        if size == rank {
            let first = groups[start].start;
            let idx: Vec<usize> = (first..first + rank).collect();
            out.push((idx.clone(), Projector::from_orthonormal(d.eigenvector_block(&idx))));
        }
    }
    out
}

impl<'a> ProjectionCurve<'a> {
    pub fn new(family: &'a dyn HamiltonianFamily, grid: &[f64]) -> Result<Self> {
        match family.moving_frame() {
            Some(_) => Self::closed_form(family, grid),
            None => Self::tracked(family, grid),
        }
    }

    fn closed_form(family: &'a dyn HamiltonianFamily, grid: &[f64]) -> Result<Self> {
        validate_grid(grid)?;
        let mf = family.moving_frame().expect("closed form requires a moving frame");
        let mut anchors = Vec::with_capacity(grid.len());
        for &s in grid {
            let q = mf.to_lab(s, &mf.body_basis());
            if family.dim() <= CLOSED_FORM_CHECK_LIMIT {
                let h = family.hamiltonian_at(s);
                let residual = norm2(&(h.matrix() * &q));
                if residual > EIGEN_RESIDUAL_TOL * h.norm().max(1.0) {
                    return Err(Error::Tracking {
                        s,
                        reason: format!("closed-form projection is not a zero eigenprojection ({residual:.3e})"),
                    });
                }
            }
            anchors.push(Projector::from_orthonormal(q));
        }
        Ok(Self { family, grid: grid.to_vec(), anchors, source: CurveSource::ClosedForm })
    }

    /// Numerical continuation by maximal overlap, ignoring any closed form.
    pub fn tracked(family: &'a dyn HamiltonianFamily, grid: &[f64]) -> Result<Self> {
        validate_grid(grid)?;
        let rank = family.tracked_rank();
        let mut curve = Self { family, grid: grid.to_vec(), anchors: Vec::new(), source: CurveSource::Tracked };

        let s0 = curve.evaluation_point(grid[0]);
        let d = family.decompose_at(s0)?;
        let target = family.tracked_eigenvalue_at(s0);
        let mut scored: Vec<(f64, Projector)> = candidates(&d, rank)
            .into_iter()
            .map(|(idx, p)| (idx.iter().map(|&j| (d.eigenvalues()[j] - target).abs()).fold(0.0, f64::max), p))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let first = match scored.as_slice() {
            [] => return Err(Error::Tracking { s: s0, reason: format!("no rank-{rank} spectral block") }),
            [(best, _), (second, _), ..] if second - best < 1e-7 * d.scale() => {
                return Err(Error::TrackingAmbiguity { s: s0, best: *best, second: *second })
            }
            [(_, p), ..] => p.clone(),
        };
        curve.anchors.push(first);
        for &s in &grid[1..] {
            let previous = curve.anchors.last().expect("first anchor pushed");
            let p = curve.select(curve.evaluation_point(s), previous)?;
            curve.anchors.push(p);
        }
        Ok(curve)
    }

    pub fn family(&self) -> &'a dyn HamiltonianFamily {
        self.family
    }

    pub fn source(&self) -> CurveSource {
        self.source
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn crossing_points(&self) -> Vec<f64> {
        self.family.crossing_points()
    }

    /// Projector at the `k`-th grid point.
    pub fn anchor(&self, k: usize) -> &Projector {
        &self.anchors[k]
    }

    /// Declared crossings are replaced by a left limit: the nearest point
    /// `c − δ`, δ ∈ {1e-6, …, 1e-2}, where the tracked block is resolvable.
    fn evaluation_point(&self, s: f64) -> f64 {
        let rank = self.family.tracked_rank();
        for c in self.family.crossing_points() {
            if (s - c).abs() < CROSSING_OFFSET {
                let side = if c - 1e-2 >= 0.0 { -1.0 } else { 1.0 };
                for offset in [1e-6, 1e-5, 1e-4, 1e-3, 1e-2] {
                    let t = c + side * offset;
                    if let Ok(d) = self.family.decompose_at(t) {
                        if !candidates(&d, rank).is_empty() {
                            return t;
                        }
                    }
                }
                return c + side * 1e-2;
            }
        }
        s
    }

    fn select(&self, s: f64, reference: &Projector) -> Result<Projector> {
        let d = self.family.decompose_at(s)?;
        let mut scored: Vec<(f64, Projector)> = candidates(&d, self.family.tracked_rank())
            .into_iter()
            .map(|(_, p)| (reference.overlap(&p), p))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let rank = self.family.tracked_rank() as f64;
        match scored.as_slice() {
            [] => Err(Error::Tracking { s, reason: "no candidate spectral block of the tracked rank".into() }),
            [(best, _), (second, _), ..] if (best - second) / rank < AMBIGUITY_MARGIN => {
                Err(Error::TrackingAmbiguity { s, best: best / rank, second: second / rank })
            }
            [(_, p), ..] => Ok(p.clone()),
        }
    }

    fn nearest_anchor(&self, s: f64) -> &Projector {
        let k = match self.grid.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) if k >= self.grid.len() => self.grid.len() - 1,
            Err(k) => {
                if s - self.grid[k - 1] <= self.grid[k] - s {
                    k - 1
                } else {
                    k
                }
            }
        };
        &self.anchors[k]
    }

    pub fn projector_at(&self, s: f64) -> Result<Projector> {
        match self.source {
            CurveSource::ClosedForm => {
                let mf = self.family.moving_frame().expect("closed form requires a moving frame");
                Ok(Projector::from_orthonormal(mf.to_lab(s, &mf.body_basis())))
            }
            CurveSource::Tracked => self.select(self.evaluation_point(s), self.nearest_anchor(s)),
        }
    }

    /// `P`, `Ṗ`, `P̈` at `s` as dense matrices.
    pub fn frame_at(&self, s: f64) -> Result<ProjectionFrame> {
        match self.source {
            CurveSource::ClosedForm => {
                let mf = self.family.moving_frame().expect("closed form requires a moving frame");
                let (projector, pdot, pddot) = frame::projection_derivatives(mf, s);
                Ok(ProjectionFrame { s, projector, pdot, pddot })
            }
            CurveSource::Tracked => {
                let p = self.projector_at(s)?;
                let center = self.evaluation_point(s);
                let plus = self.select(center + FD_STEP, &p)?;
                let minus = self.select(center - FD_STEP, &p)?;
                let (pp, pm, pc) = (plus.matrix(), minus.matrix(), p.matrix());
                let pdot = (pp - pm) * c64(0.5 / FD_STEP, 0.0);
                let pddot = (pp - pc * c64(2.0, 0.0) + pm) * c64(1.0 / (FD_STEP * FD_STEP), 0.0);
                Ok(ProjectionFrame { s, projector: p, pdot, pddot })
            }
        }
    }
}
