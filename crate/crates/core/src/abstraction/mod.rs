//! Interval abstraction of a deterministic controller/plant loop.
//!
//! The state space is cut into cells, one axis at a time. An interval axis
//! uses equal half-open cells plus one open ray on each side of the declared
//! bounds; a lattice axis keeps exact points. For every cell and perception
//! input the builder collects the cells that the exact image of the cell
//! overlaps, and offers one Dirac transition per destination.

mod build;
mod linear;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pa::PaError;

pub use build::{
    build_interval_abstraction, reachable_cells, simulate_concrete, Abstraction, AbstractionOptions,
    INT_PHASE_FEATURE, OBSERVE_PREFIX, STEP_FEATURE, TIMEOUT_LABEL,
};
pub use linear::{AffineMap, LinearConstraint, Piece, FEASIBILITY_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AbstractionError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("initial state {0:?} lies outside the grid")]
    InitialOutOfBounds(Vec<f64>),
    #[error("image value {value} on lattice axis {dim} is not a lattice point")]
    OffLattice { dim: String, value: f64 },
    #[error("lattice axis {0} depends on an interval axis")]
    NonLatticeImage(String),
    #[error("step function is not affine on the cell: {0}")]
    NonAffine(String),
    #[error("state left the declared range on axis {dim} at step {step}: {value}")]
    OutOfRange { step: usize, dim: String, value: f64 },
    #[error("unknown input {0}")]
    UnknownInput(usize),
    #[error(transparent)]
    Pa(#[from] PaError),
}

const LATTICE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DimKind {
    /// Cells `[lo + i·width, lo + (i+1)·width)` covering `[lo, hi)`, plus
    /// `(-inf, lo)` and `[lo + n·width, inf)`.
    Interval { lo: f64, hi: f64, width: f64 },
    /// Points `origin + i·step` for every integer `i`.
    Lattice { origin: f64, step: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimKind,
}

impl Dimension {
    pub fn interval(name: impl Into<String>, lo: f64, hi: f64, width: f64) -> Self {
        Dimension {
            name: name.into(),
            kind: DimKind::Interval { lo, hi, width },
        }
    }

    pub fn lattice(name: impl Into<String>, origin: f64, step: f64) -> Self {
        Dimension {
            name: name.into(),
            kind: DimKind::Lattice { origin, step },
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self.kind, DimKind::Lattice { .. })
    }

    fn inner_cells(&self) -> i64 {
        match self.kind {
            DimKind::Interval { lo, hi, width } => ((hi - lo) / width - 1e-12).ceil().max(1.0) as i64,
            DimKind::Lattice { .. } => 0,
        }
    }

    /// Index of the cell containing `x`; lattice axes snap within tolerance.
    pub fn index_of(&self, x: f64) -> Option<i64> {
        match self.kind {
            DimKind::Interval { lo, width, .. } => {
                if x.is_nan() {
                    return None;
                }
                if x < lo {
                    return Some(0);
                }
                let n = self.inner_cells();
                if x >= lo + n as f64 * width {
                    return Some(n + 1);
                }
                let i = ((x - lo) / width).floor() as i64 + 1;
                // Guard against rounding right below a cell boundary.
                let i = if lo + (i as f64) * width <= x { i + 1 } else { i };
                let i = if i > 1 && lo + ((i - 1) as f64) * width > x { i - 1 } else { i };
                Some(i.min(n + 1))
            }
            DimKind::Lattice { origin, step } => {
                if !x.is_finite() {
                    return None;
                }
                let i = ((x - origin) / step).round();
                let p = origin + i * step;
                ((p - x).abs() <= LATTICE_TOLERANCE * x.abs().max(1.0)).then_some(i as i64)
            }
        }
    }

    /// `(lo, hi)` of cell `i`; equal for lattice points.
    pub fn bounds(&self, i: i64) -> (f64, f64) {
        match self.kind {
            DimKind::Interval { lo, width, .. } => {
                let n = self.inner_cells();
                if i <= 0 {
                    (f64::NEG_INFINITY, lo)
                } else if i > n {
                    (lo + n as f64 * width, f64::INFINITY)
                } else {
                    (lo + (i - 1) as f64 * width, lo + i as f64 * width)
                }
            }
            DimKind::Lattice { origin, step } => {
                let v = origin + i as f64 * step;
                (v, v)
            }
        }
    }

    /// Finite stand-in for cell `i`: its lower end, or one width below the
    /// grid for the lower ray.
    pub fn representative(&self, i: i64) -> f64 {
        match self.kind {
            DimKind::Interval { lo, width, .. } if i <= 0 => lo - width,
            _ => self.bounds(i).0,
        }
    }

    /// Cell indices meeting the closed range `[a, b]`.
    fn indices_meeting(&self, a: f64, b: f64) -> std::ops::RangeInclusive<i64> {
        match self.kind {
            DimKind::Interval { .. } => {
                let first = self.index_of(a).unwrap_or(0);
                let last = self.index_of(b).unwrap_or(self.inner_cells() + 1);
                first..=last
            }
            DimKind::Lattice { .. } => unreachable!("lattice images are points"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalGrid {
    pub dims: Vec<Dimension>,
}

/// Per-axis cell indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbstractCell {
    pub index: Vec<i64>,
}

/// Concrete extent of a cell: `[lo, hi)` per interval axis, `lo == hi` on lattice axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lattice: Vec<bool>,
}

impl CellBox {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| {
            if self.lattice[i] {
                (v - self.lo[i]).abs() <= LATTICE_TOLERANCE * v.abs().max(1.0)
            } else {
                self.lo[i] <= v && v < self.hi[i]
            }
        })
    }

    /// Closed hull `[lo, hi]` on axis `i`.
    pub fn range(&self, i: usize) -> (f64, f64) {
        (self.lo[i], self.hi[i])
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }
}

impl IntervalGrid {
    pub fn new(dims: Vec<Dimension>) -> Result<Self, AbstractionError> {
        for d in &dims {
            match d.kind {
                DimKind::Interval { lo, hi, width } => {
                    if !(width > 0.0 && width.is_finite()) {
                        return Err(AbstractionError::InvalidGrid(format!("{}: width {width}", d.name)));
                    }
                    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                        return Err(AbstractionError::InvalidGrid(format!("{}: bounds [{lo}, {hi})", d.name)));
                    }
                }
                DimKind::Lattice { origin, step } => {
                    if !(step > 0.0 && step.is_finite() && origin.is_finite()) {
                        return Err(AbstractionError::InvalidGrid(format!("{}: step {step}", d.name)));
                    }
                }
            }
        }
        Ok(IntervalGrid { dims })
    }

    pub fn names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }

    pub fn cell_of(&self, x: &[f64]) -> Option<AbstractCell> {
        if x.len() != self.dims.len() {
            return None;
        }
        let index = self
            .dims
            .iter()
            .zip(x)
            .map(|(d, &v)| d.index_of(v))
            .collect::<Option<Vec<_>>>()?;
        Some(AbstractCell { index })
    }

    /// Whether `x` lies in an inner cell (inside the declared bounds).
    pub fn within_bounds(&self, x: &[f64]) -> bool {
        self.dims.iter().zip(x).all(|(d, &v)| match d.kind {
            DimKind::Interval { lo, hi, .. } => lo <= v && v < hi,
            DimKind::Lattice { .. } => d.index_of(v).is_some(),
        })
    }

    pub fn cell_box(&self, c: &AbstractCell) -> CellBox {
        let (lo, hi) = self.dims.iter().zip(&c.index).map(|(d, &i)| d.bounds(i)).unzip();
        CellBox {
            lo,
            hi,
            lattice: self.dims.iter().map(Dimension::is_lattice).collect(),
        }
    }

    pub fn representative(&self, c: &AbstractCell) -> Vec<f64> {
        self.dims
            .iter()
            .zip(&c.index)
            .map(|(d, &i)| d.representative(i))
            .collect()
    }
}

/// A deterministic controller/plant loop driven by a finite input alphabet.
pub trait ControllerPlant: Sync {
    /// Axis names, in the order used by states and pieces.
    fn dimensions(&self) -> Vec<String>;

    fn inputs(&self) -> Vec<String>;

    /// Exact successor of a concrete state under input `k`.
    fn step(&self, x: &[f64], k: usize) -> Vec<f64>;

    /// Affine branches of `step` that together cover `cell` under input `k`.
    /// A branch may cover more than its exact region; extra successors are
    /// then over-approximations.
    fn pieces(&self, cell: &CellBox, k: usize) -> Result<Vec<Piece>, AbstractionError>;

    /// Labels shared by some concrete state of the cell.
    fn labels(&self, cell: &CellBox) -> Vec<String>;

    /// Cells where the loop stops.
    fn absorbing(&self, cell: &CellBox) -> bool;

    /// Key exposed to the perception side before each step.
    fn observation(&self, _cell: &CellBox) -> String {
        "tick".to_string()
    }

    /// Closed range allowed per axis during concrete simulation.
    fn ranges(&self) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); self.dimensions().len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_cells_partition() {
        let d = Dimension::interval("d", 0.0, 10.0, 2.5);
        assert_eq!(d.index_of(-0.1), Some(0));
        assert_eq!(d.index_of(0.0), Some(1));
        assert_eq!(d.index_of(2.4999), Some(1));
        assert_eq!(d.index_of(2.5), Some(2));
        assert_eq!(d.index_of(9.99), Some(4));
        assert_eq!(d.index_of(10.0), Some(5));
        assert_eq!(d.index_of(1e9), Some(5));
        assert_eq!(d.bounds(5), (10.0, f64::INFINITY));
        assert_eq!(d.bounds(0).1, 0.0);
        assert_eq!(d.representative(0), -2.5);
    }

    #[test]
    fn lattice_snaps() {
        let v = Dimension::lattice("v", 0.0, 0.4);
        assert_eq!(v.index_of(1.2), Some(3));
        assert_eq!(v.index_of(1.2 - 0.5 * 0.8), Some(2));
        assert_eq!(v.index_of(0.3), None);
    }

    #[test]
    fn grid_rejects_bad_widths() {
        assert!(IntervalGrid::new(vec![Dimension::interval("d", 0.0, 1.0, 0.0)]).is_err());
        assert!(IntervalGrid::new(vec![Dimension::lattice("v", 0.0, -1.0)]).is_err());
    }
}
