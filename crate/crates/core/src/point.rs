//! Points of the hybrid state space: a discrete mode plus a real coordinate vector.

use std::fmt;

use smallvec::SmallVec;

/// Coordinate storage. Every shipped model lives in dimension four or less.
pub type Coords = SmallVec<[f64; 4]>;

/// Tag of a discrete regime. `Mode::CEMETERY` is reserved for the absorbing state of a killed process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mode(pub u16);

impl Mode {
    pub const CEMETERY: Mode = Mode(u16::MAX);

    pub fn is_cemetery(self) -> bool {
        self == Mode::CEMETERY
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_cemetery() {
            f.write_str("cemetery")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPoint {
    pub mode: Mode,
    pub coords: Coords,
}

impl HybridPoint {
    pub fn new(mode: Mode, coords: &[f64]) -> Self {
        debug_assert!(!mode.is_cemetery() || coords.is_empty());
        Self {
            mode,
            coords: Coords::from_slice(coords),
        }
    }

    /// The cemetery point carries no coordinates.
    pub fn cemetery() -> Self {
        Self {
            mode: Mode::CEMETERY,
            coords: Coords::new(),
        }
    }

    pub fn is_cemetery(&self) -> bool {
        self.mode.is_cemetery()
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Distance on the hybrid space: infinite across modes, Euclidean within a mode.
pub fn hybrid_distance(x: &HybridPoint, y: &HybridPoint) -> f64 {
    if x.mode != y.mode {
        return f64::INFINITY;
    }
    squared_euclidean(&x.coords, &y.coords).sqrt()
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}
