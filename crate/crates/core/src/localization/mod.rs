//! Position from beacon ranges: linearized trilateration, dilution of
//! precision, and ceiling-echo height fusion.

mod dop;
mod height;
mod trilateration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub use dop::{compute_dop, dop_grid, DopCategory, DopCell, DopGrid, DopValues, SINGULAR_CONDITION};
pub use height::{fuse_height, height_from_echo, EchoModel, HeightMeasurement};
pub use trilateration::{trilaterate, trilaterate_normal_equations, LinearSystem};

/// Receiver positions on the room walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeaconSet {
    pub positions: Vec<Vec3>,
}

impl Default for BeaconSet {
    fn default() -> Self {
        Self {
            positions: vec![
                Vec3::new(2.5, 0.0, 1.5),
                Vec3::new(5.0, 2.5, 2.5),
                Vec3::new(2.5, 5.0, 2.0),
                Vec3::new(0.0, 5.0, 3.0),
            ],
        }
    }
}

impl BeaconSet {
    pub fn new(positions: Vec<Vec3>) -> Result<Self> {
        let set = Self { positions };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// At least four beacons, finite, and not all in one plane.
    pub fn validate(&self) -> Result<()> {
        if self.positions.len() < 4 {
            return Err(Error::validation("beacons", "at least four beacons are needed"));
        }
        for (i, p) in self.positions.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::validation(format!("beacons[{i}]"), "coordinates must be finite"));
            }
        }
        LinearSystem::new(self, &vec![1.0; self.len()])
            .and_then(|s| s.check_rank())
            .map_err(|_| Error::validation("beacons", "beacons are coplanar"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2,
    Stage3,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Stage1, Stage::Stage2, Stage::Stage3];

    pub fn number(self) -> u8 {
        match self {
            Stage::Stage1 => 1,
            Stage::Stage2 => 2,
            Stage::Stage3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Stage3 => "stage3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionFix {
    pub xyz_m: Vec3,
    pub stage: Stage,
    /// Norm of the linear-system residual `|A x - b|` (m²).
    pub residual_m: f64,
    /// `None` when the geometry at the fix is singular.
    pub dop: Option<DopValues>,
}
