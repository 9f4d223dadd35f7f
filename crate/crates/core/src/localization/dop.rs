use nalgebra::{Matrix3, OMatrix, Dyn, U3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::BeaconSet;
use crate::error::{Error, Result};
use crate::geometry::{RoomBox, Vec3};

/// `cond(CᵀC)` above which the geometry counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e8;

/// Closer than this to a beacon the direction cosines are undefined.
const COINCIDENT_M: f64 = 1e-9;

/// Geometry quality bands for a dilution value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopCategory {
    /// Below 1: measurement error or redundancy.
    Redundancy,
    Ideal,
    VeryGood,
    Good,
    Medium,
    Sufficient,
    Bad,
}

impl DopCategory {
    /// Bands are closed on the right: 2.0 is very good, 5.0 good.
    pub fn from_value(v: f64) -> Self {
        if (v - 1.0).abs() <= 1e-9 {
            DopCategory::Ideal
        } else if v < 1.0 {
            DopCategory::Redundancy
        } else if v <= 2.0 {
            DopCategory::VeryGood
        } else if v <= 5.0 {
            DopCategory::Good
        } else if v <= 10.0 {
            DopCategory::Medium
        } else if v <= 20.0 {
            DopCategory::Sufficient
        } else {
            DopCategory::Bad
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DopCategory::Redundancy => "redundancy",
            DopCategory::Ideal => "ideal",
            DopCategory::VeryGood => "very_good",
            DopCategory::Good => "good",
            DopCategory::Medium => "medium",
            DopCategory::Sufficient => "sufficient",
            DopCategory::Bad => "bad",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopValues {
    pub gdop: f64,
    pub hdop: f64,
    pub vdop: f64,
    /// Band of `gdop`.
    pub category: DopCategory,
}

/// Direction-cosine matrix, one unit row per beacon.
fn cosines(beacons: &BeaconSet, point: &Vec3) -> Result<OMatrix<f64, Dyn, U3>> {
    let mut c = OMatrix::<f64, Dyn, U3>::zeros(beacons.len());
    for (i, b) in beacons.positions.iter().enumerate() {
        let d = b - point;
        let n = d.norm();
        if n < COINCIDENT_M {
            return Err(Error::Geometry(format!("point coincides with beacon {i}")));
        }
        c.set_row(i, &(d / n).transpose());
    }
    Ok(c)
}

/// GDOP, HDOP and VDOP from the diagonal of `(CᵀC)⁻¹`.
pub fn compute_dop(beacons: &BeaconSet, point: &Vec3) -> Result<DopValues> {
    if !point.iter().all(|v| v.is_finite()) {
        return Err(Error::Argument("point is not finite".into()));
    }
    let c = cosines(beacons, point)?;
    let ctc: Matrix3<f64> = c.transpose() * &c;
    let ev = ctc.symmetric_eigenvalues();
    let (lo, hi) = (ev.min(), ev.max());
    if !(lo > 0.0) || hi / lo > SINGULAR_CONDITION {
        return Err(Error::Geometry(format!("CᵀC is singular at {point:?} (eigenvalues {lo:e}..{hi:e})")));
    }
    let q = ctc
        .try_inverse()
        .ok_or_else(|| Error::Geometry("CᵀC is not invertible".into()))?;
    let h2 = q[(0, 0)] + q[(1, 1)];
    let v2 = q[(2, 2)];
    let gdop = (h2 + v2).sqrt();
    Ok(DopValues {
        gdop,
        hdop: h2.sqrt(),
        vdop: v2.sqrt(),
        category: DopCategory::from_value(gdop),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopCell {
    pub xyz_m: Vec3,
    /// `None` marks a singular cell.
    pub dop: Option<DopValues>,
}

/// DOP at cell centres, row-major over (x, y, z): cell `(i, j, k)` sits at
/// index `(i * ny + j) * nz + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopGrid {
    pub shape: [usize; 3],
    pub cell_m: Vec3,
    pub cells: Vec<DopCell>,
}

impl DopGrid {
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> &DopCell {
        &self.cells[self.index(i, j, k)]
    }

    fn mean_of(&self, f: impl Fn(&DopValues) -> f64) -> f64 {
        let vals: Vec<f64> = self.cells.iter().filter_map(|c| c.dop.as_ref().map(&f)).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Means over non-singular cells.
    pub fn mean_hdop(&self) -> f64 {
        self.mean_of(|d| d.hdop)
    }

    pub fn mean_vdop(&self) -> f64 {
        self.mean_of(|d| d.vdop)
    }

    pub fn mean_gdop(&self) -> f64 {
        self.mean_of(|d| d.gdop)
    }

    pub fn singular_count(&self) -> usize {
        self.cells.iter().filter(|c| c.dop.is_none()).count()
    }

    /// Cells in the horizontal layer whose centre is nearest to `z`.
    pub fn slice_z(&self, z: f64) -> Vec<&DopCell> {
        let k = ((z / self.cell_m.z - 0.5).round().max(0.0) as usize).min(self.shape[2] - 1);
        (0..self.shape[0])
            .flat_map(|i| (0..self.shape[1]).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j, k))
            .collect()
    }
}

/// Evaluates [`compute_dop`] at the centres of a lattice with roughly
/// `resolution_m` spacing (at least two cells per axis).
pub fn dop_grid(beacons: &BeaconSet, room: &RoomBox, resolution_m: f64) -> Result<DopGrid> {
    if !(resolution_m > 0.0 && resolution_m.is_finite()) {
        return Err(Error::Argument(format!("grid resolution {resolution_m} m must be positive")));
    }
    room.validate()?;
    let shape = [0, 1, 2].map(|a| ((room.dims_m[a] / resolution_m).round() as usize).max(2));
    let cell_m = Vec3::new(
        room.dims_m.x / shape[0] as f64,
        room.dims_m.y / shape[1] as f64,
        room.dims_m.z / shape[2] as f64,
    );
    let cells = (0..shape[0] * shape[1] * shape[2])
        .into_par_iter()
        .map(|idx| {
            let k = idx % shape[2];
            let j = (idx / shape[2]) % shape[1];
            let i = idx / (shape[1] * shape[2]);
            let xyz = Vec3::new(
                (i as f64 + 0.5) * cell_m.x,
                (j as f64 + 0.5) * cell_m.y,
                (k as f64 + 0.5) * cell_m.z,
            );
            DopCell {
                xyz_m: xyz,
                dop: compute_dop(beacons, &xyz).ok(),
            }
        })
        .collect();
    Ok(DopGrid { shape, cell_m, cells })
}
