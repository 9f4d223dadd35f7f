use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Axis-aligned room `[0, Lx] x [0, Ly] x [0, Lz]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoomBox {
    pub dims_m: Vec3,
}

impl Default for RoomBox {
    /// 5 m x 5 m x 3 m office.
    fn default() -> Self {
        Self::new(5.0, 5.0, 3.0)
    }
}

impl RoomBox {
    pub fn new(lx: f64, ly: f64, lz: f64) -> Self {
        Self {
            dims_m: Vec3::new(lx, ly, lz),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims_m.iter().all(|d| d.is_finite() && *d > 0.0) {
            Ok(())
        } else {
            Err(Error::validation("room", "dimensions must be positive"))
        }
    }

    pub fn height(&self) -> f64 {
        self.dims_m.z
    }

    pub fn diagonal(&self) -> f64 {
        self.dims_m.norm()
    }

    pub fn centre(&self) -> Vec3 {
        self.dims_m / 2.0
    }

    /// Inside or on the boundary.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= 0.0 && p[i] <= self.dims_m[i])
    }

    pub fn contains_strictly(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] > 0.0 && p[i] < self.dims_m[i])
    }

    /// At least `margin` away from every wall.
    pub fn contains_with_margin(&self, p: &Vec3, margin: f64) -> bool {
        (0..3).all(|i| p[i] >= margin && p[i] <= self.dims_m[i] - margin)
    }
}
