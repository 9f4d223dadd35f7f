use nalgebra::{DMatrix, DVector};

use super::{compute_dop, BeaconSet, PositionFix, Stage};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Condition number of `A` above which the beacon layout counts as
/// rank deficient.
const RANK_CONDITION: f64 = 1e8;

/// Ranges linearized against the last beacon: row i is
/// `2 (b_n - b_i)` and `b_i = d_i² - d_n² - |b_i|² + |b_n|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearSystem {
    pub fn new(beacons: &BeaconSet, distances_m: &[f64]) -> Result<Self> {
        let n = beacons.len();
        if n < 4 {
            return Err(Error::Argument(format!("{n} beacons given, need at least 4")));
        }
        if distances_m.len() != n {
            return Err(Error::Argument(format!("{} distances for {n} beacons", distances_m.len())));
        }
        if let Some(d) = distances_m.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::Argument(format!("distance {d} must be positive")));
        }
        let last = beacons.positions[n - 1];
        let d_last = distances_m[n - 1];
        let mut a = DMatrix::zeros(n - 1, 3);
        let mut b = DVector::zeros(n - 1);
        for (i, (p, d)) in beacons.positions.iter().zip(distances_m).take(n - 1).enumerate() {
            let row = 2.0 * (last - p);
            a.set_row(i, &row.transpose());
            b[i] = d * d - d_last * d_last - p.norm_squared() + last.norm_squared();
        }
        Ok(Self { a, b })
    }

    pub(crate) fn check_rank(&self) -> Result<()> {
        let sv = self.a.singular_values();
        let max = sv.max();
        let min = sv.min();
        if !(min > 0.0) || max / min > RANK_CONDITION {
            return Err(Error::Geometry(format!(
                "trilateration matrix is rank deficient (singular values {min:e}..{max:e})"
            )));
        }
        Ok(())
    }

    pub fn residual(&self, x: &Vec3) -> f64 {
        (&self.a * DVector::from_column_slice(x.as_slice()) - &self.b).norm()
    }
}

/// Least-squares fix via QR of the linearized system.
pub fn trilaterate(beacons: &BeaconSet, distances_m: &[f64]) -> Result<PositionFix> {
    let sys = LinearSystem::new(beacons, distances_m)?;
    sys.check_rank()?;
    let qr = sys.a.clone().qr();
    let qtb = qr.q().transpose() * &sys.b;
    let x = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Geometry("triangular factor is singular".into()))?;
    finish(beacons, &sys, Vec3::new(x[0], x[1], x[2]))
}

/// The literal `(AᵀA)⁻¹ Aᵀ b` solve, kept for comparison with the QR path.
pub fn trilaterate_normal_equations(beacons: &BeaconSet, distances_m: &[f64]) -> Result<PositionFix> {
    let sys = LinearSystem::new(beacons, distances_m)?;
    sys.check_rank()?;
    let ata = sys.a.transpose() * &sys.a;
    let atb = sys.a.transpose() * &sys.b;
    let x = ata
        .cholesky()
        .ok_or_else(|| Error::Geometry("normal matrix is not positive definite".into()))?
        .solve(&atb);
    finish(beacons, &sys, Vec3::new(x[0], x[1], x[2]))
}

fn finish(beacons: &BeaconSet, sys: &LinearSystem, xyz: Vec3) -> Result<PositionFix> {
    if !xyz.iter().all(|v| v.is_finite()) {
        return Err(Error::Geometry("solution is not finite".into()));
    }
    Ok(PositionFix {
        xyz_m: xyz,
        stage: Stage::Stage1,
        residual_m: sys.residual(&xyz),
        dop: compute_dop(beacons, &xyz).ok(),
    })
}
