use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sonoloc::channel::sound_speed_from_temperature;
use sonoloc::geometry::Vec3;
use sonoloc::harness::{run_once, run_csv, to_json, StageSet};
use sonoloc::localization::{compute_dop, BeaconSet};
use sonoloc::scenario::RoomScenario;
use sonoloc::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        e if e.is_validation() => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn scenario(toml: Option<&str>) -> PyResult<RoomScenario> {
    match toml {
        Some(text) => RoomScenario::from_toml(text, "<string>").map_err(to_py),
        None => Ok(RoomScenario::default()),
    }
}

/// TOML text of the default scenario.
#[pyfunction]
fn default_scenario() -> PyResult<String> {
    RoomScenario::default().to_toml().map_err(to_py)
}

/// Runs one flight and returns the results as JSON (or CSV with `csv=True`).
///
/// `seed` defaults to the scenario's own seed; `stages` is "1", "12", "13" or "123".
#[pyfunction]
#[pyo3(signature = (scenario_toml=None, seed=None, stages="123", csv=false))]
fn simulate(
    py: Python<'_>,
    scenario_toml: Option<&str>,
    seed: Option<u64>,
    stages: &str,
    csv: bool,
) -> PyResult<String> {
    let s = scenario(scenario_toml)?;
    let stages: StageSet = stages.parse().map_err(to_py)?;
    let seed = seed.unwrap_or(s.seed);
    py.detach(|| {
        let result = run_once(&s, stages, seed)?;
        if csv {
            Ok(run_csv(&result))
        } else {
            to_json(&result)
        }
    })
    .map_err(to_py)
}

/// `(gdop, hdop, vdop, category)` of a beacon layout at one point.
#[pyfunction]
fn dop(beacons: Vec<[f64; 3]>, point: [f64; 3]) -> PyResult<(f64, f64, f64, String)> {
    let set = BeaconSet {
        positions: beacons.iter().map(|b| Vec3::from(*b)).collect(),
    };
    set.validate().map_err(to_py)?;
    let d = compute_dop(&set, &Vec3::from(point)).map_err(to_py)?;
    Ok((d.gdop, d.hdop, d.vdop, d.category.as_str().to_string()))
}

/// Speed of sound in air (m/s) at `temp_c` degrees Celsius.
#[pyfunction]
fn sound_speed(temp_c: f64) -> PyResult<f64> {
    Ok(sound_speed_from_temperature(temp_c).map_err(to_py)?.value_mps)
}

#[pymodule]
#[pyo3(name = "sonoloc")]
fn sonoloc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(default_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(dop, m)?)?;
    m.add_function(wrap_pyfunction!(sound_speed, m)?)?;
    Ok(())
}
