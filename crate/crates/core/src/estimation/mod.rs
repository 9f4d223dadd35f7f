//! Per-beacon ranging: correlation TOA, burst Doppler and their Kalman
//! fusion into a smoothed distance track.

mod doppler;
mod kalman;
mod pipeline;
mod toa;

pub use doppler::{estimate_doppler, estimate_doppler_with, DopplerResult};
pub use kalman::{kalman_step, kalman_update, KalmanState, KalmanStep};
pub use pipeline::{
    measure_burst, run_range_pipeline, BurstInput, EstimationConfig, RangeEntry, RangeTrack, RangeTracker,
};
pub use toa::{estimate_toa, estimate_toa_with_guard, sample_to_distance, toa_from_correlator, ToaResult};
