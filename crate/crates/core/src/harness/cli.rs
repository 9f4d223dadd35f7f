use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::campaign::{run_campaign, CampaignSpec};
use super::output::{dop_csv, emit_results, fmt_float, to_json, write_text, Format};
use super::run::{run_once, StageSet};
use crate::channel::{apply_paths, image_method_paths};
use crate::dsp::Correlator;
use crate::error::{Error, Result};
use crate::estimation::{measure_burst, DopplerResult, ToaResult};
use crate::geometry::Vec3;
use crate::localization::dop_grid;
use crate::rng;
use crate::scenario::{load_scenario, RoomScenario};
use crate::signals::{make_hop_plan, synthesize_fhss, synthesize_fhss_compressed, BitSequence};

#[derive(Debug, Parser)]
#[command(name = "sonoloc", version, about = "Ultrasonic FHSS indoor localization simulator")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One run along the scenario trajectory.
    Simulate(SimulateArgs),
    /// Monte Carlo grid over SNR and trials.
    Campaign(CampaignArgs),
    /// DOP over a lattice of the room.
    DopMap(DopMapArgs),
    /// Single transmitter/receiver ranging demo.
    RangeTest(RangeTestArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario TOML (default scenario when omitted).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Run seed (default: the scenario's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Stages to run: 1, 12, 13 or 123.
    #[arg(long, default_value = "123")]
    stages: StageSet,
    /// Per-fix output; `.json` writes the full run document, anything else CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CampaignArgs {
    /// Campaign TOML.
    #[arg(long)]
    spec: PathBuf,
    /// Directory for the summary files.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct DopMapArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Lattice spacing in metres.
    #[arg(long, default_value_t = 0.25)]
    resolution: f64,
    /// Only the horizontal layer nearest this height (m).
    #[arg(long)]
    slice_z: Option<f64>,
    /// CSV output (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RangeTestArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Transmitter-receiver distance (m).
    #[arg(long, default_value_t = 2.0)]
    distance: f64,
    /// Closing speed (m/s, positive when approaching).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    velocity: f64,
    /// Overrides the scenario's SNR (dB).
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn scenario_or_default(path: Option<&Path>) -> Result<RoomScenario> {
    match path {
        Some(p) => load_scenario(p),
        None => Ok(RoomScenario::default()),
    }
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = scenario_or_default(args.scenario.as_deref())?;
    let seed = args.seed.unwrap_or(scenario.seed);
    let result = run_once(&scenario, args.stages, seed)?;
    if let Some(path) = &args.out {
        emit_results(&result, Format::from_path(path), path)?;
    }
    let mut text = String::from("stage,fixes,unavailable,mean_abs_x_m,mean_abs_y_m,mean_abs_z_m,mean_xy_m,mean_3d_m\n");
    for s in &result.summary {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.stage.number(),
            s.fixes,
            s.unavailable,
            fmt_float(s.mean_abs_x_m),
            fmt_float(s.mean_abs_y_m),
            fmt_float(s.mean_abs_z_m),
            fmt_float(s.mean_xy_m),
            fmt_float(s.mean_3d_m),
        ));
    }
    write_stdout(out, &text)
}

fn campaign(args: &CampaignArgs, out: &mut dyn Write) -> Result<()> {
    let spec = CampaignSpec::load(&args.spec)?;
    let result = run_campaign(&spec, Some(&args.out_dir))?;
    write_stdout(out, &super::output::campaign_csv(&result.summary))
}

fn dop_map(args: &DopMapArgs, out: &mut dyn Write) -> Result<()> {
    let scenario = scenario_or_default(args.scenario.as_deref())?;
    scenario.validate()?;
    let grid = dop_grid(&scenario.beacons, &scenario.room_dims_m, args.resolution)?;
    let text = match args.slice_z {
        Some(z) => {
            if !(0.0..=scenario.room_dims_m.height()).contains(&z) {
                return Err(Error::Argument(format!("slice height {z} m is outside the room")));
            }
            dop_csv(grid.slice_z(z))
        }
        None => dop_csv(&grid.cells),
    };
    match &args.out {
        Some(p) => {
            write_text(p, &text)?;
            eprintln!(
                "mean hdop {} vdop {} gdop {}, {} singular cells",
                fmt_float(grid.mean_hdop()),
                fmt_float(grid.mean_vdop()),
                fmt_float(grid.mean_gdop()),
                grid.singular_count()
            );
            Ok(())
        }
        None => write_stdout(out, &text),
    }
}

#[derive(Debug, Serialize)]
struct RangeReport {
    true_distance_m: f64,
    true_velocity_mps: f64,
    sound_speed_mps: f64,
    snr_db: f64,
    toa: ToaResult,
    doppler: DopplerResult,
}

fn range_test(args: &RangeTestArgs, out: &mut dyn Write) -> Result<()> {
    let mut scenario = scenario_or_default(args.scenario.as_deref())?;
    if let Some(snr) = args.snr_db {
        scenario.channel.snr_db = snr;
    }
    scenario.validate()?;
    let c = scenario.sound_speed()?;
    if !(args.velocity.abs() < 0.1 * c.value_mps) {
        return Err(Error::Argument(format!("velocity {} m/s is out of range", args.velocity)));
    }
    let room = scenario.room_dims_m;
    let margin = 0.1;
    // centred along x so wall echoes trail the direct path by as much as
    // the room allows; an echo inside the same bit biases the Doppler peak
    let x0 = ((room.dims_m.x - args.distance) / 2.0).max(margin);
    let tx = Vec3::new(x0, room.dims_m.y / 2.0, room.dims_m.z / 2.0);
    let rx = tx + Vec3::new(args.distance, 0.0, 0.0);
    if !(args.distance > 0.0 && room.contains(&rx)) {
        return Err(Error::Argument(format!(
            "distance {} m does not fit in the room (max {} m)",
            args.distance,
            room.dims_m.x - margin
        )));
    }
    let sig = &scenario.signal;
    let bits = BitSequence::for_burst(sig.bits_per_burst, args.seed, 0)?;
    let plan = make_hop_plan(
        sig.bits_per_burst,
        &sig.carriers_hz,
        rng::derive_seed(args.seed, &[rng::tag::HOP_PLAN, 0]),
    )?;
    let paths = image_method_paths(
        &tx,
        &rx,
        &room,
        scenario.channel.max_reflection_order,
        scenario.channel.wall_reflection_loss,
        c,
    )?;
    let alpha = 1.0 + args.velocity / c.value_mps;
    let scaled = synthesize_fhss_compressed(&bits, &plan, &sig.waveform(), alpha)?;
    let reference = synthesize_fhss(&bits, &plan, &sig.waveform())?;
    let out_len = reference.len() + (paths.max_delay_s() * sig.sample_rate_hz).ceil() as usize + 64;
    let channel = scenario
        .channel
        .with_seed(rng::derive_seed(args.seed, &[rng::tag::CHANNEL, scenario.channel.seed]));
    let rx_frame = apply_paths(&scaled, &paths, &channel, out_len)?;
    let correlator = Correlator::new(&reference.samples, out_len);
    let (toa, doppler) = measure_burst(&rx_frame, &correlator, &plan, sig.bit_duration_s, c)?;
    let report = RangeReport {
        true_distance_m: args.distance,
        true_velocity_mps: args.velocity,
        sound_speed_mps: c.value_mps,
        snr_db: scenario.channel.snr_db,
        toa,
        doppler,
    };
    write_stdout(out, &to_json(&report)?)
}

fn write_stdout(out: &mut dyn Write, text: &str) -> Result<()> {
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        // a closed pipe downstream (`| head`) is not a failure
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(|e| Error::io("<stdout>", e)),
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Campaign(a) => campaign(a, out),
        Command::DopMap(a) => dop_map(a, out),
        Command::RangeTest(a) => range_test(a, out),
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns
/// the process exit code: 0 on success, 2 for usage and validation
/// errors, 1 for failures while running.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut buf = Vec::new();
    let outcome = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli, &mut buf)),
            Err(e) => Err(Error::Argument(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(&cli, &mut buf),
    }
    .and_then(|_| write_stdout(&mut std::io::stdout().lock(), &String::from_utf8_lossy(&buf)));
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}
