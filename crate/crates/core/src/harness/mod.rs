//! End-to-end runs, Monte Carlo campaigns, result files and the CLI.
//!
//! SNR throughout is the receiver-side ratio of direct-path signal power
//! to noise power.

mod campaign;
pub mod cli;
mod output;
mod run;

pub use campaign::{
    paired_steps, run_campaign, scenario_at_snr, summarize, write_campaign, CampaignOutput, CampaignResult,
    CampaignSpec, CampaignSummary, PairedStep, SummaryRow, TrialOutcome,
};
pub use output::{
    campaign_csv, dop_csv, emit_results, fix_header, fmt_float, round_sig, run_csv, summary_header, to_json,
    write_text, Format, SIG_DIGITS,
};
pub use run::{
    fixes_from_ranges, run_once, scenario_digest, simulate_ranges, BurstRanges, FixRecord, RangeSample, RunResult,
    StageFix, StageSet, StageSummary,
};
