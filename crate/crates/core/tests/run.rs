use sonoloc::channel::Fading;
use sonoloc::geometry::Vec3;
use sonoloc::harness::{
    paired_steps, run_campaign, run_csv, to_json, run_once, CampaignSpec, RunResult, StageSet,
};
use sonoloc::localization::{compute_dop, Stage};
use sonoloc::scenario::{RoomScenario, TrajectorySpec};
use sonoloc::Error;

fn short(duration_s: f64) -> RoomScenario {
    RoomScenario {
        trajectory: TrajectorySpec::Random {
            duration_s,
            speed_cap_mps: 0.3,
            seed: None,
        },
        ..RoomScenario::default()
    }
}

fn hover(at: Vec3, duration_s: f64) -> RoomScenario {
    let mut s = RoomScenario {
        trajectory: TrajectorySpec::Waypoints {
            times_s: vec![0.0, duration_s],
            points_m: vec![at, at],
        },
        ..RoomScenario::default()
    };
    s.channel.fading = Fading::None;
    s.channel.max_reflection_order = 0;
    s.channel.snr_db = 40.0;
    s
}

#[test]
fn stage3_keeps_stage2_horizontal_position() {
    let r = run_once(&short(2.0), StageSet::ALL, 3).unwrap();
    let mut seen = 0;
    for rec in &r.records {
        match (&rec.stage2, &rec.stage3) {
            (Some(a), Some(b)) => {
                assert_eq!(a.xyz_m.x, b.xyz_m.x);
                assert_eq!(a.xyz_m.y, b.xyz_m.y);
                seen += 1;
            }
            (a, b) => assert_eq!(a.is_some(), b.is_some()),
        }
    }
    assert!(seen > 0);
}

#[test]
fn stage_selection_only_changes_stage_columns() {
    let all = run_once(&short(1.5), StageSet::ALL, 5).unwrap();
    let one = run_once(&short(1.5), StageSet::BENCHMARK, 5).unwrap();
    assert_eq!(all.records.len(), one.records.len());
    for (a, b) in all.records.iter().zip(&one.records) {
        assert_eq!(a.stage1, b.stage1);
        assert!(b.stage2.is_none() && b.stage3.is_none());
    }
    assert_eq!(one.summary.len(), 1);
}

#[test]
fn noiseless_hover_is_accurate_to_gdop_millimetres() {
    let at = Vec3::new(2.0, 2.5, 1.5);
    let s = hover(at, 1.0);
    let gdop = compute_dop(&s.beacons, &at).unwrap().gdop;
    let r = run_once(&s, StageSet::BENCHMARK, 1).unwrap();
    assert!(!r.records.is_empty());
    for rec in &r.records {
        assert_eq!(rec.beacons_heard, 4);
        let e = rec.stage1.as_ref().unwrap().error_3d_m;
        // one sample of range quantization is 1 mm at 340 kHz
        assert!(e <= gdop * 1.0e-3, "burst {} error {e} m, gdop {gdop}", rec.burst);
    }
}

fn parse_csv(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn csv_and_json_agree_to_nine_digits() {
    let r = run_once(&short(1.5), StageSet::ALL, 9).unwrap();
    let rows = parse_csv(&run_csv(&r));
    let doc: RunResult = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
    assert_eq!(doc.records.len(), rows.len() - 1);
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    let (ct, c3) = (col("t_s"), col("stage3_err_3d_m"));
    for (row, rec) in rows[1..].iter().zip(&doc.records) {
        assert_eq!(row[ct].parse::<f64>().unwrap(), rec.t_s);
        match &rec.stage3 {
            Some(f) => assert_eq!(row[c3].parse::<f64>().unwrap(), f.error_3d_m),
            None => assert!(row[c3].is_empty()),
        }
    }
    for (orig, back) in r.records.iter().zip(&doc.records) {
        if let (Some(a), Some(b)) = (&orig.stage1, &back.stage1) {
            assert!((a.error_3d_m - b.error_3d_m).abs() <= 5e-9 * a.error_3d_m.abs().max(1e-300));
        }
    }
}

#[test]
fn header_only_csv_for_a_run_without_bursts() {
    // shorter than one burst
    let r = run_once(&short(0.05), StageSet::ALL, 1).unwrap();
    assert!(r.records.is_empty());
    let text = run_csv(&r);
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("burst,t_s,"));
}

#[test]
fn single_trial_campaign_matches_run_once() {
    let base = short(1.5);
    let mut spec = CampaignSpec::new(base.clone(), vec![15.0], 1);
    spec.seed = 21;
    let c = run_campaign(&spec, None).unwrap();
    let direct = run_once(&base_at(&base, 15.0), StageSet::ALL, spec.trial_seed(0)).unwrap();
    assert_eq!(c.trials.len(), 1);
    assert_eq!(c.trials[0].summary, direct.summary);
    let row = &c.summary.rows[0];
    assert_eq!(row.stage, Stage::Stage1);
    assert_eq!(row.mean_3d_m, direct.summary[0].mean_3d_m);
}

fn base_at(s: &RoomScenario, snr_db: f64) -> RoomScenario {
    let mut s = s.clone();
    s.channel.snr_db = snr_db;
    s
}

#[test]
fn snr_order_does_not_change_rows() {
    let base = short(1.0);
    let mut a = CampaignSpec::new(base.clone(), vec![5.0, 25.0], 2);
    a.stages = StageSet::BENCHMARK;
    let mut b = a.clone();
    b.snr_list_db = vec![25.0, 5.0];
    let ra = run_campaign(&a, None).unwrap();
    let rb = run_campaign(&b, None).unwrap();
    assert_eq!(ra.summary.rows[0], rb.summary.rows[1]);
    assert_eq!(ra.summary.rows[1], rb.summary.rows[0]);
    let steps = paired_steps(&ra, &a.snr_list_db, Stage::Stage1);
    let back = paired_steps(&rb, &b.snr_list_db, Stage::Stage1);
    assert_eq!(steps.len(), 1);
    assert!((steps[0].mean_change_m + back[0].mean_change_m).abs() < 1e-12);
}

#[test]
fn unwritable_output_fails_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    // a directory below a regular file cannot be created
    let spec = CampaignSpec::new(short(600.0), vec![10.0], 1000);
    let started = std::time::Instant::now();
    let err = run_campaign(&spec, Some(&blocker.join("out"))).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(started.elapsed().as_secs() < 5);
}

#[test]
fn invalid_campaign_specs_are_rejected() {
    let text = "snr_list_db = [0.0, 5.0, 0.0]\n";
    assert!(CampaignSpec::from_toml(text, "t").unwrap_err().is_validation());
    assert!(CampaignSpec::from_toml("snr_list_db = []\n", "t").unwrap_err().is_validation());
    assert!(CampaignSpec::from_toml("snr_list_db = [1.0]\nn_trials = 0\n", "t")
        .unwrap_err()
        .is_validation());
    assert!(CampaignSpec::from_toml("snr_list_db = [1.0]\nstages = \"2\"\n", "t").is_err());
}
