mod suite;

use std::fs;
use std::io::Write;

use monorl_core::tracking::{
    aggregate_series, keys, open_run, parse_metrics_file, parse_run, MANIFEST_FILE, METRICS_FILE, STATUS_FILE,
    TIMING_FILE,
};
use monorl_core::{Error, Rng};

#[test]
fn hundred_thousand_events_reparse_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = open_run(dir.path(), suite::manifest("bulk", "r")).unwrap();
    for i in 0..100_000u64 {
        let key = if i % 2 == 0 {
            keys::EPISODIC_RETURN
        } else {
            keys::EPISODIC_LENGTH
        };
        run.log_metric(i / 2, key, i as f64 * 0.5).unwrap();
    }
    let path = run.dir().to_path_buf();
    run.close().unwrap();
    let parsed = parse_run(&path).unwrap();
    assert_eq!(parsed.metrics.len(), 100_000);
    for (i, e) in parsed.metrics.iter().enumerate() {
        assert_eq!(e.step, i as u64 / 2);
        assert_eq!(e.value, i as f64 * 0.5);
    }
    assert_eq!(parsed.status.unwrap().total_events, 100_000);
}

#[test]
fn unclosed_run_parses_up_to_flushed_lines_and_skips_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = open_run(dir.path(), suite::manifest("crash", "r")).unwrap();
    for i in 0..250 {
        run.log_metric(i, keys::QF_LOSS, i as f64).unwrap();
    }
    run.flush().unwrap();
    let path = run.dir().to_path_buf();
    std::mem::forget(run);

    let metrics = path.join(METRICS_FILE);
    let mut f = fs::OpenOptions::new().append(true).open(&metrics).unwrap();
    f.write_all(br#"{"step":250,"key":"losses/qf_loss","val"#).unwrap();
    drop(f);

    let parsed = parse_run(&path).unwrap();
    assert!(parsed.status.is_none(), "an unclosed run has no status");
    assert_eq!(parsed.metrics.len(), 250);
    assert_eq!(parsed.metrics.last().unwrap().step, 249);
}

#[test]
fn every_truncation_point_of_a_log_parses_to_a_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = open_run(dir.path(), suite::manifest("trunc", "r")).unwrap();
    for i in 0..20 {
        run.log_metric(i, keys::ENTROPY, 1.0 / (i as f64 + 3.0)).unwrap();
    }
    let path = run.dir().to_path_buf();
    run.close().unwrap();
    let full = fs::read(path.join(METRICS_FILE)).unwrap();
    let all = parse_metrics_file(&path.join(METRICS_FILE)).unwrap();
    let cut = dir.path().join("cut.jsonl");
    for len in 0..=full.len() {
        fs::write(&cut, &full[..len]).unwrap();
        let events = parse_metrics_file(&cut).unwrap_or_else(|e| panic!("cut at {len}: {e}"));
        let complete_lines = full[..len].iter().filter(|&&b| b == b'\n').count();
        assert!(events.len() == complete_lines || events.len() == complete_lines + 1);
        assert_eq!(events[..], all[..events.len()]);
    }
}

#[test]
fn a_bad_line_before_the_end_is_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(METRICS_FILE);
    fs::write(
        &path,
        "{\"step\":0,\"key\":\"losses/qf_loss\",\"value\":1.0,\"wall_time_s\":0.0}\nnot json\n",
    )
    .unwrap();
    assert!(matches!(parse_metrics_file(&path), Err(Error::Corrupted { .. })));
}

#[test]
fn unknown_keys_pass_through() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(METRICS_FILE);
    fs::write(
        &path,
        "{\"step\":3,\"key\":\"custom/thing\",\"value\":2.5,\"wall_time_s\":0.1}\n",
    )
    .unwrap();
    let events = parse_metrics_file(&path).unwrap();
    assert_eq!(events[0].key, "custom/thing");
}

#[test]
fn corrupted_manifest_is_a_hard_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = open_run(dir.path(), suite::manifest("bad", "r")).unwrap();
    let path = run.dir().to_path_buf();
    run.close().unwrap();
    fs::write(path.join(MANIFEST_FILE), "{\"run_id\": 3").unwrap();
    assert!(matches!(parse_run(&path), Err(Error::Corrupted { .. })));
}

#[test]
fn manifest_cannot_be_written_twice() {
    let dir = tempfile::tempdir().unwrap();
    let run = open_run(dir.path(), suite::manifest("imm", "same")).unwrap();
    let path = run.dir().to_path_buf();
    run.close().unwrap();
    let before = fs::read(path.join(MANIFEST_FILE)).unwrap();
    let mut other = suite::manifest("imm", "same");
    other.seed = 99;
    assert!(matches!(open_run(dir.path(), other), Err(Error::AlreadyExists { .. })));
    assert_eq!(fs::read(path.join(MANIFEST_FILE)).unwrap(), before);
}

#[test]
fn wall_clock_metrics_stay_out_of_the_deterministic_log() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = open_run(dir.path(), suite::manifest("sps", "r")).unwrap();
    run.log_metric(1, keys::SPS, 1234.0).unwrap();
    run.log_metric(1, keys::QF_LOSS, 0.5).unwrap();
    let path = run.dir().to_path_buf();
    run.close().unwrap();
    let parsed = parse_run(&path).unwrap();
    assert_eq!(parsed.metrics.len(), 1);
    assert_eq!(parsed.timing.len(), 1);
    assert!(path.join(TIMING_FILE).exists() && path.join(STATUS_FILE).exists());
}

#[test]
fn logging_rejects_bad_events() {
    let dir = tempfile::tempdir().unwrap();
    let mut run = open_run(dir.path(), suite::manifest("rej", "r")).unwrap();
    assert!(run.log_metric(0, keys::QF_LOSS, f64::NAN).is_err());
    assert!(run.log_metric(0, "losses/made_up", 1.0).is_err());
    run.log_metric(5, keys::QF_LOSS, 1.0).unwrap();
    assert!(run.log_metric(4, keys::QF_LOSS, 1.0).is_err());
    run.log_metric(4, keys::ACTOR_LOSS, 1.0).unwrap();
}

#[test]
fn aggregation_ignores_run_order() {
    let mut rng = Rng::new(17);
    for _ in 0..50 {
        let n_runs = 1 + rng.below(6);
        let mut runs: Vec<(String, Vec<(f64, f64)>)> = (0..n_runs)
            .map(|r| {
                let len = 1 + rng.below(30);
                let mut step = 0.0;
                let series = (0..len)
                    .map(|_| {
                        step += rng.below(50) as f64;
                        (step, rng.normal() * 100.0)
                    })
                    .collect();
                (format!("run{r}"), series)
            })
            .collect();
        let reference = aggregate_series(&runs, 25).unwrap();
        for _ in 0..5 {
            rng.shuffle(&mut runs);
            assert_eq!(aggregate_series(&runs, 25).unwrap(), reference);
        }
    }
}
