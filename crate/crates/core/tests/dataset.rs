use std::collections::BTreeSet;
use std::fs;

use chrono::{Duration, TimeZone, Utc};
use shadowmarket::model::{
    daily_unfollow_counts, diff_snapshots, parse_dataset, write_dataset, Snapshot, SnapshotSeries,
};
use shadowmarket::simgen::{generate, perturb_labels, SimConfig};
use shadowmarket::Error;

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn small_config(seed: u64) -> SimConfig {
    let mut cfg = SimConfig::paper_calibrated();
    cfg.seed = seed;
    cfg.window_days = 4;
    cfg.population.customers = 6;
    cfg.population.phony_followers = 40;
    cfg.population.legitimate_users = 60;
    cfg.merchants.freemium = 3;
    cfg.merchants.premium = 4;
    cfg.merchants.leaders = 2;
    cfg
}

#[test]
fn empty_directory_parses_to_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let ds = parse_dataset(dir.path()).unwrap();
    assert!(ds.accounts.is_empty() && ds.merchants.is_empty() && ds.labels.is_empty());
}

#[test]
fn one_account_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("accounts.jsonl"),
        r#"{"account_id":"a1","created_at":"2014-01-01T00:00:00Z","follower_count":3}"#,
    )
    .unwrap();
    let ds = parse_dataset(dir.path()).unwrap();
    assert_eq!(ds.accounts.len(), 1);
    assert_eq!(ds.accounts[0].follower_count, 3);
}

#[test]
fn decreasing_snapshot_timestamps_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("snapshots")).unwrap();
    fs::write(
        dir.path().join("snapshots/a1.jsonl"),
        "{\"ts\":\"2015-03-02T00:00:00Z\",\"follower_ids\":[\"x\"]}\n{\"ts\":\"2015-03-01T00:00:00Z\",\"follower_ids\":[]}\n",
    )
    .unwrap();
    match parse_dataset(dir.path()) {
        Err(Error::Validation(issues)) => {
            assert_eq!(issues.len(), 1);
            assert_eq!(issues[0].line, 2);
            assert!(issues[0].file.ends_with("a1.jsonl"));
        }
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn malformed_and_duplicate_lines_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("accounts.jsonl"),
        concat!(
            "{\"account_id\":\"a1\",\"created_at\":\"2014-01-01T00:00:00Z\"}\n",
            "not json\n",
            "{\"account_id\":\"a1\",\"created_at\":\"2014-01-01T00:00:00Z\"}\n",
        ),
    )
    .unwrap();
    fs::write(dir.path().join("labels.csv"), "account_id,label\na1,phony\n").unwrap();
    let Err(Error::Validation(issues)) = parse_dataset(dir.path()) else {
        panic!("expected validation failure");
    };
    let lines: Vec<usize> = issues.iter().map(|i| i.line).collect();
    assert_eq!(lines, vec![2, 3, 2]);
}

#[test]
fn diff_examples() {
    let d = diff_snapshots(&set(&["a", "b"]), &set(&["a", "b"]));
    assert!(d.gained.is_empty() && d.lost.is_empty());
    let d = diff_snapshots(&set(&["a", "b"]), &set(&["b", "c"]));
    assert_eq!((d.gained, d.lost), (set(&["c"]), set(&["a"])));
    let d = diff_snapshots(&set(&[]), &set(&["x"]));
    assert_eq!((d.gained, d.lost), (set(&["x"]), set(&[])));
}

fn hourly(days: i64, follower_sets: impl Fn(i64) -> BTreeSet<String>) -> SnapshotSeries {
    let t0 = Utc.with_ymd_and_hms(2015, 3, 1, 0, 0, 0).unwrap();
    let snaps = (0..days * 24)
        .map(|h| Snapshot {
            ts: t0 + Duration::hours(h),
            follower_ids: follower_sets(h),
        })
        .collect();
    SnapshotSeries::new("s", snaps).unwrap()
}

#[test]
fn daily_count_examples() {
    let constant = hourly(15, |_| set(&["a", "b"]));
    let counts = daily_unfollow_counts(&constant).unwrap();
    assert_eq!(counts.len(), 15);
    assert!(counts.iter().all(|c| c.1 == 0));

    // "a" is gone from hour 5 of day 3 onwards
    let one = hourly(15, |h| if h >= 3 * 24 + 5 { set(&["b"]) } else { set(&["a", "b"]) });
    let counts: Vec<u64> = daily_unfollow_counts(&one).unwrap().into_iter().map(|c| c.1).collect();
    let mut expected = vec![0; 15];
    expected[3] = 1;
    assert_eq!(counts, expected);

    // lost at hour 10 of day 2, back at hour 12
    let refollow = hourly(5, |h| if (58..60).contains(&h) { set(&["b"]) } else { set(&["a", "b"]) });
    let counts: Vec<u64> = daily_unfollow_counts(&refollow).unwrap().into_iter().map(|c| c.1).collect();
    assert_eq!(counts, vec![0, 0, 1, 0, 0]);

    let single = hourly(1, |_| set(&["a"]));
    let short = SnapshotSeries::new("s", single.snapshots[..1].to_vec()).unwrap();
    assert!(matches!(daily_unfollow_counts(&short), Err(Error::InsufficientData(_))));
}

#[test]
fn generated_dataset_round_trips() {
    let (ds, _) = generate(&small_config(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    let back = parse_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    let again = tempfile::tempdir().unwrap();
    write_dataset(&back, again.path()).unwrap();
    for name in ["accounts.jsonl", "merchants.jsonl", "labels.csv"] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(again.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn generated_series_follow_the_cadence() {
    let cfg = small_config(9);
    let (ds, _) = generate(&cfg).unwrap();
    for s in ds.series.values() {
        let step = if ds.account(&s.subject_id).is_some_and(|a| a.is_customer()) {
            cfg.customer_cadence_hours
        } else {
            cfg.follower_cadence_hours
        };
        assert!(s
            .snapshots
            .windows(2)
            .all(|w| w[1].ts - w[0].ts == Duration::hours(i64::from(step))));
    }
}

#[test]
fn different_seeds_differ() {
    let (a, _) = generate(&small_config(1)).unwrap();
    let (b, _) = generate(&small_config(2)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn label_noise_flips_exact_count() {
    let (ds, _) = generate(&small_config(4)).unwrap();
    let n = ds.labels.len();
    let (same, flipped) = perturb_labels(&ds, 0.0, 1).unwrap();
    assert!(flipped.is_empty());
    assert_eq!(same.labels, ds.labels);
    let (noisy, flipped) = perturb_labels(&ds, 0.1, 1).unwrap();
    assert_eq!(flipped.len(), n / 10);
    let changed = ds.labels.iter().filter(|(k, v)| noisy.labels[*k] != **v).count();
    assert_eq!(changed, n / 10);
    assert!(perturb_labels(&ds, 0.6, 1).is_err());
}
