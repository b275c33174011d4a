use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadowmarket::market::{
    customer_profile_report, empirical_cdf, knee_point, merchant_qos, per_promise_score,
    qos_popularity_report, rank_leaders, retention_report, Knee, LeaderSelection, PopularityResult,
};
use shadowmarket::model::{
    AccountDossier, Merchant, Performance, Promise, Scheme, Snapshot, SnapshotSeries,
};

fn merchant(id: &str, pairs: &[(f64, f64)]) -> Merchant {
    Merchant {
        merchant_id: id.into(),
        schemes: BTreeSet::from([Scheme::Premium]),
        promises: pairs
            .iter()
            .enumerate()
            .map(|(i, (e, _))| Promise {
                promise_id: format!("p{i}"),
                expect: *e,
                unit: String::new(),
            })
            .collect(),
        performances: pairs
            .iter()
            .enumerate()
            .map(|(i, (_, p))| Performance {
                promise_id: format!("p{i}"),
                perform: *p,
            })
            .collect(),
        traffic_rank: 1000,
        promo_tweet_count: 0,
        has_twitter_profile: true,
        package_price_usd: None,
    }
}

#[test]
fn qos_examples() {
    assert_eq!(merchant_qos(&merchant("m", &[(1000.0, 1000.0), (100.0, 100.0)])).unwrap().qos, 1.0);
    let q = merchant_qos(&merchant("m", &[(1000.0, 738.0)])).unwrap().qos;
    assert!((q - 0.6450).abs() < 1e-4);
    // terms 0.5 and 1.5
    let q = merchant_qos(&merchant("m", &[(3.0, 2.0), (1.0, 2.0)])).unwrap().qos;
    assert!((q - 1.0).abs() < 1e-12);
    assert!(per_promise_score(10.0, 0.0).is_err());
}

#[test]
fn knee_examples() {
    let line: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64)).collect();
    assert_eq!(knee_point(&line).unwrap(), Knee::NoKnee);
    let l_shape = [(0.0, 0.0), (0.01, 0.95), (0.25, 0.97), (0.5, 0.98), (1.0, 1.0)];
    assert!(matches!(knee_point(&l_shape).unwrap(), Knee::Point { index: 1, .. }));
}

#[test]
fn knee_of_freemium_shaped_cdf() {
    // 30% of merchants deliver QoS up to 0.1, the rest spread up to 1
    let mut values: Vec<f64> = (1..=30).map(|i| 0.1 * i as f64 / 30.0).collect();
    values.extend((1..=70).map(|i| 0.1 + 0.9 * i as f64 / 70.0));
    let cdf = empirical_cdf(&values);
    let Knee::Point { x, y, .. } = knee_point(&cdf).unwrap() else {
        panic!("expected a knee");
    };
    assert!((x - 0.1).abs() < 0.02 && (y - 0.3).abs() < 0.02, "knee at ({x}, {y})");
}

fn popularity(scores: &[f64]) -> Vec<PopularityResult> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &p)| PopularityResult {
            merchant_id: format!("m{i:02}"),
            alexa_norm: p,
            osn_popularity: p,
            popularity: p,
        })
        .collect()
}

#[test]
fn five_leader_oligopoly() {
    let mut scores = vec![0.95, 0.9, 0.85, 0.8, 0.72];
    scores.extend((0..15).map(|i| 0.5 - i as f64 * 0.03));
    let report = rank_leaders(&popularity(&scores), LeaderSelection::Threshold(0.71)).unwrap();
    assert_eq!(report.leaders, vec!["m00", "m01", "m02", "m03", "m04"]);
    assert!(report.oligopoly);
    let top = rank_leaders(&popularity(&scores), LeaderSelection::TopK(5)).unwrap();
    assert_eq!(top.leaders, report.leaders);

    let flat = rank_leaders(&popularity(&[0.5; 6]), LeaderSelection::TopK(2)).unwrap();
    assert_eq!(flat.gap, Some(0.0));
    assert!(!flat.oligopoly);
    let single = rank_leaders(&popularity(&[0.3]), LeaderSelection::TopK(1)).unwrap();
    assert_eq!(single.gap, None);
}

fn hourly_series(counts: &[usize]) -> SnapshotSeries {
    let t0 = Utc.with_ymd_and_hms(2015, 3, 1, 0, 0, 0).unwrap();
    let snaps = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| Snapshot {
            ts: t0 + Duration::hours(i as i64),
            follower_ids: (0..n).map(|k| format!("f{k}")).collect(),
        })
        .collect();
    SnapshotSeries::new("c", snaps).unwrap()
}

#[test]
fn retention_examples() {
    let growing: Vec<usize> = (0..48).collect();
    assert!(retention_report(&hourly_series(&growing)).unwrap().dips.is_empty());

    let sawtooth: Vec<usize> = (0..48).map(|h| if h % 6 == 5 { 90 } else { 100 }).collect();
    let r = retention_report(&hourly_series(&sawtooth)).unwrap();
    assert_eq!(r.dips.len(), 8);
    assert!(r.dips.iter().all(|d| d.hour_of_day % 6 == 5 && d.drop == 10));

    assert!(retention_report(&hourly_series(&growing[..10])).is_err());
}

#[test]
fn hour_independent_counts_have_small_pcc() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let counts: Vec<usize> = (0..24 * 15).map(|_| 500 + rng.random_range(0..40)).collect();
    let pcc = retention_report(&hourly_series(&counts)).unwrap().pcc_vs_hour.unwrap();
    assert!(pcc.abs() <= 0.1, "pcc {pcc}");
}

#[test]
fn qos_popularity_anchor_rows() {
    let qos = BTreeMap::from([
        ("top".to_string(), 0.40),
        ("best".to_string(), 1.3),
        ("mid".to_string(), 0.8),
    ]);
    let pop = BTreeMap::from([
        ("top".to_string(), 0.95),
        ("best".to_string(), 0.42),
        ("mid".to_string(), 0.6),
    ]);
    let r = qos_popularity_report(&qos, &pop).unwrap();
    let most_popular = r.rows.iter().max_by(|a, b| a.popularity.total_cmp(&b.popularity)).unwrap();
    assert_eq!(most_popular.qos, 0.40);
    let best = r.rows.iter().max_by(|a, b| a.qos.total_cmp(&b.qos)).unwrap();
    assert_eq!(best.popularity, 0.42);
    assert!(r.pcc.unwrap() < 0.0);

    let linear: BTreeMap<String, f64> = (0..5).map(|i| (format!("m{i}"), i as f64)).collect();
    let doubled: BTreeMap<String, f64> = linear.iter().map(|(k, v)| (k.clone(), 2.0 * v + 1.0)).collect();
    assert!((qos_popularity_report(&linear, &doubled).unwrap().pcc.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn customer_fraction_above_threshold() {
    let t = Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap();
    let accounts: Vec<AccountDossier> = (0..10)
        .map(|i| {
            let mut a = AccountDossier::new(format!("c{i}"), t);
            a.reputation_score = Some(if i < 3 { 55.0 } else { 20.0 });
            a.subscriptions = vec!["m1".into()];
            a
        })
        .collect();
    let refs: Vec<&AccountDossier> = accounts.iter().collect();
    let r = customer_profile_report(&refs, &BTreeSet::new(), 40.0, &BTreeSet::new(), false);
    assert!((r.frac_above_threshold - 0.3).abs() < 1e-12);
    assert!(r.top_bio_terms.is_empty());
}
