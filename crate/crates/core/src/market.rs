//! Merchant-side analytics: quality of service, popularity and market
//! leaders, follower retention of customers, and customer profiling.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{pearson, tokenize};
use crate::model::{AccountDossier, Lexicon, Merchant, SnapshotSeries, Timestamp};

/// One promise's contribution to QoS: `1 - (expect - perform) / perform`.
/// Overdelivery yields values above 1.
pub fn per_promise_score(expect: f64, perform: f64) -> Result<f64> {
    if !(perform > 0.0) || !perform.is_finite() {
        return Err(Error::UndefinedPerformance(perform));
    }
    Ok(1.0 - (expect - perform) / perform)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosResult {
    pub merchant_id: String,
    pub per_promise_terms: Vec<(String, f64)>,
    pub qos: f64,
}

/// Equal-weight mean of the per-promise terms over every promise that has a
/// measured performance.
pub fn merchant_qos(merchant: &Merchant) -> Result<QosResult> {
    let mut terms = Vec::new();
    for promise in &merchant.promises {
        if let Some(p) = merchant
            .performances
            .iter()
            .find(|p| p.promise_id == promise.promise_id)
        {
            terms.push((
                promise.promise_id.clone(),
                per_promise_score(promise.expect, p.perform)?,
            ));
        }
    }
    if terms.is_empty() {
        return Err(Error::InsufficientData(format!(
            "merchant {} has no promise with a measured performance",
            merchant.merchant_id
        )));
    }
    let qos = terms.iter().map(|(_, t)| t).sum::<f64>() / terms.len() as f64;
    Ok(QosResult {
        merchant_id: merchant.merchant_id.clone(),
        per_promise_terms: terms,
        qos,
    })
}

/// `1 - rank / max_rank` over the supplied merchant set.
pub fn alexa_norm(ranks: &BTreeMap<String, u64>) -> Result<BTreeMap<String, f64>> {
    let max = *ranks
        .values()
        .max()
        .ok_or_else(|| Error::InsufficientData("no traffic ranks".into()))?;
    if let Some((id, _)) = ranks.iter().find(|(_, r)| **r < 1) {
        return Err(Error::InvalidInput(format!("traffic rank of {id} must be >= 1")));
    }
    Ok(ranks
        .iter()
        .map(|(id, r)| (id.clone(), 1.0 - *r as f64 / max as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsnPopularity {
    pub scores: BTreeMap<String, f64>,
    /// Set when every promotional-tweet count was zero.
    pub all_zero: bool,
}

/// Promotional tweet counts normalised by the maximum count.
pub fn osn_popularity(tweet_counts: &BTreeMap<String, u64>) -> Result<OsnPopularity> {
    let max = *tweet_counts
        .values()
        .max()
        .ok_or_else(|| Error::InsufficientData("no promotional tweet counts".into()))?;
    if max == 0 {
        log::warn!("all promotional tweet counts are zero");
        return Ok(OsnPopularity {
            scores: tweet_counts.keys().map(|k| (k.clone(), 0.0)).collect(),
            all_zero: true,
        });
    }
    Ok(OsnPopularity {
        scores: tweet_counts
            .iter()
            .map(|(id, c)| (id.clone(), *c as f64 / max as f64))
            .collect(),
        all_zero: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityResult {
    pub merchant_id: String,
    pub alexa_norm: f64,
    pub osn_popularity: f64,
    pub popularity: f64,
}

/// Mean of the two normalised components, one result per merchant in
/// `alexa` order.
pub fn merchant_popularity(
    alexa: &BTreeMap<String, f64>,
    osn: &BTreeMap<String, f64>,
) -> Result<Vec<PopularityResult>> {
    if let Some(id) = osn.keys().find(|k| !alexa.contains_key(*k)) {
        return Err(Error::InvalidInput(format!("merchant {id} has no traffic score")));
    }
    alexa
        .iter()
        .map(|(id, &a)| {
            let o = *osn
                .get(id)
                .ok_or_else(|| Error::InvalidInput(format!("merchant {id} has no OSN score")))?;
            Ok(PopularityResult {
                merchant_id: id.clone(),
                alexa_norm: a,
                osn_popularity: o,
                popularity: (a + o) / 2.0,
            })
        })
        .collect()
}

/// Popularity for every merchant in the slice.
pub fn popularity_for(merchants: &[Merchant]) -> Result<Vec<PopularityResult>> {
    let ranks = merchants
        .iter()
        .map(|m| (m.merchant_id.clone(), m.traffic_rank))
        .collect();
    let tweets = merchants
        .iter()
        .map(|m| (m.merchant_id.clone(), m.promo_tweet_count))
        .collect();
    merchant_popularity(&alexa_norm(&ranks)?, &osn_popularity(&tweets)?.scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Knee {
    Point { x: f64, y: f64, index: usize },
    /// Every point lies on the endpoint chord.
    NoKnee,
}

/// The curve point farthest from the chord joining the first and last
/// points. Ties go to the smaller x.
pub fn knee_point(curve: &[(f64, f64)]) -> Result<Knee> {
    if curve.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "knee detection needs 3 points, got {}",
            curve.len()
        )));
    }
    if curve.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput("curve contains non-finite values".into()));
    }
    if curve.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidInput("curve x values must be strictly increasing".into()));
    }
    let (x0, y0) = curve[0];
    let (x1, y1) = curve[curve.len() - 1];
    let (dx, dy) = (x1 - x0, y1 - y0);
    let chord = dx.hypot(dy);
    let mut best = (0usize, 0.0f64);
    for (i, &(x, y)) in curve.iter().enumerate().skip(1).take(curve.len() - 2) {
        let d = (dx * (y - y0) - dy * (x - x0)).abs() / chord;
        if d > best.1 {
            best = (i, d);
        }
    }
    // relative to the curve's extent, so the answer is scale-free
    let extent = dx.abs().max(
        curve
            .iter()
            .map(|p| (p.1 - y0).abs())
            .fold(0.0, f64::max),
    );
    if best.1 <= 1e-12 * extent.max(f64::MIN_POSITIVE) {
        return Ok(Knee::NoKnee);
    }
    let (x, y) = curve[best.0];
    Ok(Knee::Point { x, y, index: best.0 })
}

/// Empirical CDF of `values` as `(value, fraction <= value)` points with
/// distinct x values.
pub fn empirical_cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => out.push((*x, f)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "snake_case")]
pub enum LeaderSelection {
    TopK(usize),
    Threshold(f64),
}

/// Leaders must lead the rest by at least this much popularity to call the
/// market an oligopoly.
pub const OLIGOPOLY_MIN_GAP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderReport {
    pub selection: LeaderSelection,
    /// All merchants, most popular first.
    pub ranking: Vec<(String, f64)>,
    pub leaders: Vec<String>,
    /// Popularity of the last leader minus that of the first non-leader.
    pub gap: Option<f64>,
    /// Share of the summed popularity held by the leaders.
    pub leader_share: f64,
    pub oligopoly: bool,
}

pub fn rank_leaders(popularities: &[PopularityResult], selection: LeaderSelection) -> Result<LeaderReport> {
    if popularities.is_empty() {
        return Err(Error::InsufficientData("no merchants to rank".into()));
    }
    let mut ranking: Vec<(String, f64)> = popularities
        .iter()
        .map(|p| (p.merchant_id.clone(), p.popularity))
        .collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let k = match selection {
        LeaderSelection::TopK(k) => k.min(ranking.len()),
        LeaderSelection::Threshold(t) => ranking.iter().take_while(|(_, p)| *p > t).count(),
    };
    let gap = (k > 0 && k < ranking.len()).then(|| ranking[k - 1].1 - ranking[k].1);
    let total: f64 = ranking.iter().map(|(_, p)| p).sum();
    let leader_sum: f64 = ranking[..k].iter().map(|(_, p)| p).sum();
    Ok(LeaderReport {
        selection,
        leaders: ranking[..k].iter().map(|(id, _)| id.clone()).collect(),
        gap,
        leader_share: if total > 0.0 { leader_sum / total } else { 0.0 },
        oligopoly: gap.is_some_and(|g| g >= OLIGOPOLY_MIN_GAP),
        ranking,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipEvent {
    pub ts: Timestamp,
    pub hour_of_day: u32,
    pub drop: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub subject_id: String,
    pub counts: Vec<(Timestamp, u64)>,
    pub dips: Vec<DipEvent>,
    /// Correlation of follower count with hour of day; `None` when either
    /// series is constant.
    pub pcc_vs_hour: Option<f64>,
}

pub const MIN_RETENTION_SNAPSHOTS: usize = 24;

pub fn retention_report(series: &SnapshotSeries) -> Result<RetentionReport> {
    use chrono::Timelike;
    if series.snapshots.len() < MIN_RETENTION_SNAPSHOTS {
        return Err(Error::InsufficientData(format!(
            "retention needs {MIN_RETENTION_SNAPSHOTS} snapshots, {} has {}",
            series.subject_id,
            series.snapshots.len()
        )));
    }
    let counts: Vec<(Timestamp, u64)> = series
        .snapshots
        .iter()
        .map(|s| (s.ts, s.follower_ids.len() as u64))
        .collect();
    let dips = counts
        .windows(2)
        .filter(|w| w[1].1 < w[0].1)
        .map(|w| DipEvent {
            ts: w[1].0,
            hour_of_day: w[1].0.hour(),
            drop: w[0].1 - w[1].1,
        })
        .collect();
    let ys: Vec<f64> = counts.iter().map(|c| c.1 as f64).collect();
    let hours: Vec<f64> = counts.iter().map(|c| f64::from(c.0.hour())).collect();
    Ok(RetentionReport {
        subject_id: series.subject_id.clone(),
        pcc_vs_hour: pearson(&ys, &hours).ok(),
        counts,
        dips,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosPopularityRow {
    pub merchant_id: String,
    pub qos: f64,
    pub popularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosPopularityReport {
    pub rows: Vec<QosPopularityRow>,
    pub pcc: Option<f64>,
}

pub fn qos_popularity_report(
    qos: &BTreeMap<String, f64>,
    popularity: &BTreeMap<String, f64>,
) -> Result<QosPopularityReport> {
    let rows: Vec<QosPopularityRow> = qos
        .iter()
        .filter_map(|(id, &q)| {
            popularity.get(id).map(|&p| QosPopularityRow {
                merchant_id: id.clone(),
                qos: q,
                popularity: p,
            })
        })
        .collect();
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "QoS/popularity report needs 2 shared merchants, got {}",
            rows.len()
        )));
    }
    let qs: Vec<f64> = rows.iter().map(|r| r.qos).collect();
    let ps: Vec<f64> = rows.iter().map(|r| r.popularity).collect();
    Ok(QosPopularityReport {
        pcc: pearson(&qs, &ps).ok(),
        rows,
    })
}

/// Default reputation threshold: the average score of a social media user.
pub const DEFAULT_REPUTATION_THRESHOLD: f64 = 40.0;

fn stop_words() -> &'static BTreeSet<String> {
    static WORDS: OnceLock<BTreeSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| crate::model::parse_lexicon(include_str!("../data/stopwords.txt")))
}

/// Whether `url` points into a blacklisted host (or any subdomain of one),
/// or starts with a blacklisted URL prefix.
pub fn url_is_blacklisted(url: &str, blacklist: &Lexicon) -> bool {
    let lower = url.to_lowercase();
    let host = url::Url::parse(&lower)
        .ok()
        .and_then(|u| u.host_str().map(|h| h.trim_start_matches("www.").to_string()));
    blacklist.iter().any(|entry| {
        if entry.contains('/') {
            return lower.starts_with(entry.as_str());
        }
        match &host {
            Some(h) => h == entry || h.ends_with(&format!(".{entry}")),
            None => false,
        }
    })
}

/// URLs an account has published: those in its bio plus http(s) tokens in its tweets.
pub fn posted_urls(account: &AccountDossier) -> impl Iterator<Item = &str> {
    account.bio_urls.iter().map(String::as_str).chain(
        account
            .tweets
            .iter()
            .flat_map(|t| t.text.split_whitespace())
            .filter(|w| w.starts_with("http://") || w.starts_with("https://")),
    )
}

/// Reputation stand-in for accounts without a supplied score. This is a
/// logistic function of log-followers and the listed flag, scaled to
/// `[0, 100]`. It is not an influence score, only a monotone proxy.
pub fn reputation_proxy(account: &AccountDossier) -> f64 {
    let z = 0.9 * (1.0 + account.follower_count as f64).ln() + if account.listed { 1.0 } else { 0.0 } - 6.0;
    100.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscriptionRow {
    pub merchant_id: String,
    pub customers: usize,
    pub above_threshold: usize,
    pub verified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerProfile {
    pub n_customers: usize,
    pub n_scored: usize,
    pub reputation_threshold: f64,
    pub frac_above_threshold: f64,
    pub frac_with_blacklisted_url: f64,
    pub top_bio_terms: Vec<(String, usize)>,
    pub verified_count: usize,
    pub subscriptions: Vec<SubscriptionRow>,
    /// Among customers above the threshold, the fraction subscribed to a leader.
    pub above_threshold_leader_rate: Option<f64>,
    /// Among scored customers at or below the threshold, the same fraction.
    pub below_threshold_leader_rate: Option<f64>,
}

pub const TOP_BIO_TERMS: usize = 25;

/// Profiles customers. Reputation fractions are taken over customers with a
/// score (`use_proxy` fills missing scores from [`reputation_proxy`]).
pub fn customer_profile_report(
    customers: &[&AccountDossier],
    url_blacklist: &Lexicon,
    reputation_threshold: f64,
    leaders: &BTreeSet<String>,
    use_proxy: bool,
) -> CustomerProfile {
    let score = |a: &AccountDossier| {
        a.reputation_score
            .or_else(|| use_proxy.then(|| reputation_proxy(a)))
    };
    let n = customers.len();
    let scored: Vec<(&AccountDossier, f64)> = customers
        .iter()
        .filter_map(|a| score(a).map(|s| (*a, s)))
        .collect();
    let above = scored.iter().filter(|(_, s)| *s > reputation_threshold).count();
    let blacklisted = customers
        .iter()
        .filter(|a| posted_urls(a).any(|u| url_is_blacklisted(u, url_blacklist)))
        .count();

    let mut terms: BTreeMap<String, usize> = BTreeMap::new();
    for bio in customers.iter().filter_map(|a| a.bio.as_deref()) {
        for tok in tokenize(bio) {
            if tok.len() > 1 && !stop_words().contains(&tok) && !tok.chars().all(|c| c.is_numeric()) {
                *terms.entry(tok).or_default() += 1;
            }
        }
    }
    let mut top_bio_terms: Vec<(String, usize)> = terms.into_iter().collect();
    top_bio_terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    top_bio_terms.truncate(TOP_BIO_TERMS);

    let mut rows: BTreeMap<&str, SubscriptionRow> = BTreeMap::new();
    for a in customers {
        let is_above = score(a).is_some_and(|s| s > reputation_threshold);
        let merchants: BTreeSet<&String> = a.subscriptions.iter().collect();
        for m in merchants {
            let row = rows.entry(m.as_str()).or_insert_with(|| SubscriptionRow {
                merchant_id: m.clone(),
                customers: 0,
                above_threshold: 0,
                verified: 0,
            });
            row.customers += 1;
            row.above_threshold += usize::from(is_above);
            row.verified += usize::from(a.verified);
        }
    }

    let leader_rate = |pred: &dyn Fn(f64) -> bool| -> Option<f64> {
        let group: Vec<&AccountDossier> = scored.iter().filter(|(_, s)| pred(*s)).map(|(a, _)| *a).collect();
        if group.is_empty() || leaders.is_empty() {
            return None;
        }
        let subscribed = group
            .iter()
            .filter(|a| a.subscriptions.iter().any(|m| leaders.contains(m)))
            .count();
        Some(subscribed as f64 / group.len() as f64)
    };

    CustomerProfile {
        n_customers: n,
        n_scored: scored.len(),
        reputation_threshold,
        frac_above_threshold: ratio(above, scored.len()),
        frac_with_blacklisted_url: ratio(blacklisted, n),
        top_bio_terms,
        verified_count: customers.iter().filter(|a| a.verified).count(),
        subscriptions: rows.into_values().collect(),
        above_threshold_leader_rate: leader_rate(&|s| s > reputation_threshold),
        below_threshold_leader_rate: leader_rate(&|s| s <= reputation_threshold),
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Performance, Promise, Scheme, Snapshot};
    use chrono::{TimeZone, Utc};

    fn merchant(id: &str, pairs: &[(f64, f64)]) -> Merchant {
        Merchant {
            merchant_id: id.into(),
            schemes: [Scheme::Premium].into(),
            promises: pairs
                .iter()
                .enumerate()
                .map(|(i, (e, _))| Promise {
                    promise_id: format!("p{i}"),
                    expect: *e,
                    unit: "followers".into(),
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
            traffic_rank: 1,
            promo_tweet_count: 0,
            has_twitter_profile: false,
            package_price_usd: None,
        }
    }

    #[test]
    fn per_promise_scores() {
        assert_eq!(per_promise_score(500.0, 500.0).unwrap(), 1.0);
        assert!((per_promise_score(1000.0, 738.0).unwrap() - 0.6450).abs() < 1e-4);
        // overdelivery: 2 - 1000/2095
        assert!((per_promise_score(1000.0, 2095.0).unwrap() - 1.522673).abs() < 1e-6);
        assert!(per_promise_score(1000.0, 2095.0).unwrap() > 1.0);
        assert!(per_promise_score(1000.0, 0.0).is_err());
        assert!(per_promise_score(1000.0, -3.0).is_err());
    }

    #[test]
    fn qos_is_mean_of_terms() {
        assert_eq!(merchant_qos(&merchant("m", &[(10.0, 10.0), (3.0, 3.0)])).unwrap().qos, 1.0);
        // terms 0.5 and 1.5
        let m = merchant("m", &[(3.0, 2.0), (1.0, 2.0)]);
        let r = merchant_qos(&m).unwrap();
        assert_eq!(r.per_promise_terms[0].1, 0.5);
        assert_eq!(r.per_promise_terms[1].1, 1.5);
        assert_eq!(r.qos, 1.0);
        let single = merchant_qos(&merchant("m", &[(1000.0, 738.0)])).unwrap();
        assert!((single.qos - 0.6450).abs() < 1e-4);
    }

    #[test]
    fn qos_without_performances_is_an_error() {
        let mut m = merchant("m", &[(1.0, 1.0)]);
        m.performances.clear();
        assert!(matches!(merchant_qos(&m), Err(Error::InsufficientData(_))));
    }

    fn map<T: Copy>(xs: &[(&str, T)]) -> BTreeMap<String, T> {
        xs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn alexa_norm_cases() {
        let n = alexa_norm(&map(&[("A", 100), ("B", 200)])).unwrap();
        assert_eq!(n["A"], 0.5);
        assert_eq!(n["B"], 0.0);
        assert_eq!(alexa_norm(&map(&[("A", 7)])).unwrap()["A"], 0.0);
        assert!(alexa_norm(&BTreeMap::new()).is_err());
        assert!(alexa_norm(&map(&[("A", 0)])).is_err());
    }

    #[test]
    fn osn_popularity_cases() {
        let o = osn_popularity(&map(&[("A", 50), ("B", 200), ("C", 0)])).unwrap();
        assert_eq!(o.scores["A"], 0.25);
        assert_eq!(o.scores["B"], 1.0);
        assert_eq!(o.scores["C"], 0.0);
        assert!(!o.all_zero);
        let z = osn_popularity(&map(&[("A", 0), ("B", 0)])).unwrap();
        assert!(z.all_zero);
        assert!(z.scores.values().all(|v| *v == 0.0));
    }

    #[test]
    fn popularity_mean() {
        let p = merchant_popularity(&map(&[("A", 0.40), ("B", 1.0)]), &map(&[("A", 0.44), ("B", 1.0)])).unwrap();
        assert!((p[0].popularity - 0.42).abs() < 1e-12);
        assert_eq!(p[1].popularity, 1.0);
        assert!(merchant_popularity(&map(&[("A", 0.4)]), &map(&[("B", 0.4)])).is_err());
        assert!(merchant_popularity(&map(&[("A", 0.4)]), &BTreeMap::new()).is_err());
    }

    #[test]
    fn knee_on_straight_line_is_absent() {
        let line: Vec<_> = (0..10).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert_eq!(knee_point(&line).unwrap(), Knee::NoKnee);
    }

    #[test]
    fn knee_on_l_curve_is_the_corner() {
        let curve = [(0.0, 0.0), (0.01, 0.95), (0.25, 0.96), (0.5, 0.98), (1.0, 1.0)];
        assert_eq!(
            knee_point(&curve).unwrap(),
            Knee::Point {
                x: 0.01,
                y: 0.95,
                index: 1
            }
        );
    }

    #[test]
    fn knee_input_errors() {
        assert!(knee_point(&[(0.0, 0.0), (1.0, 1.0)]).is_err());
        assert!(knee_point(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn knee_tie_prefers_smaller_x() {
        // symmetric tent: points 1 and 3 are equally far from the chord
        let curve = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.5), (3.0, 1.0), (4.0, 0.0)];
        assert!(matches!(knee_point(&curve).unwrap(), Knee::Point { index: 1, .. }));
    }

    fn pops(xs: &[f64]) -> Vec<PopularityResult> {
        xs.iter()
            .enumerate()
            .map(|(i, p)| PopularityResult {
                merchant_id: format!("m{i:02}"),
                alexa_norm: *p,
                osn_popularity: *p,
                popularity: *p,
            })
            .collect()
    }

    #[test]
    fn leaders_equal_popularity() {
        let r = rank_leaders(&pops(&[0.5; 6]), LeaderSelection::TopK(2)).unwrap();
        assert_eq!(r.gap, Some(0.0));
        assert!(!r.oligopoly);
    }

    #[test]
    fn leaders_five_above_threshold() {
        let p = pops(&[0.3, 0.9, 0.75, 0.5, 0.8, 0.72, 0.85, 0.1, 0.45]);
        for sel in [LeaderSelection::Threshold(0.71), LeaderSelection::TopK(5)] {
            let r = rank_leaders(&p, sel).unwrap();
            assert_eq!(r.leaders, vec!["m01", "m06", "m04", "m02", "m05"]);
            assert!(r.oligopoly);
            assert!((r.gap.unwrap() - 0.22).abs() < 1e-12);
        }
    }

    #[test]
    fn leaders_single_merchant() {
        let r = rank_leaders(&pops(&[0.4]), LeaderSelection::TopK(5)).unwrap();
        assert_eq!(r.leaders, vec!["m00"]);
        assert_eq!(r.gap, None);
        assert!(!r.oligopoly);
    }

    fn series(counts: &[usize]) -> SnapshotSeries {
        let t0 = Utc.with_ymd_and_hms(2015, 3, 1, 0, 0, 0).unwrap();
        let snaps = counts
            .iter()
            .enumerate()
            .map(|(h, &c)| Snapshot {
                ts: t0 + chrono::Duration::hours(h as i64),
                follower_ids: (0..c).map(|i| format!("f{i}")).collect(),
            })
            .collect();
        SnapshotSeries::new("c", snaps).unwrap()
    }

    #[test]
    fn retention_growth_has_no_dips() {
        let r = retention_report(&series(&(0..48).collect::<Vec<_>>())).unwrap();
        assert!(r.dips.is_empty());
        assert_eq!(r.counts.len(), 48);
    }

    #[test]
    fn retention_sawtooth_dips() {
        // grows by 2 each hour, drops by 5 every 6th hour
        let mut counts = vec![50usize];
        for h in 1..48 {
            let prev = counts[h - 1];
            counts.push(if h % 6 == 0 { prev - 5 } else { prev + 2 });
        }
        let r = retention_report(&series(&counts)).unwrap();
        let hours: Vec<u32> = r.dips.iter().map(|d| d.hour_of_day).collect();
        assert_eq!(hours, vec![6, 12, 18, 0, 6, 12, 18]);
        assert!(r.dips.iter().all(|d| d.drop == 5));
    }

    #[test]
    fn retention_requires_a_day() {
        assert!(retention_report(&series(&[1; 23])).is_err());
    }

    #[test]
    fn qos_popularity_linear() {
        let q = map(&[("a", 0.1), ("b", 0.2), ("c", 0.3)]);
        let p = map(&[("a", 0.2), ("b", 0.4), ("c", 0.6), ("z", 0.9)]);
        let r = qos_popularity_report(&q, &p).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!((r.pcc.unwrap() - 1.0).abs() < 1e-12);
        assert!(qos_popularity_report(&map(&[("a", 0.1)]), &p).is_err());
    }

    #[test]
    fn blacklist_matching() {
        let bl: Lexicon = ["spam.example".to_string(), "http://bad.org/promo".to_string()].into();
        assert!(url_is_blacklisted("http://spam.example/x", &bl));
        assert!(url_is_blacklisted("https://www.SPAM.example", &bl));
        assert!(url_is_blacklisted("https://cdn.spam.example/a", &bl));
        assert!(!url_is_blacklisted("https://notspam.example", &bl));
        assert!(url_is_blacklisted("http://bad.org/promo/1", &bl));
        assert!(!url_is_blacklisted("http://bad.org/home", &bl));
    }

    fn customer(id: usize, rep: Option<f64>) -> AccountDossier {
        let mut a = AccountDossier::new(format!("c{id}"), Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap());
        a.reputation_score = rep;
        a.subscriptions = vec!["m1".into()];
        a
    }

    #[test]
    fn customers_above_threshold() {
        let cs: Vec<_> = (0..10).map(|i| customer(i, Some(if i < 3 { 55.0 } else { 20.0 }))).collect();
        let refs: Vec<&AccountDossier> = cs.iter().collect();
        let r = customer_profile_report(&refs, &Lexicon::new(), 40.0, &BTreeSet::new(), false);
        assert!((r.frac_above_threshold - 0.30).abs() < 1e-12);
        assert!(r.top_bio_terms.is_empty());
        assert_eq!(r.subscriptions[0].customers, 10);
        assert_eq!(r.subscriptions[0].above_threshold, 3);

        let all: Vec<_> = (0..4).map(|i| customer(i, Some(90.0))).collect();
        let refs: Vec<&AccountDossier> = all.iter().collect();
        let r = customer_profile_report(&refs, &Lexicon::new(), 40.0, &BTreeSet::new(), false);
        assert_eq!(r.frac_above_threshold, 1.0);
    }

    #[test]
    fn customer_bio_terms_and_urls() {
        let mut a = customer(0, None);
        a.bio = Some("Music lover and the DJ. music!".into());
        a.bio_urls = vec!["http://spam.example/me".into()];
        let mut b = customer(1, None);
        b.bio = Some("DJ".into());
        b.subscriptions = vec!["m2".into(), "m2".into()];
        let bl: Lexicon = ["spam.example".to_string()].into();
        let leaders: BTreeSet<String> = ["m2".to_string()].into();
        let r = customer_profile_report(&[&a, &b], &bl, 40.0, &leaders, true);
        assert_eq!(r.top_bio_terms[0], ("dj".to_string(), 2));
        assert_eq!(r.top_bio_terms[1], ("music".to_string(), 2));
        assert!(r.top_bio_terms.iter().all(|(t, _)| t != "and" && t != "the"));
        assert_eq!(r.frac_with_blacklisted_url, 0.5);
        assert_eq!(r.n_scored, 2);
        assert_eq!(r.subscriptions.len(), 2);
        assert_eq!(r.subscriptions[1].customers, 1);
        assert_eq!(r.below_threshold_leader_rate, Some(0.5));
    }

    #[test]
    fn proxy_is_bounded_and_monotone() {
        let mut a = customer(0, None);
        let mut last = -1.0;
        for f in [0u64, 10, 100, 1000, 100_000] {
            a.follower_count = f;
            let s = reputation_proxy(&a);
            assert!((0.0..=100.0).contains(&s) && s > last);
            last = s;
        }
    }
}
