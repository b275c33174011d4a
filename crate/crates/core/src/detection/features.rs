//! The 18 detection features, grouped into four incremental sets.
//!
//! | set | group     | features |
//! |-----|-----------|----------|
//! | A   | profile   | presence of bio, URL in bio, number of posts, social reputation |
//! | B   | network   | follower/friend ratio, number of followers |
//! | C   | content   | hashtags/tweet, spam words/tweet, tweet length, languages, RTs/tweet, mentions/tweet |
//! | D   | behaviour | unfollow entropy, RT engagement, mention engagement, language overlap, time since last tweet, tweets/day |

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::svm::Matrix;
use crate::error::{Error, Result};
use crate::market::reputation_proxy;
use crate::metrics::{
    content_stats, follower_friend_ratio, language_overlap, mention_engagement, retweet_engagement,
    unfollow_entropy, FollowerFriendRatio,
};
use crate::model::{daily_unfollow_counts, AccountDossier, Dataset, Label, Lexicon, SnapshotSeries, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    A,
    B,
    C,
    D,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [FeatureSet::A, FeatureSet::B, FeatureSet::C, FeatureSet::D];

    fn bit(self) -> u8 {
        1 << self as u8
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub name: &'static str,
    pub set: FeatureSet,
}

const fn spec(name: &'static str, set: FeatureSet) -> FeatureSpec {
    FeatureSpec { name, set }
}

pub const FEATURES: [FeatureSpec; 18] = [
    spec("presence_of_bio", FeatureSet::A),
    spec("url_in_bio", FeatureSet::A),
    spec("number_of_posts", FeatureSet::A),
    spec("social_reputation", FeatureSet::A),
    spec("follower_friend_ratio", FeatureSet::B),
    spec("number_of_followers", FeatureSet::B),
    spec("hashtags_per_tweet", FeatureSet::C),
    spec("spam_words_per_tweet", FeatureSet::C),
    spec("tweet_length", FeatureSet::C),
    spec("number_of_languages", FeatureSet::C),
    spec("retweets_per_tweet", FeatureSet::C),
    spec("mentions_per_tweet", FeatureSet::C),
    spec("unfollow_entropy", FeatureSet::D),
    spec("rt_engagement", FeatureSet::D),
    spec("mention_engagement", FeatureSet::D),
    spec("language_overlap", FeatureSet::D),
    spec("time_since_last_tweet", FeatureSet::D),
    spec("tweets_per_day", FeatureSet::D),
];

pub const N_FEATURES: usize = FEATURES.len();
/// Column of the follower/friend ratio in the full feature layout.
pub const RATIO_COLUMN: usize = 4;

/// A subset of {A, B, C, D}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SetMask(u8);

impl SetMask {
    pub const FULL: SetMask = SetMask(0b1111);

    pub fn new(sets: &[FeatureSet]) -> Self {
        SetMask(sets.iter().fold(0, |m, s| m | s.bit()))
    }

    pub fn contains(self, set: FeatureSet) -> bool {
        self.0 & set.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Columns of the full layout selected by this mask, in layout order.
    pub fn columns(self) -> Vec<usize> {
        (0..N_FEATURES)
            .filter(|&j| self.contains(FEATURES[j].set))
            .collect()
    }

    pub fn dim(self) -> usize {
        self.columns().len()
    }

    pub fn feature_names(self) -> Vec<&'static str> {
        self.columns().into_iter().map(|j| FEATURES[j].name).collect()
    }

    /// `[A], [A,B], ...` up to and including the last set in `self`.
    pub fn incremental_schedule(self) -> Vec<SetMask> {
        let last = FeatureSet::ALL
            .iter()
            .rposition(|s| self.contains(*s))
            .unwrap_or(0);
        (0..=last)
            .map(|k| SetMask::new(&FeatureSet::ALL[..=k]))
            .collect()
    }
}

impl fmt::Display for SetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in FeatureSet::ALL {
            if self.contains(s) {
                write!(f, "{}", s.letter())?;
            }
        }
        Ok(())
    }
}

impl FromStr for SetMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = 0u8;
        for ch in s.trim().chars().filter(|c| !matches!(c, ',' | '{' | '}' | ' ')) {
            let set = match ch.to_ascii_uppercase() {
                'A' => FeatureSet::A,
                'B' => FeatureSet::B,
                'C' => FeatureSet::C,
                'D' => FeatureSet::D,
                other => return Err(Error::InvalidInput(format!("unknown feature set {other:?}"))),
            };
            m |= set.bit();
        }
        if m == 0 {
            return Err(Error::InvalidInput("empty feature set mask".into()));
        }
        Ok(SetMask(m))
    }
}

impl Serialize for SetMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SetMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub account_id: String,
    pub mask: SetMask,
    /// Only the masked-in features, in layout order.
    pub values: Vec<f64>,
    /// The account has followers but no friends; its ratio slot holds the cap.
    pub infinite_ratio: bool,
}

/// Everything extraction needs besides the account itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionContext {
    pub now: Timestamp,
    pub window_secs: f64,
    /// Substitute for an infinite follower/friend ratio.
    pub ratio_cap: f64,
    /// Fill missing reputation scores with the logistic proxy instead of 0.
    pub reputation_proxy: bool,
}

/// Language sets of the accounts a subject may be compared against.
pub type PeerLanguages = HashMap<String, BTreeSet<String>>;

pub fn peer_languages(ds: &Dataset) -> PeerLanguages {
    ds.accounts
        .iter()
        .map(|a| (a.account_id.clone(), a.languages()))
        .collect()
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Extracts the masked feature vector. `series` is required only when the
/// behaviour set is requested.
pub fn extract_features(
    subject: &AccountDossier,
    series: Option<&SnapshotSeries>,
    spam_words: &Lexicon,
    peers: &PeerLanguages,
    ctx: &ExtractionContext,
    mask: SetMask,
) -> Result<FeatureVector> {
    if mask.is_empty() {
        return Err(Error::InvalidInput("empty feature set mask".into()));
    }
    let mut values = Vec::with_capacity(N_FEATURES);
    let ratio = follower_friend_ratio(subject);
    if mask.contains(FeatureSet::A) {
        let reputation = subject.reputation_score.unwrap_or_else(|| {
            if ctx.reputation_proxy {
                reputation_proxy(subject)
            } else {
                0.0
            }
        });
        values.extend([
            flag(subject.bio.as_deref().is_some_and(|b| !b.trim().is_empty())),
            flag(!subject.bio_urls.is_empty()),
            subject.post_count as f64,
            reputation,
        ]);
    }
    if mask.contains(FeatureSet::B) {
        values.push(ratio.finite().unwrap_or(ctx.ratio_cap));
        values.push(subject.follower_count as f64);
    }
    let stats = (mask.contains(FeatureSet::C) || mask.contains(FeatureSet::D))
        .then(|| content_stats(subject, spam_words, ctx.now, ctx.window_secs));
    if mask.contains(FeatureSet::C) {
        let s = stats.expect("computed above");
        values.extend([
            s.hashtags_per_tweet,
            s.spam_words_per_tweet,
            s.mean_tweet_length,
            s.num_languages,
            s.rt_fraction,
            s.mentions_per_tweet,
        ]);
    }
    if mask.contains(FeatureSet::D) {
        let series = series.ok_or_else(|| Error::MissingSeries(subject.account_id.clone()))?;
        let daily: Vec<u64> = daily_unfollow_counts(series)?.into_iter().map(|(_, c)| c).collect();
        let own_langs = subject.languages();
        let friend_langs = subject.friend_ids.iter().filter_map(|f| peers.get(f));
        let s = stats.expect("computed above");
        values.extend([
            unfollow_entropy(&daily)?,
            retweet_engagement(subject, &subject.friend_ids).value,
            mention_engagement(subject, &subject.friend_ids).value,
            language_overlap(&own_langs, friend_langs),
            s.seconds_since_last_tweet,
            s.tweets_per_day,
        ]);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: i });
    }
    Ok(FeatureVector {
        account_id: subject.account_id.clone(),
        mask,
        values,
        infinite_ratio: ratio == FollowerFriendRatio::Infinite,
    })
}

/// Nearest-rank percentile of the finite values; `None` if there are none.
pub fn percentile(values: impl IntoIterator<Item = f64>, p: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Some(v[rank.min(v.len()) - 1])
}

/// Infinite follower/friend ratios are replaced by this percentile of the
/// finite training values.
pub const RATIO_CAP_PERCENTILE: f64 = 99.0;

/// Full 18-column features for every labeled account of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<Label>,
    pub values: Matrix,
    pub infinite_ratio: Vec<bool>,
}

impl FeatureTable {
    /// Context derived from the data: "now" is the latest snapshot and the
    /// window spans all snapshots.
    pub fn context_for(ds: &Dataset) -> ExtractionContext {
        ExtractionContext {
            now: ds.reference_time().unwrap_or_default(),
            window_secs: ds.observation_window_secs(),
            ratio_cap: 0.0,
            reputation_proxy: true,
        }
    }

    pub fn from_dataset(ds: &Dataset) -> Result<FeatureTable> {
        Self::from_dataset_with(ds, &Self::context_for(ds))
    }

    /// Infinite ratios are stored as `ctx.ratio_cap` and flagged, so callers
    /// can re-cap them per training split with [`FeatureTable::capped`].
    pub fn from_dataset_with(ds: &Dataset, ctx: &ExtractionContext) -> Result<FeatureTable> {
        let peers = peer_languages(ds);
        let empty = Lexicon::new();
        let spam = ds.spam_words.as_ref().unwrap_or(&empty);
        let labeled: Vec<(&AccountDossier, Label)> = ds.labeled().collect();
        let extract = |(a, _): &(&AccountDossier, Label)| {
            extract_features(a, ds.series.get(&a.account_id), spam, &peers, ctx, SetMask::FULL)
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Result<FeatureVector>> = {
            use rayon::prelude::*;
            labeled.par_iter().map(extract).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Result<FeatureVector>> = labeled.iter().map(extract).collect();
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        let mut data = Vec::with_capacity(rows.len() * N_FEATURES);
        for r in &rows {
            data.extend_from_slice(&r.values);
        }
        Ok(FeatureTable {
            ids: rows.iter().map(|r| r.account_id.clone()).collect(),
            labels: labeled.iter().map(|(_, l)| *l).collect(),
            values: Matrix::new(rows.len(), N_FEATURES, data),
            infinite_ratio: rows.iter().map(|r| r.infinite_ratio).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Cap for infinite ratios, computed from the finite ratios of `rows`.
    pub fn ratio_cap(&self, rows: &[usize]) -> f64 {
        percentile(
            rows.iter()
                .filter(|&&i| !self.infinite_ratio[i])
                .map(|&i| self.values.get(i, RATIO_COLUMN)),
            RATIO_CAP_PERCENTILE,
        )
        .unwrap_or(1.0)
    }

    /// Rows `rows` restricted to `mask`, with infinite ratios set to `cap`.
    pub fn capped(&self, rows: &[usize], mask: SetMask, cap: f64) -> Matrix {
        let mut m = self.values.select_rows(rows);
        for (k, &i) in rows.iter().enumerate() {
            if self.infinite_ratio[i] {
                m.set(k, RATIO_COLUMN, cap);
            }
        }
        m.select_cols(&mask.columns())
    }

    pub fn labels_of(&self, rows: &[usize]) -> Vec<Label> {
        rows.iter().map(|&i| self.labels[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Snapshot;
    use chrono::{TimeZone, Utc};

    fn t0() -> Timestamp {
        Utc.with_ymd_and_hms(2015, 3, 1, 0, 0, 0).unwrap()
    }

    fn ctx() -> ExtractionContext {
        ExtractionContext {
            now: t0() + chrono::Duration::days(15),
            window_secs: 15.0 * 86_400.0,
            ratio_cap: 5.0,
            reputation_proxy: false,
        }
    }

    fn series() -> SnapshotSeries {
        let snaps = (0..48)
            .map(|h| Snapshot {
                ts: t0() + chrono::Duration::hours(h),
                follower_ids: if h % 2 == 0 { ["a".to_string()].into() } else { BTreeSet::new() },
            })
            .collect();
        SnapshotSeries::new("u", snaps).unwrap()
    }

    #[test]
    fn mask_dimensions() {
        let a = AccountDossier::new("u", t0());
        let peers = PeerLanguages::new();
        let lex = Lexicon::new();
        let v = extract_features(&a, None, &lex, &peers, &ctx(), "A".parse().unwrap()).unwrap();
        assert_eq!(v.values.len(), 4);
        let s = series();
        let v = extract_features(&a, Some(&s), &lex, &peers, &ctx(), SetMask::FULL).unwrap();
        assert_eq!(v.values.len(), 18);
        assert_eq!(SetMask::FULL.dim(), 18);
    }

    #[test]
    fn tweetless_account() {
        let a = AccountDossier::new("u", t0());
        let s = series();
        let v = extract_features(&a, Some(&s), &Lexicon::new(), &PeerLanguages::new(), &ctx(), SetMask::FULL).unwrap();
        assert!(v.values[6..12].iter().all(|x| *x == 0.0));
        assert_eq!(v.values[16], 15.0 * 86_400.0);
        assert_eq!(v.values[17], 0.0);
    }

    #[test]
    fn behaviour_requires_series() {
        let a = AccountDossier::new("u", t0());
        let r = extract_features(&a, None, &Lexicon::new(), &PeerLanguages::new(), &ctx(), "ABCD".parse().unwrap());
        assert!(matches!(r, Err(Error::MissingSeries(_))));
    }

    #[test]
    fn infinite_ratio_takes_the_cap() {
        let mut a = AccountDossier::new("u", t0());
        a.follower_count = 10;
        let v = extract_features(&a, None, &Lexicon::new(), &PeerLanguages::new(), &ctx(), "B".parse().unwrap()).unwrap();
        assert!(v.infinite_ratio);
        assert_eq!(v.values, vec![5.0, 10.0]);
    }

    #[test]
    fn mask_parsing_and_schedule() {
        let m: SetMask = "ABC".parse().unwrap();
        assert_eq!(m.to_string(), "ABC");
        assert_eq!(m.dim(), 12);
        assert!("AX".parse::<SetMask>().is_err());
        assert!("".parse::<SetMask>().is_err());
        let sched: Vec<String> = SetMask::FULL.incremental_schedule().iter().map(|m| m.to_string()).collect();
        assert_eq!(sched, vec!["A", "AB", "ABC", "ABCD"]);
        assert_eq!(serde_json::to_string(&m).unwrap(), "\"ABC\"");
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(v.iter().copied(), 99.0), Some(99.0));
        assert_eq!(percentile([3.0], 99.0), Some(3.0));
        assert_eq!(percentile([f64::INFINITY], 99.0), None);
    }
}
