//! Per-account behavioural measures and the numeric helpers shared by the
//! market analyses.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AccountDossier, AccountId, Lexicon, Timestamp};

/// Combined coverage × share score for retweets or mentions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementScore {
    pub value: f64,
    pub n_peers: usize,
    pub total_actions: usize,
}

impl EngagementScore {
    fn from_counts(distinct_hit: usize, n_peers: usize, hits: usize, total_actions: usize) -> Self {
        let value = if n_peers == 0 || total_actions == 0 {
            0.0
        } else {
            (distinct_hit as f64 / n_peers as f64) * (hits as f64 / total_actions as f64)
        };
        EngagementScore {
            value,
            n_peers,
            total_actions,
        }
    }
}

/// Engagement over a stream of action targets: the fraction of friends hit at
/// least once times the fraction of actions that hit a friend.
fn engagement<'a>(
    targets: impl Iterator<Item = &'a AccountId>,
    friend_ids: &BTreeSet<AccountId>,
) -> EngagementScore {
    let mut total = 0;
    let mut hits = 0;
    let mut distinct = BTreeSet::new();
    for t in targets {
        total += 1;
        if friend_ids.contains(t) {
            hits += 1;
            distinct.insert(t);
        }
    }
    EngagementScore::from_counts(distinct.len(), friend_ids.len(), hits, total)
}

pub fn retweet_engagement(subject: &AccountDossier, friend_ids: &BTreeSet<AccountId>) -> EngagementScore {
    let targets = subject
        .tweets
        .iter()
        .filter(|t| t.is_retweet)
        .filter_map(|t| t.retweeted_of.as_ref());
    engagement(targets, friend_ids)
}

pub fn mention_engagement(subject: &AccountDossier, friend_ids: &BTreeSet<AccountId>) -> EngagementScore {
    let targets = subject.tweets.iter().flat_map(|t| t.mentions.iter());
    engagement(targets, friend_ids)
}

/// Fraction of peers sharing at least one language with the subject.
pub fn language_overlap<'a>(
    subject_langs: &BTreeSet<String>,
    peer_langs: impl IntoIterator<Item = &'a BTreeSet<String>>,
) -> f64 {
    let (mut peers, mut shared) = (0usize, 0usize);
    for p in peer_langs {
        peers += 1;
        if !p.is_disjoint(subject_langs) {
            shared += 1;
        }
    }
    if peers == 0 {
        0.0
    } else {
        shared as f64 / peers as f64
    }
}

/// Shannon entropy of the per-day unfollow distribution, normalised by
/// `log2(T)` so that the result lies in `[0, 1]`.
pub fn unfollow_entropy(daily_counts: &[u64]) -> Result<f64> {
    if daily_counts.is_empty() {
        return Err(Error::InsufficientData("no days to compute entropy over".into()));
    }
    let total: u64 = daily_counts.iter().sum();
    let days = daily_counts.len();
    if total == 0 || days == 1 {
        return Ok(0.0);
    }
    let total = total as f64;
    let h: f64 = daily_counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    Ok((h / (days as f64).log2()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum FollowerFriendRatio {
    Finite(f64),
    /// Followers but no friends.
    Infinite,
}

impl FollowerFriendRatio {
    pub fn finite(self) -> Option<f64> {
        match self {
            FollowerFriendRatio::Finite(v) => Some(v),
            FollowerFriendRatio::Infinite => None,
        }
    }
}

pub fn follower_friend_ratio(subject: &AccountDossier) -> FollowerFriendRatio {
    match (subject.follower_count, subject.friend_count) {
        (0, 0) => FollowerFriendRatio::Finite(0.0),
        (_, 0) => FollowerFriendRatio::Infinite,
        (f, g) => FollowerFriendRatio::Finite(f as f64 / g as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub sigma: f64,
    pub x_min: f64,
    pub n: usize,
}

pub const MIN_POWER_LAW_SAMPLES: usize = 10;

/// Continuous maximum-likelihood power-law fit with `x_min` fixed at the
/// sample minimum.
pub fn fit_power_law(samples: &[f64]) -> Result<PowerLawFit> {
    if samples.len() < MIN_POWER_LAW_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs {MIN_POWER_LAW_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "power-law samples must be positive and finite, got {bad}"
        )));
    }
    let x_min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let log_sum: f64 = samples.iter().map(|x| (x / x_min).ln()).sum();
    if log_sum <= 0.0 {
        return Err(Error::InvalidInput("all power-law samples are equal".into()));
    }
    let n = samples.len();
    let alpha = 1.0 + n as f64 / log_sum;
    Ok(PowerLawFit {
        alpha,
        sigma: (alpha - 1.0) / (n as f64).sqrt(),
        x_min,
        n,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!(
            "pearson: series lengths differ ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData("pearson needs at least 2 pairs".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("xs"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("ys"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Number of lexicon hits in `text`. Entries match whole tokens only;
/// multi-word entries match consecutive token runs.
pub fn count_lexicon_hits(text: &str, lexicon: &Lexicon) -> usize {
    if lexicon.is_empty() {
        return 0;
    }
    let tokens: Vec<String> = tokenize(text).collect();
    let mut hits = 0;
    for entry in lexicon {
        let phrase: Vec<String> = tokenize(entry).collect();
        if phrase.is_empty() || phrase.len() > tokens.len() {
            continue;
        }
        hits += tokens.windows(phrase.len()).filter(|w| *w == phrase.as_slice()).count();
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContentStats {
    pub hashtags_per_tweet: f64,
    pub spam_words_per_tweet: f64,
    pub mean_tweet_length: f64,
    pub num_languages: f64,
    pub rt_fraction: f64,
    pub mentions_per_tweet: f64,
    pub seconds_since_last_tweet: f64,
    pub tweets_per_day: f64,
}

/// Content statistics over the subject's tweets as of `now`.
///
/// `window_secs` is the observation window: tweetless accounts report it as
/// their time since last tweet, and tweet rates are taken over it.
pub fn content_stats(
    subject: &AccountDossier,
    spam_lexicon: &Lexicon,
    now: Timestamp,
    window_secs: f64,
) -> ContentStats {
    let tweets = &subject.tweets;
    if tweets.is_empty() {
        return ContentStats {
            seconds_since_last_tweet: window_secs,
            ..ContentStats::default()
        };
    }
    let n = tweets.len() as f64;
    let sum = |f: &dyn Fn(&crate::model::TweetRecord) -> usize| -> f64 {
        tweets.iter().map(f).sum::<usize>() as f64
    };
    let languages: BTreeSet<&String> = tweets.iter().flat_map(|t| t.languages.iter()).collect();
    let last = tweets.iter().map(|t| t.timestamp).max().expect("non-empty");
    ContentStats {
        hashtags_per_tweet: sum(&|t| t.hashtags.len()) / n,
        spam_words_per_tweet: sum(&|t| count_lexicon_hits(&t.text, spam_lexicon)) / n,
        mean_tweet_length: sum(&|t| t.text.chars().count()) / n,
        num_languages: languages.len() as f64,
        rt_fraction: sum(&|t| usize::from(t.is_retweet)) / n,
        mentions_per_tweet: sum(&|t| t.mentions.len()) / n,
        seconds_since_last_tweet: ((now - last).num_seconds() as f64).max(0.0),
        tweets_per_day: n / (window_secs / 86_400.0).max(1.0),
    }
}
