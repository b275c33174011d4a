//! Seeded synthetic follower markets with ground truth.
//!
//! Populations:
//!
//! * merchants with freemium/premium schemes, promises and measured
//!   performance, traffic ranks and promotional tweet counts; a configurable
//!   number of them are market leaders;
//! * customers who subscribe to merchants (unlabeled); a few are tracked
//!   hourly, their delivered followers rotating away and back;
//! * phony followers (labeled suspicious) whose behaviour is driven by a
//!   latent merchant-control level `z ~ U(0,1)`: more control means
//!   unfollows spread over more days and a lower reputation;
//! * legitimate users (labeled legitimate).
//!
//! Every entity draws from its own RNG derived from the config seed, so the
//! output is a pure function of the config.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    AccountDossier, Dataset, Label, Lexicon, Merchant, Performance, Promise, Scheme, Snapshot, SnapshotSeries,
    Timestamp, TweetRecord,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MerchantConfig {
    pub freemium: usize,
    pub premium: usize,
    pub leaders: usize,
    /// Followers promised per package.
    pub package_size: f64,
    pub freemium_delivered: [f64; 2],
    pub premium_delivered: [f64; 2],
    pub promised_followers_per_hour: f64,
    pub followers_per_hour: [f64; 2],
    /// Fraction of delivered followers still present at the end of the window.
    pub retention: [f64; 2],
    pub leader_traffic_rank: [u64; 2],
    pub other_traffic_rank: [u64; 2],
    pub leader_promo_tweets: [u64; 2],
    pub other_promo_tweets: [u64; 2],
    pub package_cost_usd: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationCounts {
    pub customers: usize,
    pub phony_followers: usize,
    pub legitimate_users: usize,
}

/// Tweeting and profile habits shared by both labeled populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentProfile {
    pub tweets: [usize; 2],
    pub posts: [u64; 2],
    pub bio_probability: f64,
    pub bio_url_probability: f64,
    /// Weights for using 1, 2, 3, ... languages.
    pub language_count_weights: Vec<f64>,
    pub retweet_fraction: [f64; 2],
    /// Share of retweets and mentions aimed at listed friends.
    pub friend_share: [f64; 2],
    pub mentions_per_tweet: f64,
    pub hashtags_per_tweet: f64,
    pub spam_words_per_tweet: f64,
    pub words_per_tweet: [usize; 2],
    /// Days before the end of the window of the latest tweet.
    pub last_tweet_lag_days: [f64; 2],
    pub listed_friends: [usize; 2],
    pub tracked_followers: [usize; 2],
    pub account_age_days: [i64; 2],
    pub listed_probability: f64,
    /// Probability that a listed friend speaks the account's main language.
    pub same_language_friends: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhonyProfile {
    pub content: ContentProfile,
    /// Follower/friend ratio ~ power law with this exponent above `ratio_x_min`.
    pub ratio_alpha: f64,
    pub ratio_x_min: f64,
    pub friend_count: [u64; 2],
    /// reputation = intercept - slope * z + N(0, noise), clamped to [0, 100].
    pub reputation_intercept: f64,
    pub reputation_slope: f64,
    pub reputation_noise: f64,
    pub unfollows_per_active_day: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegitProfile {
    pub content: ContentProfile,
    /// Log-normal follower/friend ratio parameters (of ln ratio).
    pub ratio_log_mean: f64,
    pub ratio_log_sd: f64,
    pub friend_count: [u64; 2],
    pub reputation_mean: f64,
    pub reputation_sd: f64,
    /// Weights for unfollowing on 0, 1, 2, ... distinct days.
    pub active_day_weights: Vec<f64>,
    pub unfollows_per_active_day: [u64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomerProfile {
    pub reputation_mean: f64,
    pub reputation_sd: f64,
    pub verified_probability: f64,
    pub blacklisted_url_probability: f64,
    /// Probability of buying from a leader, for reputations above / at or below 40.
    pub leader_probability_high: f64,
    pub leader_probability_low: f64,
    pub tracked: usize,
    pub delivered_followers: [usize; 2],
    /// Per-hour probability that a present delivered follower unfollows.
    pub hourly_unfollow: f64,
    /// Per-hour probability that an unfollowed one follows back.
    pub hourly_refollow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageWeight {
    pub code: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub start: Timestamp,
    pub window_days: u32,
    pub follower_cadence_hours: u32,
    pub customer_cadence_hours: u32,
    pub population: PopulationCounts,
    pub merchants: MerchantConfig,
    pub customers: CustomerProfile,
    pub phony: PhonyProfile,
    pub legitimate: LegitProfile,
    pub languages: Vec<LanguageWeight>,
    pub spam_words: Vec<String>,
    pub url_blacklist: Vec<String>,
    /// Targets the generated phony population should meet, checked by tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationTargets>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTargets {
    pub high_entropy: f64,
    pub min_high_entropy_share: f64,
    pub low_reputation: f64,
    pub min_low_reputation_share: f64,
    pub ratio_alpha: f64,
    pub ratio_alpha_tolerance: f64,
    pub entropy_reputation_pcc: f64,
    pub pcc_tolerance: f64,
}

pub const PAPER_CALIBRATED_NAME: &str = "paper_calibrated.json";
const PAPER_CALIBRATED: &str = include_str!("../presets/paper_calibrated.json");

impl SimConfig {
    /// The shipped preset matching the published market statistics.
    pub fn paper_calibrated() -> SimConfig {
        serde_json::from_str(PAPER_CALIBRATED).expect("shipped preset parses")
    }

    pub fn from_json(text: &str) -> Result<SimConfig> {
        let c: SimConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleConfig(m));
        if self.window_days < 1 {
            return bad("observation window must be at least one day".into());
        }
        if self.population.phony_followers > 0 && self.window_days < 2 {
            return bad("unfollow entropy needs a window of at least 2 days".into());
        }
        for (name, h) in [
            ("follower_cadence_hours", self.follower_cadence_hours),
            ("customer_cadence_hours", self.customer_cadence_hours),
        ] {
            if h == 0 || 24 % h != 0 {
                return bad(format!("{name} must divide 24, got {h}"));
            }
        }
        if self.merchants.leaders > self.merchants.freemium + self.merchants.premium {
            return bad("more leaders than merchants".into());
        }
        if self.population.customers > 0 && self.merchants.freemium + self.merchants.premium == 0 {
            return bad("customers need at least one merchant".into());
        }
        if self.customers.tracked > self.population.customers {
            return bad("more tracked customers than customers".into());
        }
        if self.languages.is_empty() || self.languages.iter().any(|l| !(l.weight >= 0.0)) {
            return bad("language weights must be non-empty and non-negative".into());
        }
        if !(self.phony.ratio_alpha > 1.0 && self.phony.ratio_x_min > 0.0) {
            return bad("power-law ratio needs alpha > 1 and x_min > 0".into());
        }
        let probs = [
            self.customers.verified_probability,
            self.customers.blacklisted_url_probability,
            self.customers.leader_probability_high,
            self.customers.leader_probability_low,
            self.customers.hourly_unfollow,
            self.customers.hourly_refollow,
            self.phony.content.bio_probability,
            self.phony.content.bio_url_probability,
            self.phony.content.listed_probability,
            self.phony.content.same_language_friends,
            self.legitimate.content.bio_probability,
            self.legitimate.content.bio_url_probability,
            self.legitimate.content.listed_probability,
            self.legitimate.content.same_language_friends,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        let ranges_f = [
            self.merchants.freemium_delivered,
            self.merchants.premium_delivered,
            self.merchants.followers_per_hour,
            self.merchants.retention,
            self.merchants.package_cost_usd,
            self.phony.content.retweet_fraction,
            self.phony.content.friend_share,
            self.phony.content.last_tweet_lag_days,
            self.legitimate.content.retweet_fraction,
            self.legitimate.content.friend_share,
            self.legitimate.content.last_tweet_lag_days,
        ];
        if ranges_f.iter().any(|[lo, hi]| !(lo <= hi) || *lo < 0.0) {
            return bad("ranges must be non-negative with lo <= hi".into());
        }
        if self.merchants.retention[0] <= 0.0 || self.merchants.freemium_delivered[0] <= 0.0
            || self.merchants.premium_delivered[0] <= 0.0
            || self.merchants.followers_per_hour[0] <= 0.0
        {
            return bad("measured performances must be positive".into());
        }
        for c in [&self.phony.content, &self.legitimate.content] {
            if c.language_count_weights.is_empty() || c.language_count_weights.iter().all(|w| *w <= 0.0) {
                return bad("language count weights need a positive entry".into());
            }
            if c.tweets[0] > c.tweets[1] || c.listed_friends[0] > c.listed_friends[1] {
                return bad("count ranges must have lo <= hi".into());
            }
            if c.tracked_followers[0] == 0 {
                return bad("tracked follower sets must be non-empty".into());
            }
        }
        if self.legitimate.active_day_weights.len() > self.window_days as usize + 1 {
            return bad("legitimate active-day weights exceed the window".into());
        }
        Ok(())
    }

    fn span_end(&self) -> Timestamp {
        self.start + Duration::days(i64::from(self.window_days))
    }
}

/// What the generator planted, for checking estimators against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub leaders: Vec<String>,
    /// Latent merchant-control level of each phony follower.
    pub control: BTreeMap<String, f64>,
    /// Planted per-day unfollow counts of every labeled account.
    pub planted_unfollows: BTreeMap<String, Vec<u64>>,
    pub flipped_labels: Vec<String>,
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

fn mix(mut x: u64) -> u64 {
    // splitmix64 finaliser
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// RNG for entity `index` of population `tag`.
fn entity_rng(seed: u64, tag: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ mix(tag)).wrapping_add(index as u64)))
}

const TAG_MERCHANT: u64 = 1;
const TAG_CUSTOMER: u64 = 2;
const TAG_PHONY: u64 = 3;
const TAG_LEGIT: u64 = 4;
const TAG_LAYOUT: u64 = 5;
const TAG_FLIP: u64 = 6;

fn uniform_f(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn uniform_u(rng: &mut impl Rng, [lo, hi]: [u64; 2]) -> u64 {
    rng.random_range(lo..=hi.max(lo))
}

fn uniform_usize(rng: &mut impl Rng, [lo, hi]: [usize; 2]) -> usize {
    rng.random_range(lo..=hi.max(lo))
}

fn weighted_index(rng: &mut impl Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn poisson(rng: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0)
}

const WORDS: &[&str] = &[
    "hoy", "mañana", "amor", "vida", "today", "love", "life", "music", "game", "news", "photo", "video",
    "friends", "weekend", "happy", "night", "team", "world", "day", "party", "coffee", "travel", "city", "song",
];
const HASHTAGS: &[&str] = &["tbt", "follow", "music", "love", "teamfollowback", "instagood", "news", "futbol", "fun"];
const BIO_TERMS: &[&str] = &[
    "music", "artist", "dj", "producer", "love", "life", "official", "business", "entrepreneur", "model",
    "singer", "actor", "fan", "god", "blogger", "photographer", "marketing", "designer", "youtuber", "writer",
];
const BIO_FILLER: &[&str] = &["the", "and", "of", "my", "i", "a", "for", "de", "la", "y"];
const CLEAN_DOMAINS: &[&str] = &["instagram.com", "youtube.com", "facebook.com", "soundcloud.com", "myband.net"];

struct Builder<'c> {
    cfg: &'c SimConfig,
    lang_weights: Vec<f64>,
}

/// Per-account plan shared between the dossier and its snapshot series.
struct LabeledPlan {
    main_language: usize,
    languages: Vec<usize>,
}

impl<'c> Builder<'c> {
    fn language_set(&self, rng: &mut impl Rng, weights: &[f64]) -> LabeledPlan {
        let count = weighted_index(rng, weights) + 1;
        let main = weighted_index(rng, &self.lang_weights);
        let mut langs = vec![main];
        let n_langs = self.cfg.languages.len();
        while langs.len() < count.min(n_langs) {
            let l = weighted_index(rng, &self.lang_weights);
            if !langs.contains(&l) {
                langs.push(l);
            }
        }
        LabeledPlan {
            main_language: main,
            languages: langs,
        }
    }

    fn code(&self, l: usize) -> String {
        self.cfg.languages[l].code.clone()
    }

    fn merchants(&self) -> (Vec<Merchant>, Vec<String>) {
        let m = &self.cfg.merchants;
        let n = m.freemium + m.premium;
        let mut layout = entity_rng(self.cfg.seed, TAG_LAYOUT, 0);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut layout);
        let leader_set: BTreeSet<usize> = order.iter().take(m.leaders).copied().collect();
        let mut merchants = Vec::with_capacity(n);
        for i in 0..n {
            let mut rng = entity_rng(self.cfg.seed, TAG_MERCHANT, i);
            let premium = i >= m.freemium;
            let leader = leader_set.contains(&i);
            let delivered = uniform_f(
                &mut rng,
                if premium {
                    m.premium_delivered
                } else {
                    m.freemium_delivered
                },
            );
            let promises = vec![
                Promise {
                    promise_id: "followers".into(),
                    expect: m.package_size,
                    unit: "followers".into(),
                },
                Promise {
                    promise_id: "delivery_rate".into(),
                    expect: m.promised_followers_per_hour,
                    unit: "followers/hour".into(),
                },
                Promise {
                    promise_id: "retention".into(),
                    expect: 1.0,
                    unit: "fraction".into(),
                },
            ];
            let performances = vec![
                Performance {
                    promise_id: "followers".into(),
                    perform: delivered.round(),
                },
                Performance {
                    promise_id: "delivery_rate".into(),
                    perform: uniform_f(&mut rng, m.followers_per_hour).round(),
                },
                Performance {
                    promise_id: "retention".into(),
                    perform: (uniform_f(&mut rng, m.retention) * 1000.0).round() / 1000.0,
                },
            ];
            let (rank, tweets) = if leader {
                (
                    uniform_u(&mut rng, m.leader_traffic_rank),
                    uniform_u(&mut rng, m.leader_promo_tweets),
                )
            } else {
                (
                    uniform_u(&mut rng, m.other_traffic_rank),
                    uniform_u(&mut rng, m.other_promo_tweets),
                )
            };
            merchants.push(Merchant {
                merchant_id: format!("m{i:03}"),
                schemes: [if premium { Scheme::Premium } else { Scheme::Freemium }].into(),
                promises,
                performances,
                traffic_rank: rank.max(1),
                promo_tweet_count: tweets,
                has_twitter_profile: leader || rng.random_bool(0.6),
                package_price_usd: Some((uniform_f(&mut rng, m.package_cost_usd) * 100.0).round() / 100.0),
            });
        }
        // the top leader defines the maximum promotional reach
        if let Some(&top) = order.first().filter(|_| m.leaders > 0) {
            merchants[top].promo_tweet_count = m.leader_promo_tweets[1];
        }
        let leaders = order[..m.leaders].iter().map(|&i| merchants[i].merchant_id.clone()).collect();
        (merchants, leaders)
    }

    fn bio(&self, rng: &mut impl Rng) -> String {
        let n = rng.random_range(2..=5);
        let mut words = Vec::new();
        for _ in 0..n {
            words.push(*BIO_TERMS.choose(rng).expect("non-empty"));
            if rng.random_bool(0.4) {
                words.push(*BIO_FILLER.choose(rng).expect("non-empty"));
            }
        }
        words.join(" ")
    }

    fn customers(&self, merchants: &[Merchant], leaders: &[String], phony_ids: &[String]) -> (Vec<AccountDossier>, Vec<SnapshotSeries>) {
        let cp = &self.cfg.customers;
        let leader_set: BTreeSet<&String> = leaders.iter().collect();
        let others: Vec<&String> = merchants
            .iter()
            .map(|m| &m.merchant_id)
            .filter(|id| !leader_set.contains(id))
            .collect();
        let rep_dist = Normal::new(cp.reputation_mean, cp.reputation_sd.max(1e-9)).expect("finite");
        let mut accounts = Vec::new();
        let mut series = Vec::new();
        for i in 0..self.cfg.population.customers {
            let mut rng = entity_rng(self.cfg.seed, TAG_CUSTOMER, i);
            let id = format!("c{i:04}");
            let created = self.cfg.start - Duration::days(rng.random_range(60..2500));
            let mut a = AccountDossier::new(id.clone(), created);
            let rep = rep_dist.sample(&mut rng).clamp(0.0, 100.0);
            a.reputation_score = Some((rep * 100.0).round() / 100.0);
            a.verified = rng.random_bool(cp.verified_probability);
            if rng.random_bool(0.8) {
                a.bio = Some(self.bio(&mut rng));
            }
            if rng.random_bool(cp.blacklisted_url_probability) && !self.cfg.url_blacklist.is_empty() {
                let d = self.cfg.url_blacklist.choose(&mut rng).expect("non-empty");
                a.bio_urls.push(format!("http://{d}/u/{id}"));
            } else if rng.random_bool(0.5) {
                let d = CLEAN_DOMAINS.choose(&mut rng).expect("non-empty");
                a.bio_urls.push(format!("https://{d}/{id}"));
            }
            let p_leader = if rep > 40.0 {
                cp.leader_probability_high
            } else {
                cp.leader_probability_low
            };
            let mut subs = BTreeSet::new();
            let n_subs = rng.random_range(1..=2);
            for _ in 0..n_subs {
                let pick = if !leaders.is_empty() && (others.is_empty() || rng.random_bool(p_leader)) {
                    leaders.choose(&mut rng).expect("non-empty")
                } else {
                    *others.choose(&mut rng).expect("non-empty")
                };
                subs.insert(pick.clone());
            }
            a.subscriptions = subs.into_iter().collect();
            let lang = weighted_index(&mut rng, &self.lang_weights);
            a.post_count = rng.random_range(100..20_000);
            a.friend_count = rng.random_range(100..2000);
            a.listed = rng.random_bool(0.3);
            for k in 0..rng.random_range(3..10) {
                a.tweets.push(TweetRecord {
                    timestamp: self.cfg.start + Duration::hours(i64::from(self.cfg.window_days) * 24 * k / 10),
                    text: format!("{} {}", WORDS[(i + k as usize) % WORDS.len()], WORDS[(i * 7 + 3) % WORDS.len()]),
                    hashtags: vec![],
                    mentions: vec![],
                    is_retweet: false,
                    retweeted_of: None,
                    languages: [self.code(lang)].into(),
                });
            }
            let delivered_n = uniform_usize(&mut rng, cp.delivered_followers).min(phony_ids.len());
            let delivered: BTreeSet<String> = phony_ids.choose_multiple(&mut rng, delivered_n).cloned().collect();
            a.follower_count = rng.random_range(50..3000) + delivered.len() as u64;
            a.follower_ids = delivered.clone();
            if i < cp.tracked {
                series.push(self.customer_series(&mut rng, &id, &delivered));
            }
            accounts.push(a);
        }
        (accounts, series)
    }

    /// Hourly follower sets of a tracked customer: delivered followers keep
    /// unfollowing and following back, independent of the hour.
    fn customer_series(&self, rng: &mut impl Rng, id: &str, delivered: &BTreeSet<String>) -> SnapshotSeries {
        let cp = &self.cfg.customers;
        let step = i64::from(self.cfg.customer_cadence_hours);
        let n = i64::from(self.cfg.window_days) * 24 / step;
        let mut present: BTreeSet<String> = delivered.clone();
        let mut away: Vec<String> = Vec::new();
        let mut snaps = Vec::with_capacity(n as usize);
        for t in 0..n {
            if t > 0 {
                let mut back = Vec::new();
                away.retain(|f| {
                    if rng.random_bool(cp.hourly_refollow) {
                        back.push(f.clone());
                        false
                    } else {
                        true
                    }
                });
                let leaving: Vec<String> = present
                    .iter()
                    .filter(|_| rng.random_bool(cp.hourly_unfollow))
                    .cloned()
                    .collect();
                for f in leaving {
                    present.remove(&f);
                    away.push(f);
                }
                present.extend(back);
            }
            snaps.push(Snapshot {
                ts: self.cfg.start + Duration::hours(t * step),
                follower_ids: present.clone(),
            });
        }
        SnapshotSeries {
            subject_id: id.to_string(),
            snapshots: snaps,
        }
    }

    fn tweets(
        &self,
        rng: &mut impl Rng,
        profile: &ContentProfile,
        plan: &LabeledPlan,
        friends: &[String],
        strangers: &[String],
    ) -> Vec<TweetRecord> {
        let n = uniform_usize(rng, profile.tweets);
        let end = self.cfg.span_end();
        let lag = Duration::seconds((uniform_f(rng, profile.last_tweet_lag_days) * 86_400.0) as i64);
        let last = end - lag - Duration::seconds(1);
        let span_secs = i64::from(self.cfg.window_days) * 86_400;
        let rt_fraction = uniform_f(rng, profile.retweet_fraction);
        let friend_share = uniform_f(rng, profile.friend_share);
        let mut times: Vec<Timestamp> = (0..n)
            .map(|k| if k == 0 { last } else { last - Duration::seconds(rng.random_range(0..span_secs)) })
            .collect();
        times.sort();
        let pick_target = |rng: &mut dyn rand::RngCore| -> String {
            if !friends.is_empty() && rng.random_bool(friend_share) {
                friends.choose(rng).expect("non-empty").clone()
            } else {
                strangers.choose(rng).expect("non-empty").clone()
            }
        };
        let spam = &self.cfg.spam_words;
        times
            .into_iter()
            .map(|ts| {
                let is_retweet = rng.random_bool(rt_fraction);
                let lang = *plan.languages.choose(rng).expect("non-empty");
                let mut words: Vec<String> = (0..uniform_usize(rng, profile.words_per_tweet))
                    .map(|_| WORDS.choose(rng).expect("non-empty").to_string())
                    .collect();
                for _ in 0..poisson(rng, profile.spam_words_per_tweet) {
                    if let Some(w) = spam.choose(rng) {
                        words.push(w.clone());
                    }
                }
                let hashtags: Vec<String> = (0..poisson(rng, profile.hashtags_per_tweet))
                    .map(|_| HASHTAGS.choose(rng).expect("non-empty").to_string())
                    .collect();
                let mentions: Vec<String> = (0..poisson(rng, profile.mentions_per_tweet))
                    .map(|_| pick_target(rng))
                    .collect();
                let retweeted_of = is_retweet.then(|| pick_target(rng));
                let mut text = String::new();
                if let Some(src) = &retweeted_of {
                    text.push_str(&format!("RT @{src}: "));
                }
                text.push_str(&words.join(" "));
                for h in &hashtags {
                    text.push_str(&format!(" #{h}"));
                }
                for m in &mentions {
                    text.push_str(&format!(" @{m}"));
                }
                TweetRecord {
                    timestamp: ts,
                    text,
                    hashtags,
                    mentions,
                    is_retweet,
                    retweeted_of,
                    languages: [self.code(lang)].into(),
                }
            })
            .collect()
    }

    /// Follower-set snapshots that lose exactly `daily[d]` followers on day
    /// `d`; each lost follower comes back at the next snapshot.
    fn rotation_series(
        &self,
        rng: &mut impl Rng,
        id: &str,
        base: &BTreeSet<String>,
        daily: &[u64],
    ) -> SnapshotSeries {
        let step = i64::from(self.cfg.follower_cadence_hours);
        let per_day = (24 / step) as usize;
        let n = daily.len() * per_day;
        // removal slots: day 0 cannot use its first snapshot
        let mut removals = vec![0u64; n];
        for (d, &c) in daily.iter().enumerate() {
            let first = if d == 0 { 1 } else { 0 };
            let slots: Vec<usize> = (d * per_day + first..(d + 1) * per_day).collect();
            for _ in 0..c {
                removals[*slots.choose(rng).expect("cadence leaves a slot")] += 1;
            }
        }
        let mut present = base.clone();
        let mut returning: Vec<String> = Vec::new();
        let mut snaps = Vec::with_capacity(n);
        for (t, &r) in removals.iter().enumerate() {
            let candidates: Vec<String> = present.iter().cloned().collect();
            let leaving: Vec<String> = candidates
                .choose_multiple(rng, (r as usize).min(candidates.len()))
                .cloned()
                .collect();
            for f in &leaving {
                present.remove(f);
            }
            present.extend(returning.drain(..));
            returning = leaving;
            snaps.push(Snapshot {
                ts: self.cfg.start + Duration::hours(t as i64 * step),
                follower_ids: present.clone(),
            });
        }
        SnapshotSeries {
            subject_id: id.to_string(),
            snapshots: snaps,
        }
    }

    fn spread_unfollows(&self, rng: &mut impl Rng, active_days: usize, per_day: [u64; 2]) -> Vec<u64> {
        let t = self.cfg.window_days as usize;
        let mut daily = vec![0u64; t];
        let days: Vec<usize> = (0..t).collect();
        for &d in days.choose_multiple(rng, active_days.min(t)) {
            daily[d] = uniform_u(rng, per_day).max(1);
        }
        daily
    }
}

fn pick_friends(
    rng: &mut impl Rng,
    plan: &LabeledPlan,
    pool: &[(String, usize)],
    count: usize,
    same_language: f64,
) -> Vec<String> {
    let same: Vec<&String> = pool.iter().filter(|(_, l)| *l == plan.main_language).map(|(id, _)| id).collect();
    let mut out = BTreeSet::new();
    let mut guard = 0;
    while out.len() < count.min(pool.len()) && guard < count * 20 {
        guard += 1;
        let id = if !same.is_empty() && rng.random_bool(same_language) {
            *same.choose(rng).expect("non-empty")
        } else {
            &pool.choose(rng).expect("non-empty").0
        };
        out.insert(id.clone());
    }
    out.into_iter().collect()
}

/// Generates a complete dataset plus the ground truth it was planted with.
pub fn generate(cfg: &SimConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let b = Builder {
        cfg,
        lang_weights: cfg.languages.iter().map(|l| l.weight).collect(),
    };
    let pop = &cfg.population;
    let phony_ids: Vec<String> = (0..pop.phony_followers).map(|i| format!("p{i:04}")).collect();
    let legit_ids: Vec<String> = (0..pop.legitimate_users).map(|i| format!("u{i:04}")).collect();

    let (merchants, leaders) = b.merchants();
    let (customers, customer_series) = b.customers(&merchants, &leaders, &phony_ids);

    // language plans first, so friend choice can depend on them
    let phony_plans: Vec<(ChaCha8Rng, LabeledPlan)> = (0..pop.phony_followers)
        .map(|i| {
            let mut rng = entity_rng(cfg.seed, TAG_PHONY, i);
            let plan = b.language_set(&mut rng, &cfg.phony.content.language_count_weights);
            (rng, plan)
        })
        .collect();
    let legit_plans: Vec<(ChaCha8Rng, LabeledPlan)> = (0..pop.legitimate_users)
        .map(|i| {
            let mut rng = entity_rng(cfg.seed, TAG_LEGIT, i);
            let plan = b.language_set(&mut rng, &cfg.legitimate.content.language_count_weights);
            (rng, plan)
        })
        .collect();
    let customer_pool: Vec<(String, usize)> = customers
        .iter()
        .map(|c| {
            let lang = c.tweets.first().and_then(|t| t.languages.iter().next()).cloned().unwrap_or_default();
            let l = cfg.languages.iter().position(|x| x.code == lang).unwrap_or(0);
            (c.account_id.clone(), l)
        })
        .collect();
    let legit_pool: Vec<(String, usize)> = legit_ids
        .iter()
        .zip(&legit_plans)
        .map(|(id, (_, p))| (id.clone(), p.main_language))
        .collect();
    let strangers: Vec<String> = (0..200).map(|i| format!("x{i:03}")).collect();

    let mut truth = GroundTruth {
        seed: cfg.seed,
        leaders: leaders.clone(),
        control: BTreeMap::new(),
        planted_unfollows: BTreeMap::new(),
        flipped_labels: Vec::new(),
    };
    let mut ds = Dataset {
        merchants,
        spam_words: Some(cfg.spam_words.iter().map(|w| w.to_lowercase()).collect::<Lexicon>()),
        url_blacklist: Some(cfg.url_blacklist.iter().map(|w| w.to_lowercase()).collect::<Lexicon>()),
        ..Dataset::default()
    };
    for s in customer_series {
        ds.series.insert(s.subject_id.clone(), s);
    }
    ds.accounts.extend(customers);

    let t = cfg.window_days as usize;
    let ph = &cfg.phony;
    let ratio_pareto = |rng: &mut ChaCha8Rng| {
        let u: f64 = rng.random();
        ph.ratio_x_min * (1.0 - u).powf(-1.0 / (ph.ratio_alpha - 1.0))
    };
    let rep_noise = Normal::new(0.0, ph.reputation_noise.max(1e-9)).expect("finite");
    let friend_pool = if customer_pool.is_empty() { &legit_pool } else { &customer_pool };
    for (i, (mut rng, plan)) in phony_plans.into_iter().enumerate() {
        let id = phony_ids[i].clone();
        let c = &ph.content;
        let z: f64 = rng.random();
        let active = (1 + (z * t as f64) as usize).min(t);
        let daily = b.spread_unfollows(&mut rng, active, ph.unfollows_per_active_day);
        let mut a = AccountDossier::new(id.clone(), cfg.start - Duration::days(uniform_i(&mut rng, c.account_age_days)));
        fill_profile(&mut rng, &mut a, c, &b);
        a.reputation_score = Some(
            ((ph.reputation_intercept - ph.reputation_slope * z + rep_noise.sample(&mut rng)).clamp(0.0, 100.0) * 100.0)
                .round()
                / 100.0,
        );
        a.friend_count = uniform_u(&mut rng, ph.friend_count);
        a.follower_count = ((ratio_pareto(&mut rng) * a.friend_count as f64).round() as u64).max(1);
        let n_friends = uniform_usize(&mut rng, c.listed_friends);
        let friends = pick_friends(
            &mut rng,
            &plan,
            friend_pool,
            n_friends,
            c.same_language_friends,
        );
        a.tweets = b.tweets(&mut rng, c, &plan, &friends, &strangers);
        a.friend_ids = friends.into_iter().collect();
        let n_base = uniform_usize(&mut rng, c.tracked_followers).min(phony_ids.len().saturating_sub(1));
        let base: BTreeSet<String> = phony_ids
            .choose_multiple(&mut rng, n_base)
            .filter(|x| **x != id)
            .cloned()
            .collect();
        a.follower_ids = base.clone();
        let series = b.rotation_series(&mut rng, &id, &base, &daily);
        truth.control.insert(id.clone(), z);
        truth.planted_unfollows.insert(id.clone(), daily);
        ds.series.insert(id.clone(), series);
        ds.labels.insert(id, Label::Suspicious);
        ds.accounts.push(a);
    }

    let lg = &cfg.legitimate;
    let ratio_dist = LogNormal::new(lg.ratio_log_mean, lg.ratio_log_sd.max(1e-9)).expect("finite");
    let rep_dist = Normal::new(lg.reputation_mean, lg.reputation_sd.max(1e-9)).expect("finite");
    for (i, (mut rng, plan)) in legit_plans.into_iter().enumerate() {
        let id = legit_ids[i].clone();
        let c = &lg.content;
        let active = if lg.active_day_weights.is_empty() {
            0
        } else {
            weighted_index(&mut rng, &lg.active_day_weights)
        };
        let daily = b.spread_unfollows(&mut rng, active, lg.unfollows_per_active_day);
        let mut a = AccountDossier::new(id.clone(), cfg.start - Duration::days(uniform_i(&mut rng, c.account_age_days)));
        fill_profile(&mut rng, &mut a, c, &b);
        a.reputation_score = Some((rep_dist.sample(&mut rng).clamp(0.0, 100.0) * 100.0).round() / 100.0);
        a.friend_count = uniform_u(&mut rng, lg.friend_count);
        a.follower_count = (ratio_dist.sample(&mut rng) * a.friend_count as f64).round() as u64;
        let n_friends = uniform_usize(&mut rng, c.listed_friends);
        let friends: Vec<String> = pick_friends(
            &mut rng,
            &plan,
            &legit_pool,
            n_friends,
            c.same_language_friends,
        )
        .into_iter()
        .filter(|f| *f != id)
        .collect();
        a.tweets = b.tweets(&mut rng, c, &plan, &friends, &strangers);
        a.friend_ids = friends.into_iter().collect();
        let n_base = uniform_usize(&mut rng, c.tracked_followers).min(legit_ids.len().saturating_sub(1));
        let base: BTreeSet<String> = legit_ids
            .choose_multiple(&mut rng, n_base)
            .filter(|x| **x != id)
            .cloned()
            .collect();
        a.follower_ids = base.clone();
        let series = b.rotation_series(&mut rng, &id, &base, &daily);
        truth.planted_unfollows.insert(id.clone(), daily);
        ds.series.insert(id.clone(), series);
        ds.labels.insert(id, Label::Legitimate);
        ds.accounts.push(a);
    }
    Ok((ds, truth))
}

fn uniform_i(rng: &mut impl Rng, [lo, hi]: [i64; 2]) -> i64 {
    rng.random_range(lo..=hi.max(lo))
}

fn fill_profile(rng: &mut ChaCha8Rng, a: &mut AccountDossier, c: &ContentProfile, b: &Builder<'_>) {
    if rng.random_bool(c.bio_probability) {
        a.bio = Some(b.bio(rng));
    }
    if rng.random_bool(c.bio_url_probability) {
        let d = CLEAN_DOMAINS.choose(rng).expect("non-empty");
        a.bio_urls.push(format!("https://{d}/{}", a.account_id));
    }
    a.post_count = uniform_u(rng, c.posts);
    a.listed = rng.random_bool(c.listed_probability);
}

/// Generates the dataset and writes it (plus `ground_truth.json`) to `out`.
pub fn generate_market(cfg: &SimConfig, out: impl AsRef<std::path::Path>) -> Result<GroundTruth> {
    let (ds, truth) = generate(cfg)?;
    let out = out.as_ref();
    crate::model::write_dataset(&ds, out)?;
    write_truth(&truth, out)?;
    Ok(truth)
}

pub fn write_truth(truth: &GroundTruth, out: &std::path::Path) -> Result<()> {
    let path = out.join(GROUND_TRUTH_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(truth)? + "\n").map_err(|e| Error::Io { path, source: e })
}

/// Flips exactly `floor(flip_rate * n)` labels chosen by seeded sampling.
/// Returns the noisy dataset and the flipped ids in label order.
pub fn perturb_labels(ds: &Dataset, flip_rate: f64, seed: u64) -> Result<(Dataset, Vec<String>)> {
    if !(0.0..0.5).contains(&flip_rate) {
        return Err(Error::InvalidInput(format!("flip rate must be in [0, 0.5), got {flip_rate}")));
    }
    let ids: Vec<&String> = ds.labels.keys().collect();
    let n_flip = (flip_rate * ids.len() as f64).floor() as usize;
    let mut rng = entity_rng(seed, TAG_FLIP, 0);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, ids.len(), n_flip).into_vec();
    chosen.sort_unstable();
    let flipped: Vec<String> = chosen.iter().map(|&k| ids[k].clone()).collect();
    let mut out = ds.clone();
    for id in &flipped {
        let l = out.labels.get_mut(id).expect("id came from labels");
        *l = l.flipped();
    }
    Ok((out, flipped))
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::paper_calibrated()
    }
}
