//! Domain records, the line-delimited JSON dataset layout and snapshot
//! differencing.
//!
//! A dataset directory looks like:
//!
//! ```text
//! accounts.jsonl            one AccountDossier per line
//! merchants.jsonl           one Merchant per line
//! snapshots/<id>.jsonl      one {"ts", "follower_ids"} per line
//! labels.csv                account_id,label  (suspicious | legitimate)
//! lexicons/spam_words.txt   optional, one entry per line, '#' comments
//! lexicons/url_blacklist.txt
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseIssue, Result};

pub type AccountId = String;
pub type Timestamp = DateTime<Utc>;

pub const ACCOUNTS_FILE: &str = "accounts.jsonl";
pub const MERCHANTS_FILE: &str = "merchants.jsonl";
pub const LABELS_FILE: &str = "labels.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const SPAM_WORDS_FILE: &str = "lexicons/spam_words.txt";
pub const URL_BLACKLIST_FILE: &str = "lexicons/url_blacklist.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Suspicious,
    Legitimate,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Suspicious => "suspicious",
            Label::Legitimate => "legitimate",
        }
    }

    /// +1 for suspicious (the positive class), -1 otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Label::Suspicious => 1.0,
            Label::Legitimate => -1.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Suspicious => Label::Legitimate,
            Label::Legitimate => Label::Suspicious,
        }
    }
}

impl std::str::FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "suspicious" => Ok(Label::Suspicious),
            "legitimate" => Ok(Label::Legitimate),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub timestamp: Timestamp,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<AccountId>,
    #[serde(default)]
    pub is_retweet: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retweeted_of: Option<AccountId>,
    #[serde(default)]
    pub languages: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountDossier {
    pub account_id: AccountId,
    pub created_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bio: Option<String>,
    #[serde(default)]
    pub bio_urls: Vec<String>,
    #[serde(default)]
    pub post_count: u64,
    #[serde(default)]
    pub listed: bool,
    #[serde(default)]
    pub verified: bool,
    #[serde(default)]
    pub follower_count: u64,
    #[serde(default)]
    pub friend_count: u64,
    #[serde(default)]
    pub follower_ids: BTreeSet<AccountId>,
    #[serde(default)]
    pub friend_ids: BTreeSet<AccountId>,
    #[serde(default)]
    pub tweets: Vec<TweetRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reputation_score: Option<f64>,
    /// Merchants this account bought from. Non-empty marks the account as a
    /// market customer.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subscriptions: Vec<String>,
}

impl AccountDossier {
    pub fn new(account_id: impl Into<AccountId>, created_at: Timestamp) -> Self {
        AccountDossier {
            account_id: account_id.into(),
            created_at,
            bio: None,
            bio_urls: Vec::new(),
            post_count: 0,
            listed: false,
            verified: false,
            follower_count: 0,
            friend_count: 0,
            follower_ids: BTreeSet::new(),
            friend_ids: BTreeSet::new(),
            tweets: Vec::new(),
            reputation_score: None,
            subscriptions: Vec::new(),
        }
    }

    pub fn is_customer(&self) -> bool {
        !self.subscriptions.is_empty()
    }

    /// Union of the language codes over all tweets.
    pub fn languages(&self) -> BTreeSet<String> {
        self.tweets
            .iter()
            .flat_map(|t| t.languages.iter().cloned())
            .collect()
    }

    fn check(&self) -> std::result::Result<(), String> {
        if let Some(score) = self.reputation_score {
            if !(0.0..=100.0).contains(&score) {
                return Err(format!("reputation_score {score} outside [0,100]"));
            }
        }
        if self
            .tweets
            .windows(2)
            .any(|w| w[1].timestamp < w[0].timestamp)
        {
            return Err("tweets not ordered by timestamp".into());
        }
        if let Some(i) = self
            .tweets
            .iter()
            .position(|t| t.is_retweet && t.retweeted_of.is_none())
        {
            return Err(format!("tweet {i} is a retweet without retweeted_of"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub ts: Timestamp,
    pub follower_ids: BTreeSet<AccountId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSeries {
    pub subject_id: AccountId,
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotSeries {
    pub fn new(subject_id: impl Into<AccountId>, snapshots: Vec<Snapshot>) -> Result<Self> {
        let subject_id = subject_id.into();
        if let Some(i) = snapshots.windows(2).position(|w| w[1].ts <= w[0].ts) {
            return Err(Error::InvalidInput(format!(
                "snapshot {} of {subject_id} does not advance the timestamp",
                i + 1
            )));
        }
        Ok(SnapshotSeries {
            subject_id,
            snapshots,
        })
    }

    /// Deltas between each consecutive pair of snapshots.
    pub fn deltas(&self) -> impl Iterator<Item = FollowDelta> + '_ {
        self.snapshots.windows(2).map(|w| {
            let mut d = diff_snapshots(&w[0].follower_ids, &w[1].follower_ids);
            d.interval = Some((w[0].ts, w[1].ts));
            d
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FollowDelta {
    pub interval: Option<(Timestamp, Timestamp)>,
    pub gained: BTreeSet<AccountId>,
    pub lost: BTreeSet<AccountId>,
}

pub fn diff_snapshots(prev: &BTreeSet<AccountId>, next: &BTreeSet<AccountId>) -> FollowDelta {
    FollowDelta {
        interval: None,
        gained: next.difference(prev).cloned().collect(),
        lost: prev.difference(next).cloned().collect(),
    }
}

/// Unfollow counts bucketed by UTC calendar day, counted from the day of the
/// first snapshot. A diff is attributed to the day of its later snapshot.
/// Every day of the observed span is present, zero or not.
pub fn daily_unfollow_counts(series: &SnapshotSeries) -> Result<Vec<(usize, u64)>> {
    if series.snapshots.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "series {} has {} snapshot(s), need at least 2",
            series.subject_id,
            series.snapshots.len()
        )));
    }
    let first_day = series.snapshots[0].ts.date_naive();
    let last_day = series.snapshots[series.snapshots.len() - 1].ts.date_naive();
    let span = day_offset(first_day, last_day) + 1;
    let mut counts: Vec<(usize, u64)> = (0..span).map(|d| (d, 0)).collect();
    for delta in series.deltas() {
        let (_, to) = delta.interval.expect("deltas() sets the interval");
        counts[day_offset(first_day, to.date_naive())].1 += delta.lost.len() as u64;
    }
    Ok(counts)
}

fn day_offset(origin: NaiveDate, day: NaiveDate) -> usize {
    (day - origin).num_days() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Freemium,
    Premium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Promise {
    pub promise_id: String,
    pub expect: f64,
    #[serde(default)]
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub promise_id: String,
    pub perform: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merchant {
    pub merchant_id: String,
    pub schemes: BTreeSet<Scheme>,
    pub promises: Vec<Promise>,
    #[serde(default)]
    pub performances: Vec<Performance>,
    pub traffic_rank: u64,
    #[serde(default)]
    pub promo_tweet_count: u64,
    #[serde(default)]
    pub has_twitter_profile: bool,
    /// Price of the base package in USD, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package_price_usd: Option<f64>,
}

impl Merchant {
    fn check(&self) -> std::result::Result<(), String> {
        if self.traffic_rank < 1 {
            return Err("traffic_rank must be >= 1".into());
        }
        if self.package_price_usd.is_some_and(|p| !(p.is_finite() && p >= 0.0)) {
            return Err("package_price_usd must be finite and >= 0".into());
        }
        for p in &self.performances {
            if !self.promises.iter().any(|q| q.promise_id == p.promise_id) {
                return Err(format!("performance for unknown promise {:?}", p.promise_id));
            }
        }
        Ok(())
    }
}

/// A lowercase word or URL list loaded from a text file.
pub type Lexicon = BTreeSet<String>;

pub fn parse_lexicon(text: &str) -> Lexicon {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub accounts: Vec<AccountDossier>,
    pub merchants: Vec<Merchant>,
    pub series: BTreeMap<AccountId, SnapshotSeries>,
    pub labels: BTreeMap<AccountId, Label>,
    pub spam_words: Option<Lexicon>,
    pub url_blacklist: Option<Lexicon>,
}

impl Dataset {
    pub fn account(&self, id: &str) -> Option<&AccountDossier> {
        self.accounts.iter().find(|a| a.account_id == id)
    }

    pub fn account_index(&self) -> BTreeMap<&str, &AccountDossier> {
        self.accounts
            .iter()
            .map(|a| (a.account_id.as_str(), a))
            .collect()
    }

    /// Labeled accounts in `accounts` order.
    pub fn labeled(&self) -> impl Iterator<Item = (&AccountDossier, Label)> {
        self.accounts
            .iter()
            .filter_map(|a| self.labels.get(&a.account_id).map(|l| (a, *l)))
    }

    /// Latest timestamp seen in any snapshot, falling back to the latest tweet.
    pub fn reference_time(&self) -> Option<Timestamp> {
        let snap = self
            .series
            .values()
            .filter_map(|s| s.snapshots.last().map(|x| x.ts))
            .max();
        snap.or_else(|| {
            self.accounts
                .iter()
                .filter_map(|a| a.tweets.last().map(|t| t.timestamp))
                .max()
        })
    }

    /// Seconds between the earliest and the latest snapshot in the dataset,
    /// at least one day.
    pub fn observation_window_secs(&self) -> f64 {
        let first = self
            .series
            .values()
            .filter_map(|s| s.snapshots.first().map(|x| x.ts))
            .min();
        match (first, self.reference_time()) {
            (Some(a), Some(b)) => ((b - a).num_seconds() as f64).max(86_400.0),
            _ => 86_400.0,
        }
    }
}

#[derive(Deserialize)]
struct SnapshotLine {
    ts: Timestamp,
    follower_ids: BTreeSet<AccountId>,
}

#[derive(Serialize)]
struct SnapshotLineRef<'a> {
    ts: &'a Timestamp,
    follower_ids: &'a BTreeSet<AccountId>,
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(Some(s)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(
    path: &Path,
    text: &str,
    issues: &mut Vec<ParseIssue>,
) -> Vec<(usize, T)> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(line) {
            Ok(v) => out.push((i + 1, v)),
            Err(e) => issues.push(ParseIssue {
                file: path.to_path_buf(),
                line: i + 1,
                reason: format!("malformed record: {e}"),
            }),
        }
    }
    out
}

fn parse_series_file(path: &Path, subject: &str) -> std::result::Result<SnapshotSeries, ParseIssue> {
    let issue = |line: usize, reason: String| ParseIssue {
        file: path.to_path_buf(),
        line,
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| issue(0, e.to_string()))?;
    let mut snapshots: Vec<Snapshot> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SnapshotLine = serde_json::from_str(line)
            .map_err(|e| issue(i + 1, format!("malformed snapshot: {e}")))?;
        if let Some(prev) = snapshots.last() {
            if rec.ts <= prev.ts {
                return Err(issue(
                    i + 1,
                    format!("snapshot timestamp {} not after {}", rec.ts, prev.ts),
                ));
            }
        }
        snapshots.push(Snapshot {
            ts: rec.ts,
            follower_ids: rec.follower_ids,
        });
    }
    Ok(SnapshotSeries {
        subject_id: subject.to_string(),
        snapshots,
    })
}

fn list_snapshot_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|s| s.to_str()) == Some("jsonl") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.push((stem.to_string(), path));
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Reads a dataset directory. Missing files are treated as empty; every
/// record-level problem is collected and returned together as
/// [`Error::Validation`].
pub fn parse_dataset(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut issues = Vec::new();
    let mut ds = Dataset::default();

    let accounts_path = root.join(ACCOUNTS_FILE);
    if let Some(text) = read_optional(&accounts_path)? {
        let mut seen = HashSet::new();
        for (line, acc) in parse_jsonl::<AccountDossier>(&accounts_path, &text, &mut issues) {
            let mut fail = |reason: String| {
                issues.push(ParseIssue {
                    file: accounts_path.clone(),
                    line,
                    reason,
                })
            };
            if !seen.insert(acc.account_id.clone()) {
                fail(format!("duplicate account_id {:?}", acc.account_id));
            } else if let Err(reason) = acc.check() {
                fail(reason);
            } else {
                ds.accounts.push(acc);
            }
        }
    }

    let merchants_path = root.join(MERCHANTS_FILE);
    if let Some(text) = read_optional(&merchants_path)? {
        let mut seen = HashSet::new();
        for (line, m) in parse_jsonl::<Merchant>(&merchants_path, &text, &mut issues) {
            let reason = if !seen.insert(m.merchant_id.clone()) {
                Some(format!("duplicate merchant_id {:?}", m.merchant_id))
            } else {
                m.check().err()
            };
            match reason {
                Some(reason) => issues.push(ParseIssue {
                    file: merchants_path.clone(),
                    line,
                    reason,
                }),
                None => ds.merchants.push(m),
            }
        }
    }

    let files = list_snapshot_files(&root.join(SNAPSHOT_DIR))?;
    #[cfg(feature = "parallel")]
    let parsed: Vec<_> = {
        use rayon::prelude::*;
        files
            .par_iter()
            .map(|(id, p)| parse_series_file(p, id))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parsed: Vec<_> = files
        .iter()
        .map(|(id, p)| parse_series_file(p, id))
        .collect();
    for res in parsed {
        match res {
            Ok(s) => {
                ds.series.insert(s.subject_id.clone(), s);
            }
            Err(issue) => issues.push(issue),
        }
    }

    let labels_path = root.join(LABELS_FILE);
    if let Some(text) = read_optional(&labels_path)? {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line == "account_id,label") {
                continue;
            }
            let mut fail = |reason: String| {
                issues.push(ParseIssue {
                    file: labels_path.clone(),
                    line: i + 1,
                    reason,
                })
            };
            let Some((id, label)) = line.split_once(',') else {
                fail("expected account_id,label".into());
                continue;
            };
            match label.parse::<Label>() {
                Ok(l) => {
                    if ds.labels.insert(id.trim().to_string(), l).is_some() {
                        fail(format!("duplicate label for {id:?}"));
                    }
                }
                Err(reason) => fail(reason),
            }
        }
    }

    if let Some(text) = read_optional(&root.join(SPAM_WORDS_FILE))? {
        ds.spam_words = Some(parse_lexicon(&text));
    }
    if let Some(text) = read_optional(&root.join(URL_BLACKLIST_FILE))? {
        ds.url_blacklist = Some(parse_lexicon(&text));
    }

    if issues.is_empty() {
        Ok(ds)
    } else {
        Err(Error::Validation(issues))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &item)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

/// Writes `ds` in the layout read by [`parse_dataset`]. Output is a pure
/// function of the dataset contents.
pub fn write_dataset(ds: &Dataset, root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    write_file(&root.join(ACCOUNTS_FILE), &jsonl(&ds.accounts)?)?;
    write_file(&root.join(MERCHANTS_FILE), &jsonl(&ds.merchants)?)?;
    let snap_dir = root.join(SNAPSHOT_DIR);
    fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
    // drop series left over from an earlier write
    for entry in fs::read_dir(&snap_dir).map_err(|e| Error::io(&snap_dir, e))? {
        let path = entry.map_err(|e| Error::io(&snap_dir, e))?.path();
        let stale = path.extension().is_some_and(|x| x == "jsonl")
            && path
                .file_stem()
                .and_then(|s| s.to_str())
                .is_some_and(|id| !ds.series.contains_key(id));
        if stale {
            fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
        }
    }
    for (id, series) in &ds.series {
        let lines = series.snapshots.iter().map(|s| SnapshotLineRef {
            ts: &s.ts,
            follower_ids: &s.follower_ids,
        });
        write_file(
            &root.join(SNAPSHOT_DIR).join(format!("{id}.jsonl")),
            &jsonl(lines)?,
        )?;
    }
    let mut labels = String::from("account_id,label\n");
    for (id, l) in &ds.labels {
        labels.push_str(&format!("{id},{}\n", l.as_str()));
    }
    write_file(&root.join(LABELS_FILE), labels.as_bytes())?;
    let lexicon_text = |lex: &Lexicon| {
        let mut s = String::new();
        for w in lex {
            s.push_str(w);
            s.push('\n');
        }
        s
    };
    if let Some(lex) = &ds.spam_words {
        write_file(&root.join(SPAM_WORDS_FILE), lexicon_text(lex).as_bytes())?;
    }
    if let Some(lex) = &ds.url_blacklist {
        write_file(&root.join(URL_BLACKLIST_FILE), lexicon_text(lex).as_bytes())?;
    }
    Ok(())
}
