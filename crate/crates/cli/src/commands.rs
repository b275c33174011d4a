use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use shadowmarket::detection::eval::roc_curve;
use shadowmarket::detection::features::{FeatureSet, FEATURES, RATIO_COLUMN};
use shadowmarket::detection::protocol::fit_final_model;
use shadowmarket::detection::{
    evaluate, feature_importance, predict, run_protocol, FeatureTable, ProtocolConfig, SetMask, SvmParams,
    TrainedModel,
};
use shadowmarket::market::{
    self, empirical_cdf, knee_point, merchant_qos, popularity_for, qos_popularity_report, rank_leaders,
    retention_report, LeaderSelection, MIN_RETENTION_SNAPSHOTS,
};
use shadowmarket::metrics::{fit_power_law, pearson};
use shadowmarket::model::{parse_dataset, Dataset, Label, Lexicon, Scheme};
use shadowmarket::simgen::{self, SimConfig};

use crate::output::{digest_inputs, Format, Outputs, RunManifest, Table, MANIFEST_FILE};
use crate::{Cli, CliError, Command, DataOut, LeaderArgs, TrainArgs};

type CmdResult = Result<Done, CliError>;

/// What a finished command leaves for the manifest.
struct Done {
    out: Option<Outputs>,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let f = cli.format;
    let done = match &cli.command {
        Command::Validate(a) => validate(a.dir.as_ref().or(a.data.as_ref()).expect("clap requires one"), a.out.as_deref()),
        Command::Simulate(a) => simulate(a),
        Command::Qos(a) => with_data(a, |ds, out| qos(ds, out, f)),
        Command::Popularity(a) => with_data(&a.io, |ds, out| popularity(ds, out, &a.leaders, f)),
        Command::Retention(a) => with_data(&a.io, |ds, out| retention(ds, out, &a.accounts, f)),
        Command::Customers(a) => with_data(&a.io, |ds, out| {
            customers(ds, out, &a.leaders, a.reputation_threshold, a.reputation_proxy)
        }),
        Command::Metrics(a) => with_data(a, |ds, out| metrics(ds, out, f)),
        Command::Features(a) => with_data(&a.io, |ds, out| features(ds, out, a.sets, f)),
        Command::Train(a) => with_data(&a.io, |ds, out| train(ds, out, a, f)).map(|d| seeded(d, a.seed)),
        Command::Evaluate(a) => with_data(&a.io, |ds, out| evaluate_model(ds, out, &a.model, f)).map(|mut d| {
            d.inputs.push(a.model.clone());
            d
        }),
        Command::Importance(a) => with_data(&a.io, |ds, out| importance(ds, out, a, f)).map(|d| seeded(d, a.seed)),
        Command::Report(a) => with_data(&a.io, |ds, out| report(ds, out, a, f)).map(|d| seeded(d, a.seed)),
    }?;
    let Some(mut out) = done.out else {
        return Ok(());
    };
    let mut digests = BTreeMap::new();
    for p in &done.inputs {
        digest_inputs(p, &mut digests)?;
    }
    let mut files = out.files().to_vec();
    files.sort();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: std::env::args().collect::<Vec<_>>().join(" "),
        config: serde_json::to_value(cli).map_err(CliError::computation)?,
        input_digests: digests,
        seed: done.seed,
        started_at: started.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        wall_clock_secs: clock.elapsed().as_secs_f64(),
        outputs: files,
    };
    out.json(MANIFEST_FILE, &manifest)
}

fn seeded(mut d: Done, seed: u64) -> Done {
    d.seed = Some(seed);
    d
}

fn load(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.is_dir() {
        return Err(CliError::validation(format!("{} is not a directory", dir.display())));
    }
    Ok(parse_dataset(dir)?)
}

fn with_data(io: &DataOut, f: impl FnOnce(&Dataset, &mut Outputs) -> Result<(), CliError>) -> CmdResult {
    let ds = load(&io.data)?;
    let mut out = Outputs::new(&io.out)?;
    f(&ds, &mut out)?;
    Ok(Done {
        out: Some(out),
        inputs: vec![io.data.clone()],
        seed: None,
    })
}

fn num(x: f64) -> Value {
    json!(x)
}

fn opt(x: Option<f64>) -> Value {
    x.map(num).unwrap_or(Value::Null)
}

#[derive(Serialize)]
struct ValidationSummary {
    accounts: usize,
    merchants: usize,
    series: usize,
    labeled: usize,
    suspicious: usize,
    legitimate: usize,
    customers: usize,
    spam_words: Option<usize>,
    url_blacklist: Option<usize>,
}

fn validate(dir: &Path, out: Option<&Path>) -> CmdResult {
    let ds = load(dir)?;
    let count = |l: Label| ds.labels.values().filter(|v| **v == l).count();
    let summary = ValidationSummary {
        accounts: ds.accounts.len(),
        merchants: ds.merchants.len(),
        series: ds.series.len(),
        labeled: ds.labels.len(),
        suspicious: count(Label::Suspicious),
        legitimate: count(Label::Legitimate),
        customers: ds.accounts.iter().filter(|a| a.is_customer()).count(),
        spam_words: ds.spam_words.as_ref().map(|l| l.len()),
        url_blacklist: ds.url_blacklist.as_ref().map(|l| l.len()),
    };
    println!("{}", serde_json::to_string(&summary).map_err(CliError::computation)?);
    let out = match out {
        Some(o) => {
            let mut w = Outputs::new(o)?;
            w.json("validation.json", &summary)?;
            Some(w)
        }
        None => None,
    };
    Ok(Done {
        out,
        inputs: vec![dir.to_path_buf()],
        seed: None,
    })
}

fn simulate(a: &crate::SimulateArgs) -> CmdResult {
    let mut inputs = Vec::new();
    let mut config = match &a.config {
        None => SimConfig::paper_calibrated(),
        Some(p) if !p.exists() && p.as_os_str() == simgen::PAPER_CALIBRATED_NAME => SimConfig::paper_calibrated(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::input(p, e))?;
            inputs.push(p.clone());
            SimConfig::from_json(&text).map_err(|e| match e {
                shadowmarket::Error::Json(j) => CliError::validation(format!("{}: {j}", p.display())),
                other => other.into(),
            })?
        }
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    let (mut ds, mut truth) = simgen::generate(&config)?;
    if let Some(rate) = a.flip_rate {
        let (noisy, flipped) =
            simgen::perturb_labels(&ds, rate, config.seed).map_err(|e| CliError::usage(e.to_string()))?;
        ds = noisy;
        truth.flipped_labels = flipped;
    }
    let mut out = Outputs::new(&a.out)?;
    shadowmarket::model::write_dataset(&ds, out.dir())?;
    for f in ["accounts.jsonl", "merchants.jsonl", "labels.csv", "snapshots/", "lexicons/"] {
        out.record(f);
    }
    out.json(simgen::GROUND_TRUTH_FILE, &truth)?;
    out.json("sim_config.json", &config)?;
    Ok(Done {
        out: Some(out),
        inputs,
        seed: Some(config.seed),
    })
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Freemium => "freemium",
        Scheme::Premium => "premium",
    }
}

fn qos_map(ds: &Dataset) -> BTreeMap<String, f64> {
    ds.merchants
        .iter()
        .filter_map(|m| match merchant_qos(m) {
            Ok(q) => Some((m.merchant_id.clone(), q.qos)),
            Err(e) => {
                log::warn!("merchant {}: {e}", m.merchant_id);
                None
            }
        })
        .collect()
}

fn qos(ds: &Dataset, out: &mut Outputs, f: Format) -> Result<(), CliError> {
    let mut table = Table::new(&["merchant_id", "schemes", "n_promises", "qos"]);
    let mut by_scheme: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for m in &ds.merchants {
        let schemes: Vec<&str> = m.schemes.iter().map(|s| scheme_name(*s)).collect();
        match merchant_qos(m) {
            Ok(q) => {
                for s in &schemes {
                    by_scheme.entry(s).or_default().push(q.qos);
                }
                table.push(vec![
                    json!(m.merchant_id),
                    json!(schemes.join(";")),
                    json!(q.per_promise_terms.len()),
                    num(q.qos),
                ]);
            }
            Err(e) => {
                log::warn!("merchant {}: {e}", m.merchant_id);
                skipped.push(json!({ "merchant_id": m.merchant_id, "reason": e.to_string() }));
            }
        }
    }
    out.table("qos", &table, f)?;
    let mut schemes = serde_json::Map::new();
    for (s, values) in &by_scheme {
        let cdf = empirical_cdf(values);
        let mut curve = Table::new(&["qos", "cdf"]);
        for (x, y) in &cdf {
            curve.push(vec![num(*x), num(*y)]);
        }
        out.table(&format!("qos_cdf_{s}"), &curve, f)?;
        let knee = knee_point(&cdf).ok();
        schemes.insert(
            s.to_string(),
            json!({
                "merchants": values.len(),
                "mean_qos": values.iter().sum::<f64>() / values.len() as f64,
                "knee": knee,
            }),
        );
    }
    out.json("qos_summary.json", &json!({ "schemes": schemes, "skipped": skipped }))
}

fn selection(l: &LeaderArgs) -> LeaderSelection {
    match l.top_k {
        Some(k) => LeaderSelection::TopK(k),
        None => LeaderSelection::Threshold(l.leader_threshold),
    }
}

fn popularity(ds: &Dataset, out: &mut Outputs, leaders: &LeaderArgs, f: Format) -> Result<(), CliError> {
    let pops = popularity_for(&ds.merchants)?;
    let qos = qos_map(ds);
    let mut table = Table::new(&["merchant_id", "alexa_norm", "osn_popularity", "popularity", "qos"]);
    for p in &pops {
        table.push(vec![
            json!(p.merchant_id),
            num(p.alexa_norm),
            num(p.osn_popularity),
            num(p.popularity),
            opt(qos.get(&p.merchant_id).copied()),
        ]);
    }
    out.table("popularity", &table, f)?;
    let report = rank_leaders(&pops, selection(leaders))?;
    let pop_map: BTreeMap<String, f64> = pops.iter().map(|p| (p.merchant_id.clone(), p.popularity)).collect();
    let qp = qos_popularity_report(&qos, &pop_map).ok();
    out.json(
        "leaders.json",
        &json!({
            "leaders": report,
            "qos_popularity_pcc": qp.and_then(|r| r.pcc),
        }),
    )
}

fn retention(ds: &Dataset, out: &mut Outputs, accounts: &[String], f: Format) -> Result<(), CliError> {
    let ids: Vec<String> = if accounts.is_empty() {
        ds.accounts
            .iter()
            .filter(|a| a.is_customer())
            .filter(|a| ds.series.get(&a.account_id).is_some_and(|s| s.snapshots.len() >= MIN_RETENTION_SNAPSHOTS))
            .map(|a| a.account_id.clone())
            .collect()
    } else {
        accounts.to_vec()
    };
    let mut summary = Vec::new();
    for id in &ids {
        let series = ds
            .series
            .get(id)
            .ok_or_else(|| CliError::computation(shadowmarket::Error::MissingSeries(id.clone())))?;
        let r = retention_report(series)?;
        let drops: BTreeMap<_, u64> = r.dips.iter().map(|d| (d.ts, d.drop)).collect();
        let mut table = Table::new(&["ts", "hour_of_day", "followers", "drop"]);
        for (ts, n) in &r.counts {
            table.push(vec![
                json!(ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
                json!(chrono::Timelike::hour(ts)),
                json!(n),
                json!(drops.get(ts).copied().unwrap_or(0)),
            ]);
        }
        out.table(&format!("retention_{id}"), &table, f)?;
        summary.push(json!({
            "account_id": id,
            "snapshots": r.counts.len(),
            "dips": r.dips.len(),
            "pcc_vs_hour": r.pcc_vs_hour,
        }));
    }
    out.json("retention.json", &summary)
}

fn leader_set(ds: &Dataset, l: &LeaderArgs) -> BTreeSet<String> {
    if ds.merchants.is_empty() {
        return BTreeSet::new();
    }
    popularity_for(&ds.merchants)
        .and_then(|p| rank_leaders(&p, selection(l)))
        .map(|r| r.leaders.into_iter().collect())
        .unwrap_or_default()
}

fn customers(ds: &Dataset, out: &mut Outputs, l: &LeaderArgs, threshold: f64, proxy: bool) -> Result<(), CliError> {
    let list: Vec<_> = ds.accounts.iter().filter(|a| a.is_customer()).collect();
    let empty = Lexicon::new();
    let profile = market::customer_profile_report(
        &list,
        ds.url_blacklist.as_ref().unwrap_or(&empty),
        threshold,
        &leader_set(ds, l),
        proxy,
    );
    out.json("customers.json", &profile)
}

const METRIC_COLUMNS: [&str; 7] = [
    "social_reputation",
    "follower_friend_ratio",
    "number_of_languages",
    "unfollow_entropy",
    "rt_engagement",
    "mention_engagement",
    "language_overlap",
];

fn column(name: &str) -> usize {
    FEATURES.iter().position(|f| f.name == name).expect("known feature")
}

fn metrics(ds: &Dataset, out: &mut Outputs, f: Format) -> Result<(), CliError> {
    let table = FeatureTable::from_dataset(ds)?;
    let mut cols = vec!["account_id", "label"];
    cols.extend(METRIC_COLUMNS);
    let mut t = Table::new(&cols);
    for i in 0..table.len() {
        let mut row = vec![json!(table.ids[i]), json!(table.labels[i].as_str())];
        for name in METRIC_COLUMNS {
            let j = column(name);
            row.push(if j == RATIO_COLUMN && table.infinite_ratio[i] {
                json!("inf")
            } else {
                num(table.values.get(i, j))
            });
        }
        t.push(row);
    }
    out.table("metrics", &t, f)?;

    let (e, r) = (column("unfollow_entropy"), column("social_reputation"));
    let mut classes = serde_json::Map::new();
    for label in [Label::Suspicious, Label::Legitimate] {
        let rows: Vec<usize> = (0..table.len()).filter(|&i| table.labels[i] == label).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let ent: Vec<f64> = rows.iter().map(|&i| table.values.get(i, e)).collect();
        let rep: Vec<f64> = rows.iter().map(|&i| table.values.get(i, r)).collect();
        let ratios: Vec<f64> = rows
            .iter()
            .filter(|&&i| !table.infinite_ratio[i])
            .map(|&i| table.values.get(i, RATIO_COLUMN))
            .filter(|v| *v > 0.0)
            .collect();
        classes.insert(
            label.as_str().to_string(),
            json!({
                "accounts": rows.len(),
                "share_entropy_at_least_0_76": ent.iter().filter(|v| **v >= 0.76).count() as f64 / n,
                "share_reputation_below_20": rep.iter().filter(|v| **v < 20.0).count() as f64 / n,
                "entropy_reputation_pcc": pearson(&ent, &rep).ok(),
                "ratio_power_law": fit_power_law(&ratios).ok(),
            }),
        );
    }
    out.json("metrics_summary.json", &classes)
}

fn features(ds: &Dataset, out: &mut Outputs, mask: SetMask, f: Format) -> Result<(), CliError> {
    let table = FeatureTable::from_dataset(ds)?;
    let all: Vec<usize> = (0..table.len()).collect();
    let cap = table.ratio_cap(&all);
    let x = table.capped(&all, mask, cap);
    let mut cols = vec!["account_id", "label"];
    cols.extend(mask.feature_names());
    let mut t = Table::new(&cols);
    for (i, row) in x.iter_rows().enumerate() {
        let mut r = vec![json!(table.ids[i]), json!(table.labels[i].as_str())];
        r.extend(row.iter().map(|v| num(*v)));
        t.push(r);
    }
    out.table("features", &t, f)
}

fn protocol_config(a: &TrainArgs) -> Result<ProtocolConfig, CliError> {
    let config = ProtocolConfig {
        n_negative_subsets: a.subsets,
        train_fraction: a.train_fraction,
        cv_folds: a.folds,
        masks: a.sets.incremental_schedule(),
        params: SvmParams {
            c: a.c,
            gamma: a.gamma,
            ..SvmParams::default()
        },
        seed: a.seed,
        importance_shuffles: a.shuffles,
    };
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(config)
}

fn train(ds: &Dataset, out: &mut Outputs, a: &TrainArgs, f: Format) -> Result<(), CliError> {
    let config = protocol_config(a)?;
    let table = FeatureTable::from_dataset(ds)?;
    let report = run_protocol(&table, &config)?;
    out.json("protocol_report.json", &report)?;
    let mut ablation = Table::new(&[
        "mask",
        "n_features",
        "accuracy_mean",
        "accuracy_std",
        "f1_mean",
        "f1_std",
        "auc_mean",
        "auc_std",
        "cv_accuracy_mean",
        "cv_accuracy_std",
    ]);
    for m in &report.masks {
        ablation.push(vec![
            json!(m.mask.to_string()),
            json!(m.n_features),
            num(m.accuracy.mean),
            num(m.accuracy.std),
            num(m.f1.mean),
            num(m.f1.std),
            num(m.auc.mean),
            num(m.auc.std),
            num(m.cv_accuracy.mean),
            num(m.cv_accuracy.std),
        ]);
    }
    out.table("ablation", &ablation, f)?;
    for (mask, points) in &report.roc {
        let mut t = Table::new(&["fpr", "tpr"]);
        for (x, y) in points {
            t.push(vec![num(*x), num(*y)]);
        }
        out.table(&format!("roc_{mask}"), &t, f)?;
    }
    let model = fit_final_model(&table, &config, a.sets)?;
    out.bytes("model.json", (model.to_json()? + "\n").as_bytes())
}

fn evaluate_model(ds: &Dataset, out: &mut Outputs, path: &Path, f: Format) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    let model = TrainedModel::from_json(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let table = FeatureTable::from_dataset(ds)?;
    let all: Vec<usize> = (0..table.len()).collect();
    let x = table.capped(&all, model.mask, model.ratio_cap);
    let mut scores = Vec::with_capacity(x.rows);
    let mut t = Table::new(&["account_id", "label", "score", "predicted"]);
    for (i, row) in x.iter_rows().enumerate() {
        let p = predict(&model, row)?;
        scores.push(p.score);
        t.push(vec![
            json!(table.ids[i]),
            json!(table.labels[i].as_str()),
            num(p.score),
            json!(p.label.as_str()),
        ]);
    }
    out.table("predictions", &t, f)?;
    let metrics = evaluate(&scores, &table.labels)?;
    let mut roc = Table::new(&["fpr", "tpr"]);
    for (x, y) in roc_curve(&scores, &table.labels) {
        roc.push(vec![num(x), num(y)]);
    }
    out.table(&format!("roc_{}", model.mask), &roc, f)?;
    out.json("evaluation.json", &json!({ "mask": model.mask, "metrics": metrics }))
}

fn importance(ds: &Dataset, out: &mut Outputs, a: &TrainArgs, f: Format) -> Result<(), CliError> {
    let config = protocol_config(a)?;
    let table = FeatureTable::from_dataset(ds)?;
    let ranked = feature_importance(&table, &config)?;
    let mut t = Table::new(&["rank", "feature", "set", "importance", "std"]);
    for (k, r) in ranked.iter().enumerate() {
        let set = match r.set {
            FeatureSet::A => "A",
            FeatureSet::B => "B",
            FeatureSet::C => "C",
            FeatureSet::D => "D",
        };
        t.push(vec![json!(k + 1), json!(r.feature), json!(set), num(r.importance), num(r.std)]);
    }
    out.table("importance", &t, f)
}

fn report(ds: &Dataset, out: &mut Outputs, a: &TrainArgs, f: Format) -> Result<(), CliError> {
    let leaders = LeaderArgs {
        top_k: None,
        leader_threshold: 0.71,
    };
    if !ds.merchants.is_empty() {
        qos(ds, out, f)?;
        popularity(ds, out, &leaders, f)?;
    }
    customers(ds, out, &leaders, market::DEFAULT_REPUTATION_THRESHOLD, false)?;
    retention(ds, out, &[], f)?;
    metrics(ds, out, f)?;
    features(ds, out, a.sets, f)?;
    train(ds, out, a, f)?;
    importance(ds, out, a, f)
}
