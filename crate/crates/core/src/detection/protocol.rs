//! Balanced-subset training protocol.
//!
//! For each of `n_negative_subsets` draws, legitimate accounts are
//! undersampled (without replacement) to the size of the suspicious class.
//! The balanced set is split 70/30 by class, the training part is
//! cross-validated with stratified folds, and a final model is fit on it and
//! scored on the held-out part. This repeats for every feature-set mask in
//! the schedule, reusing the same draw and split so masks are comparable.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::{confusion, evaluate, roc_curve, ConfusionCounts, EvalMetrics};
use super::features::{FeatureTable, SetMask};
use super::svm::{KernelMachine, SvmParams};
use super::{standardize, train_svm, TrainedModel};
use crate::error::{Error, Result};
use crate::model::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_negative_subsets: usize,
    pub train_fraction: f64,
    pub cv_folds: usize,
    pub masks: Vec<SetMask>,
    pub params: SvmParams,
    pub seed: u64,
    /// Shuffles per feature for permutation importance.
    pub importance_shuffles: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            n_negative_subsets: 10,
            train_fraction: 0.7,
            cv_folds: 10,
            masks: SetMask::FULL.incremental_schedule(),
            params: SvmParams::default(),
            seed: 0,
            importance_shuffles: 5,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_negative_subsets == 0 {
            return Err(Error::InvalidInput("need at least one negative subset".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidInput("need at least 2 CV folds".into()));
        }
        if self.masks.is_empty() {
            return Err(Error::InvalidInput("empty mask schedule".into()));
        }
        Ok(())
    }

    /// The largest mask in the schedule.
    pub fn full_mask(&self) -> SetMask {
        *self
            .masks
            .iter()
            .max_by_key(|m| m.dim())
            .expect("validated non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> MeanStd {
        if xs.is_empty() {
            return MeanStd { mean: 0.0, std: 0.0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub subset: usize,
    pub mask: SetMask,
    pub cv_accuracy: f64,
    pub test: EvalMetrics,
    pub n_support: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub mask: SetMask,
    pub n_features: usize,
    pub accuracy: MeanStd,
    pub f1: MeanStd,
    pub auc: MeanStd,
    pub cv_accuracy: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledConfusion {
    pub mask: SetMask,
    pub counts: ConfusionCounts,
    /// Rows: true suspicious, true legitimate. Columns: predicted suspicious, legitimate.
    pub percentages: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub config: ProtocolConfig,
    pub n_positive: usize,
    pub n_negative_pool: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub masks: Vec<MaskSummary>,
    pub pooled_confusion: PooledConfusion,
    pub runs: Vec<RunRecord>,
    /// Pooled held-out ROC points per mask, for plotting.
    #[serde(skip)]
    pub roc: Vec<(SetMask, Vec<(f64, f64)>)>,
}

impl ProtocolReport {
    pub fn summary(&self, mask: SetMask) -> Option<&MaskSummary> {
        self.masks.iter().find(|m| m.mask == mask)
    }
}

/// Row indices of one balanced draw, split into train and test parts, plus
/// the stratified CV fold of every training row.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub folds: Vec<usize>,
}

pub(crate) fn subset_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn class_rows(table: &FeatureTable) -> (Vec<usize>, Vec<usize>) {
    let pos = (0..table.len()).filter(|&i| table.labels[i] == Label::Suspicious).collect();
    let neg = (0..table.len()).filter(|&i| table.labels[i] == Label::Legitimate).collect();
    (pos, neg)
}

/// Draw `subset` of the protocol: balanced sample, class-wise split and folds.
pub fn subset_split(table: &FeatureTable, config: &ProtocolConfig, subset: usize) -> Result<SubsetSplit> {
    let (pos, neg) = class_rows(table);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    if pos.len() > neg.len() {
        return Err(Error::InsufficientData(format!(
            "cannot undersample: {} suspicious but only {} legitimate accounts",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = subset_rng(config.seed, subset as u64 + 1);
    let mut negatives: Vec<usize> = rand::seq::index::sample(&mut rng, neg.len(), pos.len())
        .into_iter()
        .map(|k| neg[k])
        .collect();
    negatives.sort_unstable();

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut folds = Vec::new();
    for mut class in [pos, negatives] {
        class.shuffle(&mut rng);
        let n_train = ((class.len() as f64) * config.train_fraction).round() as usize;
        let n_train = n_train.clamp(1.min(class.len()), class.len());
        let (tr, te) = class.split_at(n_train);
        for (k, &i) in tr.iter().enumerate() {
            train.push(i);
            folds.push(k % config.cv_folds);
        }
        test.extend_from_slice(te);
    }
    Ok(SubsetSplit { train, test, folds })
}

/// Trains on `train` rows and returns decision scores for `test` rows.
fn fit_and_score(
    table: &FeatureTable,
    train: &[usize],
    test: &[usize],
    mask: SetMask,
    params: &SvmParams,
) -> Result<(Vec<f64>, KernelStats)> {
    let cap = table.ratio_cap(train);
    let std = standardize(&table.capped(train, mask, cap))?;
    let y: Vec<f64> = table.labels_of(train).iter().map(|l| l.sign()).collect();
    let sol = train_svm(&std.matrix, &y, params)?;
    let machine = KernelMachine::from_solution(&std.matrix, &y, &sol, params.gamma);
    let x_test = std.scaler.transform(&table.capped(test, mask, cap))?;
    let scores = x_test.iter_rows().map(|r| machine.decision(r)).collect();
    Ok((
        scores,
        KernelStats {
            n_support: machine.dual_coef.len(),
            iterations: sol.iterations,
        },
    ))
}

struct KernelStats {
    n_support: usize,
    iterations: usize,
}

fn accuracy(scores: &[f64], labels: &[Label]) -> f64 {
    confusion(scores, labels).accuracy()
}

struct SubsetOutcome {
    records: Vec<RunRecord>,
    /// Held-out scores and labels per mask, in schedule order.
    scored: Vec<(Vec<f64>, Vec<Label>)>,
}

fn run_subset(table: &FeatureTable, config: &ProtocolConfig, subset: usize) -> Result<SubsetOutcome> {
    let split = subset_split(table, config, subset)?;
    let test_labels = table.labels_of(&split.test);
    let mut records = Vec::new();
    let mut scored = Vec::new();
    for &mask in &config.masks {
        let mut cv = Vec::with_capacity(config.cv_folds);
        for fold in 0..config.cv_folds {
            let (inner, held): (Vec<(usize, usize)>, Vec<(usize, usize)>) = split
                .train
                .iter()
                .copied()
                .zip(split.folds.iter().copied())
                .partition(|(_, f)| *f != fold);
            let inner: Vec<usize> = inner.into_iter().map(|(i, _)| i).collect();
            let held: Vec<usize> = held.into_iter().map(|(i, _)| i).collect();
            if held.is_empty() {
                continue;
            }
            let (scores, _) = fit_and_score(table, &inner, &held, mask, &config.params)?;
            cv.push(accuracy(&scores, &table.labels_of(&held)));
        }
        let (scores, stats) = fit_and_score(table, &split.train, &split.test, mask, &config.params)?;
        records.push(RunRecord {
            subset,
            mask,
            cv_accuracy: MeanStd::of(&cv).mean,
            test: evaluate(&scores, &test_labels)?,
            n_support: stats.n_support,
            iterations: stats.iterations,
        });
        scored.push((scores, test_labels.clone()));
    }
    Ok(SubsetOutcome { records, scored })
}

/// Runs the full protocol. Output depends only on the table and config.
pub fn run_protocol(table: &FeatureTable, config: &ProtocolConfig) -> Result<ProtocolReport> {
    config.validate()?;
    let (pos, neg) = class_rows(table);
    let first = subset_split(table, config, 0)?;

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<SubsetOutcome>> = {
        use rayon::prelude::*;
        (0..config.n_negative_subsets)
            .into_par_iter()
            .map(|s| run_subset(table, config, s))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<SubsetOutcome>> = (0..config.n_negative_subsets)
        .map(|s| run_subset(table, config, s))
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let full = config.full_mask();
    let mut pooled = ConfusionCounts::default();
    let mut masks = Vec::new();
    let mut roc = Vec::new();
    for (k, &mask) in config.masks.iter().enumerate() {
        let runs: Vec<&RunRecord> = outcomes.iter().map(|o| &o.records[k]).collect();
        let pick = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> MeanStd {
            MeanStd::of(&runs.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
        };
        masks.push(MaskSummary {
            mask,
            n_features: mask.dim(),
            accuracy: pick(&|r| Some(r.test.accuracy)),
            f1: pick(&|r| Some(r.test.f1)),
            auc: pick(&|r| r.test.auc),
            cv_accuracy: pick(&|r| Some(r.cv_accuracy)),
        });
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for o in &outcomes {
            scores.extend_from_slice(&o.scored[k].0);
            labels.extend_from_slice(&o.scored[k].1);
        }
        roc.push((mask, roc_curve(&scores, &labels)));
        if mask == full {
            for r in &runs {
                pooled.add(&r.test.counts);
            }
        }
    }

    Ok(ProtocolReport {
        config: config.clone(),
        n_positive: pos.len(),
        n_negative_pool: neg.len(),
        train_size: first.train.len(),
        test_size: first.test.len(),
        masks,
        pooled_confusion: PooledConfusion {
            mask: full,
            percentages: pooled.percentages(),
            counts: pooled,
        },
        runs: outcomes.into_iter().flat_map(|o| o.records).collect(),
        roc,
    })
}

/// Final model for `mask` fit on the training part of draw 0.
pub fn fit_final_model(table: &FeatureTable, config: &ProtocolConfig, mask: SetMask) -> Result<TrainedModel> {
    config.validate()?;
    let split = subset_split(table, config, 0)?;
    let cap = table.ratio_cap(&split.train);
    TrainedModel::fit(
        &table.capped(&split.train, mask, cap),
        &table.labels_of(&split.train),
        mask,
        &config.params,
        config.seed,
        cap,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::features::N_FEATURES;
    use crate::detection::svm::Matrix;

    fn table(n_pos: usize, n_neg: usize) -> FeatureTable {
        let n = n_pos + n_neg;
        let mut data = Vec::new();
        for i in 0..n {
            let sign = if i < n_pos { 1.0 } else { -1.0 };
            for j in 0..N_FEATURES {
                data.push(sign * (1.0 + (j % 3) as f64) + ((i * 7 + j * 13) % 11) as f64 * 0.05);
            }
        }
        FeatureTable {
            ids: (0..n).map(|i| format!("u{i}")).collect(),
            labels: (0..n)
                .map(|i| if i < n_pos { Label::Suspicious } else { Label::Legitimate })
                .collect(),
            values: Matrix::new(n, N_FEATURES, data),
            infinite_ratio: vec![false; n],
        }
    }

    #[test]
    fn split_is_balanced_and_disjoint() {
        let t = table(20, 50);
        let cfg = ProtocolConfig::default();
        let s = subset_split(&t, &cfg, 3).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 40);
        assert_eq!(s.train.len(), 28);
        let pos_train = s.train.iter().filter(|&&i| i < 20).count();
        assert_eq!(pos_train, 14);
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 40);
        assert_eq!(s, subset_split(&t, &cfg, 3).unwrap());
        assert_ne!(s, subset_split(&t, &cfg, 4).unwrap());
    }

    #[test]
    fn too_many_positives_is_an_error() {
        let t = table(30, 10);
        assert!(subset_split(&t, &ProtocolConfig::default(), 0).is_err());
    }

    #[test]
    fn report_has_one_row_per_mask() {
        let t = table(20, 30);
        let cfg = ProtocolConfig {
            n_negative_subsets: 2,
            cv_folds: 3,
            ..ProtocolConfig::default()
        };
        let r = run_protocol(&t, &cfg).unwrap();
        assert_eq!(r.masks.len(), 4);
        assert_eq!(r.runs.len(), 8);
        assert_eq!(r.pooled_confusion.mask, SetMask::FULL);
        for row in r.pooled_confusion.percentages {
            assert!((row[0] + row[1] - 100.0).abs() < 0.1);
        }
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.std, 1.0);
    }
}
