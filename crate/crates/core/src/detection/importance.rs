//! Permutation importance of the full-mask detector.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eval::confusion;
use super::features::{FeatureSet, FeatureTable, FEATURES};
use super::protocol::{subset_rng, subset_split, MeanStd, ProtocolConfig};
use super::svm::Matrix;
use super::TrainedModel;
use crate::error::Result;
use crate::model::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub set: FeatureSet,
    /// Mean held-out accuracy drop when the column is shuffled.
    pub importance: f64,
    pub std: f64,
}

/// Accuracy of `model` on `x` after shuffling each column in `columns`
/// (column indices of `x`).
pub fn permuted_accuracy(
    model: &TrainedModel,
    x: &Matrix,
    labels: &[Label],
    columns: &[usize],
    rng: &mut impl rand::Rng,
) -> Result<f64> {
    let mut shuffled = x.clone();
    for &j in columns {
        let mut col = x.column(j);
        col.shuffle(rng);
        for (i, v) in col.into_iter().enumerate() {
            shuffled.set(i, j, v);
        }
    }
    Ok(confusion(&model.decisions(&shuffled)?, labels).accuracy())
}

fn subset_drops(table: &FeatureTable, config: &ProtocolConfig, subset: usize) -> Result<Vec<Vec<f64>>> {
    let mask = config.full_mask();
    let split = subset_split(table, config, subset)?;
    let cap = table.ratio_cap(&split.train);
    let model = TrainedModel::fit(
        &table.capped(&split.train, mask, cap),
        &table.labels_of(&split.train),
        mask,
        &config.params,
        config.seed,
        cap,
    )?;
    let x_test = table.capped(&split.test, mask, cap);
    let y_test = table.labels_of(&split.test);
    let base = confusion(&model.decisions(&x_test)?, &y_test).accuracy();
    // streams above the protocol's draw streams
    let mut rng = subset_rng(config.seed, (1 << 32) + subset as u64);
    (0..x_test.cols)
        .map(|j| {
            (0..config.importance_shuffles.max(1))
                .map(|_| Ok(base - permuted_accuracy(&model, &x_test, &y_test, &[j], &mut rng)?))
                .collect()
        })
        .collect()
}

/// Features of the schedule's largest mask ranked by mean accuracy drop
/// across all draws. Ties keep the feature layout order.
pub fn feature_importance(table: &FeatureTable, config: &ProtocolConfig) -> Result<Vec<FeatureImportance>> {
    config.validate()?;
    #[cfg(feature = "parallel")]
    let per_subset: Vec<Result<Vec<Vec<f64>>>> = {
        use rayon::prelude::*;
        (0..config.n_negative_subsets)
            .into_par_iter()
            .map(|s| subset_drops(table, config, s))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_subset: Vec<Result<Vec<Vec<f64>>>> = (0..config.n_negative_subsets)
        .map(|s| subset_drops(table, config, s))
        .collect();
    let per_subset = per_subset.into_iter().collect::<Result<Vec<_>>>()?;

    let columns = config.full_mask().columns();
    let mut ranked: Vec<FeatureImportance> = columns
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let drops: Vec<f64> = per_subset.iter().flat_map(|s| s[k].iter().copied()).collect();
            let ms = MeanStd::of(&drops);
            FeatureImportance {
                feature: FEATURES[j].name.to_string(),
                set: FEATURES[j].set,
                importance: ms.mean,
                std: ms.std,
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Ok(ranked)
}
