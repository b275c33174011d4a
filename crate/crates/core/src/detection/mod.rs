//! Suspicious-follow detection: feature extraction, standardization, the
//! RBF SVM, evaluation and the undersampling/ablation protocol.

pub mod eval;
pub mod features;
pub mod importance;
pub mod protocol;
pub mod scaler;
pub mod svm;

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, EvalMetrics};
pub use features::{extract_features, FeatureSet, FeatureTable, FeatureVector, SetMask};
pub use importance::{feature_importance, FeatureImportance};
pub use protocol::{run_protocol, ProtocolConfig, ProtocolReport};
pub use scaler::{standardize, Scaler};
pub use svm::{KernelMachine, Matrix, SvmParams, SvmSolution};

use crate::error::{Error, Result};
use crate::model::Label;

pub const MODEL_FORMAT: &str = "shadowmarket-svm";
pub const MODEL_VERSION: u32 = 1;

/// SMO on already-standardized rows; labels are `+1` (suspicious) / `-1`.
pub fn train_svm(x: &Matrix, y: &[f64], params: &SvmParams) -> Result<SvmSolution> {
    svm::solve_dual(x, y, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_train: usize,
    pub n_support: usize,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub converged: bool,
    pub dual_objective: f64,
}

/// A fitted detector: scaler, kernel expansion and the settings it was
/// trained with. Serialises to the versioned model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub mask: SetMask,
    pub feature_names: Vec<String>,
    pub params: SvmParams,
    pub seed: u64,
    /// Value substituted for an infinite follower/friend ratio.
    pub ratio_cap: f64,
    pub scaler: Scaler,
    pub machine: KernelMachine,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub label: Label,
}

impl TrainedModel {
    /// Fits the scaler on `x` (raw, masked feature rows) and trains the SVM.
    pub fn fit(
        x: &Matrix,
        labels: &[Label],
        mask: SetMask,
        params: &SvmParams,
        seed: u64,
        ratio_cap: f64,
    ) -> Result<TrainedModel> {
        if x.cols != mask.dim() {
            return Err(Error::DimensionMismatch {
                expected: mask.dim(),
                got: x.cols,
            });
        }
        let std = standardize(x)?;
        let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
        let sol = train_svm(&std.matrix, &y, params)?;
        let machine = KernelMachine::from_solution(&std.matrix, &y, &sol, params.gamma);
        Ok(TrainedModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            mask,
            feature_names: mask.feature_names().into_iter().map(String::from).collect(),
            params: *params,
            seed,
            ratio_cap,
            scaler: std.scaler,
            diagnostics: Diagnostics {
                n_train: x.rows,
                n_support: machine.dual_coef.len(),
                iterations: sol.iterations,
                kkt_gap: sol.kkt_gap,
                converged: sol.converged,
                dual_objective: sol.dual_objective,
            },
            machine,
        })
    }

    /// Decision score for one raw (unstandardized) masked feature row.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        Ok(self.machine.decision(&self.scaler.transform_row(x)?))
    }

    pub fn decisions(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows().map(|r| self.decision(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<TrainedModel> {
        let m: TrainedModel = serde_json::from_str(text)?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model document {} v{}",
                m.format, m.version
            )));
        }
        Ok(m)
    }
}

/// Score and sign for one raw feature vector.
pub fn predict(model: &TrainedModel, x: &[f64]) -> Result<Prediction> {
    let score = model.decision(x)?;
    Ok(Prediction {
        score,
        label: if score > 0.0 {
            Label::Suspicious
        } else {
            Label::Legitimate
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_rejects_wrong_dimension() {
        let x = Matrix::from_rows(&[[0.0; 4], [1.0; 4], [2.0; 4], [3.0; 4]]);
        let labels = [Label::Suspicious, Label::Suspicious, Label::Legitimate, Label::Legitimate];
        let mask: SetMask = "A".parse().unwrap();
        let m = TrainedModel::fit(&x, &labels, mask, &SvmParams::default(), 0, 1.0).unwrap();
        assert!(matches!(predict(&m, &[0.0; 6]), Err(Error::DimensionMismatch { .. })));
        assert!(predict(&m, &[0.0; 4]).is_ok());
        assert!(TrainedModel::fit(&x, &labels, "AB".parse().unwrap(), &SvmParams::default(), 0, 1.0).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let x = Matrix::from_rows(&[[0.0; 4], [1.0; 4], [2.0; 4], [3.0; 4]]);
        let labels = [Label::Suspicious, Label::Legitimate, Label::Suspicious, Label::Legitimate];
        let m = TrainedModel::fit(&x, &labels, "A".parse().unwrap(), &SvmParams::default(), 9, 1.0).unwrap();
        let back = TrainedModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.mask, m.mask);
        assert_eq!(back.decision(&[1.5; 4]).unwrap(), m.decision(&[1.5; 4]).unwrap());
        let bad = m.to_json().unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(TrainedModel::from_json(&bad).is_err());
    }
}
