//! Classifier bank over convolutional-trace features: k-nearest neighbors,
//! Fisher LDA, a linear SVM and a random forest, plus split and
//! cross-validation evaluation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod eval;
mod forest;
mod knn;
mod lda;
mod report;
mod svm;

pub use eval::{evaluate, kfold_cv, pairwise_subsets, split_eval, stratified_split, EvalReport};
pub use forest::{ForestModel, ForestParams, Tree, TreeNode};
pub use knn::KnnModel;
pub use lda::LdaModel;
pub use report::{ReportCell, ReportGrid};
pub use svm::{SvmModel, SvmParams};

pub const MODEL_FORMAT: &str = "convtrace-model";
pub const MODEL_VERSION: u32 = 1;

/// Ridge added to the pooled LDA covariance.
pub const LDA_RIDGE: f64 = 1e-6;

/// The k values of the KNN rows in the report grid.
pub const KNN_KS: [usize; 6] = [3, 5, 7, 9, 11, 13];

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord {
    pub features: Vec<f64>,
    pub label: u32,
    pub source: String,
}

impl FeatureRecord {
    pub fn new(features: Vec<f64>, label: u32, source: impl Into<String>) -> Self {
        FeatureRecord {
            features,
            label,
            source: source.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn { k: usize },
    Lda,
    SvmLinear,
    RandomForest,
}

impl ClassifierKind {
    /// The full bank in report order.
    pub fn all() -> Vec<ClassifierKind> {
        let mut out: Vec<_> = KNN_KS.iter().map(|&k| ClassifierKind::Knn { k }).collect();
        out.extend([
            ClassifierKind::Lda,
            ClassifierKind::SvmLinear,
            ClassifierKind::RandomForest,
        ]);
        out
    }

    pub fn display_name(&self) -> String {
        match self {
            ClassifierKind::Knn { k } => format!("KNN (k={k})"),
            ClassifierKind::Lda => "LDA".into(),
            ClassifierKind::SvmLinear => "Linear SVM".into(),
            ClassifierKind::RandomForest => "Random Forest".into(),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierKind::Knn { k } => write!(f, "knn:{k}"),
            ClassifierKind::Lda => f.write_str("lda"),
            ClassifierKind::SvmLinear => f.write_str("svm"),
            ClassifierKind::RandomForest => f.write_str("rf"),
        }
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lda" => Ok(ClassifierKind::Lda),
            "svm" => Ok(ClassifierKind::SvmLinear),
            "rf" => Ok(ClassifierKind::RandomForest),
            _ => match s.strip_prefix("knn:").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => Ok(ClassifierKind::Knn { k }),
                _ => Err(Error::Parse(format!("unknown classifier {s:?}"))),
            },
        }
    }
}

/// Parses a comma-separated classifier list; `knn` alone expands to every
/// k in [`KNN_KS`] and `all` to the whole bank.
pub fn parse_classifier_list(s: &str) -> Result<Vec<ClassifierKind>> {
    let mut out = Vec::new();
    for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match tok {
            "all" => out.extend(ClassifierKind::all()),
            "knn" => out.extend(KNN_KS.iter().map(|&k| ClassifierKind::Knn { k })),
            _ => out.push(tok.parse()?),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("empty classifier list".into()));
    }
    let mut seen = Vec::new();
    out.retain(|k| {
        let fresh = !seen.contains(k);
        seen.push(*k);
        fresh
    });
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    /// Z-score features with training-split statistics before fitting.
    pub standardize: bool,
    pub forest: ForestParams,
    pub svm: SvmParams,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            standardize: true,
            forest: ForestParams::default(),
            svm: SvmParams::default(),
        }
    }
}

/// Per-feature z-scoring fitted on a training split. Zero-variance features
/// keep unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(records: &[FeatureRecord]) -> Self {
        let d = records[0].features.len();
        let n = records.len() as f64;
        let mut mean = vec![0.0; d];
        for r in records {
            for (m, v) in mean.iter_mut().zip(&r.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in records {
            for ((s, v), m) in var.iter_mut().zip(&r.features).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Knn(KnnModel),
    Lda(LdaModel),
    SvmLinear(SvmModel),
    RandomForest(ForestModel),
}

/// An immutable fitted classifier, serializable as a self-describing JSON
/// document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub kind: ClassifierKind,
    pub hyper: Hyper,
    pub train_seed: u64,
    pub dim: usize,
    /// Sorted class ids seen during training.
    pub classes: Vec<u32>,
    pub standardizer: Option<Standardizer>,
    pub params: ModelParams,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: TrainedModel =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model file: {e}")))?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format {} v{}",
                model.format, model.version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Sorted distinct labels; validates a shared, non-zero dimension.
pub(crate) fn check_records(records: &[FeatureRecord]) -> Result<(usize, Vec<u32>)> {
    let first = records
        .first()
        .ok_or_else(|| Error::Validation("no training records".into()))?;
    let dim = first.features.len();
    if dim == 0 {
        return Err(Error::Validation("records have no features".into()));
    }
    if let Some(r) = records.iter().find(|r| r.features.len() != dim) {
        return Err(Error::Validation(format!(
            "inconsistent feature dimension: {} vs {dim}",
            r.features.len()
        )));
    }
    let mut classes: Vec<u32> = records.iter().map(|r| r.label).collect();
    classes.sort_unstable();
    classes.dedup();
    Ok((dim, classes))
}

/// Orders records independently of how they were supplied.
fn canonical_order(records: &[FeatureRecord]) -> Vec<FeatureRecord> {
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then_with(|| {
                a.features
                    .iter()
                    .zip(&b.features)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then_with(|| a.source.cmp(&b.source))
    });
    sorted
}

pub fn train(
    kind: ClassifierKind,
    records: &[FeatureRecord],
    hyper: &Hyper,
    seed: u64,
) -> Result<TrainedModel> {
    let (dim, classes) = check_records(records)?;
    if classes.len() < 2 {
        return Err(Error::Validation(
            "training needs records from at least two classes".into(),
        ));
    }
    let standardizer = hyper
        .standardize
        .then(|| Standardizer::fit(&canonical_order(records)));
    let prepare = |rs: Vec<FeatureRecord>| -> Vec<FeatureRecord> {
        match &standardizer {
            Some(s) => rs
                .into_iter()
                .map(|r| FeatureRecord {
                    features: s.apply(&r.features),
                    ..r
                })
                .collect(),
            None => rs,
        }
    };

    let params = match kind {
        ClassifierKind::Knn { k } => {
            if k == 0 {
                return Err(Error::Validation("knn needs k >= 1".into()));
            }
            ModelParams::Knn(KnnModel::fit(k, prepare(records.to_vec())))
        }
        ClassifierKind::Lda => {
            ModelParams::Lda(LdaModel::fit(&prepare(canonical_order(records)), &classes)?)
        }
        ClassifierKind::SvmLinear => ModelParams::SvmLinear(SvmModel::fit(
            &prepare(canonical_order(records)),
            &classes,
            &hyper.svm,
        )?),
        ClassifierKind::RandomForest => ModelParams::RandomForest(ForestModel::fit(
            &prepare(canonical_order(records)),
            &classes,
            &hyper.forest,
            seed,
        )),
    };

    Ok(TrainedModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        kind,
        hyper: hyper.clone(),
        train_seed: seed,
        dim,
        classes,
        standardizer,
        params,
    })
}

pub fn predict(model: &TrainedModel, features: &[f64]) -> Result<u32> {
    if features.len() != model.dim {
        return Err(Error::Validation(format!(
            "feature length {} does not match model dimension {}",
            features.len(),
            model.dim
        )));
    }
    let scaled;
    let x = match &model.standardizer {
        Some(s) => {
            scaled = s.apply(features);
            &scaled[..]
        }
        None => features,
    };
    Ok(match &model.params {
        ModelParams::Knn(m) => m.predict(x),
        ModelParams::Lda(m) => m.predict(x),
        ModelParams::SvmLinear(m) => m.predict(x),
        ModelParams::RandomForest(m) => m.predict(x, &model.classes),
    })
}
