use rand::seq::SliceRandom;

use super::{check_records, predict, train, ClassifierKind, FeatureRecord, Hyper, TrainedModel};
use crate::error::{Error, Result};
use crate::image_io::LABEL_REAL;
use crate::synth::rng;

/// Accuracy summary; confusion rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<u32>,
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

impl EvalReport {
    /// Builds a report from `(truth, prediction)` pairs, treating them as a
    /// single fold.
    pub fn from_pairs(classes: &[u32], pairs: &[(u32, u32)]) -> Self {
        let mut classes = classes.to_vec();
        for &(t, p) in pairs {
            for c in [t, p] {
                if !classes.contains(&c) {
                    classes.push(c);
                }
            }
        }
        classes.sort_unstable();
        let pos = |c: u32| classes.binary_search(&c).unwrap();
        let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
        for &(t, p) in pairs {
            confusion[pos(t)][pos(p)] += 1;
        }
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..classes.len()).map(|i| confusion[i][i]).sum();
        let accuracy = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[i] as f64 / n as f64
                }
            })
            .collect();
        EvalReport {
            classes,
            confusion,
            accuracy,
            per_class_accuracy,
            fold_accuracies: vec![accuracy],
            mean_accuracy: accuracy,
        }
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn class_count(&self, class: u32) -> usize {
        self.classes
            .iter()
            .position(|&c| c == class)
            .map_or(0, |i| self.confusion[i].iter().sum())
    }
}

/// Scores a trained model on held-out records.
pub fn evaluate(model: &TrainedModel, test: &[FeatureRecord]) -> Result<EvalReport> {
    let pairs = test
        .iter()
        .map(|r| predict(model, &r.features).map(|p| (r.label, p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_pairs(&model.classes, &pairs))
}

/// Per-class record indices, classes ascending, indices in record order.
fn by_class(records: &[FeatureRecord]) -> Vec<(u32, Vec<usize>)> {
    let mut groups: Vec<(u32, Vec<usize>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        match groups.iter_mut().find(|(c, _)| *c == r.label) {
            Some((_, v)) => v.push(i),
            None => groups.push((r.label, vec![i])),
        }
    }
    groups.sort_by_key(|(c, _)| *c);
    groups
}

/// Class-stratified train/test partition. Each class contributes
/// `round(n_c · train_fraction)` records (at least one) to training; both
/// outputs keep the input order.
pub fn stratified_split(
    records: &[FeatureRecord],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<FeatureRecord>, Vec<FeatureRecord>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Validation(
            "train fraction must lie in (0, 1)".into(),
        ));
    }
    check_records(records)?;
    let groups = by_class(records);
    if groups.len() < 2 {
        return Err(Error::Validation(
            "stratified split needs records from at least two classes".into(),
        ));
    }
    let mut rng = rng(seed);
    let mut in_train = vec![false; records.len()];
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * train_fraction).round() as usize).clamp(1, idx.len());
        for &i in &idx[..n_train] {
            in_train[i] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = records.iter().zip(&in_train).partition(|(_, &t)| t);
    Ok((
        train.into_iter().map(|(r, _)| r.clone()).collect(),
        test.into_iter().map(|(r, _)| r.clone()).collect(),
    ))
}

/// Single 70/30-style holdout evaluation.
pub fn split_eval(
    kind: ClassifierKind,
    records: &[FeatureRecord],
    train_fraction: f64,
    hyper: &Hyper,
    seed: u64,
) -> Result<EvalReport> {
    let (tr, te) = stratified_split(records, train_fraction, seed)?;
    let model = train(kind, &tr, hyper, seed)?;
    evaluate(&model, &te)
}

/// Stratified k-fold cross-validation. Confusion and `accuracy` pool every
/// fold's predictions; `mean_accuracy` averages the per-fold accuracies.
pub fn kfold_cv(
    kind: ClassifierKind,
    records: &[FeatureRecord],
    folds: usize,
    hyper: &Hyper,
    seed: u64,
) -> Result<EvalReport> {
    if folds < 2 {
        return Err(Error::Validation(
            "cross-validation needs at least 2 folds".into(),
        ));
    }
    check_records(records)?;
    let groups = by_class(records);
    if groups.len() < 2 {
        return Err(Error::Validation(
            "cross-validation needs records from at least two classes".into(),
        ));
    }
    if let Some((c, idx)) = groups.iter().find(|(_, idx)| idx.len() < folds) {
        return Err(Error::Validation(format!(
            "class {c} has {} records, fewer than {folds} folds",
            idx.len()
        )));
    }
    let mut rng = rng(seed);
    let mut fold_of = vec![0usize; records.len()];
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            fold_of[i] = j % folds;
        }
    }

    let mut pairs = Vec::with_capacity(records.len());
    let mut fold_accuracies = Vec::with_capacity(folds);
    let mut classes = Vec::new();
    for f in 0..folds {
        let (test, train_set): (Vec<_>, Vec<_>) =
            records.iter().zip(&fold_of).partition(|(_, &k)| k == f);
        let train_set: Vec<FeatureRecord> = train_set.into_iter().map(|(r, _)| r.clone()).collect();
        let test: Vec<FeatureRecord> = test.into_iter().map(|(r, _)| r.clone()).collect();
        let model = train(kind, &train_set, hyper, seed.wrapping_add(f as u64))?;
        let report = evaluate(&model, &test)?;
        fold_accuracies.push(report.accuracy);
        classes = model.classes.clone();
        for r in &test {
            pairs.push((r.label, predict(&model, &r.features)?));
        }
    }
    let mut report = EvalReport::from_pairs(&classes, &pairs);
    report.mean_accuracy = fold_accuracies.iter().sum::<f64>() / folds as f64;
    report.fold_accuracies = fold_accuracies;
    Ok(report)
}

/// Real records paired with each fake source in turn, sources sorted.
pub fn pairwise_subsets(records: &[FeatureRecord]) -> Vec<(String, Vec<FeatureRecord>)> {
    let mut sources: Vec<&str> = records
        .iter()
        .filter(|r| r.label != LABEL_REAL)
        .map(|r| r.source.as_str())
        .collect();
    sources.sort_unstable();
    sources.dedup();
    sources
        .into_iter()
        .map(|s| {
            let subset = records
                .iter()
                .filter(|r| r.label == LABEL_REAL || r.source == s)
                .cloned()
                .collect();
            (s.to_string(), subset)
        })
        .collect()
}
