use serde::{Deserialize, Serialize};

use super::{FeatureRecord, LDA_RIDGE};
use crate::error::{Error, Result};
use crate::linalg::{solve_symmetric, DenseMatrix};

/// Two-class Fisher discriminant: project onto `w`, compare with the
/// midpoint of the projected class means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub class_means: [Vec<f64>; 2],
    pub classes: [u32; 2],
}

impl LdaModel {
    pub fn fit(records: &[FeatureRecord], classes: &[u32]) -> Result<Self> {
        let &[c0, c1] = classes else {
            return Err(Error::Validation("LDA is a two-class discriminant".into()));
        };
        let d = records[0].features.len();
        let mut means = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0usize; 2];
        for r in records {
            let c = usize::from(r.label == c1);
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(&r.features) {
                *m += v;
            }
        }
        for c in 0..2 {
            means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
        }

        let dof = (records.len().saturating_sub(2)).max(1) as f64;
        let mut cov = DenseMatrix::zeros(d);
        for r in records {
            let mu = &means[usize::from(r.label == c1)];
            let centered: Vec<f64> = r.features.iter().zip(mu).map(|(v, m)| v - m).collect();
            for i in 0..d {
                for j in i..d {
                    cov.set(i, j, cov.get(i, j) + centered[i] * centered[j]);
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov.get(i, j) / dof + if i == j { LDA_RIDGE } else { 0.0 };
                cov.set(i, j, v);
                cov.set(j, i, v);
            }
        }
        let diff: Vec<f64> = means[1].iter().zip(&means[0]).map(|(a, b)| a - b).collect();
        let (weights, _) = solve_symmetric(&cov, &diff)
            .ok_or_else(|| Error::Degenerate("pooled covariance is singular".into()))?;
        let project = |x: &[f64]| -> f64 { weights.iter().zip(x).map(|(w, v)| w * v).sum() };
        let threshold = 0.5 * (project(&means[0]) + project(&means[1]));
        Ok(LdaModel {
            weights,
            threshold,
            class_means: means,
            classes: [c0, c1],
        })
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() - self.threshold
    }

    pub fn predict(&self, x: &[f64]) -> u32 {
        if self.score(x) > 0.0 {
            self.classes[1]
        } else {
            self.classes[0]
        }
    }
}
