use serde::{Deserialize, Serialize};

use super::FeatureRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub epochs: usize,
    pub lambda: f64,
    /// Step size of epoch `e` (1-based) is `step0 / sqrt(e)`.
    pub step0: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            epochs: 200,
            lambda: 1e-4,
            step0: 0.5,
        }
    }
}

/// Linear soft-margin classifier `sign(w·x + b)`, fitted by full-batch
/// sub-gradient descent on the L2-regularized hinge loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub classes: [u32; 2],
}

impl SvmModel {
    pub fn fit(records: &[FeatureRecord], classes: &[u32], params: &SvmParams) -> Result<Self> {
        let &[c0, c1] = classes else {
            return Err(Error::Validation(
                "linear SVM is a two-class classifier".into(),
            ));
        };
        let d = records[0].features.len();
        let n = records.len() as f64;
        let ys: Vec<f64> = records
            .iter()
            .map(|r| if r.label == c1 { 1.0 } else { -1.0 })
            .collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut grad = vec![0.0; d];
        for epoch in 1..=params.epochs {
            grad.iter_mut()
                .zip(&w)
                .for_each(|(g, wi)| *g = params.lambda * wi);
            let mut grad_b = 0.0;
            for (r, &y) in records.iter().zip(&ys) {
                let margin = y * (dot(&w, &r.features) + b);
                if margin < 1.0 {
                    for (g, v) in grad.iter_mut().zip(&r.features) {
                        *g -= y * v / n;
                    }
                    grad_b -= y / n;
                }
            }
            let step = params.step0 / (epoch as f64).sqrt();
            w.iter_mut().zip(&grad).for_each(|(wi, g)| *wi -= step * g);
            b -= step * grad_b;
        }
        Ok(SvmModel {
            weights: w,
            bias: b,
            classes: [c0, c1],
        })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> u32 {
        if self.decision(x) > 0.0 {
            self.classes[1]
        } else {
            self.classes[0]
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
