use serde::{Deserialize, Serialize};

use super::FeatureRecord;

/// Euclidean k-nearest-neighbor vote over the stored training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
}

impl KnnModel {
    pub fn fit(k: usize, records: Vec<FeatureRecord>) -> Self {
        let (points, labels) = records.into_iter().map(|r| (r.features, r.label)).unzip();
        KnnModel { k, points, labels }
    }

    /// Indices of the `k` nearest stored points; equal distances go to the
    /// lower index.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k, cmp);
            dist.truncate(k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    /// Majority label among the neighbors; vote ties go to the smaller id.
    pub fn predict(&self, x: &[f64]) -> u32 {
        let mut votes: Vec<(u32, usize)> = Vec::new();
        for i in self.neighbors(x) {
            let l = self.labels[i];
            match votes.iter_mut().find(|(c, _)| *c == l) {
                Some((_, n)) => *n += 1,
                None => votes.push((l, 1)),
            }
        }
        votes
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .expect("model holds at least one record")
    }
}
