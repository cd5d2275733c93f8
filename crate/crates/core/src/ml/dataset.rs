use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::error::{ensure, Error, Result};
use crate::features::{FeatureMeta, FeatureVector};
use crate::seeds;

/// Feature rows with class labels and the extraction settings that produced
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub meta: FeatureMeta,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<String>, meta: FeatureMeta) -> Result<Self> {
        let ds = Self {
            features,
            labels,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Builds a dataset from labeled feature vectors that share metadata.
    pub fn from_vectors(vectors: Vec<(FeatureVector, String)>) -> Result<Self> {
        let Some((first, _)) = vectors.first() else {
            return Err(Error::Dataset("no feature vectors".into()));
        };
        let meta = first.meta.clone();
        let mut features = Vec::with_capacity(vectors.len());
        let mut labels = Vec::with_capacity(vectors.len());
        for (v, label) in vectors {
            meta.check_matches(&v.meta)?;
            features.push(v.values);
            labels.push(label);
        }
        Self::new(features, labels, meta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} labels",
                self.features.len(),
                self.labels.len()
            )));
        }
        let width = self.meta.size();
        if let Some((i, row)) = self
            .features
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != width)
        {
            return Err(Error::Dataset(format!(
                "row {i} has {} features, expected {width}",
                row.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.meta.size()
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }

    /// Row indices of each class, classes sorted, rows in dataset order.
    pub(crate) fn indices_by_class(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, l) in self.labels.iter().enumerate() {
            map.entry(l.as_str()).or_default().push(i);
        }
        map
    }

    pub fn subset(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: rows.iter().map(|&i| self.features[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i].clone()).collect(),
            meta: self.meta.clone(),
        }
    }
}

/// Stratified train/test split. Each class contributes
/// `round(fraction * n_c)` rows to the training side, clamped so both sides
/// keep at least one. Rows keep their original relative order.
pub fn split_dataset(
    dataset: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    ensure!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train fraction must lie strictly between 0 and 1, got {train_fraction}"
    );
    dataset.validate()?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, (label, rows)) in dataset.indices_by_class().into_iter().enumerate() {
        if rows.len() < 2 {
            return Err(Error::Dataset(format!(
                "class `{label}` has {} sample(s); at least 2 are needed to split",
                rows.len()
            )));
        }
        let n_train =
            ((train_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        let mut shuffled = rows;
        shuffled.shuffle(&mut seeds::substream(seed, seeds::SPLIT, c as u64));
        train.extend_from_slice(&shuffled[..n_train]);
        test.extend_from_slice(&shuffled[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Assigns every row to one of `k` folds, dealing each shuffled class
/// round-robin so class proportions are preserved.
pub fn stratified_folds(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<usize>> {
    ensure!(k >= 2, "need at least 2 folds");
    let mut fold = vec![0; dataset.len()];
    let mut offset = 0;
    for (c, (_, rows)) in dataset.indices_by_class().into_iter().enumerate() {
        let mut shuffled = rows;
        shuffled.shuffle(&mut seeds::substream(seed, seeds::FOLDS, c as u64));
        for (j, &i) in shuffled.iter().enumerate() {
            fold[i] = (offset + j) % k;
        }
        offset += shuffled.len();
    }
    Ok(fold)
}
