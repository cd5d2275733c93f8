//! Glue between recordings, features and models.

use log::info;

use crate::config::RunConfig;
use crate::error::{ensure, Result};
use crate::exec::Execution;
use crate::features::WptFftExtractor;
use crate::io::Recording;
use crate::ml::{
    split_dataset, train_forest_with, tune_bayesian, ForestModel, ForestParams, HyperparamSpace,
    LabeledDataset, TuningResult,
};
use crate::signal::{segment_signal, SignalSegment};

/// Cuts every recording into labeled windows, recording order first.
pub fn segment_recordings(
    recordings: &[Recording],
    window: usize,
    hop: usize,
) -> Result<Vec<SignalSegment>> {
    let mut out = Vec::new();
    for r in recordings {
        let segs = segment_signal(&r.signal.samples, r.signal.sample_rate, window, hop)?;
        out.extend(segs.into_iter().map(|s| s.with_label(r.label.clone())));
    }
    Ok(out)
}

/// Feature table of labeled segments; rows follow segment order.
pub fn extract_dataset(
    segments: &[SignalSegment],
    extractor: &WptFftExtractor,
    exec: Execution,
) -> Result<LabeledDataset> {
    ensure!(!segments.is_empty(), "no segments to extract");
    let vectors = extractor.extract_batch(segments, exec)?;
    let labeled = vectors
        .into_iter()
        .zip(segments)
        .map(|(v, s)| {
            let label = s
                .label
                .clone()
                .ok_or_else(|| crate::Error::Dataset("segment without a class label".into()))?;
            Ok((v, label))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::from_vectors(labeled)
}

/// Recordings to feature table using the window, hop, level, peak count and
/// wavelet of `cfg`.
pub fn features_from_recordings(
    recordings: &[Recording],
    cfg: &RunConfig,
    exec: Execution,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    let segments = segment_recordings(recordings, cfg.window, cfg.hop())?;
    let extractor = WptFftExtractor::new(cfg.level, cfg.peaks, &cfg.wavelet)?;
    info!(
        "extracting {} segments of {} samples (k={}, m={}, {})",
        segments.len(),
        cfg.window,
        cfg.level,
        cfg.peaks,
        cfg.wavelet
    );
    extract_dataset(&segments, &extractor, exec)
}

/// Trains with default parameters when `tune_budget` is 0, otherwise tunes
/// by Bayesian optimization first.
pub fn train_model(
    train: &LabeledDataset,
    tune_budget: usize,
    seed: u64,
    exec: Execution,
) -> Result<(ForestModel, Option<TuningResult>)> {
    let (params, tuning) = if tune_budget == 0 {
        (ForestParams::default(), None)
    } else {
        let space = HyperparamSpace::forest(train.n_features(), tune_budget);
        let (p, t) = tune_bayesian(train, &space, seed, exec)?;
        info!(
            "tuned forest: trees={} depth={} leaf={} fps={:?} (cv accuracy {:.4})",
            p.n_trees,
            p.max_depth,
            p.min_samples_leaf,
            p.features_per_split,
            t.best_trial().objective
        );
        (p, Some(t))
    };
    Ok((train_forest_with(train, &params, seed, exec)?, tuning))
}

/// Stratified split followed by training on the larger part.
pub fn split_and_train(
    data: &LabeledDataset,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<(ForestModel, LabeledDataset, LabeledDataset)> {
    let (train, test) = split_dataset(data, cfg.train_fraction, cfg.seed)?;
    let (model, _) = train_model(&train, cfg.tune_budget, cfg.seed, exec)?;
    Ok((model, train, test))
}
