//! Random-forest classification, evaluation metrics and Gaussian-process
//! hyperparameter tuning.

mod dataset;
mod forest;
mod metrics;
mod tuner;

pub use dataset::{split_dataset, stratified_folds, LabeledDataset};
pub use forest::{
    train_forest, train_forest_with, ForestModel, ForestParams, Prediction, Tree, TreeNode,
};
pub use metrics::{binary_auc, evaluate, Evaluation};
pub use tuner::{
    bayesian_optimize, cross_val_accuracy, tune_bayesian, GaussianProcess, HyperparamSpace,
    ParamRange, Trial, TuningResult,
};
