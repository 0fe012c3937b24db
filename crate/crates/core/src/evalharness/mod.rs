//! Measures how useful synthetic images are for training a melanoma
//! classifier: training-set composition, augmentation, a pluggable
//! classifier, AUC and paired significance tests.

mod augment;
mod classifier;
mod dataset;
mod experiment;
mod stats;

pub use augment::{augment, AugmentParams};
pub use classifier::{
    bce_with_logits, tta_predict, Classifier, ClassifierConfig, ClassifierFactory,
    ClassifierRegistry, SmallCnn, DEFAULT_CLASSIFIER,
};
pub use dataset::{
    assemble_training_set, format_test_manifest, parse_test_manifest, standard_specs, DatasetSpec,
    Pools, Source, SourceCount,
};
pub use experiment::{
    build_report, run_all, run_experiment, ExperimentConfig, ExperimentReport, ReportRow,
    RunResult, SpecRuns, DEFAULT_REFERENCE, REPORT_CSV, REPORT_JSON, RUNS_JSON,
};
pub use stats::{
    auc, ln_gamma, mean_std, paired_t_test, regularized_incomplete_beta, student_t_cdf,
    student_t_two_sided, TTest, SIGNIFICANCE_LEVEL,
};
