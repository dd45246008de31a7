//! Quantitative evaluation against the synthetic oracle: attribute
//! transfer, identity preservation, the discriminator ablation and the
//! augmentation-versus-classifier study.

pub mod ablation;
pub mod classifier;
pub mod kfold;
pub mod metrics;
pub mod report;

pub use ablation::{run_ablation, AblationRun, Regime};
pub use classifier::{train_classifier, Classifier, ClassifierConfig};
pub use kfold::{
    assign_folds, augmentation_study, gen_classification_benchmark, kfold_evaluate, AugmentMode,
    BenchmarkConfig, ClassificationBenchmark, KFoldResult,
};
pub use metrics::{
    evaluate_transfer, identity_error, spearman, sweep_responses, transfer_accuracy, FaceSynthesizer,
    ModelSynthesizer, OracleSynthesizer, TransferEval,
};
pub use report::{emit_report, mean_std, parse_report, EvalReport, ReportRow, REPORT_HEADER};
