//! Tabular and message-passing conflict classifiers trained from scratch.

mod metrics;
mod model;
mod smote;
mod train;

pub use metrics::{ClassMetrics, Confusion, EvalReport, MeanSe, RunMetrics};
pub use model::{
    argmax_label, gradient_check, softmax, Architecture, ClassifierModel, EncodingDescriptor, Input,
    InputKind, CLASSES, GRAD_CHECK_FLOOR, GRAD_CHECK_STEP, MODEL_FORMAT_VERSION,
};
pub use smote::{interpolate, smote, smote_filtered, Provenance, SmoteConfig, SmoteOutput};
pub use train::{
    evaluate, fit, inference_latency, latency_us, predict_batch, predict_probs, run_seeds,
    stratified_split, train, EncodedSet, TrainConfig, TrainMetrics, TrainOutput, DEFAULT_SMOTE_CAP,
    LATENCY_BATCH, LATENCY_TRIALS, LATENCY_WARMUP_BATCHES,
};
