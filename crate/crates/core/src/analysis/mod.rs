//! Evaluation, factor interpretation, persuasiveness effects and the
//! tf-idf logistic-regression baseline.

mod metrics;

pub use metrics::{
    binary_f1, evaluate, evaluate_with, metrics_csv, positive_first, write_metrics_csv,
    EvaluationReport, MetricsRow, PairPrediction, Side,
};

mod interpret;

pub use interpret::{
    assignment_map, factor_summaries, histogram_csv, strong_topic_count, strong_topic_histogram,
    strong_topics, top_word_probs, top_words, weight_trace_csv, AssignmentMap, FactorSummary,
    HistogramRow, WordAnnotation,
};

mod effects;

pub use effects::{
    discourse_effect_over_turns, effect_csv, logistic, masked_factor_effect, EffectRow,
};

mod baseline;

pub use baseline::{lr_tfidf_baseline, BaselineOptions, LrTfidf, TfidfFeatures};
