//! Evaluation: MaxN accuracy, detection quality, tracking accuracy and the
//! hyperparameter grid search.

mod accuracy;
mod detection;
mod grid;
mod mot;

pub use accuracy::{
    maxn_accuracy, mean_and_sd, read_truth_maxn, MaxNAccuracy, MaxNComparison, SpeciesComparison, TruthRow,
    VideoAccuracy, TRUTH_MAXN_HEADER,
};
pub use detection::{
    average_precision, map50, precision_recall_f1, read_detection_eval, ClassAp, DetectionEvalSet, EvalFrame,
    MapReport, PrecisionRecall, PredictedBox, DET_PRED_HEADER, DET_TRUTH_HEADER,
};
pub use grid::{format_cell, grid_search, GridAxis, GridCell, GridResult, GridRow, GridSpec};
pub use mot::{mota, read_ground_truth_mot, MotEvalSet, MotFrame, MotSummary, GT_MOT_HEADER};
