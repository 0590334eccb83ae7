//! Graph surrogate of circuit performance: edge features, the edge-centric
//! message-passing model, training and head-only fine-tuning.

mod features;
mod model;
mod train;

pub use features::{rescale_inputs, unit_scale_table, FeaturePlan, GraphBatch, PlanGroup};
pub use model::{
    masked_mse, masked_mse_value, message_pass, BoundForward, EdgeNet, ForwardConfig, ForwardMeta,
    ForwardModel, UpdateMlp, UpdateNet,
};
pub use train::{
    evaluate, finetune_head, train_forward, ForwardReport, GraphCache, GraphSample, MetricReport, report_from_predictions, TrainConfig,
    TrainHistory,
};
