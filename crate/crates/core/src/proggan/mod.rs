//! Class-conditional progressive GAN: noise plus a benign/melanoma label in,
//! lesion image out, grown from 4×4 one resolution stage at a time.

mod config;
mod label;
mod nets;
mod schedule;
mod train;

pub use config::PganConfig;
pub use label::{
    condition_concat, condition_concat_batch, format_label_file, labels_tensor, parse_label_file,
    ConditionLabel, MELANOMA_INDEX,
};
pub use nets::{blend_real, minibatch_stddev, pixel_norm, PganDiscriminator, PganGenerator};
pub use schedule::{fade_alpha, FadeState, ResolutionSchedule};
pub use train::{
    attach_labels, gradient_penalty, ratio_preserving_counts, sample_pgan, second_order_available,
    square_resize, train_pgan, LabeledImage, Pgan, PganOutcome, PganStepRecord,
    PGAN_CHECKPOINT_KIND, PGAN_METRICS_FILE,
};
