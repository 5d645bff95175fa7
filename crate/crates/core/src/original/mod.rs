//! Original hashing phase: learns LabelNet, ImgNet, TxtNet and the codes of
//! the original data.

mod objective;
mod trainer;

pub use objective::{
    grad_imgnet_output, grad_labelnet_output, grad_txtnet_output, inter_modality_loss, intra_modality_loss,
    original_loss, output_grad_rows, quantization_loss_original, total_original_loss, update_codes_original,
    OriginalLoss, OriginalWeights, Output, Representations, SimPair, Supervision, SupervisionMatrices,
};
pub use trainer::{
    train_original, train_original_with, write_original_trace, OriginalModel, OriginalTraceRow, TrainOptions,
    TrainingSet,
};
