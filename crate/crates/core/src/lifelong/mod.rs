//! Lifelong hashing phase: codes new-category data and adapts ImgNet and
//! TxtNet while the original codes stay fixed.

mod objective;
mod trainer;

pub use objective::{
    dcc_objective, dcc_update, dcc_update_bit, grad_lifelong_imgnet, grad_lifelong_txtnet, lifelong_loss, output_grad_rows,
    DccWorkspace, LifelongLoss, LifelongSide, LifelongWeights,
};
pub use trainer::{
    sample_training_set, train_lifelong, train_lifelong_with, write_lifelong_trace, LifelongModel, LifelongTraceRow,
    TrainingSample,
};
