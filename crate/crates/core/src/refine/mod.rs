//! Segmentation head trained on graph-cut pseudo masks.
//!
//! Each step draws `p ~ U(0, 1)`. Below the threshold the head is fitted to
//! the frame's own pseudo mask; otherwise its prediction is warped into a
//! neighbouring frame and fitted to that frame's pseudo mask. Inference needs
//! only the frame itself.

mod adam;
mod head;
mod train;

pub use adam::{adam_step, AdamState, DEFAULT_LR};
pub use head::{
    decode_seghead, encode_seghead, input_tensor, read_seghead, seghead_init, write_seghead, ForwardPass, SegHead,
    Tensor, INPUT_CHANNELS, KERNEL, LAYERS, PARAM_COUNT,
};
pub use train::{
    infer, l1_loss, loss_and_gradient, sample_neighbor, train, warped_loss, Branch, FlowProvider, FlowTable,
    StepRecord, TrainConfig, TrainLog,
};
