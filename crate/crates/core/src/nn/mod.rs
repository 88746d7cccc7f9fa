//! A small transformer encoder trained from scratch: flat parameters,
//! hand-written backward pass, AdamW.

mod optim;
mod transformer;

pub use optim::{clip_grad_norm, clip_grad_norms, AdamW, LinearSchedule};
pub use transformer::{BackboneConfig, SeqBatch, Tape, Transformer};
