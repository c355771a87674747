//! Minimal dense numerical kernel: row-major `f64` matrices, ReLU MLPs with
//! exact reverse-mode gradients, the distance/softmax primitives used by the
//! prototype classifier, SGD/Adam, and a portable checkpoint format.

mod checkpoint;
mod mat;
mod mlp;
mod ops;
mod optim;

pub use checkpoint::{
    load_model, read_checkpoint, save_model, sidecar_path, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use mat::Mat;
pub use mlp::{mlp_backward, mlp_forward, Backbone, ForwardCache, Grads, Layer, MlpParams};
pub use ops::{argmax, log_softmax_from_neg_dists, sq_euclidean};
pub use optim::{OptimKind, OptimState};
