//! Binary formats: FVT1 tensors and FVM1 model containers.

mod bytes;
pub mod fvm;
pub mod fvt;

pub use fvm::{load_fvm, load_gmm, load_net, load_pca, load_svm, read_fvm, save_fvm, write_fvm, Record};
pub use fvt::{load_fvt, load_vector_batch, read_fvt, save_fvt, save_vector_batch, write_fvt, VectorEntry};
