//! Locally-supervised deep hybrid model: Fisher Convolutional Vectors over
//! CNN feature maps, auxiliary-loss CNN training, and FC + FCV fusion for
//! linear classification.

pub mod eigen;
pub mod error;
pub mod fisher;
pub mod fusion;
pub mod gmm;
pub mod io;
pub mod kmeans;
pub mod nn;
pub mod pca;
pub mod svm;
pub mod tensor;

pub use error::{Error, Result};
pub use fisher::{encode_bow, encode_direct, encode_fcv, BowCodebook, FcvEncoder, FcvVector};
pub use gmm::{fit_gmm, EmConfig, GmmModel};
pub use pca::{fit_pca, PcaModel};
pub use svm::{predict, train_svm, SvmConfig, SvmModel};
pub use tensor::{channels_to_descriptors, max_abs_normalize, DescriptorSet, LabeledDataset, Rect, Tensor3};
