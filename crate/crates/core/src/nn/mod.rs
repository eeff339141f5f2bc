//! Small convolutional network trained on a main hinge loss plus optional
//! local convolutional supervision heads.

mod layers;
pub mod loss;
pub mod net;
pub mod spec;
pub mod train;

pub use loss::{hinge_loss, joint_loss};
pub use net::{ConvNet, Dense, ForwardOutput, HeadMaps, HeadParams, LossTerms, Params};
pub use spec::{ConvNetSpec, LayerSpec, LcsHeadSpec, Shape};
pub use train::{backward_and_step, batch_gradients, train, BatchLoss, SgdState, TrainConfig, TrainLogEntry};
