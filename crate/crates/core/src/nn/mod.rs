//! Multilayer perceptron substrate: rectifier hidden layers, linear logits,
//! hand-written backpropagation and SGD with Nesterov momentum.

mod lr;
mod matrix;
mod mlp;
mod optim;

pub use lr::LrSchedule;
pub use matrix::Matrix;
pub use mlp::{ForwardTrace, Mlp};
pub use optim::Sgd;
