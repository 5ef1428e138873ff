//! Learn the continuous evolution of a probability distribution from
//! discrete-time snapshots by projecting it into the weight space of an
//! autoregressive density network and integrating a learned vector field
//! (ODE or spline-controlled CDE) over those weights.
//!
//! Pipeline: `sim` generates ground-truth trajectories and snapshots;
//! `pretrain` fits one backbone weight vector per snapshot time (the
//! anchors); `train` fits an attention hypernetwork over the weight graph
//! whose flow reconstructs the anchors; `evaluate` rolls the flow across a
//! fine time grid and scores it against held-out snapshots.

pub mod autoencoder;
pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod gradcheck;
pub mod hypernet;
pub mod integrate;
pub mod layout;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod pretrain;
pub mod rng;
pub mod sim;
pub mod spline;
pub mod table;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod weight_graph;

pub use error::{Error, Result};
pub use tensor::Tensor;
