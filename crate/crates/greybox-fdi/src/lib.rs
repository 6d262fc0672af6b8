//! Grey-box recurrent neural networks for fault detection and isolation,
//! generated automatically from structural models.

pub mod causal;
pub mod detect;
pub mod dm;
pub mod model;
pub mod mso;
pub mod pipeline;
pub mod plant;
pub mod rnn;
pub mod timeseries;
pub mod train;
