//! Differentiable building blocks with analytic backward passes.
//!
//! Every forward returns its output together with a cache; the matching
//! backward consumes that cache by value, so a cache can feed exactly one
//! backward call.

mod bilstm;
mod fc;
mod lstm;
mod pool;
mod ti_conv;

pub use bilstm::{bilstm_backward, bilstm_forward, BiLstmCache, BiLstmGrads, BiLstmWeights};
pub use fc::{fc_backward, fc_forward, FcCache};
pub use lstm::{
    lstm_cell_backward, lstm_cell_step, lstm_cell_step_cached, lstm_sequence_backward,
    lstm_sequence_forward, LstmCellCache, LstmGrads, LstmSequenceCache, LstmWeights,
};
pub use pool::{
    avg_pool_backward, avg_pool_forward, max_pool_backward, max_pool_forward, AvgPoolCache,
    MaxPoolCache,
};
pub use ti_conv::{ti_conv_backward, ti_conv_forward, TiConvCache};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
