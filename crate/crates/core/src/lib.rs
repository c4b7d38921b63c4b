//! Multi-label predictive network.
//!
//! An encoder LSTM reads a window of historical observations together with
//! the matching context; a decoder LSTM continues over the forecast window
//! using only the (known) future context. The summed decoder states form an
//! embedding whose per-dimension sign marks which fault labels occur in the
//! forecast window, and the per-step outputs localize them in time.

pub mod data;
pub mod decide;
pub mod error;
pub mod eval;
pub mod loss;
pub mod lstm;
pub mod metrics;
pub mod model;
pub mod persist;
pub mod tensor;
pub mod train;

pub use error::{MpnError, Result};
