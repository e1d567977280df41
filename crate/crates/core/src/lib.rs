//! Rainfall-runoff modelling with a small from-scratch LSTM, plus the
//! interpretability toolkit built around it: exact backpropagation-through-time
//! gradients, integrated-gradients input attribution, time-steps-of-influence
//! (TSOI) extraction, and memory-cell vs. storage-state correlation analysis.
//!
//! The crate is organised around the pipeline:
//!
//! 1. [`data`] — parse daily forcing/discharge CSVs, normalize by training-period
//!    statistics, window into fixed-length samples, split chronologically.
//! 2. [`lstm`] — model parameters, the cell recurrence, and the full-sequence
//!    forward pass with a cached trace ([`checkpoint`] persists parameters).
//! 3. [`grad`] — reverse-mode gradients through the unrolled sequence, for the
//!    output neuron or a single memory cell, w.r.t. inputs and parameters.
//! 4. [`train`] — RMSprop on mean squared error with validation-based model
//!    selection ([`metrics`] provides Nash-Sutcliffe efficiency).
//! 5. [`attribution`] — integrated gradients with completeness checking.
//! 6. [`analysis`] — TSOI series and day-of-year quantiles, cell/state
//!    correlations, single-cell inspection bundles.
//! 7. [`synthetic`] — a deterministic toy catchment (degree-day snow store plus
//!    a linear soil reservoir) and constructed-weight models, used as oracles.
//! 8. [`plot`] — dependency-free SVG figure emission.
//!
//! All arithmetic is `f64`; every operation is deterministic for a fixed seed.

pub mod analysis;
pub mod attribution;
pub mod checkpoint;
pub mod data;
pub mod grad;
pub mod lstm;
pub mod metrics;
pub mod plot;
pub mod synthetic;
pub mod train;
