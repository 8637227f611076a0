//! Channel-wise distribution-aware quantization of convolution layers.
//!
//! Feature maps are standardized per channel by their own mean and standard deviation before
//! uniform quantization; weights share an RMS scale per group. Convolutions then run through
//! integer pipelines whose accumulator widths are planned and audited, and every pipeline has a
//! closed-form operation ledger for BOPs and energy accounting.

pub mod cost;
pub mod exec;
pub mod metrics;
pub mod qconv;
pub mod quant;
pub mod tensor;

pub use exec::Exec;
