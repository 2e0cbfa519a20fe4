//! Energy management for climate-controlled greenhouses.
//!
//! The crate is organised around the day-ahead lighting problem:
//!
//! * [`recipe`]: 24-hour PPFD schedules, DLI/TDLD arithmetic and
//!   plant-physiology validation.
//! * [`simulator`]: lumped thermal / humidity / CO₂ balances and per-device
//!   electrical loads.
//! * [`tariff`]: hourly-price + per-kWh adjustment + monthly demand charge
//!   billing, market data ingestion.
//! * [`forecast`]: encoder-only attention forecaster for price and solar
//!   radiation, outlier cleaning, online ensemble of overlapping forecasts.
//! * [`mpc`]: receding-horizon mixed-binary program for the artificial
//!   lighting schedule, with a branch-and-bound solver and an exhaustive
//!   oracle.
//! * [`pipeline`]: whole-year baseline vs optimised runs.
//!
//! Data-parallel loops (independent days, batch inference, per-sample
//! gradients) go through [`par`], which uses rayon when the `parallel`
//! feature is enabled and falls back to plain iterators otherwise.

pub mod forecast;
pub mod mpc;
pub mod par;
pub mod pipeline;
pub mod recipe;
pub mod simulator;
pub mod synth;
pub mod tariff;
pub mod timeseries;

pub use recipe::{LightingRecipe, PhysiologyBounds};
