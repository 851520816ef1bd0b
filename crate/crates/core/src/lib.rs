//! Defaultable bond pricing when the hazard rate switches between two
//! levels according to the sign of the Brownian motion driving a
//! Black–Scholes stock.
//!
//! The crate covers closed-form and Monte Carlo prices, joint simulation of
//! the Brownian path and the default time, the multiplicative
//! decomposition of the pre-default value on lattices and trees, the
//! arbitrage construction for quasi-simple strategies, and statistical
//! verification of the martingale and submartingale properties.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decomposition;
pub mod engine;
pub mod error;
pub mod model;
pub mod pricing;
pub mod special;
pub mod stats;
pub mod strategy;
pub mod verify;

pub use error::{Error, Result};
pub use model::{validate_params, BrownianPath, DefaultTime, ModelParams, Scenario, SurvivalPath, TimeGrid};
pub use pricing::{
    bond_price_0, constant_hazard_curve, pre_default_value, pre_default_value_mc, survival_probability,
    PreDefaultValue, PriceMethod, PriceResult, TwoRegimeModel,
};
