//! Numeraire-invariant hedging of bond-market claims.
//!
//! The crate simulates discounted bond curves with deterministic volatility,
//! moves between the risk-neutral and forward (annuity-numeraire) measures,
//! and computes self-financing hedging strategies for claims of the form
//! `P_S(nu) * g(P_T(mu) / P_T(nu))`:
//!
//! * Clark-Ocone portfolios estimated by nested Monte Carlo ([`hedging`]),
//! * closed-form delta portfolios under a lognormal forward model ([`analytic`]),
//! * the Malliavin objects behind the representation ([`malliavin`]),
//! * and backtests of replication and self-financing ([`backtest`]).
//!
//! Everything here is `no_std` + `alloc`. The `parallel` feature (default)
//! spreads path batches over rayon without changing any result bit.
#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments, clippy::needless_range_loop, clippy::should_implement_trait)]

extern crate alloc;

pub mod analytic;
pub mod backtest;
pub mod error;
pub mod hedging;
pub mod malliavin;
pub mod market;
pub mod math;
pub mod nested;
mod par;
pub mod pricing;
pub mod instrument;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod vol;

pub use error::{Error, Result};
pub use instrument::{InstrumentKind, InstrumentSpec, Payoff};
pub use market::{BondCurve, DiscreteMeasure, ForwardCurve, TenorStructure};
pub use rng::SeedSpec;
pub use vol::VolSurface;
