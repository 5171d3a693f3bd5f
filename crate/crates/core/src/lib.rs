//! Deterministic, seedable simulation core for online multi-unit auctions
//! with budgeted agents arriving in random order.
//!
//! The crate provides:
//!
//! * exact-rational domain types for agents, instances and outcomes
//!   ([`model`]),
//! * the greedy posted-price allocation procedures for divisible and
//!   indivisible items, together with an exact-expectation oracle over
//!   small agent sets ([`allocation`]),
//! * price and benchmark oracles: optimal uniform price, heterogeneous-price
//!   optimum, market clearing price, liquid-welfare optimum and the
//!   market-size parameter epsilon ([`pricing`]),
//! * the random-sampling online mechanism prototype and its revenue and
//!   liquid-welfare instantiations, the online modified VCG mechanism, and
//!   several offline reference mechanisms ([`mechanisms`]),
//! * Monte-Carlo truthfulness audits with common random numbers, per-run
//!   feasibility checks and seeded metric estimation ([`audit`]).
//!
//! All monetary and quantity arithmetic is exact rational; floating point
//! appears only in Monte-Carlo summary statistics (means, confidence
//! half-widths). Every randomized operation takes an explicit RNG handle or
//! a pre-drawn coin transcript, so identical seeds give identical results.
//!
//! The crate is `no_std` (with `alloc`); file formats and the experiment
//! CLI live in the companion `budsec` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod allocation;
pub mod audit;
pub mod mechanisms;
pub mod model;
pub mod pricing;
pub mod rational;
pub mod rng;

pub use model::{AgentId, AgentType, MarketInstance, Outcome, Report, Time, Trace};
pub use rational::{ExtValue, Rat};
pub use rng::TrialRng;
