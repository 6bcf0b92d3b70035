//! Seedable simulator of a UAV acting as a mobile federated-learning
//! orchestrator for several device communities.
//!
//! The crate is organised bottom-up:
//!
//! - [`world`]: service area, configuration and device placement.
//! - [`channel`]: air-to-ground propagation, average packet error rate and
//!   its logistic approximation, uplink sampling.
//! - [`learning`]: synthetic community tasks, FedProx local training,
//!   aggregation and the coefficient-of-variation fairness metric.
//! - [`scheduling`]: reward matrix and the exact device-scheduling LP.
//! - [`trajectory`]: greedy graph initialisation, sequential convex
//!   trajectory refinement and the alternating round planner.
//! - [`mission`]: the round loop, baselines, metrics and Monte-Carlo sweeps.
//! - [`cli`]: the `uavfedsim` command-line front end.

pub mod channel;
pub mod cli;
pub mod error;
pub mod learning;
pub mod mission;
pub mod rng;
pub mod scheduling;
pub mod trajectory;
pub mod world;

pub use error::{Error, Result};
