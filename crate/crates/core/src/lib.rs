//! Deterministic discrete-event simulation of an economy-driven utility
//! grid: priced resources, a market directory, a bank, a data grid with
//! replica selection, a deadline/budget-constrained broker and a
//! proportional-share cluster scheduler, driven by scenario files and
//! parameter-sweep plans.
//!
//! Every model is generic over [`Scalar`]; the aliases below fix the two
//! instantiations in common use.

pub mod bank;
pub mod broker;
pub mod cluster;
pub mod data;
pub mod grid;
pub mod ids;
pub mod kernel;
pub mod market;
pub mod runner;
pub mod scalar;
pub mod scenario;
pub mod sweep;
pub mod world;

use num_rational::BigRational;

pub use scalar::Scalar;

/// Exact rational arithmetic.
pub type Exact = BigRational;

pub type World = world::World<f64>;
pub type ExactWorld = world::World<Exact>;
pub type Bank = bank::Bank<f64>;
pub type ExactBank = bank::Bank<Exact>;
pub type Cluster = cluster::Cluster<f64>;
pub type ExactCluster = cluster::Cluster<Exact>;
pub type DataGrid = data::DataGrid<f64>;
pub type SchedulePlan = broker::SchedulePlan<f64>;
pub type JobSet = sweep::JobSet<f64>;
