//! Clustering when distances come from two oracles: a cheap *weak* oracle
//! whose answer for each pair is wrong with probability `delta` (but stays
//! wrong on repeat), and an expensive *strong* oracle that always returns
//! the exact distance.
//!
//! The crate provides
//!
//! * [`metric`]: ground-truth point sets and metrics (the only source of true distances),
//! * [`oracle`]: metered strong/weak oracles with per-run query accounting,
//! * [`estimator`]: the median-over-ball distance estimate and the sampling
//!   distribution built on top of it,
//! * [`kmeans`]: oversampling k-means++ driven by estimated distances, the
//!   weighted reduction and final solve, plus the strong-oracle baseline,
//! * [`kcenter`]: weak-greedy ball carving with a radius search, exact greedy
//!   carving, and the farthest-point baseline,
//! * [`datasets`]: synthetic generators and file loaders,
//! * [`brute`]: exhaustive solvers for tiny instances,
//! * [`harness`]: sweeps, CSV records and SVG plots.
//!
//! With the `parallel` feature (on by default) the per-point estimate passes
//! run on the rayon pool. Results do not depend on the number of workers.

pub mod brute;
pub mod datasets;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod kcenter;
pub mod kmeans;
pub mod metric;
pub mod oracle;
mod par;
pub use par::with_workers;
mod prf;

pub use error::{Error, Result};
pub use metric::{Dataset, Metric, PointId};
pub use oracle::{Corruption, DistanceOracle, QueryLedger, StrongOracle, WeakOracle, WeakOracleConfig};
