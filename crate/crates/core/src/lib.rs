//! Toolkit for turning manually collected phenological count ledgers into
//! stage-indexed yield calibrations and harvest forecasts.
//!
//! A season of branch-level counts (buds, blossoms, cherries, harvest crops)
//! is ingested from CSV into a validated [`phenology::SeasonLedger`]. The
//! [`forecast`] module regresses each observation day's counts against the
//! harvest totals, producing a calibration table whose per-stage fits carry
//! significance statistics and the sufficient statistics for prediction
//! intervals. The [`sim`] module generates synthetic seasons from a
//! multiplicative survival model whose regression ground truth is known
//! analytically, which is what the test suite leans on. [`plot`] renders the
//! standard figures as plain SVG.
//!
//! The numeric core in [`regression`] is generic over the scalar type via
//! `num-traits`; the aliases below fix it to `f64`, which is what the rest
//! of the toolkit uses.

pub mod forecast;
pub mod ingest;
pub mod phenology;
pub mod plot;
pub mod regression;
pub mod sim;

use num_traits::{Float, FromPrimitive};

/// Scalar type the numeric core is generic over: any IEEE float works,
/// `f64` is the supported default.
pub trait Real: Float + FromPrimitive + std::fmt::Debug {}

impl<T> Real for T where T: Float + FromPrimitive + std::fmt::Debug {}

/// Double-precision regression fit, the toolkit default.
pub type Fit = regression::Fit<f64>;
/// Double-precision prediction with interval.
pub type Prediction = regression::Prediction<f64>;

pub use forecast::{CalibrationTable, Forecast, RiskWindow, ScoreWeights, StageKey};
pub use phenology::{
    build_ledger, BbchStage, CountRecord, ObjectType, SeasonLedger, Violation, WHOLE_TREE,
};
pub use sim::SimulationParams;
