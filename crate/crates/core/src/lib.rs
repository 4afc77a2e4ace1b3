//! bridgeflow: traffic volume estimation from bridge structural-health
//! sensor signals, supervised by camera-derived vehicle labels.
//!
//! Stage 1 turns tracked vehicles into time-aligned fractional window labels
//! and trains a regression model on preprocessed strain or acceleration
//! windows. Stage 2 runs that model on sensor signals alone to produce hourly
//! counts per lane and vehicle class.
//!
//! Module map:
//!
//! - [`types`], [`partition`]: domain records, validators, dataset splits
//! - [`geolabel`]: homography calibration, track-to-event conversion,
//!   sensor-plane synchronization, fractional labels
//! - [`dsp`]: resampling, detrending, drift removal, Butterworth filtering,
//!   windowing, noise augmentation
//! - [`simgen`]: synthetic bridge responses paired with ground-truth events
//! - [`nets`]: feature/CNN encoders, GATv2 layers, multi-task heads
//! - [`train`]: losses, schedule, AdamW, the training loop
//! - [`baseline`]: peak-detection vehicle counting
//! - [`metrics`]: hourly aggregation, MAE, generalized accuracy
//! - [`io`], [`config`], [`stages`]: file formats and the staged pipeline

pub mod baseline;
pub mod config;
pub mod dsp;
mod error;
pub mod geolabel;
pub mod io;
pub mod metrics;
pub mod nets;
pub mod partition;
pub mod simgen;
pub mod stages;
pub mod train;
pub mod types;

pub use bridgeflow_tensor as tensor;
pub use error::{Error, Result};
pub use types::{
    category_index, CategoryCounts, LaneId, ModelGraph, SensorModality, SignalRecord,
    TrafficCategory, Validate, VehicleClass, VehicleEvent, Violation, WindowSample,
    NUM_CATEGORIES,
};
