//! Ingestion of PV metadata, power series and HRV rasters, quality
//! filtering, and assembly into training series.

pub mod assemble;
pub mod filter;
pub mod hrv;
pub mod metadata;
pub mod power;

pub use assemble::{assemble, rows_to_inputs, rows_to_training_set, AssembledSeries, SeriesRow};
pub use filter::{filter_systems, FilterOutcome, NightThreshold, RemovalReason, RemovedSystem};
pub use hrv::{
    hrv_patch_mean, load_hrv, read_hrv, read_hrv_csv, save_hrv, write_hrv, HrvFrame, HrvRasterStack, RasterGeometry,
    DEFAULT_SENSOR_MAX,
};
pub use metadata::{load_metadata, read_metadata, write_metadata, MetadataLoad, PvSystem, SkippedRow};
pub use power::{load_power, read_power, write_power, PowerData, PowerSeries};
