//! Experiment orchestration for the pdmp samplers: declarative configs,
//! dataset handling with cached bound tables, end-to-end runs with summary
//! tables, the sample-size sweep and figure-data exports. Everything is
//! reproducible from the manifest alone.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod export;
pub mod summary;
pub mod table1;
