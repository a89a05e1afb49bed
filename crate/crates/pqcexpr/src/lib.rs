pub mod atomic;
pub mod catalog_file;
pub mod dataset_file;
pub mod model_file;
pub mod pipeline;
pub mod report;
pub mod run_config;
pub mod sampling;
