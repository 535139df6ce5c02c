pub mod dataset;
pub mod encoder;
pub mod extract;
pub mod miner;
pub mod perturber;
pub mod records;
pub mod screen;
pub mod stats;
pub mod triage;
pub mod types;
