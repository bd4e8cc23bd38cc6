//! Experiment runner for the Weyl-equation simulator: parses `.cfg` files,
//! runs the engines and writes CSV datasets plus a JSON run manifest.

pub mod config;
pub mod runner;
pub mod verify;
