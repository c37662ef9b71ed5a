pub mod error;
pub mod export;
pub mod analysis;
pub mod cmos;
pub mod config;
pub mod controller;
pub mod integrator;
pub mod model;
pub mod numeric;
pub mod phase;
pub mod waveform;
