//! Simulated pipeline for running obfuscated quantum circuits under a
//! trusted-execution contract: clients lower circuits to pulse schedules,
//! obfuscate them, and seal the inverting metadata; a scheduling service
//! stores and dispatches jobs to backend-pinned trusted controllers; the
//! controllers de-obfuscate, execute with randomized outputs, and seal the
//! flip masks clients need to recover true results.

pub mod client;
pub mod codec;
pub mod controller;
pub mod envelope;
pub mod keyfiles;
pub mod model;
pub mod obfuscation;
pub mod service;
pub mod sim;
pub mod wire;
pub mod workload;
