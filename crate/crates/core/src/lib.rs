//! Joint spectrum sensing and scheduling for opportunistic secondary access.
//!
//! A central controller collects compressed measurements of the band occupancy from
//! secondary users, estimates which bands are idle, and allocates secondary traffic
//! across bands, trading secondary throughput against interference with primary users
//! and against sensing and transmission cost.

pub mod compression;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod measurement;
pub mod params;
pub mod planner;
pub mod recovery;
pub mod scheduler;
pub mod sim;
pub mod single_band;
pub mod stats;
pub mod streams;
