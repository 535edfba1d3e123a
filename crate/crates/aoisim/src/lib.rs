//! Time-slotted simulator and per-slot optimizer for multi-UAV-assisted
//! backscatter sensing networks.
//!
//! Ground users backscatter small sensing samples to hovering multi-antenna
//! UAVs, which forward them to a base station over NOMA. The long-term goal
//! is to keep the time-averaged age-of-information low; a virtual-queue
//! (drift-plus-penalty) decomposition turns that into one control problem
//! per slot, solved by block coordinate descent over three blocks:
//!
//! 1. access control — which GUs upload this slot ([`access`]),
//! 2. beamforming — penalized SDP with rank-one extraction ([`beamform`]),
//! 3. mobility — hover positions and time split via successive convex
//!    approximation ([`mobility`]).
//!
//! [`driver`] orchestrates the loop and the baselines; [`solver`] holds the
//! shared first-order convex engine; [`verify`] bundles the property suites
//! behind the CLI `verify` subcommand.

pub mod access;
pub mod aoi;
pub mod beamform;
pub mod channel;
pub mod driver;
pub mod linkmodel;
pub mod mobility;
pub mod output;
pub mod scenario;
pub mod solver;
pub mod verify;

pub use scenario::{load_scenario, Scenario, SlotState};
