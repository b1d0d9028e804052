//! Self-triggered sampling for linear sampled-data control: horizon
//! enumeration, quadratic stability certificates, conic state-space
//! partitions, the four triggering mechanisms, and closed-loop simulation.
//!
//! The crate is `no_std` + `alloc` by default; the `std` feature only adds a
//! wall clock for decision timing.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` is the NaN-rejecting validation idiom used throughout; index
// loops in the dense-matrix kernels mirror the textbook formulas they encode.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod certificates;
pub mod error;
pub mod horizons;
pub mod matrix;
pub mod num;
pub mod partition;
pub mod plant;
pub mod sim;
pub mod trigger;

pub use certificates::{
    find_perturbed_certificate, in_ellipsoid, MuVariant, PerturbedCertificate, PerturbedSearch,
    PerturbedVariant, StabilityCertificate, VariantGammas,
};
pub use error::{Error, Result};
pub use horizons::{HorizonSpace, SamplingHorizon};
pub use matrix::{expm, spectral_radius, two_norm, Matrix, SymmetricMatrix};
pub use partition::{epsilon_search, ConicPartition};
pub use plant::{Discretization, DiscretizationCache, PlantModel};
pub use sim::{
    motivational_report, run, verify_trace, Clock, DecisionRecord, Disturbance, Mechanism,
    MotivationalReport, NoClock, SimOptions, SimulationTrace, TraceCheck, TraceReport,
};
#[cfg(feature = "std")]
pub use sim::WallClock;
pub use trigger::{
    decide_offline, decide_online_perturbed, decide_online_unperturbed,
    precompute_offline_perturbed, precompute_offline_unperturbed, PolicyMode, RegionEntry,
    RegionPolicy, TieBreak, TriggerDecision, TriggerMode,
};
