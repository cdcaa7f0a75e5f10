//! Synthetic conflict dataset generator.

pub mod io;
mod profile;
mod record;
mod simulate;
mod synth;

pub use profile::{sample_threshold, Intensity, IntensityProfile, SLA_CEILING};
pub use record::{Rcp, SnapshotRecord};
pub use simulate::{
    breach_radius, gaussian_response, select_icp, simulate, simulate_to_vec, SimConfig, Simulator,
    BREACH_BAND, DEFAULT_SIGMA, MAX_DRIFT, NOISE,
};
pub use synth::{synthesize_entities, Buckets, LATENT_FANOUT};

/// Default probability that a non-seeded ICP or KPI is shared by two xApps.
pub const DEFAULT_SHARE_PROB: f64 = 0.3;
