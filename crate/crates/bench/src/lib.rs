//! Shared fixtures for the criterion benchmarks.

use covert_core::ChannelParams;

/// Operating point used throughout the oracle cross-checks.
pub fn reference_channel() -> ChannelParams {
    ChannelParams::new(0.6, 0.5).expect("valid reference channel")
}

/// Mean photon number paired with [`reference_channel`].
pub const REFERENCE_NBAR_S: f64 = 0.2;
