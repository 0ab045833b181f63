//! Policy inference protocol, client, conformance probe, and synthetic servers.

pub mod client;
pub mod protocol;
pub mod synthetic;

pub use client::{normalize_endpoint, ConformanceReport, GatewayError, PolicyClient};
pub use protocol::{
    alignment, canonical_observation, target_direction, ActionChunk, CameraImage, Observation, ACTION_DIM,
    PROPRIO_DIM, PROTOCOL_VERSION,
};
pub use synthetic::{serve_synthetic, synthetic_chunk, Behavior, SyntheticPolicySpec, SyntheticServer, CHUNK_HORIZON};
