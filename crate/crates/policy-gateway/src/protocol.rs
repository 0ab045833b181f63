//! Wire format spoken by policy inference servers.
//!
//! `POST /act` takes an [`Observation`] as JSON and returns an [`ActionChunk`].
//! Image bytes travel base64-encoded (standard alphabet, padded). `GET /healthz`
//! answers `200 ok` while the server is live.
//!
//! ```text
//! Observation {
//!   "protocol_version": "1",
//!   "images":      [{"camera": "exterior_1", "data": "<base64>"}, ...],
//!   "proprio":     [f64; 8],       7 joint positions + gripper
//!   "instruction": "put the cup in the sink",
//!   "timestep":    u64
//! }
//! ActionChunk {
//!   "actions": [[f64; 8], ...],    one row per step of the chunk
//!   "horizon": usize               == actions.len() >= 1
//! }
//! ```

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const PROTOCOL_VERSION: &str = "1";
pub const ACTION_DIM: usize = 8;
pub const PROPRIO_DIM: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraImage {
    pub camera: String,
    #[serde(serialize_with = "to_base64", deserialize_with = "from_base64")]
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(default = "default_version")]
    pub protocol_version: String,
    pub images: Vec<CameraImage>,
    pub proprio: Vec<f64>,
    pub instruction: String,
    pub timestep: u64,
}

fn default_version() -> String {
    PROTOCOL_VERSION.to_string()
}

impl Observation {
    pub fn new(instruction: impl Into<String>, timestep: u64) -> Self {
        Observation {
            protocol_version: default_version(),
            images: Vec::new(),
            proprio: vec![0.0; PROPRIO_DIM],
            instruction: instruction.into(),
            timestep,
        }
    }

    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if self.instruction.trim().is_empty() {
            problems.push("instruction is empty".to_string());
        }
        if self.proprio.len() != PROPRIO_DIM {
            problems.push(format!("proprio has {} entries, expected {PROPRIO_DIM}", self.proprio.len()));
        }
        if self.proprio.iter().any(|v| !v.is_finite()) {
            problems.push("proprio contains non-finite values".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub actions: Vec<Vec<f64>>,
    pub horizon: usize,
}

impl ActionChunk {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        let horizon = actions.len();
        ActionChunk { actions, horizon }
    }

    /// Every schema problem with this chunk; empty when it conforms.
    pub fn violations(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.actions.is_empty() {
            problems.push("action chunk is empty".to_string());
        }
        if self.horizon != self.actions.len() {
            problems.push(format!("horizon {} does not match {} actions", self.horizon, self.actions.len()));
        }
        for (k, a) in self.actions.iter().enumerate() {
            if a.len() != ACTION_DIM {
                problems.push(format!("action {k} has dimension {}, expected {ACTION_DIM}", a.len()));
            }
            if a.iter().any(|v| !v.is_finite()) {
                problems.push(format!("action {k} contains non-finite values"));
            }
        }
        problems
    }
}

fn to_base64<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&STANDARD.encode(bytes))
}

fn from_base64<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let text = String::deserialize(d)?;
    STANDARD.decode(text).map_err(serde::de::Error::custom)
}

/// 64-bit FNV-1a, used to derive stable seeds from strings.
pub fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        // Separator so ("ab", "c") and ("a", "bc") differ.
        h ^= 0xff;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Unit vector the reference task rewards at a given step.
///
/// Synthetic policies and the synthetic environment share this definition: a
/// policy's competence shows up as the cosine between its actions and this
/// direction.
pub fn target_direction(instruction: &str, timestep: u64) -> [f64; ACTION_DIM] {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(&[instruction.as_bytes(), &timestep.to_le_bytes()]));
    let mut v = [0.0; ACTION_DIM];
    loop {
        for x in v.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Cosine similarity of `a` with a unit vector `unit`; 0 for a zero action.
pub fn alignment(a: &[f64], unit: &[f64; ACTION_DIM]) -> f64 {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || a.len() != ACTION_DIM {
        return 0.0;
    }
    a.iter().zip(unit).map(|(x, y)| x * y).sum::<f64>() / norm
}

/// Fixed observation used by conformance probes.
pub fn canonical_observation() -> Observation {
    Observation {
        protocol_version: default_version(),
        images: vec![
            CameraImage {
                camera: "exterior_1".into(),
                data: vec![0x89, b'P', b'N', b'G', 0, 1, 2, 3],
            },
            CameraImage {
                camera: "wrist".into(),
                data: vec![0xff, 0xd8, 0xff, 0xe0],
            },
        ],
        proprio: vec![0.0, -0.5, 0.0, -2.0, 0.0, 1.5, 0.75, 0.0],
        instruction: "conformance probe: move the gripper".into(),
        timestep: 0,
    }
}
