//! Desk-scale stand-in for a robot workcell.
//!
//! The environment never learns which policy it is talking to. It scores each
//! action chunk by its cosine with the task direction shared with the
//! synthetic policies, and turns the mean alignment into a progress value via
//! [`crate::world::synthetic_env_step`]'s model.

use policy_gateway::protocol::fnv1a;
use policy_gateway::{alignment, target_direction, ActionChunk, CameraImage, Observation, PROPRIO_DIM};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::world::{env_progress, sample_categorical, WorldSpec};

#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    world: WorldSpec,
    instruction: String,
    bucket: usize,
    timestep: u64,
    alignment_sum: f64,
    actions_seen: usize,
    rng: ChaCha8Rng,
}

impl SyntheticEnv {
    /// A fresh scene. The task bucket is a function of `(instruction, seed)`,
    /// so two rollouts with the same instruction and seed face the same task.
    pub fn new(world: &WorldSpec, instruction: &str, seed: u64) -> Self {
        let scene_seed = fnv1a(&[instruction.as_bytes(), &seed.to_le_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);
        let bucket = sample_categorical(&world.params.nu, &mut rng);
        SyntheticEnv {
            world: world.clone(),
            instruction: instruction.to_string(),
            bucket,
            timestep: 0,
            alignment_sum: 0.0,
            actions_seen: 0,
            rng,
        }
    }

    pub fn bucket(&self) -> usize {
        self.bucket
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn observe(&self) -> Observation {
        let t = self.timestep as f64;
        Observation {
            protocol_version: policy_gateway::PROTOCOL_VERSION.to_string(),
            images: vec![CameraImage {
                camera: "exterior_1".into(),
                data: self.timestep.to_le_bytes().to_vec(),
            }],
            proprio: (0..PROPRIO_DIM).map(|d| (0.1 * t + d as f64).sin()).collect(),
            instruction: self.instruction.clone(),
            timestep: self.timestep,
        }
    }

    /// Executes a chunk; the clock advances by its horizon.
    pub fn apply(&mut self, chunk: &ActionChunk) {
        for (k, action) in chunk.actions.iter().enumerate() {
            let target = target_direction(&self.instruction, self.timestep + k as u64);
            self.alignment_sum += alignment(action, &target);
            self.actions_seen += 1;
        }
        self.timestep += chunk.actions.len() as u64;
    }

    /// Mean cosine of executed actions with the task direction, in `[0, 1]`.
    pub fn observed_skill(&self) -> f64 {
        if self.actions_seen == 0 {
            0.0
        } else {
            (self.alignment_sum / self.actions_seen as f64).clamp(0.0, 1.0)
        }
    }

    /// Progress in `[0, 1]` achieved by the rollout so far.
    pub fn progress(&mut self) -> f64 {
        let skill = self.observed_skill();
        env_progress(&self.world, skill, self.bucket, &mut self.rng)
    }
}
