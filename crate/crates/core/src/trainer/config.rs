use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::curriculum::CurriculumConfig;
use super::TrainError;
use crate::neural::{Bootstrap, LrSchedule, NetworkConfig, DEFAULT_CLIP_NORM};
use crate::replay::{BetaSchedule, ReplayConfig};

/// What to feed the recurrent state at the start of a replayed sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenInit {
    /// State recorded by the actor at the sequence boundary.
    #[default]
    Stored,
    Zero,
}

/// Per-actor exploration rate `ε_i = base^(1 + exponent·i/(N-1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonConfig {
    pub base: f64,
    pub exponent: f64,
}

impl Default for EpsilonConfig {
    fn default() -> Self {
        EpsilonConfig { base: 0.4, exponent: 7.0 }
    }
}

impl EpsilonConfig {
    pub fn for_actor(&self, index: usize, actor_count: usize) -> f64 {
        let frac = if actor_count <= 1 { 0.0 } else { index as f64 / (actor_count - 1) as f64 };
        self.base.powf(1.0 + self.exponent * frac)
    }
}

/// Training map family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    /// Independent obstacles with triangular-distributed density.
    #[default]
    Random,
    /// Maze of one-cell corridors.
    Corridor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    pub gamma: f64,
    pub n_step: usize,
    pub bootstrap: Bootstrap,
    pub batch_size: usize,
    pub seq_len: usize,
    pub max_learner_steps: u64,
    pub max_episode_len: usize,
    pub actor_count: usize,
    pub target_sync_period: u64,
    pub publish_period: u64,
    pub actor_refresh_steps: u64,
    pub warmup_sequences: usize,
    pub lr: LrSchedule,
    pub clip_norm: f64,
    pub epsilon: EpsilonConfig,
    pub replay: ReplayConfig,
    pub beta: BetaSchedule,
    pub hidden_init: HiddenInit,
    pub curriculum: CurriculumConfig,
    pub map_kind: MapKind,
    /// Fraction of inner walls opened in corridor maps.
    pub corridor_loop_rate: f64,
    /// Environment steps generated per learner step. In deterministic mode
    /// this fixes the interleaving; in threaded mode actors wait when ahead.
    pub env_steps_per_learner_step: f64,
    /// Stop once every stage of the (capped) curriculum has been mastered.
    pub stop_when_mastered: bool,
    /// Wall-clock budget; `0` disables it.
    pub max_wall_seconds: f64,
    pub metrics_period: u64,
    /// Learner steps between periodic checkpoints; `0` disables them.
    pub checkpoint_period: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            network: NetworkConfig::default(),
            gamma: 0.99,
            n_step: 2,
            bootstrap: Bootstrap::Max,
            batch_size: 192,
            seq_len: 20,
            max_learner_steps: 500_000,
            max_episode_len: 256,
            actor_count: 16,
            target_sync_period: 2000,
            publish_period: 100,
            actor_refresh_steps: 400,
            warmup_sequences: 2000,
            lr: LrSchedule::default(),
            clip_norm: DEFAULT_CLIP_NORM,
            epsilon: EpsilonConfig::default(),
            replay: ReplayConfig::default(),
            beta: BetaSchedule::default(),
            hidden_init: HiddenInit::Stored,
            curriculum: CurriculumConfig::default(),
            map_kind: MapKind::Random,
            corridor_loop_rate: 0.3,
            env_steps_per_learner_step: 0.0,
            stop_when_mastered: false,
            max_wall_seconds: 0.0,
            metrics_period: 100,
            checkpoint_period: 10_000,
        }
    }
}

impl TrainConfig {
    /// Small profile sized for a workstation: narrow network, short runs,
    /// curriculum capped at two agents on 15x15 maps.
    pub fn desk() -> Self {
        TrainConfig {
            network: NetworkConfig { hidden_dim: 64, heads: 4, fov: 9, conv_widths: vec![4; 8], comm_rounds: 2 },
            batch_size: 16,
            max_learner_steps: 30_000,
            actor_count: 4,
            target_sync_period: 250,
            publish_period: 25,
            actor_refresh_steps: 100,
            warmup_sequences: 200,
            lr: LrSchedule { base: 5e-4, milestones: vec![100_000, 300_000], factor: 0.5 },
            replay: ReplayConfig { capacity: 1 << 14, ..ReplayConfig::default() },
            beta: BetaSchedule { start: 0.4, steps: 30_000 },
            curriculum: CurriculumConfig { max_agents: 2, max_size: 15, ..CurriculumConfig::default() },
            env_steps_per_learner_step: 32.0,
            stop_when_mastered: true,
            checkpoint_period: 2000,
            ..TrainConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.network.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.n_step == 0 || self.batch_size == 0 || self.seq_len == 0 || self.actor_count == 0 {
            return bad("n_step, batch_size, seq_len and actor_count must be positive");
        }
        if self.seq_len > self.max_episode_len {
            return bad("seq_len must not exceed max_episode_len");
        }
        if self.target_sync_period == 0 || self.publish_period == 0 || self.actor_refresh_steps == 0 || self.metrics_period == 0 {
            return bad("periods must be positive");
        }
        if self.replay.capacity == 0 || self.replay.alpha < 0.0 || self.replay.priority_eps <= 0.0 {
            return bad("replay capacity and priority_eps must be positive, alpha non-negative");
        }
        if self.clip_norm <= 0.0 || self.lr.base <= 0.0 {
            return bad("clip_norm and lr.base must be positive");
        }
        if self.env_steps_per_learner_step < 0.0 || self.max_wall_seconds < 0.0 {
            return bad("env_steps_per_learner_step and max_wall_seconds must be non-negative");
        }
        let c = &self.curriculum;
        if c.start_agents == 0 || c.start_size < 2 || c.window == 0 {
            return bad("curriculum start stage and window must be positive");
        }
        if !(0.0..=1.0).contains(&self.corridor_loop_rate) {
            return bad("corridor_loop_rate must lie in [0, 1]");
        }
        Ok(())
    }

    /// Hash of the architecture-relevant fields; resumed runs must match it.
    pub fn architecture_hash(&self) -> String {
        let key = serde_json::json!({
            "network": self.network,
            "gamma": self.gamma,
            "n_step": self.n_step,
            "seq_len": self.seq_len,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_ladder_endpoints() {
        let e = EpsilonConfig::default();
        assert!((e.for_actor(0, 16) - 0.4).abs() < 1e-12);
        assert!((e.for_actor(15, 16) - 0.4f64.powi(8)).abs() < 1e-12);
        assert!((e.for_actor(0, 1) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = serde_json::to_value(TrainConfig::desk()).unwrap();
        v["bogus_key"] = serde_json::json!(1);
        let err = TrainConfig::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("bogus_key"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let c = TrainConfig::desk();
        assert_eq!(TrainConfig::from_json(&c.to_json()).unwrap(), c);
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn missing_keys_take_defaults() {
        let c = TrainConfig::from_json(r#"{"seed": 9, "network": {"hidden_dim": 32}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.network, NetworkConfig { hidden_dim: 32, ..NetworkConfig::default() });
        assert_eq!(c.lr, TrainConfig::default().lr);
    }
}
