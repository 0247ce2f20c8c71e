use mapf_core::neural::NetworkConfig;
use mapf_core::trainer::{StopReason, TrainConfig, TrainError, Trainer};

fn tiny(seed: u64, steps: u64) -> TrainConfig {
    let mut cfg = TrainConfig::desk();
    cfg.seed = seed;
    cfg.network = NetworkConfig { hidden_dim: 8, heads: 2, conv_widths: vec![2; 8], ..NetworkConfig::default() };
    cfg.batch_size = 4;
    cfg.seq_len = 4;
    cfg.actor_count = 3;
    cfg.warmup_sequences = 6;
    cfg.max_learner_steps = steps;
    cfg.metrics_period = 2;
    cfg.publish_period = 3;
    cfg.actor_refresh_steps = 5;
    cfg.target_sync_period = 4;
    cfg.max_episode_len = 24;
    cfg.checkpoint_period = 0;
    cfg.curriculum.max_agents = 3;
    cfg.curriculum.start_agents = 2;
    cfg.replay.capacity = 64;
    cfg.stop_when_mastered = false;
    cfg
}

fn params_bytes(t: &Trainer) -> Vec<u8> {
    t.to_checkpoint().unwrap().to_bytes().unwrap()
}

#[test]
fn deterministic_runs_repeat() {
    let a = Trainer::new(tiny(3, 10), None).unwrap().run_deterministic().unwrap();
    let b = Trainer::new(tiny(3, 10), None).unwrap().run_deterministic().unwrap();
    assert_eq!(a.stop_reason, StopReason::MaxSteps);
    assert_eq!(a.learner_steps, 10);
    assert!(!a.metrics.is_empty());
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.network.params, b.network.params);
    let c = Trainer::new(tiny(4, 10), None).unwrap().run_deterministic().unwrap();
    assert_ne!(a.network.params, c.network.params);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny(1, 7), None).unwrap();
    t.run_deterministic().unwrap();
    let path = dir.path().join("a.dhc");
    t.save_checkpoint(&path).unwrap();
    let back = Trainer::resume(&path, tiny(1, 7), None).unwrap();
    let path2 = dir.path().join("b.dhc");
    back.save_checkpoint(&path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let straight = Trainer::new(tiny(9, 12), None).unwrap().run_deterministic().unwrap();

    let mut first = Trainer::new(tiny(9, 5), None).unwrap();
    let head = first.run_deterministic().unwrap();
    let path = dir.path().join("mid.dhc");
    first.save_checkpoint(&path).unwrap();
    let mut second = Trainer::resume(&path, tiny(9, 12), None).unwrap();
    let tail = second.run_deterministic().unwrap();

    assert_eq!(tail.network.params, straight.network.params);
    let joined: Vec<String> = head.metrics.iter().chain(&tail.metrics).cloned().collect();
    assert_eq!(joined, straight.metrics);
    assert_eq!(params_bytes(&second), params_bytes(&{
        let mut t = Trainer::new(tiny(9, 12), None).unwrap();
        t.run_deterministic().unwrap();
        t
    }));
}

#[test]
fn resume_rejects_other_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny(1, 3), None).unwrap();
    t.run_deterministic().unwrap();
    let path = dir.path().join("a.dhc");
    t.save_checkpoint(&path).unwrap();
    let mut other = tiny(1, 3);
    other.network.hidden_dim = 12;
    other.network.heads = 3;
    assert!(matches!(Trainer::resume(&path, other, None), Err(TrainError::ArchitectureMismatch(_))));
}

#[test]
fn threaded_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny(2, 8), Some(dir.path())).unwrap();
    let out = t.run_threaded().unwrap();
    assert_eq!(out.learner_steps, 8);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    assert!(dir.path().join("checkpoint.dhc").exists());
    let resumed = Trainer::resume(&dir.path().join("checkpoint.dhc"), tiny(2, 8), None).unwrap();
    assert_eq!(resumed.learner_step(), 8);
}

#[test]
fn stop_flag_interrupts() {
    let mut t = Trainer::new(tiny(2, 1000), None).unwrap();
    t.stop_handle().store(true, std::sync::atomic::Ordering::SeqCst);
    assert_eq!(t.run_deterministic().unwrap().stop_reason, StopReason::Interrupted);
}

#[test]
fn shipped_desk_config_matches_profile() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.json");
    let cfg = TrainConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cfg, TrainConfig::desk());
}
