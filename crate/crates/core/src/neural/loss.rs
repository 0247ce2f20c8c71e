use serde::{Deserialize, Serialize};

use super::real::Real;

pub const HUBER_DELTA: f64 = 1.0;

/// Huber loss of the residual `x = target - pred` with unit knee.
pub fn huber(x: f64) -> f64 {
    if x.abs() <= HUBER_DELTA {
        0.5 * x * x
    } else {
        HUBER_DELTA * (x.abs() - 0.5 * HUBER_DELTA)
    }
}

/// Derivative of [`huber`] with respect to `x`.
pub fn huber_grad(x: f64) -> f64 {
    x.clamp(-HUBER_DELTA, HUBER_DELTA)
}

/// `Q(a) = V + A(a) - mean(A)`.
pub fn dueling<T: Real>(value: T, advantages: &[T]) -> Vec<T> {
    let mean = advantages.iter().copied().sum::<T>() / T::lit(advantages.len() as f64);
    advantages.iter().map(|&a| value + a - mean).collect()
}

/// How the n-step target bootstraps from the target network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// `max_a' Q_target(s_{t+n}, a')`.
    #[default]
    Max,
    /// `Q_target(s_{t+n}, a_{t+n})` with the action actually taken.
    OnTrajectory,
}

/// Discounted sum of `rewards` plus `γ^len · bootstrap` when a bootstrap
/// value is given (absent when the episode terminated inside the window).
pub fn n_step_target(rewards: &[f64], gamma: f64, bootstrap: Option<f64>) -> f64 {
    let mut ret = 0.0;
    let mut discount = 1.0;
    for &r in rewards {
        ret += discount * r;
        discount *= gamma;
    }
    if let Some(b) = bootstrap {
        ret += discount * b;
    }
    ret
}

/// Targets for every transition of an episode with `rewards.len() = T`
/// transitions. `values[k]` is the bootstrap value at state `s_k`
/// (`k = 0..=T`). When `terminal`, nothing is bootstrapped from `s_T`;
/// otherwise (time-out) the last windows bootstrap from it with a shorter horizon.
pub fn n_step_targets(rewards: &[f64], values: &[f64], gamma: f64, n: usize, terminal: bool) -> Vec<f64> {
    assert!(n >= 1);
    let t_len = rewards.len();
    assert_eq!(values.len(), t_len + 1);
    (0..t_len)
        .map(|t| {
            let end = (t + n).min(t_len);
            let boot = if end == t_len && terminal { None } else { Some(values[end]) };
            n_step_target(&rewards[t..end], gamma, boot)
        })
        .collect()
}
