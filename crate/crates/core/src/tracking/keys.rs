//! Metric key namespace.

pub const EPISODIC_RETURN: &str = "charts/episodic_return";
pub const EPISODIC_LENGTH: &str = "charts/episodic_length";
pub const SPS: &str = "charts/SPS";
pub const POLICY_LOSS: &str = "losses/policy_loss";
pub const VALUE_LOSS: &str = "losses/value_loss";
pub const ENTROPY: &str = "losses/entropy";
pub const APPROX_KL: &str = "losses/approx_kl";
pub const CLIP_FRACTION: &str = "losses/clip_fraction";
pub const QF_LOSS: &str = "losses/qf_loss";
pub const QF1_LOSS: &str = "losses/qf1_loss";
pub const QF2_LOSS: &str = "losses/qf2_loss";
pub const ACTOR_LOSS: &str = "losses/actor_loss";
pub const ALPHA: &str = "losses/alpha";
pub const ALPHA_LOSS: &str = "losses/alpha_loss";

pub const ALL: [&str; 14] = [
    EPISODIC_RETURN,
    EPISODIC_LENGTH,
    SPS,
    POLICY_LOSS,
    VALUE_LOSS,
    ENTROPY,
    APPROX_KL,
    CLIP_FRACTION,
    QF_LOSS,
    QF1_LOSS,
    QF2_LOSS,
    ACTOR_LOSS,
    ALPHA,
    ALPHA_LOSS,
];

/// Keys whose values derive from the wall clock.
pub const WALL_CLOCK: [&str; 1] = [SPS];

pub fn is_known(key: &str) -> bool {
    ALL.contains(&key)
}

pub fn is_wall_clock(key: &str) -> bool {
    WALL_CLOCK.contains(&key)
}
