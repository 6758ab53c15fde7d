//! Trust state and the test-time update chain.

mod params;
mod store;
mod update;

pub use params::HyperParams;
pub use store::{
    SharedTrustStore, TrustEntry, TrustKey, TrustStore, INITIAL_EMA_LONG, INITIAL_EMA_SHORT,
    INITIAL_SCORE, PRIOR_ALPHA, PRIOR_BETA,
};
pub use update::{
    apply_outcome, apply_outcome_with, bayes_update, clamp_reward, compute_reward, ema_update,
    final_score, ramp_factor, raw_final_score, Outcome, Reward, Stages, UpdateRecord,
};
