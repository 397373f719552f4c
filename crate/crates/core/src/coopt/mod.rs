//! Two-stage design/control co-optimization with clipped policy gradients.

pub mod mlp;
pub mod mode;
pub mod policy;
pub mod ppo;
pub mod rollout;
pub mod trainer;

pub use mode::Mode;
pub use policy::{control_act, design_act, mlp_forward, Adam, PolicyNetwork, LATENT_RANGE};
pub use ppo::{compute_gae, loss_and_grad, ppo_update, PpoBatch, PpoParams};
pub use rollout::{build_batches, design_stage, run_episode, Agent, Episode, Record, Stage};
pub use trainer::{
    evaluate_agent, init_agent, train, CurveRow, EvalSummary, IterationReport, TrainConfig, Trainer,
};
