//! Losses, optimizer and continual-learning training loops.
//!
//! Baselines are loss-weight configurations of the same trainer:
//!
//! | method | current CE | memory CE (α) | logit replay (β) | feature replay (γ) | sparsity (η) | sampler | gates |
//! |--------|-----------|---------------|------------------|--------------------|--------------|---------|-------|
//! | SGD    | ✓ | – | – | – | – | none | off |
//! | ER     | ✓ | ✓ | – | – | – | reservoir | off |
//! | DER    | ✓ | optional | ✓ | – | – | reservoir | off |
//! | SNCL   | ✓ | ✓ | ✓ | ✓ | ✓ | loss-aware | on |

mod config;
mod loss;
mod metrics;
mod optim;
mod run;

pub use config::{Admission, LossWeights, Method, MethodConfig, Sampler, TrainConfig};
pub use loss::{loss_current, loss_fer_h, loss_fer_z, loss_memory_ce, total_loss, LossTerms};
pub use metrics::{forgetting, RunMetrics};
pub use optim::{sgd_step, sgd_step_scaled};
pub use run::{evaluate, run_stream, train_stream, train_stream_observed, StepRecord};
