//! Adversarial training of the two generators and two discriminators.
//!
//! A step updates both generators jointly on
//! `adv(G_r) + adv(G_c) + λ·(forward_cyc + backward_cyc)` with the
//! discriminators frozen, then both discriminators on their least-squares
//! losses against the (optionally replayed) fakes. Checkpoints capture every
//! piece of state needed for a bit-identical resume.

mod buffer;
mod config;
mod optim;
mod run;
mod state;

pub use buffer::{ReplayBuffer, SWAP_PROBABILITY};
pub use config::{DataConfig, FidConfig, Precision, TrainConfig};
pub use optim::Adam;
pub use run::{fit, read_log, translate, write_log, FitOutcome, LogEntry, TRAIN_LOG_FILE};
pub use state::{checkpoint_dir, TrainState};
