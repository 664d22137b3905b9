//! Influence maximization under the Linear Threshold model with a
//! message-passing encoder and an n-step deep Q-learning agent.
//!
//! The crate is organized bottom-up:
//!
//! * [`graph`]: compressed weighted graphs, synthetic generators, edge-list I/O
//! * [`diffusion`]: LT cascades, Monte-Carlo and exact spread
//! * [`heuristics`]: random, degree, degree-discount and CELF greedy baselines
//! * [`encoder`]: the embedding network with its hand-written backward pass
//! * [`qnet`]: decoder, loss, replay buffer, target network and Adam
//! * [`trainer`]: episode rollouts, experience assembly and the training loop
//! * [`inference`]: Q-driven seed selection with batched adaptive steps
//! * [`checkpoint`]: the versioned parameter file format

pub mod checkpoint;
pub mod diffusion;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod heuristics;
pub mod inference;
pub mod qnet;
pub mod rng;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use diffusion::{estimate_spread, exact_spread, simulate, CascadeState, SpreadEstimate, ThresholdRealization};
pub use encoder::{EmbeddingTable, EncoderParams};
pub use error::{Error, Result};
pub use graph::{generate, GeneratorConfig, Graph, GraphModel, NodeId};
pub use heuristics::SeedSet;
pub use inference::{select_seeds, InferenceConfig, Selection};
pub use qnet::{DecoderParams, QNetParams, QNetwork};
pub use trainer::{TrainConfig, Trainer};
