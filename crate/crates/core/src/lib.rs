//! Delay-optimal scheduling of bursty traffic over a block-fading channel
//! under an average power budget.
//!
//! A queue of capacity `K` receives `a` packets per slot (`Pr{a = m} = θ_m`),
//! the channel is in state `w` with probability `η_w`, and sending one packet
//! in state `w` costs `P_w`. A policy picks a transmission probability for
//! every (post-arrival queue length, channel state) pair. The crate
//!
//! * builds the Markov chain a policy induces and its exact delay and power ([`chain`]),
//! * finds the optimal policy for a budget through a linear program ([`lp`], [`tradeoff`]),
//! * recovers and checks its dual-threshold structure ([`policy`]),
//! * builds the two-interval heuristic table ([`heuristic`]),
//! * simulates the queue ([`sim`]) and enumerates deterministic policies ([`oracle`]).
//!
//! ```
//! use dpsched::{model::SystemSpec, tradeoff};
//!
//! let spec = SystemSpec::from_parts(&[0.575, 0.3, 0.125], &[0.6, 0.4], &[10.14, 0.103], 20)?;
//! let sol = tradeoff::optimize(&spec, 2.0, false)?;
//! assert!(sol.metrics.power <= 2.0 + 1e-8);
//! # Ok::<(), dpsched::Error>(())
//! ```

pub mod chain;
pub mod config;
pub mod error;
pub mod heuristic;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod sim;
pub mod tradeoff;

pub use error::{Error, Result};
pub use model::{ArrivalDist, ChannelModel, Policy, SystemSpec};
