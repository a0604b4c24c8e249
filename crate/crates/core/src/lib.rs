//! Proof-of-work mining offloaded to an untrusted mobile edge computing (MEC)
//! server.
//!
//! - [`fair_ordering`]: public, length-proportional merge of user nonce sequences.
//! - [`game`]: the users' nonce-selection game and its equilibria.
//! - [`difficulty`]: rounds per block and the windowed difficulty update.
//! - [`mining`]: discrete-round block and campaign simulation.

pub mod difficulty;
pub mod error;
pub mod fair_ordering;
pub mod game;
pub mod mining;
pub mod sizes;
pub mod stats;

pub use error::{Error, Result};
pub use game::{SystemParams, UserProfile};
