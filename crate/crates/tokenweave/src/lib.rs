//! Broadcast-token key distribution toolkit.
//!
//! A centre owns a pool of `v` keys and gives every node a share: a few
//! full-width bit rows synthesized from hidden key material. Later the centre
//! broadcasts token rows; a node stacks a token over its share rows, looks
//! for bit columns that repeat a pattern, and reads the targeted keys out of
//! the matched positions. Nobody else learns anything because their own
//! stacks never isolate a partition.
//!
//! Modules build on each other in this order:
//!
//! * [`bitcore`]: bit strings, partitions, interleaving, pattern search.
//! * [`codebook`]: fixed code word matrices, the no-unique-column rule, and
//!   the distance-based single-key construction.
//! * [`gridscheme`]: circulant digit code words, split keys, multi-key
//!   tokens.
//! * [`planner`]: grouping of key deliveries into few broadcast tokens.
//! * [`simnet`]: a simulated network of nodes with group formation,
//!   revocation, and capture hardening.
//! * [`formats`]: serializable documents for configs, plans, transcripts.

pub mod bitcore;
pub mod codebook;
pub mod error;
pub mod formats;
pub mod gridscheme;
pub mod planner;
pub mod simnet;

pub use error::{Error, Result};
