//! Discrete-time vector consensus on matrix-weighted directed networks.
//!
//! Agents hold `d`-dimensional states and combine neighbour states through
//! symmetric `d × d` edge weight matrices that are either positive or negative
//! definite. The crate assembles the synchronous and asynchronous update
//! operators, runs seeded trajectories, classifies the resulting consensus
//! (global, bipartite, zero, divergent) and checks the matrix-product
//! convergence properties behind those outcomes numerically.
//!
//! Agent ids are zero-based throughout the library. The file formats in
//! [`io`] and the command-line front end use one-based ids.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod scenarios;
pub mod seed;
pub mod weights;

pub use error::{Error, Result};
