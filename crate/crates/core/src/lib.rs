//! Jigsaw puzzle recovery with unary and binary position cues.
//!
//! A puzzle of `n` cells is scored by a row-stochastic `n × n` unary matrix
//! (which original position each patch came from) and, on 2D grids, a table
//! of nine-way relative-position distributions for every ordered pair of
//! patches. [`search::predict`] minimizes the resulting negative
//! log-likelihood with a Hungarian seed followed by an exhaustive Hamming-ball
//! refinement, and [`search::solve_iterative`] repeats that prediction while
//! physically rearranging the patches until the predictor proposes no move.

pub mod assign;
pub mod cost;
pub mod error;
pub mod grid;
pub mod image;
pub mod puzzlegen;
pub mod scorer;
pub mod search;

pub use error::{Error, Result};
