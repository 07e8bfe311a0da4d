//! Combinatorics of the Kimura 3-parameter model on claw trees: flows,
//! compatible tables, degree-bounded moves, fiber censuses and Hilbert
//! function computations.

pub mod corpus;
pub mod error;
pub mod group;
pub mod hilbert;
pub mod markov;
pub mod moves;
pub mod realize;
pub mod reducer;
pub mod table;

pub use error::{Error, Result};
pub use group::{Automorphism, FaceSpec, Flow, GroupElem};
pub use table::{compatible, BinomialPair, CountingFunctional, Profile, Table};
