//! Probabilistic automata, exact and statistical safety checking, and
//! trimming of non-determinism under monotonic-safety orders.

pub mod abstraction;
pub mod casestudies;
pub mod lss;
pub mod model_io;
pub mod mos;
pub mod pa;
pub mod pmc;
pub mod rng;
